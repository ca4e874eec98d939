"""Alert rules, hysteresis and the acknowledge lifecycle.

Five conditions are checked against every ingested record using the
patient's prescription: low_spo2, hr_out_of_range, fall, high_risk and
sensor_off. Raising is hysteretic: a kind raises only while no open or
acknowledged alert of that kind exists for the patient. An alert clears
once its condition has been continuously false for clear_hold_s of record
time (message timestamps, not server wall time), so a brief dip back to
normal does not silence a live problem.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Any

from ..codec import FLAG_FINGER_OUT

ALERT_KINDS = ("low_spo2", "hr_out_of_range", "fall", "high_risk", "sensor_off")

STATUS_OPEN = "open"
STATUS_ACKNOWLEDGED = "acknowledged"
STATUS_CLEARED = "cleared"


class Invalid(ValueError):
    """A field failed validation; ``field`` names it."""

    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field = field_name


@dataclass
class Prescription:
    """Clinician-set thresholds that parameterize alert evaluation."""

    patient_id: str
    spo2_floor: int = 90
    hr_ceiling: int = 120
    hr_floor: int = 40
    risk_ceiling: float = 0.8
    clear_hold_s: int = 120
    updated_by: str = "system"
    updated_at_ms: int = 0

    def validate(self) -> None:
        if not 0 <= self.spo2_floor <= 100:
            raise Invalid("spo2_floor", "spo2_floor must be in [0, 100]")
        if self.hr_floor >= self.hr_ceiling:
            raise Invalid("hr_floor", "hr_floor must be below hr_ceiling")
        if not 0 < self.risk_ceiling < 1:
            raise Invalid("risk_ceiling", "risk_ceiling must be in (0, 1)")
        if self.clear_hold_s < 0:
            raise Invalid("clear_hold_s", "clear_hold_s must be nonnegative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "spo2_floor": self.spo2_floor,
            "hr_ceiling": self.hr_ceiling,
            "hr_floor": self.hr_floor,
            "risk_ceiling": self.risk_ceiling,
            "clear_hold_s": self.clear_hold_s,
            "updated_by": self.updated_by,
            "updated_at_ms": self.updated_at_ms,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Prescription":
        return cls(
            patient_id=d["patient_id"],
            spo2_floor=int(d["spo2_floor"]),
            hr_ceiling=int(d["hr_ceiling"]),
            hr_floor=int(d["hr_floor"]),
            risk_ceiling=float(d["risk_ceiling"]),
            clear_hold_s=int(d["clear_hold_s"]),
            updated_by=d.get("updated_by", "system"),
            updated_at_ms=int(d.get("updated_at_ms", 0)),
        )


@dataclass
class Alert:
    alert_id: str
    patient_id: str
    kind: str
    raised_at_ms: int
    evidence: dict[str, Any]
    place: dict[str, Any] | None
    status: str = STATUS_OPEN
    acked_by: str | None = None
    acked_at_ms: int | None = None
    cleared_at_ms: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "alert_id": self.alert_id,
            "patient_id": self.patient_id,
            "kind": self.kind,
            "raised_at_ms": self.raised_at_ms,
            "evidence": self.evidence,
            "place": self.place,
            "status": self.status,
            "acked_by": self.acked_by,
            "acked_at_ms": self.acked_at_ms,
            "cleared_at_ms": self.cleared_at_ms,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Alert":
        return cls(
            alert_id=d["alert_id"],
            patient_id=d["patient_id"],
            kind=d["kind"],
            raised_at_ms=int(d["raised_at_ms"]),
            evidence=d["evidence"],
            place=d.get("place"),
            status=d["status"],
            acked_by=d.get("acked_by"),
            acked_at_ms=d.get("acked_at_ms"),
            cleared_at_ms=d.get("cleared_at_ms"),
        )


def condition_holds(kind: str, record: dict[str, Any], rx: Prescription) -> bool:
    """Whether one alert condition is true for a (serialized) patient record."""
    hr = record.get("hr")
    spo2 = record.get("spo2")
    if kind == "low_spo2":
        return spo2 is not None and spo2 < rx.spo2_floor
    if kind == "hr_out_of_range":
        return hr is not None and (hr < rx.hr_floor or hr > rx.hr_ceiling)
    if kind == "fall":
        return record.get("mobility") == "fall"
    if kind == "high_risk":
        risk = record.get("risk_score")
        return risk is not None and risk > rx.risk_ceiling
    if kind == "sensor_off":
        return FLAG_FINGER_OUT in record.get("flags", []) or hr is None or spo2 is None
    raise ValueError(f"unknown alert kind: {kind}")


@dataclass
class AlertEngine:
    """Per-patient hysteresis state plus the evaluation rule.

    ``false_since`` remembers, per (patient, kind), the record timestamp at
    which the condition most recently turned false; it is persisted with
    the alert snapshot so clear countdowns survive a restart.
    """

    false_since: dict[tuple[str, str], int] = field(default_factory=dict)

    def evaluate(
        self,
        record: dict[str, Any],
        rx: Prescription,
        active_alerts: dict[str, Alert],
    ) -> tuple[list[Alert], list[Alert]]:
        """Evaluate one record; returns (raised, cleared) alert lists.

        ``active_alerts`` maps kind -> the patient's open or acknowledged
        alert of that kind; cleared alerts must not be included.
        """
        patient_id = record["patient_id"]
        ts = int(record["timestamp_ms"])
        raised: list[Alert] = []
        cleared: list[Alert] = []
        for kind in ALERT_KINDS:
            key = (patient_id, kind)
            if condition_holds(kind, record, rx):
                self.false_since.pop(key, None)
                if kind not in active_alerts:
                    raised.append(
                        Alert(
                            alert_id=uuid.uuid4().hex,
                            patient_id=patient_id,
                            kind=kind,
                            raised_at_ms=ts,
                            evidence=dict(record),
                            place=record.get("effective_place"),
                        )
                    )
            else:
                since = self.false_since.setdefault(key, ts)
                alert = active_alerts.get(kind)
                if alert is not None and ts - since >= rx.clear_hold_s * 1000:
                    alert.status = STATUS_CLEARED
                    alert.cleared_at_ms = ts
                    cleared.append(alert)
        return raised, cleared
