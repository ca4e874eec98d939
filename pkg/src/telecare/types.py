"""Domain types shared across the pipeline tiers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Sequence


class MobilityState(str, enum.Enum):
    RESTING = "resting"
    ACTIVE = "active"
    FALL = "fall"


@dataclass(frozen=True)
class CellObservation:
    """One GSM cell sighting: country, network, area and cell identifiers."""

    mcc: int
    mnc: int
    lac: int
    ci: int

    def __post_init__(self):
        if not 0 <= self.mcc <= 999:
            raise ValueError(f"mcc out of range: {self.mcc}")
        if not 0 <= self.mnc <= 999:
            raise ValueError(f"mnc out of range: {self.mnc}")
        if not 0 <= self.lac <= 0xFFFF:
            raise ValueError(f"lac out of range: {self.lac}")
        if not 0 <= self.ci <= 0xFFFFFFFF:
            raise ValueError(f"ci out of range: {self.ci}")

    def to_dict(self) -> dict[str, int]:
        return {"mcc": self.mcc, "mnc": self.mnc, "lac": self.lac, "ci": self.ci}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CellObservation":
        return cls(mcc=int(d["mcc"]), mnc=int(d["mnc"]), lac=int(d["lac"]), ci=int(d["ci"]))


@dataclass(frozen=True)
class MotionWindow:
    """A trailing window of 3-axis accelerometer samples, in g."""

    samples: tuple[tuple[float, float, float], ...]
    window_s: float

    def __post_init__(self):
        if not self.samples:
            raise ValueError("motion window must be non-empty")
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")

    @classmethod
    def from_samples(cls, samples: Sequence[Sequence[float]], window_s: float) -> "MotionWindow":
        return cls(tuple(tuple(s) for s in samples), window_s)


@dataclass(frozen=True)
class GatewaySnapshot:
    """The gateway's fused per-tick state: vitals, mobility, current cell."""

    timestamp_ms: int
    hr: int | None
    spo2: int | None
    flags: frozenset[str]
    mobility: MobilityState
    cell: CellObservation


@dataclass(frozen=True)
class ObservationMsg:
    """One uplink record, the HTTP payload from gateway to server."""

    patient_id: str
    uplink_seq: int
    timestamp_ms: int
    hr: int | None
    spo2: int | None
    flags: frozenset[str]
    mobility: MobilityState
    cell: CellObservation
    reason: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "uplink_seq": self.uplink_seq,
            "timestamp_ms": self.timestamp_ms,
            "hr": self.hr,
            "spo2": self.spo2,
            "flags": sorted(self.flags),
            "mobility": self.mobility.value,
            "cell": self.cell.to_dict(),
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ObservationMsg":
        return cls(
            patient_id=d["patient_id"],
            uplink_seq=int(d["uplink_seq"]),
            timestamp_ms=int(d["timestamp_ms"]),
            hr=None if d["hr"] is None else int(d["hr"]),
            spo2=None if d["spo2"] is None else int(d["spo2"]),
            flags=frozenset(d["flags"]),
            mobility=MobilityState(d["mobility"]),
            cell=CellObservation.from_dict(d["cell"]),
            reason=d["reason"],
        )
