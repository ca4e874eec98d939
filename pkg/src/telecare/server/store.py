"""Server-side state: per-patient timelines, prescriptions, alerts.

Durability is an embedded append-only log, one newline-delimited JSON file
per patient under ``<state_dir>/observations/``, each starting with a
versioned header line. Prescriptions and alerts (plus the alert engine's
clear countdowns) live in snapshot files rewritten atomically on change.
Startup replays the logs to rebuild the in-memory indexes; a truncated
trailing line (torn final write) is dropped, any earlier corruption is
fatal and reports its byte offset.

All mutations run under one lock, which serializes writes per patient and
lets readers observe a consistent prefix of each timeline.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from bisect import bisect_right
from pathlib import Path
from typing import Any
from urllib.parse import quote, unquote

from ..cells import CellDb, PlaceRecord
from ..risk import RiskModel, encode_features, predict
from ..types import CellObservation, MobilityState
from .alerts import (
    ALERT_KINDS,
    STATUS_ACKNOWLEDGED,
    STATUS_CLEARED,
    STATUS_OPEN,
    Alert,
    AlertEngine,
    Invalid,
    Prescription,
)

TIMELINE_FORMAT = "telecare-timeline"
TIMELINE_VERSION = 1
SNAPSHOT_VERSION = 1

ALERT_STATUSES = (STATUS_OPEN, STATUS_ACKNOWLEDGED, STATUS_CLEARED)


class NotFound(KeyError):
    def __init__(self, what: str):
        super().__init__(what)
        self.what = what


class Conflict(RuntimeError):
    pass


class CorruptLog(RuntimeError):
    def __init__(self, path: Path, offset: int, message: str):
        super().__init__(f"{path} at byte {offset}: {message}")
        self.path = path
        self.offset = offset


def _now_ms() -> int:
    return int(time.time() * 1000)


class Store:
    """In-memory indexes over the append-only persistence layer."""

    def __init__(
        self,
        state_dir: str | Path | None = None,
        cell_db: CellDb | None = None,
        model: RiskModel | None = None,
    ):
        self._state_dir = Path(state_dir) if state_dir is not None else None
        self._cell_db = cell_db
        self._model = model
        self._lock = threading.RLock()
        self._timelines: dict[str, list[dict[str, Any]]] = {}
        self._seen: dict[str, set[int]] = {}
        self._prescriptions: dict[str, Prescription] = {}
        self._alerts: list[Alert] = []
        self._alerts_by_id: dict[str, Alert] = {}
        self._engine = AlertEngine()
        self._subscribers: list[queue.Queue] = []
        if self._state_dir is not None:
            self._load_state()

    # -- persistence ------------------------------------------------------

    def _obs_dir(self) -> Path:
        return self._state_dir / "observations"

    def _obs_path(self, patient_id: str) -> Path:
        return self._obs_dir() / (quote(patient_id, safe="") + ".ndjson")

    def _load_state(self) -> None:
        self._state_dir.mkdir(parents=True, exist_ok=True)
        self._obs_dir().mkdir(parents=True, exist_ok=True)

        rx_path = self._state_dir / "prescriptions.json"
        if rx_path.exists():
            payload = json.loads(rx_path.read_text(encoding="utf-8"))
            for d in payload.get("prescriptions", []):
                rx = Prescription.from_dict(d)
                self._prescriptions[rx.patient_id] = rx

        alerts_path = self._state_dir / "alerts.json"
        if alerts_path.exists():
            payload = json.loads(alerts_path.read_text(encoding="utf-8"))
            for d in payload.get("alerts", []):
                alert = Alert.from_dict(d)
                self._alerts.append(alert)
                self._alerts_by_id[alert.alert_id] = alert
            for entry in payload.get("condition_false_since", []):
                key = (entry["patient_id"], entry["kind"])
                self._engine.false_since[key] = int(entry["since_ms"])

        for path in sorted(self._obs_dir().glob("*.ndjson")):
            self._replay_log(path)

    def _replay_log(self, path: Path) -> None:
        raw = path.read_bytes()
        offset = 0
        header_seen = False
        while offset < len(raw):
            newline = raw.find(b"\n", offset)
            end = len(raw) if newline < 0 else newline
            line = raw[offset:end]
            is_last = newline < 0 or not raw[newline + 1 :].strip()
            if line.strip():
                try:
                    obj = json.loads(line.decode("utf-8"))
                    if not isinstance(obj, dict):
                        raise ValueError("log line is not an object")
                except (ValueError, UnicodeDecodeError) as exc:
                    if is_last:
                        break  # torn final write: drop it
                    raise CorruptLog(path, offset, str(exc)) from None
                if not header_seen:
                    if obj.get("format") != TIMELINE_FORMAT:
                        raise CorruptLog(path, offset, "missing timeline header")
                    header_seen = True
                else:
                    self._index_record(obj)
            offset = end + 1
        if not header_seen and raw.strip():
            # header line itself was torn; nothing usable in the file
            return

    def _index_record(self, record: dict[str, Any]) -> None:
        pid = record["patient_id"]
        seq = int(record["uplink_seq"])
        seen = self._seen.setdefault(pid, set())
        if seq in seen:
            return
        timeline = self._timelines.setdefault(pid, [])
        idx = bisect_right(timeline, seq, key=lambda r: r["uplink_seq"])
        timeline.insert(idx, record)
        seen.add(seq)

    def _append_observation(self, patient_id: str, record: dict[str, Any]) -> None:
        if self._state_dir is None:
            return
        path = self._obs_path(patient_id)
        fresh = not path.exists()
        with open(path, "a", encoding="utf-8") as fh:
            if fresh:
                header = {
                    "format": TIMELINE_FORMAT,
                    "version": TIMELINE_VERSION,
                    "patient_id": patient_id,
                }
                fh.write(json.dumps(header, separators=(",", ":")) + "\n")
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            fh.flush()

    def _atomic_write(self, path: Path, payload: dict[str, Any]) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        tmp.replace(path)

    def _persist_prescriptions(self) -> None:
        if self._state_dir is None:
            return
        self._atomic_write(
            self._state_dir / "prescriptions.json",
            {
                "version": SNAPSHOT_VERSION,
                "prescriptions": [rx.to_dict() for rx in self._prescriptions.values()],
            },
        )

    def _persist_alerts(self) -> None:
        if self._state_dir is None:
            return
        self._atomic_write(
            self._state_dir / "alerts.json",
            {
                "version": SNAPSHOT_VERSION,
                "alerts": [a.to_dict() for a in self._alerts],
                "condition_false_since": [
                    {"patient_id": pid, "kind": kind, "since_ms": ts}
                    for (pid, kind), ts in self._engine.false_since.items()
                ],
            },
        )

    # -- events -----------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _publish(self, event: dict[str, Any]) -> None:
        for q in self._subscribers:
            q.put(event)

    # -- ingestion --------------------------------------------------------

    def ingest(self, msg: dict[str, Any]) -> str:
        """Store one uplink message; returns "accepted" or "duplicate"."""
        with self._lock:
            pid = msg["patient_id"]
            seq = int(msg["uplink_seq"])
            seen = self._seen.setdefault(pid, set())
            if seq in seen:
                return "duplicate"

            place = None
            if self._cell_db is not None:
                place = self._cell_db.resolve(CellObservation.from_dict(msg["cell"]))
            timeline = self._timelines.setdefault(pid, [])
            idx = bisect_right(timeline, seq, key=lambda r: r["uplink_seq"])
            effective = place.to_dict() if place is not None else None
            if effective is None:
                for prior in reversed(timeline[:idx]):
                    if prior["effective_place"] is not None:
                        effective = prior["effective_place"]
                        break

            risk = None
            if self._model is not None:
                features = encode_features(
                    msg["hr"],
                    msg["spo2"],
                    MobilityState(msg["mobility"]),
                    PlaceRecord(**effective) if effective is not None else None,
                )
                risk = predict(self._model, features)

            record = {
                "patient_id": pid,
                "uplink_seq": seq,
                "timestamp_ms": int(msg["timestamp_ms"]),
                "hr": msg["hr"],
                "spo2": msg["spo2"],
                "flags": sorted(msg["flags"]),
                "mobility": msg["mobility"],
                "cell": dict(msg["cell"]),
                "reason": msg["reason"],
                "place": place.to_dict() if place is not None else None,
                "effective_place": effective,
                "risk_score": risk,
                "ingest_time_ms": _now_ms(),
            }
            timeline.insert(idx, record)
            seen.add(seq)
            self._append_observation(pid, record)

            rx = self._prescriptions.get(pid)
            if rx is None:
                rx = Prescription(patient_id=pid)
                self._prescriptions[pid] = rx
                self._persist_prescriptions()

            raised, cleared = self._engine.evaluate(record, rx, self._active_alerts(pid))
            for alert in raised:
                self._alerts.append(alert)
                self._alerts_by_id[alert.alert_id] = alert
            self._persist_alerts()

            self._publish({"type": "record", "record": record})
            for alert in raised + cleared:
                self._publish({"type": "alert", "alert": alert.to_dict()})
            return "accepted"

    def _active_alerts(self, patient_id: str) -> dict[str, Alert]:
        return {
            a.kind: a
            for a in self._alerts
            if a.patient_id == patient_id and a.status != STATUS_CLEARED
        }

    # -- queries ----------------------------------------------------------

    def list_patients(self) -> list[dict[str, Any]]:
        with self._lock:
            out = []
            for pid in sorted(self._timelines):
                timeline = self._timelines[pid]
                open_count = sum(
                    1 for a in self._alerts if a.patient_id == pid and a.status == STATUS_OPEN
                )
                out.append(
                    {
                        "patient_id": pid,
                        "latest": dict(timeline[-1]) if timeline else None,
                        "open_alerts": open_count,
                    }
                )
            return out

    def query_timeline(
        self, patient_id: str, from_ms: int | None = None, to_ms: int | None = None
    ) -> list[dict[str, Any]]:
        with self._lock:
            if patient_id not in self._timelines:
                raise NotFound(f"patient {patient_id}")
            records = self._timelines[patient_id]
            lo = from_ms if from_ms is not None else float("-inf")
            hi = to_ms if to_ms is not None else float("inf")
            return [dict(r) for r in records if lo <= r["timestamp_ms"] <= hi]

    def get_prescription(self, patient_id: str) -> Prescription:
        with self._lock:
            rx = self._prescriptions.get(patient_id)
            if rx is None:
                raise NotFound(f"prescription for {patient_id}")
            return rx

    def put_prescription(self, patient_id: str, fields: dict[str, Any]) -> Prescription:
        with self._lock:
            current = self._prescriptions.get(patient_id)
            base = current.to_dict() if current is not None else Prescription(patient_id).to_dict()
            base.update(fields)
            base["patient_id"] = patient_id
            base["updated_at_ms"] = _now_ms()
            rx = Prescription.from_dict(base)
            rx.validate()
            self._prescriptions[patient_id] = rx
            self._persist_prescriptions()
            return rx

    def list_alerts(
        self, patient: str | None = None, status: str | None = None
    ) -> list[dict[str, Any]]:
        with self._lock:
            if status is not None and status not in ALERT_STATUSES:
                raise Invalid("status", f"status must be one of {ALERT_STATUSES}")
            selected = [
                (i, a)
                for i, a in enumerate(self._alerts)
                if (patient is None or a.patient_id == patient)
                and (status is None or a.status == status)
            ]
            selected.sort(key=lambda pair: (pair[1].raised_at_ms, pair[0]), reverse=True)
            return [a.to_dict() for _, a in selected]

    def acknowledge_alert(self, alert_id: str, actor: str) -> dict[str, Any]:
        with self._lock:
            alert = self._alerts_by_id.get(alert_id)
            if alert is None:
                raise NotFound(f"alert {alert_id}")
            if alert.status == STATUS_CLEARED:
                raise Conflict(f"alert {alert_id} is already cleared")
            if alert.status == STATUS_OPEN:
                alert.status = STATUS_ACKNOWLEDGED
                alert.acked_by = actor
                alert.acked_at_ms = _now_ms()
                self._persist_alerts()
                self._publish({"type": "alert", "alert": alert.to_dict()})
            return alert.to_dict()
