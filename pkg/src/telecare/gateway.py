"""Patient-side gateway: fuses sensor streams and filters the uplink.

For every tick the gateway fuses the vitals frame, a mobility state
classified from the accelerometer window, and the current cell into a
snapshot, then applies a change-detection rule to decide whether the
snapshot is worth transmitting. A snapshot is sent iff one of these
clauses fires (the first match names the transmit reason):

    (a) first_send        nothing sent yet
    (b) spo2_delta        |SpO2 - last sent SpO2| >= spo2_delta, or one
                          side is missing and the other is not
    (c) hr_delta          same rule for heart rate
    (d) mobility_change   mobility differs from the last sent snapshot
    (e) cell_change       serving cell differs
    (f) heartbeat         heartbeat_ms elapsed since the last send

Failed deliveries land in a bounded FIFO buffer (oldest dropped on
overflow) and are retried in order with exponential backoff, so the
server sees each patient's uplink sequence strictly increasing.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Protocol

import numpy as np
import yaml

from .clock import Clock, SystemClock
from .simulator import ObservationTrace
from .types import CellObservation, GatewaySnapshot, MobilityState, MotionWindow, ObservationMsg

logger = logging.getLogger(__name__)

REASON_FIRST_SEND = "first_send"
REASON_SPO2 = "spo2_delta"
REASON_HR = "hr_delta"
REASON_MOBILITY = "mobility_change"
REASON_CELL = "cell_change"
REASON_HEARTBEAT = "heartbeat"
REASON_SUPPRESSED = "no_change"


class ConfigInvalid(ValueError):
    pass


class UplinkError(RuntimeError):
    """Delivery to the server failed; the message should be retried."""


class Uplink(Protocol):
    def send(self, msg: ObservationMsg) -> None: ...


@dataclass
class MobilityConfig:
    fall_peak_g: float = 2.5
    still_sd_g: float = 0.05
    active_sd_g: float = 0.1
    still_window_s: float = 5.0


@dataclass
class DeadbandConfig:
    spo2_delta: int = 2
    hr_delta: int = 5
    heartbeat_ms: int = 60_000


@dataclass
class UplinkConfig:
    buffer_cap: int = 256
    retry_base_ms: int = 500
    retry_cap_ms: int = 30_000
    drain_attempts: int = 8

    def validate(self) -> None:
        if self.buffer_cap < 1:
            raise ConfigInvalid("buffer_cap must be at least 1")
        if self.retry_base_ms <= 0 or self.retry_cap_ms < self.retry_base_ms:
            raise ConfigInvalid("retry backoff must satisfy 0 < retry_base_ms <= retry_cap_ms")
        if self.drain_attempts < 0:
            raise ConfigInvalid("drain_attempts must be nonnegative")


@dataclass
class GatewayConfig:
    patient_id: str
    server_url: str = "http://127.0.0.1:8000"
    auth_token: str = ""
    deadband: DeadbandConfig = field(default_factory=DeadbandConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    uplink: UplinkConfig = field(default_factory=UplinkConfig)

    def validate(self) -> None:
        if not self.patient_id:
            raise ConfigInvalid("patient_id must be set")
        if self.deadband.spo2_delta < 0 or self.deadband.hr_delta < 0:
            raise ConfigInvalid("deadband deltas must be nonnegative")
        if self.deadband.heartbeat_ms <= 0:
            raise ConfigInvalid("heartbeat_ms must be positive")
        self.uplink.validate()


@dataclass
class TransmitState:
    last_sent: GatewaySnapshot | None = None
    last_sent_at_ms: int | None = None
    uplink_seq: int = 0


@dataclass
class GatewayReport:
    observed: int = 0
    sent: int = 0
    suppressed: int = 0
    buffered: int = 0
    dropped: int = 0
    remaining: int = 0


def classify_mobility(window: MotionWindow, cfg: MobilityConfig | None = None) -> MobilityState:
    """Two-threshold magnitude/variance rule over one accelerometer window.

    fall: a sample reached fall_peak_g and the trailing still_window_s
    seconds are nearly motionless; active: overall magnitude spread at or
    above active_sd_g; otherwise resting. Standard deviations are
    population standard deviations.
    """
    cfg = cfg or MobilityConfig()
    mags = np.linalg.norm(np.asarray(window.samples, dtype=np.float64), axis=1)
    rate = len(mags) / window.window_s
    trailing_n = min(len(mags), max(1, round(cfg.still_window_s * rate)))
    if float(mags.max()) >= cfg.fall_peak_g and float(mags[-trailing_n:].std()) < cfg.still_sd_g:
        return MobilityState.FALL
    if float(mags.std()) >= cfg.active_sd_g:
        return MobilityState.ACTIVE
    return MobilityState.RESTING


def _vital_changed(last: int | None, now: int | None, delta: int) -> bool:
    if (last is None) != (now is None):
        return True
    if last is None and now is None:
        return False
    return abs(now - last) >= delta


def should_transmit(
    state: TransmitState, snap: GatewaySnapshot, cfg: DeadbandConfig
) -> tuple[bool, str]:
    """Decide send/suppress; the reason names the first matching clause."""
    if state.last_sent is None:
        return True, REASON_FIRST_SEND
    last = state.last_sent
    if _vital_changed(last.spo2, snap.spo2, cfg.spo2_delta):
        return True, REASON_SPO2
    if _vital_changed(last.hr, snap.hr, cfg.hr_delta):
        return True, REASON_HR
    if snap.mobility != last.mobility:
        return True, REASON_MOBILITY
    if snap.cell != last.cell:
        return True, REASON_CELL
    if snap.timestamp_ms - state.last_sent_at_ms >= cfg.heartbeat_ms:
        return True, REASON_HEARTBEAT
    return False, REASON_SUPPRESSED


def snapshots_from_trace(
    trace: ObservationTrace, mobility_cfg: MobilityConfig | None = None
) -> Iterator[GatewaySnapshot]:
    """Fuse trace elements into gateway snapshots."""
    cfg = mobility_cfg or MobilityConfig()
    for point in trace.points:
        yield GatewaySnapshot(
            timestamp_ms=point.timestamp_ms,
            hr=point.frame.hr,
            spo2=point.frame.spo2,
            flags=point.frame.flags,
            mobility=classify_mobility(point.motion, cfg),
            cell=point.cell,
        )


def run_gateway(
    source: Iterable[GatewaySnapshot],
    uplink: Uplink,
    cfg: GatewayConfig,
    clock: Clock | None = None,
) -> GatewayReport:
    """Pump snapshots through the transmit filter and deliver uplink messages.

    Per-patient delivery order is preserved: while older messages wait in
    the retry buffer, new ones queue behind them. After the source ends the
    buffer is drained with backoff for up to cfg.uplink.drain_attempts
    rounds; anything still undelivered is reported as remaining.
    """
    cfg.validate()
    clock = clock or SystemClock()
    state = TransmitState()
    report = GatewayReport()
    buffer: deque[ObservationMsg] = deque()
    failures = 0
    next_retry_at_ms = clock.now_ms()

    def backoff_ms() -> int:
        return min(cfg.uplink.retry_base_ms * (2 ** max(0, failures - 1)), cfg.uplink.retry_cap_ms)

    def attempt(msg: ObservationMsg) -> bool:
        nonlocal failures, next_retry_at_ms
        try:
            uplink.send(msg)
        except Exception as exc:
            failures += 1
            next_retry_at_ms = clock.now_ms() + backoff_ms()
            logger.debug("uplink failed (%s), %d message(s) waiting", exc, len(buffer) + 1)
            return False
        failures = 0
        return True

    def enqueue(msg: ObservationMsg) -> None:
        if len(buffer) >= cfg.uplink.buffer_cap:
            buffer.popleft()
            report.dropped += 1
        buffer.append(msg)
        report.buffered += 1

    def flush() -> None:
        while buffer:
            if attempt(buffer[0]):
                buffer.popleft()
                report.sent += 1
            else:
                return

    for snap in source:
        report.observed += 1
        send, reason = should_transmit(state, snap, cfg.deadband)
        if not send:
            report.suppressed += 1
            continue
        state.uplink_seq += 1
        state.last_sent = snap
        state.last_sent_at_ms = snap.timestamp_ms
        msg = ObservationMsg(
            patient_id=cfg.patient_id,
            uplink_seq=state.uplink_seq,
            timestamp_ms=snap.timestamp_ms,
            hr=snap.hr,
            spo2=snap.spo2,
            flags=snap.flags,
            mobility=snap.mobility,
            cell=snap.cell,
            reason=reason,
        )
        if buffer and clock.now_ms() >= next_retry_at_ms:
            flush()
        if buffer:
            enqueue(msg)
        elif not attempt(msg):
            enqueue(msg)
        else:
            report.sent += 1

    for _ in range(cfg.uplink.drain_attempts):
        if not buffer:
            break
        wait = next_retry_at_ms - clock.now_ms()
        if wait > 0:
            clock.sleep_ms(wait)
        flush()

    report.remaining = len(buffer)
    return report


class HttpUplink:
    """Delivers observation messages over HTTP with a bearer token."""

    def __init__(self, base_url: str, token: str, timeout_s: float = 5.0):
        import httpx

        self._client = httpx.Client(base_url=base_url, timeout=timeout_s)
        self._headers = {"Authorization": f"Bearer {token}"}

    def send(self, msg: ObservationMsg) -> None:
        try:
            resp = self._client.post("/v1/observations", json=msg.to_dict(), headers=self._headers)
        except Exception as exc:
            raise UplinkError(f"uplink transport error: {exc}") from exc
        if resp.status_code != 200:
            raise UplinkError(f"server returned {resp.status_code}: {resp.text[:200]}")

    def close(self) -> None:
        self._client.close()


def load_gateway_config(path: str | Path) -> GatewayConfig:
    """Read the gateway YAML config; missing sections keep their defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigInvalid("gateway config must hold a mapping")
    try:
        cfg = GatewayConfig(
            patient_id=str(data["patient_id"]),
            server_url=str(data.get("server_url", "http://127.0.0.1:8000")),
            auth_token=str(data.get("auth_token", "")),
            deadband=DeadbandConfig(**data.get("deadband", {})),
            mobility=MobilityConfig(**data.get("mobility", {})),
            uplink=UplinkConfig(**data.get("uplink", {})),
        )
    except KeyError as exc:
        raise ConfigInvalid(f"missing gateway config field: {exc.args[0]}") from exc
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from exc
    cfg.validate()
    return cfg
