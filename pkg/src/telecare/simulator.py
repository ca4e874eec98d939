"""Deterministic per-patient sensor stream generator.

Stands in for the worn pulse oximeter, the phone accelerometer and the GSM
modem. A Scenario describes baselines, noise levels, the cell the patient
camps on over time, and scripted anomaly events; ``simulate`` expands it
into a trace of (timestamp, vitals frame, motion window, cell) tuples that
is a pure function of (scenario, seed).

Sampling covers the closed interval [0, duration_s] at 1/sample_hz spacing,
so a 3600 s scenario at 1 Hz yields 3601 ticks (t = 0, 1, ..., 3600 s).

Event model:
  desaturation  subtracts ``magnitude`` SpO2 points, ramped linearly over
                the first and last 10% of the event window
  tachycardia   adds ``magnitude`` bpm for the whole event window
  fall          injects a single ``magnitude``-g motion spike at the event
                start, followed by 5 s of near-still samples

Overlapping events sum; vitals are clamped to their legal ranges after all
effects apply.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from .clock import Clock
from .codec import FLAG_SENSOR_OK, SEQ_MOD, SensorFrame, decode_frame, encode_frame
from .types import CellObservation, MotionWindow

EVENT_KINDS = ("desaturation", "tachycardia", "fall")

# Motion stream parameters. Windows span the trailing MOTION_WINDOW_S
# seconds at MOTION_RATE_HZ; the window must be long enough that the fall
# spike and the full 5 s still period fit inside it together.
MOTION_RATE_HZ = 10
MOTION_WINDOW_S = 8.0
MOTION_NOISE_SD_G = 0.01
STILL_NOISE_SCALE = 0.2  # still-period noise: 0.002 g
FALL_STILL_S = 5.0

TRACE_FORMAT = "telecare-trace"
TRACE_VERSION = 1


class InvalidScenario(ValueError):
    """Scenario violates one of its constraints; the message names it."""


class SinkRejected(RuntimeError):
    """A play() sink refused an element; ``index`` is the element position."""

    def __init__(self, index: int, cause: str = ""):
        super().__init__(f"sink rejected element {index}" + (f": {cause}" if cause else ""))
        self.index = index


@dataclass(frozen=True)
class Event:
    kind: str
    start_s: float
    duration_s: float
    magnitude: float


@dataclass(frozen=True)
class Scenario:
    patient_id: str
    duration_s: float
    sample_hz: float
    baseline_hr: float
    baseline_spo2: float
    noise_sd_hr: float = 0.0
    noise_sd_spo2: float = 0.0
    cell_path: tuple[tuple[float, CellObservation], ...] = ()
    events: tuple[Event, ...] = ()

    def validate(self) -> None:
        if not self.patient_id:
            raise InvalidScenario("patient_id must be non-empty")
        if self.duration_s <= 0:
            raise InvalidScenario("duration_s must be positive")
        if self.sample_hz <= 0:
            raise InvalidScenario("sample_hz must be positive")
        if not 0 <= self.baseline_spo2 <= 100:
            raise InvalidScenario("baseline_spo2 must be in [0, 100]")
        if self.noise_sd_hr < 0 or self.noise_sd_spo2 < 0:
            raise InvalidScenario("noise standard deviations must be nonnegative")
        if not self.cell_path:
            raise InvalidScenario("cell_path must have at least one entry")
        if self.cell_path[0][0] != 0:
            raise InvalidScenario("cell_path must start at 0 s")
        starts = [s for s, _ in self.cell_path]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise InvalidScenario("cell_path start times must be strictly increasing")
        for ev in self.events:
            if ev.kind not in EVENT_KINDS:
                raise InvalidScenario(f"unknown event kind: {ev.kind}")
            if ev.duration_s <= 0:
                raise InvalidScenario("event duration_s must be positive")
            if ev.magnitude <= 0:
                raise InvalidScenario("event magnitude must be positive")
            if ev.start_s < 0 or ev.start_s + ev.duration_s > self.duration_s:
                raise InvalidScenario("event window must lie inside the scenario duration")


@dataclass(frozen=True)
class TracePoint:
    timestamp_ms: int
    frame: SensorFrame
    motion: MotionWindow
    cell: CellObservation


@dataclass
class ObservationTrace:
    patient_id: str
    sample_hz: float
    points: list[TracePoint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class PlayReport:
    delivered: int


def _cell_at(cell_path: Sequence[tuple[float, CellObservation]], t_s: float) -> CellObservation:
    current = cell_path[0][1]
    for start_s, cell in cell_path:
        if start_s <= t_s:
            current = cell
        else:
            break
    return current


def _event_deltas(events: Sequence[Event], t_s: float) -> tuple[float, float]:
    """Summed (hr_delta, spo2_delta) of all events covering time t_s."""
    hr_delta = 0.0
    spo2_delta = 0.0
    for ev in events:
        if not ev.start_s <= t_s <= ev.start_s + ev.duration_s:
            continue
        if ev.kind == "tachycardia":
            hr_delta += ev.magnitude
        elif ev.kind == "desaturation":
            edge = 0.1 * ev.duration_s
            ramp = min(1.0, (t_s - ev.start_s) / edge, (ev.start_s + ev.duration_s - t_s) / edge)
            spo2_delta -= ev.magnitude * max(0.0, ramp)
    return hr_delta, spo2_delta


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def simulate(scenario: Scenario, seed: int) -> ObservationTrace:
    """Expand a scenario into a deterministic observation trace."""
    scenario.validate()
    rng = np.random.default_rng(seed)

    period_ms = 1000.0 / scenario.sample_hz
    n_ticks = int(math.floor(scenario.duration_s * 1000.0 / period_ms)) + 1
    tick_ms = [round(k * period_ms) for k in range(n_ticks)]

    # Continuous 10 Hz motion stream with enough pre-roll that the first
    # tick already has a full trailing window.
    motion_step_ms = 1000 // MOTION_RATE_HZ
    window_len = int(MOTION_WINDOW_S * MOTION_RATE_HZ)
    window_ms = int(MOTION_WINDOW_S * 1000)
    n_motion = (tick_ms[-1] + window_ms) // motion_step_ms + 1
    motion_t0_ms = -window_ms + motion_step_ms  # first sample time

    noise = rng.normal(0.0, 1.0, size=(n_motion, 3)) * MOTION_NOISE_SD_G
    hr_noise = rng.normal(0.0, 1.0, size=n_ticks) * scenario.noise_sd_hr
    spo2_noise = rng.normal(0.0, 1.0, size=n_ticks) * scenario.noise_sd_spo2

    for ev in scenario.events:
        if ev.kind != "fall":
            continue
        start_ms = round(ev.start_s * 1000)
        j = round((start_ms - motion_t0_ms) / motion_step_ms)
        still_n = int(FALL_STILL_S * MOTION_RATE_HZ)
        if 0 <= j < n_motion:
            noise[j + 1 : j + 1 + still_n] *= STILL_NOISE_SCALE
    motion = noise + np.array([0.0, 0.0, 1.0])
    for ev in scenario.events:
        if ev.kind != "fall":
            continue
        start_ms = round(ev.start_s * 1000)
        j = round((start_ms - motion_t0_ms) / motion_step_ms)
        if 0 <= j < n_motion:
            motion[j] = (0.0, 0.0, ev.magnitude)
    motion = np.round(motion, 4)

    points: list[TracePoint] = []
    for k, t in enumerate(tick_ms):
        t_s = t / 1000.0
        hr_delta, spo2_delta = _event_deltas(scenario.events, t_s)
        hr = _round_half_up(scenario.baseline_hr + hr_noise[k] + hr_delta)
        spo2 = _round_half_up(scenario.baseline_spo2 + spo2_noise[k] + spo2_delta)
        frame = SensorFrame(
            hr=max(0, min(250, hr)),
            spo2=max(0, min(100, spo2)),
            flags=frozenset({FLAG_SENSOR_OK}),
            seq=k % SEQ_MOD,
        )
        j0 = (t - motion_t0_ms) // motion_step_ms - window_len + 1
        window = MotionWindow.from_samples(motion[j0 : j0 + window_len].tolist(), MOTION_WINDOW_S)
        points.append(
            TracePoint(
                timestamp_ms=t,
                frame=frame,
                motion=window,
                cell=_cell_at(scenario.cell_path, t_s),
            )
        )
    return ObservationTrace(scenario.patient_id, scenario.sample_hz, points)


def play(
    trace: ObservationTrace,
    sink: Callable[[TracePoint], None],
    clock: Clock,
) -> PlayReport:
    """Deliver each trace element to the sink at its timestamp per the clock."""
    t0 = clock.now_ms()
    for i, point in enumerate(trace.points):
        due = t0 + point.timestamp_ms - (trace.points[0].timestamp_ms if trace.points else 0)
        wait = due - clock.now_ms()
        if wait > 0:
            clock.sleep_ms(wait)
        try:
            sink(point)
        except Exception as exc:
            raise SinkRejected(i, str(exc)) from exc
    return PlayReport(delivered=len(trace.points))


# ---------------------------------------------------------------------------
# Scenario files (YAML) and trace files (newline-delimited JSON)
# ---------------------------------------------------------------------------


def scenario_from_dict(d: dict[str, Any]) -> Scenario:
    try:
        cell_path = tuple(
            (float(entry["start_s"]), CellObservation.from_dict(entry["cell"]))
            for entry in d.get("cell_path", [])
        )
        events = tuple(
            Event(
                kind=str(ev["kind"]),
                start_s=float(ev["start_s"]),
                duration_s=float(ev["duration_s"]),
                magnitude=float(ev["magnitude"]),
            )
            for ev in d.get("events", [])
        )
        scenario = Scenario(
            patient_id=str(d["patient_id"]),
            duration_s=float(d["duration_s"]),
            sample_hz=float(d["sample_hz"]),
            baseline_hr=float(d["baseline_hr"]),
            baseline_spo2=float(d["baseline_spo2"]),
            noise_sd_hr=float(d.get("noise_sd_hr", 0.0)),
            noise_sd_spo2=float(d.get("noise_sd_spo2", 0.0)),
            cell_path=cell_path,
            events=events,
        )
    except KeyError as exc:
        raise InvalidScenario(f"missing scenario field: {exc.args[0]}") from exc
    scenario.validate()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise InvalidScenario("scenario file must hold a mapping")
    return scenario_from_dict(data)


def dump_trace(trace: ObservationTrace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format": TRACE_FORMAT,
            "version": TRACE_VERSION,
            "patient_id": trace.patient_id,
            "sample_hz": trace.sample_hz,
        }
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for p in trace.points:
            rec = {
                "t": p.timestamp_ms,
                "frame": encode_frame(p.frame).hex(),
                "motion": {"window_s": p.motion.window_s, "samples": [list(s) for s in p.motion.samples]},
                "cell": p.cell.to_dict(),
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_trace(path: str | Path) -> ObservationTrace:
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line:
            raise ValueError("empty trace file")
        header = json.loads(header_line)
        if header.get("format") != TRACE_FORMAT:
            raise ValueError("not a trace file")
        trace = ObservationTrace(str(header["patient_id"]), float(header["sample_hz"]))
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            trace.points.append(
                TracePoint(
                    timestamp_ms=int(rec["t"]),
                    frame=decode_frame(bytes.fromhex(rec["frame"])),
                    motion=MotionWindow.from_samples(
                        rec["motion"]["samples"], float(rec["motion"]["window_s"])
                    ),
                    cell=CellObservation.from_dict(rec["cell"]),
                )
            )
    return trace
