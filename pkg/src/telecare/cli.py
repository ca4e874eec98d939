"""Operator command line tying the pipeline together.

Subcommands: serve (central server), gateway (patient-side uplink fed by a
scenario or a recorded trace), simulate (scenario -> trace file), train
(labeled data -> model file), label (scenario -> labeled training file),
alerts (print current alerts from a server).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .cells import load_cell_db
from .clock import Clock, SystemClock, TestClock
from .gateway import (
    GatewayConfig,
    HttpUplink,
    MobilityConfig,
    classify_mobility,
    load_gateway_config,
    run_gateway,
    snapshots_from_trace,
)
from .risk import (
    LabeledDataset,
    TrainConfig,
    encode_features,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
    train,
)
from .simulator import load_scenario, load_trace, dump_trace, simulate
from .types import MobilityState

DEFAULT_TOKEN = "dev-token"


@click.group()
def main() -> None:
    """Remote elderly-monitoring pipeline tools."""


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


@main.command("simulate")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def simulate_cmd(scenario_path: str, seed: int, out_path: str) -> None:
    """Expand a scenario file into a trace file."""
    try:
        scenario = load_scenario(scenario_path)
        trace = simulate(scenario, seed)
        dump_trace(trace, out_path)
    except Exception as exc:
        raise _fail(str(exc)) from exc
    click.echo(f"wrote {len(trace)} samples for {trace.patient_id} to {out_path}")


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--cells", "cells_path", required=True, type=click.Path(exists=True))
@click.option("--state-dir", required=True, type=click.Path())
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--token", default=DEFAULT_TOKEN, show_default=True)
def serve(port: int, host: str, cells_path: str, state_dir: str, model_path: str | None, token: str) -> None:
    """Run the central server."""
    import uvicorn

    from .server import Store, create_app

    try:
        cell_db = load_cell_db(cells_path)
        model = load_model(model_path) if model_path else None
        store = Store(state_dir=state_dir, cell_db=cell_db, model=model)
    except Exception as exc:
        raise _fail(str(exc)) from exc
    app = create_app(store, token)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def _paced(snapshots, clock: Clock):
    start = clock.now_ms()
    first_ts = None
    for snap in snapshots:
        if first_ts is None:
            first_ts = snap.timestamp_ms
        wait = start + (snap.timestamp_ms - first_ts) - clock.now_ms()
        if wait > 0:
            clock.sleep_ms(wait)
        yield snap


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trace", "trace_path", type=click.Path(exists=True), default=None)
@click.option("--server", "server_url", default=None, help="Override the config server URL.")
@click.option("--test-clock", is_flag=True, help="Run instantaneously on a simulated clock.")
def gateway(
    config_path: str,
    scenario_path: str | None,
    seed: int,
    trace_path: str | None,
    server_url: str | None,
    test_clock: bool,
) -> None:
    """Run the patient-side gateway against a server."""
    if (scenario_path is None) == (trace_path is None):
        raise _fail("provide exactly one of --scenario or --trace")
    try:
        cfg = load_gateway_config(config_path)
        if trace_path is not None:
            trace = load_trace(trace_path)
        else:
            trace = simulate(load_scenario(scenario_path), seed)
        if trace.patient_id != cfg.patient_id:
            raise _fail(
                f"trace patient {trace.patient_id!r} does not match config patient {cfg.patient_id!r}"
            )
        clock: Clock = TestClock() if test_clock else SystemClock()
        uplink = HttpUplink(server_url or cfg.server_url, cfg.auth_token)
        try:
            report = run_gateway(
                _paced(snapshots_from_trace(trace, cfg.mobility), clock), uplink, cfg, clock
            )
        finally:
            uplink.close()
    except click.ClickException:
        raise
    except Exception as exc:
        raise _fail(str(exc)) from exc
    click.echo(
        "observed={} sent={} suppressed={} buffered={} dropped={} remaining={}".format(
            report.observed,
            report.sent,
            report.suppressed,
            report.buffered,
            report.dropped,
            report.remaining,
        )
    )
    if report.remaining:
        sys.exit(1)


@main.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--l2", type=float, default=1e-4, show_default=True)
@click.option("--step0", type=float, default=1.0, show_default=True)
@click.option("--max-iters", type=int, default=5000, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def train_cmd(data_path: str, l2: float, step0: float, max_iters: int, tol: float, out_path: str) -> None:
    """Train the risk model on a labeled dataset file."""
    try:
        data = load_dataset(data_path)
        model, report = train(data, TrainConfig(step0=step0, max_iters=max_iters, tol=tol, l2=l2))
        save_model(model, out_path)
    except Exception as exc:
        raise _fail(str(exc)) from exc
    click.echo(f"examples={len(data)} iterations={report.iterations} stop={report.stop_reason}")
    click.echo(f"final_nll={report.final_nll:.6f} grad_inf_norm={report.grad_inf_norm:.3e}")
    click.echo(f"accuracy={report.accuracy:.4f}")
    click.echo(f"wrote model to {out_path}")


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cells", "cells_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
def label(scenario_path: str, seed: int, cells_path: str | None, out_path: str) -> None:
    """Build a labeled training file from a scenario: label 1 inside event windows."""
    import numpy as np

    try:
        scenario = load_scenario(scenario_path)
        cell_db = load_cell_db(cells_path) if cells_path else None
        trace = simulate(scenario, seed)
        mobility_cfg = MobilityConfig()
        rows = []
        labels = []
        for point in trace.points:
            mobility = classify_mobility(point.motion, mobility_cfg)
            place = cell_db.resolve(point.cell) if cell_db else None
            rows.append(encode_features(point.frame.hr, point.frame.spo2, mobility, place))
            t_s = point.timestamp_ms / 1000.0
            inside = any(ev.start_s <= t_s <= ev.start_s + ev.duration_s for ev in scenario.events)
            labels.append(1.0 if inside else 0.0)
        data = LabeledDataset(X=np.array(rows), y=np.array(labels))
        save_dataset(data, out_path)
    except Exception as exc:
        raise _fail(str(exc)) from exc
    click.echo(f"wrote {len(labels)} examples ({int(sum(labels))} positive) to {out_path}")


@main.command()
@click.option("--server", "server_url", required=True)
@click.option("--token", default=DEFAULT_TOKEN, show_default=True)
@click.option("--patient", default=None)
@click.option("--status", default=None)
@click.option("--ndjson", is_flag=True, help="One JSON alert per line instead of a table.")
def alerts(server_url: str, token: str, patient: str | None, status: str | None, ndjson: bool) -> None:
    """Print the server's alerts."""
    import httpx

    params = {}
    if patient:
        params["patient"] = patient
    if status:
        params["status"] = status
    try:
        resp = httpx.get(
            server_url.rstrip("/") + "/v1/alerts",
            params=params,
            headers={"Authorization": f"Bearer {token}"},
            timeout=10.0,
        )
    except Exception as exc:
        raise _fail(f"cannot reach server: {exc}") from exc
    if resp.status_code != 200:
        raise _fail(f"server returned {resp.status_code}: {resp.text[:200]}")
    items = resp.json()
    if ndjson:
        for item in items:
            click.echo(json.dumps(item, separators=(",", ":")))
        return
    header = f"{'ALERT_ID':<34} {'PATIENT':<12} {'KIND':<16} {'STATUS':<13} {'RAISED_AT_MS':>12} PLACE"
    click.echo(header)
    for item in items:
        place = item.get("place") or {}
        place_name = place.get("place_id", "-")
        click.echo(
            f"{item['alert_id']:<34} {item['patient_id']:<12} {item['kind']:<16} "
            f"{item['status']:<13} {item['raised_at_ms']:>12} {place_name}"
        )


if __name__ == "__main__":
    main()
