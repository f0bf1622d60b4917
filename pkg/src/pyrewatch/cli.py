"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 domain signal (Turbid point found,
Fault outcome, corrupt frame), 3 internal error. All errors print one
machine-parseable line `error[CODE]: ...` on stderr; stdout is reserved
for data. PYREWATCH_LOG=debug|info raises diagnostic verbosity on stderr.
"""

import json
import logging
import os
import sys

import click

from . import radio, simengine, turbidity
from .simengine import ConfigError, EventLog, Engine, ReplayParseError

log = logging.getLogger("pyrewatch")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2
EXIT_INTERNAL = 3


class _Exit(Exception):
    def __init__(self, code):
        self.code = code


def _fail(code_name: str, message: str, exit_code: int):
    click.echo(f"error[{code_name}]: {message}", err=True)
    raise _Exit(exit_code)


@click.group()
def cli():
    """Search-and-rescue simulator and water-quality analyzer."""


@cli.group()
def sim():
    """Run or replay simulations."""


@sim.command("run")
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True), help="Scenario JSON file.")
@click.option("--seed", type=int, default=None,
              help="Override the scenario seed.")
@click.option("--max-ticks", type=int, default=10_000, show_default=True)
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="Write the NDJSON event log here.")
def sim_run(scenario_path, seed, max_ticks, log_path):
    """Run a scenario to completion and print the outcome summary."""
    cfg = _load_scenario(scenario_path, seed)
    event_log, outcome = simengine.run(cfg, max_ticks=max_ticks)
    if log_path:
        event_log.save(log_path)
    summary = {
        "outcome": outcome,
        "ticks": event_log.records[-1]["tick"] + 1 if event_log.records else 0,
        "log_sha256": event_log.sha256(),
        "events": len(event_log.records),
    }
    click.echo(json.dumps(summary, sort_keys=True))
    if outcome == simengine.OUTCOME_FAULT:
        _fail("FAULT", "run ended in Fault", EXIT_DOMAIN)


@sim.command("replay")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--serve", "serve_flag", is_flag=True,
              help="Stream the gateway events over TCP instead of stdout.")
@click.option("--port", type=int, default=8787, show_default=True)
def sim_replay(log_path, serve_flag, port):
    """Re-emit the console event stream from a recorded log."""
    try:
        event_log = EventLog.load(log_path)
    except ReplayParseError as exc:
        _fail("LOG_PARSE", str(exc), EXIT_DOMAIN)
    if serve_flag:
        from .gateway import serve_replay
        serve_replay(event_log, port=port)
        return
    for line in simengine.replay(event_log):
        click.echo(line)


@cli.command("serve")
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True))
@click.option("--port", type=int, default=8787, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--max-ticks", type=int, default=100_000, show_default=True)
@click.option("--speed", type=float, default=1.0, show_default=True,
              help="Wall-clock pacing factor; 0 runs unthrottled.")
def serve(scenario_path, port, seed, max_ticks, speed):
    """Run a live simulation with the console gateway attached."""
    from .gateway import serve_engine
    cfg = _load_scenario(scenario_path, seed)
    engine = Engine(cfg, max_ticks=max_ticks)

    def ready(server):
        click.echo(f"gateway listening on port {server.port}", err=True)

    outcome = serve_engine(engine, port=port, speed=speed, ready_cb=ready)
    click.echo(json.dumps({"outcome": outcome}, sort_keys=True))
    if outcome == simengine.OUTCOME_FAULT:
        _fail("FAULT", "run ended in Fault", EXIT_DOMAIN)


def _load_scenario(path, seed):
    try:
        doc = json.load(open(path, encoding="utf-8"))
        if seed is not None:
            doc["seed"] = seed
        return simengine.load_scenario(doc)
    except json.JSONDecodeError as exc:
        _fail("SCENARIO_JSON", str(exc), EXIT_USAGE)
    except ConfigError as exc:
        _fail("SCENARIO", str(exc), EXIT_USAGE)


@cli.group("turbidity")
def turbidity_group():
    """Spectral water-quality analysis."""


@turbidity_group.command("analyze")
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True))
@click.option("--ref-sample", "ref_sample", required=True,
              help="sample_id of the plain-water reference rows.")
@click.option("--threshold", type=float, default=turbidity.TURBIDITY_THRESHOLD,
              show_default=True)
@click.option("--json", "json_path", type=click.Path(), default=None,
              help="Also write the JSON report to this file.")
def turbidity_analyze(csv_path, ref_sample, threshold, json_path):
    """Compute blue-to-yellow ratios and turbidity classifications.

    Exits 2 when any point classifies as Turbid (scripting hook).
    """
    try:
        readings = turbidity.read_csv(csv_path)
    except turbidity.CsvFormatError as exc:
        _fail("CSV", str(exc), EXIT_USAGE)
    groups = turbidity.group_by_sample(readings)
    if ref_sample not in groups:
        _fail("REF_SAMPLE", f"no rows with sample_id {ref_sample!r}", EXIT_USAGE)
    ref = groups[ref_sample][0]
    report = {"threshold": threshold, "ref_sample": ref_sample, "samples": []}
    any_turbid = False
    click.echo("sample_id\tt_hours\tratio\tclassification")
    for sample_id in sorted(groups):
        if sample_id == ref_sample:
            continue
        try:
            points, first_turbid, runs = turbidity.monitor(
                groups[sample_id], ref, threshold)
        except turbidity.DegenerateReference as exc:
            _fail("DEGENERATE_REF", str(exc), EXIT_DOMAIN)
        sample_report = {"sample_id": sample_id,
                         "first_turbid_t": first_turbid,
                         "points": [], "runs": [list(r) for r in runs]}
        for p in points:
            cls = p.classification.value if p.classification else "Error"
            ratio = f"{p.ratio:.4f}" if p.ratio is not None else "-"
            click.echo(f"{sample_id}\t{p.t_hours:g}\t{ratio}\t{cls}")
            sample_report["points"].append({
                "t_hours": p.t_hours,
                "ratio": round(p.ratio, 9) if p.ratio is not None else None,
                "classification": cls if p.classification else None,
                "error": p.error})
            any_turbid = any_turbid or cls == "Turbid"
        report["samples"].append(sample_report)
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
    if any_turbid:
        raise _Exit(EXIT_DOMAIN)


@turbidity_group.command("calibrate")
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True),
              help="Calibration CSV; sample_id rows look like '5mm/salt1'.")
def turbidity_calibrate(csv_path):
    """Select the best LDR sensor build from calibration batches."""
    try:
        readings = turbidity.read_csv(csv_path)
        batches = turbidity.calibration_batches_from_readings(readings)
        record, report = turbidity.select_calibration(batches)
    except (turbidity.CsvFormatError, ValueError) as exc:
        _fail("CALIBRATION", str(exc), EXIT_USAGE)
    click.echo(json.dumps({
        "selected": {"ldr_mm": record.ldr_mm,
                     "tuning_ohms": record.tuning_ohms,
                     "source_distance_cm": record.source_distance_cm},
        "scores": {str(k): {kk: round(vv, 6) for kk, vv in v.items()}
                   for k, v in report.items()},
    }, sort_keys=True))


@cli.group("frame")
def frame_group():
    """Radio frame debugging."""


@frame_group.command("decode")
@click.argument("hex_frame")
def frame_decode(hex_frame):
    """Decode a 32-byte radio frame given as hex."""
    try:
        raw = bytes.fromhex(hex_frame.strip())
    except ValueError:
        _fail("HEX", "argument is not valid hex", EXIT_USAGE)
    try:
        frame = radio.decode(raw)
    except radio.RadioError as exc:
        _fail(exc.code, str(exc), EXIT_DOMAIN)
    click.echo(json.dumps({
        "msg_type": radio.MsgType(frame.msg_type).name,
        "seq": frame.seq,
        "sender_id": frame.sender_id,
        "payload_hex": frame.payload.hex(),
    }, sort_keys=True))


def main(argv=None):
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(
        os.environ.get("PYREWATCH_LOG", "").lower(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except _Exit as exc:
        return exc.code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.exceptions.ClickException as exc:
        click.echo(f"error[USAGE]: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except Exception as exc:  # anything unanticipated is an internal error
        log.debug("internal error", exc_info=True)
        click.echo(f"error[INTERNAL]: {exc}", err=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
