"""Command-line entry points.

    failop run       --scenario <file> [--seed N] [--out DIR] [--serve] ...
    failop train     --kb DIR [--from-runlog FILE]... [--ingest INCIDENT]...
    failop calibrate --kb DIR [--version N] [-q Q]
    failop score     --model FILE --raster FILE
    failop replay    --incident FILE [--model FILE]
    failop summarize --runlog FILE

Every command is deterministic given its arguments and seed.
"""

from __future__ import annotations

import argparse
import json
import queue
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels, records
from .anomaly import (AnomalyModel, AmVerdict, DigestMismatch, KnowledgeBase,
                      TrainConfig, retrain_with_recordings, train_on_kb)
from .ccc import DEFAULT_PORT, DEFAULT_TOKEN, CccServer
from .function_monitor import (FmVerdict, HaraThresholds, SafeZoneParams,
                               compute_safe_zone, validate)
from .pipeline import Pipeline
from .reactor import SystemMode
from .records import RecordError
from .scene import ObjectList, SceneRaster, SceneState
from .sim import Event, HookError, RunHeader, RunLog, load_scenario, run_scenario


def _fail(message: str, code: int = 2) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def summarize_log(log: RunLog) -> dict:
    header = log.by_type(RunHeader)[0]
    fm_flag_ticks = sorted({v.tick for v in log.by_type(FmVerdict) if v.flag})
    am_flag_ticks = sorted({v.tick for v in log.by_type(AmVerdict) if v.flag})
    transitions = [e.data for e in log.by_type(Event) if e.kind == "mode_transition"]
    incidents = [e.data["name"] for e in log.by_type(Event)
                 if e.kind == "incident_written"]
    modes = log.by_type(SystemMode)
    return {
        "scenario": header.scenario, "seed": header.seed,
        "n_ticks": header.n_ticks,
        "fm_flags": len(fm_flag_ticks),
        "am_flags": len(am_flag_ticks),
        "first_fm_flag_tick": fm_flag_ticks[0] if fm_flag_ticks else None,
        "first_am_flag_tick": am_flag_ticks[0] if am_flag_ticks else None,
        "mode_trace": transitions,
        "final_state": modes[-1].state if modes else "Nominal",
        "incidents": incidents,
    }


def _apply_config_overrides(scenario, config_path: str):
    """Merge a config file (same record format as scenarios) over the
    scenario: records replace the scenario's records of the same type."""
    from .scene import RasterWindow
    from .sim import LidarConfig

    overrides = records.read_records(config_path)
    by_type: dict[type, list] = {}
    for rec in overrides:
        by_type.setdefault(type(rec), []).append(rec)
    for cls, recs in by_type.items():
        if cls is LidarConfig:
            scenario.lidar = recs[-1]
        elif cls is RasterWindow:
            scenario.raster_window = recs[-1]
        else:
            scenario.extra = tuple(r for r in scenario.extra
                                   if not isinstance(r, cls)) + tuple(recs)
    return scenario


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario, seed_override=args.seed)
        if args.config:
            scenario = _apply_config_overrides(scenario, args.config)
    except (RecordError, OSError) as exc:
        return _fail(str(exc))

    model = None
    if args.anomaly_model:
        try:
            model = AnomalyModel.load(args.anomaly_model)
        except (RecordError, DigestMismatch, OSError) as exc:
            return _fail(f"anomaly model: {exc}")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_id = f"{scenario.name}-s{scenario.seed}"

    command_queue = queue.Queue()
    server = None
    frame_sink = None
    if args.serve:
        server = CccServer(host=args.ccc_host, port=args.ccc_port,
                           token=args.ccc_token, run_id=run_id,
                           command_queue=command_queue)
        server.start()
        frame_sink = server.publish
        print(f"ccc service listening on ws://{args.ccc_host}:{server.bound_port}")

    try:
        pipeline = Pipeline(scenario, out_dir=out_dir, run_id=run_id,
                            anomaly_model=model, command_queue=command_queue,
                            frame_sink=frame_sink)
    except RecordError as exc:
        if server:
            server.stop()
        return _fail(str(exc))

    hooks = pipeline.hooks()
    if args.pace > 0:
        period = scenario.dt / args.pace

        def pace_hook(ctx, _period=period, _state={"next": None}):
            now = time.monotonic()
            if _state["next"] is not None:
                delay = _state["next"] - now
                if delay > 0:
                    time.sleep(delay)
                    now = _state["next"]
            _state["next"] = now + _period

        hooks.append(("pacing", pace_hook))

    started = time.monotonic()
    try:
        log = run_scenario(scenario, hooks)
    except HookError as exc:
        exc.log.write(out_dir / "runlog.ndjson")
        if server:
            server.stop()
        return _fail(f"run aborted: {exc}", code=1)
    pipeline.finalize(log)
    wall = time.monotonic() - started

    log.write(out_dir / "runlog.ndjson")
    summary = summarize_log(log)
    summary["wall_time_s"] = round(wall, 3)
    summary["kernel_backend"] = kernels.BACKEND
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    print(f"run {run_id}: {summary['n_ticks']} ticks in {wall:.2f}s "
          f"({kernels.BACKEND} kernels)")
    print(f"  fm_flags={summary['fm_flags']} am_flags={summary['am_flags']} "
          f"final={summary['final_state']}")
    for name in summary["incidents"]:
        print(f"  incident: {name}")
    if server:
        if args.hold_serve:
            print("run finished; serving final state (ctrl-c to stop)")
            try:
                while True:
                    time.sleep(0.5)
            except KeyboardInterrupt:
                pass
        server.stop()
    return 0


def _rasters_from_file(path: Path) -> list[SceneRaster]:
    return [r for r in records.read_records(path, skip_unknown=True)
            if isinstance(r, SceneRaster)]


def cmd_train(args) -> int:
    kb = KnowledgeBase(args.kb)
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch=args.batch,
                      seed=args.seed if args.seed is not None else 0,
                      hidden=args.hidden)
    try:
        if args.ingest:
            base = kb.latest_model()
            recordings: list[SceneRaster] = []
            for inc in args.ingest:
                recordings.extend(_rasters_from_file(Path(inc)))
            if not recordings:
                return _fail("ingest files contain no rasters")
            model = retrain_with_recordings(base, kb, recordings, cfg, args.quantile)
        else:
            for rl in args.from_runlog or []:
                for raster in _rasters_from_file(Path(rl)):
                    kb.add_raster(raster)
            model = train_on_kb(kb, cfg, args.quantile)
    except (RecordError, DigestMismatch, OSError) as exc:
        return _fail(str(exc))
    path = kb.model_path(model.version)
    print(f"trained model v{model.version} on {len(kb.raster_files())} rasters")
    print(f"  tau={model.tau:.6g} q={model.q} -> {path}")
    return 0


def cmd_calibrate(args) -> int:
    kb = KnowledgeBase(args.kb)
    version = args.version or (kb.model_versions() or [0])[-1]
    if version == 0:
        return _fail("knowledge base has no trained model")
    try:
        model = AnomalyModel.load(kb.model_path(version))
        if model.training_digest != kb.digest():
            raise DigestMismatch("model training_digest does not match the knowledge base")
        rasters = kb.rasters()
        x = np.stack([r.flat() for r in rasters])
        from .anomaly import calibrate_threshold
        model.tau = calibrate_threshold(model.ae, x, args.quantile)
        model.q = args.quantile
        model.save(kb.model_path(version))
    except (RecordError, DigestMismatch, OSError) as exc:
        return _fail(str(exc))
    print(f"model v{version} recalibrated: tau={model.tau:.6g} q={model.q}")
    return 0


def cmd_score(args) -> int:
    try:
        model = AnomalyModel.load(args.model)
        rasters = _rasters_from_file(Path(args.raster))
    except (RecordError, DigestMismatch, OSError) as exc:
        return _fail(str(exc))
    if not rasters:
        return _fail("no raster records in input")
    for raster in rasters:
        verdict = model.detect(raster)
        print(f"tick={raster.tick} score={verdict.score:.8g} "
              f"flag={'true' if verdict.flag else 'false'} tau={model.tau:.8g}")
    return 0


def cmd_replay(args) -> int:
    try:
        lines = Path(args.incident).read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        if header.get("type") != "incident_header":
            return _fail("not an incident file")
        recs = [records.decode(l) for l in lines[1:] if l.strip()]
    except (RecordError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))

    zone_params = SafeZoneParams.from_payload(header["zone_params"])
    thresholds = HaraThresholds.from_payload(header["thresholds"])
    model = None
    if args.model:
        try:
            model = AnomalyModel.load(args.model)
        except (RecordError, DigestMismatch, OSError) as exc:
            return _fail(f"anomaly model: {exc}")
        if model.version != header.get("model_version"):
            return _fail(f"model v{model.version} does not match incident "
                         f"(recorded v{header.get('model_version')})")
    elif header.get("model_version"):
        return _fail("incident was recorded with an anomaly model; pass --model")

    by_tick: dict[int, dict] = {}
    current = -1
    for r in recs:
        if isinstance(r, SceneState):
            current = r.tick
        if current < 0:
            continue
        slot = by_tick.setdefault(current, {"lists": []})
        if isinstance(r, SceneState):
            slot["truth"] = r
        elif isinstance(r, SceneRaster):
            slot["raster"] = r
        elif isinstance(r, ObjectList) and r.source != "fallback":
            slot["lists"].append(r)
        elif isinstance(r, FmVerdict):
            slot["fm"] = r
        elif isinstance(r, AmVerdict):
            slot["am"] = r
        elif isinstance(r, SystemMode):
            slot["mode"] = r

    mismatches = 0
    for tick in sorted(by_tick):
        slot = by_tick[tick]
        if "fm" not in slot or "truth" not in slot:
            continue
        mode: SystemMode | None = slot.get("mode")
        excluded = set(mode.excluded_sources) if mode else set()
        watched = [l for l in slot["lists"] if l.source not in excluded]
        zone = compute_safe_zone(slot["truth"].ego, zone_params)
        fm = validate(watched, zone, thresholds)
        ok = records.encode(fm) == records.encode(slot["fm"])
        if model is not None and "raster" in slot and "am" in slot:
            am = model.detect(slot["raster"])
            ok = ok and records.encode(am) == records.encode(slot["am"])
        elif "am" in slot:
            am = AmVerdict(tick=tick, score=None, flag=False, model_version=0)
            ok = ok and records.encode(am) == records.encode(slot["am"])
        status = "ok" if ok else "MISMATCH"
        if not ok:
            mismatches += 1
        if args.verbose or not ok:
            print(f"tick {tick}: {status}")
    total = len(by_tick)
    print(f"replayed {total} ticks, {mismatches} mismatches")
    return 0 if mismatches == 0 else 1


def cmd_summarize(args) -> int:
    try:
        log = RunLog.read(args.runlog)
    except (RecordError, OSError) as exc:
        return _fail(str(exc))
    print(json.dumps(summarize_log(log), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="failop",
                                description="fail-operational perception sandbox")
    p.add_argument("--version", action="version", version=f"failop {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run a scenario through the full pipeline")
    runp.add_argument("--scenario", required=True)
    runp.add_argument("--seed", type=int, default=None,
                      help="override the scenario's seed")
    runp.add_argument("--config", default=None,
                      help="config records overriding the scenario's sections")
    runp.add_argument("--out", default="out")
    runp.add_argument("--anomaly-model", default=None)
    runp.add_argument("--serve", action="store_true",
                      help="expose the ccc service during the run")
    runp.add_argument("--hold-serve", action="store_true",
                      help="keep serving after the run ends")
    runp.add_argument("--pace", type=float, default=0.0,
                      help="real-time pacing factor (0 = as fast as possible)")
    runp.add_argument("--ccc-host", default="127.0.0.1")
    runp.add_argument("--ccc-port", type=int, default=DEFAULT_PORT)
    runp.add_argument("--ccc-token", default=DEFAULT_TOKEN)
    runp.set_defaults(fn=cmd_run)

    trainp = sub.add_parser("train", help="train the next anomaly model version")
    trainp.add_argument("--kb", required=True)
    trainp.add_argument("--from-runlog", action="append",
                        help="seed the knowledge base with a run's rasters")
    trainp.add_argument("--ingest", action="append",
                        help="incident file(s) with recorded rasters to add")
    trainp.add_argument("--lr", type=float, default=0.05)
    trainp.add_argument("--epochs", type=int, default=500)
    trainp.add_argument("--batch", type=int, default=16)
    trainp.add_argument("--hidden", type=int, default=16)
    trainp.add_argument("--seed", type=int, default=None)
    trainp.add_argument("-q", "--quantile", type=float, default=0.99)
    trainp.set_defaults(fn=cmd_train)

    calp = sub.add_parser("calibrate", help="recalibrate a model's threshold")
    calp.add_argument("--kb", required=True)
    calp.add_argument("--version", type=int, default=None)
    calp.add_argument("-q", "--quantile", type=float, default=0.99)
    calp.set_defaults(fn=cmd_calibrate)

    scorep = sub.add_parser("score", help="score raster records against a model")
    scorep.add_argument("--model", required=True)
    scorep.add_argument("--raster", required=True)
    scorep.set_defaults(fn=cmd_score)

    repp = sub.add_parser("replay", help="re-run monitors over a recorded incident")
    repp.add_argument("--incident", required=True)
    repp.add_argument("--model", default=None)
    repp.add_argument("-v", "--verbose", action="store_true")
    repp.set_defaults(fn=cmd_replay)

    sump = sub.add_parser("summarize", help="summarize a run log")
    sump.add_argument("--runlog", required=True)
    sump.set_defaults(fn=cmd_summarize)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
