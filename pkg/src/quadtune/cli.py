"""Command-line entry points.

Verbs:
  autotune   fly the learning trajectory with adaptation on, save the gains
  fly        fly a mission with a fixed gain set and score it
  sweep      autotune + benchmark across a list of vehicle mass scales
  cost       recompute the tracking cost from a telemetry CSV
  mission    export built-in mission definitions as JSON

Exit codes: 0 success, 2 mission abort, 3 numerical abort, 64 config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, MissionAbort, NumericalAbort, QuadtuneError
from .harness import (
    ScenarioConfig,
    compute_cost,
    emit_outputs,
    run_autotune,
    run_sweep,
    run_test,
)
from .harness import FlightLog


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="scenario config file (key = value lines)")
    parser.add_argument("--profile", choices=("sim", "mair"), help="built-in parameter profile")
    parser.add_argument("--alpha", type=float, help="vehicle mass scale")
    parser.add_argument("--seed", type=int, help="random seed for measurement noise")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    parser.add_argument("--vehicle", dest="vehicle_file", help="vehicle parameter file")
    parser.add_argument("--log-rate", dest="log_rate_hz", type=float, help="telemetry rate, Hz")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="raw config override, repeatable (e.g. --set v_max=4)",
    )


def _build_config(args: argparse.Namespace) -> ScenarioConfig:
    cfg = ScenarioConfig.from_file(args.config) if args.config else ScenarioConfig()
    overrides: dict[str, str] = {}
    for name in ("profile", "alpha", "seed", "out_dir", "vehicle_file", "log_rate_hz"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = str(value)
    for kv in args.set:
        key, sep, value = kv.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {kv!r}")
        overrides[key.strip()] = value.strip()
    return cfg.with_overrides(overrides)


def _cmd_autotune(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    result = run_autotune(cfg)
    out = Path(cfg.out_dir)
    emit_outputs(result, None, out)
    snapshot = (
        Path(args.snapshot)
        if args.snapshot
        else out / f"autotuned_gains_{cfg.profile}_a{cfg.alpha:.2f}.json"
    )
    snapshot.parent.mkdir(parents=True, exist_ok=True)
    result.gains.save(snapshot)
    print(f"autotune complete in {result.duration:.1f} s of flight")
    print(f"gains written to {snapshot}")
    return 0


def _cmd_fly(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    if args.mission:
        cfg = cfg.with_overrides({"mission": args.mission})
    if args.gains:
        cfg = cfg.with_overrides({"gain_source": args.gains})
    label = {"default": "default", "zero": "zero"}.get(cfg.gain_source, "custom")
    result, report = run_test(cfg, cfg.gains(), label=label)
    emit_outputs(result, report, cfg.out_dir)
    print(json.dumps(report.to_json_dict(), indent=2))
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    rows = run_sweep(cfg, alphas, out_dir=cfg.out_dir)
    print("alpha  J_default   J_autotuned  improvement")
    failures = 0
    for r in rows:
        if r.error:
            failures += 1
            print(f"{r.alpha:5.2f}  failed: {r.error}")
        else:
            print(
                f"{r.alpha:5.2f}  {r.j_default:10.4f}  {r.j_autotuned:11.4f}"
                f"  {100.0 * r.improvement:10.1f}%"
            )
    print(f"summary written to {Path(cfg.out_dir) / 'sweep_summary.csv'}")
    return 2 if failures else 0


def _cmd_cost(args: argparse.Namespace) -> int:
    log = FlightLog.read_csv(args.log)
    report = compute_cost(log, scenario=Path(args.log).stem)
    text = json.dumps(report.to_json_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_mission(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    if args.action != "export":
        raise ConfigError(f"unknown mission action {args.action!r}")
    mission = cfg.learning_mission() if args.which == "learning" else cfg.hilbert_mission()
    mission.save(args.out_file)
    print(f"{args.which} mission ({len(mission.waypoints)} waypoints) written to {args.out_file}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadtune",
        description="Adaptive PID autotuning workbench for a simulated quadcopter.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("autotune", help="learn all 27 gains on the learning trajectory")
    _add_common(p)
    p.add_argument("--snapshot", help="path for the autotuned gain JSON")
    p.set_defaults(func=_cmd_autotune)

    p = sub.add_parser("fly", help="fly a mission with fixed gains and score it")
    _add_common(p)
    p.add_argument("--gains", help="'default', 'zero', or a gain JSON path")
    p.add_argument("--mission", help="'hilbert', 'learning', or a mission JSON path")
    p.set_defaults(func=_cmd_fly)

    p = sub.add_parser("sweep", help="mass-scale sensitivity sweep")
    _add_common(p)
    p.add_argument("--alphas", default="0.5,0.75,1.0,1.25,1.5", help="comma-separated scales")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("cost", help="recompute tracking cost from telemetry CSV")
    p.add_argument("--log", required=True, help="telemetry CSV produced by this tool")
    p.add_argument("--out", help="optional path for the cost JSON")
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("mission", help="mission utilities")
    p.add_argument("action", choices=("export",))
    _add_common(p)
    p.add_argument("--which", choices=("learning", "hilbert"), required=True)
    p.add_argument("--out-file", required=True, help="mission JSON destination")
    p.set_defaults(func=_cmd_mission)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except MissionAbort as exc:
        print(f"mission abort: {exc}", file=sys.stderr)
        return MissionAbort.exit_code
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return NumericalAbort.exit_code
    except QuadtuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
