"""Command-line entry point: ``evattack {validate,run,compare,gen-baseline}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import BoundViolated, ConfigError, NumericalDivergence
from .feeder import load_feeder, write_baseline_csv
from .metrics import compare
from .scenario import (BaselineParams, execute, load_config, prepare, synthetic_baseline,
                       validate)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3

log = logging.getLogger("evattack")


def _out_dir(args, config) -> Path:
    if args.out:
        return Path(args.out)
    if config.output:
        return config.resolve(config.output)
    return Path("out") / config.name


def cmd_validate(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_INVALID
    errors = validate(config)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    if errors:
        return EXIT_INVALID
    print(f"{args.config}: valid")
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    trace = out / "trace.csv" if (args.trace or config.trace) else None
    if trace is not None and trace.exists():
        trace.unlink()
    report = execute(config, workers=args.workers, trace_path=trace)
    path = report.write(out)
    print(f"{config.name}: {report.criterion} after {report.iterations} iterations, "
          f"objective {report.objective:.6g} -> {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    scenario = prepare(config)
    free_cfg = config.with_attacks([], name=f"{config.name}-attack-free")
    free = execute(free_cfg, workers=args.workers, scenario=scenario)
    free.write(out / "attack-free")

    runs = {config.name: config}
    for vname, specs in config.variants.items():
        runs[vname] = config.with_attacks(specs, name=vname)
    summary = {"attack_free": {"objective": free.objective, "converged": free.converged}}
    status = EXIT_OK
    for name, cfg in runs.items():
        if not cfg.attacks:
            continue
        rep = execute(cfg, workers=args.workers, scenario=scenario)
        rep.write(out / name)
        try:
            cmp = compare(rep, free, name=name)
        except BoundViolated as exc:
            print(f"error: {name}: {exc}", file=sys.stderr)
            status = EXIT_FAILURE
            cmp = compare(rep, free, name=name, audit=False)
        (out / name / "comparison.json").write_text(
            json.dumps(cmp.to_dict(), sort_keys=True, indent=1) + "\n")
        summary[name] = {"zeta": cmp.zeta, "objective_delta": cmp.objective_delta,
                         "max_load_deviation": cmp.max_load_deviation,
                         "max_voltage_deviation": cmp.max_voltage_deviation,
                         "converged": rep.converged}
        print(f"{name}: zeta={cmp.zeta:.4f} objective delta={cmp.objective_delta:.4g} "
              f"({cmp.objective_delta_pct:.4f}%)")
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return status


def cmd_gen_baseline(args) -> int:
    if args.config:
        config = load_config(args.config)
        feeder = load_feeder(config.resolve(config.feeder))
        T, dt = config.T, config.dt
        params = dict(config.baseline.get("synthetic", {}))
    else:
        feeder = load_feeder(args.feeder)
        T, dt = args.T, args.dt
        params = {}
    if args.seed is not None:
        params["seed"] = args.seed
    if args.scale is not None:
        params["scale"] = args.scale
    for key in ("peak_kw", "valley_kw", "morning_kw", "noise"):
        val = getattr(args, key)
        if val is not None:
            params[key] = val
    baseline = synthetic_baseline(BaselineParams.from_dict(params), feeder.n, T, dt)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_baseline_csv(baseline, out)
    print(f"wrote {feeder.n} buses x {T} steps to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evattack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    for name, func, hlp in (("run", cmd_run, "solve one scenario"),
                            ("compare", cmd_compare, "attacked runs against the attack-free twin")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--workers", type=int)
        p.add_argument("--trace", action="store_true", help="append per-iteration trace.csv")
        p.set_defaults(func=func)

    p = sub.add_parser("gen-baseline", help="write a synthetic valley-shaped baseline CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="take feeder, horizon and parameters from a scenario")
    src.add_argument("--feeder", help="feeder JSON (use with --T/--dt)")
    p.add_argument("--T", type=int, default=52)
    p.add_argument("--dt", type=float, default=0.25)
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=float)
    p.add_argument("--peak-kw", dest="peak_kw", type=float)
    p.add_argument("--valley-kw", dest="valley_kw", type=float)
    p.add_argument("--morning-kw", dest="morning_kw", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_baseline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalDivergence as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
