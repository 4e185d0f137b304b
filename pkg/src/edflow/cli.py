"""Command-line front end: validation, imaging-delay and bundling sweeps."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ESI_LEVELS, ConfigError, RunConfig, emit_defaults, parse_config
from .kernel import EventLog
from .model import KIND_NAMES, EDModel
from .scenarios import (
    DIMENSIONS,
    BundlingRow,
    SweepRow,
    run_scenario,
    sweep_bundling,
    sweep_delays,
)

EXIT_RUNTIME = 5
DEFAULT_LEVELS = (0.1, 0.2, 0.3, 0.5, 1.0)

log = logging.getLogger("edflow")


# Fixed-precision formatting; str.format with explicit specs ignores locale.
def fmt_min(x: float) -> str:
    if math.isnan(x):
        return "nan"
    out = f"{x:.1f}"
    # values that round to zero print unsigned
    return "0.0" if out == "-0.0" else out


fmt_pct = fmt_min


def fmt_p(p: float) -> str:
    return f"{p:.4f}"


def fmt_level(lv: float) -> str:
    return f"{lv:g}"


def _csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def table4(config: RunConfig, jobs: int = 1) -> str:
    res = run_scenario(config, "baseline", jobs)
    rows = []
    for e in ESI_LEVELS:
        actual = config.targets[e]
        ci = res.per_esi[e]
        pct = round(100.0 * abs(ci.mean - actual) / actual)
        rows.append([str(e), fmt_min(actual), fmt_min(ci.mean), fmt_min(ci.half_width), str(pct)])
    return _csv(["esi", "actual_min", "simulated_min", "ci_half_width", "percent_diff"], rows)


def sweep_table(rows: Sequence[SweepRow]) -> str:
    out = [
        [
            fmt_level(r.level),
            r.dimension,
            fmt_pct(r.comparison.pct_reduction),
            fmt_min(r.comparison.reduction_min),
            fmt_p(r.comparison.paired.p_value),
        ]
        for r in rows
    ]
    return _csv(["level", "dimension", "pct_reduction", "reduction_min", "p_value"], out)


def bundling_table(rows: Sequence[BundlingRow]) -> str:
    out = [
        [
            r.scenario,
            fmt_pct(r.comparison.pct_change),
            fmt_p(r.comparison.paired.p_value),
            "true" if r.comparison.paired.significant else "false",
        ]
        for r in rows
    ]
    return _csv(["scenario", "pct_change", "p_value", "significant"], out)


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    print(path)
    return path


def _load(args) -> RunConfig:
    cfg = parse_config(Path(args.config) if args.config else None)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.reps is not None:
        over["count"] = args.reps
    return cfg.with_replication(**over) if over else cfg


def cmd_validate(args) -> None:
    cfg = _load(args)
    _write(Path(args.out), "table4.csv", table4(cfg, args.jobs))


def cmd_sweep_delays(args) -> None:
    cfg = _load(args)
    levels = tuple(args.levels) if args.levels else DEFAULT_LEVELS
    dims = [args.dimension] if args.dimension != "all" else list(DIMENSIONS)
    baseline = run_scenario(cfg.with_scenario(r_otb=0.0, r_etr=0.0), "baseline", args.jobs)
    rows = sweep_delays(levels, dims, cfg, baseline=baseline, jobs=args.jobs)
    single = [r for r in rows if r.dimension in ("otb", "etr")]
    both = [r for r in rows if r.dimension == "both"]
    if single:
        _write(Path(args.out), "table5.csv", sweep_table(single))
    if both:
        _write(Path(args.out), "table6.csv", sweep_table(both))


def cmd_sweep_bundling(args) -> None:
    cfg = _load(args)
    names = args.scenarios or [f"S{i}" for i in range(1, 9)]
    rows = sweep_bundling(names, cfg, jobs=args.jobs)
    _write(Path(args.out), "table7.csv", bundling_table(rows))


def cmd_run(args) -> None:
    cfg = _load(args)
    if args.event_log:
        with open(args.event_log, "w", encoding="utf-8") as fh:
            EDModel(cfg, 0, trace=EventLog(fh, KIND_NAMES)).run()
    res = run_scenario(cfg, "run", args.jobs)
    rows = [[str(e), fmt_min(res.per_esi[e].mean), fmt_min(res.per_esi[e].half_width)] for e in ESI_LEVELS]
    rows.append(["all", fmt_min(res.overall.mean), fmt_min(res.overall.half_width)])
    _write(Path(args.out), "run.csv", _csv(["esi", "mean_min", "ci_half_width"], rows))


def cmd_print_defaults(args) -> None:
    sys.stdout.write(emit_defaults())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override the replication seed")
    common.add_argument("--reps", type=int, help="override the replication count")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for replications")
    common.add_argument("--out", default=".", help="output directory for CSV tables")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="edflow", description="Emergency department patient-flow simulator")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="baseline time in ED per ESI (table4.csv)")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("sweep-delays", parents=[common], help="imaging delay reductions (table5/6.csv)")
    s.add_argument("--levels", type=float, nargs="+", help="reduction levels in [0, 1]")
    s.add_argument("--dimension", choices=[*DIMENSIONS, "all"], default="all")
    s.set_defaults(func=cmd_sweep_delays)

    s = sub.add_parser("sweep-bundling", parents=[common], help="order bundling scenarios (table7.csv)")
    s.add_argument("--scenarios", nargs="+", metavar="NAME", help="subset of baseline, S1 .. S8 (default S1 .. S8)")
    s.set_defaults(func=cmd_sweep_bundling)

    s = sub.add_parser("run", parents=[common], help="one scenario from the config (run.csv)")
    s.add_argument("--event-log", help="write replication 0's events as JSON lines")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("print-defaults", help="print the built-in configuration")
    s.set_defaults(func=cmd_print_defaults)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
