"""Replications, delay-reduction sweeps, bundling scenarios and calibration."""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .config import ESI_LEVELS, RunConfig, ValidationError
from .model import EDModel
from .stats import ConfidenceInterval, TTestResult, mean_ci, paired_t, welch_t

log = logging.getLogger(__name__)

MAX_ORDERS = 3


class UnknownScenarioError(ValidationError):
    pass


class CalibrationFailure(RuntimeError):
    def __init__(self, message: str, result: "CalibrationResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class ReplicationSummary:
    replication: int
    mean_time_in_ed: dict[int, float]
    counts: dict[int, int]
    overall_mean: float
    mean_bed_to_disposition: float
    mean_disposition_to_departure: float
    direct_care_share: float
    mean_waiting_room: float
    censored: int
    # (esi, order count) -> (patients, summed time in ED)
    by_orders: dict[tuple[int, int], tuple[int, float]] = field(default_factory=dict)


def summarize(model: EDModel) -> ReplicationSummary:
    recs = model.records
    sums = {e: 0.0 for e in ESI_LEVELS}
    counts = {e: 0 for e in ESI_LEVELS}
    by_orders: dict[tuple[int, int], list] = {}
    b2d = d2d = share = wait = 0.0
    for r in recs:
        sums[r.esi] += r.time_in_ed
        counts[r.esi] += 1
        slot = by_orders.setdefault((r.esi, r.orders), [0, 0.0])
        slot[0] += 1
        slot[1] += r.time_in_ed
        b2d += r.bed_to_disposition
        d2d += r.disposition_to_departure
        share += r.face_time / r.time_in_ed
        wait += r.waiting_room
    n = len(recs)
    if n == 0:
        raise RuntimeError("replication produced no measured patients; horizon too short?")
    means = {e: (sums[e] / counts[e] if counts[e] else math.nan) for e in ESI_LEVELS}
    overall = sum(means[e] * counts[e] for e in ESI_LEVELS if counts[e]) / n
    return ReplicationSummary(
        replication=model.replication,
        mean_time_in_ed=means,
        counts=counts,
        overall_mean=overall,
        mean_bed_to_disposition=b2d / n,
        mean_disposition_to_departure=d2d / n,
        direct_care_share=share / n,
        mean_waiting_room=wait / n,
        censored=model.censored,
        by_orders={k: (v[0], v[1]) for k, v in by_orders.items()},
    )


def run_replication(config: RunConfig, i: int) -> ReplicationSummary:
    """One replication; every stream is forked from (seed, purpose, i)."""
    return summarize(EDModel(config, i).run())


def _run_rep(args) -> ReplicationSummary:
    return run_replication(*args)


def run_replications(config: RunConfig, indices: Iterable[int], jobs: int = 1) -> list[ReplicationSummary]:
    idx = list(indices)
    if jobs <= 1 or len(idx) <= 1:
        return [run_replication(config, i) for i in idx]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        out = list(pool.map(_run_rep, [(config, i) for i in idx], chunksize=1))
    return sorted(out, key=lambda s: s.replication)


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    replications: tuple[ReplicationSummary, ...]
    overall: ConfidenceInterval
    per_esi: dict[int, ConfidenceInterval]

    @property
    def overall_means(self) -> list[float]:
        return [r.overall_mean for r in self.replications]

    def esi_means(self, esi: int) -> list[float]:
        return [r.mean_time_in_ed[esi] for r in self.replications]


def aggregate(name: str, reps: Sequence[ReplicationSummary], alpha: float = 0.05) -> ScenarioResult:
    per_esi = {}
    for e in ESI_LEVELS:
        vals = [r.mean_time_in_ed[e] for r in reps if not math.isnan(r.mean_time_in_ed[e])]
        per_esi[e] = mean_ci(vals, alpha) if len(vals) >= 2 else ConfidenceInterval(math.nan, math.nan, alpha, len(vals))
    return ScenarioResult(name, tuple(reps), mean_ci([r.overall_mean for r in reps], alpha), per_esi)


def run_scenario(config: RunConfig, name: str = "scenario", jobs: int = 1) -> ScenarioResult:
    reps = run_replications(config, range(config.replication.count), jobs)
    return aggregate(name, reps)


@dataclass(frozen=True)
class Comparison:
    """A scenario compared with its CRN-paired baseline."""

    name: str
    baseline_mean: float
    scenario_mean: float
    paired: TTestResult
    welch: TTestResult
    diffs: tuple[float, ...]

    @property
    def reduction_min(self) -> float:
        return self.baseline_mean - self.scenario_mean

    @property
    def pct_reduction(self) -> float:
        return 100.0 * self.reduction_min / self.baseline_mean

    @property
    def pct_change(self) -> float:
        return -self.pct_reduction


def compare(name: str, baseline: ScenarioResult, scenario: ScenarioResult, alpha: float = 0.05) -> Comparison:
    base = {r.replication: r.overall_mean for r in baseline.replications}
    diffs = tuple(r.overall_mean - base[r.replication] for r in scenario.replications)
    b = [base[r.replication] for r in scenario.replications]
    s = [r.overall_mean for r in scenario.replications]
    return Comparison(
        name=name,
        baseline_mean=math.fsum(b) / len(b),
        scenario_mean=math.fsum(s) / len(s),
        paired=paired_t(diffs, alpha),
        welch=welch_t(s, b, alpha),
        diffs=diffs,
    )


DIMENSIONS = ("otb", "etr", "both")


@dataclass(frozen=True)
class SweepRow:
    level: float
    dimension: str
    comparison: Comparison
    result: ScenarioResult


def sweep_delays(
    levels: Sequence[float],
    dimensions: Sequence[str],
    config: RunConfig,
    baseline: Optional[ScenarioResult] = None,
    jobs: int = 1,
) -> list[SweepRow]:
    """Order-to-begin / end-to-read reductions, each CRN-paired to the baseline."""
    for lv in levels:
        if not 0.0 <= lv <= 1.0:
            raise ValidationError(f"levels: {lv} outside [0, 1]")
    for dim in dimensions:
        if dim not in DIMENSIONS:
            raise ValidationError(f"dimension: {dim!r} is not one of {DIMENSIONS}")
    base_cfg = config.with_scenario(r_otb=0.0, r_etr=0.0)
    if baseline is None:
        baseline = run_scenario(base_cfg, "baseline", jobs)
    rows = []
    for dim in dimensions:
        for lv in levels:
            r_otb = lv if dim in ("otb", "both") else 0.0
            r_etr = lv if dim in ("etr", "both") else 0.0
            if lv == 0.0:
                res = baseline
            else:
                res = run_scenario(base_cfg.with_scenario(r_otb=r_otb, r_etr=r_etr), f"{dim}-{lv:g}", jobs)
            rows.append(SweepRow(lv, dim, compare(f"{dim}-{lv:g}", baseline, res), res))
            log.info("sweep %s %.2f: %.1f%%", dim, lv, rows[-1].comparison.pct_reduction)
    return rows


# -- order bundling ------------------------------------------------------------


def shift_mass(row: Sequence[float], src: int, dst: int, amount: Optional[float] = None) -> tuple[float, ...]:
    """Move ``amount`` of probability (all of it if None) from ``src`` orders to ``dst``."""
    out = list(row) + [0.0] * (MAX_ORDERS + 1 - len(row))
    moved = out[src] if amount is None else min(amount, out[src])
    out[src] -= moved
    out[dst] += moved
    return tuple(out)


def bundling_scenarios(order_counts: Mapping[int, Sequence[float]]) -> dict[str, dict[int, tuple[float, ...]]]:
    """Built-in bundling scenarios S1-S8 as order-count pmf overrides.

    S1-S3 move 10 points of the two-order mass to one order for ESI 1, 2, 3;
    S4-S6 do the same for the ESI pairs (1,2), (2,3), (1,3); S7 folds three
    orders into two; S8 folds two and three orders into one.
    """
    base = {e: tuple(order_counts[e]) for e in (1, 2, 3)}

    def ten(esis):
        return {e: shift_mass(base[e], 2, 1, 0.10) for e in esis}

    s7 = {e: shift_mass(base[e], 3, 2) for e in base}
    s8 = {e: shift_mass(shift_mass(base[e], 3, 1), 2, 1) for e in base}
    return {
        "baseline": dict(base),
        "S1": ten([1]),
        "S2": ten([2]),
        "S3": ten([3]),
        "S4": ten([1, 2]),
        "S5": ten([2, 3]),
        "S6": ten([1, 3]),
        "S7": s7,
        "S8": s8,
    }


@dataclass(frozen=True)
class BundlingRow:
    scenario: str
    comparison: Comparison
    result: ScenarioResult


def sweep_bundling(
    scenarios: Mapping[str, Mapping[int, Sequence[float]]] | Sequence[str],
    config: RunConfig,
    baseline: Optional[ScenarioResult] = None,
    jobs: int = 1,
) -> list[BundlingRow]:
    """Run each order-count override CRN-paired against the baseline."""
    library = bundling_scenarios(config.order_counts)
    if not isinstance(scenarios, Mapping):
        unknown = [s for s in scenarios if s not in library]
        if unknown:
            raise UnknownScenarioError(f"scenario: unknown bundling scenario {unknown[0]!r}")
        scenarios = {s: library[s] for s in scenarios}
    base_cfg = config.with_scenario(order_profile_override=None)
    if baseline is None:
        baseline = run_scenario(base_cfg, "baseline", jobs)
    rows = []
    for name, override in scenarios.items():
        for e, row in override.items():
            if abs(math.fsum(row) - 1.0) > 1e-9:
                raise ValidationError(f"scenario {name}: ESI {e} order pmf sums to {math.fsum(row):g}")
        merged = {e: tuple(override.get(e, config.order_counts[e])) for e in ESI_LEVELS}
        if all(merged[e] == tuple(config.order_counts[e]) for e in ESI_LEVELS):
            res = baseline
        else:
            res = run_scenario(base_cfg.with_scenario(order_profile_override=merged), name, jobs)
        rows.append(BundlingRow(name, compare(name, baseline, res), res))
        log.info("bundling %s: %+.2f%%", name, rows[-1].comparison.pct_change)
    return rows


# -- calibration ---------------------------------------------------------------

Knob = Callable[[RunConfig, float], RunConfig]


def _scale_map(m: Mapping[int, float], factor: float, only: Optional[int] = None) -> dict[int, float]:
    return {e: v * factor if only is None or e == only else v for e, v in m.items()}


def knob(name: str) -> Knob:
    """Scale multipliers the calibration search can turn.

    ``imaging``, ``departure``, ``admit_delay``, ``charting`` act on every ESI;
    ``imaging.esiN`` and ``departure.esiN`` act on one level.
    """
    rep = dataclasses.replace
    base, _, esi_part = name.partition(".esi")
    only = int(esi_part) if esi_part else None
    if base == "imaging":
        return lambda c, f: rep(c, imaging=rep(c.imaging, esi_scale=_scale_map(c.imaging.esi_scale, f, only)))
    if base == "departure":
        return lambda c, f: rep(
            c, disposition=rep(c.disposition, esi_scale=_scale_map(c.disposition.esi_scale, f, only))
        )
    if base == "admit_delay" and only is None:
        return lambda c, f: rep(c, disposition=rep(c.disposition, admit_delay=c.disposition.admit_delay.scaled(f)))
    if base == "charting" and only is None:
        return lambda c, f: rep(c, charting=c.charting.scaled(f))
    raise ValueError(f"unknown calibration knob {name!r}")


@dataclass(frozen=True)
class CalibrationResult:
    config: RunConfig
    knobs: dict[str, float]
    means: dict[int, float]
    errors: dict[int, float]
    evaluations: int
    improvements: int

    @property
    def max_error(self) -> float:
        return max(self.errors.values())


def _knob_target(name: str) -> Optional[int]:
    _, _, esi_part = name.partition(".esi")
    return int(esi_part) if esi_part else None


def calibrate(
    targets: Mapping[int, float],
    knobs: Mapping[str, tuple[float, float]],
    config: RunConfig,
    replications: Optional[int] = None,
    rounds: int = 20,
    bisection_steps: int = 8,
    tolerance: float = 0.0,
    fail_above: float = 0.10,
    jobs: int = 1,
) -> CalibrationResult:
    """Cyclic coordinate search over scale knobs, one bisection per knob.

    The objective is the largest relative per-ESI error against ``targets``.
    Per-ESI knobs bisect on their own level's signed error, global knobs on
    the patient-weighted overall error. Each candidate is evaluated with the
    same replication seeds, so comparisons between candidates are paired.
    Search stops once the objective is at or below ``tolerance``.
    """
    if any(t <= 0 for t in targets.values()):
        raise ValueError("targets must be positive")
    reps = replications or config.replication.count
    cfg0 = config.with_replication(count=reps)
    knob_fns = {k: knob(k) for k in knobs}
    weights = dict(config.esi_mix)
    evaluations = 0

    def evaluate(values: Mapping[str, float]):
        nonlocal evaluations
        cfg = cfg0
        for k, v in values.items():
            cfg = knob_fns[k](cfg, v)
        evaluations += 1
        res = run_scenario(cfg, "calibration", jobs)
        means = {e: res.per_esi[e].mean for e in targets}
        errs = {e: abs(means[e] - targets[e]) / targets[e] for e in targets}
        return cfg, means, errs

    values = {k: 1.0 for k in knobs}
    cfg, means, errs = evaluate(values)
    best = (max(errs.values()), dict(values), cfg, means, errs)
    improvements = 0

    def signed(m: Mapping[int, float], target_esi: Optional[int]) -> float:
        if target_esi is not None:
            return m[target_esi] - targets[target_esi]
        w = sum(weights[e] for e in targets)
        return sum(weights[e] * (m[e] - targets[e]) for e in targets) / w

    for rnd in range(rounds):
        if best[0] <= tolerance:
            break
        before = best[0]
        for name, (lo, hi) in knobs.items():
            if best[0] <= tolerance:
                break
            target_esi = _knob_target(name)
            a, b = lo, hi
            # the knob settles where its own target error is smallest
            own = (abs(signed(means, target_esi)), values[name])
            for _ in range(bisection_steps):
                mid = 0.5 * (a + b)
                trial = dict(values)
                trial[name] = mid
                cfg_t, means_t, errs_t = evaluate(trial)
                if max(errs_t.values()) < best[0]:
                    best = (max(errs_t.values()), trial, cfg_t, means_t, errs_t)
                    improvements += 1
                err = signed(means_t, target_esi)
                if abs(err) < own[0]:
                    own = (abs(err), mid)
                    means = means_t
                # every knob raises time in ED when turned up
                if err > 0:
                    b = mid
                else:
                    a = mid
            values[name] = own[1]
        log.info(
            "calibration round %d: max error %.4f, knobs %s, means %s",
            rnd + 1, best[0], {k: round(v, 4) for k, v in best[1].items()}, {e: round(v, 1) for e, v in best[3].items()},
        )
        if best[0] >= before:
            break

    result = CalibrationResult(best[2], best[1], best[3], best[4], evaluations, improvements)
    if result.max_error > fail_above:
        raise CalibrationFailure(f"max relative error {result.max_error:.3f} above {fail_above}", result)
    return result
