import math

import pytest

from edflow.config import ESI_LEVELS, ValidationError, default_config
from edflow.model import EDModel
from edflow.scenarios import (
    CalibrationFailure,
    UnknownScenarioError,
    aggregate,
    bundling_scenarios,
    calibrate,
    compare,
    run_replication,
    run_replications,
    run_scenario,
    shift_mass,
    summarize,
    sweep_bundling,
    sweep_delays,
)


def small(count=3, **kw):
    rp = dict(count=count, horizon=2 * 1440.0, warmup=720.0, drain=1440.0, seed=7)
    rp.update(kw)
    return default_config().with_replication(**rp)


@pytest.fixture(scope="module")
def base():
    return run_scenario(small(), "baseline")


def test_replication_deterministic():
    assert run_replication(small(), 1) == run_replication(small(), 1)


def test_replication_seed_sensitive():
    assert run_replication(small(), 1) != run_replication(small(seed=8), 1)


def test_parallel_matches_serial():
    cfg = small()
    assert run_replications(cfg, [0, 1], jobs=2) == run_replications(cfg, [0, 1], jobs=1)


def test_warmup_truncation_and_weighting():
    cfg = small()
    m = EDModel(cfg, 0).run()
    s = summarize(m)
    assert all(r.bed_assigned >= cfg.replication.warmup for r in m.records)
    assert sum(s.counts.values()) == len(m.records)
    direct = sum(r.time_in_ed for r in m.records) / len(m.records)
    weighted = sum(s.mean_time_in_ed[e] * s.counts[e] for e in ESI_LEVELS) / sum(s.counts.values())
    assert s.overall_mean == pytest.approx(direct) == pytest.approx(weighted)
    assert s.mean_bed_to_disposition + s.mean_disposition_to_departure == pytest.approx(s.overall_mean)


def test_scenario_ci_uses_replications(base):
    assert base.overall.n == 3
    assert base.overall.half_width > 0
    assert len(base.replications) == 3


def test_zero_level_is_exact_identity(base):
    rows = sweep_delays([0.0], ["otb", "etr"], small(), baseline=base)
    for r in rows:
        assert r.comparison.pct_reduction == 0.0
        assert r.comparison.paired.p_value == 1.0


def test_explicit_zero_reduction_rerun_matches_baseline(base):
    again = run_scenario(small().with_scenario(r_otb=0.0, r_etr=0.0), "again")
    c = compare("again", base, again)
    assert c.diffs == (0.0, 0.0, 0.0)
    assert c.paired.p_value == 1.0


def test_full_otb_reduction_lowers_time(base):
    (row,) = sweep_delays([1.0], ["otb"], small(), baseline=base)
    assert row.comparison.reduction_min > 0
    assert all(d < 0 for d in row.comparison.diffs)


def test_sweep_validates_inputs():
    with pytest.raises(ValidationError):
        sweep_delays([1.2], ["otb"], small())
    with pytest.raises(ValidationError):
        sweep_delays([0.5], ["sideways"], small())


def test_bundling_baseline_identity(base):
    (row,) = sweep_bundling(["baseline"], small(), baseline=base)
    assert row.comparison.pct_change == 0.0
    assert not row.comparison.paired.significant


def test_bundling_unknown_name():
    with pytest.raises(UnknownScenarioError):
        sweep_bundling(["S9"], small())


def test_bundling_rows_are_pmfs():
    lib = bundling_scenarios(default_config().order_counts)
    assert set(lib) == {"baseline", *(f"S{i}" for i in range(1, 9))}
    for name, over in lib.items():
        for row in over.values():
            assert math.fsum(row) == pytest.approx(1.0)
            assert min(row) >= 0
    base = default_config().order_counts
    # ESI 3 holds just under 10 points of two-order mass; all of it moves
    moved = min(0.10, base[3][2])
    assert lib["S3"][3][1] == pytest.approx(base[3][1] + moved)
    assert lib["S3"][3][2] == pytest.approx(base[3][2] - moved)
    assert lib["S1"][1][1] == pytest.approx(base[1][1] + 0.10)
    assert set(lib["S4"]) == {1, 2} and set(lib["S5"]) == {2, 3} and set(lib["S6"]) == {1, 3}
    for e in (1, 2, 3):
        assert lib["S7"][e][3] == 0.0
        assert lib["S8"][e][2] == lib["S8"][e][3] == 0.0


def test_shift_mass():
    assert shift_mass((0.2, 0.5, 0.3), 2, 1, 0.1) == pytest.approx((0.2, 0.6, 0.2, 0.0))
    assert shift_mass((0.2, 0.5, 0.3, 0.0), 2, 1) == pytest.approx((0.2, 0.8, 0.0, 0.0))
    assert shift_mass((0.9, 0.05, 0.05), 2, 1, 0.1) == pytest.approx((0.9, 0.1, 0.0, 0.0))


def test_user_defined_bundling_mapping(base):
    over = {4: (0.7, 0.3, 0.0, 0.0)}
    (row,) = sweep_bundling({"fewer-esi4": over}, small(), baseline=base)
    assert row.scenario == "fewer-esi4"
    assert row.comparison.reduction_min > 0


def test_aggregate_matches_replications(base):
    again = aggregate("x", base.replications)
    assert again.overall == base.overall


def test_calibrate_identity_when_on_target(base):
    cfg = small()
    targets = {e: base.per_esi[e].mean for e in ESI_LEVELS}
    res = calibrate(targets, {"departure": (0.5, 2.0)}, cfg)
    assert res.knobs == {"departure": 1.0}
    assert res.improvements == 0 and res.evaluations == 1
    assert res.max_error == 0.0


def test_admit_delay_knob_monotone():
    from edflow.scenarios import knob

    cfg = small(count=2)
    lo = run_scenario(cfg)
    hi = run_scenario(knob("admit_delay")(cfg, 2.0))
    for e in (1, 2):
        assert hi.per_esi[e].mean > lo.per_esi[e].mean


def test_calibrate_moves_toward_target(base):
    cfg = small(count=2)
    start = run_scenario(cfg)
    targets = {e: start.per_esi[e].mean for e in ESI_LEVELS}
    targets[4] += 15.0
    res = calibrate(targets, {"departure.esi4": (0.5, 3.0)}, cfg, rounds=2, bisection_steps=6)
    assert res.knobs["departure.esi4"] > 1.0
    assert res.errors[4] < 15.0 / targets[4]


def test_calibration_failure_reports_best():
    cfg = small(count=2)
    with pytest.raises(CalibrationFailure) as info:
        calibrate({e: 10_000.0 for e in ESI_LEVELS}, {"charting": (0.9, 1.1)}, cfg, rounds=1, bisection_steps=1)
    assert info.value.result.max_error > 0.10


def test_unknown_knob():
    with pytest.raises(ValueError):
        calibrate({1: 100.0}, {"nurses": (0.5, 2.0)}, small())
