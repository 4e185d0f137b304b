import pytest
from hypothesis import given, settings, strategies as st

from edflow.config import (
    INTERACTIONS_PER_ESI,
    ParseError,
    ValidationError,
    config_from_dict,
    config_to_dict,
    default_config,
    emit_config,
    emit_defaults,
    parse_config,
)


def test_empty_config_gives_table_constants():
    cfg = parse_config("")
    assert cfg == default_config()
    assert cfg.esi_mix == {1: 0.031, 2: 0.235, 3: 0.472, 4: 0.228, 5: 0.034}
    assert cfg.order_counts[1] == pytest.approx((0.093, 0.633, 0.222, 0.052))
    assert cfg.order_counts[2] == pytest.approx((0.318, 0.520, 0.133, 0.029))
    assert cfg.order_counts[3] == pytest.approx([p / 1.001 for p in (0.360, 0.520, 0.100, 0.021)])
    assert cfg.order_counts[4] == pytest.approx([p / 0.996 for p in (0.628, 0.340, 0.028, 0.0)])
    assert cfg.order_counts[5] == pytest.approx((0.943, 0.057, 0.0, 0.0))
    assert cfg.interactions[2][1].as_tuple() == (15, 16, 17)
    assert cfg.interactions[1][3].as_tuple() == (2, 3, 4)
    assert {e: len(r) for e, r in cfg.interactions.items()} == INTERACTIONS_PER_ESI
    assert cfg.targets == {1: 149, 2: 261, 3: 228, 4: 106, 5: 122}
    assert cfg.replication.horizon == 30240 and cfg.replication.warmup == 2880
    assert cfg.replication.count == 60


def test_order_rows_sum_to_one():
    for row in default_config().order_counts.values():
        assert sum(row) == pytest.approx(1.0, abs=1e-9)


def test_round_trip_defaults():
    assert parse_config(emit_defaults()) == default_config()


def test_round_trip_modified():
    cfg = parse_config("imaging:\n  order_to_begin: [1, 2, 3]\nreplication:\n  seed: 7\n")
    assert parse_config(emit_config(cfg)) == cfg
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_row_summing_to_point_nine():
    with pytest.raises(ValidationError, match=r"order_counts\.3"):
        parse_config("order_counts:\n  3: [0.3, 0.5, 0.1, 0.0]\n")


def test_mode_exceeds_max():
    with pytest.raises(ValidationError, match="mode 17.* exceeds max 16"):
        parse_config("triage: [15, 17, 16]\n")


def test_unknown_key_rejected():
    with pytest.raises(ValidationError, match="imaging.order_to_start: unknown key"):
        parse_config("imaging:\n  order_to_start: [1, 2, 3]\n")
    with pytest.raises(ValidationError, match="unknown key"):
        parse_config("bogus: 1\n")


def test_syntax_error_is_parse_error():
    with pytest.raises(ParseError):
        parse_config("imaging: [1, 2\n")


def test_parse_from_path(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("trauma_bypass: 0.25\n")
    assert parse_config(p).trauma_bypass == 0.25
    assert parse_config(str(p)).trauma_bypass == 0.25


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        parse_config(tmp_path / "nope.yaml")


def test_interaction_count_enforced():
    with pytest.raises(ValidationError, match="interactions.5"):
        parse_config("interactions:\n  5: [[1, 2, 3], [1, 2, 3], [1, 2, 3]]\n")


def test_more_orders_than_evaluations_rejected():
    with pytest.raises(ValidationError, match="order_counts.4"):
        parse_config("order_counts:\n  4: [0.5, 0.3, 0.1, 0.1]\n")


def test_low_severity_pod_cannot_take_esi1():
    doc = config_to_dict(default_config())
    doc["layout"]["pods"][2]["accepts"] = [1, 3, 4, 5]
    with pytest.raises(ValidationError, match="high-severity"):
        config_from_dict(doc)


def test_staffing_gap_rejected():
    doc = config_to_dict(default_config())
    doc["shifts"] = [s for s in doc["shifts"] if not (s["pod"] == 2 and s["start"] == 23)]
    with pytest.raises(ValidationError, match="pod 2 has no physician during hour 0"):
        config_from_dict(doc)


def test_scenario_bounds():
    with pytest.raises(ValidationError, match="scenario.r_otb"):
        parse_config("scenario:\n  r_otb: 1.5\n")


def test_override_rows_validated():
    cfg = parse_config("scenario:\n  order_profile_override:\n    3: [0.46, 0.42, 0.1, 0.02]\n")
    assert cfg.order_count_dist(3).probs == pytest.approx((0.46, 0.42, 0.1, 0.02))
    assert cfg.order_count_dist(2).probs == cfg.order_counts[2]


def test_replication_count_at_least_two():
    with pytest.raises(ValidationError, match="replication.count"):
        parse_config("replication:\n  count: 1\n")


@settings(max_examples=30, deadline=None)
@given(
    st.floats(0, 1),
    st.integers(0, 2**63),
    st.floats(1, 50),
)
def test_round_trip_property(bypass, seed, mode):
    cfg = default_config()
    doc = config_to_dict(cfg)
    doc["trauma_bypass"] = bypass
    doc["replication"]["seed"] = seed
    doc["charting"] = [0.0, mode, 60.0]
    cfg = config_from_dict(doc)
    assert parse_config(emit_config(cfg)) == cfg
