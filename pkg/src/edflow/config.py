"""Run configuration: defaults, YAML parsing and validation.

Every constant of the model lives in a :class:`RunConfig`. ``default_config()``
returns the shipped, calibrated values; ``parse_config`` overlays a YAML
document on top of them and rejects anything it does not recognise.
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .stochastic import ArrivalProfile, CategoricalDist, TriangularDist, default_rate_matrix

ESI_LEVELS = (1, 2, 3, 4, 5)
INTERACTIONS_PER_ESI = {1: 4, 2: 3, 3: 3, 4: 2, 5: 2}
PMF_TOLERANCE = 0.01


class ConfigError(Exception):
    exit_code = 1


class ParseError(ConfigError):
    exit_code = 3


class ValidationError(ConfigError):
    exit_code = 4


@dataclass(frozen=True)
class ImagingParams:
    order_to_begin: TriangularDist
    begin_to_end: TriangularDist
    end_to_read: TriangularDist
    # multiplier on all three intervals, per ESI
    esi_scale: Mapping[int, float]


@dataclass(frozen=True)
class PodSpec:
    id: int
    beds: int
    accepts: tuple[int, ...]
    high_severity: bool = True

    @property
    def trauma_capable(self) -> bool:
        return 1 in self.accepts


@dataclass(frozen=True)
class ShiftSpec:
    pod: int
    start: float  # hour of day
    end: float  # hour of day; <= start means the next day
    physicians: int = 1

    @property
    def length_hours(self) -> float:
        return (self.end - self.start) % 24 or 24.0


@dataclass(frozen=True)
class DispositionParams:
    admit_probability: Mapping[int, float]
    transfer_probability: Mapping[int, float]
    admit_delay: TriangularDist
    discharge_delay: TriangularDist
    esi_scale: Mapping[int, float]


@dataclass(frozen=True)
class ScenarioSpec:
    r_otb: float = 0.0
    r_etr: float = 0.0
    order_profile_override: Optional[Mapping[int, tuple[float, ...]]] = None


@dataclass(frozen=True)
class ReplicationSpec:
    count: int = 60
    horizon: float = 21 * 1440.0
    warmup: float = 2 * 1440.0
    # extra simulated time so patients seated near the end can finish
    drain: float = 1440.0
    seed: int = 20230101


@dataclass(frozen=True)
class RunConfig:
    arrival_rates: tuple[tuple[float, ...], ...]
    esi_mix: Mapping[int, float]
    order_counts: Mapping[int, tuple[float, ...]]
    image_counts: Mapping[int, float]
    interactions: Mapping[int, tuple[TriangularDist, ...]]
    triage: TriangularDist
    charting: TriangularDist
    imaging: ImagingParams
    pods: tuple[PodSpec, ...]
    trauma_bays: int
    trauma_pod: int
    shifts: tuple[ShiftSpec, ...]
    disposition: DispositionParams
    trauma_bypass: float
    chain_probability: float
    handoff_minutes: float
    order_separation: float
    targets: Mapping[int, float]
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    replication: ReplicationSpec = field(default_factory=ReplicationSpec)

    def arrival_profile(self) -> ArrivalProfile:
        return ArrivalProfile(self.arrival_rates)

    def esi_dist(self) -> CategoricalDist:
        return CategoricalDist.normalized(ESI_LEVELS, [self.esi_mix[e] for e in ESI_LEVELS])

    def order_count_dist(self, esi: int) -> CategoricalDist:
        override = self.scenario.order_profile_override
        row = override[esi] if override and esi in override else self.order_counts[esi]
        return CategoricalDist.normalized(range(len(row)), row)

    def image_count_dist(self) -> CategoricalDist:
        labels = sorted(self.image_counts)
        return CategoricalDist.normalized(labels, [self.image_counts[k] for k in labels])

    def with_scenario(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, scenario=dataclasses.replace(self.scenario, **changes))

    def with_replication(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, replication=dataclasses.replace(self.replication, **changes))


# Defaults as a plain document. parse_config overlays user YAML on a deep copy
# of this, so it doubles as the schema of allowed keys.
_TABLE3 = {
    1: [[13, 14, 15], [8, 9, 10], [8, 9, 10], [2, 3, 4]],
    2: [[9, 10, 11], [15, 16, 17], [7, 8, 9]],
    3: [[8, 9, 10], [14, 15, 16], [7, 8, 9]],
    4: [[10, 11, 12], [5, 6, 7]],
    5: [[10, 11, 12], [6, 7, 8]],
}

DEFAULTS: dict[str, Any] = {
    "arrival_rates": default_rate_matrix(),
    "esi_mix": {1: 0.031, 2: 0.235, 3: 0.472, 4: 0.228, 5: 0.034},
    # order-count pmf over 0, 1, 2, 3 orders; rows are renormalized
    "order_counts": {
        1: [0.093, 0.633, 0.222, 0.052],
        2: [0.318, 0.520, 0.133, 0.029],
        3: [0.360, 0.520, 0.100, 0.021],
        4: [0.628, 0.340, 0.028, 0.0],
        5: [0.943, 0.057, 0.0, 0.0],
    },
    "image_counts": {1: 0.70, 2: 0.20, 3: 0.09, 4: 0.01},
    "interactions": _TABLE3,
    "triage": [3, 5, 8],
    "charting": [4, 6, 9],
    "imaging": {
        "order_to_begin": [10, 25, 55],
        "begin_to_end": [5, 15, 34],
        "end_to_read": [5, 10, 21],
        # per-ESI multiplier on all three intervals
        "esi_scale": {1: 0.5, 2: 3.0, 3: 3.1, 4: 1.5, 5: 1.5},
    },
    "layout": {
        "pods": [
            {"id": 1, "beds": 12, "accepts": [1, 2, 3, 4, 5], "high_severity": True},
            {"id": 2, "beds": 12, "accepts": [1, 2, 3, 4, 5], "high_severity": True},
            {"id": 3, "beds": 12, "accepts": [3, 4, 5], "high_severity": False},
            {"id": 4, "beds": 12, "accepts": [3, 4, 5], "high_severity": False},
        ],
        "trauma_bays": 2,
        "trauma_pod": 1,
    },
    "shifts": [
        {"pod": pod, "start": start, "end": end, "physicians": 3}
        for pod in (1, 2, 3, 4)
        for start, end in ((7, 16), (15, 24), (23, 8))
    ],
    "disposition": {
        "admit_probability": {1: 0.85, 2: 0.45, 3: 0.30, 4: 0.05, 5: 0.02},
        "transfer_probability": {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0, 5: 0.0},
        "admit_delay": [30, 60, 120],
        "discharge_delay": [10, 20, 40],
        # calibrated against the observed per-ESI means in "targets"
        "esi_scale": {1: 0.762, 2: 0.872, 3: 0.325, 4: 0.378, 5: 2.116},
    },
    "trauma_bypass": 0.5,
    "chain_probability": 0.4,
    "handoff_minutes": 1.0,
    "order_separation": 20.0,
    "targets": {1: 149, 2: 261, 3: 228, 4: 106, 5: 122},
    "scenario": {"r_otb": 0.0, "r_etr": 0.0, "order_profile_override": None},
    "replication": {"count": 60, "horizon": 30240.0, "warmup": 2880.0, "drain": 1440.0, "seed": 20230101},
}

# Mappings keyed by ESI level rather than by fixed field names.
_ESI_KEYED = {
    ("esi_mix",),
    ("order_counts",),
    ("interactions",),
    ("imaging", "esi_scale"),
    ("disposition", "admit_probability"),
    ("disposition", "transfer_probability"),
    ("disposition", "esi_scale"),
    ("targets",),
}


def _fail(path: tuple, msg: str) -> ValidationError:
    key = ".".join(str(p) for p in path) or "<root>"
    return ValidationError(f"{key}: {msg}")


def _esi_key(path: tuple, k) -> int:
    try:
        e = int(k)
    except (TypeError, ValueError):
        raise _fail(path, f"ESI key {k!r} is not an integer") from None
    if e not in ESI_LEVELS:
        raise _fail(path, f"ESI key {k!r} outside 1..5")
    return e


def _merge(base: Any, over: Any, path: tuple = ()) -> Any:
    if over is None:
        return base if path != ("scenario", "order_profile_override") else None
    if path in _ESI_KEYED or path == ("scenario", "order_profile_override"):
        if not isinstance(over, Mapping):
            raise _fail(path, "expected a mapping keyed by ESI level")
        merged = dict(base) if isinstance(base, Mapping) else {}
        for k, v in over.items():
            merged[_esi_key(path, k)] = v
        return merged
    if isinstance(base, Mapping):
        if not isinstance(over, Mapping):
            raise _fail(path, "expected a mapping")
        out = dict(base)
        for k, v in over.items():
            if k not in base:
                raise _fail(path + (k,), "unknown key")
            out[k] = _merge(base[k], v, path + (k,))
        return out
    return over


def _num(path: tuple, v, *, lo=None, hi=None, integer=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _fail(path, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise _fail(path, "must be finite")
    if integer and int(v) != v:
        raise _fail(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise _fail(path, f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise _fail(path, f"must be <= {hi}, got {v}")
    return int(v) if integer else float(v)


def _tria(path: tuple, v) -> TriangularDist:
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise _fail(path, f"triangular distribution must be [min, mode, max], got {v!r}")
    a, c, b = (_num(path, x, lo=0) for x in v)
    if c > b:
        raise _fail(path, f"mode {c} exceeds max {b}")
    if a > c:
        raise _fail(path, f"min {a} exceeds mode {c}")
    if not a < b:
        raise _fail(path, f"min {a} must be below max {b}")
    return TriangularDist(a, c, b)


def _pmf(path: tuple, row) -> tuple[float, ...]:
    if not isinstance(row, (list, tuple)) or not row:
        raise _fail(path, f"expected a list of probabilities, got {row!r}")
    ps = [_num(path, p, lo=0, hi=1) for p in row]
    total = math.fsum(ps)
    if abs(total - 1.0) > PMF_TOLERANCE:
        raise _fail(path, f"probabilities sum to {total:g}, expected 1")
    if abs(total - 1.0) < 1e-12:
        return tuple(ps)
    return tuple(p / total for p in ps)


def _esi_map(path: tuple, m, conv) -> dict[int, Any]:
    missing = [e for e in ESI_LEVELS if e not in m]
    if missing:
        raise _fail(path, f"missing ESI levels {missing}")
    return {e: conv(path + (e,), m[e]) for e in ESI_LEVELS}


def _order_rows(path: tuple, m: Mapping) -> dict[int, tuple[float, ...]]:
    rows = {}
    for e, row in m.items():
        pmf = _pmf(path + (e,), row)
        limit = INTERACTIONS_PER_ESI[e]
        if any(p > 0 for p in pmf[limit + 1:]):
            raise _fail(path + (e,), f"ESI {e} has {limit} evaluations, cannot release more orders")
        rows[e] = pmf
    return rows


def config_from_dict(doc: Optional[Mapping]) -> RunConfig:
    """Validate a (possibly partial) document and build a RunConfig."""
    if doc is None:
        doc = {}
    if not isinstance(doc, Mapping):
        raise ValidationError("<root>: config must be a mapping")
    d = _merge(copy.deepcopy(DEFAULTS), doc)

    rates = d["arrival_rates"]
    if not isinstance(rates, list) or len(rates) != 7 or any(
        not isinstance(r, list) or len(r) != 24 for r in rates
    ):
        raise _fail(("arrival_rates",), "expected 7 rows of 24 hourly rates")
    rates = tuple(
        tuple(_num(("arrival_rates", i, h), r, lo=0) for h, r in enumerate(row)) for i, row in enumerate(rates)
    )
    if max(max(row) for row in rates) <= 0:
        raise _fail(("arrival_rates",), "at least one hourly rate must be positive")

    esi_mix = _esi_map(("esi_mix",), d["esi_mix"], lambda p, v: _num(p, v, lo=0, hi=1))
    if abs(math.fsum(esi_mix.values()) - 1.0) > PMF_TOLERANCE:
        raise _fail(("esi_mix",), f"probabilities sum to {math.fsum(esi_mix.values()):g}, expected 1")

    order_counts = _order_rows(("order_counts",), _esi_map(("order_counts",), d["order_counts"], lambda p, v: v))

    ic = d["image_counts"]
    if not isinstance(ic, Mapping) or not ic:
        raise _fail(("image_counts",), "expected a mapping of image count -> probability")
    image_counts = {}
    for k, v in ic.items():
        n = _num(("image_counts", k), k, lo=1, integer=True)
        image_counts[n] = _num(("image_counts", k), v, lo=0, hi=1)
    if abs(math.fsum(image_counts.values()) - 1.0) > PMF_TOLERANCE:
        raise _fail(("image_counts",), "probabilities must sum to 1")

    def _interaction_row(path, row):
        e = path[-1]
        if not isinstance(row, list) or len(row) != INTERACTIONS_PER_ESI[e]:
            raise _fail(path, f"ESI {e} needs {INTERACTIONS_PER_ESI[e]} triangular distributions")
        return tuple(_tria(path + (k + 1,), t) for k, t in enumerate(row))

    interactions = _esi_map(("interactions",), d["interactions"], _interaction_row)

    im = d["imaging"]
    imaging = ImagingParams(
        order_to_begin=_tria(("imaging", "order_to_begin"), im["order_to_begin"]),
        begin_to_end=_tria(("imaging", "begin_to_end"), im["begin_to_end"]),
        end_to_read=_tria(("imaging", "end_to_read"), im["end_to_read"]),
        esi_scale=_esi_map(("imaging", "esi_scale"), im["esi_scale"], lambda p, v: _num(p, v, lo=0)),
    )

    lay = d["layout"]
    if not isinstance(lay["pods"], list) or not lay["pods"]:
        raise _fail(("layout", "pods"), "expected a non-empty list of pods")
    pods = []
    for i, pd in enumerate(lay["pods"]):
        path = ("layout", "pods", i)
        if not isinstance(pd, Mapping):
            raise _fail(path, "expected a mapping")
        extra = set(pd) - {"id", "beds", "accepts", "high_severity"}
        if extra:
            raise _fail(path + (sorted(extra)[0],), "unknown key")
        pid = _num(path + ("id",), pd.get("id"), lo=1, integer=True)
        beds = _num(path + ("beds",), pd.get("beds"), lo=0, integer=True)
        acc = pd.get("accepts", list(ESI_LEVELS))
        if not isinstance(acc, list) or not acc:
            raise _fail(path + ("accepts",), "expected a non-empty list of ESI levels")
        accepts = tuple(sorted({_esi_key(path + ("accepts",), a) for a in acc}))
        hs = pd.get("high_severity", True)
        if not isinstance(hs, bool):
            raise _fail(path + ("high_severity",), "expected true/false")
        if not hs and any(a <= 2 for a in accepts):
            raise _fail(path + ("accepts",), "pod without high-severity physicians cannot accept ESI 1-2")
        pods.append(PodSpec(pid, beds, accepts, hs))
    if len({p.id for p in pods}) != len(pods):
        raise _fail(("layout", "pods"), "duplicate pod id")
    pod_ids = {p.id for p in pods}
    for e in ESI_LEVELS:
        if not any(e in p.accepts and p.beds > 0 for p in pods):
            raise _fail(("layout", "pods"), f"no pod accepts ESI {e}")
    trauma_bays = _num(("layout", "trauma_bays"), lay["trauma_bays"], lo=0, integer=True)
    trauma_pod = _num(("layout", "trauma_pod"), lay["trauma_pod"], integer=True)
    if trauma_pod not in pod_ids or not next(p for p in pods if p.id == trauma_pod).high_severity:
        raise _fail(("layout", "trauma_pod"), "must name a pod with high-severity physicians")

    if not isinstance(d["shifts"], list) or not d["shifts"]:
        raise _fail(("shifts",), "expected a non-empty list of shifts")
    shifts = []
    for i, sh in enumerate(d["shifts"]):
        path = ("shifts", i)
        if not isinstance(sh, Mapping):
            raise _fail(path, "expected a mapping")
        extra = set(sh) - {"pod", "start", "end", "physicians"}
        if extra:
            raise _fail(path + (sorted(extra)[0],), "unknown key")
        pod = _num(path + ("pod",), sh.get("pod"), integer=True)
        if pod not in pod_ids:
            raise _fail(path + ("pod",), f"unknown pod {pod}")
        shifts.append(
            ShiftSpec(
                pod,
                _num(path + ("start",), sh.get("start"), lo=0, hi=24),
                _num(path + ("end",), sh.get("end"), lo=0, hi=24),
                _num(path + ("physicians",), sh.get("physicians", 1), lo=1, integer=True),
            )
        )
    _check_coverage(pods, shifts)

    di = d["disposition"]
    prob = lambda p, v: _num(p, v, lo=0, hi=1)  # noqa: E731
    disposition = DispositionParams(
        admit_probability=_esi_map(("disposition", "admit_probability"), di["admit_probability"], prob),
        transfer_probability=_esi_map(("disposition", "transfer_probability"), di["transfer_probability"], prob),
        admit_delay=_tria(("disposition", "admit_delay"), di["admit_delay"]),
        discharge_delay=_tria(("disposition", "discharge_delay"), di["discharge_delay"]),
        esi_scale=_esi_map(("disposition", "esi_scale"), di["esi_scale"], lambda p, v: _num(p, v, lo=0)),
    )
    for e in ESI_LEVELS:
        if disposition.admit_probability[e] + disposition.transfer_probability[e] > 1 + 1e-12:
            raise _fail(("disposition", "transfer_probability", e), "admit + transfer probability exceeds 1")

    sc = d["scenario"]
    override = sc["order_profile_override"]
    if override is not None:
        override = _order_rows(("scenario", "order_profile_override"), override)
    scenario = ScenarioSpec(
        r_otb=_num(("scenario", "r_otb"), sc["r_otb"], lo=0, hi=1),
        r_etr=_num(("scenario", "r_etr"), sc["r_etr"], lo=0, hi=1),
        order_profile_override=override,
    )

    rp = d["replication"]
    replication = ReplicationSpec(
        count=_num(("replication", "count"), rp["count"], lo=2, integer=True),
        horizon=_num(("replication", "horizon"), rp["horizon"], lo=0),
        warmup=_num(("replication", "warmup"), rp["warmup"], lo=0),
        drain=_num(("replication", "drain"), rp["drain"], lo=0),
        seed=_num(("replication", "seed"), rp["seed"], lo=0, hi=2**64 - 1, integer=True),
    )
    if replication.horizon <= 0:
        raise _fail(("replication", "horizon"), "must be positive")

    return RunConfig(
        arrival_rates=rates,
        esi_mix=esi_mix,
        order_counts=order_counts,
        image_counts=image_counts,
        interactions=interactions,
        triage=_tria(("triage",), d["triage"]),
        charting=_tria(("charting",), d["charting"]),
        imaging=imaging,
        pods=tuple(pods),
        trauma_bays=trauma_bays,
        trauma_pod=trauma_pod,
        shifts=tuple(shifts),
        disposition=disposition,
        trauma_bypass=_num(("trauma_bypass",), d["trauma_bypass"], lo=0, hi=1),
        chain_probability=_num(("chain_probability",), d["chain_probability"], lo=0, hi=1),
        handoff_minutes=_num(("handoff_minutes",), d["handoff_minutes"], lo=0),
        order_separation=_num(("order_separation",), d["order_separation"], lo=0),
        targets=_esi_map(("targets",), d["targets"], lambda p, v: _num(p, v, lo=0)),
        scenario=scenario,
        replication=replication,
    )


def _check_coverage(pods, shifts) -> None:
    """Every pod with beds must have a physician on duty at every hour."""
    for pod in pods:
        if pod.beds == 0:
            continue
        hours = [0] * 24
        for sh in shifts:
            if sh.pod != pod.id:
                continue
            h = sh.start
            for _ in range(int(math.ceil(sh.length_hours))):
                hours[int(h) % 24] += 1
                h += 1
        gaps = [h for h, n in enumerate(hours) if n == 0]
        if gaps:
            raise _fail(("shifts",), f"pod {pod.id} has no physician during hour {gaps[0]}")


def config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    """Inverse of :func:`config_from_dict` (order-count rows come out normalized)."""

    def t(dist: TriangularDist) -> list[float]:
        return list(dist.as_tuple())

    sc = cfg.scenario
    return {
        "arrival_rates": [list(row) for row in cfg.arrival_rates],
        "esi_mix": dict(cfg.esi_mix),
        "order_counts": {e: list(r) for e, r in cfg.order_counts.items()},
        "image_counts": dict(cfg.image_counts),
        "interactions": {e: [t(x) for x in row] for e, row in cfg.interactions.items()},
        "triage": t(cfg.triage),
        "charting": t(cfg.charting),
        "imaging": {
            "order_to_begin": t(cfg.imaging.order_to_begin),
            "begin_to_end": t(cfg.imaging.begin_to_end),
            "end_to_read": t(cfg.imaging.end_to_read),
            "esi_scale": dict(cfg.imaging.esi_scale),
        },
        "layout": {
            "pods": [
                {"id": p.id, "beds": p.beds, "accepts": list(p.accepts), "high_severity": p.high_severity}
                for p in cfg.pods
            ],
            "trauma_bays": cfg.trauma_bays,
            "trauma_pod": cfg.trauma_pod,
        },
        "shifts": [
            {"pod": s.pod, "start": s.start, "end": s.end, "physicians": s.physicians} for s in cfg.shifts
        ],
        "disposition": {
            "admit_probability": dict(cfg.disposition.admit_probability),
            "transfer_probability": dict(cfg.disposition.transfer_probability),
            "admit_delay": t(cfg.disposition.admit_delay),
            "discharge_delay": t(cfg.disposition.discharge_delay),
            "esi_scale": dict(cfg.disposition.esi_scale),
        },
        "trauma_bypass": cfg.trauma_bypass,
        "chain_probability": cfg.chain_probability,
        "handoff_minutes": cfg.handoff_minutes,
        "order_separation": cfg.order_separation,
        "targets": dict(cfg.targets),
        "scenario": {
            "r_otb": sc.r_otb,
            "r_etr": sc.r_etr,
            "order_profile_override": None
            if sc.order_profile_override is None
            else {e: list(r) for e, r in sc.order_profile_override.items()},
        },
        "replication": dataclasses.asdict(cfg.replication),
    }


def parse_config(source: str | Path | None = None) -> RunConfig:
    """Parse YAML text, or a path to a YAML file. ``None`` gives the defaults."""
    if source is None:
        return config_from_dict({})
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read {source}: {exc}") from exc
    else:
        text = source
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"YAML syntax error: {exc}") from exc
    return config_from_dict(doc)


def emit_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None, width=120)


def default_config() -> RunConfig:
    return config_from_dict({})


def emit_defaults() -> str:
    return emit_config(default_config())
