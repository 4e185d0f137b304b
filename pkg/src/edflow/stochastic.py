"""Random variates: triangular, categorical, thinned arrivals, named streams."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

MINUTES_PER_HOUR = 60.0
MINUTES_PER_DAY = 1440.0
MINUTES_PER_WEEK = 7 * MINUTES_PER_DAY

# Default hourly arrival rates (patients/hour) for a Thursday-like day.
BASE_HOURLY_RATES: tuple[float, ...] = (
    7, 7, 7, 7, 7, 7, 7,  # 00-06
    10, 13, 15, 17, 18,  # 07-11
    18, 18, 18, 18, 18, 18, 18,  # 12-18
    16, 14, 12, 10, 8,  # 19-23
)
# Monday first.
DAY_MULTIPLIERS: tuple[float, ...] = (1.08, 1.04, 1.02, 1.00, 1.00, 0.94, 0.92)


class NoArrivalError(RuntimeError):
    """The arrival profile has no positive rate anywhere."""


@dataclass(frozen=True)
class TriangularDist:
    """TRIA(min, mode, max) in minutes."""

    low: float
    mode: float
    high: float

    def __post_init__(self):
        if not (self.low <= self.mode <= self.high):
            raise ValueError(f"triangular needs min <= mode <= max, got {self.as_tuple()}")
        if not self.low < self.high:
            raise ValueError(f"triangular needs min < max, got {self.as_tuple()}")

    @property
    def mean(self) -> float:
        return (self.low + self.mode + self.high) / 3.0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.low, self.mode, self.high)

    def scaled(self, factor: float) -> "TriangularDist":
        return TriangularDist(self.low * factor, self.mode * factor, self.high * factor)

    def ppf(self, u: float) -> float:
        a, c, b = self.low, self.mode, self.high
        span = b - a
        if u < (c - a) / span:
            x = a + math.sqrt(u * span * (c - a))
        else:
            x = b - math.sqrt((1.0 - u) * span * (b - c))
        # guard against rounding just outside the support
        return a if x < a else (b if x > b else x)

    def cdf(self, x: float) -> float:
        a, c, b = self.low, self.mode, self.high
        if x <= a:
            return 0.0
        if x >= b:
            return 1.0
        if x <= c:
            return (x - a) ** 2 / ((b - a) * (c - a))
        return 1.0 - (b - x) ** 2 / ((b - a) * (b - c))


@dataclass(frozen=True)
class CategoricalDist:
    labels: tuple
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.probs) or not self.labels:
            raise ValueError("labels and probabilities must be non-empty and the same length")
        if any(p < 0 for p in self.probs):
            raise ValueError(f"negative probability in {self.probs}")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        cum, acc = [], 0.0
        for p in self.probs:
            acc += p
            cum.append(acc)
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", tuple(cum))

    @classmethod
    def normalized(cls, labels: Sequence, weights: Sequence[float]) -> "CategoricalDist":
        total = math.fsum(weights)
        if total <= 0:
            raise ValueError("weights must have a positive sum")
        return cls(tuple(labels), tuple(w / total for w in weights))

    def prob(self, label) -> float:
        return self.probs[self.labels.index(label)]

    def ppf(self, u: float):
        """Inverse CDF; a fixed u maps monotonically onto the labels."""
        for label, c in zip(self.labels, self._cum):
            if u < c:
                return label
        return self.labels[-1]


def _name_key(name: Hashable) -> int:
    digest = hashlib.blake2b(str(name).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A named PCG64 stream serving uniforms from a prefetched buffer.

    Prefetching does not change the sequence, it only cuts per-call overhead.
    """

    _BLOCK = 2048

    def __init__(self, name: str, seed: int, *key: int):
        self.name = name
        self.seed = int(seed)
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=(_name_key(name), *key))
        self._gen = np.random.Generator(np.random.PCG64(ss))
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(self._BLOCK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def randoms(self, n: int) -> list[float]:
        end = self._pos + n
        if end > len(self._buf):
            self._buf = self._buf[self._pos:] + self._gen.random(max(self._BLOCK, n)).tolist()
            self._pos, end = 0, n
        out = self._buf[self._pos:end]
        self._pos = end
        return out

    def exponential(self, rate: float) -> float:
        return -math.log(1.0 - self.random()) / rate


def fork_stream(seed: int, name: str, *key: int) -> RngStream:
    """Deterministic stream for (seed, name, key...)."""
    return RngStream(name, seed, *key)


def sample_triangular(dist: TriangularDist, stream: RngStream) -> float:
    return dist.ppf(stream.random())


def sample_categorical(dist: CategoricalDist, stream: RngStream):
    return dist.ppf(stream.random())


def default_rate_matrix() -> list[list[float]]:
    return [[round(r * m, 6) for r in BASE_HOURLY_RATES] for m in DAY_MULTIPLIERS]


class ArrivalProfile:
    """Piecewise-constant weekly rate table, 7 days x 24 hours, patients/hour.

    Simulation time 0 is Monday 00:00.
    """

    def __init__(self, rates: Sequence[Sequence[float]]):
        table = [list(map(float, day)) for day in rates]
        if len(table) != 7 or any(len(day) != 24 for day in table):
            raise ValueError("arrival profile must be 7 rows of 24 hourly rates")
        if any(r < 0 or not math.isfinite(r) for day in table for r in day):
            raise ValueError("arrival rates must be finite and non-negative")
        self.table = table
        self._flat = [r for day in table for r in day]
        self.peak_rate = max(self._flat)

    @classmethod
    def constant(cls, rate: float) -> "ArrivalProfile":
        return cls([[rate] * 24 for _ in range(7)])

    def rate_at(self, t: float) -> float:
        """Rate in patients/hour at simulation minute t."""
        return self._flat[int((t % MINUTES_PER_WEEK) // MINUTES_PER_HOUR)]

    def daily_totals(self) -> list[float]:
        return [sum(day) for day in self.table]

    def next_arrival(self, now: float, stream: RngStream) -> float:
        """Next arrival strictly after ``now``, by thinning at the peak rate."""
        if self.peak_rate <= 0:
            raise NoArrivalError("arrival profile is zero everywhere")
        per_minute = self.peak_rate / MINUTES_PER_HOUR
        t = now
        while True:
            t += stream.exponential(per_minute)
            if stream.random() * self.peak_rate < self.rate_at(t) and t > now:
                return t


def next_arrival(profile: ArrivalProfile, now: float, stream: RngStream) -> float:
    return profile.next_arrival(now, stream)
