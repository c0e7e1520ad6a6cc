"""Distribution specifications and seeded, keyed random streams.

All simulated time is in hours. Every stream is fully determined by the
pair (master_seed, stream_key), so two runs with the same seed draw the
same sequences regardless of what other streams exist.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class Exponential:
    """Negative-exponential inter-event times; rate in events per hour."""

    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"Exponential rate must be > 0, got {self.rate}")


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"Uniform needs lo <= hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Range:
    """Staff-estimated duration range, sampled uniformly over [lo, hi] hours."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"Range needs lo <= hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Bernoulli p must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class Constant:
    v: float


@dataclass(frozen=True)
class Empirical:
    """Discrete distribution over (value, weight) pairs."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError("Empirical needs at least one (value, weight) pair")
        if any(w <= 0 for _, w in self.points):
            raise ValueError("Empirical weights must be positive")


@dataclass(frozen=True)
class Computed:
    """Duration computed at sampling time by a model-registered function.

    The function receives the local resource bundle at the instruction's
    location, the merged parameters, and the instance bindings.  Needed for
    durations that depend on simulation state (e.g. congestion-scaled
    network transfers), which no closed-form distribution can express.
    """

    fn_name: str
    params: Mapping[str, object] = field(default_factory=dict)


DistributionSpec = (
    Exponential | Uniform | Range | Bernoulli | Constant | Empirical | Computed
)

DurationFn = Callable[..., float]


class RngStream:
    """One named random stream under a master seed.

    Distinct stream keys give independent sequences; the mapping from
    (master_seed, key) to the underlying generator seed goes through
    SHA-256 so keys cannot collide by arithmetic accident.
    """

    def __init__(self, master_seed: int, stream_key: str):
        self.master_seed = int(master_seed)
        self.stream_key = stream_key
        digest = hashlib.sha256(
            f"{self.master_seed}\x1f{stream_key}".encode()
        ).digest()
        self._gen = np.random.Generator(
            np.random.PCG64(int.from_bytes(digest[:16], "little"))
        )

    def uniform01(self) -> float:
        return float(self._gen.random())

    def positive_uniform01(self) -> float:
        # open-interval variate for inverse transforms; rejects the exact 0.0
        u = float(self._gen.random())
        while u == 0.0:
            u = float(self._gen.random())
        return u


def sample(d: DistributionSpec, s: RngStream) -> float:
    """Draw one variate from d, advancing the stream."""
    if isinstance(d, Constant):
        return float(d.v)
    if isinstance(d, Exponential):
        return -math.log(s.positive_uniform01()) / d.rate
    if isinstance(d, (Uniform, Range)):
        return d.lo + (d.hi - d.lo) * s.uniform01()
    if isinstance(d, Bernoulli):
        if d.p <= 0.0:
            return 0.0
        if d.p >= 1.0:
            return 1.0
        return 1.0 if s.uniform01() < d.p else 0.0
    if isinstance(d, Empirical):
        total = sum(w for _, w in d.points)
        u = s.uniform01() * total
        acc = 0.0
        for value, weight in d.points:
            acc += weight
            if u < acc:
                return float(value)
        return float(d.points[-1][0])
    if isinstance(d, Computed):
        raise TypeError(
            "Computed durations are resolved by the engine, not sampled directly"
        )
    raise TypeError(f"not a DistributionSpec: {d!r}")


def spec_to_doc(d: DistributionSpec) -> dict:
    if isinstance(d, Exponential):
        return {"dist": "exponential", "rate": d.rate}
    if isinstance(d, Uniform):
        return {"dist": "uniform", "lo": d.lo, "hi": d.hi}
    if isinstance(d, Range):
        return {"dist": "range", "lo": d.lo, "hi": d.hi}
    if isinstance(d, Bernoulli):
        return {"dist": "bernoulli", "p": d.p}
    if isinstance(d, Constant):
        return {"dist": "constant", "v": d.v}
    if isinstance(d, Empirical):
        return {"dist": "empirical", "points": [list(p) for p in d.points]}
    if isinstance(d, Computed):
        return {"dist": "computed", "fn": d.fn_name, "params": dict(d.params)}
    raise TypeError(f"not a DistributionSpec: {d!r}")


def spec_from_doc(doc: Mapping) -> DistributionSpec:
    tag = doc["dist"]
    if tag == "exponential":
        return Exponential(rate=doc["rate"])
    if tag == "uniform":
        return Uniform(lo=doc["lo"], hi=doc["hi"])
    if tag == "range":
        return Range(lo=doc["lo"], hi=doc["hi"])
    if tag == "bernoulli":
        return Bernoulli(p=doc["p"])
    if tag == "constant":
        return Constant(v=doc["v"])
    if tag == "empirical":
        return Empirical(points=tuple((float(v), float(w)) for v, w in doc["points"]))
    if tag == "computed":
        return Computed(fn_name=doc["fn"], params=dict(doc.get("params", {})))
    raise ValueError(f"unknown distribution tag {tag!r}")
