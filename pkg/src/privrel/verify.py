"""Independent oracles, synthetic data and end-to-end comparison."""

from __future__ import annotations

import itertools
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from privrel.errors import CapacityError, InputError, PrivrelError, StructureError
from privrel.he.params import DEFAULT_PROFILE
from privrel.inference import LifetimeSample, count_distribution
from privrel.protocol.runner import run_protocol
from privrel.protocol.tables import error_envelope, plaintext_column_sums
from privrel.survsig import (
    All,
    Any_,
    AtLeast,
    Component,
    ComponentType,
    SurvivalCurve,
    SystemStructure,
    check_coherent,
    evaluate_structure,
    survival_curve_oracle,
    survival_signature,
)

log = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 20


# -- exhaustive reliability ------------------------------------------------------------


def brute_force_system_reliability(system: SystemStructure, probabilities: Sequence[float]) -> float:
    """P(system works) by summing over all 2^M component states.

    ``probabilities`` gives one survival probability per component slot, or
    one per type (shared by that type's components).
    """
    M = system.M
    if M > BRUTE_FORCE_LIMIT:
        raise CapacityError(f"{M} components: exhaustive enumeration is capped at {BRUTE_FORCE_LIMIT}")
    p = list(probabilities)
    if len(p) == system.K and system.K != M:
        p = [p[k] for k, m in enumerate(system.multiplicities) for _ in range(m)]
    if len(p) != M:
        raise InputError(f"need {M} component probabilities (or {system.K} per type), got {len(probabilities)}")
    terms = []
    for x in itertools.product((0, 1), repeat=M):
        if evaluate_structure(system, x):
            terms.append(math.prod(pi if xi else 1.0 - pi for pi, xi in zip(p, x)))
    return math.fsum(terms)


# -- synthetic data ---------------------------------------------------------------------


@dataclass(frozen=True)
class WeibullSpec:
    """Lifetimes ~ scale * Weibull(shape); shape 1 is exponential."""

    shape: float
    scale: float
    n: int
    seed: int

    def sample(self) -> LifetimeSample:
        rng = np.random.default_rng(self.seed)
        x = self.scale * rng.weibull(self.shape, self.n)
        # lifetimes must be strictly positive
        x = np.maximum(x, np.finfo(float).tiny)
        return LifetimeSample(tuple(float(v) for v in x))

    def survival(self, t: float) -> float:
        return math.exp(-((t / self.scale) ** self.shape))


# per-type generators for the shipped braking example (C, H, M, P)
BRAKING_DATA = {
    "C": WeibullSpec(1.2, 4.0, 100, 20161),
    "H": WeibullSpec(1.0, 3.0, 100, 20162),
    "M": WeibullSpec(2.0, 5.0, 100, 20163),
    "P": WeibullSpec(1.5, 3.5, 100, 20164),
}


def synthetic_samples(system: SystemStructure, seed: int, n: int = 100) -> dict[int, LifetimeSample]:
    """Random Weibull test data for every type, reproducible from ``seed``."""
    rng = random.Random(seed)
    out = {}
    for t in system.types:
        spec = WeibullSpec(rng.uniform(0.8, 2.5), rng.uniform(2.0, 6.0), n, rng.randrange(1 << 30))
        out[t.id] = spec.sample()
    return out


def grid(start: float, end: float, count: int) -> tuple[float, ...]:
    """``count`` evenly spaced times from start to end inclusive."""
    if count < 1:
        raise InputError("grid needs at least one point")
    if count == 1:
        return (float(start),)
    if not end > start:
        raise InputError("grid end must exceed its start")
    return tuple(start + (end - start) * i / (count - 1) for i in range(count))


# -- random systems ---------------------------------------------------------------------


def random_coherent_system(rng: random.Random, max_components: int = 12, max_types: int = 3) -> SystemStructure:
    """Random monotone formula over every slot, retried until coherent."""
    while True:
        K = rng.randint(1, max_types)
        M = rng.randint(K, max_components)
        mults = [1] * K
        for _ in range(M - K):
            mults[rng.randrange(K)] += 1
        types = tuple(ComponentType(k + 1, chr(ord("A") + k), m) for k, m in enumerate(mults))
        leaves: list = [Component(k + 1, i + 1) for k, m in enumerate(mults) for i in range(m)]
        # a few repeated leaves give non-read-once structures
        leaves += [rng.choice(leaves) for _ in range(rng.randint(0, 2))]
        rng.shuffle(leaves)
        system = SystemStructure(types, _random_tree(rng, leaves))
        try:
            check_coherent(system)
        except StructureError:
            continue
        return system


def _random_tree(rng: random.Random, leaves: list):
    if len(leaves) == 1:
        return leaves[0]
    parts = rng.randint(2, min(4, len(leaves)))
    cuts = sorted(rng.sample(range(1, len(leaves)), parts - 1))
    kids = tuple(_random_tree(rng, leaves[a:b]) for a, b in zip([0] + cuts, cuts + [len(leaves)]))
    kind = rng.random()
    if kind < 0.4:
        return All(kids)
    if kind < 0.8:
        return Any_(kids)
    return AtLeast(rng.randint(1, len(kids)), kids)


# -- curve comparison ----------------------------------------------------------------------


def implied_cdf(values: Sequence[float]) -> np.ndarray:
    """Grid CDF of the lifetime distribution implied by a survival curve.

    Mass before the first grid time is 1 - S(t_1), between consecutive
    times S(t_{j-1}) - S(t_j), beyond the last time S(t_T).  Negative masses
    (possible after rounding) are clipped, then the masses are renormalized.
    """
    s = np.asarray(values, dtype=float)
    masses = np.concatenate([[1.0 - s[0]], s[:-1] - s[1:], [s[-1]]])
    masses = np.clip(masses, 0.0, None)
    total = masses.sum()
    if total <= 0:
        raise InputError("curve implies no probability mass")
    return np.cumsum(masses / total)[:-1]


def tv_distance(a: SurvivalCurve | Sequence[float], b: SurvivalCurve | Sequence[float]) -> float:
    """max_j |F1(t_j) - F2(t_j)| between the implied, renormalized lifetime CDFs."""
    va = a.values if isinstance(a, SurvivalCurve) else a
    vb = b.values if isinstance(b, SurvivalCurve) else b
    if isinstance(a, SurvivalCurve) and isinstance(b, SurvivalCurve) and a.times != b.times:
        raise InputError("curves are on different time grids")
    if len(va) != len(vb):
        raise InputError("curves differ in length")
    return float(np.max(np.abs(implied_cdf(va) - implied_cdf(vb))))


def max_pointwise_gap(a: Sequence[float], b: Sequence[float]) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


@dataclass
class ComparisonReport:
    times: list[float]
    gaps: list[float]
    max_gap: float
    tv_distance: float
    envelope: float
    integers_match: dict[str, bool] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.errors and self.max_gap <= self.envelope and all(self.integers_match.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary(self) -> str:
        lines = [
            f"max pointwise gap : {self.max_gap:.3e}",
            f"error envelope    : {self.envelope:.3e}",
            f"TV distance       : {self.tv_distance:.3e}",
        ]
        lines += [f"integers match ({k}) : {v}" for k, v in self.integers_match.items()]
        lines += [f"error: {e}" for e in self.errors]
        lines += [f"{k:<18}: {v:.2f} s" for k, v in self.timings.items()]
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def compare_curves(encrypted: SurvivalCurve, oracle: SurvivalCurve, rows: int, K: int, kappa: int) -> ComparisonReport:
    raw = encrypted.raw if encrypted.raw is not None else encrypted.values
    gaps = [abs(a - b) for a, b in zip(raw, oracle.values)]
    return ComparisonReport(
        times=list(encrypted.times),
        gaps=gaps,
        max_gap=max(gaps),
        tv_distance=tv_distance(encrypted, oracle),
        envelope=error_envelope(rows, K, kappa),
    )


def oracle_curve(system: SystemStructure, samples: dict[int, LifetimeSample], times: Sequence[float]) -> SurvivalCurve:
    """The fully unencrypted pipeline."""
    sig = survival_signature(system)
    dists = [count_distribution(samples[t.id], t.multiplicity, times, t.id) for t in system.types]
    return survival_curve_oracle(sig, dists, times)


def expected_integers(system: SystemStructure, samples: dict[int, LifetimeSample], times: Sequence[float], kappa: int) -> list[int]:
    """Column sums computed on plain fixed-point values."""
    sig = survival_signature(system)
    dists = [count_distribution(samples[t.id], t.multiplicity, times, t.id) for t in system.types]
    return [v.integer for v in plaintext_column_sums(sig, dists, times, kappa)]


def end_to_end_check(
    system: SystemStructure,
    samples: dict[int, LifetimeSample],
    times: Sequence[float],
    kappa: int = 3,
    profile: str = DEFAULT_PROFILE,
    backends: Sequence[str] = ("debug", "bfv"),
    transport: str = "loopback",
    seed: int | None = None,
) -> ComparisonReport:
    """Run the encrypted pipeline on each backend and compare with the oracle."""
    oracle = oracle_curve(system, samples, times)
    want = expected_integers(system, samples, times, kappa)
    report = None
    matches: dict[str, bool] = {}
    errors: list[str] = []
    timings: dict[str, float] = {}
    for name in backends:
        try:
            run = run_protocol(system, samples, times, kappa, profile, name, transport, seed=seed)
        except PrivrelError as e:
            errors.append(f"{name}: {type(e).__name__}: {e}")
            continue
        timings[name] = run.seconds
        matches[name] = run.integers == want
        if report is None or name == "bfv":
            report = compare_curves(run.curve, oracle, system.row_count, system.K, kappa)
    if report is None:
        report = ComparisonReport(list(times), [], float("inf"), float("inf"), error_envelope(system.row_count, system.K, kappa))
    report.integers_match = matches
    report.errors = errors
    report.timings = timings
    return report
