"""Non-parametric component inference run privately by each manufacturer.

Components of one type are treated as exchangeable with a common survival
function S, estimated from lifetime tests.  The number of type-k components
still working at time t is then Binomial(M_k, S(t)).

Lifetime files hold one observation per line::

    # comments and blank lines are ignored
    1.732          failure observed at 1.732
    2.5  1         right-censored at 2.5 (still working when the test stopped)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from privrel.errors import InputError

PMF_TOLERANCE = 1e-12


@dataclass(frozen=True)
class LifetimeSample:
    observations: tuple[float, ...]
    censored: tuple[bool, ...] | None = None

    def __post_init__(self):
        if not self.observations:
            raise InputError("a lifetime sample needs at least one observation")
        if any(not (math.isfinite(x) and x > 0) for x in self.observations):
            raise InputError("lifetimes must be finite and positive")
        if self.censored is not None and len(self.censored) != len(self.observations):
            raise InputError("censoring flags and observations differ in length")

    @property
    def n(self) -> int:
        return len(self.observations)

    @property
    def has_censoring(self) -> bool:
        return self.censored is not None and any(self.censored)


@dataclass(frozen=True)
class ComponentCountDistribution:
    """P(C^k_t = l) for l = 0..M_k at each time of the grid."""

    type_id: int
    times: tuple[float, ...]
    pmf: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.pmf) != len(self.times):
            raise InputError("one pmf row is needed per time point")
        widths = {len(row) for row in self.pmf}
        if len(widths) > 1:
            raise InputError("pmf rows differ in length")
        for t, row in zip(self.times, self.pmf):
            if any(not 0.0 <= p <= 1.0 for p in row):
                raise InputError(f"pmf at t={t} has entries outside [0, 1]")
            if abs(math.fsum(row) - 1.0) > PMF_TOLERANCE:
                raise InputError(f"pmf at t={t} sums to {math.fsum(row)!r}, not 1")

    @property
    def multiplicity(self) -> int:
        return len(self.pmf[0]) - 1 if self.pmf else 0

    def at(self, t: float) -> tuple[float, ...]:
        try:
            return self.pmf[self.times.index(t)]
        except ValueError:
            raise InputError(f"no distribution for type {self.type_id} at time {t}") from None


def empirical_survival(sample: LifetimeSample, t: float) -> float:
    """Right-continuous estimate of P(lifetime > t).

    Without censoring this is the fraction of observations beyond t; with
    censoring it is the product-limit (Kaplan-Meier) estimate.
    """
    if t < 0:
        raise InputError(f"time must be non-negative, got {t}")
    return float(survival_function(sample, [t])[0])


def survival_function(sample: LifetimeSample, times: Sequence[float]) -> np.ndarray:
    obs = np.asarray(sample.observations, dtype=float)
    ts = np.asarray(times, dtype=float)
    if not sample.has_censoring:
        s = np.sort(obs)
        # count of observations <= t
        failed = np.searchsorted(s, ts, side="right")
        return (len(s) - failed) / len(s)

    cens = np.asarray(sample.censored, dtype=bool)
    event_times = np.unique(obs[~cens])
    factors = []
    for u in event_times:
        at_risk = np.count_nonzero(obs >= u)
        deaths = np.count_nonzero((obs == u) & ~cens)
        factors.append(1.0 - deaths / at_risk)
    steps = np.cumprod(factors) if factors else np.array([])
    idx = np.searchsorted(event_times, ts, side="right")
    return np.where(idx == 0, 1.0, steps[np.maximum(idx - 1, 0)] if len(steps) else 1.0)


def binomial_pmf(m: int, p: float) -> tuple[float, ...]:
    q = 1.0 - p
    return tuple(math.comb(m, l) * p**l * q ** (m - l) for l in range(m + 1))


def count_distribution(
    sample: LifetimeSample, multiplicity: int, times: Sequence[float], type_id: int = 1
) -> ComponentCountDistribution:
    """Binomial(M_k, S_hat(t)) count distribution at every grid time."""
    if multiplicity < 1:
        raise InputError(f"multiplicity must be >= 1, got {multiplicity}")
    if any(t < 0 for t in times):
        raise InputError("grid times must be non-negative")
    surv = survival_function(sample, times)
    pmf = tuple(binomial_pmf(multiplicity, float(s)) for s in surv)
    return ComponentCountDistribution(type_id, tuple(float(t) for t in times), pmf)


def distribution_from_survival(
    survival: Sequence[float], multiplicity: int, times: Sequence[float], type_id: int = 1
) -> ComponentCountDistribution:
    """Count distribution from known per-component survival probabilities."""
    pmf = tuple(binomial_pmf(multiplicity, float(s)) for s in survival)
    return ComponentCountDistribution(type_id, tuple(float(t) for t in times), pmf)


# -- files ---------------------------------------------------------------------


def parse_lifetimes(text: str, source: str = "<text>") -> LifetimeSample:
    obs: list[float] = []
    cens: list[bool] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            value = float(parts[0])
            flag = parts[1] if len(parts) > 1 else "0"
        except ValueError:
            raise InputError(f"{source}:{lineno}: not a number: {parts[0]!r}") from None
        if flag not in ("0", "1") or len(parts) > 2:
            raise InputError(f"{source}:{lineno}: expected 'time [0|1]'")
        if not (math.isfinite(value) and value > 0):
            raise InputError(f"{source}:{lineno}: lifetime must be positive, got {parts[0]}")
        obs.append(value)
        cens.append(flag == "1")
    if not obs:
        raise InputError(f"{source}: no lifetime observations")
    return LifetimeSample(tuple(obs), tuple(cens) if any(cens) else None)


def load_lifetimes(path: str | Path) -> LifetimeSample:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise InputError(f"lifetime data file not found: {path}") from None
    return parse_lifetimes(text, str(path))


def save_lifetimes(sample: LifetimeSample, path: str | Path, header: str = "") -> None:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    flags = sample.censored or (False,) * sample.n
    for x, c in zip(sample.observations, flags):
        lines.append(f"{x!r} 1" if c else repr(x))
    Path(path).write_text("\n".join(lines) + "\n")
