"""Request-distribution generators, evolved-response measurement and chi-squared.

User requests vary in length (number of atomic services) and modularity
(attributes per service) according to Uniform, Gaussian or Power-Law laws.
The diversity experiment evolves one population per sampled request and
checks whether the responses' size and attribute-count distributions
follow the request distributions, using a chi-squared goodness-of-fit
test. Critical values go through a regularized incomplete gamma inversion
and both tail conventions are reported.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_left
from dataclasses import dataclass, replace
from itertools import accumulate
from typing import Sequence

from ecosim.core import (
    MAX_ATTRIBUTE,
    MIN_ATTRIBUTE,
    Agent,
    UserRequest,
    ValidationError,
    derive_seed,
    new_random_agent,
    rng_from,
)
from ecosim.evolution import EvolutionConfig, run, total_min_difference
from ecosim.parallel import map_jobs

LENGTH_SUPPORT = (2, 18)      # 17 bins, 16 degrees of freedom
MODULARITY_SUPPORT = (2, 12)  # 11 bins, 10 degrees of freedom

UNIFORM = "uniform"
GAUSSIAN = "gaussian"
POWER_LAW = "power_law"

_GAUSSIAN_RETRIES = 10_000


@dataclass(frozen=True)
class RequestDistribution:
    """A discrete law over an integer support [lo, hi].

    Gaussian draws are rounded and resampled until they land in the
    support; Power-Law draws use the inverse CDF of p(k) ~ k ** -exponent
    on the support directly.
    """

    law: str
    lo: int
    hi: int
    mean: float | None = None
    stddev: float | None = None
    exponent: float = 2.0

    def __post_init__(self) -> None:
        if self.law not in (UNIFORM, GAUSSIAN, POWER_LAW):
            raise ValidationError(f"unknown law {self.law!r}")
        if self.lo < 1 or self.hi < self.lo:
            raise ValidationError("support must satisfy 1 <= lo <= hi")
        if self.law == GAUSSIAN:
            if self.mean is None:
                object.__setattr__(self, "mean", (self.lo + self.hi) / 2.0)
            if self.stddev is None:
                object.__setattr__(self, "stddev", (self.hi - self.lo) / 6.0)
            if self.stddev <= 0:
                raise ValidationError("stddev must be > 0")
        if self.law == POWER_LAW and self.exponent <= 0:
            raise ValidationError("exponent must be > 0")

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "RequestDistribution":
        return cls(UNIFORM, lo, hi)

    @classmethod
    def gaussian(
        cls, lo: int, hi: int, mean: float | None = None, stddev: float | None = None
    ) -> "RequestDistribution":
        return cls(GAUSSIAN, lo, hi, mean=mean, stddev=stddev)

    @classmethod
    def power_law(cls, lo: int, hi: int, exponent: float = 2.0) -> "RequestDistribution":
        return cls(POWER_LAW, lo, hi, exponent=exponent)

    @property
    def support(self) -> range:
        return range(self.lo, self.hi + 1)

    def pmf(self) -> list[float]:
        """Analytic probability of each support value, summing to 1."""
        if self.law == UNIFORM:
            n = self.hi - self.lo + 1
            return [1.0 / n] * n
        if self.law == GAUSSIAN:
            def cdf(x: float) -> float:
                return 0.5 * (1.0 + math.erf((x - self.mean) / (self.stddev * math.sqrt(2.0))))

            weights = [cdf(k + 0.5) - cdf(k - 0.5) for k in self.support]
        else:
            weights = [float(k) ** -self.exponent for k in self.support]
        total = sum(weights)
        return [w / total for w in weights]

    def sample(self, rng: random.Random) -> int:
        if self.law == UNIFORM:
            return rng.randint(self.lo, self.hi)
        if self.law == GAUSSIAN:
            for _ in range(_GAUSSIAN_RETRIES):
                value = round(rng.gauss(self.mean, self.stddev))
                if self.lo <= value <= self.hi:
                    return value
            return min(max(round(self.mean), self.lo), self.hi)
        cum = list(accumulate(self.pmf()))
        u = rng.random() * cum[-1]
        return self.lo + bisect_left(cum, u)

    def expected_mean(self) -> float:
        return sum(k * p for k, p in zip(self.support, self.pmf()))


def sample_length(dist: RequestDistribution, rng: random.Random) -> int:
    """Draw a request length (number of atomic services)."""
    return dist.sample(rng)


def sample_modularity(dist: RequestDistribution, rng: random.Random) -> int:
    """Draw a request modularity (attributes per atomic service)."""
    return dist.sample(rng)


def generate_request(length: int, modularity: int, rng: random.Random) -> UserRequest:
    """A request of ``length`` groups, each of ``modularity`` uniform attributes."""
    if length < 1 or modularity < 1:
        raise ValidationError("length and modularity must be >= 1")
    return UserRequest(
        tuple(
            tuple(rng.randint(MIN_ATTRIBUTE, MAX_ATTRIBUTE) for _ in range(modularity))
            for _ in range(length)
        )
    )


def chi_squared(
    observed: Sequence[float], expected: Sequence[float]
) -> tuple[float, int]:
    """Pearson statistic sum((O - E)^2 / E) and its bins - 1 degrees of freedom."""
    if len(observed) != len(expected):
        raise ValidationError("observed and expected need the same bin count")
    if len(observed) < 2:
        raise ValidationError("need at least two bins")
    if any(e <= 0 for e in expected):
        raise ValidationError("expected counts must all be > 0")
    total_o, total_e = sum(observed), sum(expected)
    if abs(total_o - total_e) > 1e-6 * max(1.0, abs(total_e)):
        raise ValidationError(
            f"totals differ: observed {total_o} vs expected {total_e}"
        )
    statistic = sum((o - e) ** 2 / e for o, e in zip(observed, expected))
    return statistic, len(observed) - 1


def _regularized_gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x), by series or continued fraction."""
    if x < 0.0 or a <= 0.0:
        raise ValidationError("gamma P needs a > 0 and x >= 0")
    if x == 0.0:
        return 0.0
    lg = math.lgamma(a)
    if x < a + 1.0:
        # series: P(a, x) = x^a e^-x / Gamma(a) * sum x^n / (a (a+1) ... (a+n))
        term = 1.0 / a
        total = term
        n = a
        for _ in range(1000):
            n += 1.0
            term *= x / n
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return min(1.0, total * math.exp(-x + a * math.log(x) - lg))
    # Lentz continued fraction for Q(a, x); P = 1 - Q
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    q = math.exp(-x + a * math.log(x) - lg) * h
    return max(0.0, 1.0 - q)


def chi_squared_cdf(x: float, dof: int) -> float:
    if dof < 1:
        raise ValidationError("dof must be >= 1")
    if x <= 0.0:
        return 0.0
    return _regularized_gamma_p(dof / 2.0, x / 2.0)


def chi_squared_critical(dof: int, percentile: float, tail: str) -> float:
    """Critical value at ``percentile`` for the chosen tail convention.

    ``upper`` returns the usual rejection threshold (CDF = percentile);
    ``lower`` returns the small-tail point (CDF = 1 - percentile), the
    too-good-a-fit convention some reports compare against.
    """
    if not 0.0 < percentile < 1.0:
        raise ValidationError("percentile must be in (0, 1)")
    if tail not in ("lower", "upper"):
        raise ValidationError(f"tail must be 'lower' or 'upper', got {tail!r}")
    target = percentile if tail == "upper" else 1.0 - percentile
    lo, hi = 0.0, float(max(4 * dof, 16))
    while chi_squared_cdf(hi, dof) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi_squared_cdf(mid, dof) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def merge_tail_bins(
    bins: Sequence[int], observed: Sequence[float], expected: Sequence[float],
    min_expected: float = 1.0,
) -> tuple[list[int], list[float], list[float]]:
    """Merge under-populated tail bins leftwards until expected >= min_expected."""
    merged_bins = list(bins)
    merged_o = list(observed)
    merged_e = list(expected)
    while len(merged_e) > 2 and merged_e[-1] < min_expected:
        merged_e[-2] += merged_e[-1]
        merged_o[-2] += merged_o[-1]
        merged_bins.pop()
        merged_e.pop()
        merged_o.pop()
    if any(e <= 0 for e in merged_e):
        raise ValidationError("zero expected cell after merging")
    return merged_bins, merged_o, merged_e


@dataclass(frozen=True)
class DiversityResult:
    """Observed vs expected histogram with the chi-squared verdicts."""

    law: str
    property_name: str
    bins: tuple[int, ...]
    observed: tuple[int, ...]
    expected: tuple[float, ...]
    statistic: float
    dof: int
    critical_lower: float
    critical_upper: float
    pass_lower: bool
    pass_upper: bool
    observed_mean: float
    expected_mean: float


def _histogram(values: Sequence[int], lo: int, hi: int) -> list[int]:
    counts = [0] * (hi - lo + 1)
    for v in values:
        counts[min(max(v, lo), hi) - lo] += 1  # clamp strays to the edges
    return counts


def _build_result(
    law: str,
    property_name: str,
    values: Sequence[int],
    dist: RequestDistribution,
    percentile: float = 0.95,
) -> DiversityResult:
    observed = _histogram(values, dist.lo, dist.hi)
    replicates = len(values)
    expected = [p * replicates for p in dist.pmf()]
    bins, obs, exp = merge_tail_bins(list(dist.support), observed, expected)
    statistic, dof = chi_squared(obs, exp)
    critical_lower = chi_squared_critical(dof, percentile, "lower")
    critical_upper = chi_squared_critical(dof, percentile, "upper")
    return DiversityResult(
        law=law,
        property_name=property_name,
        bins=tuple(bins),
        observed=tuple(int(o) for o in obs),
        expected=tuple(exp),
        statistic=statistic,
        dof=dof,
        critical_lower=critical_lower,
        critical_upper=critical_upper,
        pass_lower=statistic < critical_lower,
        pass_upper=statistic < critical_upper,
        observed_mean=sum(values) / replicates,
        expected_mean=dist.expected_mean(),
    )


def build_replicate_pool(
    req: UserRequest, rng: random.Random, pool_size: int = 20
) -> list[Agent]:
    """Agent pool for one diversity replicate: per-group cover agents plus noise.

    Each requirement group gets one agent carrying exactly its attributes,
    modelling a habitat whose pool has already adapted to the local kind of
    request; the rest of the pool is random agents.
    """
    pool = [Agent(group) for group in req.services]
    while len(pool) < pool_size:
        pool.append(new_random_agent(rng))
    return pool


def _diversity_replicate(
    job: tuple[int, EvolutionConfig, RequestDistribution, RequestDistribution, int],
) -> tuple[int, int]:
    """One replicate: sample a request, evolve, measure the best response."""
    i, cfg, dist_length, dist_modularity, pool_size = job
    rng = rng_from(cfg.seed, "diversity", i)
    length = sample_length(dist_length, rng)
    modularity = sample_modularity(dist_modularity, rng)
    req = generate_request(length, modularity, rng)
    pool = build_replicate_pool(req, rng, pool_size=pool_size)
    rep_cfg = replace(cfg, seed=derive_seed(cfg.seed, "diversity-run", i))
    traces = run(rep_cfg, req, pool, record_metrics=False)
    final = traces[-1].population
    best = min(final.sequences, key=lambda s: total_min_difference(s, req))
    mean_attrs = sum(len(a) for a in best.agents) / len(best)
    return len(best), round(mean_attrs)


def run_diversity_experiment(
    dist_length: RequestDistribution,
    dist_modularity: RequestDistribution,
    replicates: int,
    cfg: EvolutionConfig,
    *,
    pool_size: int = 20,
    workers: int = 1,
) -> tuple[DiversityResult, DiversityResult]:
    """Evolve one population per sampled request; compare response histograms.

    Returns the (sequence size, attributes per agent) result pair. The
    response of a replicate is its final generation's best sequence by raw
    fitness, first index winning ties.
    """
    for dist in (dist_length, dist_modularity):
        bin_count = dist.hi - dist.lo + 1
        if replicates < bin_count * 5:
            raise ValidationError(
                f"replicates {replicates} < 5 per bin for support {dist.lo}..{dist.hi}"
            )
    jobs = [
        (i, cfg, dist_length, dist_modularity, pool_size) for i in range(replicates)
    ]
    outcomes = map_jobs(_diversity_replicate, jobs, workers)
    sizes = [size for size, _ in outcomes]
    attr_counts = [attrs for _, attrs in outcomes]
    return (
        _build_result(dist_length.law, "sequence_size", sizes, dist_length),
        _build_result(
            dist_modularity.law, "attributes_per_agent", attr_counts, dist_modularity
        ),
    )
