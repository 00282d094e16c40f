"""Macro-state stability of evolving populations.

The population state space is far too large to enumerate, so occupation
probabilities are estimated empirically: many replicate runs with derived
seeds, classified per generation into a small set of macro-state labels.
A run's label is M_max when it holds at least one individual at the global
maximum fitness, M_half when its best individual sits at half that value,
and otherwise a decile bucket of its best fitness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from ecosim.core import Agent, Alphabet, Population, UserRequest, ValidationError, derive_seed
from ecosim.evolution import EvolutionConfig, fitness, run
from ecosim.parallel import map_jobs

M_MAX = "M_max"
M_HALF = "M_half"
OTHER_BUCKETS = tuple(f"other_{i}" for i in range(10))
MACRO_STATE_LABELS: tuple[str, ...] = (M_MAX, M_HALF) + OTHER_BUCKETS

# Number of macro-state buckets; the log base that normalises instability.
N_STATES = len(MACRO_STATE_LABELS)

_FITNESS_EQ_TOL = 1e-9


def global_max_fitness(req: UserRequest, alphabet: Alphabet) -> float:
    """Maximum fitness reachable by any sequence over the alphabet.

    Adding an agent to a sequence can only shrink the minimised
    differences, so the optimum is attained by a sequence containing every
    alphabet member and equals 1 / (1 + sum of per-attribute distances to
    the nearest attribute value anywhere in the alphabet). When every
    required attribute occurs exactly, this is 1.
    """
    values = sorted({v for agent in alphabet for v in agent.attributes})
    total = 0
    for r in req.required_attributes():
        total += min(abs(r - v) for v in values)
    return 1.0 / (1.0 + total)


def classify_best_fitness(
    best: float, f_max_global: float, half_tolerance: float = 0.01
) -> str:
    """Macro-state label for a population whose best raw fitness is ``best``."""
    if best > f_max_global + _FITNESS_EQ_TOL:
        raise ValidationError(
            f"best fitness {best} exceeds the global maximum {f_max_global}"
        )
    if abs(best - f_max_global) <= _FITNESS_EQ_TOL:
        return M_MAX
    if abs(best - f_max_global / 2.0) <= half_tolerance:
        return M_HALF
    return OTHER_BUCKETS[min(9, int(best * 10.0))]


def classify(
    pop: Population,
    req: UserRequest,
    f_max_global: float,
    half_tolerance: float = 0.01,
) -> str:
    best = max(fitness(seq, req) for seq in pop.sequences)
    return classify_best_fitness(best, f_max_global, half_tolerance)


@dataclass(frozen=True)
class MacroStateDistribution:
    """Empirical occupation probabilities over macro-states at one generation."""

    generation: int
    probabilities: dict[str, float]
    replicates: int

    def probability(self, label: str) -> float:
        return self.probabilities.get(label, 0.0)


@dataclass(frozen=True)
class InstabilityReport:
    """Limit distribution at the horizon with its normalised entropy."""

    limit_distribution: dict[str, float]
    degree_of_instability: float
    is_stable: bool
    n_states: int


def _occupation_replicate(
    job: tuple[EvolutionConfig, UserRequest, tuple[Agent, ...], float, float],
) -> list[str]:
    cfg, req, seed_pool, f_max, half_tolerance = job
    traces = run(cfg, req, seed_pool, record_metrics=False)
    return [
        classify_best_fitness(t.max_fitness, f_max, half_tolerance) for t in traces
    ]


def estimate_occupation(
    cfg: EvolutionConfig,
    req: UserRequest,
    seed_pool: Sequence[Agent],
    replicates: int,
    horizon: int,
    *,
    half_tolerance: float = 0.01,
    workers: int = 1,
) -> list[MacroStateDistribution]:
    """Monte Carlo occupation curves: replicate frequencies per generation.

    Each replicate runs with a seed derived from the master seed, so the
    whole estimate is reproducible and replicates are independent (and may
    run in parallel without changing the result).
    """
    if replicates < 1:
        raise ValidationError("replicates must be >= 1")
    alphabet = Alphabet(seed_pool)
    f_max = global_max_fitness(req, alphabet)
    run_cfg = replace(cfg, max_generations=horizon)
    jobs = [
        (
            replace(run_cfg, seed=derive_seed(cfg.seed, "replicate", r)),
            req,
            tuple(seed_pool),
            f_max,
            half_tolerance,
        )
        for r in range(replicates)
    ]
    label_runs = map_jobs(_occupation_replicate, jobs, workers)
    counts = [dict.fromkeys(MACRO_STATE_LABELS, 0) for _ in range(horizon + 1)]
    for labels in label_runs:
        for t, label in enumerate(labels):
            counts[t][label] += 1
    return [
        MacroStateDistribution(
            generation=t,
            probabilities={k: v / replicates for k, v in counts[t].items()},
            replicates=replicates,
        )
        for t in range(horizon + 1)
    ]


def degree_of_instability(
    dist: MacroStateDistribution | dict[str, float], n_states: int = N_STATES
) -> float:
    """Normalised entropy of a macro-state distribution, 0 for a point mass."""
    if n_states < 2:
        raise ValidationError("entropy base undefined for fewer than 2 states")
    probabilities = (
        dist.probabilities if isinstance(dist, MacroStateDistribution) else dist
    )
    log_n = math.log(n_states)
    h = 0.0
    for p in probabilities.values():
        if p > 0.0:
            h -= p * math.log(p) / log_n
    return min(max(h, 0.0), 1.0)


def is_stable(
    curves: Sequence[MacroStateDistribution],
    window: int = 50,
    drift_epsilon: float = 0.01,
) -> bool:
    """Converged and non-uniform over the final ``window`` generations.

    Convergence demands that no label's probability drifts by
    ``drift_epsilon`` or more inside the window; non-uniformity demands
    that the final distribution is not flat across the labels.
    """
    if not curves:
        raise ValidationError("no occupation curves")
    tail = curves[-min(window, len(curves)):]
    for label in MACRO_STATE_LABELS:
        values = [d.probability(label) for d in tail]
        if max(values) - min(values) >= drift_epsilon:
            return False
    final = curves[-1].probabilities
    values = [final.get(label, 0.0) for label in MACRO_STATE_LABELS]
    return max(values) - min(values) > 1e-12


def build_instability_report(
    curves: Sequence[MacroStateDistribution],
    window: int = 50,
    drift_epsilon: float = 0.01,
) -> InstabilityReport:
    final = curves[-1]
    return InstabilityReport(
        limit_distribution=dict(final.probabilities),
        degree_of_instability=degree_of_instability(final),
        is_stable=is_stable(curves, window, drift_epsilon),
        n_states=N_STATES,
    )


@dataclass(frozen=True)
class SweepCell:
    """One cell of the mutation/crossover sweep grid."""

    mutation_rate: float
    crossover_rate: float
    degree_of_instability: float
    final_distribution: dict[str, float]
    stable: bool


DEFAULT_SWEEP_RATES = tuple(i / 10.0 for i in range(11))


def _sweep_cell(
    job: tuple[EvolutionConfig, UserRequest, tuple[Agent, ...], int, int, float, float, float],
) -> SweepCell:
    cfg, req, seed_pool, replicates, horizon, half_tolerance, m, c = job
    curves = estimate_occupation(
        cfg, req, seed_pool, replicates, horizon, half_tolerance=half_tolerance
    )
    return SweepCell(
        mutation_rate=m,
        crossover_rate=c,
        degree_of_instability=degree_of_instability(curves[-1]),
        final_distribution=dict(curves[-1].probabilities),
        stable=is_stable(curves),
    )


def stability_sweep(
    cfg: EvolutionConfig,
    req: UserRequest,
    seed_pool: Sequence[Agent],
    replicates: int,
    horizon: int,
    *,
    mutation_rates: Sequence[float] = DEFAULT_SWEEP_RATES,
    crossover_rates: Sequence[float] = DEFAULT_SWEEP_RATES,
    half_tolerance: float = 0.01,
    workers: int = 1,
) -> list[SweepCell]:
    """Degree of instability per (mutation, crossover) cell at the horizon.

    Cells are independent (each derives its own seed from the master), so
    the grid parallelises without affecting the output.
    """
    jobs = []
    for m in mutation_rates:
        for c in crossover_rates:
            cell_cfg = replace(
                cfg,
                mutation_rate=m,
                crossover_rate=c,
                seed=derive_seed(cfg.seed, "sweep", round(m * 100), round(c * 100)),
            )
            jobs.append(
                (cell_cfg, req, tuple(seed_pool), replicates, horizon, half_tolerance, m, c)
            )
    return map_jobs(_sweep_cell, jobs, workers)
