"""The evolutionary engine.

Per generation, in order: evaluate parsimony fitness, fitness-proportional
non-elitist selection to the dynamic target size, one-point crossover,
point mutation, then record a trace row. All randomness comes from a
single per-run stream, so equal seeds give byte-identical traces.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from itertools import accumulate
from typing import Iterable, Sequence

from ecosim import complexity as _complexity
from ecosim.core import (
    Agent,
    AgentSequence,
    Alphabet,
    Population,
    UserRequest,
    ValidationError,
    rng_from,
)

# Generation-0 sequences are short so that length can evolve upward.
INITIAL_LENGTH_RANGE = (1, 3)


class ExtinctPopulationError(RuntimeError):
    """Selection was asked to sample from an empty population."""


@dataclass(frozen=True)
class EvolutionConfig:
    """Knobs for one evolutionary run.

    ``initial_mean_len`` anchors the dynamic population size; ``run``
    replaces it with the measured generation-0 mean. The default 2.0 is
    the analytic mean of the generation-0 length law.
    """

    base_population_size: int
    max_generations: int
    seed: int
    mutation_rate: float = 0.10
    crossover_rate: float = 0.10
    parsimony_coefficient: float = 0.5
    initial_mean_len: float = 2.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValidationError(f"mutation_rate {self.mutation_rate} outside [0, 1]")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValidationError(f"crossover_rate {self.crossover_rate} outside [0, 1]")
        if self.base_population_size < 1:
            raise ValidationError("base_population_size must be >= 1")
        if self.max_generations < 0:
            raise ValidationError("max_generations must be >= 0")
        if self.parsimony_coefficient < 0.0:
            raise ValidationError("parsimony_coefficient must be >= 0")
        if self.initial_mean_len <= 0.0:
            raise ValidationError("initial_mean_len must be > 0")


@dataclass(frozen=True)
class DeadMarker:
    """The distinguished per-individual state for unselected individuals.

    An individual that selection does not sample is dead: it leaves no
    descendant and contributes nothing to any later state. Populations are
    immutable, so death is simply absence from the next generation; this
    marker exists to name that state in audits and tests.
    """

    generation: int


@dataclass(frozen=True)
class GenerationTrace:
    """One recorded generation: fitness, length and complexity summaries.

    ``complexity``/``efficiency`` are None when metric recording is turned
    off for speed or when the population is too small for the complexity
    sample-size rule. ``population`` is kept only when requested.
    """

    generation: int
    max_fitness: float
    mean_fitness: float
    mean_length: float
    complexity: float | None = None
    efficiency: float | None = None
    population: Population | None = field(default=None, compare=False, repr=False)


def total_min_difference(seq: AgentSequence, req: UserRequest) -> int:
    """Sum over required attributes of the minimised |r - a| over the sequence."""
    pool = sorted(seq.attribute_pool())
    n = len(pool)
    total = 0
    for r in req.required_attributes():
        i = bisect_left(pool, r)
        if i == 0:
            total += pool[0] - r
        elif i == n:
            total += r - pool[-1]
        else:
            total += min(pool[i] - r, r - pool[i - 1])
    return total


def fitness(seq: AgentSequence, req: UserRequest) -> float:
    """1 / (1 + total minimised difference); equals 1 iff every attribute is matched."""
    return 1.0 / (1.0 + total_min_difference(seq, req))


def parsimony_fitness(
    seq: AgentSequence, req: UserRequest, mean_len: float, cfg: EvolutionConfig
) -> float:
    """Raw fitness, divisively reduced for sequences longer than the mean."""
    return _apply_parsimony(fitness(seq, req), len(seq), mean_len, cfg.parsimony_coefficient)


def _apply_parsimony(raw: float, length: int, mean_len: float, coefficient: float) -> float:
    if mean_len <= 0.0:
        raise ValidationError("mean_len must be > 0")
    if length <= mean_len or coefficient == 0.0:
        return raw
    return raw / (1.0 + coefficient * (length - mean_len))


def target_population_size(mean_len: float, cfg: EvolutionConfig) -> int:
    """Population size grows with mean sequence length, never below base."""
    if mean_len < 1.0:
        raise ValidationError("mean_len must be >= 1")
    scaled = math.ceil(cfg.base_population_size * mean_len / cfg.initial_mean_len)
    return max(cfg.base_population_size, scaled)


def select(
    pop: Population,
    fitnesses: Sequence[float],
    target_size: int,
    rng: random.Random,
) -> Population:
    """Fitness-proportional sampling with replacement; nothing is guaranteed survival."""
    if len(pop) == 0:
        raise ExtinctPopulationError("extinct population")
    if len(fitnesses) != len(pop):
        raise ValidationError("one fitness value per individual required")
    cum = list(accumulate(fitnesses))
    chosen = rng.choices(pop.sequences, cum_weights=cum, k=target_size)
    return Population._wrap(tuple(chosen), pop.alphabet)


def _one_point_cross(
    a: AgentSequence, b: AgentSequence, rng: random.Random
) -> tuple[AgentSequence, AgentSequence]:
    # A single shared cut keeps self-crossover a fixpoint; a pair with a
    # length-1 parent has no interior cut point and is left unchanged.
    shortest = min(len(a), len(b))
    if shortest < 2:
        return a, b
    cut = rng.randint(1, shortest - 1)
    return (
        AgentSequence(a.agents[:cut] + b.agents[cut:]),
        AgentSequence(b.agents[:cut] + a.agents[cut:]),
    )


def crossover_population(
    pop: Population, cfg: EvolutionConfig, rng: random.Random
) -> Population:
    """Replace floor(rate * |pop|) randomly chosen individuals with crossover offspring."""
    count = int(cfg.crossover_rate * len(pop) + 1e-9)  # guard 0.3 * 10 == 2.9999...
    if count < 2:
        return pop
    chosen = rng.sample(range(len(pop)), count)
    seqs = list(pop.sequences)
    for first, second in zip(chosen[0::2], chosen[1::2]):
        seqs[first], seqs[second] = _one_point_cross(seqs[first], seqs[second], rng)
    return Population._wrap(tuple(seqs), pop.alphabet)


_INSERT, _REPLACE, _DELETE = 0, 1, 2


def _mutate_sequence(
    seq: AgentSequence, alphabet: Alphabet, rng: random.Random
) -> AgentSequence:
    kind = rng.randrange(3)
    if kind == _DELETE and len(seq) == 1:
        kind = rng.choice((_INSERT, _REPLACE))  # sequences never become empty
    agents = seq.agents
    if kind == _INSERT:
        pos = rng.randint(0, len(agents))
        agent = alphabet.members[rng.randrange(alphabet.size)]
        return AgentSequence(agents[:pos] + (agent,) + agents[pos:])
    if kind == _REPLACE:
        pos = rng.randrange(len(agents))
        agent = alphabet.members[rng.randrange(alphabet.size)]
        return AgentSequence(agents[:pos] + (agent,) + agents[pos + 1:])
    pos = rng.randrange(len(agents))
    return AgentSequence(agents[:pos] + agents[pos + 1:])


def mutate_population(
    pop: Population, cfg: EvolutionConfig, rng: random.Random
) -> Population:
    """Apply one point mutation each to floor(rate * |pop|) randomly chosen individuals."""
    count = int(cfg.mutation_rate * len(pop) + 1e-9)
    if count < 1:
        return pop
    chosen = rng.sample(range(len(pop)), count)
    seqs = list(pop.sequences)
    for idx in chosen:
        seqs[idx] = _mutate_sequence(seqs[idx], pop.alphabet, rng)
    return Population._wrap(tuple(seqs), pop.alphabet)


class _FitnessCache:
    """Memoises the integer total difference per genotype within one run."""

    __slots__ = ("req", "_table")

    def __init__(self, req: UserRequest):
        self.req = req
        self._table: dict[AgentSequence, int] = {}

    def difference(self, seq: AgentSequence) -> int:
        d = self._table.get(seq)
        if d is None:
            d = total_min_difference(seq, self.req)
            self._table[seq] = d
        return d

    def raw_fitness(self, seq: AgentSequence) -> float:
        return 1.0 / (1.0 + self.difference(seq))


@dataclass
class EvolutionState:
    """Mutable run state threaded through :func:`step_generation`."""

    cfg: EvolutionConfig
    req: UserRequest
    population: Population
    generation: int
    rng: random.Random
    cache: _FitnessCache
    record_metrics: bool = True
    keep_populations: bool = False


def _record_trace(state: EvolutionState) -> GenerationTrace:
    pop = state.population
    raws = [state.cache.raw_fitness(s) for s in pop.sequences]
    mean_length = sum(len(s) for s in pop.sequences) / len(pop)
    c_v = eff = None
    if state.record_metrics and len(pop) >= pop.alphabet.size:
        report = _complexity.build_report(pop)
        c_v, eff = report.complexity, report.efficiency
    keep = state.keep_populations or state.generation == state.cfg.max_generations
    return GenerationTrace(
        generation=state.generation,
        max_fitness=max(raws),
        mean_fitness=sum(raws) / len(raws),
        mean_length=mean_length,
        complexity=c_v,
        efficiency=eff,
        population=pop if keep else None,
    )


def step_generation(state: EvolutionState) -> GenerationTrace:
    """Advance the state by one generation and return its trace row."""
    cfg, pop, cache = state.cfg, state.population, state.cache
    mean_len = sum(len(s) for s in pop.sequences) / len(pop)
    coeff = cfg.parsimony_coefficient
    weights = [
        _apply_parsimony(cache.raw_fitness(s), len(s), mean_len, coeff)
        for s in pop.sequences
    ]
    target = target_population_size(max(mean_len, 1.0), cfg)
    pop = select(pop, weights, target, state.rng)
    pop = crossover_population(pop, cfg, state.rng)
    pop = mutate_population(pop, cfg, state.rng)
    state.population = pop
    state.generation += 1
    return _record_trace(state)


def build_initial_population(
    seed_pool: Sequence[Agent],
    cfg: EvolutionConfig,
    rng: random.Random,
    injected: Iterable[AgentSequence] = (),
    extra_alphabet: Iterable[Agent] = (),
) -> Population:
    """Generation 0: injected sequences verbatim, then random short sequences.

    ``extra_alphabet`` widens the alphabet beyond the seed pool (e.g. with
    agents of sequences hosted at a habitat) without seeding from it.
    """
    if not seed_pool:
        raise ValidationError("seed_pool is empty")
    injected = tuple(injected)
    alphabet = Alphabet(
        list(seed_pool)
        + [a for seq in injected for a in seq.agents]
        + list(extra_alphabet)
    )
    lo, hi = INITIAL_LENGTH_RANGE
    sequences = list(injected[: cfg.base_population_size])
    while len(sequences) < cfg.base_population_size:
        length = rng.randint(lo, hi)
        sequences.append(
            AgentSequence(
                tuple(seed_pool[rng.randrange(len(seed_pool))] for _ in range(length))
            )
        )
    return Population(sequences, alphabet)


def run(
    cfg: EvolutionConfig,
    req: UserRequest,
    seed_pool: Sequence[Agent],
    injected: Iterable[AgentSequence] = (),
    extra_alphabet: Iterable[Agent] = (),
    record_metrics: bool = True,
    keep_populations: bool = False,
) -> list[GenerationTrace]:
    """Run a full evolution and return one trace per generation, 0 included.

    The final generation's trace always carries its population; earlier
    traces carry theirs only when ``keep_populations`` is set.
    """
    rng = rng_from(cfg.seed, "run")
    population = build_initial_population(seed_pool, cfg, rng, injected, extra_alphabet)
    measured_mean = sum(len(s) for s in population.sequences) / len(population)
    cfg = replace(cfg, initial_mean_len=measured_mean)
    state = EvolutionState(
        cfg=cfg,
        req=req,
        population=population,
        generation=0,
        rng=rng,
        cache=_FitnessCache(req),
        record_metrics=record_metrics,
        keep_populations=keep_populations,
    )
    traces = [_record_trace(state)]
    for _ in range(cfg.max_generations):
        traces.append(step_generation(state))
    return traces


def final_population(traces: list[GenerationTrace]) -> Population:
    """The population attached to the last trace of a completed run."""
    pop = traces[-1].population
    if pop is None:
        raise ValidationError("the last trace carries no population")
    return pop
