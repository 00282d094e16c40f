import random
from collections import Counter
from fractions import Fraction

import pytest

from ecosim.core import Agent, AgentSequence, Alphabet, Population, UserRequest
from ecosim.evolution import (
    EvolutionConfig,
    ExtinctPopulationError,
    crossover_population,
    fitness,
    mutate_population,
    parsimony_fitness,
    run,
    select,
    target_population_size,
    total_min_difference,
)
from ecosim.diversity import chi_squared, chi_squared_critical


def seq_of(*attr_lists) -> AgentSequence:
    return AgentSequence(tuple(Agent(tuple(a)) for a in attr_lists))


def cfg_with(**kwargs) -> EvolutionConfig:
    defaults = dict(base_population_size=10, max_generations=10, seed=1)
    defaults.update(kwargs)
    return EvolutionConfig(**defaults)


class TestFitness:
    def test_exact_cover_is_one(self):
        req = UserRequest(((10, 20), (30,)))
        assert fitness(seq_of((10, 20), (30, 99)), req) == 1.0

    def test_total_difference_one_gives_half(self):
        req = UserRequest(((10,),))
        assert fitness(seq_of((11,)), req) == 0.5

    def test_pooled_minimisation(self):
        # required {10, 20} against pooled attributes {12, 20}: 1/(1+2+0)
        req = UserRequest(((10,), (20,)))
        assert fitness(seq_of((12,), (20,)), req) == float(Fraction(1, 3))

    def test_pool_spans_all_agents(self):
        req = UserRequest(((10, 90),))
        assert fitness(seq_of((10,), (90,)), req) == 1.0

    def test_nearest_attribute_at_edges(self):
        assert total_min_difference(seq_of((50,)), UserRequest(((1,),))) == 49
        assert total_min_difference(seq_of((50,)), UserRequest(((100,),))) == 50
        assert total_min_difference(seq_of((40, 60)), UserRequest(((49,),))) == 9

    def test_duplicate_requirements_count_twice(self):
        req = UserRequest(((10,), (10,)))
        assert fitness(seq_of((11,)), req) == float(Fraction(1, 3))


class TestParsimony:
    def test_at_mean_length_unchanged(self):
        req = UserRequest(((10,),))
        seq = seq_of((10,), (10,))
        assert parsimony_fitness(seq, req, 2.0, cfg_with()) == fitness(seq, req)

    def test_disabled_pressure(self):
        req = UserRequest(((10,),))
        seq = seq_of((10,), (10,), (10,))
        cfg = cfg_with(parsimony_coefficient=0.0)
        assert parsimony_fitness(seq, req, 1.0, cfg) == fitness(seq, req)

    def test_divisive_penalty(self):
        # raw 0.8, length 12, mean 10, coefficient 0.25 -> 0.8 / 1.5
        req = UserRequest(((10,),))
        agents = tuple(Agent((10,)) for _ in range(11)) + (Agent((10, 10)),)
        seq = AgentSequence(agents)
        raw = fitness(seq, req)
        assert raw == 1.0
        cfg = cfg_with(parsimony_coefficient=0.25)
        assert parsimony_fitness(seq, req, 10.0, cfg) == pytest.approx(1.0 / 1.5)
        penalised = 0.8 / (1.0 + 0.25 * (12 - 10))
        assert penalised == pytest.approx(0.8 / 1.5)


class TestTargetSize:
    def test_identity_at_initial_mean(self):
        cfg = cfg_with(base_population_size=30, initial_mean_len=2.0)
        assert target_population_size(2.0, cfg) == 30

    def test_doubles_with_mean_rounding_up(self):
        cfg = cfg_with(base_population_size=31, initial_mean_len=2.0)
        assert target_population_size(4.0, cfg) == 62
        assert target_population_size(4.1, cfg) == 64  # ceil(63.55)

    def test_clamped_below_base(self):
        cfg = cfg_with(base_population_size=30, initial_mean_len=2.0)
        assert target_population_size(1.0, cfg) == 30


def _uniform_population(n: int, alphabet_size: int = 4) -> Population:
    agents = [Agent((i + 1,)) for i in range(alphabet_size)]
    alphabet = Alphabet(agents)
    sequences = [AgentSequence((agents[i % alphabet_size],)) for i in range(n)]
    return Population(sequences, alphabet)


class TestSelect:
    def test_single_individual_fills_generation(self):
        pop = _uniform_population(1)
        out = select(pop, [0.4], 5, random.Random(0))
        assert len(out) == 5
        assert all(s == pop.sequences[0] for s in out.sequences)

    def test_empty_population_is_extinct(self):
        alphabet = Alphabet([Agent((1,))])
        pop = Population([], alphabet)
        with pytest.raises(ExtinctPopulationError, match="extinct"):
            select(pop, [], 3, random.Random(0))

    def test_requires_one_fitness_per_individual(self):
        pop = _uniform_population(3)
        with pytest.raises(Exception):
            select(pop, [0.1, 0.2], 3, random.Random(0))

    def test_fitness_proportional_frequencies(self):
        pop = _uniform_population(2)
        rng = random.Random(42)
        out = select(pop, [0.9, 0.1], 10_000, rng)
        share = sum(1 for s in out.sequences if s == pop.sequences[0]) / 10_000
        assert abs(share - 0.9) < 0.01

    def test_uniform_fitness_sampling_uniform(self):
        pop = _uniform_population(4)
        rng = random.Random(7)
        out = select(pop, [1.0] * 4, 10_000, rng)
        counts = Counter(out.sequences)
        observed = [counts[s] for s in pop.sequences]
        statistic, dof = chi_squared(observed, [2500.0] * 4)
        assert statistic < chi_squared_critical(dof, 0.95, "upper")

    def test_dead_individuals_leave_no_trace(self):
        pop = _uniform_population(2)
        out = select(pop, [1.0, 1e-12], 50, random.Random(3))
        dead = pop.sequences[1]
        assert dead not in out.sequences


class TestCrossover:
    def test_rate_zero_is_identity(self):
        pop = _uniform_population(10)
        cfg = cfg_with(crossover_rate=0.0)
        out = crossover_population(pop, cfg, random.Random(0))
        assert out.sequences == pop.sequences

    def test_identical_parents_fixpoint(self):
        a = Agent((1,))
        alphabet = Alphabet([a])
        seq = AgentSequence((a, a, a))
        pop = Population([seq] * 10, alphabet)
        cfg = cfg_with(crossover_rate=1.0)
        out = crossover_population(pop, cfg, random.Random(5))
        assert all(s == seq for s in out.sequences)

    def test_hand_traced_exchange(self):
        # parents [a, b, c] and [x, y]; the only interior shared cut is 1,
        # giving [a, y] and [x, b, c]
        a, b, c, x, y = (Agent((v,)) for v in (1, 2, 3, 4, 5))
        alphabet = Alphabet([a, b, c, x, y])
        p1 = AgentSequence((a, b, c))
        p2 = AgentSequence((x, y))
        pop = Population([p1, p2], alphabet)
        cfg = cfg_with(crossover_rate=1.0)
        out = crossover_population(pop, cfg, random.Random(0))
        assert Counter(out.sequences) == Counter(
            [AgentSequence((a, y)), AgentSequence((x, b, c))]
        )

    def test_length_one_pairs_left_alone(self):
        pop = _uniform_population(10)  # all length 1
        cfg = cfg_with(crossover_rate=1.0)
        out = crossover_population(pop, cfg, random.Random(1))
        assert out.sequences == pop.sequences

    def test_size_and_length_multiset_preserved(self):
        rng = random.Random(11)
        agents = [Agent((i + 1,)) for i in range(5)]
        alphabet = Alphabet(agents)
        sequences = [
            AgentSequence(tuple(agents[rng.randrange(5)] for _ in range(rng.randint(1, 4))))
            for _ in range(20)
        ]
        pop = Population(sequences, alphabet)
        cfg = cfg_with(crossover_rate=0.8)
        out = crossover_population(pop, cfg, random.Random(2))
        assert len(out) == len(pop)
        assert sorted(len(s) for s in out.sequences) == sorted(len(s) for s in pop.sequences)


class TestMutation:
    def test_rate_zero_is_identity(self):
        pop = _uniform_population(10)
        cfg = cfg_with(mutation_rate=0.0)
        out = mutate_population(pop, cfg, random.Random(0))
        assert out.sequences == pop.sequences

    def test_deletion_rerolled_on_singletons(self):
        pop = _uniform_population(10)  # every sequence has length 1
        cfg = cfg_with(mutation_rate=1.0)
        rng = random.Random(99)
        for _ in range(1_000):
            pop = mutate_population(pop, cfg, rng)
            assert all(len(s) >= 1 for s in pop.sequences)

    def test_insertion_preserves_order(self):
        a, b, c = Agent((1,)), Agent((2,)), Agent((3,))
        alphabet = Alphabet([a, b, c])
        seq = AgentSequence((a, b, c))
        pop = Population([seq], alphabet)
        cfg = cfg_with(mutation_rate=1.0)
        for trial in range(200):
            out = mutate_population(pop, cfg, random.Random(trial))
            mutant = out.sequences[0]
            if len(mutant) == 4:
                recoverable = any(
                    mutant.agents[:pos] + mutant.agents[pos + 1:] == seq.agents
                    for pos in range(len(mutant))
                )
                assert recoverable, f"insertion broke order: {mutant.agents}"

    def test_mutants_stay_within_alphabet(self):
        pop = _uniform_population(20)
        cfg = cfg_with(mutation_rate=1.0)
        rng = random.Random(5)
        for _ in range(50):
            pop = mutate_population(pop, cfg, rng)
        for seq in pop.sequences:
            for agent in seq.agents:
                assert agent in pop.alphabet


def _request_and_pool(seed: int = 3):
    rng = random.Random(seed)
    pool = [Agent(tuple(rng.randint(1, 100) for _ in range(4))) for _ in range(12)]
    values = [pool[0].attributes[0], pool[1].attributes[1], pool[2].attributes[2]]
    return UserRequest(tuple((v,) for v in values)), pool


class TestRun:
    def test_zero_generations_single_trace(self):
        req, pool = _request_and_pool()
        traces = run(cfg_with(max_generations=0), req, pool)
        assert len(traces) == 1
        assert traces[0].generation == 0
        assert traces[0].population is not None

    def test_trace_length_and_determinism(self):
        req, pool = _request_and_pool()
        cfg = cfg_with(base_population_size=20, max_generations=40)
        first = run(cfg, req, pool)
        second = run(cfg, req, pool)
        assert len(first) == 41
        assert first == second

    def test_final_population_attached(self):
        req, pool = _request_and_pool()
        traces = run(cfg_with(max_generations=5), req, pool)
        assert traces[-1].population is not None
        assert all(t.population is None for t in traces[:-1])

    def test_max_fitness_rarely_decreases(self):
        req, pool = _request_and_pool()
        ups = downs = 0
        for s in range(100):
            cfg = cfg_with(base_population_size=20, max_generations=120, seed=1000 + s)
            traces = run(cfg, req, pool, record_metrics=False)
            for previous, current in zip(traces, traces[1:]):
                if current.max_fitness >= previous.max_fitness:
                    ups += 1
                else:
                    downs += 1
        assert ups / (ups + downs) >= 0.95

    def test_complexity_rises_with_fitness(self):
        req, pool = _request_and_pool(seed=8)
        cfg = cfg_with(base_population_size=30, max_generations=150, seed=4)
        traces = run(cfg, req, pool)
        c_v = [t.complexity for t in traces if t.complexity is not None]
        assert c_v[-1] > c_v[0]
        f = [t.max_fitness for t in traces]
        assert f[-1] > f[0]

    def test_rates_apply_to_population_fraction(self):
        # floor(rate * size) individuals are touched; at 0.3 and size 10 that is 3
        a = Agent((1,))
        b = Agent((2,))
        alphabet = Alphabet([a, b])
        pop = Population([AgentSequence((a,))] * 10, alphabet)
        cfg = cfg_with(mutation_rate=0.3)
        out = mutate_population(pop, cfg, random.Random(17))
        changed = sum(1 for s in out.sequences if s != pop.sequences[0])
        assert changed <= 3
