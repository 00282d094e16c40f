"""Habitat network: pools, seeding, migration and Hebbian connection adaptation.

Habitats hold an agent pool and the sequences that evolved or migrated
there. A population answering a request is seeded from the local pool plus
any hosted sequences already useful for that request. After a run, the
best sequence is hosted locally and offered along each outgoing connection
with that direction's probability; an offer succeeds if the sequence is
useful for some request recently seen at the receiving habitat. Successful
exchanges strengthen the connection direction, failed attempts weaken it.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque, Sequence

from ecosim.core import (
    Agent,
    AgentSequence,
    Population,
    UserRequest,
    ValidationError,
    derive_seed,
    new_random_agent,
    rng_from,
)
from ecosim.evolution import (
    EvolutionConfig,
    GenerationTrace,
    build_initial_population,
    fitness,
    run,
)

DEFAULT_POOL_SIZE = 20
DEFAULT_USEFULNESS_THRESHOLD = 0.5
DEFAULT_REQUEST_WINDOW = 10


class BarrenHabitatError(RuntimeError):
    """A population cannot be seeded from an empty agent pool."""


@dataclass(frozen=True)
class HebbianParams:
    """Connection probability adaptation: bounded, monotone updates."""

    reinforce: float = 0.1
    decay: float = 0.1
    floor: float = 0.01
    ceiling: float = 0.99

    def __post_init__(self) -> None:
        if not 0.0 <= self.floor <= self.ceiling <= 1.0:
            raise ValidationError("need 0 <= floor <= ceiling <= 1")
        if not 0.0 <= self.reinforce <= 1.0 or not 0.0 <= self.decay <= 1.0:
            raise ValidationError("reinforce and decay must be in [0, 1]")


@dataclass(frozen=True)
class Connection:
    """A bi-directional link with one probability per direction.

    Endpoints are stored in canonical (sorted) order; ``p_ab`` is the
    probability of moving from the lower id to the higher one.
    """

    a: str
    b: str
    p_ab: float
    p_ba: float

    def __post_init__(self) -> None:
        if self.a >= self.b:
            raise ValidationError("endpoints must be in canonical order a < b")
        for p in (self.p_ab, self.p_ba):
            if not 0.0 <= p <= 1.0:
                raise ValidationError("connection probabilities must be in [0, 1]")

    def probability(self, source: str, target: str) -> float:
        if (source, target) == (self.a, self.b):
            return self.p_ab
        if (source, target) == (self.b, self.a):
            return self.p_ba
        raise ValidationError(f"connection {self.a}-{self.b} has no direction {source}->{target}")


def hebbian_update(
    connection: Connection,
    direction: tuple[str, str],
    success: bool,
    params: HebbianParams = HebbianParams(),
) -> Connection:
    """Strengthen or weaken one direction of a connection; the other is untouched."""
    source, target = direction
    p = connection.probability(source, target)
    if success:
        p = min(params.ceiling, p + params.reinforce * (1.0 - p))
    else:
        p = max(params.floor, p - params.decay * p)
    if (source, target) == (connection.a, connection.b):
        return replace(connection, p_ab=p)
    return replace(connection, p_ba=p)


@dataclass
class Habitat:
    """A peer: an agent pool, hosted sequences and a recent-request window."""

    id: str
    agent_pool: list[Agent]
    hosted_sequences: list[AgentSequence] = field(default_factory=list)
    recent_requests: Deque[UserRequest] = field(
        default_factory=lambda: deque(maxlen=DEFAULT_REQUEST_WINDOW)
    )


def new_random_pool(rng: random.Random, size: int = DEFAULT_POOL_SIZE) -> list[Agent]:
    """Seed an agent pool with ``size`` random agents."""
    return [new_random_agent(rng) for _ in range(size)]


def seed_population(
    habitat: Habitat,
    req: UserRequest,
    cfg: EvolutionConfig,
    usefulness_threshold: float = DEFAULT_USEFULNESS_THRESHOLD,
) -> Population:
    """Generation 0 for a request at this habitat.

    The alphabet is the agent pool plus the agents of every hosted
    sequence; hosted sequences already useful for the request are injected
    verbatim ahead of the random short sequences.
    """
    if not habitat.agent_pool:
        raise BarrenHabitatError(f"barren habitat {habitat.id}")
    injected = [
        s for s in habitat.hosted_sequences if fitness(s, req) > usefulness_threshold
    ]
    extra = [a for s in habitat.hosted_sequences for a in s.agents]
    return build_initial_population(
        habitat.agent_pool, cfg, rng_from(cfg.seed, "run"), injected, extra
    )


@dataclass
class HabitatNetwork:
    """Habitats, their connections and the network-wide adaptation knobs."""

    habitats: dict[str, Habitat]
    connections: dict[tuple[str, str], Connection]
    hebbian: HebbianParams = HebbianParams()
    seed: int = 0
    usefulness_threshold: float = DEFAULT_USEFULNESS_THRESHOLD
    new_agent_rate: float = 0.0
    steps_done: int = 0
    runs_done: int = 0

    def connection_between(self, x: str, y: str) -> Connection | None:
        return self.connections.get((min(x, y), max(x, y)))

    def neighbors(self, habitat_id: str) -> list[str]:
        out = []
        for (a, b) in self.connections:
            if a == habitat_id:
                out.append(b)
            elif b == habitat_id:
                out.append(a)
        return sorted(out)


def connect(
    network: HabitatNetwork, x: str, y: str, probability: float = 0.5
) -> None:
    """Add a bi-directional connection with the same initial probability each way."""
    a, b = min(x, y), max(x, y)
    network.connections[(a, b)] = Connection(a, b, probability, probability)


@dataclass(frozen=True)
class MigrationEvent:
    """One migration attempt along a connection direction."""

    step: int
    source: str
    target: str
    success: bool
    probability_after: float


@dataclass(frozen=True)
class RunRecord:
    """One evolutionary run executed inside the network."""

    step: int
    habitat_id: str
    run_seed: int
    traces: list[GenerationTrace]
    best_sequence: AgentSequence


@dataclass(frozen=True)
class NetworkStepResult:
    runs: list[RunRecord]
    migrations: list[MigrationEvent]


def deploy_and_migrate(
    network: HabitatNetwork,
    habitat_id: str,
    best_sequence: AgentSequence,
    rng: random.Random,
    step: int = 0,
) -> list[MigrationEvent]:
    """Host the run's best sequence locally, then offer it to each neighbor.

    An offer happens with the outgoing connection probability; it succeeds
    when the sequence is useful for some request in the neighbor's recent
    window, in which case the neighbor hosts a copy. Habitats and
    connections are updated in place; attempted offers are returned so the
    caller can apply the Hebbian updates.
    """
    habitat = network.habitats[habitat_id]
    if best_sequence not in habitat.hosted_sequences:
        habitat.hosted_sequences.append(best_sequence)
    events = []
    for neighbor_id in network.neighbors(habitat_id):
        key = (min(habitat_id, neighbor_id), max(habitat_id, neighbor_id))
        connection = network.connections[key]
        p = connection.probability(habitat_id, neighbor_id)
        if rng.random() >= p:
            continue
        neighbor = network.habitats[neighbor_id]
        success = any(
            fitness(best_sequence, r) > network.usefulness_threshold
            for r in neighbor.recent_requests
        )
        if success and best_sequence not in neighbor.hosted_sequences:
            neighbor.hosted_sequences.append(best_sequence)
        updated = hebbian_update(
            connection, (habitat_id, neighbor_id), success, network.hebbian
        )
        network.connections[key] = updated
        events.append(
            MigrationEvent(
                step=step,
                source=habitat_id,
                target=neighbor_id,
                success=success,
                probability_after=updated.probability(habitat_id, neighbor_id),
            )
        )
    return events


def step_network(
    network: HabitatNetwork,
    request_batch: Sequence[tuple[str, UserRequest]],
    cfg: EvolutionConfig,
) -> NetworkStepResult:
    """Process one batch of user requests against the network.

    All requests are registered in their habitats' recent windows first,
    so solutions evolved earlier in the batch can migrate toward habitats
    whose requests come later. Then each request triggers a local
    evolution, deployment and migration, in batch order.
    """
    step = network.steps_done
    for habitat_id, req in request_batch:
        if habitat_id not in network.habitats:
            raise ValidationError(f"unknown habitat {habitat_id!r}")
        network.habitats[habitat_id].recent_requests.append(req)
    runs = []
    migrations = []
    for habitat_id, req in request_batch:
        habitat = network.habitats[habitat_id]
        if network.new_agent_rate > 0.0:
            pool_rng = rng_from(network.seed, "new-agent", network.runs_done)
            if pool_rng.random() < network.new_agent_rate:
                habitat.agent_pool.append(new_random_agent(pool_rng))
        run_seed = derive_seed(network.seed, "run", network.runs_done)
        run_cfg = replace(cfg, seed=run_seed)
        injected = [
            s
            for s in habitat.hosted_sequences
            if fitness(s, req) > network.usefulness_threshold
        ]
        extra = [a for s in habitat.hosted_sequences for a in s.agents]
        traces = run(
            run_cfg,
            req,
            habitat.agent_pool,
            injected=injected,
            extra_alphabet=extra,
            record_metrics=False,
        )
        final = traces[-1].population
        best = max(final.sequences, key=lambda s: fitness(s, req))
        migrate_rng = rng_from(network.seed, "migrate", network.runs_done)
        migrations.extend(
            deploy_and_migrate(network, habitat_id, best, migrate_rng, step=step)
        )
        runs.append(
            RunRecord(
                step=step,
                habitat_id=habitat_id,
                run_seed=run_seed,
                traces=traces,
                best_sequence=best,
            )
        )
        network.runs_done += 1
    network.steps_done += 1
    return NetworkStepResult(runs=runs, migrations=migrations)


def small_world_network(
    habitat_count: int,
    seed: int,
    *,
    neighbors: int = 2,
    rewire_probability: float = 0.1,
    pool_size: int = DEFAULT_POOL_SIZE,
    initial_probability: float = 0.5,
    hebbian: HebbianParams = HebbianParams(),
) -> HabitatNetwork:
    """Ring-plus-rewiring topology with per-habitat random pools.

    Each habitat is linked to ``neighbors`` ring neighbors on each side,
    then every link is rewired to a random target with the given
    probability, which produces the strongly clustered short-path graphs
    typical of real peer networks.
    """
    if habitat_count < 2:
        raise ValidationError("a network needs at least 2 habitats")
    ids = [f"h{i:03d}" for i in range(habitat_count)]
    habitats = {
        hid: Habitat(hid, new_random_pool(rng_from(seed, "pool", i), pool_size))
        for i, hid in enumerate(ids)
    }
    rng = rng_from(seed, "topology")
    edges: set[tuple[str, str]] = set()
    for i in range(habitat_count):
        for d in range(1, neighbors + 1):
            j = (i + d) % habitat_count
            edges.add((min(ids[i], ids[j]), max(ids[i], ids[j])))
    rewired: set[tuple[str, str]] = set()
    for a, b in sorted(edges):
        if rng.random() < rewire_probability:
            candidates = [x for x in ids if x != a]
            new_b = candidates[rng.randrange(len(candidates))]
            a2, b2 = min(a, new_b), max(a, new_b)
            if (a2, b2) not in rewired:
                rewired.add((a2, b2))
                continue
        rewired.add((a, b))
    network = HabitatNetwork(
        habitats=habitats, connections={}, hebbian=hebbian, seed=seed
    )
    for a, b in sorted(rewired):
        network.connections[(a, b)] = Connection(
            a, b, initial_probability, initial_probability
        )
    return network
