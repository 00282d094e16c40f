"""Domain types, validation, seeded RNG derivation and population snapshots.

Everything here is an immutable value; the rest of the package builds on
these types and on the determinism contract: equal seeds and equal inputs
produce bit-identical results.
"""

from __future__ import annotations

import hashlib
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

MIN_ATTRIBUTE = 1
MAX_ATTRIBUTE = 100

# Attribute count range used by the random agent generator.
SEED_ATTR_COUNT_RANGE = (3, 6)


class ValidationError(ValueError):
    """A constructor was handed a value outside its documented range."""


class SnapshotError(ValueError):
    """A snapshot file could not be parsed; the message names line and field."""


def _check_attribute(value: int, where: str) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValidationError(f"{where}: attribute {value!r} is not an integer")
    if not MIN_ATTRIBUTE <= value <= MAX_ATTRIBUTE:
        raise ValidationError(
            f"{where}: attribute {value} outside [{MIN_ATTRIBUTE}, {MAX_ATTRIBUTE}]"
        )


@dataclass(frozen=True)
class Agent:
    """An atomic service: a non-empty ordered list of integer attributes.

    Attribute order is stored as given, but alphabet identity compares
    attribute multisets: the ``character`` key is the sorted attribute
    tuple, so two agents with the same attributes in a different order
    count as the same alphabet character.
    """

    attributes: tuple[int, ...]
    character: tuple[int, ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        attrs = tuple(self.attributes)
        if len(attrs) == 0:
            raise ValidationError("Agent: attribute list is empty")
        for value in attrs:
            _check_attribute(value, "Agent")
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "character", tuple(sorted(attrs)))

    def __len__(self) -> int:
        return len(self.attributes)


@dataclass(frozen=True, eq=False)
class AgentSequence:
    """An ordered, non-empty composition of agents (one candidate application)."""

    agents: tuple[Agent, ...]
    _hash: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        agents = tuple(self.agents)
        if len(agents) == 0:
            raise ValidationError("AgentSequence: empty sequence")
        for agent in agents:
            if not isinstance(agent, Agent):
                raise ValidationError(f"AgentSequence: {agent!r} is not an Agent")
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "_hash", hash(agents))

    def __len__(self) -> int:
        return len(self.agents)

    def __iter__(self) -> Iterator[Agent]:
        return iter(self.agents)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AgentSequence):
            return NotImplemented
        return self.agents == other.agents

    def __hash__(self) -> int:
        return self._hash

    def attribute_pool(self) -> tuple[int, ...]:
        """All attribute values of all agents, in sequence order."""
        return tuple(v for agent in self.agents for v in agent.attributes)


class Alphabet:
    """The set of distinct agents in play; its size is the entropy log base.

    Members are deduplicated by ``Agent.character`` and kept in first-seen
    order so that uniform draws over the alphabet are reproducible.
    """

    __slots__ = ("members", "_characters")

    def __init__(self, agents: Iterable[Agent]):
        members: list[Agent] = []
        seen: set[tuple[int, ...]] = set()
        for agent in agents:
            if not isinstance(agent, Agent):
                raise ValidationError(f"Alphabet: {agent!r} is not an Agent")
            if agent.character not in seen:
                seen.add(agent.character)
                members.append(agent)
        if not members:
            raise ValidationError("Alphabet: no members")
        self.members: tuple[Agent, ...] = tuple(members)
        self._characters = frozenset(seen)

    @property
    def size(self) -> int:
        return len(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, agent: Agent) -> bool:
        return agent.character in self._characters

    def __iter__(self) -> Iterator[Agent]:
        return iter(self.members)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Alphabet):
            return NotImplemented
        return self._characters == other._characters

    def __repr__(self) -> str:
        return f"Alphabet(size={self.size})"


class Population:
    """A multiset of agent-sequences plus the alphabet they draw from.

    Sequence order is preserved (it is the iteration and serialization
    order) but equality is multiset equality, and the alphabet may contain
    members that do not currently occur in any sequence.
    """

    __slots__ = ("sequences", "alphabet")

    def __init__(self, sequences: Iterable[AgentSequence], alphabet: Alphabet):
        seqs = tuple(sequences)
        for seq in seqs:
            if not isinstance(seq, AgentSequence):
                raise ValidationError(f"Population: {seq!r} is not an AgentSequence")
            for agent in seq.agents:
                if agent not in alphabet:
                    raise ValidationError(
                        f"Population: agent {agent.attributes} not in alphabet"
                    )
        self.sequences: tuple[AgentSequence, ...] = seqs
        self.alphabet = alphabet

    @classmethod
    def _wrap(
        cls, sequences: tuple[AgentSequence, ...], alphabet: Alphabet
    ) -> "Population":
        # Membership re-checks are skipped: only for engine operators whose
        # outputs are closed over the alphabet by construction.
        pop = cls.__new__(cls)
        pop.sequences = sequences
        pop.alphabet = alphabet
        return pop

    @property
    def size(self) -> int:
        return len(self.sequences)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[AgentSequence]:
        return iter(self.sequences)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Population):
            return NotImplemented
        return (
            Counter(self.sequences) == Counter(other.sequences)
            and self.alphabet == other.alphabet
        )

    def __repr__(self) -> str:
        return f"Population(size={self.size}, alphabet_size={self.alphabet.size})"

    def max_length(self) -> int:
        return max((len(s) for s in self.sequences), default=0)


@dataclass(frozen=True)
class UserRequest:
    """The selection pressure: requirement groups of integer attributes.

    ``required_attributes`` flattens the groups in order, preserving
    duplicates; the fitness function sums one minimised difference per
    flattened attribute.
    """

    services: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        groups = tuple(tuple(group) for group in self.services)
        if len(groups) == 0:
            raise ValidationError("UserRequest: no requirement groups")
        for group in groups:
            if len(group) == 0:
                raise ValidationError("UserRequest: empty requirement group")
            for value in group:
                _check_attribute(value, "UserRequest")
        object.__setattr__(self, "services", groups)

    @property
    def length(self) -> int:
        """Number of requirement groups (atomic services)."""
        return len(self.services)

    def required_attributes(self) -> tuple[int, ...]:
        return tuple(v for group in self.services for v in group)


def derive_seed(master: int, *labels: object) -> int:
    """Derive an independent 64-bit stream seed from a master seed and labels.

    Uses SHA-256 over a canonical encoding, so derived streams are stable
    across platforms and Python versions and never collide in practice.
    """
    text = repr((int(master),) + labels).encode("utf-8")
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "big")


def rng_from(master: int, *labels: object) -> random.Random:
    """A fresh random stream for one consumer, derived from ``master``."""
    return random.Random(derive_seed(master, *labels))


def new_random_agent(rng: random.Random) -> Agent:
    """Draw a fresh agent: 3 to 6 attributes, each uniform in [1, 100]."""
    lo, hi = SEED_ATTR_COUNT_RANGE
    count = rng.randint(lo, hi)
    return Agent(tuple(rng.randint(MIN_ATTRIBUTE, MAX_ATTRIBUTE) for _ in range(count)))


# Snapshot format: a header line declaring the alphabet, then one sequence
# per line. Agents are separated by "|", attributes by ",". Example:
#
#   alphabet: 3,4,5|1,5,9
#   3,4,5|1,5,9
#   1,5,9

_HEADER_PREFIX = "alphabet:"


def _format_agent(agent: Agent) -> str:
    return ",".join(str(v) for v in agent.attributes)


def _parse_agent(text: str, line_no: int, field_no: int) -> Agent:
    parts = text.split(",")
    values = []
    for part in parts:
        part = part.strip()
        try:
            values.append(int(part))
        except ValueError:
            raise SnapshotError(
                f"line {line_no}, agent {field_no}: {part!r} is not an integer"
            ) from None
    try:
        return Agent(tuple(values))
    except ValidationError as exc:
        raise SnapshotError(f"line {line_no}, agent {field_no}: {exc}") from None


def _parse_agent_list(text: str, line_no: int) -> list[Agent]:
    return [
        _parse_agent(chunk, line_no, field_no)
        for field_no, chunk in enumerate(text.split("|"), start=1)
    ]


def snapshot_write(pop: Population, path: str | Path) -> None:
    """Write a population snapshot as diff-able line-oriented text."""
    lines = [_HEADER_PREFIX + " " + "|".join(_format_agent(a) for a in pop.alphabet)]
    for seq in pop.sequences:
        lines.append("|".join(_format_agent(a) for a in seq.agents))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def snapshot_read(path: str | Path) -> Population:
    """Read a population snapshot written by :func:`snapshot_write`."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise SnapshotError("line 1: empty snapshot file")
    header = lines[0]
    if not header.startswith(_HEADER_PREFIX):
        raise SnapshotError(f"line 1: expected {_HEADER_PREFIX!r} header")
    alphabet = Alphabet(_parse_agent_list(header[len(_HEADER_PREFIX):].strip(), 1))
    sequences = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        agents = _parse_agent_list(line.strip(), line_no)
        sequences.append(AgentSequence(tuple(agents)))
    try:
        return Population(sequences, alphabet)
    except ValidationError as exc:
        raise SnapshotError(f"snapshot inconsistent with header: {exc}") from None
