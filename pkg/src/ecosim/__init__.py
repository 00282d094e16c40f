"""Deterministic simulator of evolving agent populations.

Agents are short vectors of integer attributes, agent-sequences are the
evolving genotypes, and populations of sequences are scored against user
requests. On top of the evolutionary engine the package provides a
complexity/efficiency metric suite, macro-state stability estimation,
distribution-driven diversity experiments and a desk-scale habitat
network with Hebbian connection adaptation.
"""

from ecosim.core import (
    Agent,
    AgentSequence,
    Alphabet,
    Population,
    UserRequest,
    ValidationError,
    derive_seed,
    new_random_agent,
    snapshot_read,
    snapshot_write,
)
from ecosim.evolution import EvolutionConfig, GenerationTrace, fitness, run

__all__ = [
    "Agent",
    "AgentSequence",
    "Alphabet",
    "Population",
    "UserRequest",
    "ValidationError",
    "derive_seed",
    "new_random_agent",
    "snapshot_read",
    "snapshot_write",
    "EvolutionConfig",
    "GenerationTrace",
    "fitness",
    "run",
]
