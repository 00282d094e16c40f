"""Complexity, efficiency and clustering metrics for variable-length populations.

The central quantity is the per-site entropy over alphabet characters,
normalised by log base |D|. Sites are only scored while enough sequences
are long enough to sample them; the effective length is the largest site
index whose sample size still meets the |D| * length bound (divided by the
cluster count when scoring a sub-population of a clustered partition).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from ecosim.core import Agent, AgentSequence, Alphabet, Population, ValidationError

Character = tuple[int, ...]


class InsufficientSamplesError(ValueError):
    """Raised when an entropy or length computation has no usable samples."""


@dataclass(frozen=True)
class SiteDistribution:
    """Character counts at one site, over the sequences long enough to have it."""

    site: int
    counts: dict[Character, int]
    sample_size: int

    def probabilities(self) -> dict[Character, float]:
        if self.sample_size == 0:
            return {}
        return {c: n / self.sample_size for c, n in self.counts.items()}


@dataclass(frozen=True)
class ComplexityReport:
    """Effective length, per-site entropies and the derived summary numbers."""

    effective_length: int
    entropies: tuple[float, ...]
    complexity: float
    complexity_potential: int
    efficiency: float


def sample_size(pop: Population, site: int) -> int:
    """Number of sequences with length >= site (sites are 1-based)."""
    if site < 1:
        raise ValidationError("site indices are 1-based")
    return sum(1 for s in pop.sequences if len(s) >= site)


def site_distribution(pop: Population, site: int) -> SiteDistribution:
    """Count the characters occurring at ``site`` across the population."""
    if site < 1:
        raise ValidationError("site indices are 1-based")
    counts: dict[Character, int] = {}
    for seq in pop.sequences:
        if len(seq) >= site:
            c = seq.agents[site - 1].character
            counts[c] = counts.get(c, 0) + 1
    return SiteDistribution(site=site, counts=counts, sample_size=sum(counts.values()))


def per_site_entropy(dist: SiteDistribution, alphabet: Alphabet) -> float:
    """Normalised Shannon entropy of one site, in [0, 1].

    Uses log base |D| with 0 * log 0 := 0. A single-character alphabet
    carries no uncertainty, so |D| = 1 is defined as zero.
    """
    if dist.sample_size == 0:
        raise InsufficientSamplesError(
            f"insufficient samples at site {dist.site}"
        )
    if alphabet.size < 2:
        return 0.0
    log_d = math.log(alphabet.size)
    h = 0.0
    for count in dist.counts.values():
        if count:
            p = count / dist.sample_size
            h -= p * math.log(p) / log_d
    return min(max(h, 0.0), 1.0)


def _length_suffix_counts(pop: Population) -> list[int]:
    """suffix[i] = number of sequences with length >= i+1."""
    max_len = pop.max_length()
    hist = [0] * (max_len + 1)
    for seq in pop.sequences:
        hist[len(seq)] += 1
    suffix = [0] * max_len
    running = 0
    for length in range(max_len, 0, -1):
        running += hist[length]
        suffix[length - 1] = running
    return suffix


def effective_length(
    pop: Population, *, cluster_count: int = 1, sample_slack: float = 1.0
) -> int:
    """Largest site index with enough samples for a reliable entropy.

    The primary rule takes the greatest length L with
    sampleSize(L) >= |D| * L / cluster_count (the division only applies
    when scoring a sub-population of a clustered partition). The bound can
    be loosened with ``sample_slack`` > 1 since cluster sizes only
    approximate an even split.
    """
    if len(pop) == 0:
        raise ValidationError("population is empty")
    if cluster_count < 1:
        raise ValidationError("cluster_count must be >= 1")
    suffix = _length_suffix_counts(pop)
    d = pop.alphabet.size
    best = 0
    for length in range(1, len(suffix) + 1):
        bound = d * length / (cluster_count * sample_slack)
        if suffix[length - 1] >= bound:
            best = length
    if best == 0:
        raise InsufficientSamplesError(
            f"population too small: {len(pop)} sequences for alphabet size {d}"
        )
    return best


def build_report(
    pop: Population, *, cluster_count: int = 1, sample_slack: float = 1.0
) -> ComplexityReport:
    """Compute effective length, per-site entropies and the summary numbers."""
    ell = effective_length(pop, cluster_count=cluster_count, sample_slack=sample_slack)
    entropies = tuple(
        per_site_entropy(site_distribution(pop, i), pop.alphabet)
        for i in range(1, ell + 1)
    )
    c_v = max(ell - sum(entropies), 0.0)
    return ComplexityReport(
        effective_length=ell,
        entropies=entropies,
        complexity=c_v,
        complexity_potential=ell,
        efficiency=c_v / ell,
    )


def physical_complexity(pop: Population) -> float:
    """Effective length minus the summed per-site entropies."""
    return build_report(pop).complexity


def complexity_potential(pop: Population) -> int:
    """The maximum attainable complexity: the effective length itself."""
    return effective_length(pop)


def efficiency(pop: Population) -> float:
    """Use of the information space: complexity over complexity potential."""
    return build_report(pop).efficiency


def expected_cluster_efficiency(alphabet_size: int, cluster_count: int) -> float:
    """Limit efficiency of a population made of ``cluster_count`` pure clusters."""
    if alphabet_size < 2:
        raise ValidationError("alphabet_size must be >= 2")
    if not 1 <= cluster_count <= alphabet_size:
        raise ValidationError(
            "pure clusters need disjoint sub-alphabets: 1 <= |T| <= |D|"
        )
    return 1.0 - math.log(cluster_count) / math.log(alphabet_size)


def invert_cluster_count(efficiency_limit: float, alphabet_size: int) -> int:
    """Number of pure clusters implied by a limiting efficiency value."""
    if not 0.0 <= efficiency_limit <= 1.0:
        raise ValidationError("efficiency_limit outside [0, 1]")
    if alphabet_size < 2:
        raise ValidationError("alphabet_size must be >= 2")
    return round(alphabet_size ** (1.0 - efficiency_limit))


@dataclass(frozen=True)
class ClusterSet:
    """A partition of a population into sub-populations with their reports.

    ``inconclusive`` marks the fallback single-cluster partition returned
    when no candidate partition passed the checks; ``pure`` is set when the
    parts' dominant per-site characters are mutually disjoint.
    """

    clusters: tuple[Population, ...]
    reports: tuple[ComplexityReport | None, ...]
    pure: bool
    inconclusive: bool

    @property
    def cluster_count(self) -> int:
        return len(self.clusters)


def _jaccard_distance(a: frozenset, b: frozenset) -> float:
    union = len(a | b)
    if union == 0:
        return 0.0
    return 1.0 - len(a & b) / union


def _partition_genotypes(
    char_sets: Sequence[frozenset], multiplicities: Sequence[int], k: int
) -> list[list[int]]:
    """Split genotype indices into k groups around multiplicity-weighted medoids.

    The heaviest genotype seeds the first group; each further medoid is the
    genotype farthest (by Jaccard distance of character sets) from the
    medoids chosen so far, heaviest first on ties. Every genotype then
    joins its nearest medoid, earliest medoid winning ties. Deterministic
    throughout.
    """
    count = len(char_sets)
    order = sorted(range(count), key=lambda i: (-multiplicities[i], i))
    medoids = [order[0]]
    while len(medoids) < k:
        best = None
        for i in range(count):
            if i in medoids:
                continue
            nearest = min(_jaccard_distance(char_sets[i], char_sets[m]) for m in medoids)
            key = (nearest, multiplicities[i], -i)
            if best is None or key > best[0]:
                best = (key, i)
        medoids.append(best[1])
    groups: list[list[int]] = [[] for _ in medoids]
    for i in range(count):
        at = min(
            range(len(medoids)),
            key=lambda mi: (_jaccard_distance(char_sets[i], char_sets[medoids[mi]]), mi),
        )
        groups[at].append(i)
    return groups


def _score_partition(
    parts: list[Population],
    cluster_count: int,
    efficiency_threshold: float,
    sample_slack: float,
) -> list[ComplexityReport] | None:
    """Reports for every part, or None if any part fails the checks."""
    reports = []
    for part in parts:
        try:
            report = build_report(
                part, cluster_count=cluster_count, sample_slack=sample_slack
            )
        except InsufficientSamplesError:
            return None
        if report.efficiency < efficiency_threshold:
            return None
        reports.append(report)
    return reports


def _dominant_characters(part: Population, report: ComplexityReport) -> set[Character]:
    dominant: set[Character] = set()
    for i in range(1, report.effective_length + 1):
        counts = site_distribution(part, i).counts
        best = max(counts.items(), key=lambda kv: (kv[1], kv[0]))
        dominant.add(best[0])
    return dominant


def detect_clusters(
    pop: Population,
    *,
    efficiency_threshold: float = 0.9,
    size_tolerance: float = 0.25,
    max_clusters: int | None = None,
    sample_slack: float = 1.0,
) -> ClusterSet:
    """Partition a population into clusters of compositionally similar sequences.

    Candidate partitions group the distinct genotypes around multiplicity-
    weighted medoids by Jaccard distance of their character sets. The
    smallest cluster count whose parts all reach the efficiency threshold
    and stay within the size tolerance of an even split wins. If no
    candidate passes, the whole population is returned as a single cluster
    flagged inconclusive.
    """
    if len(pop) == 0:
        raise ValidationError("population is empty")
    genotypes: list[AgentSequence] = []
    index: dict[AgentSequence, int] = {}
    members: list[list[AgentSequence]] = []
    for seq in pop.sequences:
        at = index.get(seq)
        if at is None:
            index[seq] = len(genotypes)
            genotypes.append(seq)
            members.append([seq])
        else:
            members[at].append(seq)
    char_sets = [
        frozenset(agent.character for agent in g.agents) for g in genotypes
    ]
    multiplicities = [len(m) for m in members]
    limit = min(
        len(genotypes),
        pop.alphabet.size if max_clusters is None else max_clusters,
    )
    for k in range(1, limit + 1):
        parts = []
        for group in _partition_genotypes(char_sets, multiplicities, k):
            seqs = [s for gi in group for s in members[gi]]
            parts.append(Population(seqs, pop.alphabet))
        expected = len(pop) / k
        if any(
            abs(len(part) - expected) > size_tolerance * expected for part in parts
        ):
            continue
        reports = _score_partition(
            parts, k, efficiency_threshold, sample_slack
        )
        if reports is None:
            continue
        dominant = [_dominant_characters(p, r) for p, r in zip(parts, reports)]
        pure = all(
            dominant[i].isdisjoint(dominant[j])
            for i in range(len(dominant))
            for j in range(i + 1, len(dominant))
        )
        return ClusterSet(
            clusters=tuple(parts),
            reports=tuple(reports),
            pure=pure,
            inconclusive=False,
        )
    try:
        whole_report: ComplexityReport | None = build_report(pop)
    except InsufficientSamplesError:
        whole_report = None
    return ClusterSet(
        clusters=(pop,),
        reports=(whole_report,),
        pure=False,
        inconclusive=True,
    )


def efficiency_clustered(
    pop: Population,
    *,
    efficiency_threshold: float = 0.9,
    size_tolerance: float = 0.25,
    max_clusters: int | None = None,
    sample_slack: float = 1.0,
    _depth: int = 0,
) -> float:
    """Cluster-aware efficiency: E itself for one cluster, else the average
    of the clusters' values, recursively."""
    kwargs = dict(
        efficiency_threshold=efficiency_threshold,
        size_tolerance=size_tolerance,
        max_clusters=max_clusters,
        sample_slack=sample_slack,
    )
    cluster_set = detect_clusters(pop, **kwargs)
    if cluster_set.cluster_count == 1:
        return efficiency(pop)
    values = []
    for part, report in zip(cluster_set.clusters, cluster_set.reports):
        if _depth >= 2:
            values.append(report.efficiency)
            continue
        sub = detect_clusters(part, **kwargs)
        if sub.cluster_count == 1:
            values.append(report.efficiency)
        else:
            values.append(
                efficiency_clustered(part, _depth=_depth + 1, **kwargs)
            )
    return sum(values) / len(values)


def genotype_space_size(alphabet_size: int, length: int) -> int:
    """Cardinality of the genotype space: |D| ** length."""
    if alphabet_size < 1 or length < 0:
        raise ValidationError("alphabet_size >= 1 and length >= 0 required")
    return alphabet_size ** length


def enumerate_genotypes(
    alphabet: Alphabet | Iterable[Agent], length: int
) -> Iterator[AgentSequence]:
    """Yield every sequence of exactly ``length`` agents. Test-oracle scale only."""
    members = tuple(alphabet)
    for combo in itertools.product(members, repeat=length):
        yield AgentSequence(combo)
