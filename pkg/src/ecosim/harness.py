"""Experiment configuration, orchestration and artifact emission.

One configuration file (INI sections of key = value pairs) plus CLI
overrides selects an experiment kind, its scale and its output directory.
Every experiment derives all randomness from the master seed, and artifact
files are written with stable formatting, so the same configuration always
produces byte-identical outputs.
"""

from __future__ import annotations

import configparser
import csv
import json
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from ecosim import scenarios
from ecosim.complexity import build_report, detect_clusters, efficiency_clustered
from ecosim.core import ValidationError, derive_seed, rng_from
from ecosim.diversity import RequestDistribution, run_diversity_experiment
from ecosim.evolution import EvolutionConfig, GenerationTrace, run
from ecosim.habitat import (
    Connection,
    Habitat,
    HabitatNetwork,
    new_random_pool,
    step_network,
)
from ecosim.stability import (
    MACRO_STATE_LABELS,
    build_instability_report,
    estimate_occupation,
    stability_sweep,
)

EXPERIMENT_KINDS = (
    "evolve",
    "complexity",
    "clustering",
    "stability",
    "sweep",
    "diversity-length",
    "diversity-modularity",
    "habitat",
)

# (replicates, horizon) presets; desk scale is what the test suite uses.
PRESETS = {
    "desk": {"replicates": 200, "horizon": 300},
    "paper": {"replicates": 10_000, "horizon": 1_000},
}

DEFAULT_REPLICATES = {
    "evolve": 3,
    "complexity": 1,
    "clustering": 20,
    "stability": 200,
    "sweep": 50,
    "diversity-length": 500,
    "diversity-modularity": 500,
    "habitat": 100,
}


class ConfigError(ValueError):
    """An experiment configuration is invalid; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment: kind, scale, seeds and output location."""

    kind: str
    seed: int = 2026
    replicates: int | None = None
    horizon: int = 300
    workers: int = 1
    out_dir: Path = Path("out")
    evolution_overrides: dict[str, Any] = field(default_factory=dict)
    length_distribution: RequestDistribution = RequestDistribution.uniform(2, 18)
    modularity_distribution: RequestDistribution = RequestDistribution.uniform(2, 12)
    pool_size: int = 20

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(
                f"[experiment] kind: {self.kind!r} is not one of {', '.join(EXPERIMENT_KINDS)}"
            )
        if self.replicates is not None and self.replicates < 1:
            raise ConfigError("[experiment] replicates: must be >= 1")
        if self.horizon < 0:
            raise ConfigError("[experiment] horizon: must be >= 0")
        if self.workers < 1:
            raise ConfigError("[experiment] workers: must be >= 1")

    @property
    def effective_replicates(self) -> int:
        if self.replicates is not None:
            return self.replicates
        return DEFAULT_REPLICATES[self.kind]


def _parse_scalar(section: str, key: str, raw: str, kind: type) -> Any:
    try:
        if kind is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


_EVOLUTION_FIELD_TYPES = {
    "base_population_size": int,
    "max_generations": int,
    "mutation_rate": float,
    "crossover_rate": float,
    "parsimony_coefficient": float,
    "initial_mean_len": float,
}


def _parse_distribution(
    parser: configparser.ConfigParser, section: str, default: RequestDistribution
) -> RequestDistribution:
    if not parser.has_section(section):
        return default
    law = parser.get(section, "law", fallback=default.law)
    lo = _parse_scalar(section, "lo", parser.get(section, "lo", fallback=str(default.lo)), int)
    hi = _parse_scalar(section, "hi", parser.get(section, "hi", fallback=str(default.hi)), int)
    kwargs: dict[str, Any] = {}
    if parser.has_option(section, "mean"):
        kwargs["mean"] = _parse_scalar(section, "mean", parser.get(section, "mean"), float)
    if parser.has_option(section, "stddev"):
        kwargs["stddev"] = _parse_scalar(section, "stddev", parser.get(section, "stddev"), float)
    if parser.has_option(section, "exponent"):
        kwargs["exponent"] = _parse_scalar(
            section, "exponent", parser.get(section, "exponent"), float
        )
    try:
        return RequestDistribution(law, lo, hi, **kwargs)
    except ValidationError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def load_config(
    path: str | Path | None,
    *,
    kind: str | None = None,
    seed: int | None = None,
    replicates: int | None = None,
    out_dir: str | Path | None = None,
    workers: int | None = None,
) -> ExperimentConfig:
    """Read an INI config file and apply CLI overrides on top."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} does not exist")
        parser.read(path)
    section = "experiment"
    values: dict[str, Any] = {}
    if parser.has_section(section):
        preset = parser.get(section, "preset", fallback=None)
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"[experiment] preset: unknown preset {preset!r}")
            values.update(PRESETS[preset])
        for key, parse in (
            ("seed", int),
            ("replicates", int),
            ("horizon", int),
            ("workers", int),
        ):
            if parser.has_option(section, key):
                values[key] = _parse_scalar(section, key, parser.get(section, key), parse)
        if parser.has_option(section, "kind"):
            values["kind"] = parser.get(section, "kind")
        if parser.has_option(section, "out"):
            values["out_dir"] = Path(parser.get(section, "out"))
    overrides: dict[str, Any] = {}
    if parser.has_section("evolution"):
        for key in parser.options("evolution"):
            if key not in _EVOLUTION_FIELD_TYPES:
                raise ConfigError(f"[evolution] {key}: unknown field")
            overrides[key] = _parse_scalar(
                "evolution", key, parser.get("evolution", key), _EVOLUTION_FIELD_TYPES[key]
            )
    values["evolution_overrides"] = overrides
    values["length_distribution"] = _parse_distribution(
        parser, "length_distribution", RequestDistribution.uniform(2, 18)
    )
    values["modularity_distribution"] = _parse_distribution(
        parser, "modularity_distribution", RequestDistribution.uniform(2, 12)
    )
    if parser.has_section("habitat") and parser.has_option("habitat", "pool_size"):
        values["pool_size"] = _parse_scalar(
            "habitat", "pool_size", parser.get("habitat", "pool_size"), int
        )
    if kind is not None:
        values["kind"] = kind
    if seed is not None:
        values["seed"] = seed
    if replicates is not None:
        values["replicates"] = replicates
    if out_dir is not None:
        values["out_dir"] = Path(out_dir)
    if workers is not None:
        values["workers"] = workers
    if "kind" not in values:
        raise ConfigError("[experiment] kind: missing (or pass --experiment)")
    return ExperimentConfig(**values)


def _evolution_config(cfg: ExperimentConfig, defaults: EvolutionConfig) -> EvolutionConfig:
    if not cfg.evolution_overrides:
        return defaults
    return replace(defaults, **cfg.evolution_overrides)


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path: Path, payload: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


TRACE_COLUMNS = (
    "max_fitness",
    "mean_fitness",
    "mean_len",
    "complexity",
    "efficiency",
)


def trace_rows(traces: Sequence[GenerationTrace]) -> list[list[Any]]:
    return [
        [t.generation, t.max_fitness, t.mean_fitness, t.mean_length, t.complexity, t.efficiency]
        for t in traces
    ]


TRACE_FIELDS = {
    "max_fitness": "max_fitness",
    "mean_fitness": "mean_fitness",
    "mean_len": "mean_length",
    "complexity": "complexity",
    "efficiency": "efficiency",
}


def aggregate(trace_lists: Sequence[Sequence[GenerationTrace]]) -> list[dict[str, Any]]:
    """Column-wise mean and population stddev per generation across replicates."""
    if not trace_lists:
        raise ValidationError("no traces to aggregate")
    length = len(trace_lists[0])
    if any(len(traces) != length for traces in trace_lists):
        raise ValidationError("ragged traces: replicates differ in length")
    rows = []
    for g in range(length):
        row: dict[str, Any] = {"generation": trace_lists[0][g].generation}
        for column in TRACE_COLUMNS:
            values = [getattr(traces[g], TRACE_FIELDS[column]) for traces in trace_lists]
            if any(v is None for v in values):
                row[f"{column}_mean"] = None
                row[f"{column}_std"] = None
            else:
                row[f"{column}_mean"] = statistics.fmean(values)
                row[f"{column}_std"] = statistics.pstdev(values)
        rows.append(row)
    return rows


def _run_evolve(cfg: ExperimentConfig, out: Path) -> dict[str, Any]:
    pool, req = scenarios.stability_scenario(cfg.seed, cfg.pool_size)
    base = EvolutionConfig(
        base_population_size=30, max_generations=cfg.horizon, seed=cfg.seed
    )
    evo = _evolution_config(cfg, base)
    trace_lists = []
    for r in range(cfg.effective_replicates):
        rep = replace(evo, seed=derive_seed(cfg.seed, "replicate", r))
        traces = run(rep, req, pool)
        trace_lists.append(traces)
        write_csv(
            out / f"trace_{r:03d}.csv",
            ("generation",) + TRACE_COLUMNS,
            trace_rows(traces),
        )
    rows = aggregate(trace_lists)
    header = list(rows[0].keys())
    write_csv(out / "aggregate.csv", header, [[row[k] for k in header] for row in rows])
    final = trace_lists[0][-1]
    summary = {
        "replicates": cfg.effective_replicates,
        "generations": evo.max_generations,
        "final_max_fitness": final.max_fitness,
        "final_complexity": final.complexity,
        "final_efficiency": final.efficiency,
    }
    write_json(out / "summary.json", summary)
    return summary


def _run_complexity(cfg: ExperimentConfig, out: Path) -> dict[str, Any]:
    pool, req = scenarios.stability_scenario(cfg.seed, cfg.pool_size)
    base = EvolutionConfig(
        base_population_size=30, max_generations=cfg.horizon, seed=cfg.seed
    )
    evo = _evolution_config(cfg, base)
    traces = run(evo, req, pool)
    population = traces[-1].population
    report = build_report(population)
    clusters = detect_clusters(population)
    write_csv(
        out / "complexity_sites.csv",
        ("site", "sample_size", "entropy"),
        [
            [i + 1, sum(1 for s in population.sequences if len(s) > i), h]
            for i, h in enumerate(report.entropies)
        ],
    )
    summary = {
        "effective_length": report.effective_length,
        "complexity": report.complexity,
        "complexity_potential": report.complexity_potential,
        "efficiency": report.efficiency,
        "efficiency_clustered": efficiency_clustered(population),
        "cluster_count": clusters.cluster_count,
        "clustering_inconclusive": clusters.inconclusive,
    }
    write_json(out / "complexity_summary.json", summary)
    return summary


def _run_clustering(cfg: ExperimentConfig, out: Path) -> dict[str, Any]:
    evo = _evolution_config(cfg, scenarios.clustering_config(cfg.seed))
    outcomes = scenarios.clustering_experiment(
        cfg.seed, seeds=cfg.effective_replicates, workers=cfg.workers, cfg=evo
    )
    write_csv(
        out / "clustering_runs.csv",
        (
            "seed",
            "mean_efficiency",
            "cluster_count",
            "min_cluster_efficiency",
            "pure",
            "efficiency_clustered",
        ),
        [
            [
                o.seed,
                o.mean_efficiency,
                o.cluster_count,
                o.min_cluster_efficiency,
                o.pure,
                o.efficiency_clustered,
            ]
            for o in outcomes
        ],
    )
    write_csv(
        out / "efficiency_curve.csv",
        ("generation", "efficiency"),
        list(enumerate(outcomes[0].efficiency_curve)),
    )
    summary = {
        "runs": len(outcomes),
        "mean_efficiency": statistics.fmean(o.mean_efficiency for o in outcomes),
        "two_cluster_runs": sum(1 for o in outcomes if o.cluster_count == 2),
        "pure_runs": sum(1 for o in outcomes if o.pure),
    }
    write_json(out / "clustering_summary.json", summary)
    return summary


def _run_stability(cfg: ExperimentConfig, out: Path) -> dict[str, Any]:
    pool, req = scenarios.stability_scenario(cfg.seed, cfg.pool_size)
    base = EvolutionConfig(
        base_population_size=30, max_generations=cfg.horizon, seed=cfg.seed
    )
    evo = _evolution_config(cfg, base)
    curves = estimate_occupation(
        evo, req, pool, cfg.effective_replicates, cfg.horizon, workers=cfg.workers
    )
    write_csv(
        out / "macrostates.csv",
        ("generation",) + tuple(f"p_{label}" for label in MACRO_STATE_LABELS),
        [
            [d.generation] + [d.probability(label) for label in MACRO_STATE_LABELS]
            for d in curves
        ],
    )
    report = build_instability_report(curves)
    summary = {
        "replicates": cfg.effective_replicates,
        "horizon": cfg.horizon,
        "degree_of_instability": report.degree_of_instability,
        "is_stable": report.is_stable,
        "n_states": report.n_states,
        "limit_distribution": report.limit_distribution,
    }
    write_json(out / "instability.json", summary)
    return summary


def _run_sweep(cfg: ExperimentConfig, out: Path) -> dict[str, Any]:
    pool, req = scenarios.sweep_scenario(cfg.seed, cfg.pool_size)
    base = EvolutionConfig(
        base_population_size=24, max_generations=cfg.horizon, seed=cfg.seed
    )
    evo = _evolution_config(cfg, base)
    cells = stability_sweep(
        evo, req, pool, cfg.effective_replicates, cfg.horizon, workers=cfg.workers
    )
    write_csv(
        out / "sweep.csv",
        ("mutation_pct", "crossover_pct", "d_ins"),
        [
            [round(c.mutation_rate * 100), round(c.crossover_rate * 100), c.degree_of_instability]
            for c in cells
        ],
    )
    summary = {
        "cells": len(cells),
        "max_d_ins": max(c.degree_of_instability for c in cells),
        "unstable_cells": sum(1 for c in cells if c.degree_of_instability > 0),
    }
    write_json(out / "sweep_summary.json", summary)
    return summary


def _diversity_defaults(cfg: ExperimentConfig) -> EvolutionConfig:
    return EvolutionConfig(
        base_population_size=40,
        max_generations=300,
        seed=cfg.seed,
        mutation_rate=0.3,
        crossover_rate=0.1,
        parsimony_coefficient=0.4,
    )


def _run_diversity(cfg: ExperimentConfig, out: Path, which: str) -> dict[str, Any]:
    evo = _evolution_config(cfg, _diversity_defaults(cfg))
    length_result, modularity_result = run_diversity_experiment(
        cfg.length_distribution,
        cfg.modularity_distribution,
        cfg.effective_replicates,
        evo,
        pool_size=cfg.pool_size,
        workers=cfg.workers,
    )
    result = length_result if which == "length" else modularity_result
    write_csv(
        out / f"diversity_{which}_bins.csv",
        ("bin", "observed", "expected"),
        list(zip(result.bins, result.observed, result.expected)),
    )
    summary = {
        "law": result.law,
        "property": result.property_name,
        "statistic": result.statistic,
        "dof": result.dof,
        "critical_lower": result.critical_lower,
        "critical_upper": result.critical_upper,
        "pass_lower": result.pass_lower,
        "pass_upper": result.pass_upper,
        "observed_mean": result.observed_mean,
        "expected_mean": result.expected_mean,
    }
    write_json(out / f"diversity_{which}_summary.json", summary)
    return summary


def _run_habitat(cfg: ExperimentConfig, out: Path) -> dict[str, Any]:
    base = EvolutionConfig(
        base_population_size=30, max_generations=cfg.horizon, seed=cfg.seed
    )
    evo = _evolution_config(cfg, base)
    outcomes = scenarios.acceleration_experiment(
        cfg.seed, evo, seeds=cfg.effective_replicates, workers=cfg.workers
    )
    write_csv(
        out / "habitat_pairs.csv",
        ("seed", "generations_with_sharing", "generations_without_sharing"),
        [[o.seed, o.with_sharing, o.without_sharing] for o in outcomes],
    )
    demo = scenarios.acceleration_pair(derive_seed(cfg.seed, "demo"), evo)
    network = _demo_network(cfg, evo)
    write_csv(
        out / "topology.csv",
        ("habitat_a", "habitat_b", "p_ab", "p_ba"),
        [
            [c.a, c.b, c.p_ab, c.p_ba]
            for c in (network[0].connections[k] for k in sorted(network[0].connections))
        ],
    )
    write_csv(
        out / "migration_log.csv",
        ("step", "from", "to", "success", "p_after"),
        [
            [e.step, e.source, e.target, e.success, e.probability_after]
            for e in network[1]
        ],
    )
    summary = {
        "pairs": len(outcomes),
        "median_with_sharing": statistics.median(o.with_sharing for o in outcomes),
        "median_without_sharing": statistics.median(o.without_sharing for o in outcomes),
        "demo_pair": {"with": demo.with_sharing, "without": demo.without_sharing},
    }
    write_json(out / "habitat_summary.json", summary)
    return summary


def _demo_network(cfg: ExperimentConfig, evo: EvolutionConfig):
    from ecosim.habitat import small_world_network

    network = small_world_network(
        6, derive_seed(cfg.seed, "demo-network"), pool_size=cfg.pool_size
    )
    migrations = []
    for step in range(3):
        batch = []
        for hid in sorted(network.habitats):
            pool = network.habitats[hid].agent_pool
            req = scenarios.coverable_request(
                pool, rng_from(cfg.seed, "demo-req", step, hid)
            )
            batch.append((hid, req))
        result = step_network(network, batch, replace(evo, max_generations=60))
        migrations.extend(result.migrations)
    return network, migrations


_RUNNERS = {
    "evolve": _run_evolve,
    "complexity": _run_complexity,
    "clustering": _run_clustering,
    "stability": _run_stability,
    "sweep": _run_sweep,
    "habitat": _run_habitat,
}


def run_experiment(cfg: ExperimentConfig) -> dict[str, Any]:
    """Execute one experiment, writing its artifacts under the output directory."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.kind == "diversity-length":
        summary = _run_diversity(cfg, out, "length")
    elif cfg.kind == "diversity-modularity":
        summary = _run_diversity(cfg, out, "modularity")
    else:
        summary = _RUNNERS[cfg.kind](cfg, out)
    return summary
