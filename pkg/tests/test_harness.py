import subprocess
import sys
from dataclasses import replace

import pytest

from ecosim.evolution import GenerationTrace
from ecosim.harness import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    load_config,
    run_experiment,
)
from ecosim.diversity import GAUSSIAN


class TestLoadConfig:
    def test_defaults_from_kind_only(self):
        cfg = load_config(None, kind="stability")
        assert cfg.kind == "stability"
        assert cfg.effective_replicates == 200
        assert cfg.horizon == 300

    def test_unknown_kind_is_config_error(self):
        with pytest.raises(ConfigError, match="kind"):
            load_config(None, kind="banana")

    def test_missing_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            load_config(None)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config("nope.ini", kind="evolve")

    def test_ini_parsing_and_overrides(self, tmp_path):
        path = tmp_path / "experiment.ini"
        path.write_text(
            "[experiment]\n"
            "kind = stability\n"
            "seed = 99\n"
            "replicates = 7\n"
            "horizon = 20\n"
            "[evolution]\n"
            "base_population_size = 12\n"
            "mutation_rate = 0.2\n"
            "[length_distribution]\n"
            "law = gaussian\n"
            "lo = 2\n"
            "hi = 10\n"
            "stddev = 2.5\n",
            encoding="utf-8",
        )
        cfg = load_config(path)
        assert cfg.seed == 99
        assert cfg.effective_replicates == 7
        assert cfg.horizon == 20
        assert cfg.evolution_overrides == {
            "base_population_size": 12,
            "mutation_rate": 0.2,
        }
        assert cfg.length_distribution.law == GAUSSIAN
        assert cfg.length_distribution.stddev == 2.5
        overridden = load_config(path, seed=1, replicates=2)
        assert overridden.seed == 1
        assert overridden.effective_replicates == 2

    def test_bad_field_names_section(self, tmp_path):
        path = tmp_path / "experiment.ini"
        path.write_text(
            "[experiment]\nkind = evolve\n[evolution]\nturbo = 9\n", encoding="utf-8"
        )
        with pytest.raises(ConfigError, match=r"\[evolution\] turbo"):
            load_config(path)

    def test_bad_value_names_field(self, tmp_path):
        path = tmp_path / "experiment.ini"
        path.write_text("[experiment]\nkind = evolve\nseed = abc\n", encoding="utf-8")
        with pytest.raises(ConfigError, match=r"\[experiment\] seed"):
            load_config(path)

    def test_presets(self, tmp_path):
        path = tmp_path / "experiment.ini"
        path.write_text(
            "[experiment]\nkind = stability\npreset = paper\n", encoding="utf-8"
        )
        cfg = load_config(path)
        assert cfg.effective_replicates == 10_000
        assert cfg.horizon == 1_000
        path.write_text(
            "[experiment]\nkind = stability\npreset = desk\nreplicates = 3\n",
            encoding="utf-8",
        )
        cfg = load_config(path)
        assert cfg.effective_replicates == 3  # explicit keys beat the preset
        assert cfg.horizon == 300


def _trace(generation, value):
    return GenerationTrace(
        generation=generation,
        max_fitness=value,
        mean_fitness=value,
        mean_length=value,
        complexity=value,
        efficiency=value,
    )


class TestAggregate:
    def test_single_replicate(self):
        rows = aggregate([[_trace(0, 1.0), _trace(1, 2.0)]])
        assert rows[0]["max_fitness_mean"] == 1.0
        assert rows[0]["max_fitness_std"] == 0.0
        assert rows[1]["generation"] == 1

    def test_mean_and_population_stddev(self):
        rows = aggregate([
            [_trace(0, 1.0), _trace(1, 1.0)],
            [_trace(0, 3.0), _trace(1, 3.0)],
        ])
        for row in rows:
            assert row["max_fitness_mean"] == 2.0
            assert row["max_fitness_std"] == 1.0

    def test_replicate_order_irrelevant(self):
        a = [[_trace(0, 1.0)], [_trace(0, 5.0)], [_trace(0, 3.0)]]
        b = [a[2], a[0], a[1]]
        assert aggregate(a) == aggregate(b)

    def test_ragged_traces_error(self):
        with pytest.raises(Exception, match="ragged"):
            aggregate([[_trace(0, 1.0)], [_trace(0, 1.0), _trace(1, 1.0)]])

    def test_none_metrics_propagate(self):
        t = GenerationTrace(0, 1.0, 1.0, 1.0, None, None)
        rows = aggregate([[t], [t]])
        assert rows[0]["complexity_mean"] is None


TINY = {
    "evolve": dict(replicates=2, horizon=15),
    "complexity": dict(replicates=1, horizon=25),
    "stability": dict(replicates=4, horizon=15),
    "sweep": dict(replicates=1, horizon=5),
    "habitat": dict(replicates=3, horizon=60),
    "diversity-length": dict(replicates=15, horizon=0),
    "diversity-modularity": dict(replicates=15, horizon=0),
    "clustering": dict(replicates=2, horizon=0),
}

TINY_EVOLUTION = {
    "clustering": {"base_population_size": 150, "max_generations": 40},
    "diversity-length": {"base_population_size": 12, "max_generations": 40},
    "diversity-modularity": {"base_population_size": 12, "max_generations": 40},
}

TINY_DISTRIBUTIONS = {
    "diversity-length": True,
    "diversity-modularity": True,
}


def tiny_config(kind, out_dir, seed=5):
    from ecosim.diversity import RequestDistribution

    kwargs = dict(TINY[kind])
    cfg = ExperimentConfig(
        kind=kind,
        seed=seed,
        replicates=kwargs["replicates"],
        horizon=kwargs["horizon"],
        out_dir=out_dir,
        evolution_overrides=TINY_EVOLUTION.get(kind, {}),
    )
    if TINY_DISTRIBUTIONS.get(kind):
        cfg = replace(
            cfg,
            length_distribution=RequestDistribution.uniform(2, 4),
            modularity_distribution=RequestDistribution.uniform(2, 3),
        )
    return cfg


EXPECTED_FILES = {
    "evolve": ["aggregate.csv", "summary.json", "trace_000.csv"],
    "complexity": ["complexity_sites.csv", "complexity_summary.json"],
    "clustering": ["clustering_runs.csv", "clustering_summary.json", "efficiency_curve.csv"],
    "stability": ["instability.json", "macrostates.csv"],
    "sweep": ["sweep.csv", "sweep_summary.json"],
    "habitat": ["habitat_pairs.csv", "habitat_summary.json", "migration_log.csv", "topology.csv"],
    "diversity-length": ["diversity_length_bins.csv", "diversity_length_summary.json"],
    "diversity-modularity": [
        "diversity_modularity_bins.csv",
        "diversity_modularity_summary.json",
    ],
}


@pytest.mark.parametrize("kind", sorted(EXPECTED_FILES))
def test_experiment_kind_produces_artifacts(kind, tmp_path):
    out = tmp_path / "artifacts"
    run_experiment(tiny_config(kind, out))
    names = sorted(p.name for p in out.iterdir())
    for expected in EXPECTED_FILES[kind]:
        assert expected in names, f"{kind}: missing {expected} in {names}"


def test_sweep_grid_has_121_rows(tmp_path):
    out = tmp_path / "sweep"
    run_experiment(tiny_config("sweep", out))
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "mutation_pct,crossover_pct,d_ins"
    assert len(lines) == 122


def test_trace_csv_columns(tmp_path):
    out = tmp_path / "evolve"
    run_experiment(tiny_config("evolve", out))
    header = (out / "trace_000.csv").read_text().splitlines()[0]
    assert header == "generation,max_fitness,mean_fitness,mean_len,complexity,efficiency"


class TestCli:
    def run_cli(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "ecosim.cli", *args],
            capture_output=True,
            text=True,
            timeout=300,
        )

    def test_successful_run(self, tmp_path):
        result = self.run_cli(
            "--experiment", "evolve", "--seed", "3", "--replicates", "1",
            "--out", str(tmp_path / "out"),
        )
        assert result.returncode == 0
        assert "final_max_fitness" in result.stdout

    def test_missing_config_file_is_exit_one(self, tmp_path):
        result = self.run_cli("--config", str(tmp_path / "missing.ini"))
        assert result.returncode == 1
        assert "configuration error" in result.stderr

    def test_invalid_config_field_is_exit_one(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[experiment]\nkind = evolve\nseed = x\n", encoding="utf-8")
        result = self.run_cli("--config", str(path))
        assert result.returncode == 1
        assert "[experiment] seed" in result.stderr
