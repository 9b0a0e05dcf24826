"""Pipeline orchestration and the command-line interface."""

import json

import numpy as np
import pytest

from cnclust.cli import main
from cnclust.datamodel import (
    Labels,
    read_labels,
    read_state_matrix,
    write_labels,
    write_state_matrix,
)
from cnclust.pipeline import PipelineConfig, emit_group_difference, run_pipeline
from cnclust.simulate import GlobalNull, RegionAssociation, make_scenario, sample_labels, \
    sample_matrix
from helpers import random_state_matrix


@pytest.fixture()
def small_dataset(tmp_path):
    gamma = 2 * np.arctanh(0.8)
    scenario = make_scenario(
        [(1, np.zeros(3), gamma), (2, np.zeros(2), gamma), (3, np.zeros(3), gamma)],
        n=30,
    )
    x = sample_matrix(scenario, 42)
    y = sample_labels(x, GlobalNull(), 43)
    states = tmp_path / "states.tsv"
    labels = tmp_path / "labels.tsv"
    write_state_matrix(x, states)
    write_labels(y, x.sample_ids, labels)
    return x, y, states, labels, tmp_path


class TestEmitGroupDifference:
    def test_identical_groups_give_zero(self):
        rng = np.random.default_rng(0)
        half = rng.integers(-1, 2, size=(4, 6)).astype(np.int8)
        x = random_state_matrix(rng, 4, 12)
        x = type(x)(np.hstack([half, half]), x.region_meta, x.sample_ids)
        y = Labels([0] * 6 + [1] * 6)
        diffs = emit_group_difference(x, y)
        assert np.all(diffs == 0.0)

    def test_opposite_groups(self):
        rng = np.random.default_rng(1)
        x = random_state_matrix(rng, 1, 8)
        states = np.array([[1, 1, 1, 1, 0, 0, 0, 0]], dtype=np.int8)
        x = type(x)(states, x.region_meta, x.sample_ids)
        y = Labels([1, 1, 1, 1, 0, 0, 0, 0])
        diffs = emit_group_difference(x, y)
        assert diffs[0, 0] == 1.0  # gain difference
        assert diffs[0, 1] == 0.0  # loss difference

    def test_matches_recount_oracle(self):
        rng = np.random.default_rng(2)
        x = random_state_matrix(rng, 10, 20)
        y = Labels(rng.permutation([0] * 9 + [1] * 11))
        diffs = emit_group_difference(x, y)
        for j in range(10):
            for col, state in ((0, 1), (1, -1)):
                p1 = np.mean([x.states[j, i] == state for i in range(20) if y.y[i] == 1])
                p0 = np.mean([x.states[j, i] == state for i in range(20) if y.y[i] == 0])
                assert diffs[j, col] == pytest.approx(abs(p1 - p0))


class TestRunPipeline:
    def test_artifacts_round_trip(self, small_dataset):
        x, y, states, labels, tmp = small_dataset
        config = PipelineConfig(
            input=str(states), labels=str(labels), out_dir=str(tmp / "out"),
            permutations=200, folds=3, shuffle_repeats=2, seed=7,
        )
        result = run_pipeline(config)
        assert read_state_matrix(result.artifacts["regions"]) == result.collapsed
        assert read_labels(labels, x.sample_ids) == y
        for key in ("clusters", "cluster_params", "stability", "shuffle",
                    "region_pvalues", "cluster_pvalues", "hierarchical",
                    "group_diff", "run_config"):
            assert key in result.artifacts
        with open(result.artifacts["cluster_params"]) as fh:
            payload = json.load(fh)
        assert tuple(payload["breaks"]) == result.clustering.partition.breaks
        hier_lines = open(result.artifacts["hierarchical"]).read().splitlines()
        assert hier_lines[0].split("\t") == [
            "cluster_id", "p_clust_raw", "p_clust_holm", "p_clust_hier", "gamma_tilde",
            "region_id", "p_reg_raw", "p_reg_holm", "p_reg_hier"]
        assert len(hier_lines) == 1 + result.collapsed.m

    def test_determinism(self, small_dataset):
        _, _, states, labels, tmp = small_dataset
        results = []
        for name in ("a", "b"):
            config = PipelineConfig(
                input=str(states), labels=str(labels), out_dir=str(tmp / name),
                permutations=150, seed=5, run_stability=False, run_shuffle=False,
            )
            results.append(run_pipeline(config))
        a, b = results
        assert a.clustering.partition == b.clustering.partition
        assert np.array_equal(a.test.region_p, b.test.region_p)
        assert np.array_equal(a.test.cluster_p, b.test.cluster_p)
        assert a.rejection_clusters == b.rejection_clusters

    def test_external_matrix_pointing_at_input_is_identity(self, small_dataset):
        _, _, states, labels, tmp = small_dataset
        base = run_pipeline(PipelineConfig(
            input=str(states), labels=str(labels), out_dir=str(tmp / "plain"),
            permutations=150, seed=3, run_stability=False, run_shuffle=False,
        ))
        external = run_pipeline(PipelineConfig(
            input=str(states), labels=str(labels), out_dir=str(tmp / "ext"),
            permutations=150, seed=3, run_stability=False, run_shuffle=False,
            external_cluster_matrix=str(states),
        ))
        assert base.clustering.partition == external.clustering.partition
        assert np.array_equal(base.test.region_p, external.test.region_p)
        assert base.rejection_clusters == external.rejection_clusters


class TestCli:
    def test_collapse_cluster_test_hiertest(self, small_dataset, capsys):
        _, _, states, labels, tmp = small_dataset
        out = tmp / "cli"
        assert main(["collapse", "--input", str(states), "--out-dir", str(out)]) == 0
        assert main(["cluster", "--input", str(out / "regions.tsv"),
                     "--out-dir", str(out)]) == 0
        assert main(["test", "--input", str(states), "--labels", str(labels),
                     "--out-dir", str(out), "--permutations", "100", "--seed", "1",
                     "--clusters-json", str(out / "cluster_params.json")]) == 0
        assert main(["hiertest", "--input", str(states), "--labels", str(labels),
                     "--out-dir", str(out), "--permutations", "100", "--seed", "1"]) == 0
        assert (out / "hierarchical.tsv").exists()

    def test_stability_and_shuffle_subcommands(self, small_dataset):
        _, _, states, _, tmp = small_dataset
        out = tmp / "cli2"
        assert main(["stability", "--input", str(states), "--out-dir", str(out),
                     "--folds", "3", "--seed", "2"]) == 0
        assert main(["shuffle-check", "--input", str(states), "--out-dir", str(out),
                     "--shuffle-repeats", "2", "--seed", "2"]) == 0
        stability = json.loads((out / "stability.json").read_text())
        assert len(stability["fold_aris"]) == 3
        shuffle = json.loads((out / "shuffle.json").read_text())
        assert shuffle["repeats"] == 2

    def test_pipeline_subcommand_and_config_file(self, small_dataset):
        _, _, states, labels, tmp = small_dataset
        out = tmp / "cli3"
        config_file = tmp / "config.json"
        config_file.write_text(json.dumps({"permutations": 120, "folds": 3,
                                           "shuffle_repeats": 1, "seed": 9}))
        code = main(["--config", str(config_file), "pipeline",
                     "--input", str(states), "--labels", str(labels),
                     "--out-dir", str(out)])
        assert code == 0
        run_config = json.loads((out / "run_config.json").read_text())
        assert run_config["permutations"] == 120  # file value used
        assert run_config["folds"] == 3

    def test_simulate_subcommand(self, tmp_path):
        scenario_file = tmp_path / "scenario.json"
        scenario_file.write_text(json.dumps({
            "n": 25,
            "clusters": [
                {"chromosome": 1, "beta": [0, 0, 0], "gamma": 2.0},
                {"chromosome": 2, "beta": [0, 0], "gamma": 1.0},
            ],
            "labels": {"model": "region_association", "region": 0, "effect": 2.0},
        }))
        out = tmp_path / "sim"
        assert main(["simulate", "--scenario", str(scenario_file),
                     "--out-dir", str(out), "--seed", "4"]) == 0
        x = read_state_matrix(out / "states.tsv")
        assert (x.m, x.n) == (5, 25)
        y = read_labels(out / "labels.tsv", x.sample_ids)
        assert y.n == 25
        truth = json.loads((out / "truth.json").read_text())
        assert truth["breaks"] == [0, 3, 5]

    def test_malformed_tsv_reports_location_and_fails(self, tmp_path, capsys):
        bad = tmp_path / "bad.tsv"
        bad.write_text("chrom\tstart\tend\tnprobes\ta\tb\n1\t0\t10\t1\t0\t5\n")
        out = tmp_path / "out"
        code = main(["collapse", "--input", str(bad), "--out-dir", str(out)])
        assert code != 0
        err = capsys.readouterr().err
        assert "bad.tsv" in err and ":2:" in err and ":6:" in err
        assert "collapse" in err

    def test_unreadable_input_fails(self, tmp_path, capsys):
        code = main(["cluster", "--input", str(tmp_path / "missing.tsv"),
                     "--out-dir", str(tmp_path / "o")])
        assert code != 0
