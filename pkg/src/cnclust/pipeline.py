"""End-to-end orchestration: collapse, cluster, diagnostics, test, hierarchy.

Every stage derives its random stream from one master seed keyed by a fixed
per-stage integer, so partial re-runs reproduce exactly.  All artifacts are
plain TSV/JSON files that round-trip through the package parsers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .assoc import PermutationTestResult, permutation_test
from .collapse import CollapseReport, collapse_exact
from .datamodel import (
    ContiguousPartition,
    Labels,
    StateMatrix,
    format_chromosome,
    read_labels,
    read_state_matrix,
    write_state_matrix,
)
from .errors import CnclustError, DimensionMismatch
from .hiertest import adjusted_pvalues, hierarchical_test, holm
from .partition import ClusteringResult, cluster
from .qem import FitConfig
from .stability import AriReport, ShuffleReport, coincidental_clustering_report, \
    cross_validate_stability

# Stage keys for deterministic seed fan-out from the master seed.
STAGE_KEYS = {
    "cluster": 1,
    "stability": 2,
    "shuffle": 3,
    "test": 4,
    "simulate": 5,
}


def stage_seed(master_seed: int, stage: str) -> np.random.SeedSequence:
    """Per-stage seed: SeedSequence((master_seed, STAGE_KEYS[stage]))."""
    return np.random.SeedSequence((master_seed, STAGE_KEYS[stage]))


@dataclass
class PipelineConfig:
    """Everything one run needs; flat keys mirror the CLI flags."""

    input: str
    labels: str
    out_dir: str
    alpha: float = 0.05
    permutations: int = 20_000
    max_cluster_size: int = 9
    q: float = 1.0
    distance_basis: str = "bp"
    ridge: float = 1e-3
    model_penalty: float = 1.0
    folds: int = 10
    shuffle_repeats: int = 25
    seed: int = 0
    threads: int = 1
    external_cluster_matrix: str | None = None
    run_stability: bool = True
    run_shuffle: bool = True

    def fit_config(self) -> FitConfig:
        return FitConfig(
            max_cluster_size=self.max_cluster_size,
            q=self.q,
            distance_basis=self.distance_basis,
            ridge=self.ridge,
            model_penalty=self.model_penalty,
        )

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(eq=False)
class PipelineResult:
    """In-memory results of one run plus the paths of the emitted artifacts."""

    collapsed: StateMatrix
    collapse_report: CollapseReport
    clustering: ClusteringResult
    test: PermutationTestResult
    rejection_clusters: frozenset[int]
    rejection_regions: frozenset[int]
    cluster_adjusted: np.ndarray
    region_adjusted: np.ndarray
    cluster_holm: np.ndarray
    region_holm: np.ndarray
    stability: AriReport | None
    shuffle: ShuffleReport | None
    artifacts: dict[str, str] = field(default_factory=dict)


def load_config(path) -> dict:
    """Read a JSON config file with flat keys mirroring the CLI flags."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise CnclustError(f"{path}: config must be a JSON object")
    return data


def emit_group_difference(x: StateMatrix, y: Labels) -> np.ndarray:
    """Per region: |P(gain | group 1) - P(gain | group 0)| and the loss analogue.

    Returns an (m, 2) array with the gain column first.
    """
    if y.n != x.n:
        raise DimensionMismatch(f"{x.n} samples but {y.n} labels")
    g0 = x.states[:, y.y == 0]
    g1 = x.states[:, y.y == 1]
    out = np.empty((x.m, 2))
    out[:, 0] = np.abs((g1 == 1).mean(axis=1) - (g0 == 1).mean(axis=1))
    out[:, 1] = np.abs((g1 == -1).mean(axis=1) - (g0 == -1).mean(axis=1))
    return out


def _write_clusters_tsv(result: ClusteringResult, x: StateMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cluster_id\tchrom\tstart_region\tend_region\tgamma_tilde\tloglik\n")
        for k, ((lo, hi), fit) in enumerate(zip(result.partition.cluster_ranges(), result.fits),
                                            start=1):
            chrom = format_chromosome(x.region_meta[lo].chromosome)
            fh.write(f"{k}\t{chrom}\t{lo + 1}\t{hi}\t{fit.gamma_tilde:.6f}\t{fit.loglik:.6f}\n")


def write_cluster_params(result: ClusteringResult, path) -> None:
    payload = {
        "n_clusters": result.n_clusters,
        "total_loglik": result.total_loglik,
        "total_objective": result.total_objective,
        "source_fingerprint": result.source_fingerprint,
        "breaks": list(result.partition.breaks),
        "chromosomes": list(result.partition.chromosomes),
        "clusters": [
            {
                "cluster_id": k + 1,
                "regions": [lo + 1, hi],
                "beta": [float(v) for v in fit.params.beta],
                "gamma": fit.params.gamma,
                "alpha": fit.params.alpha,
                "gamma_tilde": fit.gamma_tilde,
                "loglik": fit.loglik,
                "objective": fit.objective,
                "converged": fit.converged,
            }
            for k, ((lo, hi), fit) in enumerate(zip(result.partition.cluster_ranges(),
                                                    result.fits))
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_partition_json(path) -> tuple[ContiguousPartition, str]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    partition = ContiguousPartition(
        breaks=tuple(payload["breaks"]),
        chromosomes=tuple(payload["chromosomes"]),
    )
    return partition, payload.get("source_fingerprint", "")


def _write_pvalues(test: PermutationTestResult, x: StateMatrix, out_dir: Path) -> dict[str, str]:
    region_path = out_dir / "region_pvalues.tsv"
    with open(region_path, "w", encoding="utf-8") as fh:
        fh.write("region_id\tchrom\tstart\tend\tx2_obs\tp_raw\n")
        for j in range(x.m):
            meta = x.region_meta[j]
            fh.write(f"{j + 1}\t{format_chromosome(meta.chromosome)}\t{meta.start_bp}\t"
                     f"{meta.end_bp}\t{test.observed[j]:.6f}\t{test.region_p[j]:.6g}\n")
    cluster_path = out_dir / "cluster_pvalues.tsv"
    with open(cluster_path, "w", encoding="utf-8") as fh:
        fh.write("cluster_id\tp_raw\n")
        for k in range(test.partition.n_clusters):
            fh.write(f"{k + 1}\t{test.cluster_p[k]:.6g}\n")
    return {"region_pvalues": str(region_path), "cluster_pvalues": str(cluster_path)}


def write_hierarchical_tsv(path, partition: ContiguousPartition, gamma_tildes,
                           cluster_p, cluster_holm, cluster_adj,
                           region_p, region_holm, region_adj) -> None:
    """One row per region in the layout of the result tables: cluster columns
    repeat for every member region."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cluster_id\tp_clust_raw\tp_clust_holm\tp_clust_hier\tgamma_tilde\t"
                 "region_id\tp_reg_raw\tp_reg_holm\tp_reg_hier\n")
        for k, (lo, hi) in enumerate(partition.cluster_ranges()):
            for j in range(lo, hi):
                fh.write(
                    f"{k + 1}\t{cluster_p[k]:.4f}\t{cluster_holm[k]:.4f}\t"
                    f"{cluster_adj[k]:.4f}\t{gamma_tildes[k]:.4f}\t"
                    f"{j + 1}\t{region_p[j]:.4f}\t{region_holm[j]:.4f}\t{region_adj[j]:.4f}\n"
                )


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """collapse -> cluster -> diagnostics -> permutation test -> hierarchy.

    Clustering runs on the collapsed input, or on the (equally collapsed)
    external matrix when one is configured; testing always runs on the
    input data.  Deterministic given the master seed.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, str] = {}
    fit_config = config.fit_config()

    raw = read_state_matrix(config.input)
    labels = read_labels(config.labels, raw.sample_ids)
    collapsed, report = collapse_exact(raw)
    regions_path = out_dir / "regions.tsv"
    write_state_matrix(collapsed, regions_path)
    artifacts["regions"] = str(regions_path)
    collapse_path = out_dir / "collapse_report.json"
    with open(collapse_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    artifacts["collapse_report"] = str(collapse_path)

    if config.external_cluster_matrix:
        external_raw = read_state_matrix(config.external_cluster_matrix)
        clustering_input, _ = collapse_exact(external_raw)
        if clustering_input.region_meta != collapsed.region_meta:
            raise CnclustError(
                "external clustering matrix does not describe the same regions "
                "as the test matrix after collapsing"
            )
    else:
        clustering_input = collapsed

    clustering = cluster(clustering_input, fit_config, threads=config.threads)
    clusters_path = out_dir / "clusters.tsv"
    _write_clusters_tsv(clustering, clustering_input, clusters_path)
    artifacts["clusters"] = str(clusters_path)
    params_path = out_dir / "cluster_params.json"
    write_cluster_params(clustering, params_path)
    artifacts["cluster_params"] = str(params_path)

    stability_report = None
    if config.run_stability:
        stability_report = cross_validate_stability(
            clustering_input, fit_config, folds=config.folds,
            seed=stage_seed(config.seed, "stability"), threads=config.threads,
        )
        stability_path = out_dir / "stability.json"
        with open(stability_path, "w", encoding="utf-8") as fh:
            json.dump(stability_report.to_dict(), fh, indent=2)
            fh.write("\n")
        artifacts["stability"] = str(stability_path)

    shuffle_report = None
    if config.run_shuffle:
        shuffle_report = coincidental_clustering_report(
            clustering_input, fit_config, repeats=config.shuffle_repeats,
            seed=stage_seed(config.seed, "shuffle"), threads=config.threads,
            original=clustering,
        )
        shuffle_path = out_dir / "shuffle.json"
        with open(shuffle_path, "w", encoding="utf-8") as fh:
            json.dump(shuffle_report.to_dict(), fh, indent=2)
            fh.write("\n")
        artifacts["shuffle"] = str(shuffle_path)

    # conditional validity: the partition may be treated as fixed only if it
    # is a function of the tested columns, asserted through the fingerprint
    expected = clustering.source_fingerprint if not config.external_cluster_matrix else None
    test_seed = int(stage_seed(config.seed, "test").generate_state(1)[0])
    test = permutation_test(
        collapsed, labels, clustering.partition,
        n_permutations=config.permutations, seed=test_seed,
        expected_fingerprint=expected,
    )
    artifacts.update(_write_pvalues(test, collapsed, out_dir))

    rejection = hierarchical_test(test.cluster_p, test.region_p, clustering.partition,
                                  config.alpha)
    cl_adj, rg_adj = adjusted_pvalues(test.cluster_p, test.region_p, clustering.partition)
    cl_holm = holm(test.cluster_p, config.alpha).adjusted
    rg_holm = holm(test.region_p, config.alpha).adjusted
    hier_path = out_dir / "hierarchical.tsv"
    write_hierarchical_tsv(hier_path, clustering.partition, clustering.gamma_tildes(),
                           test.cluster_p, cl_holm, cl_adj, test.region_p, rg_holm, rg_adj)
    artifacts["hierarchical"] = str(hier_path)

    diffs = emit_group_difference(collapsed, labels)
    diff_path = out_dir / "group_diff.tsv"
    with open(diff_path, "w", encoding="utf-8") as fh:
        fh.write("region_id\tchrom\tstart\tend\tgain_diff\tloss_diff\n")
        for j in range(collapsed.m):
            meta = collapsed.region_meta[j]
            fh.write(f"{j + 1}\t{format_chromosome(meta.chromosome)}\t{meta.start_bp}\t"
                     f"{meta.end_bp}\t{diffs[j, 0]:.6f}\t{diffs[j, 1]:.6f}\n")
    artifacts["group_diff"] = str(diff_path)

    config_path = out_dir / "run_config.json"
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(asdict(config), fh, indent=2)
        fh.write("\n")
    artifacts["run_config"] = str(config_path)

    return PipelineResult(
        collapsed=collapsed,
        collapse_report=report,
        clustering=clustering,
        test=test,
        rejection_clusters=rejection.rejected_clusters,
        rejection_regions=rejection.rejected_regions,
        cluster_adjusted=cl_adj,
        region_adjusted=rg_adj,
        cluster_holm=cl_holm,
        region_holm=rg_holm,
        stability=stability_report,
        shuffle=shuffle_report,
        artifacts=artifacts,
    )
