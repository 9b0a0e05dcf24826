"""Clustering stability (cross-validated adjusted Rand index) and the
coincidental-clustering shuffle check.

The shuffle check breaks genomic dependency by rearranging regions so that
no two regions of the same chromosome end up adjacent, then re-clusters.
If shuffled data barely clusters, observed clusters in the original
ordering are almost surely driven by genuine spatial dependence rather
than coincidentally similar marginals.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb

import numpy as np

from .datamodel import ContiguousPartition, RegionMeta, StateMatrix
from .errors import InfeasibleShuffle, MismatchedUniverse, TooFewSamples
from .partition import ClusteringResult, cluster
from .qem import FitConfig

_SHUFFLE_ATTEMPTS = 10_000
_COINCIDENTAL_WARN_RATE = 0.05


def adjusted_rand_index(p1: ContiguousPartition, p2: ContiguousPartition) -> float:
    """Adjusted Rand index between two partitions of the same regions.

    r counts region pairs co-clustered in both; it is centered by its
    expectation under fixed cluster-size margins and scaled by the margin
    maximum.  Identical partitions score exactly 1.  In the degenerate case
    max(R) = E(R) (for example two all-singleton partitions) the convention
    is 1 for identical partitions and 0 otherwise.
    """
    if p1.n_regions != p2.n_regions:
        raise MismatchedUniverse(f"{p1.n_regions} vs {p2.n_regions} regions")
    m = p1.n_regions
    l1, l2 = p1.labels(), p2.labels()
    contingency = np.zeros((p1.n_clusters, p2.n_clusters), dtype=np.int64)
    np.add.at(contingency, (l1, l2), 1)

    r = sum(comb(int(c), 2) for c in contingency.ravel())
    sum_a = sum(comb(int(a), 2) for a in p1.sizes())
    sum_b = sum(comb(int(b), 2) for b in p2.sizes())
    expected = sum_a * sum_b / comb(m, 2) if m >= 2 else 0.0
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        return 1.0 if p1 == p2 else 0.0
    return (r - expected) / (maximum - expected)


@dataclass(frozen=True)
class AriReport:
    """Per-fold ARI values and their mean (the stability score)."""

    fold_aris: tuple[float, ...]
    aari: float

    def to_dict(self) -> dict:
        return {"folds": len(self.fold_aris), "fold_aris": list(self.fold_aris), "aari": self.aari}


def cross_validate_stability(x: StateMatrix, config: FitConfig = FitConfig(),
                             folds: int = 10, seed=0, threads: int = 1) -> AriReport:
    """V-fold stability: re-cluster with each fold's samples dropped and
    compare to the full-data partition.  Deterministic given the seed."""
    if folds < 2:
        raise TooFewSamples(f"need at least 2 folds, got {folds}")
    if x.n < folds:
        raise TooFewSamples(f"{x.n} samples cannot be split into {folds} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(x.n)
    fold_sets = np.array_split(order, folds)
    if x.n - max(len(f) for f in fold_sets) < 2:
        raise TooFewSamples("dropping one fold would leave fewer than 2 samples")

    reference = cluster(x, config, threads=threads).partition
    aris = []
    for fold in fold_sets:
        keep = np.setdiff1d(np.arange(x.n), fold)
        part = cluster(x.select_samples(keep), config, threads=threads).partition
        aris.append(adjusted_rand_index(reference, part))
    return AriReport(fold_aris=tuple(aris), aari=float(np.mean(aris)))


def _adjacency_ok(perm: np.ndarray, chroms: np.ndarray) -> bool:
    c = chroms[perm]
    return bool((c[1:] != c[:-1]).all())


def _repair(perm: np.ndarray, chroms: np.ndarray, rng) -> np.ndarray:
    """Try to fix same-chromosome adjacencies by random swaps."""
    perm = perm.copy()
    m = len(perm)
    for _ in range(4 * m):
        c = chroms[perm]
        bad = np.nonzero(c[1:] == c[:-1])[0]
        if bad.size == 0:
            break
        i = int(bad[0]) + 1
        j = int(rng.integers(m))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def shuffle_regions(x: StateMatrix, seed) -> tuple[StateMatrix, np.ndarray]:
    """Rearrange regions so no two adjacent rows share an original chromosome.

    Returns the shuffled matrix together with the row permutation applied
    (shuffled row i is original row perm[i]).  The shuffled annotation is
    synthetic: one artificial chromosome with unit spacing, so that
    adjacency in the shuffled order defines the new neighbor pairs and a
    q=0 configuration gives every pair the same unit weight.
    """
    chroms = x.chromosomes
    m = x.m
    counts = np.bincount(chroms)
    if m >= 2 and counts.max() > (m + 1) // 2:
        raise InfeasibleShuffle(
            f"a chromosome holds {counts.max()} of {m} regions; "
            "no non-adjacent arrangement exists"
        )
    rng = np.random.default_rng(seed)
    perm = None
    for _ in range(_SHUFFLE_ATTEMPTS):
        cand = _repair(rng.permutation(m), chroms, rng)
        if _adjacency_ok(cand, chroms):
            perm = cand
            break
    if perm is None:
        raise InfeasibleShuffle(f"no valid arrangement found in {_SHUFFLE_ATTEMPTS} attempts")

    meta = [RegionMeta(chromosome=1, start_bp=i, end_bp=i, probe_count=1) for i in range(m)]
    shuffled = StateMatrix(x.states[perm], meta, x.sample_ids)
    return shuffled, perm


@dataclass(frozen=True)
class ShuffleReport:
    """Cluster counts over shuffled runs plus the original pair-cluster rate.

    pair_cluster_rate estimates P(two consecutive same-chromosome regions
    cluster) on the original data; shuffled_merge_rate estimates the same
    quantity after genomic dependency is destroyed.  A high shuffled rate
    flags data whose near-degenerate marginals can cluster coincidentally.
    """

    repeats: int
    cluster_counts: tuple[int, ...]
    mean_clusters: float
    min_clusters: int
    max_clusters: int
    original_clusters: int
    pair_cluster_rate: float
    shuffled_merge_rate: float
    coincidental_warning: bool

    def to_dict(self) -> dict:
        return {
            "repeats": self.repeats,
            "cluster_counts": list(self.cluster_counts),
            "mean_clusters": self.mean_clusters,
            "min_clusters": self.min_clusters,
            "max_clusters": self.max_clusters,
            "original_clusters": self.original_clusters,
            "pair_cluster_rate": self.pair_cluster_rate,
            "shuffled_merge_rate": self.shuffled_merge_rate,
            "coincidental_warning": self.coincidental_warning,
        }


def coincidental_clustering_report(x: StateMatrix, config: FitConfig = FitConfig(),
                                   repeats: int = 25, seed=0, threads: int = 1,
                                   original: ClusteringResult | None = None) -> ShuffleReport:
    """Cluster `repeats` shuffled copies of x and count the clusters formed.

    Shuffled runs use neutral unit distances (q = 0 on the synthetic
    chromosome): original base-pair distances are meaningless after
    shuffling, and a neutral weight isolates the dependence question.  Pass
    a precomputed `original` clustering to avoid refitting it.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if original is None:
        original = cluster(x, config, threads=threads)
    m = x.m
    n_chrom = len(x.chromosome_spans())
    k_orig = original.n_clusters
    within_pairs = m - n_chrom
    pair_rate = (m - k_orig) / within_pairs if within_pairs > 0 else 0.0

    shuffled_config = replace(config, q=0.0)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = ss.spawn(repeats)
    counts = []
    for s in seeds:
        shuffled, _ = shuffle_regions(x, s)
        counts.append(cluster(shuffled, shuffled_config, threads=threads).n_clusters)
    counts_arr = np.array(counts)
    shuffled_rate = float(np.mean((m - counts_arr) / (m - 1))) if m > 1 else 0.0
    return ShuffleReport(
        repeats=repeats,
        cluster_counts=tuple(int(c) for c in counts),
        mean_clusters=float(counts_arr.mean()),
        min_clusters=int(counts_arr.min()),
        max_clusters=int(counts_arr.max()),
        original_clusters=k_orig,
        pair_cluster_rate=float(pair_rate),
        shuffled_merge_rate=shuffled_rate,
        coincidental_warning=shuffled_rate > _COINCIDENTAL_WARN_RATE,
    )
