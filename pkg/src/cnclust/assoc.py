"""Permutation association tests for regions and clusters.

Region statistics are Pearson X^2 on the 2x3 group-by-state table; p-values
come from permutations of the group labels, which keeps both table margins
fixed.  Cluster statistics are min-p over member regions, evaluated in
free step-down style: every permuted statistic is converted to its own
permutation p-value against the full ensemble column, cluster minima are
taken per permutation, and the observed minimum is ranked among them.  All
p-values use the add-one estimator (1 + count) / (B + 1), which can never
return 0 and stays valid for any B.

One ensemble is shared by region and cluster tests: permutation b is
regenerated deterministically from (seed, b), so extending B keeps every
earlier permutation unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import ContiguousPartition, Labels, StateMatrix
from .errors import DimensionMismatch, EnsembleMismatch

_BATCH = 1024


@dataclass(frozen=True)
class ContingencyTable:
    """2x3 counts: rows (reference, test), columns (loss, normal, gain)."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.counts, dtype=np.int64)
        if arr.shape != (2, 3):
            raise DimensionMismatch(f"contingency table must be 2x3, got {arr.shape}")
        if (arr < 0).any():
            raise ValueError("counts must be non-negative")
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)

    @classmethod
    def from_states(cls, states_row, y) -> "ContingencyTable":
        states_row = np.asarray(states_row)
        y = y.y if isinstance(y, Labels) else np.asarray(y)
        if states_row.shape != y.shape:
            raise DimensionMismatch(f"{states_row.shape} states vs {y.shape} labels")
        counts = np.zeros((2, 3), dtype=np.int64)
        for g in (0, 1):
            sub = states_row[y == g]
            for s, col in ((-1, 0), (0, 1), (1, 2)):
                counts[g, col] = int((sub == s).sum())
        return cls(counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def row_margins(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_margins(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def pearson_x2(table: ContingencyTable) -> float:
    """Sum of (observed - expected)^2 / expected over cells with positive
    expected count; columns with a zero margin contribute 0, a convention
    consistent across an ensemble because permutations fix both margins."""
    counts = table.counts.astype(np.float64)
    n = counts.sum()
    if n < 1:
        raise ValueError("empty table")
    expected = np.outer(counts.sum(axis=1), counts.sum(axis=0)) / n
    mask = expected > 0
    return float((((counts - expected) ** 2)[mask] / expected[mask]).sum())


@dataclass(frozen=True)
class PermutationEnsemble:
    """A reproducible set of label permutations.

    Permutation b is generated from SeedSequence((seed, b)); permutations
    are not stored.  Label permutations automatically preserve the group
    sizes.
    """

    n_permutations: int
    seed: int
    labels: Labels

    def __post_init__(self):
        if self.n_permutations < 1:
            raise ValueError("need at least one permutation")

    def permutation(self, b: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, b)))
        return rng.permutation(self.labels.n)

    def permuted_label_matrix(self, start: int, stop: int) -> np.ndarray:
        """Columns are the permuted 0/1 label vectors for b in [start, stop)."""
        y = self.labels.y.astype(np.float64)
        out = np.empty((self.labels.n, stop - start))
        for i, b in enumerate(range(start, stop)):
            out[:, i] = y[self.permutation(b)]
        return out


def _x2_columns(states: np.ndarray, label_matrix: np.ndarray) -> np.ndarray:
    """Pearson X^2 for every (region, label column) pair.

    With both margins fixed the statistic reduces to
    n^2/(n0*n1) * sum_s delta_s^2 / tot_s over states with tot_s > 0,
    where delta_s is the group-1 count minus its expectation.
    """
    m, n = states.shape
    n1 = float(label_matrix[:, 0].sum())
    n0 = n - n1
    out = np.zeros((m, label_matrix.shape[1]))
    if n0 == 0 or n1 == 0:
        return out
    scale = n * n / (n0 * n1)
    for state in (-1, 0, 1):
        ind = (states == state).astype(np.float64)
        tot = ind.sum(axis=1)
        c1 = ind @ label_matrix
        delta = c1 - np.outer(tot, np.full(label_matrix.shape[1], n1 / n))
        nz = tot > 0
        out[nz] += scale * delta[nz] ** 2 / tot[nz, None]
    return out


@dataclass(eq=False)
class RegionTestStats:
    """Observed statistics, raw p-values, and the permuted-statistic matrix."""

    observed: np.ndarray    # (m,)
    pvalues: np.ndarray     # (m,)
    perm_stats: np.ndarray  # (B, m)
    ensemble: PermutationEnsemble


def region_pvalues(x: StateMatrix, y: Labels, ensemble: PermutationEnsemble) -> RegionTestStats:
    """Raw permutation p-values per region, retaining permuted statistics.

    p_j = (1 + #{b : X2_perm >= X2_obs}) / (B + 1); ties count toward the
    p-value.  Deterministic given the ensemble seed.
    """
    if y.n != x.n:
        raise DimensionMismatch(f"{x.n} samples but {y.n} labels")
    if ensemble.labels != y:
        raise EnsembleMismatch("ensemble was built for a different label vector")
    b_total = ensemble.n_permutations
    observed = _x2_columns(x.states, y.y.astype(np.float64)[:, None])[:, 0]
    perm_stats = np.empty((b_total, x.m))
    for start in range(0, b_total, _BATCH):
        stop = min(start + _BATCH, b_total)
        lab = ensemble.permuted_label_matrix(start, stop)
        perm_stats[start:stop] = _x2_columns(x.states, lab).T
    count_ge = (perm_stats >= observed[None, :]).sum(axis=0)
    pvals = (1.0 + count_ge) / (b_total + 1.0)
    return RegionTestStats(observed=observed, pvalues=pvals, perm_stats=perm_stats,
                           ensemble=ensemble)


def _rank_pvalues(perm_stats: np.ndarray) -> np.ndarray:
    """Convert each permuted statistic to its own add-one permutation p-value
    against the full ensemble column (>= comparisons, ties conservative)."""
    b_total, m = perm_stats.shape
    out = np.empty_like(perm_stats)
    for j in range(m):
        col = perm_stats[:, j]
        order = np.sort(col)
        count_ge = b_total - np.searchsorted(order, col, side="left")
        out[:, j] = (1.0 + count_ge) / (b_total + 1.0)
    return out


def cluster_pvalues(partition: ContiguousPartition, perm_stats: np.ndarray,
                    obs_stats: np.ndarray, n_permutations: int | None = None) -> np.ndarray:
    """Min-p cluster p-values from the shared region ensemble.

    For each permutation the cluster statistic is the minimum of the member
    regions' rank-converted p-values; the cluster p-value is the add-one
    rank of the observed minimum (computed from the observed region
    p-values) among them.
    """
    perm_stats = np.asarray(perm_stats, dtype=np.float64)
    obs_stats = np.asarray(obs_stats, dtype=np.float64)
    b_total, m = perm_stats.shape
    if n_permutations is not None and n_permutations != b_total:
        raise EnsembleMismatch(f"matrix holds {b_total} permutations, expected {n_permutations}")
    if m != partition.n_regions or obs_stats.shape != (m,):
        raise EnsembleMismatch(
            f"statistics for {m} regions against a partition of {partition.n_regions}"
        )
    rank_p = _rank_pvalues(perm_stats)
    count_ge = (perm_stats >= obs_stats[None, :]).sum(axis=0)
    obs_p = (1.0 + count_ge) / (b_total + 1.0)

    out = np.empty(partition.n_clusters)
    for k, (lo, hi) in enumerate(partition.cluster_ranges()):
        perm_min = rank_p[:, lo:hi].min(axis=1)
        obs_min = obs_p[lo:hi].min()
        out[k] = (1.0 + (perm_min <= obs_min).sum()) / (b_total + 1.0)
    return out


@dataclass(eq=False)
class PermutationTestResult:
    """Region and cluster raw p-values from one shared permutation ensemble."""

    region_p: np.ndarray
    cluster_p: np.ndarray
    observed: np.ndarray
    partition: ContiguousPartition
    ensemble: PermutationEnsemble


def permutation_test(x: StateMatrix, y: Labels, partition: ContiguousPartition,
                     n_permutations: int = 20_000, seed: int = 0,
                     expected_fingerprint: str | None = None) -> PermutationTestResult:
    """Full region plus cluster permutation test on one shared ensemble.

    When expected_fingerprint is given it must equal the column-multiset
    fingerprint of x: that asserts the partition was computed from the same
    sample columns, the condition under which label permutations remain
    valid after clustering.
    """
    from .datamodel import column_multiset_fingerprint

    if partition.n_regions != x.m:
        raise EnsembleMismatch(f"partition of {partition.n_regions} regions for matrix with {x.m}")
    if expected_fingerprint is not None:
        actual = column_multiset_fingerprint(x)
        if actual != expected_fingerprint:
            raise EnsembleMismatch(
                "partition fingerprint does not match the tested matrix; "
                "clustering must be a function of the same sample columns "
                "(or be declared external)"
            )
    ensemble = PermutationEnsemble(n_permutations=n_permutations, seed=seed, labels=y)
    stats = region_pvalues(x, y, ensemble)
    cl_p = cluster_pvalues(partition, stats.perm_stats, stats.observed)
    return PermutationTestResult(
        region_p=stats.pvalues,
        cluster_p=cl_p,
        observed=stats.observed,
        partition=partition,
        ensemble=ensemble,
    )
