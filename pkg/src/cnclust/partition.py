"""Globally optimal contiguous partitioning per chromosome.

Every contiguous window of regions up to the maximum cluster size is fitted
once (the candidate table); the best partition of each chromosome is then
the shortest path through the breakpoint DAG whose edge (i -> j) costs
minus the fitted objective of window [i, j).  The search is exact, not
heuristic, and ties within a small tolerance are broken deterministically:
fewest clusters first, then the lexicographically earliest breakpoint
vector.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datamodel import ContiguousPartition, StateMatrix, column_multiset_fingerprint
from .errors import IncompleteTable
from .qem import (
    ClusterFit,
    DistanceWeights,
    FitConfig,
    distance_weights,
    fit_cluster_from_stats,
    pairwise_f_counts,
)

TIE_TOL = 1e-9


@dataclass(eq=False)
class CandidateTable:
    """All window fits needed by the optimizer.

    windows maps global half-open region index ranges (lo, hi) to their
    ClusterFit; spans lists the chromosome runs as (chromosome, lo, hi).
    """

    spans: list[tuple[int, int, int]]
    windows: dict[tuple[int, int], ClusterFit]
    weights: dict[int, DistanceWeights] = field(default_factory=dict)
    max_cluster_size: int = 9
    n_regions: int = 0
    n_samples: int = 0
    source_fingerprint: str = ""


@dataclass(eq=False)
class ClusteringResult:
    """Optimal partition with its per-cluster fits and bookkeeping."""

    partition: ContiguousPartition
    fits: tuple[ClusterFit, ...]
    total_loglik: float
    total_objective: float
    source_fingerprint: str

    @property
    def n_clusters(self) -> int:
        return self.partition.n_clusters

    def gamma_tildes(self) -> np.ndarray:
        return np.array([f.gamma_tilde for f in self.fits])


def _chromosome_windows(span_lo: int, span_hi: int, max_size: int):
    for lo in range(span_lo, span_hi):
        for hi in range(lo + 1, min(lo + max_size, span_hi) + 1):
            yield lo, hi


def _fit_chromosome(x: StateMatrix, span: tuple[int, int, int], config: FitConfig):
    """Fit every window of one chromosome; pure, so safe to run concurrently."""
    _, lo, hi = span
    meta = x.region_meta[lo:hi]
    dw = distance_weights(meta, config.q, config.distance_basis)
    block = x.states[lo:hi]
    n = x.n
    fcounts = pairwise_f_counts(block)
    pos = (block == 1).sum(axis=1)
    neg = (block == -1).sum(axis=1)
    sx_all = (pos - neg).astype(np.float64)

    fits = {}
    for a, b in _chromosome_windows(lo, hi, config.max_cluster_size):
        wl, wh = a - lo, b - lo
        w = dw.window(wl, wh)
        sg = float(np.sum(np.triu(w * fcounts[wl:wh, wl:wh], 1)))
        fits[(a, b)] = fit_cluster_from_stats(sx_all[wl:wh].copy(), sg, n, w, config)
    return dw, fits


def build_candidates(x: StateMatrix, config: FitConfig = FitConfig(),
                     threads: int = 1) -> CandidateTable:
    """Fit all contiguous windows of length <= max_cluster_size, per chromosome.

    Deterministic given input and config regardless of thread count:
    chromosomes are independent and results are merged in genomic order.
    """
    spans = x.chromosome_spans()
    table = CandidateTable(
        spans=spans,
        windows={},
        max_cluster_size=config.max_cluster_size,
        n_regions=x.m,
        n_samples=x.n,
        source_fingerprint=column_multiset_fingerprint(x),
    )
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _fit_chromosome(x, s, config), spans))
    else:
        results = [_fit_chromosome(x, s, config) for s in spans]
    for span, (dw, fits) in zip(spans, results):
        table.weights[span[1]] = dw
        table.windows.update(fits)
    return table


def _solve_span(objective, lo: int, hi: int, max_size: int) -> list[int]:
    """Exact DP over one chromosome; returns interior+outer breaks [lo, ..., hi].

    Among partitions whose summed objective is within TIE_TOL of the
    maximum, the one with fewest clusters is chosen, and among those the
    lexicographically earliest breakpoint vector.  Objective sums accumulate
    left to right so that equal partitions compare bit-identically.
    """
    size = hi - lo
    lmax = min(max_size, size)
    neg = -np.inf

    # best[c][j]: best objective covering [0, j) with exactly c clusters
    best = np.full((size + 1, size + 1), neg)
    best[0, 0] = 0.0
    for j in range(1, size + 1):
        for i in range(max(0, j - lmax), j):
            o = objective(lo + i, lo + j)
            col = best[0:size, i] + o
            better = col > best[1:, j]
            best[1:, j][better] = col[better]

    v_best = best[:, size].max()
    k_star = int(np.nonzero(best[:, size] >= v_best - TIE_TOL)[0][0])

    # suffix[c][j]: best objective covering [j, size) with exactly c clusters
    suffix = np.full((size + 1, size + 1), neg)
    suffix[0, size] = 0.0
    for j in range(size - 1, -1, -1):
        for b in range(j + 1, min(j + lmax, size) + 1):
            o = objective(lo + j, lo + b)
            col = suffix[0:size, b] + o
            better = col > suffix[1:, j]
            suffix[1:, j][better] = col[better]

    # greedy lexicographically-earliest selection within the tie tolerance
    breaks = [lo]
    pos, used, prefix = 0, 0, 0.0
    while pos < size:
        remaining = k_star - used - 1
        chosen = None
        for b in range(pos + 1, min(pos + lmax, size) + 1):
            if remaining < 0:
                break
            tail = suffix[remaining, b]
            if tail == neg:
                continue
            if prefix + objective(lo + pos, lo + b) + tail >= v_best - TIE_TOL:
                chosen = b
                break
        if chosen is None:  # cannot happen for a complete table
            raise IncompleteTable(f"no feasible continuation at region {lo + pos}")
        prefix += objective(lo + pos, lo + chosen)
        breaks.append(lo + chosen)
        pos, used = chosen, used + 1
    return breaks


def optimal_partition(table: CandidateTable) -> ClusteringResult:
    """Best contiguous partition given a complete candidate table.

    Exact per chromosome: the returned segmentation maximizes the summed
    window objective over all contiguous partitions with cluster size up to
    the configured maximum.
    """
    windows = table.windows

    def objective(a: int, b: int) -> float:
        try:
            return windows[(a, b)].objective
        except KeyError:
            raise IncompleteTable(f"missing window ({a}, {b})") from None

    all_breaks = [0]
    chrom_labels = []
    for chrom, lo, hi in table.spans:
        breaks = _solve_span(objective, lo, hi, table.max_cluster_size)
        all_breaks.extend(breaks[1:])
        chrom_labels.extend([chrom] * (len(breaks) - 1))

    partition = ContiguousPartition(breaks=tuple(all_breaks), chromosomes=tuple(chrom_labels))
    fits = tuple(windows[(a, b)] for a, b in partition.cluster_ranges())
    return ClusteringResult(
        partition=partition,
        fits=fits,
        total_loglik=float(sum(f.loglik for f in fits)),
        total_objective=float(sum(f.objective for f in fits)),
        source_fingerprint=table.source_fingerprint,
    )


def cluster(x: StateMatrix, config: FitConfig = FitConfig(), threads: int = 1) -> ClusteringResult:
    """Fit all candidate windows and return the optimal contiguous partition.

    Deterministic given input and config, and invariant under any
    permutation of the sample columns: every quantity the fits consume is a
    per-region or per-pair count over samples.
    """
    return optimal_partition(build_candidates(x, config, threads=threads))
