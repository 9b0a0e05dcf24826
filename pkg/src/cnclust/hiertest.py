"""Sequential hierarchical FWER control over clusters and regions.

The procedure starts from an empty rejection set R and repeats full sweeps:
clusters are rejected when their p-value is at most alpha_R, and regions of
already-rejected clusters when their p-value is at most alpha_{R,l}; both
thresholds are recomputed between sweeps from

    alpha_R     = alpha / (K - D_R)
    alpha_{R,l} = alpha_R * [cluster l in R] / (|A_l| - max(1, D_{R,l}))

where D_R counts rejected clusters whose regions are all rejected and
D_{R,l} counts rejected regions inside cluster l, with the conventions
1/0 = +inf and 0/0 = 0.  The recursion is monotone, terminates at a fixed
point, and its result does not depend on the sweep order within an
iteration.  Rejected regions always sit inside rejected clusters.

Adjusted p-values are the smallest level at which a hypothesis enters the
rejection set; since the rejection set can change only where some p-value
meets some reachable threshold, they are computed exactly over that finite
candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .datamodel import ContiguousPartition
from .errors import IllogicalTruthAssignment, InvalidAlpha, PartitionMismatch


@dataclass(frozen=True)
class Thresholds:
    """Snapshot of the critical values at one iteration."""

    alpha: float
    alpha_clusters: float
    alpha_regions: tuple[float, ...]  # per cluster
    d_clusters: int
    d_regions: tuple[int, ...]


@dataclass(frozen=True)
class TraceEntry:
    """One rejection event: which hypothesis fell at which threshold."""

    iteration: int
    kind: str  # "cluster" | "region"
    index: int
    pvalue: float
    threshold: float


@dataclass(frozen=True)
class RejectionSet:
    """Hierarchical rejection state after the procedure has terminated."""

    rejected_clusters: frozenset[int]
    rejected_regions: frozenset[int]
    trace: tuple[TraceEntry, ...]
    final_thresholds: Thresholds


def _check_pvalues(p: np.ndarray, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise PartitionMismatch(f"{what} p-values must be 1-D")
    if ((p <= 0) | (p > 1)).any():
        raise InvalidAlpha(f"{what} p-values must lie in (0, 1]")
    return p


def _sweep_thresholds(partition: ContiguousPartition, rc: np.ndarray, rr: np.ndarray,
                      alpha: float) -> tuple[float, np.ndarray, int, np.ndarray]:
    """Critical values implied by the current rejection set."""
    sizes = partition.sizes()
    k = partition.n_clusters
    fully = np.array([rc[l] and rr[lo:hi].all() for l, (lo, hi) in
                      enumerate(partition.cluster_ranges())])
    d_r = int(fully.sum())
    denom = k - d_r
    alpha_r = np.inf if denom == 0 else alpha / denom

    d_l = np.array([int(rr[lo:hi].sum()) for lo, hi in partition.cluster_ranges()])
    alpha_rl = np.zeros(k)
    for l in range(k):
        if not rc[l]:
            continue  # indicator 0; 0/0 = 0 when the denominator also vanishes
        d = sizes[l] - max(1, d_l[l])
        alpha_rl[l] = np.inf if d == 0 else alpha_r / d
    return alpha_r, alpha_rl, d_r, d_l


def hierarchical_test(cluster_p, region_p, partition: ContiguousPartition,
                      alpha: float) -> RejectionSet:
    """Run the sequential rejection recursion to its fixed point.

    Within an iteration, thresholds are held at the values implied by the
    previous iteration's rejection set; clusters are swept in genomic
    order, then regions in genomic order (the fixed point is order
    independent, the trace order is canonical).
    """
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"alpha must be in (0, 1), got {alpha}")
    return _reject_at(cluster_p, region_p, partition, alpha)


def _reject_at(cluster_p, region_p, partition: ContiguousPartition, alpha: float) -> RejectionSet:
    cluster_p = _check_pvalues(cluster_p, "cluster")
    region_p = _check_pvalues(region_p, "region")
    k = partition.n_clusters
    m = partition.n_regions
    if len(cluster_p) != k:
        raise PartitionMismatch(f"{len(cluster_p)} cluster p-values for {k} clusters")
    if len(region_p) != m:
        raise PartitionMismatch(f"{len(region_p)} region p-values for {m} regions")

    labels = partition.labels()
    rc = np.zeros(k, dtype=bool)
    rr = np.zeros(m, dtype=bool)
    trace: list[TraceEntry] = []
    iteration = 0
    while True:
        iteration += 1
        alpha_r, alpha_rl, d_r, d_l = _sweep_thresholds(partition, rc, rr, alpha)
        new_rc = rc | (cluster_p <= alpha_r)
        region_thr = alpha_rl[labels]
        new_rr = rr | (region_p <= region_thr)
        for l in np.nonzero(new_rc & ~rc)[0]:
            trace.append(TraceEntry(iteration, "cluster", int(l), float(cluster_p[l]),
                                    float(alpha_r)))
        for j in np.nonzero(new_rr & ~rr)[0]:
            trace.append(TraceEntry(iteration, "region", int(j), float(region_p[j]),
                                    float(region_thr[j])))
        if (new_rc == rc).all() and (new_rr == rr).all():
            break
        rc, rr = new_rc, new_rr

    final = Thresholds(
        alpha=alpha,
        alpha_clusters=float(alpha_r),
        alpha_regions=tuple(float(v) for v in alpha_rl),
        d_clusters=d_r,
        d_regions=tuple(int(v) for v in d_l),
    )
    return RejectionSet(
        rejected_clusters=frozenset(int(i) for i in np.nonzero(rc)[0]),
        rejected_regions=frozenset(int(i) for i in np.nonzero(rr)[0]),
        trace=tuple(trace),
        final_thresholds=final,
    )


def _candidate_levels(cluster_p: np.ndarray, region_p: np.ndarray,
                      partition: ContiguousPartition) -> np.ndarray:
    """Every level at which some comparison can flip: p times a reachable
    integer denominator.  The rejection set is piecewise constant in alpha
    with change points contained in this set."""
    k = partition.n_clusters
    sizes = partition.sizes()
    labels = partition.labels()
    cands = {1.0}
    denoms_c = np.arange(1, k + 1, dtype=np.float64)
    for p in cluster_p:
        cands.update(v for v in p * denoms_c if v <= 1.0)
    for j, p in enumerate(region_p):
        s = int(sizes[labels[j]])
        region_denoms = {s - max(1, dl) for dl in range(0, s)}
        region_denoms.discard(0)
        for dc in denoms_c:
            for dr in region_denoms:
                v = p * dc * dr
                if v <= 1.0:
                    cands.add(float(v))
    return np.array(sorted(cands))


def adjusted_pvalues(cluster_p, region_p,
                     partition: ContiguousPartition) -> tuple[np.ndarray, np.ndarray]:
    """Smallest alpha at which each hypothesis enters the rejection set.

    A hypothesis is rejected by hierarchical_test at level alpha exactly
    when its adjusted p-value is <= alpha; hypotheses never rejected on
    (0, 1] get adjusted p-value 1.  A region's adjusted p-value is at least
    its cluster's.
    """
    cluster_p = _check_pvalues(cluster_p, "cluster")
    region_p = _check_pvalues(region_p, "region")
    levels = _candidate_levels(cluster_p, region_p, partition)

    reject_cache: dict[int, RejectionSet] = {}

    def rejection(level_idx: int) -> RejectionSet:
        if level_idx not in reject_cache:
            reject_cache[level_idx] = _reject_at(cluster_p, region_p, partition,
                                                 float(levels[level_idx]))
        return reject_cache[level_idx]

    def entry_level(is_cluster: bool, index: int) -> float:
        lo, hi = 0, len(levels) - 1
        members = rejection(hi)
        pool = members.rejected_clusters if is_cluster else members.rejected_regions
        if index not in pool:
            return 1.0
        while lo < hi:
            mid = (lo + hi) // 2
            r = rejection(mid)
            pool = r.rejected_clusters if is_cluster else r.rejected_regions
            if index in pool:
                hi = mid
            else:
                lo = mid + 1
        return float(levels[lo])

    cl_adj = np.array([entry_level(True, l) for l in range(partition.n_clusters)])
    rg_adj = np.array([entry_level(False, j) for j in range(partition.n_regions)])
    return cl_adj, rg_adj


@dataclass(frozen=True)
class HolmResult:
    rejected: np.ndarray  # boolean mask
    adjusted: np.ndarray


def holm(p, alpha: float) -> HolmResult:
    """Standard Holm step-down: reject while the i-th smallest p-value is at
    most alpha/(m - i + 1); adjusted p-values are the running maximum of
    min(1, (m - i + 1) * p_(i))."""
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"alpha must be in (0, 1), got {alpha}")
    p = _check_pvalues(p, "holm")
    m = len(p)
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    rejected = np.zeros(m, dtype=bool)
    running = 0.0
    still_rejecting = True
    for rank, idx in enumerate(order):
        factor = m - rank
        running = max(running, min(1.0, factor * p[idx]))
        adjusted[idx] = running
        if still_rejecting and p[idx] <= alpha / factor:
            rejected[idx] = True
        else:
            still_rejecting = False
    return HolmResult(rejected=rejected, adjusted=adjusted)


def budget_check(partition: ContiguousPartition, cluster_is_true, region_is_true,
                 alpha: float = 0.05) -> float:
    """Evaluate the single-step budget at the rejection set R = all false
    hypotheses: the summed critical values of the true hypotheses.

    The sum never exceeds alpha (it equals alpha when everything is true);
    the coefficient of alpha is accumulated in exact rational arithmetic so
    the all-true case returns alpha bit-exactly.  A truth assignment must
    respect the hierarchy: a false cluster contains at least one false
    region.
    """
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"alpha must be in (0, 1), got {alpha}")
    ct = np.asarray(cluster_is_true, dtype=bool)
    rt = np.asarray(region_is_true, dtype=bool)
    k = partition.n_clusters
    if len(ct) != k or len(rt) != partition.n_regions:
        raise PartitionMismatch("truth assignment shape disagrees with partition")

    ranges = partition.cluster_ranges()
    for l, (lo, hi) in enumerate(ranges):
        if not ct[l] and rt[lo:hi].all():
            raise IllogicalTruthAssignment(
                f"cluster {l} is false but all of its regions are true"
            )

    # D_R with R = false set: false clusters whose regions are all false
    d_r = sum(1 for l, (lo, hi) in enumerate(ranges) if not ct[l] and not rt[lo:hi].any())
    denom = k - d_r
    if denom == 0:
        return 0.0  # no true hypotheses can exist in this case

    coeff = Fraction(int(ct.sum()), denom)
    for l, (lo, hi) in enumerate(ranges):
        if ct[l]:
            continue  # regions of true clusters carry threshold 0
        n_true = int(rt[lo:hi].sum())
        if n_true == 0:
            continue
        size = hi - lo
        n_false = size - n_true
        region_denom = size - max(1, n_false)
        coeff += Fraction(n_true, denom * region_denom)
    return float(alpha) if coeff == 1 else float(alpha * float(coeff))
