"""Exact sampling from the cluster model, plus label generators.

Sampling enumerates the full 3^m state table of each cluster and draws from
the exact categorical distribution, so the empirical law converges to the
model law with no approximation error beyond Monte Carlo noise.  This is
the oracle used to validate fitting, partition recovery and error control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datamodel import ContiguousPartition, Labels, RegionMeta, StateMatrix
from .errors import ClusterTooLarge, DimensionMismatch
from .qem import (
    BASIS_BASE_PAIRS,
    DEFAULT_MAX_CLUSTER_SIZE,
    DistanceWeights,
    distance_weights,
    enumerate_states,
    state_distribution,
)


@dataclass(frozen=True)
class GlobalNull:
    """Labels independent of the states: i.i.d. Bernoulli(1/2)."""


@dataclass(frozen=True)
class RegionAssociation:
    """Labels drawn with log-odds effect * x[region] per sample."""

    region: int
    effect: float


LabelModel = GlobalNull | RegionAssociation


@dataclass(frozen=True)
class GenerativeScenario:
    """A known partition with per-cluster parameters and a label model."""

    meta: tuple[RegionMeta, ...]
    partition: ContiguousPartition
    betas: tuple[np.ndarray, ...]
    gammas: tuple[float, ...]
    weights: tuple[DistanceWeights, ...]
    n: int
    label_model: LabelModel = GlobalNull()
    max_cluster_size: int = DEFAULT_MAX_CLUSTER_SIZE

    def __post_init__(self):
        k = self.partition.n_clusters
        if not (len(self.betas) == len(self.gammas) == len(self.weights) == k):
            raise DimensionMismatch("need one (beta, gamma, weights) triple per cluster")
        for size, beta in zip(self.partition.sizes(), self.betas):
            if len(beta) != size:
                raise DimensionMismatch(f"beta of length {len(beta)} for cluster of size {size}")
            if size > self.max_cluster_size:
                raise ClusterTooLarge(
                    f"cluster of {size} regions exceeds the enumeration bound "
                    f"{self.max_cluster_size}"
                )
        if len(self.meta) != self.partition.n_regions:
            raise DimensionMismatch("annotation length disagrees with partition")
        if not all(math.isfinite(g) for g in self.gammas):
            raise ValueError("gamma values must be finite")


def make_scenario(cluster_specs, n: int, q: float = 1.0, basis: str = BASIS_BASE_PAIRS,
                  spacing_bp: int = 100_000, region_bp: int = 10_000,
                  label_model: LabelModel = GlobalNull(),
                  max_cluster_size: int = DEFAULT_MAX_CLUSTER_SIZE) -> GenerativeScenario:
    """Build a scenario from (chromosome, beta, gamma) cluster specs.

    Regions are laid out left to right with the given spacing; distance
    weights are computed per chromosome exactly as the clustering pipeline
    would compute them, then sliced per cluster.
    """
    meta: list[RegionMeta] = []
    sizes: list[int] = []
    chroms: list[int] = []
    betas: list[np.ndarray] = []
    gammas: list[float] = []
    offsets: dict[int, int] = {}
    for chrom, beta, gamma in cluster_specs:
        beta = np.asarray(beta, dtype=np.float64)
        sizes.append(len(beta))
        chroms.append(int(chrom))
        betas.append(beta)
        gammas.append(float(gamma))
        start = offsets.get(chrom, 0)
        for _ in range(len(beta)):
            meta.append(RegionMeta(chrom, start, start + region_bp, 1))
            start += spacing_bp
        offsets[chrom] = start

    breaks = np.concatenate([[0], np.cumsum(sizes)])
    partition = ContiguousPartition(breaks=tuple(int(b) for b in breaks),
                                    chromosomes=tuple(chroms))

    # per-chromosome weights, sliced to each cluster's window
    region_chroms = [r.chromosome for r in meta]
    weights: list[DistanceWeights] = []
    chrom_weights: dict[int, tuple[int, DistanceWeights]] = {}
    pos = 0
    for chrom in dict.fromkeys(region_chroms):
        members = [r for r in meta if r.chromosome == chrom]
        chrom_weights[chrom] = (pos, distance_weights(members, q, basis))
        pos += len(members)
    for (lo, hi), chrom in zip(partition.cluster_ranges(), partition.chromosomes):
        base, dw = chrom_weights[chrom]
        w = dw.window(lo - base, hi - base)
        weights.append(DistanceWeights(w=w, q=q, basis=basis))

    return GenerativeScenario(
        meta=tuple(meta),
        partition=partition,
        betas=tuple(betas),
        gammas=tuple(gammas),
        weights=tuple(weights),
        n=n,
        label_model=label_model,
        max_cluster_size=max_cluster_size,
    )


def sample_matrix(scenario: GenerativeScenario, seed) -> StateMatrix:
    """Draw n i.i.d. samples; clusters are independent blocks.

    Each cluster's states come from the exact enumerated categorical
    distribution.  Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    n = scenario.n
    states = np.empty((scenario.partition.n_regions, n), dtype=np.int8)
    for (lo, hi), beta, gamma, dw in zip(scenario.partition.cluster_ranges(),
                                         scenario.betas, scenario.gammas, scenario.weights):
        size = hi - lo
        if size > scenario.max_cluster_size:
            raise ClusterTooLarge(f"cluster of {size} regions exceeds the enumeration bound")
        probs = state_distribution(beta, gamma, dw)
        draws = rng.choice(len(probs), size=n, p=probs)
        states[lo:hi, :] = enumerate_states(size)[draws].T
    ids = [f"s{i:04d}" for i in range(n)]
    return StateMatrix(states, scenario.meta, ids)


def sample_labels(x: StateMatrix, model: LabelModel, seed) -> Labels:
    """Draw labels; GlobalNull is the effect-0 path, so the same seed gives
    identical output for GlobalNull and RegionAssociation(effect=0)."""
    rng = np.random.default_rng(seed)
    if isinstance(model, RegionAssociation):
        logits = model.effect * x.states[model.region].astype(np.float64)
    elif isinstance(model, GlobalNull):
        logits = np.zeros(x.n)
    else:
        raise TypeError(f"unknown label model {model!r}")
    p1 = 1.0 / (1.0 + np.exp(-logits))
    y = (rng.random(x.n) < p1).astype(np.int8)
    return Labels(y)
