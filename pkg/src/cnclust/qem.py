"""Quadratic exponential model for one candidate cluster of contiguous regions.

For a cluster of m regions with states x in {-1,0,1}^m the log-mass is

    log p(x) = alpha + sum_j beta_j x_j + gamma * sum_{j<k} w_jk f(x_j, x_k)

where f scores a pair -1 on mismatch and x_j*x_k on match, w_jk are
normalized inverse-distance weights, and alpha is pinned by the
summing-to-one condition (it is not a free parameter).  Everything here is
enumeration-based over the 3^m state table, which is why cluster sizes are
capped (default 9, i.e. at most 19,683 states).

Fitting maximizes the ridge-penalized log-likelihood, which is concave in
(beta, gamma); a damped Newton method with the exact Hessian from
sufficient-statistic moments therefore finds the unique optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .datamodel import RegionMeta
from .errors import DimensionMismatch, InconsistentAlpha, ZeroDistance

BASIS_BASE_PAIRS = "bp"
BASIS_PROBE_COUNTS = "probes"

DEFAULT_MAX_CLUSTER_SIZE = 9

# f(a, b) indexed by digits a+1, b+1: -1 on mismatch, a*b on match.
_F_TABLE = np.array(
    [[1, -1, -1],
     [-1, 0, -1],
     [-1, -1, 1]],
    dtype=np.int8,
)


def f_interaction(a: int, b: int) -> int:
    """Pair interaction score: -1 if a != b, else a*b."""
    if a not in (-1, 0, 1) or b not in (-1, 0, 1):
        raise ValueError(f"states must be ternary, got ({a}, {b})")
    return int(_F_TABLE[a + 1, b + 1])


@lru_cache(maxsize=32)
def enumerate_states(m: int) -> np.ndarray:
    """All 3^m ternary state vectors, mixed-radix little-endian over (-1, 0, 1).

    Row s holds the state whose j-th digit is (s // 3^j) % 3 - 1, so region 0
    varies fastest.  The same table (and hence the same state order) is
    shared by the normalizer, the moment computations and the exact sampler.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    idx = np.arange(3 ** m, dtype=np.int64)
    digits = (idx[:, None] // (3 ** np.arange(m, dtype=np.int64))) % 3
    states = (digits - 1).astype(np.int8)
    states.flags.writeable = False
    return states


@lru_cache(maxsize=32)
def _states_float(m: int) -> np.ndarray:
    out = enumerate_states(m).astype(np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DistanceWeights:
    """Normalized inverse-distance weights for the regions of one chromosome.

    w[j, k] = d_jk^-q / max(d^-q) over same-chromosome pairs, so weights lie
    in (0, 1] with maximum exactly 1; the diagonal is unused and kept 0.
    """

    w: np.ndarray
    q: float
    basis: str

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Weight submatrix for the region index window [lo, hi)."""
        return self.w[lo:hi, lo:hi]


def uniform_weights(m: int) -> DistanceWeights:
    """All off-diagonal weights 1 (the neutral, distance-free setting)."""
    w = np.ones((m, m)) - np.eye(m)
    w.flags.writeable = False
    return DistanceWeights(w=w, q=0.0, basis=BASIS_BASE_PAIRS)


def distance_weights(meta, q: float, basis: str = BASIS_BASE_PAIRS) -> DistanceWeights:
    """Weights for one chromosome's regions.

    Base-pair distances are midpoint distances; probe-count distances are
    (number of probes strictly between the two regions) + 1, so adjacency
    never yields distance 0.  q = 0 gives all weights 1.  A raw base-pair
    distance of 0 (duplicate positions) raises ZeroDistance.
    """
    meta = list(meta)
    if q < 0:
        raise ValueError(f"decay exponent q must be >= 0, got {q}")
    if basis not in (BASIS_BASE_PAIRS, BASIS_PROBE_COUNTS):
        raise ValueError(f"unknown distance basis {basis!r}")
    chroms = {r.chromosome for r in meta}
    if len(chroms) > 1:
        raise ValueError(f"distance weights are per-chromosome; got chromosomes {sorted(chroms)}")
    m = len(meta)
    w = np.zeros((m, m))
    if m >= 2:
        jj, kk = np.triu_indices(m, 1)
        if basis == BASIS_BASE_PAIRS:
            mids = np.array([r.midpoint for r in meta])
            d = np.abs(mids[kk] - mids[jj])
            zero = np.nonzero(d == 0)[0]
            if zero.size:
                i = zero[0]
                raise ZeroDistance(int(jj[i]), int(kk[i]), basis)
        else:
            counts = np.array([r.probe_count for r in meta], dtype=np.int64)
            cums = np.cumsum(counts)
            # probes strictly between j and k, plus 1: always >= 1
            d = (cums[kk - 1] - cums[jj] + 1).astype(np.float64)
        dinv = d ** (-q)
        dinv /= dinv.max()
        w[jj, kk] = dinv
        w[kk, jj] = dinv
    w.flags.writeable = False
    return DistanceWeights(w=w, q=float(q), basis=basis)


def pair_scores(w: np.ndarray, states: np.ndarray) -> np.ndarray:
    """sum_{j<k} w[j,k] * f(x_j, x_k) for every state row."""
    n_states, m = states.shape
    digits = states + 1
    out = np.zeros(n_states)
    for j in range(m):
        for k in range(j + 1, m):
            wjk = w[j, k]
            if wjk != 0.0:
                out += wjk * _F_TABLE[digits[:, j], digits[:, k]]
    return out


def _logsumexp(v: np.ndarray) -> float:
    mx = v.max()
    return float(mx + np.log(np.exp(v - mx).sum()))


@dataclass(frozen=True)
class ClusterParams:
    """Parameter vector of one cluster: main effects, shared interaction, log-normalizer."""

    beta: np.ndarray
    gamma: float
    alpha: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        if not (np.isfinite(beta).all() and math.isfinite(self.gamma) and math.isfinite(self.alpha)):
            raise ValueError("cluster parameters must be finite")

    @property
    def size(self) -> int:
        return len(self.beta)


def log_normalizer(beta, gamma: float, w: DistanceWeights | np.ndarray) -> float:
    """log sum over all 3^m states of exp(beta.x + gamma * pair score).

    alpha is minus this value.  Computed with an overflow-safe log-sum-exp.
    """
    beta = np.asarray(beta, dtype=np.float64)
    m = len(beta)
    wm = w.w if isinstance(w, DistanceWeights) else np.asarray(w)
    if wm.shape != (m, m):
        raise DimensionMismatch(f"weight matrix {wm.shape} for {m} regions")
    states = _states_float(m)
    logits = states @ beta + gamma * pair_scores(wm, enumerate_states(m))
    return _logsumexp(logits)


def state_distribution(beta, gamma: float, w: DistanceWeights | np.ndarray) -> np.ndarray:
    """Exact probabilities of all 3^m states in enumeration order."""
    beta = np.asarray(beta, dtype=np.float64)
    m = len(beta)
    wm = w.w if isinstance(w, DistanceWeights) else np.asarray(w)
    states = _states_float(m)
    logits = states @ beta + gamma * pair_scores(wm, enumerate_states(m))
    logits -= _logsumexp(logits)
    return np.exp(logits)


def observed_suffstats(x_block: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float, int]:
    """Observed sufficient statistics of an m x n state block.

    Returns (sum over samples of x_j as a length-m vector, sum over samples
    of the pair score, n).  Both sums come from integer counts, so they are
    bit-identical under any sample-column permutation.
    """
    block = np.asarray(x_block)
    if block.ndim != 2:
        raise DimensionMismatch(f"state block must be 2-D, got shape {block.shape}")
    m, n = block.shape
    pos = (block == 1).sum(axis=1)
    neg = (block == -1).sum(axis=1)
    sx = (pos - neg).astype(np.float64)
    digits = (block + 1).astype(np.int64)
    sg = 0.0
    for j in range(m):
        for k in range(j + 1, m):
            wjk = w[j, k]
            if wjk != 0.0:
                counts = np.bincount(3 * digits[j] + digits[k], minlength=9)
                sg += wjk * float(counts @ _F_TABLE.ravel())
    return sx, sg, n


def pairwise_f_counts(block: np.ndarray) -> np.ndarray:
    """Integer matrix F with F[j,k] = sum over samples of f(x_j, x_k).

    Shared precomputation for fitting many windows of one chromosome.
    """
    m, _ = block.shape
    digits = (block + 1).astype(np.int64)
    flat_f = _F_TABLE.ravel().astype(np.int64)
    out = np.zeros((m, m), dtype=np.int64)
    for j in range(m):
        for k in range(j + 1, m):
            counts = np.bincount(3 * digits[j] + digits[k], minlength=9)
            out[j, k] = out[k, j] = counts @ flat_f
    return out


def cluster_loglik(x_block, params: ClusterParams, w: DistanceWeights | np.ndarray,
                   alpha_tol: float = 1e-8) -> float:
    """Sum over samples of the cluster log-mass; always <= 0.

    Raises InconsistentAlpha when the stored alpha deviates from the
    recomputed log-normalizer by more than alpha_tol.
    """
    wm = w.w if isinstance(w, DistanceWeights) else np.asarray(w)
    lz = log_normalizer(params.beta, params.gamma, wm)
    if abs(params.alpha + lz) > alpha_tol:
        raise InconsistentAlpha(
            f"alpha {params.alpha} vs recomputed {-lz} (tolerance {alpha_tol})"
        )
    sx, sg, n = observed_suffstats(x_block, wm)
    return float(params.beta @ sx + params.gamma * sg + n * params.alpha)


def gamma_rescale(gamma: float) -> float:
    """(e^g - 1)/(e^g + 1): odd, strictly increasing, maps R into (-1, 1)."""
    return math.tanh(0.5 * gamma)


@dataclass(frozen=True)
class FitConfig:
    """Knobs shared by fitting and partitioning.

    ridge scales the quadratic penalty lambda = ridge * n on (beta, gamma);
    it keeps optima finite on degenerate blocks (e.g. a state never
    observed).  model_penalty scales the per-free-parameter cost
    model_penalty * log(n) charged when comparing candidate partitions;
    without it the merged model, which nests the split one, would never
    lose a comparison and independent regions could not remain separate
    clusters.
    """

    max_cluster_size: int = DEFAULT_MAX_CLUSTER_SIZE
    q: float = 1.0
    distance_basis: str = BASIS_BASE_PAIRS
    ridge: float = 1e-3
    model_penalty: float = 1.0
    grad_tol: float = 1e-8
    loglik_tol: float = 1e-12
    max_iterations: int = 200

    def __post_init__(self):
        if self.max_cluster_size < 1:
            raise ValueError("max_cluster_size must be >= 1")
        if self.ridge <= 0:
            raise ValueError("ridge must be > 0")
        if self.model_penalty < 0:
            raise ValueError("model_penalty must be >= 0")


@dataclass(frozen=True)
class ClusterFit:
    """Fit result for one candidate cluster.

    loglik is the unpenalized data log-likelihood at the fitted parameters;
    objective = loglik - ridge penalty - model_penalty * log(n) * n_params
    is the quantity candidate partitions are compared on (always <= 0).
    """

    params: ClusterParams
    loglik: float
    ridge_penalty: float
    n_params: int
    objective: float
    converged: bool
    iterations: int

    @property
    def gamma_tilde(self) -> float:
        return gamma_rescale(self.params.gamma)


def n_free_params(size: int) -> int:
    """Free parameters of a cluster: one beta per region, plus gamma for size >= 2."""
    return size + (1 if size >= 2 else 0)


def fit_cluster(x_block, w: DistanceWeights | np.ndarray, config: FitConfig = FitConfig()) -> ClusterFit:
    """Penalized maximum likelihood for one cluster block.

    The objective beta.Sx + gamma.Sg - n log Z - lambda (|beta|^2 + gamma^2)
    is strictly concave (exponential family plus positive-definite penalty),
    so damped Newton converges to the unique optimum; if it stalls before
    the gradient tolerance the best iterate is returned with
    converged=False.
    """
    wm = w.w if isinstance(w, DistanceWeights) else np.asarray(w)
    block = np.asarray(x_block)
    m = block.shape[0]
    if wm.shape != (m, m):
        raise DimensionMismatch(f"weight matrix {wm.shape} for block of {m} regions")
    sx, sg, n = observed_suffstats(block, wm)
    if n < 2:
        raise DimensionMismatch(f"need n >= 2 samples, got {n}")
    return fit_cluster_from_stats(sx, sg, n, wm, config)


def fit_cluster_from_stats(sx: np.ndarray, sg: float, n: int, w: np.ndarray,
                           config: FitConfig) -> ClusterFit:
    """Fit from precomputed sufficient statistics (see observed_suffstats)."""
    m = len(sx)
    if m > config.max_cluster_size:
        raise DimensionMismatch(
            f"cluster of {m} regions exceeds max_cluster_size {config.max_cluster_size}"
        )
    states = enumerate_states(m)
    scores = pair_scores(w, states)
    suff = np.column_stack([_states_float(m), scores])  # (3^m, m+1)
    t_obs = np.append(sx, sg)
    lam = config.ridge * n
    eye2lam = 2.0 * lam * np.eye(m + 1)

    def penalized(theta: np.ndarray) -> tuple[float, float]:
        logits = suff @ theta
        lz = _logsumexp(logits)
        return float(theta @ t_obs - n * lz - lam * (theta @ theta)), lz

    theta = np.zeros(m + 1)
    obj, lz = penalized(theta)
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        p = np.exp(suff @ theta - lz)
        mu = p @ suff
        grad = t_obs - n * mu - 2.0 * lam * theta
        if np.abs(grad).max() <= config.grad_tol:
            converged = True
            iterations -= 1
            break
        cov = suff.T @ (suff * p[:, None]) - np.outer(mu, mu)
        hess = n * cov + eye2lam
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad / max(1.0, float(np.abs(hess).max()))
        if grad @ step <= 0.0:  # numerical safety: fall back to steepest ascent
            step = grad / max(1.0, float(np.abs(hess).max()))
        # backtracking line search on the penalized objective; the slack
        # keeps rounding noise from rejecting genuine Newton steps once the
        # remaining improvement is below float resolution
        t = 1.0
        slope = float(grad @ step)
        slack = 1e-12 * max(1.0, abs(obj))
        while t > 2.0 ** -40:
            cand = theta + t * step
            cand_obj, cand_lz = penalized(cand)
            if cand_obj >= obj + 1e-4 * t * slope - slack:
                break
            t *= 0.5
        else:
            break  # no progress possible at float resolution
        rel_change = abs(cand_obj - obj) / max(1.0, abs(obj))
        theta, obj, lz = cand, cand_obj, cand_lz
        if rel_change <= config.loglik_tol:
            p = np.exp(suff @ theta - lz)
            grad = t_obs - n * (p @ suff) - 2.0 * lam * theta
            if np.abs(grad).max() <= max(config.grad_tol, 1e-6):
                converged = True
                break

    beta = theta[:m]
    gamma = float(theta[m])
    params = ClusterParams(beta=beta, gamma=gamma, alpha=-lz)
    loglik = float(theta @ t_obs - n * lz)
    ridge_penalty = float(lam * (theta @ theta))
    k = n_free_params(m)
    objective = loglik - ridge_penalty - config.model_penalty * math.log(n) * k
    return ClusterFit(
        params=params,
        loglik=loglik,
        ridge_penalty=ridge_penalty,
        n_params=k,
        objective=objective,
        converged=converged,
        iterations=iterations,
    )
