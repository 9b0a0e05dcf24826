"""Independent oracle implementations used to check the package.

Everything here is deliberately written the slow, obvious way (explicit
loops, exhaustive enumeration) and never calls into the code paths it is
used to verify.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from cnclust.datamodel import RegionMeta, StateMatrix

TIE_TOL = 1e-9


def random_state_matrix(rng, m, n, n_chromosomes=1, spacing=100_000):
    """Uniform i.i.d. ternary matrix with evenly split chromosomes."""
    states = rng.integers(-1, 2, size=(m, n)).astype(np.int8)
    per = [m // n_chromosomes + (1 if i < m % n_chromosomes else 0)
           for i in range(n_chromosomes)]
    meta = []
    for c, count in enumerate(per, start=1):
        for i in range(count):
            meta.append(RegionMeta(c, i * spacing, i * spacing + 1000))
    return StateMatrix(states, meta, [f"s{i}" for i in range(n)])


def f_pair(a, b):
    return a * b if a == b else -1


def enum_loglik(block, beta, gamma, w):
    """Cluster log-likelihood by explicit state enumeration (no shared tables)."""
    m, n = block.shape
    z = 0.0
    for state in itertools.product((-1, 0, 1), repeat=m):
        e = sum(beta[j] * state[j] for j in range(m))
        e += gamma * sum(w[j][k] * f_pair(state[j], state[k])
                         for j in range(m) for k in range(j + 1, m))
        z += math.exp(e)
    logz = math.log(z)
    total = 0.0
    for i in range(n):
        e = sum(beta[j] * block[j, i] for j in range(m))
        e += gamma * sum(w[j][k] * f_pair(block[j, i], block[k, i])
                         for j in range(m) for k in range(j + 1, m))
        total += e - logz
    return total


def enum_penalized(block, theta, w, lam):
    beta, gamma = theta[:-1], theta[-1]
    return enum_loglik(block, beta, gamma, w) - lam * float(np.dot(theta, theta))


def fd_gradient(fun, theta, step=1e-5):
    """Central finite differences of a scalar function."""
    theta = np.asarray(theta, dtype=np.float64)
    out = np.empty_like(theta)
    for i in range(len(theta)):
        hi = theta.copy()
        lo = theta.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (fun(hi) - fun(lo)) / (2 * step)
    return out


def contiguous_partitions(m, max_size):
    """All break tuples (0, ..., m) with every segment length <= max_size."""
    for mask in itertools.product((0, 1), repeat=m - 1):
        breaks = [0] + [i + 1 for i, bit in enumerate(mask) if bit] + [m]
        if all(b - a <= max_size for a, b in zip(breaks, breaks[1:])):
            yield tuple(breaks)


def brute_force_partition(objective, m, max_size, tol=TIE_TOL):
    """Exhaustive search with the same tie-break contract as the optimizer:
    max objective, then fewest clusters, then lexicographically earliest
    breakpoints.  Objectives sum left to right, matching the DP."""
    scored = []
    for breaks in contiguous_partitions(m, max_size):
        total = 0.0
        for a, b in zip(breaks, breaks[1:]):
            total = total + objective(a, b)
        scored.append((total, breaks))
    best = max(t for t, _ in scored)
    ties = [(len(b), b[1:-1], t, b) for t, b in scored if t >= best - tol]
    ties.sort(key=lambda item: (item[0], item[1]))
    _, _, total, breaks = ties[0]
    return breaks, best


def pair_counting_ari(labels1, labels2):
    """ARI via explicit agreement counts over all region pairs."""
    m = len(labels1)
    together_both = together_1 = together_2 = 0
    for i in range(m):
        for j in range(i + 1, m):
            s1 = labels1[i] == labels1[j]
            s2 = labels2[i] == labels2[j]
            together_1 += s1
            together_2 += s2
            together_both += s1 and s2
    n_pairs = m * (m - 1) // 2
    expected = together_1 * together_2 / n_pairs
    maximum = 0.5 * (together_1 + together_2)
    if maximum == expected:
        return 1.0 if list(labels1) == list(labels2) else 0.0
    return (together_both - expected) / (maximum - expected)


def pearson_x2_reference(counts):
    """Textbook chi-square over a 2x3 table, zero-margin columns skipped."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    total = 0.0
    for g in range(2):
        for s in range(3):
            e = rows[g] * cols[s] / n
            if e > 0:
                total += (counts[g, s] - e) ** 2 / e
    return total
