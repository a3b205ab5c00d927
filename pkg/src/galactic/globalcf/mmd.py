"""MMD-Critic representatives of a cluster: greedy prototypes plus witness-based criticisms."""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np


def pairwise_sq_dists(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def median_bandwidth(X) -> float:
    """Median pairwise distance over distinct pairs; 1.0 when that median is 0."""
    D = np.sqrt(pairwise_sq_dists(X))
    iu = np.triu_indices(len(D), k=1)
    if len(iu[0]) == 0:
        return 1.0
    med = float(np.median(D[iu]))
    return med if med > 0 else 1.0


def rbf_kernel(X, sigma: float | None = None) -> np.ndarray:
    sigma = median_bandwidth(X) if sigma is None else sigma
    return np.exp(-pairwise_sq_dists(X) / (2.0 * sigma * sigma))


def mmd2(K, proto) -> float:
    """Squared MMD between the full sample and the subset ``proto`` under kernel matrix ``K``."""
    proto = list(proto)
    n, m = len(K), len(proto)
    return float(K.sum() / n ** 2 - 2.0 * K[:, proto].sum() / (n * m) + K[np.ix_(proto, proto)].sum() / m ** 2)


def greedy_prototypes(K, n_proto: int) -> tuple[list[int], list[float]]:
    """Add, one at a time, the point that minimizes MMD^2; ties to the lowest index."""
    n = len(K)
    col_sum = K.sum(axis=0)
    chosen: list[int] = []
    trace = []
    in_sum = 0.0  # sum of K over chosen x chosen
    cross = 0.0   # sum of K over all x chosen
    for _ in range(min(n_proto, n)):
        m = len(chosen) + 1
        best, best_val = None, np.inf
        for c in range(n):
            if c in chosen:
                continue
            cr = cross + col_sum[c]
            ins = in_sum + 2.0 * K[c, chosen].sum() + K[c, c]
            val = -2.0 * cr / (n * m) + ins / m ** 2
            if val < best_val - 1e-15:
                best, best_val = c, val
        in_sum += 2.0 * K[best, chosen].sum() + K[best, best]
        cross += col_sum[best]
        chosen.append(best)
        trace.append(mmd2(K, chosen))
    return chosen, trace


def witness(K, proto) -> np.ndarray:
    """Witness function at every sample point."""
    return K.mean(axis=1) - K[:, list(proto)].mean(axis=1)


def greedy_criticisms(K, proto, n_crit: int, reg: bool = True) -> list[int]:
    """Maximize summed |witness| plus ``log det K[C, C]`` over non-prototypes."""
    wit = np.abs(witness(K, proto))
    chosen: list[int] = []
    pool = [i for i in range(len(K)) if i not in set(proto)]
    for _ in range(min(n_crit, len(pool))):
        best, best_val = None, -np.inf
        for c in pool:
            if c in chosen:
                continue
            C = chosen + [c]
            val = wit[C].sum()
            if reg:
                sub = K[np.ix_(C, C)] + 1e-8 * np.eye(len(C))
                val += np.linalg.slogdet(sub)[1]
            if val > best_val + 1e-15:
                best, best_val = c, val
        chosen.append(best)
    return chosen


class Representatives(NamedTuple):
    prototypes: list[int]
    criticisms: list[int]
    mmd_trace: list[float]
    sigma: float

    @property
    def all(self) -> list[int]:
        return self.prototypes + self.criticisms


def mmd_critic(X, n_proto: int, n_crit: int, sigma: float | None = None) -> Representatives:
    """Prototype and criticism row positions of ``X`` (RBF kernel, median heuristic)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = len(X)
    if n_proto + n_crit > n:
        warnings.warn(f"requested {n_proto}+{n_crit} representatives from {n} instances; clamping",
                      stacklevel=2)
        n_proto = min(n_proto, n)
        n_crit = min(n_crit, n - n_proto)
    sigma = median_bandwidth(X) if sigma is None else sigma
    K = rbf_kernel(X, sigma)
    proto, trace = greedy_prototypes(K, n_proto) if n_proto > 0 else ([], [])
    crit = greedy_criticisms(K, proto, n_crit) if n_crit > 0 and proto else []
    return Representatives(proto, crit, trace, sigma)
