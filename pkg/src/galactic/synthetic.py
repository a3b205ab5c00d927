"""Constructed corpora with known discriminative structure, used by tests and ``selftest``."""

from __future__ import annotations

import numpy as np

from .dataset import Corpus

BUMP_INTERVAL = (24, 40)


def bump_corpus(n_per_cluster: int = 50, T: int = 64, interval=BUMP_INTERVAL,
                amplitudes=(0.0, 2.0, -2.0), noise: float = 0.2, seed: int = 0) -> Corpus:
    """Clusters share Gaussian noise and differ only by the bump height on ``interval``."""
    rng = np.random.default_rng(seed)
    a, b = interval
    X, y = [], []
    for k, amp in enumerate(amplitudes):
        for _ in range(n_per_cluster):
            x = rng.normal(0.0, noise, T)
            x[a:b] += amp
            X.append(x)
            y.append(k)
    return Corpus(np.array(X), np.array(y), len(amplitudes), name="synthetic-bump")


def constant_corpus(n_per_cluster: int = 50, T: int = 32, levels=(1.0, -1.0)) -> Corpus:
    X = np.concatenate([np.full((n_per_cluster, T), lv) for lv in levels])
    y = np.repeat(np.arange(len(levels)), n_per_cluster)
    return Corpus(X, y, len(levels), name="synthetic-constant")
