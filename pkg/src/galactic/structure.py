"""Instance segmentation and per-cluster subgroup discovery.

Segmentations come from a sliding two-window dissimilarity score; their gap
vectors (segment durations) are clustered with PAM k-medoids, and the number
of subgroups is chosen by silhouette.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import PreconditionError

MIN_SCORE = 1e-9
MAX_KSEG = 6


@dataclass(frozen=True)
class Segmentation:
    """Breakpoints ``0 = tau_0 < ... < tau_M = T``; segment m is ``[tau_{m-1}, tau_m)``."""

    breakpoints: tuple[int, ...]

    def __post_init__(self):
        bp = tuple(int(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if len(bp) < 2 or bp[0] != 0 or any(b >= c for b, c in zip(bp, bp[1:])):
            raise PreconditionError("breakpoints must start at 0 and strictly increase", bp=bp)

    @classmethod
    def whole(cls, T: int) -> "Segmentation":
        return cls((0, T))

    @property
    def T(self) -> int:
        return self.breakpoints[-1]

    @property
    def M(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def segments(self) -> list[tuple[int, int]]:
        bp = self.breakpoints
        return list(zip(bp[:-1], bp[1:]))

    def segment_of(self) -> np.ndarray:
        """Segment index of every timestep."""
        out = np.empty(self.T, dtype=int)
        for m, (a, b) in enumerate(self.segments):
            out[a:b] = m
        return out


def default_window(T: int) -> int:
    return max(2, T // 10)


def default_step(T: int) -> int:
    return max(1, int(T / 6.67))


def changepoint_scores(x, window: int) -> np.ndarray:
    """Two-window mean+std dissimilarity at every candidate ``t``.

    Entry ``t`` compares ``x[t-window:t]`` with ``x[t:t+window]``; positions
    without two full windows score 0.
    """
    x = np.asarray(x, dtype=float)
    T = len(x)
    scores = np.zeros(T + 1)
    if 2 * window > T:
        return scores
    win = np.lib.stride_tricks.sliding_window_view(x, window)
    mu, sd = win.mean(axis=1), win.std(axis=1)
    t = np.arange(window, T - window + 1)
    scores[t] = np.abs(mu[t - window] - mu[t]) + np.abs(sd[t - window] - sd[t])
    return scores


def detect_changepoints(x, window: int | None = None, step: int | None = None) -> Segmentation:
    """Segment a series at non-max-suppressed peaks of the dissimilarity score.

    Peaks must be local maxima and exceed the 75th percentile of candidate
    scores. Accepted breakpoints are at least ``window`` apart from each
    other and from both ends. ``step`` is validated but every candidate is
    scanned.
    """
    x = np.asarray(x, dtype=float)
    T = len(x)
    window = default_window(T) if window is None else int(window)
    step = default_step(T) if step is None else int(step)
    if T < 4:
        return Segmentation.whole(T)
    if not 1 <= window <= T or not 1 <= step <= T:
        raise PreconditionError("window and step must lie in [1, T]", window=window, step=step, T=T)
    if 2 * window > T:
        return Segmentation.whole(T)

    scores = changepoint_scores(x, window)
    cand = np.arange(window, T - window + 1)
    cs = scores[cand]
    threshold = max(float(np.percentile(cs, 75)), MIN_SCORE)
    peaks = []
    for t in cand:
        s = scores[t]
        if s <= threshold:
            continue
        lo = scores[t - 1] if t - 1 >= window else -np.inf
        hi = scores[t + 1] if t + 1 <= T - window else -np.inf
        if s >= lo and s >= hi:
            peaks.append(t)
    # strongest first; ties to the earliest position
    peaks.sort(key=lambda t: (-scores[t], t))
    chosen: list[int] = []
    for t in peaks:
        if all(abs(t - c) >= window for c in chosen):
            chosen.append(int(t))
    return Segmentation(tuple([0] + sorted(chosen) + [T]))


def gap_vector(seg: Segmentation) -> np.ndarray:
    return np.diff(np.asarray(seg.breakpoints))


def gap_distance_matrix(gaps: Sequence[np.ndarray]) -> np.ndarray:
    """Pairwise L1 distance between zero-padded gap vectors."""
    width = max(len(g) for g in gaps)
    P = np.zeros((len(gaps), width))
    for i, g in enumerate(gaps):
        P[i, :len(g)] = g
    return np.abs(P[:, None, :] - P[None, :, :]).sum(axis=-1)


class KMedoidsResult(NamedTuple):
    assignment: np.ndarray
    medoids: np.ndarray
    cost: float
    history: list


def _assign(D, medoids):
    sub = D[:, medoids]
    return np.argmin(sub, axis=1), float(sub.min(axis=1).sum())


def kmedoids_from_distances(D, n_clusters: int, seed: int = 0) -> KMedoidsResult:
    """PAM with seeded greedy-farthest initialization.

    The first medoid is drawn at random; each further medoid is the point
    farthest from the current medoid set. Best-improvement swaps are applied
    until no single swap lowers the total cost. Medoids are returned sorted,
    and group ``r`` is the one served by ``medoids[r]``.
    """
    D = np.asarray(D, dtype=float)
    n = len(D)
    if not 1 <= n_clusters <= n:
        raise PreconditionError("n_clusters must lie in [1, #points]", n_clusters=n_clusters, n=n)
    rng = np.random.default_rng(seed)
    medoids = [int(rng.integers(n))]
    while len(medoids) < n_clusters:
        nearest = D[:, medoids].min(axis=1)
        nearest[medoids] = -1.0
        medoids.append(int(np.argmax(nearest)))

    _, cost = _assign(D, medoids)
    history = [cost]
    while True:
        best = (cost, None, None)
        for i in range(n_clusters):
            for o in range(n):
                if o in medoids:
                    continue
                trial = medoids.copy()
                trial[i] = o
                _, c = _assign(D, trial)
                if c < best[0] - 1e-12:
                    best = (c, i, o)
        if best[1] is None:
            break
        medoids[best[1]] = best[2]
        cost = best[0]
        history.append(cost)

    medoids = np.array(sorted(medoids))
    assignment, cost = _assign(D, medoids)
    return KMedoidsResult(assignment, medoids, cost, history)


def kmedoids(points: Sequence, n_clusters: int, seed: int = 0) -> KMedoidsResult:
    points = [np.asarray(p, dtype=float) for p in points]
    if n_clusters > len(points):
        raise PreconditionError("more medoids requested than points", n_clusters=n_clusters, n=len(points))
    return kmedoids_from_distances(gap_distance_matrix(points), n_clusters, seed)


def silhouette(D, labels) -> float:
    """Mean silhouette from a distance matrix; singleton members score 0."""
    D = np.asarray(D, dtype=float)
    labels = np.asarray(labels)
    groups = np.unique(labels)
    if len(groups) < 2:
        return 0.0
    s = np.zeros(len(D))
    for i in range(len(D)):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = D[i, own].sum() / (own.sum() - 1)
        b = min(D[i, labels == g].mean() for g in groups if g != labels[i])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(s.mean())


@dataclass
class SubgroupModel:
    """Dominant segmentation regimes of one cluster.

    ``member_ids`` are corpus instance ids; ``assignment[i]`` is the
    subgroup of ``member_ids[i]`` and ``medoids[r]`` indexes the member
    whose segmentation is pattern ``r``.
    """

    cluster_id: int
    patterns: list[Segmentation]
    assignment: np.ndarray
    member_ids: np.ndarray
    medoids: np.ndarray
    segmentations: list[Segmentation] = field(default_factory=list)
    silhouette: float = 0.0

    @property
    def R(self) -> int:
        return len(self.patterns)

    @property
    def sizes(self) -> list[int]:
        return [int(np.sum(self.assignment == r)) for r in range(self.R)]

    def group_members(self, r: int) -> np.ndarray:
        return self.member_ids[self.assignment == r]

    def group_of(self, instance_id: int) -> int:
        hit = np.flatnonzero(self.member_ids == instance_id)
        if len(hit) == 0:
            raise KeyError(instance_id)
        return int(self.assignment[hit[0]])

    def nearest_group(self, seg: Segmentation) -> int:
        gaps = [gap_vector(seg)] + [gap_vector(p) for p in self.patterns]
        return int(np.argmin(gap_distance_matrix(gaps)[0, 1:]))

    def to_dict(self) -> dict:
        return {
            "cluster_id": int(self.cluster_id),
            "R": self.R,
            "medoid_breakpoints": [list(p.breakpoints) for p in self.patterns],
            "assignment": {str(int(i)): int(r) for i, r in zip(self.member_ids, self.assignment)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _single_group(cluster_id, segs, D, member_ids) -> SubgroupModel:
    medoid = int(np.argmin(D.sum(axis=1))) if len(D) else 0
    return SubgroupModel(
        cluster_id=cluster_id,
        patterns=[segs[medoid]],
        assignment=np.zeros(len(segs), dtype=int),
        member_ids=np.asarray(member_ids, dtype=int),
        medoids=np.array([medoid]),
        segmentations=list(segs),
    )


def build_subgroups(
    series,
    window: int | None = None,
    step: int | None = None,
    seed: int = 0,
    cluster_id: int = 0,
    member_ids=None,
) -> SubgroupModel:
    """Segment every series of a cluster and group them by segmentation regime."""
    series = np.atleast_2d(np.asarray(series, dtype=float))
    n = len(series)
    if n == 0:
        raise PreconditionError("cluster has no instances", cluster_id=cluster_id)
    member_ids = np.arange(n) if member_ids is None else np.asarray(member_ids, dtype=int)
    segs = [detect_changepoints(x, window, step) for x in series]
    D = gap_distance_matrix([gap_vector(s) for s in segs])
    if n <= 2 or not np.any(D > 0):
        return _single_group(cluster_id, segs, D, member_ids)

    k_seed = seed ^ cluster_id
    trials = []
    for k in range(2, min(MAX_KSEG, n - 1) + 1):
        res = kmedoids_from_distances(D, k, k_seed)
        sizes = np.bincount(res.assignment, minlength=k)
        trials.append((silhouette(D, res.assignment), bool(sizes.min() >= 2), k, res))
    pool = [t for t in trials if t[1]] or trials
    # highest silhouette; ties to the smaller K_seg
    score, _, _, res = max(pool, key=lambda t: (t[0], -t[2]))
    if score <= 0:
        return _single_group(cluster_id, segs, D, member_ids)
    return SubgroupModel(
        cluster_id=cluster_id,
        patterns=[segs[m] for m in res.medoids],
        assignment=res.assignment,
        member_ids=member_ids,
        medoids=res.medoids,
        segmentations=segs,
        silhouette=score,
    )
