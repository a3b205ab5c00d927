"""Permutation importance of segments and the binary timestep masks built from it.

Two shuffling modes are supported. Without ``donors`` each segment block is
permuted among the evaluated rows with a random derangement. With
``donors`` every evaluated row receives the block of a randomly drawn donor
row, which is what makes a segment that separates clusters (but is constant
inside one) register as important.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .structure import Segmentation, SubgroupModel, detect_changepoints

STRATEGIES = ("baseline", "source", "target", "combined")


@dataclass
class SegmentScores:
    seg: Segmentation
    scores: np.ndarray
    baseline_accuracy: float
    B: int
    warnings: list[str] = field(default_factory=list)


@dataclass
class ImportanceMask:
    w: np.ndarray
    strategy: str
    q: float
    segment_scores: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "q": self.q,
            "w": [int(v) for v in self.w],
            "segment_scores": [float(s) for s in self.segment_scores],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class UnifiedIntervals:
    intervals: list[tuple[int, int]]
    importances: np.ndarray

    def per_timestep(self) -> np.ndarray:
        out = np.zeros(self.intervals[-1][1])
        for (a, b), v in zip(self.intervals, self.importances):
            out[a:b] = v
        return out


def random_derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of ``range(n)`` with no fixed point (``n >= 2``)."""
    if n < 2:
        raise PreconditionError("a derangement needs at least two elements", n=n)
    ident = np.arange(n)
    while True:
        p = rng.permutation(n)
        if not np.any(p == ident):
            return p


def block_accuracy(model, X, label: int, a: int, b: int, source_rows) -> float:
    """Accuracy on ``X`` after overwriting columns ``[a, b)`` with ``source_rows``."""
    Xp = np.array(X, dtype=float, copy=True)
    Xp[:, a:b] = source_rows
    return float(np.mean(model.predict(Xp) == label))


def segment_importance(
    model,
    X,
    label: int,
    seg: Segmentation,
    B: int = 5,
    seed: int = 0,
    donors=None,
) -> SegmentScores:
    """``imp(I_m) = |a_c - mean_b a_{c,m}^{(b)}|`` for every segment of ``seg``.

    Repetition ``b`` of segment ``m`` draws from its own stream
    ``seed ^ (m * 1000 + b)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if B < 1:
        raise PreconditionError("B must be at least 1", B=B)
    n = len(X)
    base = float(np.mean(model.predict(X) == label)) if n else 0.0
    if donors is None and n < 2:
        msg = "segment importance needs two or more instances; scores set to zero"
        warnings.warn(msg, stacklevel=2)
        return SegmentScores(seg, np.zeros(seg.M), base, B, [msg])
    D = None if donors is None else np.atleast_2d(np.asarray(donors, dtype=float))

    scores = np.zeros(seg.M)
    for m, (a, b) in enumerate(seg.segments):
        accs = []
        for rep in range(B):
            rng = np.random.default_rng(seed ^ (m * 1000 + rep))
            if D is None:
                rows = X[random_derangement(n, rng), a:b]
            else:
                rows = D[rng.integers(len(D), size=n), a:b]
            accs.append(block_accuracy(model, X, label, a, b, rows))
        scores[m] = abs(base - np.mean(accs))
    return SegmentScores(seg, scores, base, B)


def quantile_threshold(values, q: float) -> float:
    """Nearest-rank threshold: the sorted value at 0-based position ``floor(q * n)``."""
    v = np.sort(np.asarray(values, dtype=float))
    if not 0.0 <= q < 1.0:
        raise PreconditionError("q must lie in [0, 1)", q=q)
    return float(v[min(len(v) - 1, int(np.floor(q * len(v))))])


def _binarize(per_unit, spans, T: int, q: float):
    per_unit = np.asarray(per_unit, dtype=float)
    w = np.zeros(T, dtype=int)
    if np.all(per_unit == per_unit[0]) or q == 0.0:
        w[:] = 1
        return w
    thr = quantile_threshold(per_unit, q)
    for (a, b), s in zip(spans, per_unit):
        if s >= thr:
            w[a:b] = 1
    return w


def binarize_mask(scores: SegmentScores, seg: Segmentation | None = None, q: float = 0.75,
                  strategy: str = "source") -> ImportanceMask:
    seg = seg or scores.seg
    w = _binarize(scores.scores, seg.segments, seg.T, q)
    return ImportanceMask(w, strategy, q, list(scores.scores))


def align_intervals(segs: list[Segmentation], scores: list) -> UnifiedIntervals:
    """Overlap-weighted average of segment importances on the union of breakpoints.

    ``imp[a,b) = 1/|G| * sum_g sum_{I in S_g} imp_g(I) * |[a,b) & I| / |I|``
    """
    if not segs or len(segs) != len(scores):
        raise PreconditionError("need one score vector per segmentation")
    T = segs[0].T
    if any(s.T != T for s in segs):
        raise PreconditionError("segmentations cover different lengths")
    cuts = sorted(set().union(*(s.breakpoints for s in segs)))
    intervals = list(zip(cuts[:-1], cuts[1:]))
    imp = np.zeros(len(intervals))
    for seg, sc in zip(segs, scores):
        sc = np.asarray(getattr(sc, "scores", sc), dtype=float)
        for (lo, hi), s in zip(seg.segments, sc):
            length = hi - lo
            for j, (a, b) in enumerate(intervals):
                overlap = min(b, hi) - max(a, lo)
                if overlap > 0:
                    imp[j] += s * overlap / length
    return UnifiedIntervals(intervals, imp / len(segs))


def binarize_intervals(ui: UnifiedIntervals, q: float = 0.75, strategy: str = "target") -> ImportanceMask:
    T = ui.intervals[-1][1]
    w = _binarize(ui.importances, ui.intervals, T, q)
    return ImportanceMask(w, strategy, q, list(ui.importances))


class ImportanceIndex:
    """Lazily computed subgroup importances for every cluster.

    ``X_by_id`` maps corpus instance ids to series. Subgroup ``r`` of
    cluster ``k`` is scored on its own members against its medoid pattern,
    falling back to the whole cluster when the subgroup is a singleton and
    no donor pool is configured.
    """

    def __init__(self, model, subgroups: dict[int, SubgroupModel], X_by_id, B: int = 5,
                 seed: int = 0, donors=None, window=None, step=None):
        self.model = model
        self.subgroups = subgroups
        self.X_by_id = X_by_id
        self.B = B
        self.seed = seed
        self.donors = donors
        self.window = window
        self.step = step
        self._cache: dict[tuple[int, int], SegmentScores] = {}

    def _rows(self, ids) -> np.ndarray:
        return np.stack([self.X_by_id[int(i)] for i in ids])

    def group_scores(self, k: int, r: int) -> SegmentScores:
        key = (k, r)
        if key not in self._cache:
            sg = self.subgroups[k]
            ids = sg.group_members(r)
            if self.donors is None and len(ids) < 2:
                ids = sg.member_ids
            group_seed = self.seed ^ (k * 7919 + r * 104729)
            self._cache[key] = segment_importance(
                self.model, self._rows(ids), k, sg.patterns[r], self.B, group_seed, self.donors
            )
        return self._cache[key]

    def source_group(self, x, s: int, instance_id: int | None = None) -> int:
        sg = self.subgroups[s]
        if instance_id is not None and instance_id in set(sg.member_ids.tolist()):
            return sg.group_of(instance_id)
        return sg.nearest_group(detect_changepoints(x, self.window, self.step))


def get_mask(x, s: int, t: int | None, strategy: str, index: ImportanceIndex | None,
             q: float = 0.75, instance_id: int | None = None) -> ImportanceMask:
    """Timestep mask for searching a counterfactual of ``x`` from cluster ``s`` toward ``t``."""
    x = np.asarray(x, dtype=float)
    if strategy not in STRATEGIES:
        raise PreconditionError("unknown weighting strategy", strategy=strategy)
    if strategy == "baseline":
        return ImportanceMask(np.ones(len(x), dtype=int), "baseline", q)
    if index is None:
        raise PreconditionError("non-baseline strategies need an importance index", strategy=strategy)
    if strategy in ("target", "combined") and t is None:
        raise PreconditionError(
            f"strategy '{strategy}' needs a resolved target cluster; use a target policy "
            "other than all_random or the source/baseline strategy"
        )

    if strategy == "source":
        r = index.source_group(x, s, instance_id)
        sc = index.group_scores(s, r)
        return binarize_mask(sc, index.subgroups[s].patterns[r], q, "source")

    segs, scores = [], []
    if strategy == "combined":
        r = index.source_group(x, s, instance_id)
        segs.append(index.subgroups[s].patterns[r])
        scores.append(index.group_scores(s, r))
    target = index.subgroups[t]
    for rt in range(target.R):
        segs.append(target.patterns[rt])
        scores.append(index.group_scores(t, rt))
    return binarize_intervals(align_intervals(segs, scores), q, strategy)
