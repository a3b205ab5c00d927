from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_score

from galactic.errors import PreconditionError
from galactic.structure import (
    Segmentation,
    build_subgroups,
    changepoint_scores,
    default_step,
    default_window,
    detect_changepoints,
    gap_distance_matrix,
    gap_vector,
    kmedoids,
    kmedoids_from_distances,
    silhouette,
)


def brute_scores(x, w):
    T = len(x)
    out = np.zeros(T + 1)
    for t in range(w, T - w + 1):
        a, b = x[t - w:t], x[t:t + w]
        out[t] = abs(a.mean() - b.mean()) + abs(a.std() - b.std())
    return out


def step_series(T, at, lo=0.0, hi=5.0, noise=0.0, seed=0):
    x = np.where(np.arange(T) < at, lo, hi).astype(float)
    return x + np.random.default_rng(seed).normal(0, noise, T)


def test_segmentation_type():
    s = Segmentation((0, 3, 10))
    assert s.segments == [(0, 3), (3, 10)] and s.M == 2 and s.T == 10
    assert s.segment_of().tolist() == [0] * 3 + [1] * 7
    for bad in [(0,), (1, 5), (0, 4, 4), (0, 5, 3)]:
        with pytest.raises(PreconditionError):
            Segmentation(bad)


def test_defaults():
    assert default_window(100) == 10 and default_window(12) == 2
    assert default_step(100) == 14 and default_step(3) == 1


def test_scores_match_brute_force():
    x = np.random.default_rng(0).normal(size=50)
    np.testing.assert_allclose(changepoint_scores(x, 5), brute_scores(x, 5), atol=1e-12)


def test_step_signal_single_breakpoint():
    x = step_series(100, 50)
    w = default_window(100)
    seg = detect_changepoints(x)
    interior = seg.breakpoints[1:-1]
    assert len(interior) == 1
    assert abs(interior[0] - 50) <= w
    # the exhaustive scan peaks at the same place
    sc = brute_scores(x, w)
    assert interior[0] == int(np.argmax(sc))


def test_constant_and_short():
    assert detect_changepoints(np.full(40, 2.0)).breakpoints == (0, 40)
    assert detect_changepoints(np.array([1.0, 5.0, 2.0])).breakpoints == (0, 3)


def test_bad_window():
    with pytest.raises(PreconditionError):
        detect_changepoints(np.zeros(20), window=0)
    with pytest.raises(PreconditionError):
        detect_changepoints(np.zeros(20), window=5, step=30)


@given(st.integers(0, 100_000), st.integers(8, 90), st.integers(2, 6))
@settings(max_examples=100, deadline=None)
def test_segmentation_validity(seed, T, w):
    rng = np.random.default_rng(seed)
    x = np.cumsum(rng.normal(size=T))
    w = min(w, T)
    seg = detect_changepoints(x, window=w)
    bp = np.array(seg.breakpoints)
    assert bp[0] == 0 and bp[-1] == T
    assert np.all(np.diff(bp) > 0)
    inner = bp[1:-1]
    if len(inner):
        assert inner.min() >= w and inner.max() <= T - w
        assert np.all(np.diff(inner) >= w)
    assert gap_vector(seg).sum() == T


def test_gap_vector():
    assert gap_vector(Segmentation((0, 3, 10))).tolist() == [3, 7]
    assert gap_vector(Segmentation.whole(12)).tolist() == [12]


def test_gap_distance_padding():
    D = gap_distance_matrix([np.array([3, 7]), np.array([10]), np.array([3, 3, 4])])
    assert D[0, 1] == 7 + 7
    assert D[0, 2] == 0 + 4 + 4
    assert np.array_equal(D, D.T) and np.all(np.diag(D) == 0)


def test_kmedoids_two_pairs_and_brute_force():
    pts = [np.array([10]), np.array([11]), np.array([50]), np.array([51])]
    res = kmedoids(pts, 2, seed=0)
    groups = {tuple(np.flatnonzero(res.assignment == r)) for r in range(2)}
    assert groups == {(0, 1), (2, 3)}
    D = gap_distance_matrix(pts)
    costs = {pair: D[:, list(pair)].min(axis=1).sum() for pair in combinations(range(4), 2)}
    best = min(costs.values())
    opt = [p for p, c in costs.items() if c == best]
    # the partition is unique even though two medoids per group tie
    parts = {frozenset(frozenset(np.flatnonzero(D[:, list(p)].argmin(axis=1) == r)) for r in range(2)) for p in opt}
    assert len(parts) == 1
    assert res.cost == best


def test_kmedoids_all_points_and_duplicates():
    pts = [np.array([v]) for v in [1, 5, 9, 20]]
    res = kmedoids(pts, 4, seed=3)
    assert res.cost == 0 and sorted(res.medoids.tolist()) == [0, 1, 2, 3]
    dup = [np.array([1]), np.array([1]), np.array([30]), np.array([30]), np.array([31])]
    r = kmedoids(dup, 2, seed=1)
    assert r.assignment[0] == r.assignment[1] and r.assignment[2] == r.assignment[3]
    with pytest.raises(PreconditionError):
        kmedoids(pts, 5)


def kmedoids_brute(D, k):
    return min(D[:, list(m)].min(axis=1).sum() for m in combinations(range(len(D)), k))


@given(st.integers(0, 10_000), st.integers(3, 9), st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_kmedoids_history_and_quality(seed, n, k):
    rng = np.random.default_rng(seed)
    pts = [rng.integers(1, 20, size=rng.integers(1, 4)) for _ in range(n)]
    k = min(k, n)
    res = kmedoids(pts, k, seed)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    assert res.cost <= res.history[0]
    D = gap_distance_matrix(pts)
    assert res.cost >= kmedoids_brute(D, k) - 1e-12
    assert kmedoids(pts, k, seed).assignment.tolist() == res.assignment.tolist()


def silhouette_brute(D, labels):
    n = len(D)
    vals = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            vals.append(0.0)
            continue
        a = sum(D[i, j] for j in own) / len(own)
        b = min(
            sum(D[i, j] for j in range(n) if labels[j] == g) / sum(1 for j in range(n) if labels[j] == g)
            for g in set(labels) if g != labels[i]
        )
        vals.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return sum(vals) / n


@given(st.integers(0, 10_000), st.integers(4, 30))
@settings(max_examples=60, deadline=None)
def test_silhouette_against_references(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 2))
    D = np.abs(pts[:, None, :] - pts[None]).sum(-1)
    k = int(rng.integers(2, min(5, n - 1) + 1))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
    s = silhouette(D, labels)
    assert abs(s - silhouette_brute(D, labels.tolist())) < 1e-12
    assert abs(s - silhouette_score(D, labels, metric="precomputed")) < 1e-12


def bundle_cluster():
    # two segmentation regimes: a level shift near t=20 or near t=44
    T = 64
    xs = [step_series(T, 20 + d) for d in [-1, 0, 1, 0]]
    xs += [step_series(T, 44 + d) for d in [0, 1, -1, 0]]
    return np.stack(xs)


def test_two_bundles_give_two_groups():
    X = bundle_cluster()
    sg = build_subgroups(X, seed=0)
    assert sg.R == 2
    a = sg.assignment
    assert len(set(a[:4])) == 1 and len(set(a[4:])) == 1 and a[0] != a[4]

    # exhaustive oracle over all partitions into 2 or 3 groups of size >= 2
    D = gap_distance_matrix([gap_vector(s) for s in sg.segmentations])
    best, best_lab = -np.inf, None
    for k in (2, 3):
        for lab in product(range(k), repeat=len(X)):
            if lab[0] != 0 or len(set(lab)) != k:
                continue
            if min(np.bincount(lab)) < 2:
                continue
            s = silhouette(D, np.array(lab))
            if s > best + 1e-12:
                best, best_lab = s, lab
    truth = {frozenset(np.flatnonzero(np.array(best_lab) == r)) for r in set(best_lab)}
    got = {frozenset(np.flatnonzero(a == r)) for r in range(sg.R)}
    assert got == truth


def test_degenerate_clusters():
    one = build_subgroups(np.random.default_rng(0).normal(size=(1, 30)))
    assert one.R == 1 and one.assignment.tolist() == [0]
    same = build_subgroups(np.tile(step_series(64, 30), (6, 1)))
    assert same.R == 1 and same.sizes == [6]
    with pytest.raises(PreconditionError):
        build_subgroups(np.zeros((0, 10)))


def test_subgroup_model_api_and_determinism():
    X = bundle_cluster()
    ids = np.arange(100, 108)
    a = build_subgroups(X, seed=4, cluster_id=2, member_ids=ids)
    b = build_subgroups(X, seed=4, cluster_id=2, member_ids=ids)
    assert a.to_json() == b.to_json()
    d = a.to_dict()
    assert set(d) == {"cluster_id", "R", "medoid_breakpoints", "assignment"}
    assert sorted(int(k) for k in d["assignment"]) == ids.tolist()
    assert sum(a.sizes) == 8
    for r in range(a.R):
        for i in a.group_members(r):
            assert a.group_of(int(i)) == r
    assert a.nearest_group(a.patterns[1]) == 1
    with pytest.raises(KeyError):
        a.group_of(5)
