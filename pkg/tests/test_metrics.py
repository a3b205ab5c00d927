from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from galactic.errors import PreconditionError
from galactic.globalcf import MdlProblem, Perturbation, CandidatePool, select_greedy
from galactic.metrics import changed_segments, evaluate_global, evaluate_local, gain_loss, reports_to_csv
from galactic.structure import Segmentation


def cf(delta):
    return SimpleNamespace(delta=np.asarray(delta, dtype=float))


SEG = Segmentation((0, 3, 6, 10))


def test_all_failures_give_nulls():
    r = evaluate_local([(i, None) for i in range(5)], {})
    assert r.eff == 0 and r.afc is None and r.acs is None and r.act is None
    assert r.n_attempts == 5 and r.n_success == 0
    with pytest.raises(PreconditionError):
        evaluate_local([], {})


def test_single_success_counts():
    d = np.zeros(10)
    d[3], d[4] = 0.5, -0.5
    r = evaluate_local([(0, cf(d)), (1, None)], {0: SEG})
    assert r.eff == 50.0 and r.act == 2 and r.acs == 1
    assert abs(r.afc - np.sqrt(0.5)) < 1e-12
    with pytest.raises(PreconditionError):
        evaluate_local([(0, cf(np.zeros(10)))], {0: SEG})


def test_changed_segments():
    d = np.zeros(10)
    d[[2, 3, 9]] = 1.0
    assert changed_segments(d, SEG) == 3
    assert changed_segments(np.zeros(10), SEG) == 0


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_order_invariance_and_bounds(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    results, segs = [], {}
    for i in range(n):
        segs[i] = SEG
        if rng.random() < 0.3:
            results.append((i, None))
            continue
        d = np.where(rng.random(10) < 0.3, rng.normal(size=10), 0.0)
        d[int(rng.integers(10))] = 1.0
        results.append((i, cf(d)))
    a = evaluate_local(results, segs)
    b = evaluate_local([results[j] for j in rng.permutation(n)], segs)
    assert a.to_json() == b.to_json()
    assert 0 <= a.eff <= 100
    if a.acs is not None:
        assert a.acs <= a.act <= 10 and a.acs <= SEG.M and a.afc >= 0


def summary_for(deltas, masks, n, ids, MC=100.0):
    perts = [Perturbation(np.asarray(d, dtype=float), cid=j) for j, d in enumerate(deltas)]
    pool = CandidatePool(0, perts, p_sz=1)
    prob = MdlProblem(n, masks, [p.description_bits() for p in perts], MC=MC, p_sz=1,
                      costs=[p.l2 for p in perts])
    return select_greedy(prob, 3, pool, 0, ids)


def test_global_empty_set():
    s = summary_for([], [], 4, [0, 1, 2, 3])
    r = evaluate_global(s, {})
    assert r.eff == 0 and r.afc is None and r.acs is None and r.act is None


def test_global_single_delta_stats():
    d = np.zeros(10)
    d[[0, 1, 7]] = 2.0
    s = summary_for([d], [0b1111], 4, [10, 11, 12, 13])
    r = evaluate_global(s, {i: SEG for i in range(10, 14)})
    assert r.eff == 100.0 and r.act == 3 and r.acs == 2
    assert abs(r.afc - np.linalg.norm(d)) < 1e-12


def test_global_recompute_from_raw():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n, k = 8, 4
        ds = [np.where(rng.random(10) < 0.4, rng.normal(size=10), 0.0) + np.eye(10)[j] for j in range(k)]
        masks = [int(rng.integers(0, 1 << n)) for _ in range(k)]
        ids = list(range(n))
        s = summary_for(ds, masks, n, ids)
        r = evaluate_global(s, {i: SEG for i in ids})
        chosen = [p.cid for p in s.selected]
        cov = [i for i in ids if any(masks[j] >> i & 1 for j in chosen)]
        assert r.eff == 100.0 * len(cov) / n
        if cov:
            best = [min((j for j in chosen if masks[j] >> i & 1), key=lambda j: (np.linalg.norm(ds[j]), j))
                    for i in cov]
            assert abs(r.afc - np.mean([np.linalg.norm(ds[j]) for j in best])) < 1e-12
            assert r.act == np.mean([np.count_nonzero(ds[j]) for j in best])
            assert r.acs == np.mean([changed_segments(ds[j], SEG) for j in best])


def test_gain_loss():
    assert gain_loss([1, 2], [1, 2]) == 0
    assert gain_loss([1, 2], [2, 4]) == 1.5
    assert gain_loss([2, 4], [1, 2]) == -1.5
    with pytest.raises(PreconditionError):
        gain_loss([1], [1, 2])
    with pytest.raises(PreconditionError):
        gain_loss([], [])


def test_csv():
    a = evaluate_local([(0, None)], {}, runtime_s=1.5, label="a")
    d = np.zeros(10)
    d[0] = 1.0
    b = evaluate_local([(0, cf(d))], {0: SEG}, runtime_s=2.0, label="b")
    text = reports_to_csv([a, b])
    assert text.splitlines() == ["label,eff,afc,acs,act,RT", "a,0.0,-,-,-,1.5", "b,100.0,1.0,1.0,1.0,2.0"]
    assert reports_to_csv([a], strip_timing=True).splitlines()[0] == "label,eff,afc,acs,act"
