"""Subset selection over a candidate pool: exhaustive, greedy and hierarchical."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations

from ..errors import BudgetError, PreconditionError
from .mdl import CandidatePool, MdlProblem, SummarySet, mdl_total

DEFAULT_CAP = 2_000_000
_EPS = 1e-12


def n_evaluations(n: int, mu: int) -> int:
    return sum(math.comb(n, i) for i in range(1, min(mu, n) + 1))


def optimal_subset(problem: MdlProblem, mu: int, cap: int = DEFAULT_CAP) -> list[int]:
    """argmin of the total length over all subsets of size <= mu (empty set included).

    Subsets are visited by size, then lexicographically, and only a strict
    improvement replaces the incumbent; that order realizes the tie rule.
    """
    if mu < 1:
        raise PreconditionError("budget must be at least 1", mu=mu)
    n = len(problem)
    need = n_evaluations(n, mu)
    if need > cap:
        raise BudgetError(
            f"exhaustive search needs {need} evaluations (cap {cap}); use greedy", n=n, mu=mu
        )
    masks, descs, p_sz, MC, N = problem.masks, problem.descs, problem.p_sz, problem.MC, problem.n
    best, best_total = [], problem.empty_total()
    for size in range(1, min(mu, n) + 1):
        for S in combinations(range(n), size):
            cov = 0
            d = 0.0
            for j in S:
                cov |= masks[j]
                d += descs[j]
            c = cov.bit_count()
            total = d + (c + size) * p_sz + (N - c) * MC
            if total < best_total - _EPS * max(1.0, abs(best_total)):
                best, best_total = list(S), total
    return best


@dataclass
class GreedyTrace:
    totals: list[float] = field(default_factory=list)
    picks: list[int] = field(default_factory=list)


def greedy_subset(problem: MdlProblem, mu: int, trace: GreedyTrace | None = None) -> list[int]:
    """Add the admissible candidate with the lowest resulting total until no strict decrease."""
    if mu < 1:
        raise PreconditionError("budget must be at least 1", mu=mu)
    S: list[int] = []
    covered = 0
    current = problem.empty_total()
    if trace is not None:
        trace.totals.append(current)
    while len(S) < mu:
        best_j, best_total = None, None
        for j in range(len(problem)):
            if j in S:
                continue
            g = problem.gain(j, covered)
            if g < 1:
                continue
            total = current + problem.descs[j] + problem.p_sz + g * (problem.p_sz - problem.MC)
            if best_total is None or total < best_total - _EPS * max(1.0, abs(best_total)):
                best_j, best_total = j, total
        if best_j is None or not best_total < current:
            break
        S.append(best_j)
        covered |= problem.masks[best_j]
        current = problem.total(S)
        if trace is not None:
            trace.totals.append(current)
            trace.picks.append(best_j)
    return S


def _select(problem, mu, inner, cap):
    if inner == "optimal":
        return optimal_subset(problem, mu, cap)
    if inner == "greedy":
        return greedy_subset(problem, mu)
    raise PreconditionError("unknown inner algorithm", inner=inner)


def get_perm(pool_source_ids, group_ids) -> tuple[list[int], bool]:
    """Positions of candidates sourced from ``group_ids``; falls back to every candidate.

    Returns ``(positions, fell_back)``.
    """
    members = set(int(i) for i in group_ids)
    picked = [j for j, sid in enumerate(pool_source_ids) if sid is not None and int(sid) in members]
    if not picked:
        return list(range(len(pool_source_ids))), True
    return picked, False


def group_budget(group_size: int, cluster_size: int, mu: int, n_groups: int) -> int:
    """``ceil(|G_r| / |C_k| * mu_k) * |G_k|``."""
    return math.ceil(group_size / cluster_size * mu) * n_groups


@dataclass
class HierarchicalTrace:
    budgets: list[int] = field(default_factory=list)
    fallbacks: list[bool] = field(default_factory=list)
    phase1: list[list[int]] = field(default_factory=list)
    pooled: list[int] = field(default_factory=list)


def hierarchical_subset(problem: MdlProblem, groups: list[list[int]], source_ids, mu: int,
                        inner: str = "greedy", cap: int = DEFAULT_CAP,
                        trace: HierarchicalTrace | None = None) -> list[int]:
    """Two-phase selection.

    ``groups`` hold instance positions of the problem; ``source_ids`` gives,
    per candidate position, the instance position it was generated from.
    Phase 1 solves every group on its applicable candidates; phase 2 solves
    the cluster on the pooled winners, deduplicated by candidate position.
    """
    trace = trace if trace is not None else HierarchicalTrace()
    pooled: list[int] = []
    n_groups = len(groups)
    for rows in groups:
        if not rows:
            continue
        cols, fell_back = get_perm(source_ids, rows)
        mu_r = group_budget(len(rows), problem.n, mu, n_groups)
        sub = problem.subproblem(rows, cols)
        win = _select(sub, mu_r, inner, cap)
        chosen = [cols[j] for j in win]
        trace.budgets.append(mu_r)
        trace.fallbacks.append(fell_back)
        trace.phase1.append(chosen)
        for j in chosen:
            if j not in pooled:
                pooled.append(j)
    pooled.sort()
    trace.pooled = pooled
    if not pooled:
        return []
    final = _select(problem.subproblem(range(problem.n), pooled), mu, inner, cap)
    return sorted(pooled[j] for j in final)


ALGORITHMS = ("optimal", "greedy", "hierarchical_optimal", "hierarchical_greedy")


def _summary(problem, S, pool, cluster_id, instance_ids, algorithm, mu, t0, notes=()):
    out = mdl_total(problem, S, pool, cluster_id, instance_ids, algorithm, mu)
    out.runtime_ms = (time.perf_counter() - t0) * 1000.0
    out.notes.extend(notes)
    return out


def select_optimal(problem, mu, pool: CandidatePool | None = None, cluster_id=0, instance_ids=None,
                   cap: int = DEFAULT_CAP) -> SummarySet:
    t0 = time.perf_counter()
    return _summary(problem, optimal_subset(problem, mu, cap), pool, cluster_id, instance_ids,
                    "optimal", mu, t0)


def select_greedy(problem, mu, pool: CandidatePool | None = None, cluster_id=0,
                  instance_ids=None) -> SummarySet:
    t0 = time.perf_counter()
    return _summary(problem, greedy_subset(problem, mu), pool, cluster_id, instance_ids,
                    "greedy", mu, t0)


def select_hierarchical(problem, groups, source_ids, mu, inner="greedy",
                        pool: CandidatePool | None = None, cluster_id=0, instance_ids=None,
                        cap: int = DEFAULT_CAP) -> SummarySet:
    t0 = time.perf_counter()
    trace = HierarchicalTrace()
    S = hierarchical_subset(problem, groups, source_ids, mu, inner, cap, trace)
    notes = [f"group {r}: no sourced candidates, used full pool"
             for r, fb in enumerate(trace.fallbacks) if fb]
    return _summary(problem, S, pool, cluster_id, instance_ids, f"hierarchical_{inner}", mu, t0, notes)
