"""Description-length accounting for global perturbation summaries.

Coverage is memoized once per (cluster, pool) as a flip matrix and stored
per candidate as a Python-int bitmask over instances, so every subset
evaluation in selection is an OR plus a popcount.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import PreconditionError

DEFAULT_PSZ = 64


def bits_universal(n: int) -> int:
    """Elias-gamma code length of a positive integer."""
    n = int(n)
    if n < 1:
        raise PreconditionError("universal code is defined for n >= 1", n=n)
    return 2 * (n.bit_length() - 1) + 1


def elias_gamma_encode(n: int) -> str:
    n = int(n)
    if n < 1:
        raise PreconditionError("Elias gamma encodes positive integers only", n=n)
    body = bin(n)[2:]
    return "0" * (len(body) - 1) + body


def elias_gamma_decode(code: str) -> tuple[int, str]:
    """Decode one codeword from the front of ``code``; returns (value, rest)."""
    zeros = len(code) - len(code.lstrip("0"))
    end = 2 * zeros + 1
    if end > len(code):
        raise PreconditionError("truncated Elias gamma codeword")
    return int(code[zeros:end], 2), code[end:]


def log2p1(v: float) -> float:
    if v < 0:
        raise PreconditionError("log2p1 is defined for non-negative values", v=v)
    return math.log2(v + 1.0)


@dataclass
class Perturbation:
    delta: np.ndarray
    cid: int = 0
    source_id: int | None = None
    source_group: int | None = None

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)

    @property
    def l0(self) -> int:
        return int(np.count_nonzero(self.delta))

    @property
    def l1(self) -> float:
        return float(np.abs(self.delta).sum())

    @property
    def l2(self) -> float:
        return float(np.linalg.norm(self.delta))

    def description_bits(self) -> float:
        return desc_bits(self.l0, self.l1)

    def to_dict(self) -> dict:
        nz = np.flatnonzero(self.delta)
        return {
            "cid": int(self.cid),
            "source_id": None if self.source_id is None else int(self.source_id),
            "source_group": None if self.source_group is None else int(self.source_group),
            "l0": self.l0,
            "l1": self.l1,
            "l2": self.l2,
            "delta": [[int(t), float(self.delta[t])] for t in nz],
        }


def desc_bits(l0: int, l1: float) -> float:
    return bits_universal(l0) + log2p1(l1)


def snap(delta, threshold: float) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    return np.where(np.abs(delta) > threshold, delta, 0.0)


@dataclass
class CandidatePool:
    cluster: int
    perturbations: list[Perturbation]
    p_sz: int = DEFAULT_PSZ
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        for p in self.perturbations:
            if p.l0 < 1:
                raise PreconditionError("pool perturbations need at least one non-zero entry", cid=p.cid)

    def __len__(self):
        return len(self.perturbations)

    @property
    def reference_index(self) -> int | None:
        """Position of the most expensive perturbation (ties to the first)."""
        if not self.perturbations:
            return None
        return int(np.argmax([p.description_bits() for p in self.perturbations]))

    @property
    def MC(self) -> float:
        return reference_cost([p.description_bits() for p in self.perturbations], self.p_sz)


def reference_cost(descs, p_sz: int) -> float:
    """Worst-case code length of an unexplained instance."""
    return (max(descs) if len(descs) else 0.0) + 2 * p_sz


def model_length(descs, cov_count: int, p_sz: int = DEFAULT_PSZ) -> float:
    """``sum(bits(l0) + log2p1(l1)) + (cov + |S|) * p_sz``."""
    if len(descs) == 0:
        return 0.0
    return float(sum(descs)) + (cov_count + len(descs)) * p_sz


def data_length(uncovered_count: int, MC: float) -> float:
    return uncovered_count * MC


class MdlProblem:
    """One selection instance: ``n`` instances, candidate bitmasks and costs.

    ``MC`` is fixed by the full cluster pool and shared by sub-problems.
    """

    def __init__(self, n_instances: int, cover_masks, descs, cids=None, MC: float | None = None,
                 p_sz: int = DEFAULT_PSZ, costs=None):
        self.n = int(n_instances)
        self.masks = [int(m) for m in cover_masks]
        self.descs = [float(d) for d in descs]
        self.cids = list(range(len(self.masks))) if cids is None else [int(c) for c in cids]
        self.p_sz = p_sz
        self.MC = reference_cost(self.descs, p_sz) if MC is None else float(MC)
        # costs[j] is the flipping cost of candidate j (same for every instance)
        self.costs = [0.0] * len(self.masks) if costs is None else [float(c) for c in costs]
        self.full = (1 << self.n) - 1

    @classmethod
    def from_flip_matrix(cls, flips, descs, **kw) -> "MdlProblem":
        flips = np.asarray(flips, dtype=bool)
        masks = []
        for j in range(flips.shape[1]):
            m = 0
            for i in np.flatnonzero(flips[:, j]):
                m |= 1 << int(i)
            masks.append(m)
        return cls(flips.shape[0], masks, descs, **kw)

    def __len__(self):
        return len(self.masks)

    def coverage_mask(self, S) -> int:
        m = 0
        for j in S:
            m |= self.masks[j]
        return m

    def gain(self, j: int, covered: int) -> int:
        return (self.masks[j] & ~covered & self.full).bit_count()

    def total(self, S) -> float:
        cov = self.coverage_mask(S).bit_count()
        return model_length([self.descs[j] for j in S], cov, self.p_sz) + data_length(self.n - cov, self.MC)

    def parts(self, S) -> tuple[float, float, int]:
        cov = self.coverage_mask(S).bit_count()
        return (model_length([self.descs[j] for j in S], cov, self.p_sz),
                data_length(self.n - cov, self.MC), cov)

    def empty_total(self) -> float:
        return self.n * self.MC

    def reduction(self, S) -> float:
        return self.empty_total() - self.total(S)

    def increment(self, j: int, S) -> float:
        """Closed-form ``L(S + j) - L(S)`` = desc + p_sz + gamma * (p_sz - MC)."""
        g = self.gain(j, self.coverage_mask(S))
        return self.descs[j] + self.p_sz + g * (self.p_sz - self.MC)

    def admissible(self, j: int, S) -> bool:
        return j not in S and self.gain(j, self.coverage_mask(S)) >= 1

    def subproblem(self, rows, cols) -> "MdlProblem":
        """Restrict to instance positions ``rows`` and candidate positions ``cols``; MC kept."""
        rows = list(rows)
        masks = []
        for j in cols:
            m = 0
            for new, old in enumerate(rows):
                if self.masks[j] >> old & 1:
                    m |= 1 << new
            masks.append(m)
        return MdlProblem(len(rows), masks, [self.descs[j] for j in cols],
                          [self.cids[j] for j in cols], self.MC, self.p_sz,
                          [self.costs[j] for j in cols])


@dataclass
class SummarySet:
    """Selected perturbations of one cluster with full bit accounting.

    ``eff`` is a fraction in [0, 1]; ``covered_ids`` and ``best`` are keyed
    by corpus instance id.
    """

    cluster_id: int
    algorithm: str
    mu: int
    selected: list[Perturbation]
    covered_ids: list[int]
    best: dict[int, int]
    best_cost: dict[int, float]
    model_bits: float
    data_bits: float
    reduction: float
    n_instances: int
    runtime_ms: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def total_bits(self) -> float:
        return self.model_bits + self.data_bits

    @property
    def eff(self) -> float:
        return len(self.covered_ids) / self.n_instances if self.n_instances else 0.0

    @property
    def afc(self) -> float | None:
        if not self.covered_ids:
            return None
        return float(np.mean([self.best_cost[i] for i in self.covered_ids]))

    def to_dict(self) -> dict:
        return {
            "cluster_id": int(self.cluster_id),
            "algorithm": self.algorithm,
            "mu": int(self.mu),
            "selected": [p.to_dict() for p in self.selected],
            "model_bits": self.model_bits,
            "data_bits": self.data_bits,
            "total_bits": self.total_bits,
            "reduction_bits": self.reduction,
            "eff": self.eff,
            "afc": self.afc,
            "covered_ids": [int(i) for i in self.covered_ids],
            "best_fit": {str(i): int(c) for i, c in sorted(self.best.items())},
            "runtime_ms": self.runtime_ms,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def flip_matrix(model, X, deltas) -> np.ndarray:
    """``flips[i, j]`` is True iff ``x_i + delta_j`` changes the surrogate's assignment."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    base = model.predict(X)
    flips = np.zeros((len(X), len(deltas)), dtype=bool)
    for j, d in enumerate(deltas):
        flips[:, j] = model.predict(X + np.asarray(d)) != base
    return flips


def coverage(model, X, perturbations: list[Perturbation]):
    """Covered positions plus, per covered position, best candidate position and L2 cost."""
    flips = flip_matrix(model, X, [p.delta for p in perturbations])
    costs = np.array([p.l2 for p in perturbations])
    return coverage_from_flips(flips, costs)


def coverage_from_flips(flips, costs):
    flips = np.asarray(flips, dtype=bool)
    covered, best, best_cost = [], {}, {}
    for i in range(flips.shape[0]):
        hits = np.flatnonzero(flips[i])
        if len(hits) == 0:
            continue
        j = int(hits[np.argmin(costs[hits])])
        covered.append(i)
        best[i] = j
        best_cost[i] = float(costs[j])
    return covered, best, best_cost


def mdl_total(problem: MdlProblem, S, pool: CandidatePool | None, cluster_id: int = 0,
              instance_ids=None, algorithm: str = "", mu: int = 0) -> SummarySet:
    """Full accounting of ``S`` (positions into ``problem``) as a SummarySet."""
    S = sorted(S)
    model_bits, data_bits, _ = problem.parts(S)
    ids = list(range(problem.n)) if instance_ids is None else [int(i) for i in instance_ids]
    covered, best, best_cost = [], {}, {}
    for pos in range(problem.n):
        hits = [j for j in S if problem.masks[j] >> pos & 1]
        if not hits:
            continue
        j = min(hits, key=lambda h: (problem.costs[h], problem.cids[h]))
        covered.append(ids[pos])
        best[ids[pos]] = problem.cids[j]
        best_cost[ids[pos]] = problem.costs[j]
    by_cid = {p.cid: p for p in pool.perturbations} if pool is not None else {}
    selected = [by_cid[problem.cids[j]] for j in S] if by_cid else [
        Perturbation(np.zeros(0), problem.cids[j]) for j in S]
    return SummarySet(
        cluster_id=cluster_id,
        algorithm=algorithm,
        mu=mu,
        selected=selected,
        covered_ids=covered,
        best=best,
        best_cost=best_cost,
        model_bits=model_bits,
        data_bits=data_bits,
        reduction=problem.empty_total() - (model_bits + data_bits),
        n_instances=problem.n,
    )


def problem_from_pool(model, X, pool: CandidatePool) -> MdlProblem:
    flips = flip_matrix(model, X, [p.delta for p in pool.perturbations])
    return MdlProblem.from_flip_matrix(
        flips,
        [p.description_bits() for p in pool.perturbations],
        cids=[p.cid for p in pool.perturbations],
        MC=pool.MC,
        p_sz=pool.p_sz,
        costs=[p.l2 for p in pool.perturbations],
    )
