"""Masked-gradient counterfactual search for single instances, plus a kNN retrieval baseline."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCorpusError, PreconditionError
from .importance import STRATEGIES, ImportanceIndex, ImportanceMask, get_mask
from .surrogate import ZETA, SurrogateModel

POLICIES = ("second_possible", "random", "all_random")


@dataclass
class LocalConfig:
    step_size: float = 0.01
    n_iter: int = 500
    tolerance: float = 1e-4
    patience: int = 2
    jitter: float = 0.01
    lambda_prox: float = 0.2
    lambda_flip: float = 1.0
    zeta: float = ZETA
    policy: str = "second_possible"
    strategy: str = "combined"
    threshold: float = 0.005
    q: float = 0.75

    def __post_init__(self):
        if min(self.step_size, self.jitter, self.tolerance, self.threshold) <= 0:
            raise PreconditionError("step_size, jitter, tolerance and threshold must be positive")
        if self.patience < 1 or self.n_iter < 1:
            raise PreconditionError("patience and n_iter must be at least 1")
        if self.lambda_prox < 0 or self.lambda_flip < 0:
            raise PreconditionError("loss weights must be non-negative")
        if self.policy not in POLICIES:
            raise PreconditionError("unknown target policy", policy=self.policy)
        if self.strategy not in STRATEGIES:
            raise PreconditionError("unknown weighting strategy", strategy=self.strategy)
        if self.policy == "all_random" and self.strategy in ("target", "combined"):
            raise PreconditionError("the all_random policy has no target cluster; "
                                    "use the source or baseline strategy", strategy=self.strategy)
        if not 0 <= self.q < 1:
            raise PreconditionError("q must lie in [0, 1)", q=self.q)


@dataclass
class Counterfactual:
    x: np.ndarray
    x_cf: np.ndarray
    delta: np.ndarray
    source: int
    target: int | None
    achieved: int
    mask: ImportanceMask
    loss: float
    iterations: int
    instance_id: int | None = None
    policy: str = ""
    strategy: str = ""
    snap_reverted: bool = False
    loss_trace: list = field(default_factory=list, repr=False)

    @property
    def l0(self) -> int:
        return int(np.count_nonzero(self.delta))

    @property
    def l1(self) -> float:
        return float(np.abs(self.delta).sum())

    @property
    def l2_cost(self) -> float:
        return float(np.linalg.norm(self.delta))

    def to_dict(self) -> dict:
        nz = np.flatnonzero(self.delta)
        return {
            "instance_id": None if self.instance_id is None else int(self.instance_id),
            "source": int(self.source),
            "target": None if self.target is None else int(self.target),
            "target_policy": self.policy,
            "strategy": self.strategy,
            "achieved": int(self.achieved),
            "delta": [[int(t), float(self.delta[t])] for t in nz],
            "l0": self.l0,
            "l1": self.l1,
            "l2_cost": self.l2_cost,
            "iterations": int(self.iterations),
            "snap_reverted": self.snap_reverted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def resolve_target(x, model: SurrogateModel, policy: str = "second_possible", seed: int = 0) -> int | None:
    if model.K < 2:
        raise PreconditionError("target resolution needs at least two clusters")
    p = model.predict_proba(x)
    s = int(np.argmax(p))
    if policy == "second_possible":
        rest = p.copy()
        rest[s] = -np.inf
        return int(np.argmax(rest))
    if policy == "random":
        others = [c for c in range(model.K) if c != s]
        return int(np.random.default_rng(seed).choice(others))
    if policy == "all_random":
        return None
    raise PreconditionError("unknown target policy", policy=policy)


def _flip_loss(model, x_prime, s, t, zeta):
    p = model.predict_proba(x_prime)
    if t is not None:
        return -np.log(p[t] + zeta), p
    return np.log(p[s] + zeta), p


def _is_flipped(p, s, t) -> bool:
    a = int(np.argmax(p))
    return a == t if t is not None else a != s


def galactic_l(
    x,
    model: SurrogateModel,
    index: ImportanceIndex | None = None,
    cfg: LocalConfig | None = None,
    seed: int = 0,
    instance_id: int | None = None,
    mask: ImportanceMask | None = None,
) -> Counterfactual | None:
    """Search for the loss-minimal flipped iterate under a hard gradient mask.

    Returns ``None`` when no iterate flips within ``cfg.n_iter`` steps.
    """
    cfg = cfg or LocalConfig()
    x = np.asarray(x, dtype=float)
    T = len(x)
    s = int(model.predict(x))
    t = resolve_target(x, model, cfg.policy, seed)
    if mask is None:
        mask = get_mask(x, s, t, cfg.strategy, index, cfg.q, instance_id)
    w = np.asarray(mask.w, dtype=float)

    rng = np.random.default_rng(seed)
    x_prime = x + rng.normal(0.0, cfg.jitter, T) * w
    m = np.zeros(T)
    v = np.zeros(T)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    best, best_loss = None, np.inf
    prev_loss, count = 0.0, 0
    trace = []
    it = 0
    for it in range(1, cfg.n_iter + 1):
        diff = x_prime - x
        prox = float(np.linalg.norm(diff))
        flip, p = _flip_loss(model, x_prime, s, t, cfg.zeta)
        loss = cfg.lambda_prox * prox + cfg.lambda_flip * float(flip)

        if _is_flipped(p, s, t):
            if loss < best_loss:
                best, best_loss = x_prime.copy(), loss
            count = count + 1 if abs(loss - prev_loss) < cfg.tolerance else 0
        trace.append(best_loss)
        prev_loss = loss
        if count >= cfg.patience:
            break

        g_prox = diff / prox if prox > 0 else np.zeros(T)
        if t is not None:
            g_flip = model.input_gradient(x_prime, t, "neg_log_prob", cfg.zeta)
        else:
            g_flip = model.input_gradient(x_prime, s, "log_prob", cfg.zeta)
        grad = (cfg.lambda_prox * g_prox + cfg.lambda_flip * g_flip) * w

        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        mhat = m / (1 - beta1 ** it)
        vhat = v / (1 - beta2 ** it)
        x_prime = x_prime - cfg.step_size * mhat / (np.sqrt(vhat) + eps)

    if best is None:
        return None

    raw = best - x
    delta = np.where(np.abs(raw) > cfg.threshold, raw, 0.0)
    reverted = False
    p_snap = model.predict_proba(x + delta)
    if not _is_flipped(p_snap, s, t) or not np.any(delta):
        delta, reverted = raw, True
    x_cf = x + delta
    return Counterfactual(
        x=x,
        x_cf=x_cf,
        delta=delta,
        source=s,
        target=t,
        achieved=int(model.predict(x_cf)),
        mask=mask,
        loss=float(best_loss),
        iterations=it,
        instance_id=instance_id,
        policy=cfg.policy,
        strategy=mask.strategy,
        snap_reverted=reverted,
        loss_trace=trace,
    )


def knn_counterfactual(x, train_X, train_labels, model: SurrogateModel, k: int = 5,
                       instance_id: int | None = None) -> Counterfactual | None:
    """Return the nearest of the ``k`` closest other-cluster series that the surrogate
    also assigns away from the source cluster."""
    if k < 1:
        raise PreconditionError("k must be at least 1", k=k)
    train_X = np.atleast_2d(np.asarray(train_X, dtype=float))
    train_labels = np.asarray(train_labels, dtype=int)
    if len(train_X) == 0:
        raise EmptyCorpusError("kNN baseline needs a non-empty training set")
    x = np.asarray(x, dtype=float)
    s = int(model.predict(x))
    rows = np.flatnonzero(train_labels != s)
    dist = np.linalg.norm(train_X[rows] - x, axis=1)
    order = rows[np.argsort(dist, kind="stable")][:k]
    if len(order) == 0:
        return None
    preds = model.predict(train_X[order])
    for row, pred in zip(order, preds):
        if pred != s:
            x_cf = train_X[row].copy()
            return Counterfactual(
                x=x,
                x_cf=x_cf,
                delta=x_cf - x,
                source=s,
                target=int(train_labels[row]),
                achieved=int(pred),
                mask=ImportanceMask(np.ones(len(x), dtype=int), "baseline", 0.0),
                loss=float(np.linalg.norm(x_cf - x)),
                iterations=0,
                instance_id=instance_id,
                policy="knn",
                strategy="baseline",
            )
    return None
