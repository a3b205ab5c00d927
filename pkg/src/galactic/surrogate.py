"""Differentiable surrogate of cluster assignments.

A one-hidden-layer network ``T -> H -> K`` with tanh units and a softmax
head, trained by minibatch Adam on categorical cross-entropy. Gradients with
respect to both parameters and inputs are computed in closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Corpus
from .errors import ArtifactError, EmptyCorpusError, PreconditionError, ShapeError, TrainingError

FORMAT_VERSION = "surrogate-v1"
ZETA = 1e-12


@dataclass
class TrainConfig:
    hidden_size: int = 64
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    l2: float = 1e-4

    def __post_init__(self):
        for name in ("hidden_size", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise PreconditionError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.l2 < 0:
            raise PreconditionError("learning_rate must be positive and l2 non-negative")


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_low(p) -> np.ndarray | int:
    """argmax with ties resolved to the lowest index (numpy's behavior, made explicit)."""
    return np.argmax(p, axis=-1)


@dataclass
class SurrogateModel:
    W1: np.ndarray  # (H, T)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (K, H)
    b2: np.ndarray  # (K,)
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.W1.shape[1]

    @property
    def K(self) -> int:
        return self.W2.shape[0]

    @classmethod
    def init(cls, T: int, K: int, hidden: int, seed: int = 0) -> "SurrogateModel":
        rng = np.random.default_rng(seed)
        lim1 = np.sqrt(6.0 / (T + hidden))
        lim2 = np.sqrt(6.0 / (hidden + K))
        return cls(
            W1=rng.uniform(-lim1, lim1, (hidden, T)),
            b1=np.zeros(hidden),
            W2=rng.uniform(-lim2, lim2, (K, hidden)),
            b2=np.zeros(K),
        )

    @classmethod
    def zeros(cls, T: int, K: int, hidden: int = 4) -> "SurrogateModel":
        return cls(np.zeros((hidden, T)), np.zeros(hidden), np.zeros((K, hidden)), np.zeros(K))

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.T:
            raise ShapeError("series length does not match model input", expected=self.T, got=X.shape[-1])
        return X

    def logits(self, X):
        X = self._check(X)
        H = np.tanh(X @ self.W1.T + self.b1)
        return H @ self.W2.T + self.b2

    def predict_proba(self, X) -> np.ndarray:
        """Cluster posterior; accepts a single series or an ``(n, T)`` batch."""
        return _softmax(self.logits(X))

    def predict(self, X):
        return argmax_low(self.predict_proba(X))

    def input_gradient(self, x, k: int, objective: str = "log_prob", zeta: float = 0.0) -> np.ndarray:
        """Gradient of ``log(g_k(x) + zeta)`` (or its negative) with respect to ``x``."""
        x = self._check(x)
        if x.ndim != 1:
            raise ShapeError("input_gradient expects a single series")
        if not 0 <= k < self.K:
            raise PreconditionError("cluster index out of range", k=k, K=self.K)
        if objective not in ("log_prob", "neg_log_prob"):
            raise PreconditionError("unknown objective", objective=objective)
        h = np.tanh(self.W1 @ x + self.b1)
        p = _softmax(self.W2 @ h + self.b2)
        onehot = np.zeros(self.K)
        onehot[k] = 1.0
        # d log(p_k + zeta) / dz = p_k / (p_k + zeta) * (e_k - p)
        scale = 1.0 if zeta == 0.0 else p[k] / (p[k] + zeta)
        dz = scale * (onehot - p)
        dx = self.W1.T @ ((1.0 - h * h) * (self.W2.T @ dz))
        return -dx if objective == "neg_log_prob" else dx

    # ---- persistence -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "shapes": {"T": self.T, "H": self.W1.shape[0], "K": self.K},
            "W1": self.W1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.ravel().tolist(),
            "b2": self.b2.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateModel":
        if d.get("version") != FORMAT_VERSION:
            raise ArtifactError("unsupported surrogate version", version=d.get("version"))
        T, H, K = d["shapes"]["T"], d["shapes"]["H"], d["shapes"]["K"]
        return cls(
            W1=np.array(d["W1"], dtype=float).reshape(H, T),
            b1=np.array(d["b1"], dtype=float),
            W2=np.array(d["W2"], dtype=float).reshape(K, H),
            b2=np.array(d["b2"], dtype=float),
            meta=d.get("meta", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        path = Path(path)
        if not path.exists():
            raise ArtifactError("model artifact not found", path=str(path))
        return cls.from_dict(json.loads(path.read_text()))


def _loss_and_grads(model: SurrogateModel, X, y, l2: float):
    n = len(X)
    A = X @ model.W1.T + model.b1
    Hh = np.tanh(A)
    Z = Hh @ model.W2.T + model.b2
    logp = _log_softmax(Z)
    loss = -logp[np.arange(n), y].mean()
    loss += 0.5 * l2 * (np.sum(model.W1 ** 2) + np.sum(model.W2 ** 2))

    dZ = np.exp(logp)
    dZ[np.arange(n), y] -= 1.0
    dZ /= n
    gW2 = dZ.T @ Hh + l2 * model.W2
    gb2 = dZ.sum(axis=0)
    dA = (dZ @ model.W2) * (1.0 - Hh * Hh)
    gW1 = dA.T @ X + l2 * model.W1
    gb1 = dA.sum(axis=0)
    return loss, (gW1, gb1, gW2, gb2)


def full_loss(model: SurrogateModel, corpus: Corpus, l2: float = 0.0) -> float:
    return float(_loss_and_grads(model, corpus.X, corpus.labels, l2)[0])


def train(corpus: Corpus, cfg: TrainConfig | None = None) -> SurrogateModel:
    """Fit the surrogate to the corpus labels; deterministic for a given seed."""
    cfg = cfg or TrainConfig()
    if corpus.N == 0:
        raise EmptyCorpusError("cannot train on an empty corpus")
    if corpus.K < 2:
        raise PreconditionError("surrogate needs at least two clusters", K=corpus.K)

    model = SurrogateModel.init(corpus.T, corpus.K, cfg.hidden_size, cfg.seed)
    params = [model.W1, model.b1, model.W2, model.b2]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    rng = np.random.default_rng(cfg.seed + 1)
    X, y = corpus.X, corpus.labels
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(corpus.N)
        for start in range(0, corpus.N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = _loss_and_grads(model, X[idx], y[idx], cfg.l2)
            if not np.isfinite(loss):
                raise TrainingError("non-finite loss; lower the learning rate", epoch=epoch)
            step += 1
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= beta1
                mi += (1 - beta1) * g
                vi *= beta2
                vi += (1 - beta2) * g * g
                mhat = mi / (1 - beta1 ** step)
                vhat = vi / (1 - beta2 ** step)
                p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        epoch_loss = full_loss(model, corpus, cfg.l2)
        if not np.isfinite(epoch_loss):
            raise TrainingError("non-finite loss; lower the learning rate", epoch=epoch)
        history.append(epoch_loss)

    model.meta = {
        "epochs": cfg.epochs,
        "train_accuracy": accuracy(model, corpus),
        "final_loss": history[-1],
        "loss_history": history,
    }
    return model


def accuracy(model: SurrogateModel, corpus: Corpus) -> float:
    """Fraction of instances whose surrogate assignment equals the stored label."""
    if corpus.N == 0:
        raise EmptyCorpusError("accuracy of an empty corpus is undefined")
    return float(np.mean(model.predict(corpus.X) == corpus.labels))


def predict_proba(model: SurrogateModel, x) -> np.ndarray:
    return model.predict_proba(x)


def input_gradient(model: SurrogateModel, x, k: int, objective: str = "log_prob", zeta: float = 0.0):
    return model.input_gradient(x, k, objective, zeta)
