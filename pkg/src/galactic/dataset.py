"""Loading, normalizing and splitting labeled univariate time-series corpora.

The stored class labels of a UCR-style file are taken as the cluster
partition. Labels are remapped to ``0..K-1`` in ascending order of their
original values and the mapping is kept on the corpus.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCorpusError, FormatError, ParseError, PreconditionError

STD_FLOOR = 1e-8


@dataclass
class Corpus:
    """N series of common length T with integer cluster labels in ``[0, K)``.

    ``ids`` are the row indices of the series in the originally loaded file,
    so instances keep their identity across splits.
    """

    X: np.ndarray
    labels: np.ndarray
    K: int
    name: str = "corpus"
    label_map: dict[int, str] = field(default_factory=dict)
    ids: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.X.ndim != 2:
            raise FormatError("corpus values must be a 2-D array", shape=self.X.shape)
        if self.ids is None:
            self.ids = np.arange(len(self.X))
        self.ids = np.asarray(self.ids, dtype=int)
        if len(self.labels) != len(self.X) or len(self.ids) != len(self.X):
            raise FormatError("labels/ids length does not match series count")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.K):
            raise FormatError("label outside [0, K)", K=self.K)
        if not np.all(np.isfinite(self.X)):
            raise ParseError("corpus contains non-finite values")
        if not self.label_map:
            self.label_map = {k: str(k) for k in range(self.K)}

    @property
    def N(self) -> int:
        return len(self.X)

    @property
    def T(self) -> int:
        return self.X.shape[1]

    def members(self, k: int) -> np.ndarray:
        """Row positions of cluster ``k``."""
        return np.flatnonzero(self.labels == k)

    def subset(self, rows) -> "Corpus":
        rows = np.asarray(rows, dtype=int)
        return Corpus(
            X=self.X[rows],
            labels=self.labels[rows],
            K=self.K,
            name=self.name,
            label_map=dict(self.label_map),
            ids=self.ids[rows],
        )


def _detect_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _parse_label(cell: str, row: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError("label is not numeric", row=row, col=0, cell=cell) from None
    if not math.isfinite(value) or value != int(value):
        raise ParseError("label is not an integer", row=row, col=0, cell=cell)
    return int(value)


def load_ucr(path, normalize: bool = True, name: str | None = None) -> Corpus:
    """Read a UCR TSV/CSV file: first column label, remaining columns values.

    Rows and columns in error messages are 1-based.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise EmptyCorpusError("dataset has no rows", path=str(path))
    delim = _detect_delimiter(lines[0])

    raw_labels, rows = [], []
    width = None
    for i, line in enumerate(lines, start=1):
        cells = [c.strip() for c in line.split(delim)]
        if width is None:
            width = len(cells)
            if width < 2:
                raise FormatError("row has no values", row=i)
        elif len(cells) != width:
            raise FormatError(
                f"ragged row: expected {width} columns, got {len(cells)}", row=i
            )
        raw_labels.append(_parse_label(cells[0], i))
        values = []
        for j, cell in enumerate(cells[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError("non-numeric cell", row=i, col=j, cell=cell) from None
            if not math.isfinite(v):
                raise ParseError("missing or non-finite value", row=i, col=j, cell=cell)
            values.append(v)
        rows.append(values)

    originals = sorted(set(raw_labels))
    remap = {orig: k for k, orig in enumerate(originals)}
    X = np.array(rows, dtype=float)
    if normalize:
        X = znormalize_rows(X)
    return Corpus(
        X=X,
        labels=np.array([remap[v] for v in raw_labels]),
        K=len(originals),
        name=name or path.stem,
        label_map={k: str(orig) for orig, k in remap.items()},
    )


def save_ucr(corpus: Corpus, path, delimiter: str = "\t") -> None:
    """Write a corpus in UCR layout using the original label values."""
    with open(path, "w") as fh:
        for x, k in zip(corpus.X, corpus.labels):
            cells = [corpus.label_map.get(int(k), str(int(k)))] + [repr(float(v)) for v in x]
            fh.write(delimiter.join(cells) + "\n")


def znormalize(x) -> np.ndarray:
    """Zero mean, unit population std; near-constant series map to zeros."""
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd < STD_FLOOR:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def znormalize_rows(X) -> np.ndarray:
    return np.stack([znormalize(x) for x in np.asarray(X, dtype=float)])


def split(corpus: Corpus, train_frac: float = 0.8, seed: int = 0) -> tuple[Corpus, Corpus]:
    """Stratified train/test split.

    Each cluster contributes ``round(train_frac * n_k)`` instances to train,
    clamped to ``[1, n_k]``. A singleton cluster therefore has no test
    instance; a warning is recorded on both returned corpora.
    """
    if not 0.0 < train_frac < 1.0:
        raise PreconditionError("train_frac must lie in (0, 1)", train_frac=train_frac)
    rng = np.random.default_rng(seed)
    train_rows, test_rows, notes = [], [], []
    for k in range(corpus.K):
        rows = corpus.members(k)
        if len(rows) == 0:
            continue
        rows = rows[rng.permutation(len(rows))]
        n_train = min(len(rows), max(1, int(round(train_frac * len(rows)))))
        if len(rows) == 1:
            msg = f"cluster {k} has a single instance; it is kept in train only"
            notes.append(msg)
            warnings.warn(msg, stacklevel=2)
        train_rows.extend(rows[:n_train])
        test_rows.extend(rows[n_train:])
    train = corpus.subset(np.sort(np.asarray(train_rows, dtype=int)))
    test = corpus.subset(np.sort(np.asarray(test_rows, dtype=int)))
    train.warnings.extend(notes)
    test.warnings.extend(notes)
    return train, test


def corpus_summary(corpus: Corpus, n_train: int | None = None, n_test: int | None = None) -> dict:
    return {
        "name": corpus.name,
        "T": corpus.T,
        "K": corpus.K,
        "label_map": {str(k): v for k, v in sorted(corpus.label_map.items())},
        "n_train": corpus.N if n_train is None else n_train,
        "n_test": 0 if n_test is None else n_test,
    }


def corpus_summary_json(corpus: Corpus, **kw) -> str:
    return json.dumps(corpus_summary(corpus, **kw), sort_keys=True)
