"""Tabular datasets: CSV ingestion, seeded splitting, synthetic generators.

Categorical columns are stored as integer codes into a per-column sorted
alphabet so every dataset is a plain float matrix.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "DataSplit",
    "load_csv",
    "write_csv",
    "split",
    "synth_classification",
    "synth_regression",
    "load_wine",
    "load_california_housing",
]

_MISSING = {"", "na", "nan", "null", "none", "?"}


@dataclass
class Dataset:
    """Feature matrix plus target.

    Attributes
    ----------
    feature_names : list of str
    feature_kinds : list of {"numeric", "categorical"}
    X : ndarray of shape (n, F)
        Categorical columns hold integer codes into ``categories[j]``.
    y : ndarray of shape (n,)
    task : {"classification", "regression"}
    categories : dict
        Column index -> list of category labels (code order).
    ids : ndarray of shape (n,)
        Stable row identifiers (source row order unless set otherwise).
    truth : ndarray or None
        Known posterior / noise-free signal for synthetic data.
    """

    feature_names: list
    feature_kinds: list
    X: np.ndarray
    y: np.ndarray
    task: str
    categories: dict = field(default_factory=dict)
    ids: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None
    target_name: str = "target"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if len(self.y) != len(self.X):
            raise ValueError("target length differs from row count")
        if len(self.feature_names) != self.X.shape[1] or \
                len(self.feature_kinds) != self.X.shape[1]:
            raise ValueError("feature metadata does not match column count")
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "classification" and not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("classification target must be binary (0/1)")
        if self.ids is None:
            self.ids = np.arange(len(self.X))
        self.ids = np.asarray(self.ids, dtype=np.int64)

    def __len__(self):
        return len(self.X)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def is_categorical(self, j: int) -> bool:
        return self.feature_kinds[j] == "categorical"

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(
            list(self.feature_names), list(self.feature_kinds), self.X[rows], self.y[rows],
            self.task, dict(self.categories), self.ids[rows],
            None if self.truth is None else self.truth[rows], self.target_name,
        )

    def format_value(self, j: int, v: float) -> str:
        if self.is_categorical(j):
            return str(self.categories[j][int(v)])
        return f"{v:g}"


@dataclass
class DataSplit:
    proper_training: Dataset
    calibration: Dataset
    test: Dataset
    seed: int


def _parse_float(text: str) -> Optional[float]:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(path, target_column: str, task: str, *, delimiter: Optional[str] = None,
             categorical: Sequence[str] = (), binarize_at: Optional[float] = None,
             drop_missing: bool = False) -> Dataset:
    """Read a header-first CSV into a :class:`Dataset`.

    Columns with any non-numeric value become categorical. Errors carry the
    1-based file line number. ``delimiter=None`` sniffs between ``,`` and
    ``;``. ``binarize_at`` maps a numeric classification target to
    ``target >= binarize_at``. Rows with missing values are an error unless
    ``drop_missing`` is set.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    if delimiter is None:
        first = text.split("\n", 1)[0]
        delimiter = ";" if first.count(";") > first.count(",") else ","
    reader = csv.reader(text.splitlines(), delimiter=delimiter)
    header = next(reader, None)
    if not header:
        raise ValueError(f"{path}: line 1: missing header")
    header = [h.strip().strip('"') for h in header]
    if target_column not in header:
        raise ValueError(f"{path}: target column {target_column!r} not in header")
    width = len(header)
    rows, lines = [], []
    dropped = 0
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != width:
            raise ValueError(f"{path}: line {line}: expected {width} fields, got {len(row)}")
        row = [c.strip() for c in row]
        missing = [header[j] for j, c in enumerate(row) if c.lower() in _MISSING]
        if missing:
            if drop_missing:
                dropped += 1
                continue
            raise ValueError(f"{path}: line {line}: missing value in column {missing[0]!r}")
        rows.append(row)
        lines.append(line)
    if dropped:
        log.warning("%s: dropped %d rows with missing values", path, dropped)
    if not rows:
        raise ValueError(f"{path}: no data rows")

    t = header.index(target_column)
    y = []
    for row, line in zip(rows, lines):
        v = _parse_float(row[t])
        if v is None:
            raise ValueError(f"{path}: line {line}: unparseable numeric target {row[t]!r}")
        y.append(v)
    y = np.array(y)
    if task == "classification" and binarize_at is not None:
        y = (y >= binarize_at).astype(float)
    elif task == "classification" and not np.all((y == 0) | (y == 1)):
        raise ValueError(f"{path}: classification target {target_column!r} is not 0/1 "
                         "(use binarize_at)")

    names, kinds, cols, categories = [], [], [], {}
    for j, name in enumerate(header):
        if j == t:
            continue
        raw = [row[j] for row in rows]
        parsed = [_parse_float(v) for v in raw]
        if name in categorical or any(v is None for v in parsed):
            alphabet = sorted(set(raw))
            code = {c: i for i, c in enumerate(alphabet)}
            categories[len(names)] = alphabet
            cols.append([code[v] for v in raw])
            kinds.append("categorical")
        else:
            cols.append(parsed)
            kinds.append("numeric")
        names.append(name)
    X = np.array(cols, dtype=float).T.reshape(len(rows), len(names))
    return Dataset(names, kinds, X, y, task, categories, target_name=target_column)


def write_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` so that :func:`load_csv` reads it back unchanged."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(dataset.feature_names) + [dataset.target_name])
        for x, y in zip(dataset.X, dataset.y):
            cells = [dataset.categories[j][int(v)] if dataset.is_categorical(j) else repr(float(v))
                     for j, v in enumerate(x)]
            w.writerow(cells + [repr(float(y))])


def split(dataset: Dataset, cal_size: int, test_size: int, seed: int) -> DataSplit:
    """Seeded permutation: first ``test_size`` rows test, next ``cal_size`` calibration."""
    n = len(dataset)
    if cal_size < 1 or test_size < 0:
        raise ValueError("cal_size must be >= 1 and test_size >= 0")
    if cal_size + test_size >= n:
        raise ValueError(
            f"cal_size + test_size = {cal_size + test_size} leaves no training rows (n={n})"
        )
    perm = np.random.default_rng(seed).permutation(n)
    test = perm[:test_size]
    cal = perm[test_size:test_size + cal_size]
    train = perm[test_size + cal_size:]
    return DataSplit(dataset.subset(train), dataset.subset(cal), dataset.subset(test), seed)


def synth_classification(n: int, seed: int = 0) -> Dataset:
    """Two uniform features; ``P(y=1 | x) = x1`` (stored in ``truth``)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 2))
    y = (rng.uniform(size=n) < X[:, 0]).astype(float)
    return Dataset(["x1", "x2"], ["numeric", "numeric"], X, y, "classification",
                   truth=X[:, 0].copy(), target_name="y")


def synth_regression(n: int, seed: int = 0) -> Dataset:
    """``y = 10 x1 + N(0, 1)`` on two uniform features; signal stored in ``truth``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 2))
    signal = 10.0 * X[:, 0]
    y = signal + rng.normal(size=n)
    return Dataset(["x1", "x2"], ["numeric", "numeric"], X, y, "regression",
                   truth=signal, target_name="y")


def load_wine(path) -> Dataset:
    """UCI white Wine Quality (``;``-separated). Class 1 is ``quality >= 6``."""
    return load_csv(path, "quality", "classification", binarize_at=6)


def load_california_housing(path, target_column: Optional[str] = None) -> Dataset:
    """California Housing CSV as regression data.

    Accepts the common 10-column ``housing.csv`` layout (target
    ``median_house_value``) or a frame with ``MedHouseVal``. Rows with a
    missing ``total_bedrooms`` are dropped with a warning.
    """
    if target_column is None:
        with open(path, encoding="utf-8") as fh:
            head = fh.readline()
        target_column = "MedHouseVal" if "MedHouseVal" in head else "median_house_value"
    return load_csv(path, target_column, "regression", drop_missing=True)
