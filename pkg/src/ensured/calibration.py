"""Venn-Abers probability calibration and conformal predictive systems.

Both calibrators sit on top of an arbitrary scoring model. Venn-Abers turns
a classifier score into a probability interval via two isotonic fits;
a conformal predictive system turns a regressor's point prediction into a
cumulative distribution built from signed calibration residuals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "IsotonicFit",
    "ProbabilityInterval",
    "ConformalPredictiveDistribution",
    "VennAbers",
    "fit_isotonic",
    "pav",
    "regularise",
    "va_predict",
    "build_cpd",
    "cpd_interval_two_sided",
    "cpd_interval_one_sided",
    "cpd_median",
    "cpd_threshold_prob",
]


def pav(y: Sequence[float], weights: Optional[Sequence[float]] = None) -> np.ndarray:
    """Pool-adjacent-violators on a sequence already ordered by score.

    Returns the weighted least-squares non-decreasing fit of ``y``.
    """
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    n = len(y)
    # block stack: mean, weight, length
    means = np.empty(n)
    wts = np.empty(n)
    lens = np.empty(n, dtype=np.intp)
    top = -1
    for i in range(n):
        top += 1
        means[top] = y[i]
        wts[top] = w[i]
        lens[top] = 1
        while top > 0 and means[top - 1] > means[top]:
            tw = wts[top - 1] + wts[top]
            means[top - 1] = (means[top - 1] * wts[top - 1] + means[top] * wts[top]) / tw
            wts[top - 1] = tw
            lens[top - 1] += lens[top]
            top -= 1
    return np.repeat(means[: top + 1], lens[: top + 1])


@dataclass(frozen=True)
class IsotonicFit:
    """Monotone step function produced by :func:`fit_isotonic`.

    ``scores`` are sorted (stable, so duplicates keep input order) and
    ``fitted`` holds the value assigned to each point. Evaluation is
    right-continuous: a query takes the value of the last point whose score
    is ``<=`` the query, and queries below the first score take the first
    value.
    """

    scores: np.ndarray
    fitted: np.ndarray

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self.scores.tolist(), self.fitted.tolist()))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.scores, s, side="right") - 1
        return self.fitted[np.clip(idx, 0, len(self.fitted) - 1)]


def fit_isotonic(points: Sequence[tuple[float, float]]) -> IsotonicFit:
    """Least-squares isotonic fit of ``(score, label)`` pairs."""
    if len(points) == 0:
        raise ValueError("no calibration points")
    arr = np.asarray(points, dtype=float).reshape(-1, 2)
    order = np.argsort(arr[:, 0], kind="stable")
    scores = arr[order, 0]
    labels = arr[order, 1]
    if labels.min() < 0 or labels.max() > 1:
        raise ValueError("labels must lie in [0, 1]")
    return IsotonicFit(scores=scores, fitted=pav(labels))


def regularise(low: float, high: float) -> float:
    """Single probability from a Venn-Abers interval, ``high / (1 - low + high)``."""
    if low > high:
        raise ValueError(f"low ({low}) exceeds high ({high})")
    return high / (1.0 - low + high)


@dataclass(frozen=True)
class ProbabilityInterval:
    low: float
    high: float
    estimate: float
    mode: str = "regularised"

    def __post_init__(self):
        if self.mode not in ("mean", "regularised"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def uncertainty(self) -> float:
        return self.high - self.low


class VennAbers:
    """Inductive Venn-Abers predictor over calibration scores and binary labels.

    The isotonic calibrators g0 and g1 are refitted with the test score
    appended. Because PAV depends only on the order of the labels, the
    fitted value at the test point depends only on how many calibration
    scores are ``<=`` the test score, so all ``q + 1`` possible outcomes are
    precomputed once and queries become a binary search.

    Parameters
    ----------
    scores : array-like of shape (q,)
        Model scores of the calibration objects.
    labels : array-like of shape (q,)
        Binary labels of the calibration objects.
    precompute : bool, default=True
        Build the lookup table up front. With ``precompute=False`` every
        query refits both calibrators from scratch.
    """

    def __init__(self, scores, labels, precompute: bool = True):
        scores = np.asarray(scores, dtype=float).ravel()
        labels = np.asarray(labels, dtype=float).ravel()
        if len(scores) == 0:
            raise ValueError("no calibration points")
        if len(scores) != len(labels):
            raise ValueError("scores and labels differ in length")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be binary")
        order = np.argsort(scores, kind="stable")
        self.scores = scores[order]
        self.labels = labels[order]
        self._low = self._high = None
        if precompute:
            self._low, self._high = self._table()

    @property
    def size(self) -> int:
        return len(self.scores)

    def _fit_at(self, k: int, label: float) -> float:
        # test point sits after the first k sorted calibration points
        y = np.concatenate([self.labels[:k], [label], self.labels[k:]])
        return float(pav(y)[k])

    def _table(self):
        q = self.size
        low = np.array([self._fit_at(k, 0.0) for k in range(q + 1)])
        high = np.array([self._fit_at(k, 1.0) for k in range(q + 1)])
        return low, high

    def interval(self, s):
        """Vectorised ``(low, high)`` for one or many test scores."""
        s = np.asarray(s, dtype=float)
        k = np.searchsorted(self.scores, s, side="right")
        if self._low is not None:
            return self._low[k], self._high[k]
        flat = np.atleast_1d(k).ravel()
        low = np.array([self._fit_at(int(i), 0.0) for i in flat]).reshape(np.shape(k))
        high = np.array([self._fit_at(int(i), 1.0) for i in flat]).reshape(np.shape(k))
        return low, high

    def predict(self, s):
        """Vectorised ``(estimate, low, high)`` with the regularised estimate."""
        low, high = self.interval(s)
        return high / (1.0 - low + high), low, high

    def predict_interval(self, s: float) -> ProbabilityInterval:
        low, high = self.interval(float(s))
        low, high = float(low), float(high)
        return ProbabilityInterval(low, high, regularise(low, high))


def va_predict(scores, labels, test_score: float) -> ProbabilityInterval:
    """One-shot Venn-Abers prediction, refitting both calibrators."""
    if len(scores) == 0:
        raise ValueError("no calibration points")
    pts = list(zip(scores, labels))
    g0 = fit_isotonic(pts + [(test_score, 0.0)])
    g1 = fit_isotonic(pts + [(test_score, 1.0)])
    low, high = float(g0(test_score)), float(g1(test_score))
    return ProbabilityInterval(low, high, regularise(low, high))


@dataclass(frozen=True)
class ConformalPredictiveDistribution:
    """CPD for one test object.

    ``c_values`` are the sorted values ``point_prediction + alpha_i``.
    ``tau`` is the tie variable; ``tau=None`` draws it from U(0, 1) with a
    generator seeded by ``seed`` on every evaluation.
    """

    c_values: np.ndarray
    point_prediction: float
    tau: Optional[float] = 0.5
    seed: Optional[int] = None
    _rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_rng", np.random.default_rng(self.seed))

    @property
    def q(self) -> int:
        return len(self.c_values)

    def C(self, i: int) -> float:
        """1-based order statistic with ``C(0) = -inf`` and ``C(q+1) = +inf``."""
        if i <= 0:
            return -math.inf
        if i > self.q:
            return math.inf
        return float(self.c_values[i - 1])

    def _tau(self, shape):
        if self.tau is not None:
            return self.tau
        return self._rng.uniform(size=shape)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        below = np.searchsorted(self.c_values, y, side="left")
        at_or_below = np.searchsorted(self.c_values, y, side="right")
        # open interval (C_i, C_i+1): (i + tau) / (q + 1)
        # tie C_i' = ... = C_i'' = y:  (i' - 1 + (i'' - i' + 2) tau) / (q + 1)
        ties = at_or_below - below
        out = (below + (ties + 1) * self._tau(np.shape(y))) / (self.q + 1)
        return out if out.ndim else float(out)


def build_cpd(residuals, point_prediction: float, tau: Optional[float] = 0.5,
              seed: Optional[int] = None) -> ConformalPredictiveDistribution:
    residuals = np.asarray(residuals, dtype=float).ravel()
    if len(residuals) == 0:
        raise ValueError("no calibration residuals")
    c = np.sort(point_prediction + residuals)
    return ConformalPredictiveDistribution(c, float(point_prediction), tau, seed)


def _checked(cpd: ConformalPredictiveDistribution, i: int, epsilon: float) -> float:
    if not 1 <= i <= cpd.q:
        raise ValueError(
            f"insufficient calibration data for epsilon={epsilon} (q={cpd.q}, index {i})"
        )
    return cpd.C(i)


def cpd_interval_two_sided(cpd: ConformalPredictiveDistribution, epsilon: float):
    """Symmetric interval ``[C_floor((eps/2)(q+1)), C_ceil((1-eps/2)(q+1))]``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    n = cpd.q + 1
    lo = math.floor(epsilon / 2 * n + 1e-12)
    hi = math.ceil((1 - epsilon / 2) * n - 1e-12)
    return _checked(cpd, lo, epsilon), _checked(cpd, hi, epsilon)


def cpd_interval_one_sided(cpd: ConformalPredictiveDistribution, epsilon: float,
                           side: str):
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    n = cpd.q + 1
    if side == "lower_bounded":
        return _checked(cpd, math.floor(epsilon * n + 1e-12), epsilon), math.inf
    if side == "upper_bounded":
        return -math.inf, _checked(cpd, math.ceil((1 - epsilon) * n - 1e-12), epsilon)
    raise ValueError(f"unknown side {side!r}")


def cpd_median(cpd: ConformalPredictiveDistribution) -> float:
    n = cpd.q + 1
    return (cpd.C(math.ceil(0.5 * n)) + cpd.C(math.floor(0.5 * n))) / 2


def cpd_threshold_prob(cpd: ConformalPredictiveDistribution, t: float) -> float:
    """Estimated probability that the target is ``<= t``."""
    return cpd(t)
