"""Calibrated factual and alternative explanations by feature perturbation.

For each feature the test instance is copied with that feature replaced by
values from the calibration set, the copies are rescored and calibrated,
and the calibrated outputs are aggregated into one rule per condition.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .calibration import (
    VennAbers,
    build_cpd,
    cpd_interval_two_sided,
    cpd_median,
)
from .datasets import Dataset
from .forest import ExternalScores

__all__ = [
    "ExplanationMode",
    "Condition",
    "FeatureRule",
    "Explanation",
    "CalibratedModel",
    "calibrated_predict",
    "discretize_feature",
    "explain_alternatives",
    "explain_factual",
    "add_conjunctions",
    "explain_many",
]

CLASSIFICATION = "classification"
REGRESSION_INTERVAL = "regression_interval"
REGRESSION_THRESHOLD = "regression_threshold"


@dataclass(frozen=True)
class ExplanationMode:
    kind: str = CLASSIFICATION
    epsilon: Optional[float] = None
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.kind == REGRESSION_INTERVAL:
            if self.epsilon is None or not 0 < self.epsilon < 1:
                raise ValueError("regression_interval needs epsilon in (0, 1)")
        elif self.kind == REGRESSION_THRESHOLD:
            if self.threshold is None or not math.isfinite(self.threshold):
                raise ValueError("regression_threshold needs a finite threshold")
        elif self.kind != CLASSIFICATION:
            raise ValueError(f"unknown mode {self.kind!r}")

    @classmethod
    def classification(cls):
        return cls(CLASSIFICATION)

    @classmethod
    def interval(cls, epsilon: float):
        return cls(REGRESSION_INTERVAL, epsilon=epsilon)

    @classmethod
    def thresholded(cls, threshold: float):
        return cls(REGRESSION_THRESHOLD, threshold=threshold)

    @property
    def probabilistic(self) -> bool:
        return self.kind != REGRESSION_INTERVAL

    @property
    def task(self) -> str:
        return "classification" if self.kind == CLASSIFICATION else "regression"

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
        if self.threshold is not None:
            d["threshold"] = self.threshold
        return d


@dataclass(frozen=True)
class Condition:
    """``x[feature] == value``, ``x[feature] < value`` or ``x[feature] >= value``."""

    feature: int
    op: str
    value: float

    def __post_init__(self):
        if self.op not in ("eq", "lt", "ge"):
            raise ValueError(f"unknown operator {self.op!r}")

    def holds(self, v):
        v = np.asarray(v, dtype=float)
        if self.op == "eq":
            return v == self.value
        if self.op == "lt":
            return v < self.value
        return v >= self.value

    def text(self, dataset: Optional[Dataset] = None) -> str:
        name = f"x{self.feature}" if dataset is None else dataset.feature_names[self.feature]
        if dataset is not None and dataset.is_categorical(self.feature):
            val = dataset.format_value(self.feature, self.value)
        else:
            val = f"{self.value:.6g}"
        sym = {"eq": "=", "lt": "<", "ge": ">="}[self.op]
        return f"{name} {sym} {val}"


@dataclass(frozen=True)
class FeatureRule:
    """One rule of an explanation.

    For alternative rules ``estimate``/``low``/``high`` are the calibrated
    prediction under the condition; for factual rules they are the feature
    weight and its interval. ``support`` holds, per condition, the
    substituted values and their weights.
    """

    conditions: tuple
    estimate: float
    low: float
    high: float
    support: tuple = field(default=(), repr=False, compare=False)

    @property
    def is_conjunctive(self) -> bool:
        return len(self.conditions) > 1

    @property
    def features(self) -> tuple:
        return tuple(c.feature for c in self.conditions)

    @property
    def uncertainty(self) -> float:
        return self.high - self.low

    def text(self, dataset: Optional[Dataset] = None) -> str:
        return " & ".join(c.text(dataset) for c in self.conditions)


@dataclass
class Explanation:
    instance: np.ndarray
    mode: ExplanationMode
    estimate: float
    low: float
    high: float
    rules: list
    kind: str
    instance_id: Optional[int] = None

    @property
    def uncertainty(self) -> float:
        return self.high - self.low


class CalibratedModel:
    """A scoring model bound to a calibration set and an explanation mode.

    Classification scores go through Venn-Abers. Regression predictions
    get a conformal predictive distribution from the signed calibration
    residuals; in threshold mode the CPD value at the threshold becomes a
    score, which is calibrated by Venn-Abers against ``y < threshold`` on
    the calibration set.
    """

    def __init__(self, model, calibration: Dataset, mode: ExplanationMode,
                 tau: float = 0.5):
        if len(calibration) == 0:
            raise ValueError("empty calibration set")
        if mode.task != model.task:
            raise ValueError(f"{mode.kind} mode needs a {mode.task} model, got {model.task}")
        self.model = model
        self.calibration = calibration
        self.mode = mode
        self.tau = tau
        if isinstance(model, ExternalScores):
            scores = model.score_ids(calibration.ids)
        else:
            scores = model.predict(calibration.X)
        y = calibration.y
        if mode.kind == CLASSIFICATION:
            self._va = VennAbers(scores, y)
        else:
            self.residuals = np.sort(y - scores)
            if mode.kind == REGRESSION_THRESHOLD:
                p = self.threshold_scores(scores)
                self._va = VennAbers(p, (y < mode.threshold).astype(float))
            else:
                base = build_cpd(self.residuals, 0.0, tau)
                self._median = cpd_median(base)
                self._lo, self._hi = cpd_interval_two_sided(base, mode.epsilon)

    @property
    def rescorable(self) -> bool:
        return not isinstance(self.model, ExternalScores)

    def threshold_scores(self, predictions):
        """CPD value at the threshold for each point prediction."""
        d = self.mode.threshold - np.asarray(predictions, dtype=float)
        below = np.searchsorted(self.residuals, d, side="left")
        ties = np.searchsorted(self.residuals, d, side="right") - below
        return (below + (ties + 1) * self.tau) / (len(self.residuals) + 1)

    def from_scores(self, scores):
        """``(estimate, low, high)`` arrays for raw model outputs."""
        scores = np.asarray(scores, dtype=float)
        if self.mode.kind == CLASSIFICATION:
            return self._va.predict(scores)
        if self.mode.kind == REGRESSION_THRESHOLD:
            return self._va.predict(self.threshold_scores(scores))
        return scores + self._median, scores + self._lo, scores + self._hi

    def predict(self, X):
        if not self.rescorable:
            raise TypeError("alternatives require rescoring: model holds external scores only")
        return self.from_scores(self.model.predict(np.atleast_2d(X)))

    def predict_ids(self, ids):
        if isinstance(self.model, ExternalScores):
            return self.from_scores(self.model.score_ids(ids))
        raise TypeError("predict_ids needs an external-score model")


def calibrated_predict(calibrator: CalibratedModel, instance,
                       mode: Optional[ExplanationMode] = None):
    """Calibrated ``(estimate, low, high)`` for one feature vector."""
    if mode is not None and mode != calibrator.mode:
        raise ValueError(f"calibrator built for {calibrator.mode.kind}, asked for {mode.kind}")
    est, low, high = calibrator.predict(np.asarray(instance, dtype=float)[None, :])
    return float(est[0]), float(low[0]), float(high[0])


def discretize_feature(cal_values, instance_value: float, feature: int = 0) -> list:
    """Up to two alternative conditions from calibration-set decile boundaries.

    ``lt(b)`` uses the largest boundary strictly below the instance value,
    ``ge(b)`` the smallest strictly above; a side without such a boundary
    is omitted.
    """
    cal_values = np.asarray(cal_values, dtype=float)
    if len(cal_values) == 0:
        raise ValueError("no calibration values")
    bounds = np.unique(np.quantile(cal_values, np.arange(1, 10) / 10))
    out = []
    below = bounds[bounds < instance_value]
    above = bounds[bounds > instance_value]
    if len(below):
        out.append(Condition(feature, "lt", float(below[-1])))
    if len(above):
        out.append(Condition(feature, "ge", float(above[0])))
    return out


def _support(cal_col, cond: Condition):
    vals, counts = np.unique(cal_col[cond.holds(cal_col)], return_counts=True)
    return vals, counts / counts.sum() if len(counts) else counts


def _check_rescorable(calibrator):
    if not calibrator.rescorable:
        raise TypeError("alternatives require rescoring: model holds external scores only")


def _evaluate(calibrator, instance, supports):
    """Aggregate calibrated outputs for one or more perturbation supports.

    Each entry of ``supports`` is a tuple of ``(feature, values, weights)``
    triples applied jointly (cartesian product of the values).
    """
    blocks, spans, wts = [], [], []
    start = 0
    for joint in supports:
        grids = np.meshgrid(*[v for _, v, _ in joint], indexing="ij")
        wgrid = np.ones_like(grids[0], dtype=float)
        for (_, _, w), g in zip(joint, np.meshgrid(*[w for _, _, w in joint], indexing="ij")):
            wgrid = wgrid * g
        rows = np.repeat(instance[None, :], grids[0].size, axis=0)
        for (f, _, _), g in zip(joint, grids):
            rows[:, f] = g.ravel()
        blocks.append(rows)
        spans.append((start, start + len(rows)))
        wts.append(wgrid.ravel() / wgrid.sum())
        start += len(rows)
    if not blocks:
        return []
    est, low, high = calibrator.predict(np.vstack(blocks))
    out = []
    for (a, b), w in zip(spans, wts):
        lo, hi = float(w @ low[a:b]), float(w @ high[a:b])
        if calibrator.mode.probabilistic:
            # regularising the averaged bounds keeps (estimate, width) feasible
            e = hi / (1.0 - lo + hi)
        else:
            e = float(w @ est[a:b])
        out.append((min(max(e, lo), hi), lo, hi))
    return out


def _single_supports(calibrator, instance):
    cal = calibrator.calibration
    items = []
    for f in range(cal.n_features):
        col = cal.X[:, f]
        if cal.is_categorical(f):
            alphabet = range(len(cal.categories[f]))
            for code in alphabet:
                if code != instance[f]:
                    cond = Condition(f, "eq", float(code))
                    items.append((cond, np.array([float(code)]), np.array([1.0])))
        else:
            for cond in discretize_feature(col, instance[f], f):
                vals, w = _support(col, cond)
                if len(vals):
                    items.append((cond, vals, w))
    return items


def _base(calibrator, instance):
    instance = np.asarray(instance, dtype=float).ravel()
    if len(instance) != calibrator.calibration.n_features:
        raise ValueError("instance arity does not match the calibration data")
    _check_rescorable(calibrator)
    return instance, calibrated_predict(calibrator, instance)


def explain_alternatives(calibrator: CalibratedModel, instance,
                         instance_id: Optional[int] = None) -> Explanation:
    """Alternative rules: one per non-instance category, up to two per numeric feature.

    Numeric rules average the calibrated bounds over every distinct
    calibration value meeting the condition, weighted by frequency.
    """
    instance, (est, low, high) = _base(calibrator, instance)
    items = _single_supports(calibrator, instance)
    results = _evaluate(calibrator, instance, [((c.feature, v, w),) for c, v, w in items])
    rules = [
        FeatureRule((cond,), e, lo, hi, support=((cond.feature, v, w),))
        for (cond, v, w), (e, lo, hi) in zip(items, results)
    ]
    return Explanation(instance, calibrator.mode, est, low, high, rules, "alternative",
                       instance_id)


def explain_factual(calibrator: CalibratedModel, instance,
                    instance_id: Optional[int] = None) -> Explanation:
    """Factual rules: per feature, calibrated prediction minus its perturbed average."""
    instance, (est, low, high) = _base(calibrator, instance)
    cal = calibrator.calibration
    feats, supports = [], []
    for f in range(cal.n_features):
        col = cal.X[:, f]
        if cal.is_categorical(f):
            mask = col != instance[f]
        else:
            conds = discretize_feature(col, instance[f], f)
            mask = np.zeros(len(col), dtype=bool)
            for c in conds:
                mask |= c.holds(col)
        vals, counts = np.unique(col[mask], return_counts=True)
        if len(vals):
            feats.append(f)
            supports.append(((f, vals, counts / counts.sum()),))
    rules = []
    for f, sup, (e, lo, hi) in zip(feats, supports, _evaluate(calibrator, instance, supports)):
        cond = Condition(f, "eq", float(instance[f]))
        rules.append(FeatureRule((cond,), est - e, est - hi, est - lo, support=sup))
    return Explanation(instance, calibrator.mode, est, low, high, rules, "factual", instance_id)


def _thin(values, weights, k):
    """At most ``k`` equally weighted representatives at weighted quantiles."""
    if len(values) <= k:
        return values, weights
    cdf = np.cumsum(weights)
    picks = np.searchsorted(cdf, (np.arange(k) + 0.5) / k * cdf[-1])
    return values[np.minimum(picks, len(values) - 1)], np.full(k, 1.0 / k)


def add_conjunctions(explanation: Explanation, calibrator: CalibratedModel,
                     max_order: int = 2, max_values: int = 8) -> Explanation:
    """Append a two-condition rule for every pair of single rules on distinct features.

    Both perturbations are applied jointly. Each side contributes at most
    ``max_values`` representative values (weighted quantiles of its support)
    so a pair costs at most ``max_values**2`` rescorings.
    """
    if max_order != 2:
        raise ValueError(f"conjunctions of order {max_order} are unsupported (only 2)")
    if explanation.kind != "alternative":
        raise ValueError("conjunctions need an alternative explanation")
    _check_rescorable(calibrator)
    singles = [r for r in explanation.rules if not r.is_conjunctive]
    pairs, supports = [], []
    for a, b in itertools.combinations(singles, 2):
        if a.features[0] == b.features[0]:
            continue
        joint = []
        for r in (a, b):
            f, v, w = r.support[0]
            v, w = _thin(v, w, max_values)
            joint.append((f, v, w))
        pairs.append((a, b))
        supports.append(tuple(joint))
    results = _evaluate(calibrator, explanation.instance, supports)
    new = [
        FeatureRule(a.conditions + b.conditions, e, lo, hi, support=sup)
        for (a, b), sup, (e, lo, hi) in zip(pairs, supports, results)
    ]
    return Explanation(explanation.instance, explanation.mode, explanation.estimate,
                       explanation.low, explanation.high, list(explanation.rules) + new,
                       explanation.kind, explanation.instance_id)


def explain_many(calibrator: CalibratedModel, data: Dataset, conjunctions: bool = False,
                 jobs: int = 1) -> list:
    """Alternative explanations for every row of ``data``, in row order."""

    def one(i):
        exp = explain_alternatives(calibrator, data.X[i], int(data.ids[i]))
        return add_conjunctions(exp, calibrator) if conjunctions else exp

    if jobs <= 1:
        return [one(i) for i in range(len(data))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(len(data))))
