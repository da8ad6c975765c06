"""Sorting alternative rules by what they do to the prediction and its uncertainty.

Every alternative rule in a probabilistic explanation lands in one of six
categories (counter/semi/super crossed with factual/potential), is flagged
ensured when it narrows the uncertainty interval, and receives a rank that
trades uncertainty against the probability of the predicted class.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .explainer import Explanation, FeatureRule

__all__ = [
    "Category",
    "TriagedRule",
    "predicted_class_prob",
    "categorize",
    "is_ensured",
    "rank_score",
    "rank_order",
    "rank_rules",
    "filter_category",
    "filter_ensured",
    "feasible",
    "triage",
    "category_counts",
]

DEFAULT_WEIGHT = 0.5
DEFAULT_TOP_K = 10


class Category(str, Enum):
    COUNTER_FACTUAL = "counter_factual"
    COUNTER_POTENTIAL = "counter_potential"
    SEMI_FACTUAL = "semi_factual"
    SEMI_POTENTIAL = "semi_potential"
    SUPER_FACTUAL = "super_factual"
    SUPER_POTENTIAL = "super_potential"

    @property
    def short(self) -> str:
        family, kind = self.value.split("_")
        return family[:2].capitalize() + kind[:2].capitalize()

    @property
    def family(self) -> str:
        return self.value.split("_")[0]

    @property
    def potential(self) -> bool:
        return self.value.endswith("potential")


@dataclass(frozen=True)
class TriagedRule:
    rule: FeatureRule
    category: Category
    ensured: bool
    rank: float
    p_hat: float
    uncertainty: float
    index: int


def predicted_class_prob(p: float, original: Optional[float] = None) -> float:
    """Probability of the predicted class.

    With ``original=None`` the predicted class is whichever ``p`` favours,
    giving ``max(p, 1 - p)``. Given the original instance's estimate, the
    result is the probability that ``p`` assigns to the class the original
    prediction favours, so alternatives that flip the prediction score low.
    """
    ref = p if original is None else original
    return p if ref >= 0.5 else 1.0 - p


def _same_side(x: float, original: float) -> bool:
    return x > 0.5 if original > 0.5 else x < 0.5


def categorize(rule, original_estimate: float) -> Category:
    """Place a probabilistic alternative rule relative to the original estimate.

    A rule is potential when its interval strictly covers 0.5. An estimate of
    exactly 0.5 counts as a changed prediction, and an estimate exactly equal
    to the original counts as super.
    """
    if original_estimate == 0.5:
        raise ValueError("undefined taxonomy: original estimate is exactly 0.5")
    low, high, est = rule.low, rule.high, rule.estimate
    potential = low < 0.5 < high
    if not _same_side(est, original_estimate):
        return Category.COUNTER_POTENTIAL if potential else Category.COUNTER_FACTUAL
    if abs(est - 0.5) < abs(original_estimate - 0.5):
        return Category.SEMI_POTENTIAL if potential else Category.SEMI_FACTUAL
    return Category.SUPER_POTENTIAL if potential else Category.SUPER_FACTUAL


def is_ensured(rule_uncertainty: float, original_uncertainty: float) -> bool:
    return rule_uncertainty < original_uncertainty


def rank_score(p_hat: float, uncertainty: float, w: float = DEFAULT_WEIGHT) -> float:
    """``(1 - |w|)(1 - U) + |w| * (-P if w < 0 else P)``."""
    if abs(w) > 1:
        raise ValueError("ranking weight must lie in [-1, 1]")
    a = abs(w)
    p_term = -p_hat if w < 0 else p_hat
    # expanded and summed exactly, so e.g. (0.8, 0.1, 0.5) gives 0.85 not 0.8500000000000001
    return math.fsum((1 - a, -(1 - a) * uncertainty, a * p_term))


def rank_order(scores, uncertainties, indices=None) -> list:
    """Positions sorted by descending score, then ascending uncertainty, then index."""
    idx = range(len(scores)) if indices is None else indices
    return sorted(range(len(scores)), key=lambda i: (-scores[i], uncertainties[i], idx[i]))


def rank_rules(rules: Iterable[TriagedRule], w: float = DEFAULT_WEIGHT,
               top_k: int = DEFAULT_TOP_K) -> list:
    """Top ``top_k`` rules under weight ``w`` (ranks are recomputed for ``w``)."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    rules = list(rules)
    scores = [rank_score(r.p_hat, r.uncertainty, w) for r in rules]
    order = rank_order(scores, [r.uncertainty for r in rules], [r.index for r in rules])
    out = []
    for i in order[:top_k]:
        r = rules[i]
        out.append(TriagedRule(r.rule, r.category, r.ensured, scores[i], r.p_hat,
                               r.uncertainty, r.index))
    return out


_FAMILIES = {"counter", "semi", "super"}


def filter_category(rules: Iterable[TriagedRule], kind: str,
                    include_potential: bool = False) -> list:
    if kind not in _FAMILIES:
        raise ValueError(f"unknown category family {kind!r}")
    return [r for r in rules
            if r.category.family == kind and (include_potential or not r.category.potential)]


def filter_ensured(rules: Iterable[TriagedRule]) -> list:
    return [r for r in rules if r.ensured]


def feasible(p: float, u: float, mode: str = "regularised", atol: float = 1e-12) -> bool:
    """Whether a (probability, uncertainty) pair can come from an interval in [0, 1].

    ``mean``: ``u <= 2 min(p, 1 - p)``. ``regularised``: inverting
    ``p = high / (1 - low + high)`` with ``u = high - low`` gives
    ``high = p (1 + u)``, so ``u / (1 + u) <= p <= 1 / (1 + u)``.
    """
    if not (-atol <= p <= 1 + atol and -atol <= u <= 1 + atol):
        return False
    if mode == "mean":
        return u <= 2 * min(p, 1 - p) + atol
    if mode == "regularised":
        return u / (1 + u) - atol <= p <= 1 / (1 + u) + atol
    raise ValueError(f"unknown mode {mode!r}")


def triage(explanation: Explanation, w: float = DEFAULT_WEIGHT) -> list:
    """Annotate every rule of a probabilistic alternative explanation."""
    if not explanation.mode.probabilistic:
        raise ValueError("triage needs a probabilistic explanation")
    if explanation.kind != "alternative":
        raise ValueError("triage needs an alternative explanation")
    orig = explanation.estimate
    out = []
    for i, rule in enumerate(explanation.rules):
        p_hat = predicted_class_prob(rule.estimate, orig)
        u = rule.high - rule.low
        out.append(TriagedRule(rule, categorize(rule, orig),
                               is_ensured(u, explanation.uncertainty),
                               rank_score(p_hat, u, w), p_hat, u, i))
    return out


def category_counts(rules: Iterable[TriagedRule]) -> dict:
    counts = {c: 0 for c in Category}
    for r in rules:
        counts[r.category] += 1
    return counts
