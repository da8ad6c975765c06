"""Shared oracles and fixtures.

The oracles here are deliberately naive: exhaustive search for isotonic
regression and a literal, index-by-index conformal predictive distribution.
They share no code with the package.
"""
import itertools
import math
import os
from pathlib import Path

import numpy as np
import pytest

from ensured.datasets import split, synth_classification, synth_regression
from ensured.explainer import CalibratedModel, ExplanationMode
from ensured.forest import ForestParams, train_forest


def brute_isotonic(y):
    """Least-squares non-decreasing fit by trying every contiguous block partition.

    The optimum is piecewise constant with block means, so enumerating all
    2**(n-1) partitions and keeping the best monotone one is exact.
    """
    y = [float(v) for v in y]
    n = len(y)
    best, best_sse = None, math.inf
    for cuts in itertools.product([False, True], repeat=n - 1):
        blocks, start = [], 0
        for i, c in enumerate(cuts, start=1):
            if c:
                blocks.append((start, i))
                start = i
        blocks.append((start, n))
        means = [sum(y[a:b]) / (b - a) for a, b in blocks]
        if any(m2 < m1 - 1e-15 for m1, m2 in zip(means, means[1:])):
            continue
        fit = [m for (a, b), m in zip(blocks, means) for _ in range(b - a)]
        sse = sum((u - v) ** 2 for u, v in zip(y, fit))
        if sse < best_sse - 1e-15:
            best, best_sse = fit, sse
    return best


def cpd_oracle(c_values, y, tau=0.5):
    """CPD at ``y`` from the index form: open gaps and tie runs handled separately."""
    c = sorted(c_values)
    q = len(c)
    ext = [-math.inf] + c + [math.inf]
    ties = [i for i in range(1, q + 1) if ext[i] == y]
    if ties:
        i1, i2 = ties[0], ties[-1]
        return (i1 - 1 + (i2 - i1 + 2) * tau) / (q + 1)
    for i in range(q + 1):
        if ext[i] < y < ext[i + 1]:
            return (i + tau) / (q + 1)
    raise AssertionError("unreachable")


def va_oracle(scores, labels, s):
    """Venn-Abers interval by refitting the brute-force oracle twice."""
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    out = []
    for label in (0.0, 1.0):
        pts = [(scores[i], labels[i]) for i in order]
        # the test point goes after every calibration score <= s
        k = sum(1 for sc, _ in pts if sc <= s)
        pts.insert(k, (s, label))
        out.append(brute_isotonic([lab for _, lab in pts])[k])
    return out[0], out[1]


@pytest.fixture(scope="session")
def cls_setup():
    """Forest + classification calibrator on synthetic data with a known posterior."""
    data = synth_classification(700, seed=3)
    parts = split(data, cal_size=200, test_size=20, seed=3)
    model = train_forest(parts.proper_training.X, parts.proper_training.y,
                         ForestParams(n_trees=30, seed=3), "classification")
    return parts, CalibratedModel(model, parts.calibration, ExplanationMode.classification())


@pytest.fixture(scope="session")
def reg_setup():
    data = synth_regression(700, seed=4)
    parts = split(data, cal_size=200, test_size=20, seed=4)
    model = train_forest(parts.proper_training.X, parts.proper_training.y,
                         ForestParams(n_trees=30, seed=4), "regression")
    return parts, model


# -- acceptance reporting -------------------------------------------------------

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        prev = _RESULTS.get(num, (title, True))[1]
        _RESULTS[num] = (title, prev and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, ok = _RESULTS[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}")


def data_dir() -> Path:
    return Path(os.environ.get("ENSURED_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))
