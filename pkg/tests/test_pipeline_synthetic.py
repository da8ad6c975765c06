"""The dataset-scale summary pipeline run on synthetic stand-ins.

These are not acceptance criteria. They exercise the same code path as the
Wine / California Housing checks so the pipeline is covered even when the
real files are absent.
"""
import pytest

from ensured.datasets import synth_classification, synth_regression
from ensured.explainer import ExplanationMode

from test_acceptance import directional_checks


@pytest.mark.slow
def test_directional_trends_synthetic_classification():
    directional_checks(synth_classification(4898, seed=0), ExplanationMode.classification(),
                       "synthetic classification")


@pytest.mark.slow
def test_directional_trends_synthetic_threshold():
    directional_checks(synth_regression(5000, seed=0), ExplanationMode.thresholded(5.0),
                       "synthetic threshold")
