import json
import xml.etree.ElementTree as ET

import jsonschema
import numpy as np
import pytest

from ensured import report
from ensured.explainer import Condition, Explanation, ExplanationMode, FeatureRule, explain_many
from ensured.triage import Category, feasible, rank_score, triage


def test_explanation_json_validates(cls_setup):
    parts, cal = cls_setup
    exps = explain_many(cal, parts.test, conjunctions=True)
    for e in exps:
        doc = report.explanation_to_dict(e, parts.test, 0.5, 10)
        jsonschema.validate(doc, report.EXPLANATION_SCHEMA)
        again = json.loads(report.dumps(doc))
        assert again == doc
        assert len(doc["selected"]) == min(10, len(doc["rules"]))
        for r in doc["rules"]:
            assert r["ensured"] == (r["uncertainty"] < doc["prediction"]["uncertainty"])


def test_interval_mode_json_has_no_categories(reg_setup):
    from ensured.explainer import CalibratedModel
    parts, model = reg_setup
    c = CalibratedModel(model, parts.calibration, ExplanationMode.interval(0.2))
    e = explain_many(c, parts.test.subset([0]))[0]
    doc = report.explanation_to_dict(e, parts.test, 0.5, 3)
    jsonschema.validate(doc, report.EXPLANATION_SCHEMA)
    assert all(r["category"] is None and r["rank"] is None for r in doc["rules"])
    assert doc["predicted_class"] is None
    assert len(doc["selected"]) == min(3, len(doc["rules"]))


def test_selection_follows_filter_and_weight(cls_setup):
    parts, cal = cls_setup
    e = explain_many(cal, parts.test.subset([0]), conjunctions=True)[0]
    tri = triage(e, 1.0)
    doc = report.explanation_to_dict(e, parts.test, 1.0, 10)
    best = sorted(tri, key=lambda t: (-t.p_hat, t.uncertainty, t.index))[:10]
    assert doc["selected"] == [t.index for t in best]
    doc = report.explanation_to_dict(e, parts.test, 0.5, 50, "ensured")
    assert all(doc["rules"][i]["ensured"] for i in doc["selected"])
    doc = report.explanation_to_dict(e, parts.test, 0.5, 50, "counter", True)
    assert all(doc["rules"][i]["category"].startswith("counter") for i in doc["selected"])


def fake_explanation(estimate, rules):
    return Explanation(np.zeros(1), ExplanationMode.classification(), estimate,
                       estimate - 0.05, estimate + 0.05, rules, "alternative")


def test_summary_row_partition_and_undefined():
    r = FeatureRule((Condition(0, "lt", 0.0),), 0.2, 0.1, 0.3)
    exps = [fake_explanation(0.7, [r, r]), fake_explanation(0.5, [r])]
    row = report.summary_row(exps, "100 (s)")
    assert row["n_instances"] == 1 and row["n_undefined"] == 1
    assert row["Total"] == 2 and row["CoFa"] == 2
    cats = sum(row[c.short] for c in Category)
    assert cats == row["Total"]


def test_summary_csv_columns(tmp_path):
    rows = [report.summary_row([], "empty")]
    report.write_summary_csv(rows, tmp_path / "s.csv")
    header = (tmp_path / "s.csv").read_text().splitlines()[0].split(",")
    assert header == report.SUMMARY_COLUMNS


def test_heatmap_weight_zero_depends_on_uncertainty_only():
    g = report.rank_heatmap_grid(0.0, 41)
    for row in g:
        vals = row[~np.isnan(row)]
        assert np.ptp(vals) < 1e-12


def test_heatmap_weight_one_depends_on_probability_only():
    g = report.rank_heatmap_grid(1.0, 41)
    for col in g.T:
        vals = col[~np.isnan(col)]
        if len(vals):
            assert np.ptp(vals) < 1e-12


def test_heatmap_sign_symmetry():
    a = report.rank_heatmap_grid(0.5, 41)
    b = report.rank_heatmap_grid(-0.5, 41)
    u = np.linspace(0, 1, 41)[:, None]
    # the probability term flips sign; the uncertainty term is shared
    np.testing.assert_allclose((a + b) / 2, np.broadcast_to(0.5 * (1 - u), a.shape)
                               * np.where(np.isnan(a), np.nan, 1.0), atol=1e-12)
    np.testing.assert_allclose(a - b, np.where(np.isnan(a), np.nan,
                                               np.linspace(0, 1, 41)[None, :]), atol=1e-12)


def test_heatmap_blank_outside_feasible_region():
    g = report.rank_heatmap_grid(0.5, 21)
    ps = np.linspace(0, 1, 21)
    for i, u in enumerate(np.linspace(0, 1, 21)):
        for j, p in enumerate(ps):
            assert np.isnan(g[i, j]) != feasible(p, u, "regularised")
            if not np.isnan(g[i, j]):
                assert g[i, j] == rank_score(p, u, 0.5)


def test_svgs_parse_and_are_deterministic(tmp_path, cls_setup):
    parts, cal = cls_setup
    e = explain_many(cal, parts.test.subset([0]), conjunctions=True)[0]
    tri = triage(e, 0.5)
    sel = report.select_rules(tri, 0.5, 5)
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        report.rank_scatter_svg(e, tri, sel, d / "rank.svg")
        report.bars_svg(e, sel, parts.test, d / "bars.svg")
        report.heatmap_svg(0.5, d / "heat.svg", n=21)
        report.global_map_svg(report.global_map_points([e]), d / "map.svg")
        report.global_map_svg([], d / "empty.svg")
    for name in ("rank", "bars", "heat", "map", "empty"):
        ET.parse(tmp_path / "0" / f"{name}.svg")
        assert (tmp_path / "0" / f"{name}.svg").read_bytes() == \
            (tmp_path / "1" / f"{name}.svg").read_bytes()


def test_category_colour_table_complete():
    assert set(report.CATEGORY_COLOURS) == set(Category)
