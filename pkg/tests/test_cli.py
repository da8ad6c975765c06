import csv
import json
import xml.etree.ElementTree as ET

import jsonschema
import numpy as np
import pytest

from ensured import report
from ensured.cli import main
from ensured.datasets import Dataset, synth_regression, write_csv


@pytest.fixture(scope="module")
def cls_csv(tmp_path_factory):
    """Mixed numeric/categorical classification data."""
    rng = np.random.default_rng(8)
    n = 400
    x1 = rng.uniform(size=n)
    colour = rng.integers(0, 3, n)
    p = np.clip(0.2 + 0.6 * x1 + 0.1 * (colour == 2), 0, 1)
    y = (rng.uniform(size=n) < p).astype(float)
    d = Dataset(["x1", "x2", "colour"], ["numeric", "numeric", "categorical"],
                np.column_stack([x1, rng.uniform(size=n), colour]), y, "classification",
                {2: ["blue", "green", "red"]}, target_name="label")
    path = tmp_path_factory.mktemp("data") / "cls.csv"
    write_csv(d, path)
    return path


@pytest.fixture(scope="module")
def reg_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "reg.csv"
    write_csv(synth_regression(400, seed=9), path)
    return path


def base(path, task="cls", *extra):
    return ["--dataset", str(path), "--task", task, "--cal-size", "100", "--test-size", "6",
            "--seed", "3", "--n-trees", "20", *extra]


def test_explain_writes_valid_json(tmp_path, cls_csv):
    assert main(["explain", *base(cls_csv), "--conjunctions", "--out", str(tmp_path)]) == 0
    files = sorted((tmp_path / "explanations").glob("*.json"))
    assert len(files) == 6
    for f in files:
        doc = json.loads(f.read_text())
        jsonschema.validate(doc, report.EXPLANATION_SCHEMA)
        assert f.stem == str(doc["instance_id"])
        assert any(r["conjunctive"] for r in doc["rules"])


def test_explain_deterministic(tmp_path, cls_csv):
    for k in ("a", "b"):
        assert main(["explain", *base(cls_csv), "--conjunctions", "--out",
                     str(tmp_path / k)]) == 0
    a = sorted((tmp_path / "a" / "explanations").iterdir())
    b = sorted((tmp_path / "b" / "explanations").iterdir())
    assert [p.name for p in a] == [p.name for p in b]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_target_defaults_to_last_column(tmp_path, cls_csv):
    assert main(["explain", *base(cls_csv), "--out", str(tmp_path)]) == 0
    doc = json.loads(next((tmp_path / "explanations").glob("*.json")).read_text())
    assert set(doc["instance"]) == {"x1", "x2", "colour"}


def test_summary_partition(tmp_path, reg_csv):
    args = ["summary", "--dataset", str(reg_csv), "--task", "reg", "--threshold", "5",
            "--cal-size", "50,150", "--seed", "1,2", "--test-size", "8", "--n-trees", "10",
            "--out", str(tmp_path)]
    assert main(args) == 0
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert [r["run"] for r in rows[:2]] == ["seed 1: 50 (s)", "seed 1: 50 (c)"]
    for r in rows:
        cats = sum(float(r[k]) for k in ("CoFa", "CoPo", "SeFa", "SePo", "SuFa", "SuPo"))
        assert cats == pytest.approx(float(r["Total"]), abs=1e-5)
        assert 0 <= float(r["Ens_prop"]) <= 1


def test_global_map_threshold_classes(tmp_path, reg_csv):
    args = ["global-map", "--dataset", str(reg_csv), "--task", "reg", "--threshold", "5",
            "--cal-size", "100", "--test-size", "40", "--n-trees", "10", "--out", str(tmp_path)]
    assert main(args) == 0
    ET.parse(tmp_path / "global_map.svg")
    pts = json.loads((tmp_path / "global_map.json").read_text())["points"]
    assert len(pts) == 40
    assert {p["predicted_class"] for p in pts} == {0, 1}
    from ensured.triage import feasible
    assert all(feasible(p["probability"], p["uncertainty"]) for p in pts)


def test_global_map_empty_test_set(tmp_path, cls_csv):
    args = ["global-map", *base(cls_csv)[:-6], "--test-size", "0", "--n-trees", "5",
            "--out", str(tmp_path)]
    assert main(args) == 0
    ET.parse(tmp_path / "global_map.svg")
    assert json.loads((tmp_path / "global_map.json").read_text())["points"] == []


def test_global_map_external_scores(tmp_path, cls_csv):
    rows = "\n".join(f"{i},{(i % 10) / 10}" for i in range(400))
    scores = tmp_path / "scores.csv"
    scores.write_text("id,score\n" + rows + "\n")
    args = ["global-map", *base(cls_csv), "--scores", str(scores), "--out", str(tmp_path)]
    assert main(args) == 0
    assert len(json.loads((tmp_path / "global_map.json").read_text())["points"]) == 6


def test_global_map_rejects_interval_mode(tmp_path, reg_csv, capsys):
    args = ["global-map", *base(reg_csv, "reg", "--epsilon", "0.1"), "--out", str(tmp_path)]
    assert main(args) == 2
    assert "global map requires probabilistic mode" in capsys.readouterr().err


def first_test_id(tmp_path, path):
    out = tmp_path / "ids"
    main(["explain", *base(path), "--out", str(out)])
    return sorted(int(p.stem) for p in (out / "explanations").glob("*.json"))[0]


def test_rank_plot(tmp_path, cls_csv):
    iid = first_test_id(tmp_path, cls_csv)
    args = ["rank-plot", *base(cls_csv), "--instance", str(iid), "--weight", "1",
            "--top-k", "3", "--conjunctions", "--out", str(tmp_path)]
    assert main(args) == 0
    for name in (f"rank_{iid}.svg", f"bars_{iid}.svg"):
        ET.parse(tmp_path / name)
    doc = json.loads((tmp_path / f"rank_{iid}.json").read_text())
    assert len(doc["selected"]) == 3
    # w = 1 selects the highest probabilities of the predicted class
    cls = doc["predicted_class"]
    p_hat = [r["estimate"] if cls == 1 else 1 - r["estimate"] for r in doc["rules"]]
    top = sorted(range(len(p_hat)), key=lambda i: -p_hat[i])[:3]
    assert sorted(p_hat[i] for i in doc["selected"]) == sorted(p_hat[i] for i in top)


def test_rank_plot_top_k_clamped(tmp_path, cls_csv):
    iid = first_test_id(tmp_path, cls_csv)
    args = ["rank-plot", *base(cls_csv), "--instance", str(iid), "--top-k", "500",
            "--out", str(tmp_path)]
    assert main(args) == 0
    doc = json.loads((tmp_path / f"rank_{iid}.json").read_text())
    assert len(doc["selected"]) == len(doc["rules"])


def test_rank_plot_missing_instance(tmp_path, cls_csv, capsys):
    args = ["rank-plot", *base(cls_csv), "--instance", "99999", "--out", str(tmp_path)]
    assert main(args) == 2
    assert "99999" in capsys.readouterr().err


def test_region_heatmap(tmp_path):
    assert main(["region-heatmap", "--weight", "-0.5", "--out", str(tmp_path)]) == 0
    ET.parse(tmp_path / "heatmap_w-0.5.svg")
    assert main(["region-heatmap", "--weight", "2", "--out", str(tmp_path)]) == 2


def test_format_selects_outputs(tmp_path, cls_csv):
    args = ["global-map", *base(cls_csv), "--format", "json", "--out", str(tmp_path)]
    assert main(args) == 0
    assert (tmp_path / "global_map.json").exists()
    assert not (tmp_path / "global_map.svg").exists()
    assert main(["global-map", *base(cls_csv), "--format", "png", "--out", str(tmp_path)]) == 2


def test_unknown_dataset_exit_2(tmp_path, capsys):
    assert main(["explain", "--dataset", str(tmp_path / "missing.csv"), "--task", "cls",
                 "--out", str(tmp_path)]) == 2
    assert "missing.csv" in capsys.readouterr().err


@pytest.mark.parametrize("extra", [
    ["--threshold", "1", "--epsilon", "0.1"],
    ["--epsilon", "0.1"],
    ["--cal-size", "100,200"],
    ["--cal-size", "394"],  # leaves no training rows
])
def test_config_errors_exit_2(tmp_path, cls_csv, extra):
    assert main(["explain", *base(cls_csv), *extra, "--out", str(tmp_path)]) == 2


def test_runtime_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,0\n2\n")
    assert main(["explain", "--dataset", str(bad), "--task", "cls", "--out",
                 str(tmp_path)]) == 1
    assert "line 3" in capsys.readouterr().err
