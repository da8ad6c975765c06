"""Serialisation and plots: explanation JSON, category summaries, SVG figures."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .datasets import Dataset
from .explainer import Explanation
from .triage import (
    Category,
    category_counts,
    feasible,
    filter_category,
    filter_ensured,
    rank_rules,
    rank_score,
    triage,
)

SCHEMA_VERSION = "1.0"

# red = counter, yellow = semi, green = super; lighter shade = potential
CATEGORY_COLOURS = {
    Category.COUNTER_FACTUAL: "#d62728",
    Category.COUNTER_POTENTIAL: "#f4a3a3",
    Category.SEMI_FACTUAL: "#e6b800",
    Category.SEMI_POTENTIAL: "#fbe89a",
    Category.SUPER_FACTUAL: "#2ca02c",
    Category.SUPER_POTENTIAL: "#a8dba8",
}
ORIGINAL_COLOUR = "#c0392b"
RULE_COLOUR = "#1f77b4"

SUMMARY_COLUMNS = ["run", "n_instances", "n_undefined", "Total", "CoFa", "CoPo", "SeFa",
                   "SePo", "SuFa", "SuPo", "Ens", "Ens_prop"]

_number = {"type": "number"}
_interval = {
    "type": "object",
    "required": ["estimate", "low", "high", "uncertainty"],
    "properties": {k: _number for k in ("estimate", "low", "high", "uncertainty")},
}
EXPLANATION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "instance_id", "mode", "instance", "prediction",
                 "predicted_class", "weight", "rules", "selected"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "instance_id": {"type": "integer"},
        "mode": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["classification", "regression_interval",
                                  "regression_threshold"]},
                "epsilon": _number,
                "threshold": _number,
            },
        },
        "instance": {"type": "object"},
        "prediction": _interval,
        "predicted_class": {"type": ["integer", "null"]},
        "weight": _number,
        "rules": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "condition", "features", "conjunctive", "estimate",
                             "low", "high", "uncertainty", "category", "ensured", "rank"],
                "properties": {
                    "index": {"type": "integer"},
                    "condition": {"type": "string"},
                    "features": {"type": "array", "items": {"type": "string"}},
                    "conjunctive": {"type": "boolean"},
                    "estimate": _number,
                    "low": _number,
                    "high": _number,
                    "uncertainty": _number,
                    "category": {"enum": [c.value for c in Category] + [None]},
                    "ensured": {"type": "boolean"},
                    "rank": {"type": ["number", "null"]},
                },
            },
        },
        "selected": {"type": "array", "items": {"type": "integer"}},
    },
}


def safe_triage(explanation: Explanation, w: float):
    """Triaged rules, or ``None`` when the taxonomy is undefined for this instance."""
    if not explanation.mode.probabilistic or explanation.estimate == 0.5:
        return None
    return triage(explanation, w)


def select_rules(triaged, w: float, top_k: int, filter_kind: Optional[str] = None,
                 include_potential: bool = False) -> list:
    if filter_kind == "ensured":
        triaged = filter_ensured(triaged)
    elif filter_kind is not None:
        triaged = filter_category(triaged, filter_kind, include_potential)
    return rank_rules(triaged, w, top_k) if triaged else []


def explanation_to_dict(explanation: Explanation, dataset: Dataset, w: float = 0.5,
                        top_k: int = 10, filter_kind: Optional[str] = None,
                        include_potential: bool = False) -> dict:
    tri = safe_triage(explanation, w)
    rules = []
    for i, r in enumerate(explanation.rules):
        t = tri[i] if tri is not None else None
        rules.append({
            "index": i,
            "condition": r.text(dataset),
            "features": [dataset.feature_names[f] for f in r.features],
            "conjunctive": r.is_conjunctive,
            "estimate": r.estimate,
            "low": r.low,
            "high": r.high,
            "uncertainty": r.uncertainty,
            "category": t.category.value if t else None,
            "ensured": r.uncertainty < explanation.uncertainty,
            "rank": t.rank if t else None,
        })
    if tri is not None:
        selected = [t.index for t in select_rules(tri, w, top_k, filter_kind, include_potential)]
    else:
        order = sorted(range(len(rules)), key=lambda i: (rules[i]["uncertainty"], i))
        if filter_kind == "ensured":
            order = [i for i in order if rules[i]["ensured"]]
        selected = order[:top_k]
    mode = explanation.mode
    pred_class = None
    if mode.probabilistic and explanation.estimate != 0.5:
        pred_class = int(explanation.estimate > 0.5)
    return {
        "schema_version": SCHEMA_VERSION,
        "instance_id": int(explanation.instance_id) if explanation.instance_id is not None else -1,
        "mode": mode.to_dict(),
        "instance": {name: (dataset.format_value(j, v) if dataset.is_categorical(j) else float(v))
                     for j, (name, v) in enumerate(zip(dataset.feature_names,
                                                        explanation.instance))},
        "prediction": {
            "estimate": explanation.estimate,
            "low": explanation.low,
            "high": explanation.high,
            "uncertainty": explanation.uncertainty,
        },
        "predicted_class": pred_class,
        "weight": w,
        "rules": rules,
        "selected": selected,
    }


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def summary_row(explanations: Sequence[Explanation], label: str) -> dict:
    """Average category counts per instance (one row of the summary table)."""
    per = []
    undefined = 0
    for e in explanations:
        tri = safe_triage(e, 0.5)
        if tri is None:
            undefined += 1
            continue
        counts = category_counts(tri)
        ens = sum(t.ensured for t in tri)
        total = len(tri)
        per.append([total] + [counts[c] for c in Category] + [ens, ens / total if total else 0.0])
    arr = np.array(per, dtype=float) if per else np.zeros((0, 9))
    means = arr.mean(axis=0) if len(arr) else np.zeros(9)
    row = {"run": label, "n_instances": len(per), "n_undefined": undefined}
    for name, v in zip(SUMMARY_COLUMNS[3:], means):
        row[name] = float(v)
    return row


def write_summary_csv(rows: Iterable[dict], path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


# -- plotting -----------------------------------------------------------------

def _save(fig, path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "ensured", "svg.fonttype": "none"}):
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _feasible_boundary(ax) -> None:
    u = np.linspace(0, 1, 201)
    ax.plot(u / (1 + u), u, color="0.6", lw=0.8)
    ax.plot(1 / (1 + u), u, color="0.6", lw=0.8)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)


def global_map_points(explanations: Sequence[Explanation]) -> list:
    return [{
        "instance_id": int(e.instance_id) if e.instance_id is not None else i,
        "probability": e.estimate,
        "uncertainty": e.uncertainty,
        "predicted_class": int(e.estimate > 0.5),
    } for i, e in enumerate(explanations)]


def global_map_svg(points: Sequence[dict], path, class_labels=("class 0", "class 1"),
                   title: str = "") -> None:
    """Probability/uncertainty scatter over the regularised feasible region."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    _feasible_boundary(ax)
    for cls, marker, colour in ((0, "o", RULE_COLOUR), (1, "x", ORIGINAL_COLOUR)):
        pts = [p for p in points if p["predicted_class"] == cls]
        if pts:
            ax.scatter([p["probability"] for p in pts], [p["uncertainty"] for p in pts],
                       marker=marker, c=colour, s=18, label=class_labels[cls])
    if points:
        ax.legend(loc="upper right")
    ax.set_xlabel("probability (positive class)")
    ax.set_ylabel("uncertainty")
    ax.set_title(title)
    _save(fig, path)


def rank_scatter_svg(explanation: Explanation, triaged, selected, path, title="") -> None:
    """All alternatives, the selected ones coloured by category, and the original."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    _feasible_boundary(ax)
    chosen = {t.index for t in selected}
    rest = [t for t in triaged if t.index not in chosen]
    if rest:
        ax.scatter([t.rule.estimate for t in rest], [t.uncertainty for t in rest],
                   c=RULE_COLOUR, s=12, alpha=0.5, label="alternatives")
    for t in selected:
        ax.scatter(t.rule.estimate, t.uncertainty, c=CATEGORY_COLOURS[t.category], s=36,
                   edgecolors="k", linewidths=0.5)
    ax.scatter(explanation.estimate, explanation.uncertainty, c=ORIGINAL_COLOUR, s=60,
               marker="D", label="original")
    ax.axvline(0.5, color="0.8", lw=0.6)
    ax.legend(loc="upper right")
    ax.set_xlabel("probability (positive class)")
    ax.set_ylabel("uncertainty")
    ax.set_title(title)
    _save(fig, path)


def bars_svg(explanation: Explanation, selected, dataset: Dataset, path, title="") -> None:
    """Interval bar per selected rule against the original interval as a band."""
    n = max(len(selected), 1)
    fig, ax = plt.subplots(figsize=(7, 0.45 * n + 1.2))
    ax.axvspan(explanation.low, explanation.high, color="#f6c6c6", alpha=0.7, zorder=0)
    ax.axvline(explanation.estimate, color=ORIGINAL_COLOUR, lw=0.8)
    labels = []
    for k, t in enumerate(selected):
        y = n - 1 - k
        ax.barh(y, t.rule.high - t.rule.low, left=t.rule.low, height=0.6,
                color=CATEGORY_COLOURS[t.category], edgecolor="k", linewidth=0.4)
        ax.plot([t.rule.estimate] * 2, [y - 0.3, y + 0.3], color="k", lw=1)
        labels.append(t.rule.text(dataset))
    ax.set_yticks(range(n - 1, n - 1 - len(labels), -1), labels)
    ax.set_xlim(0, 1)
    ax.set_xlabel("probability (positive class)")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def rank_heatmap_grid(w: float, n: int = 101) -> np.ndarray:
    """Rank score over a (uncertainty, probability) grid; infeasible cells are NaN.

    Rows index uncertainty from 0 to 1, columns the predicted-class
    probability from 0 to 1.
    """
    p = np.linspace(0, 1, n)
    u = np.linspace(0, 1, n)
    grid = np.full((n, n), np.nan)
    for i, ui in enumerate(u):
        for j, pj in enumerate(p):
            if feasible(pj, ui, "regularised"):
                grid[i, j] = rank_score(pj, ui, w)
    return grid


def heatmap_svg(w: float, path, n: int = 101) -> np.ndarray:
    grid = rank_heatmap_grid(w, n)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(grid, origin="lower", extent=(0, 1, 0, 1), cmap="viridis", aspect="auto")
    fig.colorbar(im, ax=ax, label="rank")
    ax.set_xlabel("probability of predicted class")
    ax.set_ylabel("uncertainty")
    ax.set_title(f"w = {w:g}")
    _save(fig, path)
    return grid
