"""Command-line driver.

    python -m ensured explain --dataset wine.csv --task cls --target quality \\
        --binarize-at 6 --cal-size 100 --test-size 20 --seed 42 --out out/

Exit status: 0 on success, 2 on a configuration error, 1 on a runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import report
from .datasets import Dataset, load_csv, split
from .explainer import (
    CalibratedModel,
    ExplanationMode,
    add_conjunctions,
    explain_alternatives,
    explain_many,
)
from .forest import ForestParams, load_external_scores, train_forest

log = logging.getLogger("ensured")

FORMATS = {"json", "csv", "svg"}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    dataset: Optional[Path] = None
    target: Optional[str] = None
    task: str = "cls"
    threshold: Optional[float] = None
    epsilon: Optional[float] = None
    binarize_at: Optional[float] = None
    delimiter: Optional[str] = None
    drop_missing: bool = False
    cal_sizes: list = field(default_factory=lambda: [100])
    test_size: int = 20
    seeds: list = field(default_factory=lambda: [42])
    conjunctions: bool = False
    weight: float = 0.5
    top_k: int = 10
    filter: Optional[str] = None
    include_potential: bool = False
    out: Path = Path("out")
    formats: set = field(default_factory=lambda: set(FORMATS))
    forest: ForestParams = ForestParams()
    scores: Optional[Path] = None
    instance: Optional[int] = None
    jobs: int = 1

    @property
    def mode(self) -> ExplanationMode:
        if self.task == "cls":
            return ExplanationMode.classification()
        if self.threshold is not None:
            return ExplanationMode.thresholded(self.threshold)
        return ExplanationMode.interval(self.epsilon if self.epsilon is not None else 0.1)

    @property
    def cal_size(self) -> int:
        return self.cal_sizes[0]

    @property
    def seed(self) -> int:
        return self.seeds[0]


def _int_list(text: str) -> list:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    data = argparse.ArgumentParser(add_help=False)
    g = data.add_argument_group("data")
    g.add_argument("--dataset", type=Path, required=True)
    g.add_argument("--target", help="target column (default: last column)")
    g.add_argument("--task", choices=["cls", "reg"], required=True)
    g.add_argument("--threshold", type=float, help="regression: explain P(y < T)")
    g.add_argument("--epsilon", type=float, help="regression: two-sided interval level")
    g.add_argument("--binarize-at", type=float, help="classification: y >= T is class 1")
    g.add_argument("--delimiter", help="CSV delimiter (default: sniff , or ;)")
    g.add_argument("--drop-missing", action="store_true")
    g.add_argument("--cal-size", type=_int_list, default=[100])
    g.add_argument("--test-size", type=int, default=20)
    g.add_argument("--seed", type=_int_list, default=[42])
    g.add_argument("--n-trees", type=int, default=100)
    g.add_argument("--max-depth", type=int)
    g.add_argument("--min-samples-leaf", type=int, default=2)
    g.add_argument("--jobs", type=int, default=1)

    expl = argparse.ArgumentParser(add_help=False)
    g = expl.add_argument_group("explanations")
    g.add_argument("--conjunctions", action="store_true")
    g.add_argument("--weight", type=float, default=0.5)
    g.add_argument("--top-k", type=int, default=10)
    g.add_argument("--filter", choices=["counter", "semi", "super", "ensured"])
    g.add_argument("--include-potential", action="store_true")

    outp = argparse.ArgumentParser(add_help=False)
    g = outp.add_argument_group("output")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--format", default="json,csv,svg")
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ensured", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("explain", parents=[data, expl, outp],
                   help="one JSON explanation per test instance")
    sub.add_parser("summary", parents=[data, outp],
                   help="category counts per instance, single and conjunctive")
    gm = sub.add_parser("global-map", parents=[data, outp],
                        help="probability/uncertainty map of the test set")
    gm.add_argument("--scores", type=Path, help="external id,score CSV instead of a forest")
    rp = sub.add_parser("rank-plot", parents=[data, expl, outp],
                        help="ranked alternatives for one test instance")
    rp.add_argument("--instance", type=int, required=True, help="instance id")
    hm = sub.add_parser("region-heatmap", parents=[outp],
                        help="rank score over the feasible region")
    hm.add_argument("--weight", type=float, default=0.5)
    return p


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(out=args.out)
    formats = {f.strip() for f in args.format.split(",") if f.strip()}
    if not formats or formats - FORMATS:
        raise ConfigError(f"--format must be a subset of json,csv,svg (got {args.format!r})")
    cfg.formats = formats
    cfg.weight = args.weight if hasattr(args, "weight") else 0.5
    if not -1 <= cfg.weight <= 1:
        raise ConfigError(f"--weight must lie in [-1, 1] (got {cfg.weight})")
    if args.command == "region-heatmap":
        return cfg
    if not args.dataset.is_file():
        raise ConfigError(f"dataset not found: {args.dataset}")
    if args.threshold is not None and args.epsilon is not None:
        raise ConfigError("--threshold and --epsilon are mutually exclusive")
    if args.task == "cls" and (args.threshold is not None or args.epsilon is not None):
        raise ConfigError("--threshold/--epsilon apply to --task reg only")
    if args.epsilon is not None and not 0 < args.epsilon < 1:
        raise ConfigError("--epsilon must lie in (0, 1)")
    if args.test_size < 0 or any(c < 1 for c in args.cal_size):
        raise ConfigError("--cal-size must be >= 1 and --test-size >= 0")
    if args.command != "summary" and (len(args.cal_size) > 1 or len(args.seed) > 1):
        raise ConfigError("lists of --cal-size/--seed are only accepted by summary")
    cfg.dataset, cfg.target, cfg.task = args.dataset, args.target, args.task
    cfg.threshold, cfg.epsilon = args.threshold, args.epsilon
    cfg.binarize_at, cfg.delimiter, cfg.drop_missing = (
        args.binarize_at, args.delimiter, args.drop_missing)
    cfg.cal_sizes, cfg.test_size, cfg.seeds = args.cal_size, args.test_size, args.seed
    cfg.jobs = max(1, args.jobs)
    try:
        cfg.forest = ForestParams(n_trees=args.n_trees, max_depth=args.max_depth,
                                  min_samples_leaf=args.min_samples_leaf)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if hasattr(args, "conjunctions"):
        cfg.conjunctions = args.conjunctions
        cfg.top_k = args.top_k
        cfg.filter = args.filter
        cfg.include_potential = args.include_potential
        if cfg.top_k < 1:
            raise ConfigError("--top-k must be >= 1")
    cfg.scores = getattr(args, "scores", None)
    if cfg.scores is not None and not cfg.scores.is_file():
        raise ConfigError(f"scores file not found: {cfg.scores}")
    cfg.instance = getattr(args, "instance", None)
    return cfg


def load_dataset(cfg: RunConfig) -> Dataset:
    target = cfg.target
    if target is None:
        with open(cfg.dataset, encoding="utf-8") as fh:
            head = fh.readline().strip()
        delim = cfg.delimiter or (";" if head.count(";") > head.count(",") else ",")
        target = head.split(delim)[-1].strip().strip('"')
    task = "classification" if cfg.task == "cls" else "regression"
    return load_csv(cfg.dataset, target, task, delimiter=cfg.delimiter,
                    binarize_at=cfg.binarize_at, drop_missing=cfg.drop_missing)


def prepare(cfg: RunConfig, dataset: Dataset, cal_size: int, seed: int):
    """Split, train the forest and bind the calibrator."""
    try:
        parts = split(dataset, cal_size, cfg.test_size, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    params = ForestParams(cfg.forest.n_trees, cfg.forest.max_depth,
                          cfg.forest.min_samples_leaf, seed)
    model = train_forest(parts.proper_training.X, parts.proper_training.y, params,
                         cfg.mode.task)
    return parts, CalibratedModel(model, parts.calibration, cfg.mode)


def cmd_explain(cfg: RunConfig) -> int:
    data = load_dataset(cfg)
    parts, cal = prepare(cfg, data, cfg.cal_size, cfg.seed)
    exps = explain_many(cal, parts.test, cfg.conjunctions, cfg.jobs)
    outdir = cfg.out / "explanations"
    outdir.mkdir(parents=True, exist_ok=True)
    for e in exps:
        doc = report.explanation_to_dict(e, data, cfg.weight, cfg.top_k, cfg.filter,
                                         cfg.include_potential)
        if "json" in cfg.formats:
            (outdir / f"{e.instance_id}.json").write_text(report.dumps(doc), encoding="utf-8")
    n_rules = [len(e.rules) for e in exps]
    log.info("explained %d instances, %.2f rules per instance", len(exps),
             float(np.mean(n_rules)) if n_rules else 0.0)
    return 0


def cmd_summary(cfg: RunConfig) -> int:
    data = load_dataset(cfg)
    rows = []
    for seed in cfg.seeds:
        for q in cfg.cal_sizes:
            parts, cal = prepare(cfg, data, q, seed)
            singles = explain_many(cal, parts.test, False, cfg.jobs)
            conj = [add_conjunctions(e, cal) for e in singles]
            for label, exps in ((f"{q} (s)", singles), (f"{q} (c)", conj)):
                row = report.summary_row(exps, label)
                if len(cfg.seeds) > 1:
                    row["run"] = f"seed {seed}: {label}"
                rows.append(row)
                log.info("%s: %.2f rules per instance", row["run"], row["Total"])
    cfg.out.mkdir(parents=True, exist_ok=True)
    if "csv" in cfg.formats:
        report.write_summary_csv(rows, cfg.out / "summary.csv")
    return 0


def cmd_global_map(cfg: RunConfig) -> int:
    if not cfg.mode.probabilistic:
        raise ConfigError("global map requires probabilistic mode (classification or --threshold)")
    data = load_dataset(cfg)
    if cfg.scores is not None:
        model = load_external_scores(cfg.scores, cfg.mode.task)
        parts = split(data, cfg.cal_size, cfg.test_size, cfg.seed)
        cal = CalibratedModel(model, parts.calibration, cfg.mode)
        est, low, high = cal.predict_ids(parts.test.ids)
    else:
        parts, cal = prepare(cfg, data, cfg.cal_size, cfg.seed)
        est, low, high = cal.predict(parts.test.X) if len(parts.test) else ([], [], [])
    points = [{
        "instance_id": int(i),
        "probability": float(e),
        "uncertainty": float(h - lo),
        "predicted_class": int(e > 0.5),
    } for i, e, lo, h in zip(parts.test.ids, est, low, high)]
    labels = ("class 0", "class 1")
    if cfg.mode.threshold is not None:
        labels = (f"y >= {cfg.mode.threshold:g}", f"y < {cfg.mode.threshold:g}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    if "svg" in cfg.formats:
        report.global_map_svg(points, cfg.out / "global_map.svg", labels)
    if "json" in cfg.formats:
        (cfg.out / "global_map.json").write_text(
            report.dumps({"schema_version": report.SCHEMA_VERSION, "mode": cfg.mode.to_dict(),
                          "points": points}), encoding="utf-8")
    return 0


def cmd_rank_plot(cfg: RunConfig) -> int:
    if not cfg.mode.probabilistic:
        raise ConfigError("rank plots require probabilistic mode (classification or --threshold)")
    data = load_dataset(cfg)
    parts, cal = prepare(cfg, data, cfg.cal_size, cfg.seed)
    hits = np.flatnonzero(parts.test.ids == cfg.instance)
    if len(hits) == 0:
        raise ConfigError(f"instance {cfg.instance} is not in the test set "
                          f"(ids: {', '.join(map(str, parts.test.ids[:10]))}...)")
    i = int(hits[0])
    exp = explain_alternatives(cal, parts.test.X[i], cfg.instance)
    if cfg.conjunctions:
        exp = add_conjunctions(exp, cal)
    tri = report.safe_triage(exp, cfg.weight)
    if tri is None:
        raise RuntimeError("taxonomy undefined: calibrated estimate is exactly 0.5")
    chosen = report.select_rules(tri, cfg.weight, cfg.top_k, cfg.filter, cfg.include_potential)
    cfg.out.mkdir(parents=True, exist_ok=True)
    if "svg" in cfg.formats:
        title = f"instance {cfg.instance}, w = {cfg.weight:g}, top {cfg.top_k}"
        report.rank_scatter_svg(exp, tri, chosen, cfg.out / f"rank_{cfg.instance}.svg", title)
        report.bars_svg(exp, chosen, data, cfg.out / f"bars_{cfg.instance}.svg", title)
    if "json" in cfg.formats:
        doc = report.explanation_to_dict(exp, data, cfg.weight, cfg.top_k, cfg.filter,
                                         cfg.include_potential)
        (cfg.out / f"rank_{cfg.instance}.json").write_text(report.dumps(doc), encoding="utf-8")
    return 0


def cmd_region_heatmap(cfg: RunConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    if "svg" in cfg.formats:
        report.heatmap_svg(cfg.weight, cfg.out / f"heatmap_w{cfg.weight:g}.svg")
    return 0


COMMANDS = {
    "explain": cmd_explain,
    "summary": cmd_summary,
    "global-map": cmd_global_map,
    "rank-plot": cmd_rank_plot,
    "region-heatmap": cmd_region_heatmap,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"ensured: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"ensured: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
