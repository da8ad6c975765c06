"""Turning a regressor into a probabilistic model with a threshold.

The conformal predictive distribution of each prediction gives P(y < t);
Venn-Abers then calibrates that probability against the calibration labels
y < t. The resulting (probability, uncertainty) pairs are plotted over the
feasible region, and the rank heatmap for w = 0.5 is written next to them.
"""
import sys
from pathlib import Path

from ensured import CalibratedModel, ExplanationMode, ForestParams, split, synth_regression, train_forest
from ensured import report

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

data = synth_regression(2000, seed=2)
parts = split(data, cal_size=300, test_size=200, seed=2)
model = train_forest(parts.proper_training.X, parts.proper_training.y, ForestParams(seed=2),
                     "regression")

interval = CalibratedModel(model, parts.calibration, ExplanationMode.interval(0.1))
med, lo, hi = interval.predict(parts.test.X)
covered = ((parts.test.y >= lo) & (parts.test.y <= hi)).mean()
print(f"90% intervals: mean width {float((hi - lo).mean()):.2f}, coverage {covered:.3f}")

t = 5.0
thr = CalibratedModel(model, parts.calibration, ExplanationMode.thresholded(t))
est, low, high = thr.predict(parts.test.X)
points = [{"instance_id": int(i), "probability": float(e), "uncertainty": float(h - l),
           "predicted_class": int(e > 0.5)} for i, e, l, h in zip(parts.test.ids, est, low, high)]
report.global_map_svg(points, out / "global_map.svg", (f"y >= {t:g}", f"y < {t:g}"))
report.heatmap_svg(0.5, out / "heatmap_w0.5.svg")
print(f"P(y < {t:g}) for the first five test rows: {est[:5].round(3)}")
print(f"wrote {out / 'global_map.svg'} and {out / 'heatmap_w0.5.svg'}")
