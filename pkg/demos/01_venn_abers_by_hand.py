"""Venn-Abers on five calibration points, step by step.

The test score 0.6 is appended to the calibration scores twice, once with
label 0 and once with label 1. Each augmented set gets its own isotonic fit
and the two fitted values at 0.6 bound the probability.
"""
from ensured import fit_isotonic, regularise, va_predict

scores = [0.1, 0.3, 0.5, 0.7, 0.9]
labels = [0, 1, 0, 1, 1]
s = 0.6

print("isotonic fit of the calibration set alone:")
print("  ", fit_isotonic(list(zip(scores, labels))).breakpoints)

for label in (0, 1):
    fit = fit_isotonic(list(zip(scores, labels)) + [(s, label)])
    print(f"with ({s}, {label}) appended, g{label}({s}) = {float(fit(s)):.4f}")
    print("  ", [(sc, round(v, 4)) for sc, v in fit.breakpoints])

p = va_predict(scores, labels, s)
print(f"\ninterval [{p.low:.4f}, {p.high:.4f}], width {p.uncertainty:.4f}")
print(f"regularised estimate high / (1 - low + high) = {regularise(p.low, p.high):.4f}")
