"""Alternative explanations for one instance, triaged and ranked.

Trains a forest on synthetic data where P(y = 1 | x) = x1, calibrates it
on 100 held-out rows, and lists the alternatives for one test instance
with their category, whether they reduce uncertainty, and their rank.
"""
from ensured import (
    CalibratedModel,
    ExplanationMode,
    ForestParams,
    add_conjunctions,
    explain_alternatives,
    split,
    synth_classification,
    train_forest,
    triage,
)
from ensured.triage import rank_rules

data = synth_classification(1500, seed=1)
parts = split(data, cal_size=100, test_size=10, seed=1)
model = train_forest(parts.proper_training.X, parts.proper_training.y, ForestParams(seed=1))
cal = CalibratedModel(model, parts.calibration, ExplanationMode.classification())

x = parts.test.X[0]
exp = explain_alternatives(cal, x, int(parts.test.ids[0]))
exp = add_conjunctions(exp, cal)
print(f"instance {x.round(3)}: P(y=1) = {exp.estimate:.3f} "
      f"in [{exp.low:.3f}, {exp.high:.3f}]\n")

rules = triage(exp, w=0.5)
print(f"{'rule':<32}{'estimate':>9}{'interval':>18}  {'category':<18}ensured")
for t in rules:
    r = t.rule
    print(f"{r.text(data):<32}{r.estimate:>9.3f}   [{r.low:.3f}, {r.high:.3f}]  "
          f"{t.category.value:<18}{t.ensured}")

for w in (0.0, 0.5, 1.0):
    top = rank_rules(rules, w, top_k=3)
    print(f"\ntop 3 at w = {w}: " + "; ".join(t.rule.text(data) for t in top))
