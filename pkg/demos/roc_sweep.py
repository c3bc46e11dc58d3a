"""
Sweeping the override threshold
===============================

The threshold is applied at fusion time, so one fitted model can be
re-scored at every value.  Raising it can only shrink the set of overridden
observations.
"""

from raresage.metrics import roc_csv, roc_sweep
from raresage.pipeline import PipelineConfig, fit
from raresage.synthgen import gen_domains, sdg_spec

A, B = gen_domains(sdg_spec(seed=4))
cfg = PipelineConfig(dl_roster=("centroid@0-3", "logistic@0-3", "svm_linear@0-3"),
                     k_roster=("svm_linear@4-7",), rarity_columns=(0, 1, 2, 3))
model = fit(A, cfg)

points = roc_sweep(model, B)
print(roc_csv(points))

counts = [p.override_count for p in points]
print("non-increasing:", all(a >= b for a, b in zip(counts, counts[1:])))
print("at t_c = 1.0:", roc_sweep(model, B, [1.0])[0].override_count, "overrides")
