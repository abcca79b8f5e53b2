"""Correlation metrics with bootstrap intervals and permutation p-values."""

# %%
import numpy as np

from vadbnet.metrics import PairedSample, krcc, plcc, srcc
from vadbnet.report import EvaluationSettings, build_report, render_significance, render_table
from vadbnet.stats import error_bars

# %% [markdown]
# Asymmetric error bars are just the distances from the estimate to each interval end.

# %%
print([round(e, 4) for e in error_bars(0.9299, 0.9232, 0.9353)])

# %%
rng = np.random.default_rng(0)
truth = rng.uniform(1, 10, 200)
noisy = truth + rng.normal(0, 1.2, 200)
print(f"SRCC {srcc(noisy, truth):.4f}  PLCC {plcc(noisy, truth):.4f}  KRCC {krcc(noisy, truth):.4f}")

# a second dimension where the predictor knows nothing
samples = [PairedSample(noisy, truth, "Overall"), PairedSample(rng.uniform(1, 10, 200), truth, "Lig")]
report = build_report(samples, EvaluationSettings(bootstrap=1000, permutations=2000, seed=0))

# %%
print(render_table(report))
print(render_significance(report))
