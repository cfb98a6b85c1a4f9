"""Randomized checks of the analytic inequalities behind the upper bounds.

Each suite reports its worst relative margin; a negative margin beyond 1e-9
would be a violation.
"""

# %%
import numpy as np

from cblab import entropy_bound_rhs, max_lemma_bound, run_verification
from cblab.bounds import lemma1_check, sum_inequality_check, worst_case_x
from cblab.core import entropy

for r in run_verification(samples=10**4, seed=0):
    print(f"{r.name:<16} cases={r.cases:<6} worst margin={r.worst_margin:.3g}")

# %% [markdown]
# Individual checks are plain functions, handy for exploring edge cases.

# %%
p = np.array([0.7, 0.1, 0.1, 0.1])
print("entropy", entropy(p), "<=", entropy_bound_rhs(p, 0))
print("max lemma at c=0:", max_lemma_bound(0.0))
print("sum inequality a=b=1:", sum_inequality_check(1.0, 1.0, worst_case_x(1.0, 1.0, 1000)))
losses = np.random.default_rng(0).uniform(size=(500, 6))
print("trajectory bound:", lemma1_check(losses, "decreasing"))
