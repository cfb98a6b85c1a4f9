"""Regret as a function of the corruption budget C.

The adversary closes the gap of the best expert while its budget lasts. The
excess regret of decreasing Hedge grows roughly like sqrt(C), so a log-log
fit of excess against C has slope near 1/2.
"""

# %%
import numpy as np

from cblab import ExperimentConfig, sweep

budgets = [0.0, 100.0, 400.0, 1600.0]
cfg = ExperimentConfig(environment="corrupted:gap-closing", N=8, T=2 * 10**5, delta=0.1,
                       seeds=30, sweep={"C": budgets})

# %%
for learner in ("hedge-decreasing", "hedge-adaptive", "ftl"):
    res = sweep(cfg.with_(learner=learner))
    excess = np.array([r.max_regret - res[0].max_regret for r in res[1:]])
    slope = np.polyfit(np.log(budgets[1:]), np.log(np.maximum(excess, 1e-9)), 1)[0]
    row = "  ".join(f"C={r.config.C:>6g}: {r.max_regret:7.2f}" for r in res)
    print(f"{learner:<18}{row}   log-log slope {slope:.2f}")

# %% [markdown]
# Under this oblivious attack FTL is hurt about as much as Hedge: both start
# the clean phase behind a random-walk deficit of order sqrt(C / delta).
