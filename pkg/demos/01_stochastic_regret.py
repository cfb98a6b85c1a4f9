"""Hedge and FTL on a clean stochastic problem.

Run with ``python demos/01_stochastic_regret.py``. Prints mean regret and the
matching upper bounds for a few horizons.
"""

# %% [markdown]
# Four experts, the first one better by a gap of 0.2. Both learners settle on
# it quickly; regret stops growing once the gap has been resolved, far below
# the worst-case sqrt(T) rate.

# %%
from cblab import ExperimentConfig, run_experiment

base = ExperimentConfig(N=4, delta=0.2, seeds=40)

# %%
print(f"{'learner':<18}{'T':>8}{'regret':>10}{'stderr':>9}{'thm1':>9}{'thm2':>9}")
for learner in ("hedge-decreasing", "hedge-adaptive", "ftl"):
    for T in (10**2, 10**3, 10**4):
        r = run_experiment(base.with_(learner=learner, T=T))
        print(f"{learner:<18}{T:>8}{r.max_regret:>10.3f}{r.stderr:>9.3f}"
              f"{r.bounds['bound_thm1']:>9.1f}{r.bounds['bound_thm2']:>9.1f}")

# %% [markdown]
# Regret saturates after about a thousand rounds: once the leader is clear,
# the weight on the other experts decays like exp(-eta_t * delta * t). The
# gap-dependent bound_thm2 is loose by two orders of magnitude, since its
# constants serve the proof rather than tightness.
