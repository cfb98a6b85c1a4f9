"""The four-case lower-bound construction.

For each (delta, N, C, T) the construction picks one of four cases and a
reduced gap delta'. We print the case, delta', the switch time and the
constructive lower-bound value, then play decreasing Hedge against it.
"""

# %%
from cblab import ExperimentConfig, build_attack_schedule, lower_bound_value, run_experiment

grid = [
    (0.2, 4, 0.0, 10**4),      # case ii: no corruption
    (0.2, 4, 100.0, 10**4),    # case iii: corrupt until C / delta
    (0.2, 4, 10**4, 10**3),    # case iv: budget outlasts the horizon
    (0.2, 4, 0.0, 20),         # case i: horizon too short to resolve the gap
]

# %%
for delta, n, C, T in grid:
    s = build_attack_schedule(delta, n, C, T, "expert")
    lb = lower_bound_value(delta, n, C, T, "expert")
    r = run_experiment(ExperimentConfig(environment="attack-schedule", N=n, T=T, delta=delta, C=C, seeds=20))
    print(f"case {s.case_id:<4} delta'={s.delta_prime:.4f} switch={s.switch_time:>6} "
          f"lower bound {lb:.4f}  Hedge regret {r.max_regret:.3f}")

# %% [markdown]
# The bandit variant replaces log N by N in every threshold:

# %%
s = build_attack_schedule(0.2, 8, 100.0, 10**4, "mab")
print("mab:", s.case_id, round(s.delta_prime, 4), lower_bound_value(0.2, 8, 100.0, 10**4, "mab"))
