"""Tsallis-INF on a corrupted bandit, and the expectation identity.

With an oblivious adversary the realized loss of the drawn arm and the
expected loss under p_t agree on average; with the targeted model they do
not, because the corruption now depends on the drawn arm.
"""

# %%
import numpy as np

from cblab import ExperimentConfig, run_experiment

cfg = ExperimentConfig(learner="tsallis-inf", problem="mab", environment="corrupted:gap-closing",
                       N=4, T=5 * 10**4, delta=0.1, C=500.0, seeds=50)

# %%
for targeted in (False, True):
    r = run_experiment(cfg.with_(targeted=targeted))
    diff = np.array([t.ledger.bandit_loss_sum - t.ledger.player_loss_sum for t in r.trials])
    se = diff.std(ddof=1) / np.sqrt(diff.size)
    print(f"targeted={targeted!s:<5} pseudo-regret {r.mean_regret[0]:8.2f}  "
          f"drawn-arm regret {r.mean_bandit_regret[0]:8.2f}  gap/stderr {diff.mean() / se:6.2f}  "
          f"spend {r.mean_spend:.1f}")
