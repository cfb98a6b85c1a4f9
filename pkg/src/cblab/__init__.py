"""Regret simulation laboratory for Hedge-type learners under adversarial corruption."""

from .bounds import (
    bound_corollary1,
    bound_thm1,
    bound_thm2,
    bound_thm3,
    bound_thm4,
    entropy_bound_rhs,
    lemma1_rhs,
    lower_bound_value,
    max_lemma_bound,
    max_lemma_check,
    run_verification,
    sum_inequality_check,
)
from .core import (
    Bandit,
    FullInfo,
    InsufficientDataError,
    InvalidInputError,
    NumericError,
    RegretLedger,
    as_loss_vector,
    as_simplex,
    entropy,
    max_pseudo_regret,
    normalize,
    pseudo_regret,
)
from .environments import (
    AttackSchedule,
    AttackScheduleWarning,
    BernoulliEnvironment,
    CorruptionBudget,
    GapClosing,
    NoCorruption,
    ReplayEnvironment,
    StochasticSpec,
    bandit_draw,
    build_attack_schedule,
    corrupt,
    make_environment,
    sample_stochastic,
    self_bounding_check,
)
from .harness import (
    AggregateResult,
    ConfigError,
    ExperimentConfig,
    TrialRecord,
    run_experiment,
    run_trial,
    sweep,
    write_results_csv,
)
from .learners import (
    FollowTheLeader,
    Hedge,
    TsallisINF,
    adaptive_rate,
    decreasing_rate,
    ftl_predict,
    hedge_predict,
    make_learner,
    second_order_increment,
    tsallis_predict,
    tsallis_update,
)

__version__ = "0.1.0"
