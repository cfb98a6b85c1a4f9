"""Loss-generating environments, corruption with budget accounting, attack schedules.

All Bernoulli environments share one coupling: round ``t`` receives a block
of uniforms ``u`` and action ``i`` suffers loss ``1`` iff ``u[i] < mean_i``.
The clean stream and the corrupted stream read the *same* uniforms, so a
corruption only ever flips the entries whose mean it moved.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Protocol

import numpy as np

from .core import InsufficientDataError, InvalidInputError, as_loss_vector



class AttackScheduleWarning(UserWarning):
    """A lower-bound schedule was built outside its proof's comfort zone."""

BUDGET_TOL = 1e-12
MIN_TRIALS = 30
CASES = ("i", "ii", "iii", "iv")


# -- stochastic family ------------------------------------------------------

@dataclass(frozen=True)
class StochasticSpec:
    """The Bernoulli family: arm ``i_star`` has mean 1/2 - delta, the rest 1/2."""

    n: int
    delta: float
    i_star: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInputError("stochastic environment needs N >= 2")
        if not 0 <= self.i_star < self.n:
            raise InvalidInputError(f"i_star={self.i_star} out of range for N={self.n}")
        if not 0.0 <= self.delta <= 0.5:
            raise InvalidInputError("delta must lie in [0, 1/2] so every mean stays in [0, 1]")

    def means(self, delta: float | None = None) -> np.ndarray:
        mu = np.full(self.n, 0.5)
        mu[self.i_star] = 0.5 - (self.delta if delta is None else delta)
        return mu


def bernoulli_losses(means, uniforms) -> np.ndarray:
    return (np.asarray(uniforms) < np.asarray(means)).astype(np.float64)


def sample_stochastic(spec: StochasticSpec, rng: np.random.Generator) -> np.ndarray:
    """One independent draw from the Bernoulli family."""
    return bernoulli_losses(spec.means(), rng.random(spec.n))


def bandit_draw(p, rng_or_uniform) -> int:
    """Inverse-CDF draw of an action index from ``p``."""
    if isinstance(rng_or_uniform, np.random.Generator):
        u = rng_or_uniform.random()
    else:
        u = float(rng_or_uniform)
    p = np.asarray(p, dtype=np.float64)
    cdf = np.cumsum(p)
    i = int(np.searchsorted(cdf, u, side="right"))
    if i >= p.size:
        # u landed in the float slack above cdf[-1]
        i = int(np.flatnonzero(p > 0.0)[-1])
    return i


# -- corruption -------------------------------------------------------------

@dataclass(frozen=True)
class CorruptionBudget:
    limit: float
    spent: float = 0.0
    _comp: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self):
        if self.limit < 0.0:
            raise InvalidInputError("corruption budget must be non-negative")

    @property
    def remaining(self) -> float:
        return self.limit - self.spent

    def can_afford(self, cost: float) -> bool:
        return self.spent + cost <= self.limit + BUDGET_TOL

    def charge(self, cost: float) -> "CorruptionBudget":
        # compensated so that k charges of c equal k*c to within an ulp
        y = cost - self._comp
        t = self.spent + y
        budget = replace(self, spent=t, _comp=(t - self.spent) - y)
        if budget.spent > budget.limit + BUDGET_TOL:
            raise RuntimeError(f"corruption spend {budget.spent!r} exceeds budget {budget.limit!r}")
        return budget


class CorruptionStrategy(Protocol):
    """A corruption rule: ``cost`` is the designed shift ||E[l_t] - E[l'_t]||_inf."""

    def cost(self, t: int, p) -> float: ...

    def apply(self, t: int, clean, p, uniforms) -> np.ndarray: ...


class NoCorruption:
    def cost(self, t, p):
        return 0.0

    def apply(self, t, clean, p, uniforms):
        return np.asarray(clean, dtype=np.float64)


@dataclass(frozen=True)
class GapClosing:
    """Raise the optimal arm's mean from 1/2 - delta to 1/2 - target_delta.

    With the default ``target_delta=0`` all arms look identical while the
    attack runs. Only rounds ``t <= until`` are attacked (``None``: all).
    ``targeted`` restricts the attack to rounds where the drawn bandit arm
    is ``i_star``; the harness then draws the arm before the losses.
    """

    i_star: int
    delta: float
    target_delta: float = 0.0
    until: int | None = None
    targeted: bool = False

    def __post_init__(self):
        if not 0.0 <= self.target_delta <= self.delta:
            raise InvalidInputError("gap-closing may only shrink the gap")

    def cost(self, t, p):
        if self.until is not None and t > self.until:
            return 0.0
        return self.delta - self.target_delta

    def apply(self, t, clean, p, uniforms):
        out = np.array(clean, dtype=np.float64, copy=True)
        out[self.i_star] = float(uniforms[self.i_star] < 0.5 - self.target_delta)
        return out


def corrupt(clean, p, strategy, budget: CorruptionBudget, t: int = 1, uniforms=None):
    """Apply one round of ``strategy`` if the budget still covers its cost.

    Returns ``(loss, budget)``. Rounds the budget cannot pay for pass the clean
    vector through unchanged.
    """
    clean = np.asarray(clean, dtype=np.float64)
    cost = float(strategy.cost(t, p))
    if cost < 0.0:
        raise InvalidInputError("corruption cost must be non-negative")
    if cost == 0.0 or not budget.can_afford(cost):
        return clean, budget
    loss = as_loss_vector(strategy.apply(t, clean, p, uniforms), clean.size)
    return np.asarray(loss), budget.charge(cost)


# -- lower-bound attack schedules ------------------------------------------

@dataclass(frozen=True)
class AttackSchedule:
    """One branch of the four-case lower-bound construction.

    Rounds ``t <= switch_time`` are drawn with gap ``delta_prime``; later rounds
    with ``delta``. Cases i and ii never corrupt: their clean gap is
    ``effective_gap``. Cases iii and iv pay ``delta - delta_prime`` per
    attacked round out of budget ``C``.
    """

    case_id: str
    delta_prime: float
    switch_time: int
    i_star: int
    delta: float
    n: int
    C: float
    T: int
    problem: str
    warnings: tuple[str, ...] = ()

    @property
    def corrupts(self) -> bool:
        return self.case_id in ("iii", "iv")

    @property
    def effective_gap(self) -> float:
        """Gap of the distribution played during the attacked phase."""
        return self.delta if self.case_id == "ii" else self.delta_prime

    @property
    def per_round_cost(self) -> float:
        return self.delta - self.delta_prime if self.corrupts else 0.0


def complexity(n: int, problem: str) -> float:
    """log N for the expert problem, N for bandits."""
    if problem == "expert":
        return math.log(n)
    if problem == "mab":
        return float(n)
    raise InvalidInputError(f"unknown problem {problem!r}")


def case_predicates(delta: float, n: int, C: float, T: int, problem: str = "expert") -> list[str]:
    """Every case whose (non-strict) defining inequalities hold."""
    k = complexity(n, problem)
    horizon = k / delta**2
    corr = C / delta
    hits = []
    if T <= horizon:
        hits.append("i")
    if corr <= horizon <= T:
        hits.append("ii")
    if horizon <= corr <= T:
        hits.append("iii")
    if horizon <= T <= corr:
        hits.append("iv")
    return hits


def build_attack_schedule(delta: float, n: int, C: float, T: int, problem: str = "expert",
                          i_star: int = 0) -> AttackSchedule:
    """Select the lower-bound case for (delta, N, C, T) and its gap and switch time."""
    if not 0.0 < delta < 0.25:
        raise InvalidInputError(f"precondition 0 < delta < 1/4 violated (delta={delta})")
    if n < 4:
        raise InvalidInputError(f"precondition N >= 4 violated (N={n})")
    if C < 0.0:
        raise InvalidInputError(f"precondition C >= 0 violated (C={C})")
    if T < 4 * math.log(n):
        raise InvalidInputError(f"precondition T >= 4 log N = {4 * math.log(n):.6g} violated (T={T})")
    if not 0 <= i_star < n:
        raise InvalidInputError(f"i_star={i_star} out of range for N={n}")
    hits = case_predicates(delta, n, C, T, problem)
    if not hits:
        raise RuntimeError(f"no case matched (delta={delta}, N={n}, C={C}, T={T})")
    case = hits[0]
    k = complexity(n, problem)
    notes = []
    switch = T
    if case in ("i", "iv"):
        dp = math.sqrt(k / T)
        if case == "i" and dp > 0.25:
            notes.append(f"case i gap sqrt(k/T)={dp:.6g} exceeds 1/4; clamped to 1/4")
            dp = 0.25
    elif case == "ii":
        dp = delta
    else:
        dp = math.sqrt(delta * k / C)
        switch = math.ceil(C / delta)
    if T < k / dp**2 * (1 - 1e-12):
        notes.append(f"horizon T={T} is below k/delta'^2={k / dp**2:.6g} required by the base lemma")
    for w in notes:
        warnings.warn(w, AttackScheduleWarning, stacklevel=2)
    return AttackSchedule(case, dp, switch, i_star, delta, n, C, T, problem, tuple(notes))


# -- environments -----------------------------------------------------------

class BernoulliEnvironment:
    """Stochastic environment with an optional corruption strategy and budget.

    ``next_loss(t, p, uniforms, action)`` returns ``(clean, corrupted)``; the
    harness passes ``action`` only when the strategy is targeted.
    """

    def __init__(self, spec: StochasticSpec, strategy=None, budget: float = 0.0):
        self.spec = spec
        self.strategy = NoCorruption() if strategy is None else strategy
        self.budget = CorruptionBudget(float(budget))
        self.corrupted_rounds = 0
        self._clean_means = spec.means()

    @property
    def n_actions(self) -> int:
        return self.spec.n

    @property
    def i_star(self) -> int:
        return self.spec.i_star

    @property
    def targeted(self) -> bool:
        return bool(getattr(self.strategy, "targeted", False))

    @property
    def spent(self) -> float:
        return self.budget.spent

    def next_loss(self, t, p, uniforms, action=None):
        u = uniforms[:self.spec.n]
        clean = bernoulli_losses(self._clean_means, u)
        if self.targeted and action != self.spec.i_star:
            return clean, clean
        before = self.budget
        loss, self.budget = corrupt(clean, p, self.strategy, self.budget, t, u)
        if self.budget is not before:
            self.corrupted_rounds += 1
        return clean, loss

    def kernel_params(self):
        """Flat description for the compiled loop, or None for custom strategies."""
        s = self.strategy
        base = dict(n=self.spec.n, i_star=self.spec.i_star, clean_delta=self.spec.delta,
                    budget=self.budget.limit)
        if isinstance(s, NoCorruption):
            return dict(base, attack_delta=self.spec.delta, attack_until=0, targeted=False)
        if type(s) is GapClosing and s.i_star == self.spec.i_star and s.delta == self.spec.delta:
            until = -1 if s.until is None else s.until
            return dict(base, attack_delta=s.target_delta, attack_until=until, targeted=s.targeted)
        return None


class ReplayEnvironment:
    """Deterministic environment replaying a fixed (T, N) loss matrix."""

    targeted = False
    i_star = None
    spent = 0.0
    corrupted_rounds = 0

    def __init__(self, losses):
        mat = np.array(losses, dtype=np.float64, copy=True)
        if mat.ndim != 2 or mat.shape[0] == 0:
            raise InvalidInputError("replay losses must be a non-empty (T, N) matrix")
        if not np.all(np.isfinite(mat)) or mat.min() < 0.0 or mat.max() > 1.0:
            raise InvalidInputError("replay losses must lie in [0, 1]")
        mat.setflags(write=False)
        self.losses = mat

    @property
    def n_actions(self) -> int:
        return self.losses.shape[1]

    @property
    def horizon(self) -> int:
        return self.losses.shape[0]

    def next_loss(self, t, p, uniforms, action=None):
        if t > self.horizon:
            raise InvalidInputError(f"replay has {self.horizon} rounds; round {t} requested")
        row = self.losses[t - 1]
        return row, row

    def kernel_params(self):
        return dict(replay=self.losses)


def load_replay_csv(path) -> np.ndarray:
    """Read a CSV of loss vectors, one round per row; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if k == 0:
                    continue
                raise InvalidInputError(f"{path}: non-numeric entry on line {k + 1}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise InvalidInputError(f"{path}: expected a rectangular table of losses")
    return np.array(rows)


def attack_environment(schedule: AttackSchedule) -> BernoulliEnvironment:
    """Realize a lower-bound schedule as a (possibly corrupted) Bernoulli environment."""
    if schedule.corrupts:
        spec = StochasticSpec(schedule.n, schedule.delta, schedule.i_star)
        until = schedule.switch_time if schedule.case_id == "iii" else None
        strategy = GapClosing(schedule.i_star, schedule.delta, schedule.delta_prime, until)
        return BernoulliEnvironment(spec, strategy, schedule.C)
    return BernoulliEnvironment(StochasticSpec(schedule.n, schedule.effective_gap, schedule.i_star))


ENV_NAMES = ("stochastic", "corrupted:<strategy>[:<C>]", "attack-schedule", "adversarial-replay:<file>")


def make_environment(name: str, *, n: int, T: int, delta: float = 0.0, i_star: int = 0,
                     C: float = 0.0, problem: str = "expert", targeted: bool = False,
                     base_dir: str | os.PathLike | None = None):
    """Build an environment from its configuration name.

    Returns ``(environment, info)`` where ``info`` carries the effective
    ``delta``, ``C`` and, for attack schedules, the :class:`AttackSchedule`.
    """
    info = dict(delta=delta, C=C, schedule=None)
    if name == "stochastic":
        return BernoulliEnvironment(StochasticSpec(n, delta, i_star)), dict(info, C=0.0)
    if name.startswith("corrupted:"):
        parts = name.split(":")
        if len(parts) not in (2, 3):
            raise InvalidInputError(f"expected corrupted:<strategy>[:<C>], got {name!r}")
        strategy_name = parts[1]
        try:
            budget = float(parts[2]) if len(parts) == 3 else float(C)
        except ValueError:
            raise InvalidInputError(f"bad corruption budget in {name!r}") from None
        if not budget >= 0.0:
            raise InvalidInputError("corruption budget must be non-negative")
        spec = StochasticSpec(n, delta, i_star)
        if strategy_name == "none":
            strategy = NoCorruption()
        elif strategy_name == "gap-closing":
            strategy = GapClosing(i_star, delta, targeted=targeted)
        else:
            raise InvalidInputError(f"unknown corruption strategy {strategy_name!r}")
        if targeted and problem != "mab":
            raise InvalidInputError("targeted corruption only applies to the bandit problem")
        return BernoulliEnvironment(spec, strategy, budget), dict(info, C=budget)
    if name == "attack-schedule":
        schedule = build_attack_schedule(delta, n, C, T, problem, i_star)
        return attack_environment(schedule), dict(info, schedule=schedule)
    if name.startswith("adversarial-replay:"):
        path = name.split(":", 1)[1]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        env = ReplayEnvironment(load_replay_csv(path))
        if env.n_actions != n:
            raise InvalidInputError(f"replay file has N={env.n_actions}, config says N={n}")
        return env, dict(info, delta=math.nan, C=math.nan)
    raise InvalidInputError(f"unknown environment {name!r}; expected one of {', '.join(ENV_NAMES)}")


# -- Definition-1 checker ---------------------------------------------------

class SelfBoundingCheck(NamedTuple):
    holds: bool
    slack: float
    lhs: float
    rhs: float
    stderr: float


def self_bounding_check(trials, i_star: int, delta: float, C: float) -> SelfBoundingCheck:
    """Monte Carlo test of R_bar_{T,i*} >= delta * E[sum_t (1 - p_{t,i*})] - C.

    ``stderr`` is the standard error of the per-trial difference of the two
    sides; the constraint is accepted when ``slack >= -2 * stderr``.
    """
    trials = list(trials)
    if len(trials) < MIN_TRIALS:
        raise InsufficientDataError(f"need at least {MIN_TRIALS} trials, got {len(trials)}")
    regret = np.array([t.ledger.player_loss_sum - t.ledger.per_action_loss_sums[i_star] for t in trials])
    mass = np.array([t.ledger.suboptimal_mass_sum[i_star] for t in trials])
    lhs = float(regret.mean())
    rhs = float(delta * mass.mean() - C)
    diff = regret - delta * mass
    stderr = float(diff.std(ddof=1) / math.sqrt(len(trials)))
    slack = lhs - rhs
    return SelfBoundingCheck(slack >= -2.0 * stderr, slack, lhs, rhs, stderr)
