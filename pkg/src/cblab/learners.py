"""Hedge with pluggable learning rates, Follow-the-Leader, and a Tsallis-INF baseline.

Every learner exposes the same two-call round protocol::

    p = learner.predict()
    learner.update(p, feedback)

``predict`` is a pure function of the learner state; ``update`` consumes
exactly one :class:`~cblab.core.FullInfo` or :class:`~cblab.core.Bandit`.
Learners are built by name with :func:`make_learner`.
"""

from __future__ import annotations

import math

import numpy as np

from .core import Bandit, FullInfo, InvalidInputError, NumericError

# 2 (sqrt 2 - 1) / (e - 2), the constant in the adaptive (second-order) rate
ADAPTIVE_RATE_CONST = 2.0 * (math.sqrt(2.0) - 1.0) / (math.e - 2.0)

TSALLIS_TOL = 1e-9
TSALLIS_MAX_ITER = 200

LEARNER_NAMES = ("hedge-decreasing", "hedge-adaptive", "hedge-constant:<eta>", "ftl", "tsallis-inf")


# -- rate schedules ---------------------------------------------------------

def decreasing_rate(t: int, n: int) -> float:
    """eta_t = sqrt(8 log N / t)."""
    if t < 1:
        raise InvalidInputError("round index starts at 1")
    if n < 2:
        raise InvalidInputError("decreasing Hedge needs N >= 2")
    return math.sqrt(8.0 * math.log(n) / t)


def adaptive_rate(v_prev: float, n: int) -> float:
    """eta_t = min{1, sqrt(2 (sqrt2 - 1) log N / ((e - 2) V_{t-1}))}; 1 when V_{t-1} = 0."""
    if v_prev < 0.0 or not math.isfinite(v_prev):
        raise InvalidInputError("cumulative variance must be finite and non-negative")
    if n < 2:
        raise InvalidInputError("adaptive Hedge needs N >= 2")
    if v_prev == 0.0:
        return 1.0
    return min(1.0, math.sqrt(ADAPTIVE_RATE_CONST * math.log(n) / v_prev))


# -- stateless building blocks ---------------------------------------------

def hedge_predict(cumulative_losses, eta: float) -> np.ndarray:
    """Exponential weights on cumulative losses, shifted by the minimum before exp."""
    cum = np.asarray(cumulative_losses, dtype=np.float64)
    w = np.exp(-eta * (cum - cum.min()))
    return w / w.sum()


def second_order_increment(p, loss) -> float:
    """v_t = sum_i p_i (l_i - l.p)^2."""
    p = np.asarray(p, dtype=np.float64)
    loss = np.asarray(loss, dtype=np.float64)
    if p.shape != loss.shape:
        raise InvalidInputError(f"dimension mismatch: p{p.shape} vs loss{loss.shape}")
    mean = float(np.dot(loss, p))
    return float(np.dot(p, (loss - mean) ** 2))


def ftl_predict(cumulative_losses, round_index: int = 1) -> np.ndarray:
    """Point mass on the current leader; uniform before any data is seen."""
    cum = np.asarray(cumulative_losses, dtype=np.float64)
    n = cum.size
    if round_index <= 1:
        return np.full(n, 1.0 / n)
    p = np.zeros(n)
    p[int(np.argmin(cum))] = 1.0
    return p


def _tsallis_weights(estimates, z, eta):
    x = eta * (estimates - z)
    return 1.0 / (x * x)


def _seq_sum(values) -> float:
    # left-to-right, matching the compiled loop bit for bit
    s = 0.0
    for v in values.tolist():
        s += v
    return s


def _tsallis_mass(estimates, z, eta):
    return _seq_sum(_tsallis_weights(estimates, z, eta))


def tsallis_normalizer(estimates, eta: float) -> float:
    """Bisection for z < min(estimates) with sum_i (eta (L_i - z))^-2 = 1."""
    est = np.asarray(estimates, dtype=np.float64)
    n = est.size
    m = float(est.min())
    # sum >= 1 at hi (the leader alone contributes 1), sum <= 1 at lo
    lo = m - math.sqrt(n) / eta
    hi = m - 1.0 / eta
    f_lo = _tsallis_mass(est, lo, eta) - 1.0
    if abs(f_lo) <= TSALLIS_TOL:
        return lo
    f_hi = _tsallis_mass(est, hi, eta) - 1.0
    if abs(f_hi) <= TSALLIS_TOL:
        return hi
    for _ in range(TSALLIS_MAX_ITER):
        mid = 0.5 * (lo + hi)
        f = _tsallis_mass(est, mid, eta) - 1.0
        if abs(f) <= TSALLIS_TOL:
            return mid
        if f < 0.0:
            lo = mid
        else:
            hi = mid
    raise NumericError(f"Tsallis normalizer did not converge in {TSALLIS_MAX_ITER} iterations")


def tsallis_predict(estimates, round_index: int) -> np.ndarray:
    """1/2-Tsallis FTRL weights with eta_t = 1 / sqrt(t), t = ``round_index``."""
    est = np.asarray(estimates, dtype=np.float64)
    eta = 1.0 / math.sqrt(round_index)
    z = tsallis_normalizer(est, eta)
    w = _tsallis_weights(est, z, eta)
    return w / _seq_sum(w)


def tsallis_update(estimates, feedback: Bandit, p) -> np.ndarray:
    """Importance-weighted loss estimate added to the drawn arm only."""
    est = np.array(estimates, dtype=np.float64, copy=True)
    est[feedback.action] += feedback.loss / p[feedback.action]
    return est


# -- stateful learners ------------------------------------------------------

class Hedge:
    """Exponential weights with a constant, decreasing, or second-order rate."""

    needs_full_info = True

    def __init__(self, n_actions: int, schedule: str = "decreasing", eta: float | None = None):
        if schedule not in ("constant", "decreasing", "adaptive"):
            raise InvalidInputError(f"unknown rate schedule {schedule!r}")
        if schedule == "constant" and (eta is None or not eta > 0.0 or not math.isfinite(eta)):
            raise InvalidInputError("constant schedule needs a finite eta > 0")
        if schedule != "constant" and n_actions < 2:
            raise InvalidInputError("Hedge with a log N rate needs N >= 2")
        self.n_actions = n_actions
        self.schedule = schedule
        self.eta = eta
        self.cumulative_losses = np.zeros(n_actions)
        self.round = 0
        self.second_order_sum = 0.0

    def rate(self, t: int | None = None) -> float:
        """Learning rate for round ``t`` (default: the upcoming round)."""
        t = self.round + 1 if t is None else t
        if self.schedule == "constant":
            return self.eta
        if self.schedule == "decreasing":
            return decreasing_rate(t, self.n_actions)
        return adaptive_rate(self.second_order_sum, self.n_actions)

    def predict(self) -> np.ndarray:
        return hedge_predict(self.cumulative_losses, self.rate())

    def update(self, p, feedback) -> None:
        if not isinstance(feedback, FullInfo):
            raise InvalidInputError("Hedge needs full-information feedback")
        loss = np.asarray(feedback.loss, dtype=np.float64)
        self.second_order_sum += second_order_increment(p, loss)
        self.cumulative_losses = self.cumulative_losses + loss
        self.round += 1


class FollowTheLeader:
    needs_full_info = True

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.cumulative_losses = np.zeros(n_actions)
        self.round = 0

    def rate(self, t=None) -> float:
        return math.inf

    def predict(self) -> np.ndarray:
        return ftl_predict(self.cumulative_losses, self.round + 1)

    def update(self, p, feedback) -> None:
        if not isinstance(feedback, FullInfo):
            raise InvalidInputError("FTL needs full-information feedback")
        self.cumulative_losses = self.cumulative_losses + np.asarray(feedback.loss, dtype=np.float64)
        self.round += 1


class TsallisINF:
    """Bandit baseline: 1/2-Tsallis FTRL with importance-weighted estimates."""

    needs_full_info = False

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.cumulative_loss_estimates = np.zeros(n_actions)
        self.round = 0

    def rate(self, t: int | None = None) -> float:
        t = self.round + 1 if t is None else t
        return 1.0 / math.sqrt(t)

    def predict(self) -> np.ndarray:
        return tsallis_predict(self.cumulative_loss_estimates, self.round + 1)

    def update(self, p, feedback) -> None:
        if not isinstance(feedback, Bandit):
            raise InvalidInputError("Tsallis-INF consumes bandit feedback only")
        self.cumulative_loss_estimates = tsallis_update(self.cumulative_loss_estimates, feedback, p)
        self.round += 1


def parse_learner_name(name: str) -> tuple[str, float | None]:
    """Split a learner name into (kind, eta); raises on unknown names."""
    if name.startswith("hedge-constant:"):
        try:
            eta = float(name.split(":", 1)[1])
        except ValueError:
            raise InvalidInputError(f"bad learning rate in {name!r}") from None
        if not eta > 0.0 or not math.isfinite(eta):
            raise InvalidInputError(f"learning rate must be positive in {name!r}")
        return "hedge-constant", eta
    if name in ("hedge-decreasing", "hedge-adaptive", "ftl", "tsallis-inf"):
        return name, None
    raise InvalidInputError(f"unknown learner {name!r}; expected one of {', '.join(LEARNER_NAMES)}")


def make_learner(name: str, n_actions: int):
    kind, eta = parse_learner_name(name)
    if kind == "hedge-constant":
        return Hedge(n_actions, "constant", eta)
    if kind == "hedge-decreasing":
        return Hedge(n_actions, "decreasing")
    if kind == "hedge-adaptive":
        return Hedge(n_actions, "adaptive")
    if kind == "ftl":
        return FollowTheLeader(n_actions)
    return TsallisINF(n_actions)
