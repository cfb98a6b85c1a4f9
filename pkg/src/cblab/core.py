"""Shared numeric vocabulary: simplex and loss vectors, feedback, regret ledgers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

SIMPLEX_TOL = 1e-9


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class NumericError(ArithmeticError):
    """Raised when a numeric routine fails to produce a finite answer."""


class InsufficientDataError(ValueError):
    """Raised when a Monte Carlo estimate is requested from too few trials."""


def as_simplex(p, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate ``p`` as a probability vector and return it as a read-only array."""
    arr = np.array(p, dtype=np.float64, copy=True).reshape(-1)
    if arr.size == 0:
        raise InvalidInputError("simplex vector must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("simplex vector has non-finite entries")
    if np.any(arr < -tol) or np.any(arr > 1.0 + tol):
        raise InvalidInputError("simplex entries must lie in [0, 1]")
    if abs(arr.sum() - 1.0) > tol:
        raise InvalidInputError(f"simplex entries sum to {arr.sum()!r}, not 1")
    arr.setflags(write=False)
    return arr


def as_loss_vector(loss, n: int | None = None) -> np.ndarray:
    """Validate ``loss`` as an element of [0, 1]^N."""
    arr = np.array(loss, dtype=np.float64, copy=True).reshape(-1)
    if n is not None and arr.size != n:
        raise InvalidInputError(f"loss vector has {arr.size} entries, expected {n}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidInputError("loss entries must lie in [0, 1]")
    arr.setflags(write=False)
    return arr


def normalize(weights) -> np.ndarray:
    """Turn strictly positive weights into a probability vector."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise InvalidInputError("need at least one weight")
    if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
        raise InvalidInputError("weights must be finite and strictly positive")
    p = w / w.sum()
    p.setflags(write=False)
    return p


def entropy(p) -> float:
    """Shannon entropy in nats, with 0 log(1/0) taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log(nz)))


@dataclass(frozen=True)
class FullInfo:
    loss: np.ndarray


@dataclass(frozen=True)
class Bandit:
    action: int
    loss: float

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0:
            raise InvalidInputError("bandit loss must lie in [0, 1]")


Feedback = Union[FullInfo, Bandit]


class RegretLedger:
    """Compensated running sums for one trial, on both loss streams.

    All totals live in one flat buffer so a round is a single Kahan step:
    ``[player, player_clean, bandit, second_order, per_action (N),
    per_action_clean (N), suboptimal_mass (N)]``.
    """

    _SCALARS = 4

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise InvalidInputError("need at least one action")
        self.n_actions = n_actions
        self.round_count = 0
        size = self._SCALARS + 3 * n_actions
        self._sum = np.zeros(size)
        self._comp = np.zeros(size)

    @classmethod
    def from_buffers(cls, n_actions: int, round_count: int, sums, comp=None) -> "RegretLedger":
        ledger = cls(n_actions)
        ledger.round_count = int(round_count)
        ledger._sum[:] = sums
        if comp is not None:
            ledger._comp[:] = comp
        return ledger

    def record(self, p, loss, clean_loss=None, bandit_loss: float = 0.0) -> None:
        """Account for one round played with ``p`` against ``loss``."""
        p = np.asarray(p, dtype=np.float64)
        loss = np.asarray(loss, dtype=np.float64)
        clean = loss if clean_loss is None else np.asarray(clean_loss, dtype=np.float64)
        n = self.n_actions
        inc = np.empty_like(self._sum)
        mean_loss = float(np.dot(loss, p))
        inc[0] = mean_loss
        inc[1] = float(np.dot(clean, p))
        inc[2] = bandit_loss
        inc[3] = float(np.dot(p, (loss - mean_loss) ** 2))
        inc[4:4 + n] = loss
        inc[4 + n:4 + 2 * n] = clean
        inc[4 + 2 * n:] = 1.0 - p
        self.add_increment(inc)

    def add_increment(self, inc: np.ndarray) -> None:
        y = inc - self._comp
        t = self._sum + y
        self._comp = (t - self._sum) - y
        self._sum = t
        self.round_count += 1

    @property
    def buffers(self) -> tuple[np.ndarray, np.ndarray]:
        return self._sum.copy(), self._comp.copy()

    @property
    def player_loss_sum(self) -> float:
        return float(self._sum[0])

    @property
    def player_loss_sum_clean(self) -> float:
        return float(self._sum[1])

    @property
    def bandit_loss_sum(self) -> float:
        """Sum of the realized losses of drawn actions (bandit trials only)."""
        return float(self._sum[2])

    @property
    def second_order_sum(self) -> float:
        """V_T: cumulative variance of the played loss under p_t."""
        return float(self._sum[3])

    @property
    def per_action_loss_sums(self) -> np.ndarray:
        n = self.n_actions
        return self._sum[4:4 + n].copy()

    @property
    def per_action_loss_sums_clean(self) -> np.ndarray:
        n = self.n_actions
        return self._sum[4 + n:4 + 2 * n].copy()

    @property
    def suboptimal_mass_sum(self) -> np.ndarray:
        """Sum over rounds of 1 - p_{t,i}, for every candidate i."""
        return self._sum[4 + 2 * self.n_actions:].copy()

    def __repr__(self):
        return (f"RegretLedger(n_actions={self.n_actions}, rounds={self.round_count}, "
                f"player_loss={self.player_loss_sum:.6g})")


def _check_stream(stream: str) -> bool:
    if stream not in ("corrupted", "clean"):
        raise InvalidInputError(f"unknown loss stream {stream!r}")
    return stream == "clean"


def pseudo_regret(ledger: RegretLedger, i_star: int, stream: str = "corrupted") -> float:
    """Realized regret of the trial against the fixed action ``i_star`` (0-based)."""
    if not 0 <= i_star < ledger.n_actions:
        raise InvalidInputError(f"action index {i_star} out of range for N={ledger.n_actions}")
    if _check_stream(stream):
        return ledger.player_loss_sum_clean - float(ledger.per_action_loss_sums_clean[i_star])
    return ledger.player_loss_sum - float(ledger.per_action_loss_sums[i_star])


def regret_vector(ledger: RegretLedger, stream: str = "corrupted") -> np.ndarray:
    """Regret against every action at once."""
    if _check_stream(stream):
        return ledger.player_loss_sum_clean - ledger.per_action_loss_sums_clean
    return ledger.player_loss_sum - ledger.per_action_loss_sums


def max_pseudo_regret(ledger: RegretLedger, stream: str = "corrupted") -> tuple[float, int]:
    """Largest regret over comparators, with the smallest maximizing index."""
    r = regret_vector(ledger, stream)
    i = int(np.argmax(r))
    return float(r[i]), i
