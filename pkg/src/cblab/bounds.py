"""Closed-form regret bounds and numeric checks of the supporting inequalities.

Every ``*_check`` returns a :class:`Check` triple so near-violations caused
by rounding stay visible; :func:`violates` applies the shared relative
tolerance. :func:`run_verification` drives the randomized suites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import InvalidInputError, entropy
from .environments import build_attack_schedule
from .learners import adaptive_rate, decreasing_rate, hedge_predict

REL_TOL = 1e-9


class Check(NamedTuple):
    lhs: float
    rhs: float
    margin: float  # rhs - lhs


def make_check(lhs: float, rhs: float) -> Check:
    return Check(float(lhs), float(rhs), float(rhs - lhs))


def violates(check: Check, rel_tol: float = REL_TOL) -> bool:
    return check.lhs > check.rhs + rel_tol * max(1.0, abs(check.rhs))


def relative_margin(check: Check) -> float:
    return check.margin / max(1.0, abs(check.rhs))


def _log_n(n):
    if n < 2:
        raise InvalidInputError("bounds with log N need N >= 2")
    return math.log(n)


def _gap(delta):
    if not delta > 0.0:
        raise InvalidInputError("gap delta must be positive")
    return delta


# -- regret bounds ----------------------------------------------------------

def bound_thm1(n: int, T: int) -> float:
    """Worst-case bound of decreasing Hedge: sqrt(2 T log N) + log N / 8."""
    if T < 0:
        raise InvalidInputError("horizon must be non-negative")
    ln = _log_n(n)
    return math.sqrt(2.0 * T * ln) + ln / 8.0


def bound_thm2(n: int, delta: float, C: float) -> float:
    """Self-bounding bound of decreasing Hedge: 33 + 100 log N / delta + 10 sqrt(C log N / delta)."""
    ln = _log_n(n)
    delta = _gap(delta)
    if delta > 1.0 or C < 0.0:
        raise InvalidInputError("need delta <= 1 and C >= 0")
    return 33.0 + 100.0 * ln / delta + 10.0 * math.sqrt(C * ln / delta)


def bound_thm3(n: int, v_total: float) -> float:
    """Second-order bound: 4 sqrt(V_T log N) + 2 log N + 1/2."""
    if v_total < 0.0:
        raise InvalidInputError("V_T must be non-negative")
    ln = _log_n(n)
    return 4.0 * math.sqrt(v_total * ln) + 2.0 * ln + 0.5


def bound_thm4(A: float, B: float, delta: float, C: float) -> float:
    """Pseudo-regret implied by R <= sqrt(A sum(1 - p_{i*})) + B under the self-bounding constraint."""
    delta = _gap(delta)
    if min(A, B, C) < 0.0:
        raise InvalidInputError("A, B and C must be non-negative")
    return A / delta + B + math.sqrt(A * (B + C) / (2.0 * delta))


def bound_corollary1(n: int, delta: float, C: float) -> float:
    """Adaptive-Hedge bound: 16 log N / delta + 4 sqrt((3 log N + C) log N / delta) + 3 log N."""
    ln = _log_n(n)
    delta = _gap(delta)
    if C < 0.0:
        raise InvalidInputError("C must be non-negative")
    return 16.0 * ln / delta + 4.0 * math.sqrt((3.0 * ln + C) * ln / delta) + 3.0 * ln


def lower_bound_value(delta: float, n: int, C: float, T: int, problem: str = "expert") -> float:
    """Guaranteed regret of the constructive attack selected for (delta, N, C, T)."""
    schedule = build_attack_schedule(delta, n, C, T, problem)
    gap = schedule.effective_gap
    if problem == "expert":
        return math.log(n) / (256.0 * gap)
    return n / (32.0 * gap)


def am_gm_check(n: int, delta: float, C: float) -> Check:
    """log N/delta + sqrt(C log N/delta) <= log N/delta + (C + log N/delta)/2."""
    x = _log_n(n) / _gap(delta)
    return make_check(x + math.sqrt(C * x), x + 0.5 * (C + x))


# -- Lemma-1 style trajectory bound ----------------------------------------

def g(x):
    """exp(x) - x - 1, evaluated without cancellation near 0."""
    x = np.asarray(x, dtype=np.float64)
    return np.expm1(x) - x


def _entropy_rows(P):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0.0, -P * np.log(P), 0.0)
    return terms.sum(axis=1)


def lemma1_rhs(probs, losses, etas, alpha=None) -> float:
    """Right-hand side of the FTRL regret bound for exponential weights.

    ``probs`` holds p_1 .. p_{T+1} (shape ``(T+1, N)``), ``losses`` holds
    l_1 .. l_T and ``etas`` holds eta_1 .. eta_{T+1}, which must be
    non-increasing. ``alpha`` defaults to the played loss l_t . p_t.
    """
    P = np.asarray(probs, dtype=np.float64)
    L = np.asarray(losses, dtype=np.float64).reshape(-1, P.shape[1])
    eta = np.asarray(etas, dtype=np.float64)
    T, n = L.shape
    if P.shape[0] != T + 1 or eta.shape[0] != T + 1:
        raise InvalidInputError("need T+1 probability vectors and T+1 learning rates")
    if np.any(eta <= 0.0) or np.any(np.diff(eta) > 0.0):
        raise InvalidInputError("learning rates must be positive and non-increasing")
    head = math.log(n) / eta[0]
    if T == 0:
        return head
    Pt = P[:T]
    a = np.einsum("ti,ti->t", L, Pt) if alpha is None else np.asarray(alpha, dtype=np.float64)
    et = eta[:T]
    stab = (Pt * g(et[:, None] * (a[:, None] - L))).sum(axis=1) / et
    pen = (1.0 / eta[1:] - 1.0 / et) * _entropy_rows(P[1:])
    return float(head + math.fsum(stab) + math.fsum(pen))


def hedge_trajectory(losses, schedule: str = "decreasing", eta: float | None = None):
    """Replay Hedge on a loss matrix; returns (probs (T+1,N), etas (T+1,))."""
    L = np.asarray(losses, dtype=np.float64)
    T, n = L.shape
    cum = np.zeros(n)
    v = 0.0
    probs = np.empty((T + 1, n))
    etas = np.empty(T + 1)
    for t in range(T + 1):
        if schedule == "decreasing":
            e = decreasing_rate(t + 1, n)
        elif schedule == "adaptive":
            e = adaptive_rate(v, n)
        else:
            e = float(eta)
        p = hedge_predict(cum, e)
        probs[t], etas[t] = p, e
        if t < T:
            m = float(L[t] @ p)
            v += float(p @ (L[t] - m) ** 2)
            cum = cum + L[t]
    return probs, etas


def lemma1_check(losses, schedule: str = "decreasing", eta=None, alpha=None) -> Check:
    """Worst comparator's realized regret against the trajectory bound."""
    L = np.asarray(losses, dtype=np.float64)
    probs, etas = hedge_trajectory(L, schedule, eta)
    played = np.einsum("ti,ti->t", L, probs[:-1])
    regret = math.fsum(played) - L.sum(axis=0).min()
    if isinstance(alpha, str):
        alpha = {"played": None, "zero": np.zeros(len(L))}[alpha]
    return make_check(regret, lemma1_rhs(probs, L, etas, alpha))


# -- auxiliary inequalities --------------------------------------------------

def entropy_bound_rhs(p, i_star: int) -> float:
    """(1 - p_{i*}) (1 + log((N - 1) / (1 - p_{i*}))); 0 at the point mass."""
    p = np.asarray(p, dtype=np.float64)
    n = p.size
    if n < 2:
        raise InvalidInputError("entropy bound needs N >= 2")
    q = 1.0 - float(p[i_star])
    if q <= 0.0:
        return 0.0
    return q * (1.0 + math.log((n - 1) / q))


def entropy_bound_check(p, i_star: int) -> Check:
    return make_check(entropy(p), entropy_bound_rhs(p, i_star))


def sum_inequality_check(a: float, b: float, x) -> Check:
    """sum_t x_t / sqrt(t) (a - b sqrt(t) - log x_t) <= (2 a^2 + 1) / b + b."""
    x = np.asarray(x, dtype=np.float64)
    if not (a > 0.0 and b > 0.0):
        raise InvalidInputError("need a, b > 0")
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise InvalidInputError("x_t must lie in (0, 1)")
    st = np.sqrt(np.arange(1, x.size + 1, dtype=np.float64))
    lhs = math.fsum(x / st * (a - b * st - np.log(x)))
    return make_check(lhs, (2.0 * a * a + 1.0) / b + b)


def worst_case_x(a: float, b: float, T: int) -> np.ndarray:
    """Per-term maximizer of x (c_t - log x) over (0, 1), with c_t = a - b sqrt(t)."""
    c = a - b * np.sqrt(np.arange(1, T + 1, dtype=np.float64))
    x = np.exp(np.minimum(c - 1.0, 0.0))
    # keep x inside the open interval; exp underflows to 0 for very negative c
    return np.clip(x, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))


def max_lemma_bound(c: float) -> float:
    """Upper bound on max_{x in (0,1]} x (c - log x): exp(c - 1) if c <= 1 else c."""
    return math.exp(c - 1.0) if c <= 1.0 else float(c)


def max_lemma_check(c: float, grid_points: int = 10**6) -> Check:
    """Compare the bound against a uniform grid on (0, 1] (endpoint included)."""
    x = np.linspace(1.0 / grid_points, 1.0, grid_points)
    return make_check(float(np.max(x * (c - np.log(x)))), max_lemma_bound(c))


# -- randomized suites ------------------------------------------------------

@dataclass
class SuiteReport:
    name: str
    cases: int = 0
    violations: int = 0
    worst_margin: float = math.inf
    worst_inputs: dict = field(default_factory=dict)
    first_violation: dict | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.cases > 0

    def add(self, check: Check, inputs: dict) -> None:
        self.cases += 1
        m = relative_margin(check)
        if m < self.worst_margin:
            self.worst_margin = m
            self.worst_inputs = dict(inputs, lhs=check.lhs, rhs=check.rhs)
        if violates(check):
            self.violations += 1
            if self.first_violation is None:
                self.first_violation = dict(inputs, lhs=check.lhs, rhs=check.rhs)


SUITES = ("lemma1", "entropy", "sum-inequality", "max-lemma", "am-gm")


def _random_losses(rng, T, n):
    kind = rng.integers(4)
    if kind == 0:
        return rng.random((T, n))
    if kind == 1:
        means = rng.random(n)
        return (rng.random((T, n)) < means).astype(float)
    if kind == 2:
        # best action switches every block
        L = (rng.random((T, n)) < 0.5).astype(float)
        block = max(1, T // 4)
        for s in range(0, T, block):
            L[s:s + block, rng.integers(n)] = 0.0
        return L
    L = np.zeros((T, n))
    L[:, 0] = np.r_[0.5, np.tile([0.0, 1.0], T)][:T]
    L[:, 1:] = np.r_[0.0, np.tile([1.0, 0.0], T)][:T, None]
    return L


def suite_lemma1(rng, trajectories: int, fault: float = 1.0) -> SuiteReport:
    rep = SuiteReport("lemma1")
    for k in range(trajectories):
        n = int(rng.integers(2, 17))
        T = int(rng.integers(1, 201))
        L = _random_losses(rng, T, n)
        schedule = ("decreasing", "adaptive", "constant")[k % 3]
        eta = float(rng.uniform(0.05, 3.0)) if schedule == "constant" else None
        alpha = ("played", "zero")[(k // 3) % 2]
        c = lemma1_check(L, schedule, eta, alpha)
        c = make_check(c.lhs, c.rhs * fault)
        rep.add(c, dict(seed_index=k, N=n, T=T, schedule=schedule, eta=eta, alpha=alpha))
    return rep


def suite_entropy(rng, samples: int, fault: float = 1.0) -> SuiteReport:
    rep = SuiteReport("entropy")
    for k in range(samples):
        n = int(rng.integers(2, 17))
        conc = (0.05, 1.0, 20.0)[k % 3]
        p = rng.dirichlet(np.full(n, conc))
        i = int(rng.integers(n))
        c = entropy_bound_check(p, i)
        rep.add(make_check(c.lhs, c.rhs * fault), dict(p=p.tolist(), i_star=i))
    # degenerate and uniform points
    for n in range(2, 17):
        for p in (np.full(n, 1.0 / n), np.eye(n)[0]):
            rep.add(entropy_bound_check(p, 0), dict(p=p.tolist(), i_star=0))
    return rep


def suite_sum_inequality(rng, grid_points: int, horizon: int = 10**4, fault: float = 1.0) -> SuiteReport:
    rep = SuiteReport("sum-inequality")
    side = max(2, int(round(math.sqrt(grid_points))))
    grid = np.geomspace(0.1, 10.0, side)
    for a in grid:
        for b in grid:
            x = worst_case_x(a, b, horizon)
            c = sum_inequality_check(a, b, x)
            rep.add(make_check(c.lhs, c.rhs * fault), dict(a=float(a), b=float(b), T=horizon, x="worst-case"))
    # random x as well, shorter horizons
    for k in range(side):
        a, b = (float(v) for v in np.exp(rng.uniform(math.log(0.1), math.log(10.0), 2)))
        T = int(rng.integers(1, 1001))
        x = rng.uniform(1e-6, 1.0 - 1e-9, T)
        c = sum_inequality_check(a, b, x)
        rep.add(make_check(c.lhs, c.rhs * fault), dict(a=a, b=b, T=T, x="random", index=k))
    return rep


def suite_max_lemma(values: int = 20, grid_points: int = 10**6, fault: float = 1.0) -> SuiteReport:
    rep = SuiteReport("max-lemma")
    for c in np.linspace(-3.0, 4.0, values):
        chk = max_lemma_check(float(c), grid_points)
        rep.add(make_check(chk.lhs, chk.rhs * fault), dict(c=float(c), grid=grid_points))
    return rep


def suite_am_gm(rng, samples: int, fault: float = 1.0) -> SuiteReport:
    rep = SuiteReport("am-gm")
    for _ in range(samples):
        n = int(rng.integers(2, 1025))
        delta = float(rng.uniform(1e-3, 1.0))
        C = float(np.exp(rng.uniform(-5, 10)))
        c = am_gm_check(n, delta, C)
        rep.add(make_check(c.lhs, c.rhs * fault), dict(N=n, delta=delta, C=C))
    return rep


def run_verification(samples: int = 10**4, seed: int = 0, fault: str | None = None,
                     suites=SUITES) -> list[SuiteReport]:
    """Run the randomized inequality suites.

    ``samples`` is the entropy sample count; the Lemma-1 trajectory count and
    the (a, b) grid size are ``samples // 10``. ``fault`` names a suite whose
    right-hand side is halved, to exercise the failure path.
    """
    if fault is not None and fault not in SUITES:
        raise InvalidInputError(f"unknown suite {fault!r}")
    scale = {s: (0.5 if s == fault else 1.0) for s in SUITES}
    tenth = max(1, samples // 10)
    reports = []
    for s in suites:
        sub = np.random.default_rng([seed, SUITES.index(s)])
        if s == "lemma1":
            reports.append(suite_lemma1(sub, tenth, scale[s]))
        elif s == "entropy":
            reports.append(suite_entropy(sub, samples, scale[s]))
        elif s == "sum-inequality":
            reports.append(suite_sum_inequality(sub, tenth, fault=scale[s]))
        elif s == "max-lemma":
            reports.append(suite_max_lemma(fault=scale[s]))
        elif s == "am-gm":
            reports.append(suite_am_gm(sub, samples, scale[s]))
        else:
            raise InvalidInputError(f"unknown suite {s!r}")
    return reports
