"""Compiled trial loop for the built-in learners and environments.

Mirrors :func:`cblab.harness._reference_trial` operation for operation; the
two must stay in lockstep (tests compare them to 1e-12).
"""

import math

import numpy as np
from numba import njit

HEDGE_CONSTANT, HEDGE_DECREASING, HEDGE_ADAPTIVE, FTL, TSALLIS = range(5)
LEARNER_CODES = {
    "hedge-constant": HEDGE_CONSTANT,
    "hedge-decreasing": HEDGE_DECREASING,
    "hedge-adaptive": HEDGE_ADAPTIVE,
    "ftl": FTL,
    "tsallis-inf": TSALLIS,
}

OK, TSALLIS_DIVERGED = 0, 1

_ADAPTIVE_CONST = 2.0 * (math.sqrt(2.0) - 1.0) / (math.e - 2.0)
_BUDGET_TOL = 1e-12
_TSALLIS_TOL = 1e-9
_TSALLIS_MAX_ITER = 200


@njit(cache=True, nogil=True)
def _tsallis_mass(est, z, eta):
    s = 0.0
    for i in range(est.shape[0]):
        x = eta * (est[i] - z)
        s += 1.0 / (x * x)
    return s


@njit(cache=True, nogil=True)
def _tsallis_normalizer(est, eta):
    n = est.shape[0]
    m = est.min()
    lo = m - math.sqrt(n) / eta
    hi = m - 1.0 / eta
    f = _tsallis_mass(est, lo, eta) - 1.0
    if abs(f) <= _TSALLIS_TOL:
        return lo, True
    f = _tsallis_mass(est, hi, eta) - 1.0
    if abs(f) <= _TSALLIS_TOL:
        return hi, True
    for _ in range(_TSALLIS_MAX_ITER):
        mid = 0.5 * (lo + hi)
        f = _tsallis_mass(est, mid, eta) - 1.0
        if abs(f) <= _TSALLIS_TOL:
            return mid, True
        if f < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


@njit(cache=True, nogil=True)
def _draw(p, u):
    c = 0.0
    last = 0
    for i in range(p.shape[0]):
        c += p[i]
        if p[i] > 0.0:
            last = i
        if u < c:
            return i
    return last


@njit(cache=True, nogil=True)
def run_trial_kernel(gen, learner, eta_const, n, T, mab,
                     i_star, clean_delta, attack_delta, attack_until, budget, targeted,
                     replay, record, tr_p, tr_loss, tr_clean, tr_action, tr_v, tr_eta):
    """Play ``T`` rounds; returns (status, failed_round, sums, comp, spent, corrupted_rounds).

    ``replay`` of shape (T', N) with T' > 0 selects the replay environment;
    otherwise losses are Bernoulli with the coupling of the environments module.
    ``attack_until`` < 0 means the attack window never closes.
    """
    size = 4 + 3 * n
    sums = np.zeros(size)
    comp = np.zeros(size)
    inc = np.empty(size)
    cum = np.zeros(n)
    p = np.empty(n)
    u = np.empty(n + 1)
    clean = np.empty(n)
    loss = np.empty(n)
    v_learner = 0.0
    spent = 0.0
    spent_c = 0.0
    corrupted = 0
    use_replay = replay.shape[0] > 0
    logn = math.log(n)
    cost = clean_delta - attack_delta

    for t in range(1, T + 1):
        # predict
        eta = math.inf
        if learner == FTL:
            if t == 1:
                for i in range(n):
                    p[i] = 1.0 / n
            else:
                j = 0
                for i in range(1, n):
                    if cum[i] < cum[j]:
                        j = i
                for i in range(n):
                    p[i] = 0.0
                p[j] = 1.0
        elif learner == TSALLIS:
            eta = 1.0 / math.sqrt(t)
            z, ok = _tsallis_normalizer(cum, eta)
            if not ok:
                return TSALLIS_DIVERGED, t, sums, comp, spent, corrupted
            s = 0.0
            for i in range(n):
                x = eta * (cum[i] - z)
                p[i] = 1.0 / (x * x)
                s += p[i]
            for i in range(n):
                p[i] = p[i] / s
        else:
            if learner == HEDGE_CONSTANT:
                eta = eta_const
            elif learner == HEDGE_DECREASING:
                eta = math.sqrt(8.0 * logn / t)
            elif v_learner == 0.0:
                eta = 1.0
            else:
                eta = min(1.0, math.sqrt(_ADAPTIVE_CONST * logn / v_learner))
            m = cum.min()
            s = 0.0
            for i in range(n):
                p[i] = math.exp(-eta * (cum[i] - m))
                s += p[i]
            for i in range(n):
                p[i] = p[i] / s

        for i in range(n + 1):
            u[i] = gen.random()

        action = -1
        if mab and targeted:
            action = _draw(p, u[n])

        # environment
        if use_replay:
            for i in range(n):
                clean[i] = replay[t - 1, i]
                loss[i] = clean[i]
        else:
            for i in range(n):
                mu = 0.5 - clean_delta if i == i_star else 0.5
                clean[i] = 1.0 if u[i] < mu else 0.0
                loss[i] = clean[i]
            fire = cost > 0.0 and (attack_until < 0 or t <= attack_until)
            if fire and targeted:
                fire = action == i_star
            if fire and spent + cost <= budget + _BUDGET_TOL:
                loss[i_star] = 1.0 if u[i_star] < 0.5 - attack_delta else 0.0
                y = cost - spent_c
                tt = spent + y
                spent_c = (tt - spent) - y
                spent = tt
                corrupted += 1

        if mab and not targeted:
            action = _draw(p, u[n])

        # ledger
        mean = 0.0
        mean_clean = 0.0
        for i in range(n):
            mean += loss[i] * p[i]
            mean_clean += clean[i] * p[i]
        var = 0.0
        for i in range(n):
            var += p[i] * (loss[i] - mean) ** 2
        inc[0] = mean
        inc[1] = mean_clean
        inc[2] = loss[action] if mab else 0.0
        inc[3] = var
        for i in range(n):
            inc[4 + i] = loss[i]
            inc[4 + n + i] = clean[i]
            inc[4 + 2 * n + i] = 1.0 - p[i]
        for k in range(size):
            y = inc[k] - comp[k]
            tt = sums[k] + y
            comp[k] = (tt - sums[k]) - y
            sums[k] = tt

        if record:
            for i in range(n):
                tr_p[t - 1, i] = p[i]
                tr_loss[t - 1, i] = loss[i]
                tr_clean[t - 1, i] = clean[i]
            tr_action[t - 1] = action
            tr_v[t - 1] = var
            tr_eta[t - 1] = eta

        # learner update
        if learner == TSALLIS:
            cum[action] += loss[action] / p[action]
        else:
            v_learner += var
            for i in range(n):
                cum[i] += loss[i]

    return OK, 0, sums, comp, spent, corrupted
