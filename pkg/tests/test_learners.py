import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from cblab.bounds import bound_thm1, bound_thm3
from cblab.core import Bandit, FullInfo, InvalidInputError, NumericError, RegretLedger, max_pseudo_regret
from cblab.learners import (
    FollowTheLeader,
    Hedge,
    TsallisINF,
    adaptive_rate,
    decreasing_rate,
    ftl_predict,
    hedge_predict,
    make_learner,
    parse_learner_name,
    second_order_increment,
    tsallis_normalizer,
    tsallis_predict,
    tsallis_update,
)

# -- Hedge -------------------------------------------------------------------------


def test_hedge_uniform_on_equal_losses():
    np.testing.assert_allclose(hedge_predict([3.0, 3.0, 3.0], 0.7), [1 / 3] * 3, rtol=0, atol=1e-15)


def test_hedge_two_actions_log2():
    np.testing.assert_allclose(hedge_predict([0.0, 1.0], math.log(2)), [2 / 3, 1 / 3], rtol=0, atol=1e-15)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=10), st.floats(1e-3, 5.0), st.floats(-50, 50))
def test_hedge_shift_invariance(cum, eta, c):
    cum = np.array(cum)
    np.testing.assert_allclose(hedge_predict(cum + c, eta), hedge_predict(cum, eta), rtol=0, atol=1e-12)


def test_hedge_no_overflow_after_shift():
    p = hedge_predict([1e6, 1e6 + 700.0, 0.0 + 1e6], 1.0)
    assert np.all(np.isfinite(p)) and abs(p.sum() - 1.0) < 1e-12


# -- rate schedules --------------------------------------------------------------


def test_decreasing_rate_values():
    # sqrt(8 log 4) and sqrt(8 log 4 / 12) at 50 digits
    assert decreasing_rate(1, 4) == pytest.approx(3.3302184446307910, abs=1e-14)
    assert decreasing_rate(12, 4) == pytest.approx(0.96135125773392201, abs=1e-14)


def test_decreasing_rate_monotone():
    t = np.arange(1, 10**5 + 1)
    rates = np.sqrt(8.0 * math.log(4) / t)
    assert np.all(np.diff(rates) < 0)
    assert decreasing_rate(10**5, 4) == rates[-1]


def test_decreasing_rate_errors():
    with pytest.raises(InvalidInputError):
        decreasing_rate(1, 1)
    with pytest.raises(InvalidInputError):
        decreasing_rate(0, 4)


def test_adaptive_rate_values():
    assert adaptive_rate(0.0, 4) == 1.0
    assert adaptive_rate(100.0, 4) == pytest.approx(0.12644668373208617, abs=1e-14)
    big = adaptive_rate(1e9, 4)
    assert 0.0 < big < 1e-3


def test_adaptive_rate_rejects_negative():
    with pytest.raises(InvalidInputError):
        adaptive_rate(-1.0, 4)


# -- second-order increment ------------------------------------------------------


def test_second_order_constant_loss():
    assert second_order_increment([0.2, 0.3, 0.5], [0.4, 0.4, 0.4]) == pytest.approx(0.0, abs=1e-16)


def test_second_order_hand_value():
    assert second_order_increment([0.5, 0.5], [0.0, 1.0]) == 0.25


@given(st.integers(0, 2**32 - 1))
def test_second_order_brute_force(seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(6))
    loss = rng.uniform(size=6)
    mean = sum(pi * li for pi, li in zip(p, loss))
    brute = sum(pi * (li - mean) ** 2 for pi, li in zip(p, loss))
    v = second_order_increment(p, loss)
    assert v == pytest.approx(brute, abs=1e-12)
    assert v <= float(np.min(1.0 - p)) + 1e-12


def test_second_order_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        second_order_increment([0.5, 0.5], [0.0, 1.0, 0.0])


# -- FTL -------------------------------------------------------------------------


def test_ftl_round_one_uniform():
    np.testing.assert_array_equal(ftl_predict([0.0, 0.0, 0.0], 1), [1 / 3] * 3)


def test_ftl_unique_argmin():
    np.testing.assert_array_equal(ftl_predict([3.0, 1.0, 2.0], 2), [0, 1, 0])


def test_ftl_tie_break():
    np.testing.assert_array_equal(ftl_predict([1.0, 1.0, 2.0], 2), [1, 0, 0])


# -- Tsallis-INF -------------------------------------------------------------------


def test_tsallis_uniform_on_equal_estimates():
    np.testing.assert_allclose(tsallis_predict([2.0, 2.0, 2.0, 2.0], 5), [0.25] * 4, atol=1e-9)


def test_tsallis_two_arm_grid_search():
    # grid search for z < 0 with (-z)^-2 + (1 - z)^-2 = 1
    z = np.linspace(-3.0, -1.0, 2_000_001)
    f = np.abs((-z) ** -2.0 + (1.0 - z) ** -2.0 - 1.0)
    zg = z[np.argmin(f)]
    expected = np.array([(-zg) ** -2.0, (1.0 - zg) ** -2.0])
    expected /= expected.sum()
    p = tsallis_predict([0.0, 1.0], 1)
    np.testing.assert_allclose(p, expected, rtol=0, atol=1e-6)
    assert tsallis_normalizer([0.0, 1.0], 1.0) == pytest.approx(-1.1322418823119002, abs=1e-8)


def test_tsallis_update_importance_weight():
    est = tsallis_update([0.0, 0.0], Bandit(1, 1.0), np.array([0.5, 0.5]))
    np.testing.assert_array_equal(est, [0.0, 2.0])


def test_tsallis_normalizer_nonconvergence(monkeypatch):
    import cblab.learners as lr

    monkeypatch.setattr(lr, "TSALLIS_MAX_ITER", 0)
    with pytest.raises(NumericError):
        lr.tsallis_normalizer([0.0, 0.3, 5.0], 1.0)


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1e4), min_size=2, max_size=16), st.integers(1, 10**6))
@example([5.762514163659486e-258, 0.0], 1)
def test_tsallis_output_is_simplex(est, t):
    p = tsallis_predict(est, t)
    assert np.all(p >= 0.0) and abs(p.sum() - 1.0) <= 1e-9
    # smaller estimate never gets less mass; near-equal estimates may round to equal mass
    est = np.array(est)
    lower = est[:, None] < est[None, :]
    assert np.all((p[:, None] >= p[None, :]) | ~lower)
    assert p[int(np.argmin(est))] == p.max()


# -- stateful learners -------------------------------------------------------------


def test_learner_feedback_kinds():
    with pytest.raises(InvalidInputError):
        Hedge(3).update(np.ones(3) / 3, Bandit(0, 1.0))
    with pytest.raises(InvalidInputError):
        FollowTheLeader(3).update(np.ones(3) / 3, Bandit(0, 1.0))
    with pytest.raises(InvalidInputError):
        TsallisINF(3).update(np.ones(3) / 3, FullInfo(np.zeros(3)))


def test_hedge_constructor_errors():
    with pytest.raises(InvalidInputError):
        Hedge(3, "constant")
    with pytest.raises(InvalidInputError):
        Hedge(3, "bogus")
    with pytest.raises(InvalidInputError):
        Hedge(1, "decreasing")


def test_predict_is_pure():
    h = Hedge(4, "adaptive")
    h.update(np.full(4, 0.25), FullInfo(np.array([1.0, 0.0, 0.0, 1.0])))
    np.testing.assert_array_equal(h.predict(), h.predict())


def test_hedge_tracks_second_order_sum():
    h = Hedge(2, "adaptive")
    p = h.predict()
    h.update(p, FullInfo(np.array([0.0, 1.0])))
    assert h.second_order_sum == 0.25
    assert h.rate() == adaptive_rate(0.25, 2)


@pytest.mark.parametrize("name,cls", [("hedge-decreasing", Hedge), ("hedge-adaptive", Hedge),
                                      ("hedge-constant:0.5", Hedge), ("ftl", FollowTheLeader),
                                      ("tsallis-inf", TsallisINF)])
def test_make_learner(name, cls):
    assert isinstance(make_learner(name, 4), cls)


@pytest.mark.parametrize("name", ["hedge", "hedge-constant:x", "hedge-constant:-1", "exp3"])
def test_bad_learner_names(name):
    with pytest.raises(InvalidInputError):
        parse_learner_name(name)


def _play(learner, losses):
    led = RegretLedger(losses.shape[1])
    for loss in losses:
        p = learner.predict()
        led.record(p, loss)
        learner.update(p, FullInfo(loss))
    return led


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 4, 16]), st.integers(1, 400), st.integers(0, 2**32 - 1))
def test_worst_case_bounds_hold_pointwise(n, T, seed):
    losses = np.random.default_rng(seed).uniform(size=(T, n))
    regret, _ = max_pseudo_regret(_play(Hedge(n, "decreasing"), losses))
    assert regret <= bound_thm1(n, T) * (1 + 1e-9)
    led = _play(Hedge(n, "adaptive"), losses)
    assert max_pseudo_regret(led)[0] <= bound_thm3(n, led.second_order_sum) * (1 + 1e-9)


def test_learners_stay_valid_for_long_horizons():
    rng = np.random.default_rng(1)
    for learner in (Hedge(4, "decreasing"), Hedge(4, "adaptive"), Hedge(4, "constant", 50.0)):
        for _ in range(2000):
            loss = (rng.uniform(size=4) < [0.3, 0.5, 0.5, 0.5]).astype(float)
            p = learner.predict()
            assert np.all(np.isfinite(p)) and abs(p.sum() - 1.0) < 1e-12
            learner.update(p, FullInfo(loss))
