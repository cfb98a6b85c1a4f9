import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cblab.core import FullInfo, NumericError, RegretLedger, max_pseudo_regret, pseudo_regret
from cblab.environments import ReplayEnvironment
from cblab.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    aggregate,
    apply_overrides,
    config_from_mapping,
    resolve_key,
    run_experiment,
    run_trial,
    sweep,
    sweep_points,
    write_results_csv,
    write_trace_jsonl,
)
from cblab.learners import Hedge, make_learner

ENGINE_CASES = [
    ("hedge-decreasing", "stochastic", "expert", False),
    ("hedge-adaptive", "corrupted:gap-closing:30", "expert", False),
    ("hedge-constant:0.3", "corrupted:none:5", "expert", False),
    ("ftl", "attack-schedule", "expert", False),
    ("tsallis-inf", "corrupted:gap-closing:40", "mab", False),
    ("tsallis-inf", "corrupted:gap-closing:40", "mab", True),
    ("tsallis-inf", "attack-schedule", "mab", False),
]


def _cfg(**kw):
    base = dict(N=4, T=1500, delta=0.2, C=100.0, seeds=3)
    base.update(kw)
    return ExperimentConfig(**base)


def _same_trial(a, b, tol):
    sa, _ = a.ledger.buffers
    sb, _ = b.ledger.buffers
    np.testing.assert_allclose(sa, sb, rtol=0, atol=tol)
    assert a.corrupted_rounds == b.corrupted_rounds
    assert a.spend == pytest.approx(b.spend, abs=1e-12)


@pytest.mark.parametrize("learner,env,problem,targeted", ENGINE_CASES)
def test_kernel_matches_reference(learner, env, problem, targeted):
    cfg = _cfg(learner=learner, environment=env, problem=problem, targeted=targeted, record_trajectory=True)
    for seed in range(2):
        k = run_trial(cfg.with_(engine="kernel"), seed)
        r = run_trial(cfg.with_(engine="reference"), seed)
        _same_trial(k, r, 1e-12)
        for key in ("p", "loss", "clean_loss", "v", "eta"):
            np.testing.assert_allclose(k.trace[key], r.trace[key], rtol=0, atol=1e-12)
        np.testing.assert_array_equal(k.trace["action"], r.trace["action"])


def test_kernel_matches_reference_on_replay(tmp_path):
    losses = np.random.default_rng(0).uniform(size=(300, 3))
    path = tmp_path / "l.csv"
    np.savetxt(path, losses, delimiter=",")
    cfg = ExperimentConfig(environment=f"adversarial-replay:{path}", N=3, T=300, seeds=1)
    _same_trial(run_trial(cfg.with_(engine="kernel"), 0), run_trial(cfg.with_(engine="reference"), 0), 1e-12)


def test_sequential_reference_loop_oracle():
    # independent, minimal re-implementation of the round loop
    cfg = ExperimentConfig(learner="ftl", N=2, T=10**4, delta=0.25, seeds=100)
    res = run_experiment(cfg)
    regrets = []
    for seed in range(100):
        rng = np.random.Generator(np.random.Philox(key=np.array([0, seed], dtype=np.uint64)))
        cum = np.zeros(2)
        played = 0.0
        for t in range(1, cfg.T + 1):
            p = np.full(2, 0.5) if t == 1 else np.eye(2)[int(np.argmin(cum))]
            u = rng.random(3)
            loss = (u[:2] < [0.25, 0.5]).astype(float)
            played += float(loss @ p)
            cum += loss
        regrets.append(played - cum)
    mean = np.mean(regrets, axis=0)
    np.testing.assert_allclose(res.mean_regret, mean, rtol=0, atol=1e-12)
    assert res.max_regret < 10 / 0.25


def test_ftl_zero_regret_on_constant_replay():
    losses = np.tile([0.7, 0.2, 0.9], (50, 1))
    cfg = ExperimentConfig(learner="ftl", environment=lambda: ReplayEnvironment(losses), N=3, T=50, seeds=1)
    rec = run_trial(cfg, 0)
    # only the uniform first round costs anything
    assert pseudo_regret(rec.ledger, 1) == pytest.approx(float(np.mean([0.7, 0.2, 0.9]) - 0.2), abs=1e-12)


def test_single_round_matches_core():
    cfg = ExperimentConfig(N=4, T=1, delta=0.2, seeds=1, record_trajectory=True)
    rec = run_trial(cfg, 5)
    led = RegretLedger(4)
    led.record(rec.trace["p"][0], rec.trace["loss"][0])
    for i in range(4):
        assert pseudo_regret(rec.ledger, i) == pseudo_regret(led, i)


def test_trial_determinism():
    cfg = _cfg(T=10**4, record_trajectory=True)
    a, b = run_trial(cfg, 11), run_trial(cfg, 11)
    np.testing.assert_array_equal(a.ledger.buffers[0], b.ledger.buffers[0])
    for key in a.trace:
        np.testing.assert_array_equal(a.trace[key], b.trace[key])
    c = run_trial(cfg.with_(base_seed=1), 11)
    assert not np.array_equal(a.ledger.buffers[0], c.ledger.buffers[0])


def test_thread_count_invariance():
    cfg = _cfg(environment="corrupted:gap-closing", seeds=8)
    one = run_experiment(cfg, threads=1)
    four = run_experiment(cfg, threads=4)
    np.testing.assert_array_equal(one.mean_regret, four.mean_regret)
    assert one.stderr == four.stderr


def test_aggregate_order_independent():
    cfg = _cfg(seeds=6)
    trials = [run_trial(cfg, s) for s in range(6)]
    a = aggregate(cfg, trials)
    b = aggregate(cfg, list(reversed(trials)))
    np.testing.assert_array_equal(a.mean_regret, b.mean_regret)
    assert a.stderr == b.stderr and a.i_star == b.i_star


def test_single_seed_aggregate():
    cfg = _cfg(seeds=1)
    res = run_experiment(cfg)
    rec = run_trial(cfg, 0)
    value, idx = max_pseudo_regret(rec.ledger)
    assert res.stderr == 0.0
    assert res.max_regret == value and res.i_star == idx


def test_aggregate_invariants():
    res = run_experiment(_cfg(environment="corrupted:gap-closing", seeds=5))
    assert res.stderr >= 0.0
    assert -2 * res.config.C <= res.max_regret <= res.config.T
    assert res.mean_spend <= res.config.C + 1e-12


def test_custom_learner_factory_uses_reference_engine():
    cfg = _cfg(learner=lambda: Hedge(4, "decreasing"), seeds=2)
    a = run_experiment(cfg)
    b = run_experiment(_cfg(seeds=2))
    np.testing.assert_allclose(a.mean_regret, b.mean_regret, rtol=0, atol=1e-12)
    with pytest.raises(ConfigError):
        run_trial(cfg.with_(engine="kernel"), 0)


def test_numeric_failure_carries_round(monkeypatch):
    class Broken(Hedge):
        def predict(self):
            if self.round == 3:
                raise NumericError("boom")
            return super().predict()

    cfg = _cfg(learner=lambda: Broken(4), seeds=1)
    with pytest.raises(NumericError, match="round 4"):
        run_trial(cfg, 0)
    with pytest.raises(ExperimentError) as info:
        run_experiment(cfg.with_(seeds=2), threads=2)
    assert info.value.completed == []


def test_partial_results_on_failure():
    calls = {"n": 0}

    class FailsSecond(Hedge):
        def __init__(self):
            super().__init__(4)
            calls["n"] += 1
            self.doomed = calls["n"] == 2

        def predict(self):
            if self.doomed:
                raise NumericError("late failure")
            return super().predict()

    with pytest.raises(ExperimentError) as info:
        run_experiment(_cfg(learner=FailsSecond, seeds=3), threads=1)
    assert [r.seed for r in info.value.completed] == [0]


def test_bandit_needs_bandit_learner():
    with pytest.raises(ConfigError):
        ExperimentConfig(learner="hedge-decreasing", problem="mab")
    with pytest.raises(ConfigError):
        run_trial(ExperimentConfig(learner=lambda: Hedge(4), problem="mab", T=5, seeds=1), 0)


@pytest.mark.parametrize("kw", [dict(seeds=0), dict(T=0), dict(engine="gpu"), dict(threads=0),
                                dict(problem="x"), dict(sweep={"delta": []}), dict(sweep={"eta": [1]}),
                                dict(record_trajectory=True, T=10**5 + 1)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_long_horizon_learners_stay_finite():
    for learner, problem in (("hedge-decreasing", "expert"), ("hedge-adaptive", "expert"),
                             ("ftl", "expert"), ("tsallis-inf", "mab")):
        cfg = ExperimentConfig(learner=learner, problem=problem, N=4, T=10**6, delta=0.1, seeds=1)
        rec = run_trial(cfg, 0)
        sums, _ = rec.ledger.buffers
        assert np.all(np.isfinite(sums))
        assert rec.ledger.player_loss_sum <= 10**6


# -- sweeps -----------------------------------------------------------------------------


def test_sweep_points_lexicographic():
    cfg = _cfg(sweep={"C": [0.0, 10.0], "delta": [0.1, 0.2]})
    assert sweep_points(cfg) == [dict(delta=0.1, C=0.0), dict(delta=0.1, C=10.0),
                                 dict(delta=0.2, C=0.0), dict(delta=0.2, C=10.0)]


def test_single_point_sweep_equals_run():
    cfg = _cfg(sweep={"T": [1500]})
    (res,) = sweep(cfg)
    np.testing.assert_array_equal(res.mean_regret, run_experiment(cfg.with_(sweep={})).mean_regret)


def test_sweep_cap():
    cfg = _cfg(sweep={"C": list(range(20)), "delta": [0.1, 0.2]}, sweep_cap=10)
    with pytest.raises(ConfigError, match="learner rounds"):
        sweep(cfg)


def test_sweep_overrides_budget_in_name():
    cfg = _cfg(environment="corrupted:gap-closing:5", sweep={"C": [0.0, 50.0]}, seeds=2)
    res = sweep(cfg)
    assert [r.mean_spend for r in res] == pytest.approx([0.0, 50.0])


def test_regret_nondecreasing_in_budget():
    cfg = ExperimentConfig(environment="corrupted:gap-closing", N=4, T=5000, delta=0.2, seeds=50,
                           sweep={"C": [0.0, 50.0, 100.0, 200.0]})
    res = sweep(cfg)
    for lo, hi in zip(res, res[1:]):
        assert hi.max_regret >= lo.max_regret - 2 * math.hypot(lo.stderr, hi.stderr)


def test_delta_sweep_shape():
    cfg = ExperimentConfig(N=8, T=20000, seeds=30, sweep={"delta": [0.05, 0.1, 0.2, 0.4]})
    scaled = [r.max_regret * r.config.delta / math.log(8) for r in sweep(cfg)]
    assert max(scaled) / min(scaled) <= 3.0


# -- outputs ------------------------------------------------------------------------------


def test_csv_schema_and_precision(tmp_path):
    res = run_experiment(_cfg(environment="corrupted:gap-closing", seeds=2))
    path = tmp_path / "out.csv"
    write_results_csv([res], path)
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    rows = list(csv.DictReader(text.splitlines()))
    assert len(rows) == 1
    assert float(rows[0]["mean_regret"]) == res.max_regret
    assert rows[0]["env"] == "corrupted:gap-closing" and rows[0]["C"] == "100"


def test_csv_nan_for_replay(tmp_path):
    losses = tmp_path / "l.csv"
    np.savetxt(losses, np.random.default_rng(0).uniform(size=(10, 2)), delimiter=",")
    res = run_experiment(ExperimentConfig(environment=f"adversarial-replay:{losses}", N=2, T=10, seeds=1))
    path = tmp_path / "out.csv"
    write_results_csv([res], path)
    row = next(csv.DictReader(path.open()))
    assert row["bound_thm2"] == "nan" and row["lower_bound_value"] == "nan"


def test_jsonl_trace(tmp_path):
    res = run_experiment(_cfg(T=20, seeds=2, record_trajectory=True))
    path = tmp_path / "t.jsonl"
    write_trace_jsonl(res.trials, path)
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert [x["seed"] for x in lines] == [0, 1]
    assert len(lines[0]["p"]) == 20 and len(lines[0]["loss"][0]) == 4


# -- configuration -----------------------------------------------------------------------


def test_config_mapping_and_overrides():
    data = {"harness": {"N": 8, "T": 100, "seed": 3}, "learner": {"name": "ftl"},
            "environment": {"name": "stochastic", "delta": 0.1}, "sweep": {"C": [0, 1]}}
    cfg = config_from_mapping(apply_overrides(data, [("T", 50), ("learner", "hedge-adaptive")]))
    assert (cfg.N, cfg.T, cfg.base_seed, cfg.learner, cfg.delta) == (8, 50, 3, "hedge-adaptive", 0.1)
    assert cfg.sweep == {"C": [0, 1]}


@pytest.mark.parametrize("key", ["bogus", "harness.bogus", "sweep.eta", "name"])
def test_resolve_key_rejects(key):
    with pytest.raises(ConfigError):
        resolve_key(key)


def test_config_mapping_rejects_unknown_sections():
    with pytest.raises(ConfigError):
        config_from_mapping({"plot": {"x": 1}})


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trial_matches_manual_expert_loop(seed):
    losses = np.random.default_rng(seed).uniform(size=(30, 3))
    cfg = ExperimentConfig(learner="hedge-adaptive", environment=lambda: ReplayEnvironment(losses),
                           N=3, T=30, seeds=1)
    rec = run_trial(cfg, 0)
    h = make_learner("hedge-adaptive", 3)
    played = 0.0
    for loss in losses:
        p = h.predict()
        played += math.fsum(p * loss)
        h.update(p, FullInfo(loss))
    assert rec.ledger.player_loss_sum == pytest.approx(played, abs=1e-12)
