"""Seeded Monte Carlo engine: trials, aggregation, sweeps, CSV and trace output.

A trial is fully determined by ``(config, seed)``. Its random stream is a
Philox generator keyed by ``(config.base_seed, seed)``; round ``t`` consumes
the ``N + 1`` doubles at stream offset ``(t - 1) * (N + 1)``: ``N`` for the
loss coupling and one for the bandit draw. Two engines run trials:

* ``"kernel"``: the compiled loop in :mod:`cblab._kernels`, for built-in
  learners and environments;
* ``"reference"``: a plain Python loop over the learner/environment objects,
  which also runs custom environments and strategies.

``"auto"`` picks the kernel whenever it can.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import bounds
from .core import Bandit, FullInfo, InvalidInputError, NumericError, RegretLedger
from .environments import bandit_draw, make_environment
from .learners import make_learner, parse_learner_name

CSV_HEADER = (
    "experiment_id", "problem", "learner", "env", "N", "T", "delta", "C", "seed_count", "i_star",
    "mean_regret", "stderr", "mean_regret_clean", "mean_subopt_mass", "mean_spend",
    "bound_thm1", "bound_thm2", "bound_thm3", "bound_cor1", "lower_bound_value",
)
SWEEP_AXES = ("delta", "C", "N", "T")
TRACE_LIMIT = 10**5


class ConfigError(InvalidInputError):
    """Raised for invalid experiment configurations."""


class ExperimentError(RuntimeError):
    """A trial failed; ``completed`` holds the trials that finished."""

    def __init__(self, message, completed=()):
        super().__init__(message)
        self.completed = list(completed)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: learner x environment x horizon over ``seeds`` trials.

    ``learner`` and ``environment`` are names (see :func:`cblab.make_learner`
    and :func:`cblab.make_environment`) or zero-argument factories returning
    objects that follow the same protocols; factories force the reference
    engine.
    """

    learner: Any = "hedge-decreasing"
    environment: Any = "stochastic"
    problem: str = "expert"
    N: int = 4
    T: int = 1000
    seeds: int = 10
    base_seed: int = 0
    delta: float = 0.0
    C: float = 0.0
    i_star: int = 0
    targeted: bool = False
    record_trajectory: bool = False
    engine: str = "auto"
    threads: int = 1
    experiment_id: str = "experiment"
    sweep: dict = field(default_factory=dict)
    sweep_cap: int = 1000
    base_dir: str | None = None

    def __post_init__(self):
        if self.problem not in ("expert", "mab"):
            raise ConfigError(f"problem must be 'expert' or 'mab', got {self.problem!r}")
        if self.N < 1 or self.T < 1 or self.seeds < 1:
            raise ConfigError("need N >= 1, T >= 1 and seeds >= 1")
        if self.engine not in ("auto", "kernel", "reference"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.record_trajectory and self.T > TRACE_LIMIT:
            raise ConfigError(f"trajectory recording is limited to T <= {TRACE_LIMIT}")
        for axis, values in self.sweep.items():
            if axis not in SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
            if len(values) == 0:
                raise ConfigError(f"sweep axis {axis!r} is empty")
        if isinstance(self.learner, str):
            kind, _ = parse_learner_name(self.learner)
            native = "mab" if kind == "tsallis-inf" else "expert"
            if native != self.problem:
                raise ConfigError(f"learner {self.learner!r} plays the {native} problem, not {self.problem!r}")

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @property
    def learner_name(self) -> str:
        return self.learner if isinstance(self.learner, str) else getattr(self.learner, "__name__", "custom")

    @property
    def env_name(self) -> str:
        return self.environment if isinstance(self.environment, str) else getattr(
            self.environment, "__name__", "custom")


@dataclass
class TrialRecord:
    seed: int
    ledger: RegretLedger
    spend: float
    corrupted_rounds: int
    wall_time: float
    trace: dict | None = None


@dataclass
class AggregateResult:
    """Monte Carlo estimates over the trials of one configuration.

    ``i_star`` is the comparator maximizing the mean regret (smallest index on
    ties); ``stderr`` is the standard error of that comparator's regret, 0 for
    a single trial.
    """

    config: ExperimentConfig
    seed_count: int
    mean_regret: np.ndarray
    mean_regret_clean: np.ndarray
    mean_subopt_mass: np.ndarray
    max_regret: float
    i_star: int
    stderr: float
    max_regret_clean: float
    mean_spend: float
    mean_second_order: float
    mean_bandit_regret: np.ndarray
    bounds: dict
    trials: list = field(default_factory=list, repr=False)


# -- construction -----------------------------------------------------------

def build_environment(config: ExperimentConfig):
    if callable(config.environment):
        env = config.environment()
        return env, dict(delta=config.delta, C=config.C, schedule=None)
    try:
        return make_environment(config.environment, n=config.N, T=config.T, delta=config.delta,
                                i_star=config.i_star, C=config.C, problem=config.problem,
                                targeted=config.targeted, base_dir=config.base_dir)
    except OSError as exc:
        raise ConfigError(f"cannot read environment data: {exc}") from exc


def build_learner(config: ExperimentConfig):
    if callable(config.learner):
        return config.learner()
    return make_learner(config.learner, config.N)


def trial_rng(config: ExperimentConfig, seed: int) -> np.random.Generator:
    key = np.array([config.base_seed, seed], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _kernel_args(config, learner, env):
    if config.engine == "reference" or callable(config.learner):
        return None
    params = env.kernel_params() if hasattr(env, "kernel_params") else None
    if params is None:
        return None
    kind, eta = parse_learner_name(config.learner)
    return kind, (eta or 0.0), params


# -- trials -----------------------------------------------------------------

def _new_trace(n, T):
    return dict(p=np.zeros((T, n)), loss=np.zeros((T, n)), clean_loss=np.zeros((T, n)),
                action=np.full(T, -1, dtype=np.int64), v=np.zeros(T), eta=np.zeros(T))


def _reference_trial(config, learner, env, rng, trace):
    n = config.N
    mab = config.problem == "mab"
    ledger = RegretLedger(n)
    for t in range(1, config.T + 1):
        try:
            p = learner.predict()
        except NumericError as exc:
            raise NumericError(f"round {t}: {exc}") from exc
        eta = learner.rate(t)
        u = rng.random(n + 1)
        action = None
        if mab and env.targeted:
            action = bandit_draw(p, u[n])
        clean, loss = env.next_loss(t, p, u, action)
        if mab and action is None:
            action = bandit_draw(p, u[n])
        ledger.record(p, loss, clean, float(loss[action]) if mab else 0.0)
        if trace is not None:
            trace["p"][t - 1] = p
            trace["loss"][t - 1] = loss
            trace["clean_loss"][t - 1] = clean
            trace["action"][t - 1] = -1 if action is None else action
            m = float(np.dot(loss, p))
            trace["v"][t - 1] = float(np.dot(p, (loss - m) ** 2))
            trace["eta"][t - 1] = eta
        feedback = Bandit(action, float(loss[action])) if mab else FullInfo(np.asarray(loss))
        learner.update(p, feedback)
    return ledger, float(env.spent), int(env.corrupted_rounds)


def _kernel_trial(config, args, rng, trace):
    from . import _kernels

    kind, eta, params = args
    n = config.N
    replay = params.get("replay")
    if replay is not None:
        if replay.shape[0] < config.T:
            raise ConfigError(f"replay has {replay.shape[0]} rounds, T={config.T}")
        env_args = (0, 0.0, 0.0, 0, 0.0, False, np.ascontiguousarray(replay))
    else:
        env_args = (params["i_star"], params["clean_delta"], params["attack_delta"],
                    params["attack_until"], params["budget"], params["targeted"], np.zeros((0, n)))
    if trace is None:
        bufs = (np.zeros((0, n)), np.zeros((0, n)), np.zeros((0, n)),
                np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))
    else:
        bufs = (trace["p"], trace["loss"], trace["clean_loss"], trace["action"], trace["v"], trace["eta"])
    status, bad_round, sums, comp, spent, corrupted = _kernels.run_trial_kernel(
        rng, _kernels.LEARNER_CODES[kind], float(eta), n, config.T, config.problem == "mab",
        *env_args, trace is not None, *bufs)
    if status != _kernels.OK:
        raise NumericError(f"round {bad_round}: Tsallis normalizer did not converge")
    return RegretLedger.from_buffers(n, config.T, sums, comp), float(spent), int(corrupted)


def run_trial(config: ExperimentConfig, seed: int) -> TrialRecord:
    """Play one trial; deterministic given ``(config, seed)``."""
    start = time.perf_counter()
    env, _ = build_environment(config)
    learner = build_learner(config)
    if getattr(learner, "needs_full_info", True) and config.problem == "mab":
        raise ConfigError("this learner needs full-information feedback")
    if getattr(env, "n_actions", config.N) != config.N:
        raise ConfigError(f"environment has N={env.n_actions}, config says N={config.N}")
    trace = _new_trace(config.N, config.T) if config.record_trajectory else None
    rng = trial_rng(config, seed)
    args = _kernel_args(config, learner, env)
    if args is None and config.engine == "kernel":
        raise ConfigError("the compiled engine only runs built-in learners and environments")
    if args is None:
        ledger, spend, rounds = _reference_trial(config, learner, env, rng, trace)
    else:
        ledger, spend, rounds = _kernel_trial(config, args, rng, trace)
    return TrialRecord(seed, ledger, spend, rounds, time.perf_counter() - start, trace)


# -- aggregation ------------------------------------------------------------

def _fmean(cols):
    cols = np.atleast_2d(cols)
    return np.array([math.fsum(c) / len(c) for c in cols.T])


def _stderr(x):
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def bound_overlay(config: ExperimentConfig, delta: float, C: float, v_total: float) -> dict:
    n, T = config.N, config.T
    nan = math.nan
    out = dict(bound_thm1=nan, bound_thm2=nan, bound_thm3=nan, bound_cor1=nan, lower_bound_value=nan)
    if n >= 2:
        out["bound_thm1"] = bounds.bound_thm1(n, T)
        out["bound_thm3"] = bounds.bound_thm3(n, v_total)
        if 0.0 < delta <= 1.0 and math.isfinite(C) and C >= 0.0:
            out["bound_thm2"] = bounds.bound_thm2(n, delta, C)
            out["bound_cor1"] = bounds.bound_corollary1(n, delta, C)
    try:
        out["lower_bound_value"] = bounds.lower_bound_value(delta, n, C, T, config.problem)
    except (InvalidInputError, TypeError, ValueError):
        pass
    return out


def aggregate(config: ExperimentConfig, trials, info=None) -> AggregateResult:
    """Merge trial records; the result does not depend on their order."""
    trials = sorted(trials, key=lambda r: r.seed)
    if not trials:
        raise InvalidInputError("nothing to aggregate")
    if info is None:
        _, info = build_environment(config)
    S = len(trials)
    player = np.array([r.ledger.player_loss_sum for r in trials])
    player_clean = np.array([r.ledger.player_loss_sum_clean for r in trials])
    per = np.array([r.ledger.per_action_loss_sums for r in trials])
    per_clean = np.array([r.ledger.per_action_loss_sums_clean for r in trials])
    regret = player[:, None] - per
    regret_clean = player_clean[:, None] - per_clean
    bandit = np.array([r.ledger.bandit_loss_sum for r in trials])[:, None] - per
    mean_regret = _fmean(regret)
    mean_clean = _fmean(regret_clean)
    i_star = int(np.argmax(mean_regret))
    v_mean = math.fsum(r.ledger.second_order_sum for r in trials) / S
    delta = info.get("delta", config.delta)
    C = info.get("C", config.C)
    return AggregateResult(
        config=config,
        seed_count=S,
        mean_regret=mean_regret,
        mean_regret_clean=mean_clean,
        mean_subopt_mass=_fmean(np.array([r.ledger.suboptimal_mass_sum for r in trials])),
        max_regret=float(mean_regret[i_star]),
        i_star=i_star,
        stderr=_stderr(regret[:, i_star]),
        max_regret_clean=float(mean_clean.max()),
        mean_spend=math.fsum(r.spend for r in trials) / S,
        mean_second_order=v_mean,
        mean_bandit_regret=_fmean(bandit),
        bounds=bound_overlay(config, delta, C, v_mean),
        trials=trials,
    )


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> AggregateResult:
    """Run every seed of ``config`` and aggregate; thread count does not change the result."""
    _, info = build_environment(config)
    workers = config.threads if threads is None else threads
    seeds = range(config.seeds)
    done = []
    if workers <= 1:
        for s in seeds:
            try:
                done.append(run_trial(config, s))
            except Exception as exc:
                raise ExperimentError(f"trial {s} failed: {exc}", done) from exc
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {s: pool.submit(run_trial, config, s) for s in seeds}
            failure = None
            for s, fut in futures.items():
                try:
                    done.append(fut.result())
                except Exception as exc:
                    failure = failure or (s, exc)
            if failure is not None:
                s, exc = failure
                raise ExperimentError(f"trial {s} failed: {exc}", done) from exc
    return aggregate(config, done, info)


# -- sweeps -----------------------------------------------------------------

def sweep_points(config: ExperimentConfig) -> list[dict]:
    axes = [a for a in SWEEP_AXES if a in config.sweep]
    grids = [list(config.sweep[a]) for a in axes]
    return [dict(zip(axes, values)) for values in itertools.product(*grids)]


def _apply_point(config, point):
    changes = dict(point)
    env = config.environment
    if "C" in point and isinstance(env, str) and env.startswith("corrupted:") and env.count(":") == 2:
        changes["environment"] = env.rsplit(":", 1)[0]
    return config.with_(sweep={}, **changes)


def sweep(config: ExperimentConfig, threads: int | None = None) -> list[AggregateResult]:
    """One aggregate per point of the Cartesian grid, in lexicographic axis order."""
    points = sweep_points(config) or [{}]
    if len(points) > config.sweep_cap:
        T_max = max(p.get("T", config.T) for p in points)
        cost = len(points) * config.seeds * T_max
        raise ConfigError(f"sweep has {len(points)} points (cap {config.sweep_cap}); "
                          f"about {cost:.3g} learner rounds")
    return [run_experiment(_apply_point(config, p), threads) for p in points]


# -- output -----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def result_row(result: AggregateResult) -> dict:
    cfg = result.config
    _, info = build_environment(cfg)
    row = dict(
        experiment_id=cfg.experiment_id, problem=cfg.problem, learner=cfg.learner_name,
        env=cfg.env_name, N=cfg.N, T=cfg.T, delta=float(info.get("delta", cfg.delta)),
        C=float(info.get("C", cfg.C)), seed_count=result.seed_count, i_star=result.i_star,
        mean_regret=result.max_regret, stderr=result.stderr,
        mean_regret_clean=result.max_regret_clean,
        mean_subopt_mass=float(result.mean_subopt_mass[result.i_star]),
        mean_spend=result.mean_spend,
    )
    row.update(result.bounds)
    return row


def write_results_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in results:
            row = result_row(r)
            w.writerow([_fmt(row[k]) for k in CSV_HEADER])


def write_trace_jsonl(trials, path) -> None:
    """One JSON object per trial with its per-round arrays."""
    def clean(x):
        return [None if not math.isfinite(v) else v for v in x]

    with open(path, "w") as fh:
        for r in sorted(trials, key=lambda r: r.seed):
            if r.trace is None:
                continue
            tr = r.trace
            obj = dict(seed=r.seed, p=tr["p"].tolist(), loss=tr["loss"].tolist(),
                       clean_loss=tr["clean_loss"].tolist(), action=tr["action"].tolist(),
                       v=tr["v"].tolist(), eta=clean(tr["eta"].tolist()))
            fh.write(json.dumps(obj) + "\n")


# -- configuration files -----------------------------------------------------

_SECTION_KEYS = {
    "harness": {"experiment_id": "experiment_id", "problem": "problem", "N": "N", "T": "T",
                "seeds": "seeds", "seed": "base_seed", "threads": "threads",
                "record_trajectory": "record_trajectory", "engine": "engine",
                "sweep_cap": "sweep_cap"},
    "learner": {"name": "learner"},
    "environment": {"name": "environment", "delta": "delta", "C": "C", "i_star": "i_star",
                    "targeted": "targeted"},
}
_ALIASES = {"learner": ("learner", "name"), "env": ("environment", "name"),
            "environment": ("environment", "name")}


def resolve_key(key: str) -> tuple[str, str]:
    """Map ``section.key`` or a bare key to its (section, key) slot."""
    if "." in key:
        section, name = key.split(".", 1)
        if section == "sweep" and name in SWEEP_AXES:
            return section, name
        if section in _SECTION_KEYS and name in _SECTION_KEYS[section]:
            return section, name
        raise ConfigError(f"unknown config key {key!r}")
    if key in _ALIASES:
        return _ALIASES[key]
    hits = [(s, key) for s, keys in _SECTION_KEYS.items() if key in keys]
    if len(hits) != 1:
        raise ConfigError(f"unknown config key {key!r}")
    return hits[0]


def config_from_mapping(data: dict, base_dir=None) -> ExperimentConfig:
    kwargs: dict[str, Any] = {}
    for section, table in data.items():
        if section == "sweep":
            for axis, values in table.items():
                if axis not in SWEEP_AXES:
                    raise ConfigError(f"unknown sweep axis {axis!r}")
                kwargs.setdefault("sweep", {})[axis] = list(values) if isinstance(values, list) else [values]
            continue
        if section not in _SECTION_KEYS or not isinstance(table, dict):
            raise ConfigError(f"unknown config section {section!r}")
        for key, value in table.items():
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            kwargs[_SECTION_KEYS[section][key]] = value
    if base_dir is not None:
        kwargs["base_dir"] = os.fspath(base_dir)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def apply_overrides(data: dict, overrides: list[tuple[str, Any]]) -> dict:
    out = {k: dict(v) for k, v in data.items()}
    for key, value in overrides:
        section, name = resolve_key(key)
        out.setdefault(section, {})[name] = value
    return out
