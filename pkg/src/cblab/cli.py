"""Command-line entry point: ``cblab {run,sweep,verify,attack,version}``.

Exit codes: 0 success, 2 configuration or precondition error, 3 numeric
failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .bounds import SUITES, run_verification
from .core import InvalidInputError, NumericError
from .harness import (
    ConfigError,
    ExperimentError,
    apply_overrides,
    build_environment,
    config_from_mapping,
    resolve_key,
    run_experiment,
    sweep,
    write_results_csv,
    write_trace_jsonl,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


def parse_override(text: str):
    """Split ``key=value``; the value is read as a TOML literal, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    resolve_key(key)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("CBLAB_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"CBLAB_THREADS={env!r} is not an integer") from None
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def load_config(args, *, require_file=True, extra=()):
    data, base_dir = {}, None
    if args.config is not None:
        path = Path(args.config)
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from None
        base_dir = path.resolve().parent
    elif require_file:
        raise ConfigError("--config is required for this subcommand")
    overrides = [parse_override(o) for o in args.override]
    if args.seed is not None:
        overrides.append(("harness.seed", args.seed))
    overrides.extend(extra)
    data = apply_overrides(data, overrides)
    # the default learner follows the problem when none is named
    problem = data.get("harness", {}).get("problem", "expert")
    if "name" not in data.get("learner", {}):
        data.setdefault("learner", {})["name"] = "tsallis-inf" if problem == "mab" else "hedge-decreasing"
    return config_from_mapping(data, base_dir=base_dir)


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write(results, config, args) -> Path:
    out = _out_dir(args)
    path = out / f"{config.experiment_id}.csv"
    write_results_csv(results, path)
    if config.record_trajectory:
        trials = [t for r in results for t in r.trials]
        write_trace_jsonl(trials, out / f"{config.experiment_id}.jsonl")
    return path


def _summary(result) -> str:
    return (f"{result.config.learner_name} on {result.config.env_name}: N={result.config.N} "
            f"T={result.config.T} regret={result.max_regret:.6g} +/- {result.stderr:.3g} "
            f"(i*={result.i_star}, {result.seed_count} seeds)")


def cmd_run(args) -> int:
    config = load_config(args)
    config = config.with_(sweep={})
    result = run_experiment(config, _threads(args))
    path = _write([result], config, args)
    print(_summary(result))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = load_config(args)
    if not config.sweep:
        raise ConfigError("config has no [sweep] table")
    results = sweep(config, _threads(args))
    for r in results:
        print(_summary(r))
    path = _write(results, config, args)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_attack(args) -> int:
    config = load_config(args, require_file=False,
                         extra=[("environment.name", "attack-schedule")])
    config = config.with_(sweep={})
    _, info = build_environment(config)
    schedule = info["schedule"]
    print(f"case {schedule.case_id}: delta_prime={schedule.delta_prime:.6g} "
          f"switch_time={schedule.switch_time} corrupts={schedule.corrupts}")
    for w in schedule.warnings:
        print(f"warning: {w}", file=sys.stderr)
    result = run_experiment(config, _threads(args))
    path = _write([result], config, args)
    print(_summary(result))
    print(f"lower_bound_value={result.bounds['lower_bound_value']:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.samples < 1:
        raise ConfigError("--samples must be >= 1")
    seed = 0 if args.seed is None else args.seed
    reports = run_verification(samples=args.samples, seed=seed, fault=args.inject_fault)
    print(f"{'suite':<16}{'cases':>10}{'violations':>12}{'worst margin':>16}  status")
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name:<16}{r.cases:>10}{r.violations:>12}{r.worst_margin:>16.6g}  {status}")
    failed = [r for r in reports if not r.passed]
    for r in failed:
        dump = json.dumps(r.first_violation or r.worst_inputs, default=_jsonable, sort_keys=True)
        print(f"suite {r.name} violated; reproduce with inputs {dump}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def _jsonable(x):
    return x.tolist() if hasattr(x, "tolist") else str(x)


def cmd_version(args) -> int:
    print(f"cblab {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cblab", description="Regret experiments for Hedge-type learners.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_help="TOML experiment file"):
        p.add_argument("--config", help=config_help)
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a config key (repeatable); values are TOML literals")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $CBLAB_THREADS or 1)")
        p.add_argument("--seed", type=int, default=None, help="global base seed")

    common(sub.add_parser("run", help="run one experiment"))
    common(sub.add_parser("sweep", help="run the grid in the [sweep] table"))
    common(sub.add_parser("attack", help="run a learner against the lower-bound attack schedule"),
           config_help="optional TOML file; delta, N, C, T and problem may come from overrides")
    v = sub.add_parser("verify", help="run the randomized inequality suites")
    v.add_argument("--samples", type=int, default=10**4, help="entropy sample count (default: 10000)")
    v.add_argument("--seed", type=int, default=None, help="suite seed (default: 0)")
    v.add_argument("--inject-fault", choices=SUITES, default=None, help=argparse.SUPPRESS)
    sub.add_parser("version", help="print the package version")
    return parser


_COMMANDS = dict(run=cmd_run, sweep=cmd_sweep, attack=cmd_attack, verify=cmd_verify, version=cmd_version)


def _is_numeric(exc) -> bool:
    while exc is not None:
        if isinstance(exc, (NumericError, FloatingPointError)):
            return True
        exc = exc.__cause__
    return False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (NumericError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if _is_numeric(exc) else EXIT_CONFIG
    except (InvalidInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
