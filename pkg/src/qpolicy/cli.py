"""Experiment runner: ``qpolicy {qpe-dist,qpe-vs-mc,qpi-run,qpi-scaling}``.

Each experiment writes a CSV (``#`` metadata block, header row, data rows) and
a ``<out>.summary.json`` sidecar. Without ``--out`` the CSV goes to stdout and
the summary to stderr. Outputs contain no timestamps, so identical config and
seed give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, ae, baselines, qmdp, qpi
from .statevec import ResourceError

EXPERIMENTS = ("qpe-dist", "qpe-vs-mc", "qpi-run", "qpi-scaling")
EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_SAFEGUARD = 0, 1, 2, 3
ROW_TOL = 1e-14


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """All experiment parameters. ``None`` means "use the experiment default"."""

    experiment: str
    problem: dict | str | None = None
    policy: float | list | None = None
    policies: int | list[int] | None = None
    initial_policy: int | str = "worst"
    epsilon: float | None = None
    delta: float | None = None
    n: int | list[int] | None = None
    t: int | None = None
    patience: int = 30
    lam: float = 8 / 7
    max_iterations: int | None = None
    reestimate: bool = False
    horizon: int | None = None
    gamma: float | None = None
    trials: int | None = None
    min_successes: int = 0
    seed: int = 0
    out: str | None = None

    # JSON uses "lambda" for ``lam``
    _ALIASES = {"lambda": "lam"}

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in d.items():
            name = cls._ALIASES.get(key, key)
            if name not in names or key == "lam":
                raise ConfigError(f"unknown config field {key!r}")
            kwargs[name] = value
        if "experiment" not in kwargs:
            raise ConfigError("config field 'experiment' is required")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        """JSON form without the output path, so echoes do not depend on where output goes."""
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        del d["out"]
        return d

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
        checks = [
            ("epsilon", self.epsilon is None or self.epsilon > 0, "must be positive"),
            ("delta", self.delta is None or 0 < self.delta <= 1, "must lie in (0, 1]"),
            ("t", self.t is None or self.t >= 1, "must be at least 1"),
            ("patience", self.patience >= 0, "must be non-negative"),
            ("lambda", self.lam > 1, "must exceed 1"),
            ("horizon", self.horizon is None or self.horizon >= 1, "must be at least 1"),
            ("gamma", self.gamma is None or 0 <= self.gamma <= 1, "must lie in [0, 1]"),
            ("trials", self.trials is None or self.trials >= 1, "must be at least 1"),
            ("min_successes", self.min_successes >= 0, "must be non-negative"),
            ("seed", isinstance(self.seed, int) and self.seed >= 0, "must be a non-negative integer"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg}")
        for name, value in (("n", self.n), ("policies", self.policies)):
            values = value if isinstance(value, list) else [value]
            if value is not None and not all(isinstance(v, int) and v >= 1 for v in values):
                raise ConfigError(f"{name}: must be positive integers")
        if isinstance(self.policies, list) and self.experiment == "qpi-run":
            raise ConfigError("policies: qpi-run takes a single policy-set size")
        if isinstance(self.n, list) and self.experiment == "qpe-dist":
            raise ConfigError("n: qpe-dist takes a single value")


# ---------------------------------------------------------------------------
# Defaults and problem resolution
# ---------------------------------------------------------------------------

EVAL_BANDIT = {"kind": "bandit", "p0_left": 0.55, "p0_right": 0.65}
SEARCH_BANDIT = {"kind": "bandit", "p0_left": 1.0, "p0_right": 0.0}

DEFAULTS: dict[str, dict[str, Any]] = {
    "qpe-dist": dict(problem=EVAL_BANDIT, horizon=2, policy=0.5, epsilon=0.025, delta=0.05),
    "qpe-vs-mc": dict(problem=EVAL_BANDIT, horizon=1, policy=0.5, n=list(range(3, 9)),
                      trials=201, delta=0.05),
    "qpi-run": dict(problem=SEARCH_BANDIT, horizon=1, policies=64, epsilon=0.0125, delta=0.07),
    "qpi-scaling": dict(problem=SEARCH_BANDIT, horizon=1, policies=[100, 225, 400, 625],
                        epsilon=0.0125, delta=0.07, trials=100),
}


def with_defaults(config: ExperimentConfig) -> ExperimentConfig:
    config.validate()
    defaults = DEFAULTS[config.experiment]
    changes = {k: v for k, v in defaults.items() if getattr(config, k) is None}
    return dataclasses.replace(config, **changes)


def resolve_problem(config: ExperimentConfig) -> tuple[qmdp.Mdp, qmdp.TwoArmedBandit | None]:
    problem = config.problem
    try:
        if isinstance(problem, str):
            loaded = qmdp.load_problem(problem)
        else:
            loaded = qmdp.problem_from_dict(problem)
    except (OSError, KeyError, TypeError, json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"problem: {exc}") from exc
    if isinstance(loaded, qmdp.TwoArmedBandit):
        mdp = loaded.to_mdp(config.horizon or 1, 1.0 if config.gamma is None else config.gamma)
        return mdp, loaded
    changes = {}
    if config.horizon is not None:
        changes["horizon"] = config.horizon
    if config.gamma is not None:
        changes["gamma"] = config.gamma
    return (loaded.with_(**changes) if changes else loaded), None


def resolve_policy(config: ExperimentConfig, mdp: qmdp.Mdp) -> qmdp.Policy:
    try:
        if isinstance(config.policy, (int, float)):
            if mdp.n_states != 1 or mdp.n_actions != 2:
                raise ValueError("a scalar policy needs a one-state, two-action problem")
            policy = qmdp.Policy.bandit(config.policy)
        elif config.policy is None:
            policy = qmdp.Policy.uniform(mdp.n_states, mdp.n_actions)
        else:
            policy = qmdp.Policy(np.asarray(config.policy, dtype=np.float64))
        policy.check(mdp)
    except ValueError as exc:
        raise ConfigError(f"policy: {exc}") from exc
    return policy


def qpe_config(config: ExperimentConfig, encoding: qmdp.ReturnEncoding,
               median_mode: bool = False) -> ae.QpeConfig:
    g, g_bar = encoding.g, encoding.g_bar
    if config.n is not None:
        return ae.QpeConfig(config.n, config.delta, g, g_bar, median_mode=median_mode, t=config.t)
    base = ae.config_for(config.epsilon, config.delta, g, g_bar, median_mode=median_mode)
    return dataclasses.replace(base, t=config.t) if config.t is not None else base


def search_config(config: ExperimentConfig) -> qpi.GroverSearchConfig:
    return qpi.GroverSearchConfig(config.lam, config.patience, config.max_iterations, config.reestimate)


def initial_index(config: ExperimentConfig, values: np.ndarray) -> int:
    if config.initial_policy == "worst":
        return int(np.argmin(values))
    if isinstance(config.initial_policy, int) and 0 <= config.initial_policy < len(values):
        return config.initial_policy
    raise ConfigError("initial_policy: must be 'worst' or a policy index")


def policy_set_for(bandit: qmdp.TwoArmedBandit | None, size: int) -> qpi.PolicySet:
    if bandit is None:
        raise ConfigError("policies: policy sets are only generated for bandit problems")
    try:
        return qpi.PolicySet.bandit(size)
    except ValueError as exc:
        raise ConfigError(f"policies: {exc}") from exc


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    columns: list[str]
    rows: list[list]
    summary: dict
    aborted: bool = False


def run_qpe_dist(config: ExperimentConfig) -> ExperimentResult:
    mdp, _ = resolve_problem(config)
    policy = resolve_policy(config, mdp)
    encoding = qmdp.ReturnEncoding.for_mdp(mdp)
    qcfg = qpe_config(config, encoding)
    dist = ae.qpe_distribution(mdp, policy, qcfg, encoding)
    decoded = ae.decode_values(qcfg)
    value = qmdp.exact_value(mdp, policy)
    rows = [[x, _num(decoded[x]), _num(p)] for x, p in enumerate(dist.probs) if p > ROW_TOL]
    summary = {
        "exact_value": value,
        "in_epsilon_mass": ae.mass_within(dist, qcfg, value),
        "epsilon": qcfg.epsilon,
        "delta": qcfg.delta,
        "n": qcfg.n,
        "t": qcfg.t,
        "qsamples": qcfg.qsamples,
        "total_probability": dist.total(),
    }
    return ExperimentResult(["x", "value", "probability"], rows, summary)


def run_qpe_vs_mc(config: ExperimentConfig) -> ExperimentResult:
    mdp, _ = resolve_problem(config)
    policy = resolve_policy(config, mdp)
    n_values = config.n if isinstance(config.n, list) else [config.n]
    table = baselines.matched_comparison(mdp, policy, n_values, config.trials, config.seed,
                                         config.delta)
    rows = [[r.n, r.qsamples, _num(r.qpe_median_err), _num(r.mc_median_err), _num(r.epsilon_bound)]
            for r in table]
    summary = {
        "exact_value": qmdp.exact_value(mdp, policy),
        "trials": config.trials,
        "qpe_within_bound": all(r.qpe_median_err <= r.epsilon_bound for r in table),
        "qpe_below_mc": {str(r.n): r.qpe_median_err < r.mc_median_err for r in table},
    }
    return ExperimentResult(list(baselines.ComparisonRow._fields), rows, summary)


def run_qpi(config: ExperimentConfig) -> ExperimentResult:
    mdp, bandit = resolve_problem(config)
    policy_set = policy_set_for(bandit, config.policies)
    encoding = qmdp.ReturnEncoding.for_mdp(mdp)
    qcfg = qpe_config(config, encoding)
    values = np.array([qmdp.exact_value(mdp, p) for p in policy_set.policies])
    start = initial_index(config, values)
    search = qpi.build_search_distribution(mdp, policy_set, qcfg, encoding)
    result = qpi.quantum_policy_iteration(search, start, search_config(config),
                                          np.random.default_rng(config.seed))
    rows = [[r.k, _num(r.value), r.policy, _num(r.candidate_value), r.candidate_policy,
             r.rotations, _num(r.m), int(r.accepted)] for r in result.trace.records]
    summary = {
        "policy": result.policy,
        "policy_label": policy_set.labels[result.policy] if policy_set.labels else None,
        "value_estimate": result.value,
        "exact_value": float(values[result.policy]),
        "optimal_value": float(values.max()),
        "success": bool(values[result.policy] >= values.max() - qcfg.epsilon),
        "initial_policy": result.initial_policy,
        "initial_value_estimate": result.initial_value,
        "iterations": len(result.trace),
        "total_rotations": result.trace.total_rotations,
        "non_patience_rotations": result.trace.non_patience_rotations,
        "qsamples": result.trace.qsamples,
        "complete": result.complete,
        "epsilon": qcfg.epsilon,
        "delta": qcfg.delta,
        "n": qcfg.n,
        "t": qcfg.t,
    }
    columns = ["k", "v_k", "policy", "candidate_value", "candidate_policy", "rotations_j", "m",
               "accepted"]
    return ExperimentResult(columns, rows, summary, aborted=not result.complete)


def linear_fit(x: Sequence[float], y: Sequence[float]) -> dict:
    """Least-squares line ``y = slope * x + intercept`` with R^2 and mean squared error."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2 or np.ptp(x) == 0:
        return {"slope": None, "intercept": None, "r2": None, "mse": None}
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2,
            "mse": float((resid**2).mean())}


def run_qpi_scaling(config: ExperimentConfig) -> ExperimentResult:
    mdp, bandit = resolve_problem(config)
    sizes = config.policies if isinstance(config.policies, list) else [config.policies]
    encoding = qmdp.ReturnEncoding.for_mdp(mdp)
    qcfg = qpe_config(config, encoding)
    scfg = search_config(config)
    rows, means, aborted = [], [], 0
    for size, ss in zip(sizes, np.random.SeedSequence(config.seed).spawn(len(sizes))):
        policy_set = policy_set_for(bandit, size)
        values = np.array([qmdp.exact_value(mdp, p) for p in policy_set.policies])
        start = initial_index(config, values)
        search = qpi.build_search_distribution(mdp, policy_set, qcfg, encoding)
        rotations, runs = [], 0
        max_runs = max(config.trials, 10 * config.min_successes)
        while runs < config.trials or (len(rotations) < config.min_successes and runs < max_runs):
            (child,) = ss.spawn(1)
            result = qpi.quantum_policy_iteration(search, start, scfg, np.random.default_rng(child))
            runs += 1
            aborted += not result.complete
            if result.complete and values[result.policy] >= values.max() - qcfg.epsilon:
                rotations.append(result.trace.non_patience_rotations)
        if rotations:
            q1, med, q3 = np.percentile(rotations, [25, 50, 75])
            mean = float(np.mean(rotations))
            means.append((math.sqrt(size), mean))
            stats = [_num(mean), _num(q1), _num(med), _num(q3)]
        else:
            stats = ["nan"] * 4
        rows.append([size, _num(math.sqrt(size)), runs, len(rotations),
                     _num(len(rotations) / runs), *stats])
    fit = linear_fit([m[0] for m in means], [m[1] for m in means])
    summary = {"fit_mean_rotations_vs_sqrtN": fit, "epsilon": qcfg.epsilon, "delta": qcfg.delta,
               "n": qcfg.n, "t": qcfg.t, "aborted_runs": aborted}
    columns = ["N", "sqrtN", "runs", "successes", "success_rate", "mean_rotations", "q1_rotations",
               "median_rotations", "q3_rotations"]
    return ExperimentResult(columns, rows, summary, aborted=aborted > 0)


RUNNERS = {
    "qpe-dist": run_qpe_dist,
    "qpe-vs-mc": run_qpe_vs_mc,
    "qpi-run": run_qpi,
    "qpi-scaling": run_qpi_scaling,
}


def run_experiment(config: ExperimentConfig) -> tuple[ExperimentConfig, ExperimentResult]:
    """Fill in defaults and run; returns the resolved config with the result."""
    resolved = with_defaults(config)
    return resolved, RUNNERS[resolved.experiment](resolved)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def render_csv(config: ExperimentConfig, result: ExperimentResult) -> str:
    buf = io.StringIO()
    buf.write(f"# qpolicy {__version__}\n")
    buf.write(f"# experiment: {config.experiment}\n")
    buf.write(f"# seed: {config.seed}\n")
    buf.write(f"# config: {json.dumps(config.to_dict(), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.columns)
    writer.writerows(result.rows)
    return buf.getvalue()


def render_summary(config: ExperimentConfig, result: ExperimentResult) -> str:
    doc = {"experiment": config.experiment, "version": __version__, "seed": config.seed,
           "config": config.to_dict(), **result.summary}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def summary_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".summary.json")


def write_outputs(config: ExperimentConfig, result: ExperimentResult) -> None:
    csv_text, summary_text = render_csv(config, result), render_summary(config, result)
    if config.out is None:
        sys.stdout.write(csv_text)
        sys.stderr.write(summary_text)
        return
    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text)
    summary_path(out).write_text(summary_text)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _int_list(text: str) -> int | list[int]:
    parts = [int(p) for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("expected an integer or comma-separated integers")
    return parts[0] if len(parts) == 1 and "," not in text else parts


def _policy_arg(text: str):
    try:
        return float(text)
    except ValueError:
        return json.loads(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpolicy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qpolicy {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config; flags override its fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="CSV output path (summary goes next to it)")
        p.add_argument("--problem", help="problem JSON file")
        p.add_argument("--policy", type=_policy_arg,
                       help="left-arm probability, or a JSON policy table")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--n", type=_int_list, help="precision bits (comma list for qpe-vs-mc)")
        p.add_argument("--t", type=int, help="phase-register qubits")
        p.add_argument("--patience", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--policies", type=_int_list, help="policy-set size(s) N")
        p.add_argument("--initial-policy", dest="initial_policy",
                       type=lambda s: s if s == "worst" else int(s))
        p.add_argument("--max-iterations", dest="max_iterations", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--gamma", type=float)
        p.add_argument("--trials", type=int)
        p.add_argument("--min-successes", dest="min_successes", type=int)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base: dict[str, Any] = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config: top level must be a JSON object")
        if base.get("experiment", args.experiment) != args.experiment:
            raise ConfigError("experiment: config file names a different experiment")
    base["experiment"] = args.experiment
    config = ExperimentConfig.from_dict(base)
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("config", "experiment") and v is not None}
    if "problem" in overrides:
        overrides["problem"] = str(overrides["problem"])
    return dataclasses.replace(config, **overrides)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        config.validate()
        config, result = run_experiment(config)
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_outputs(config, result)
    if result.aborted:
        print("run aborted by the max_iterations safeguard", file=sys.stderr)
        return EXIT_SAFEGUARD
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
