"""Command-line surface: solve, learn, simulate, fit, curves.

Every command is a pure function of (config file, seed) to CSV files in
the output directory; re-running overwrites identically. Exit codes:
0 success, 1 runtime/numeric failure, 2 config/validation failure.
"""

import csv
import os
import sys

import click
import numpy as np

from . import config as cfgmod
from . import fitting, learner, mdp as mdpmod, solver
from .config import ConfigError
from .shortfall import RootBracketError, subjective_probability
from .utility import PolynomialMixed, UtilityError

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v
                             for v in row])


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(path):
    try:
        return cfgmod.load_config(path)
    except (OSError, ConfigError) as exc:
        _fail(EXIT_CONFIG, exc)


def _parse_mdp_section(cfg, context="mdp"):
    if "mdp" not in cfg:
        raise ConfigError(f"missing required section {context!r}")
    built = cfgmod.parse_mdp(cfg["mdp"], context=context)
    errors = mdpmod.validate(built)
    if errors:
        raise ConfigError("invalid MDP: " + "; ".join(errors))
    return built


@click.group()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="YAML configuration file.")
@click.option("--out", "out_dir", default=".", type=click.Path(file_okay=False),
              help="Output directory (created if missing).")
@click.option("--seed", default=0, type=click.IntRange(min=0),
              help="Seed override for stochastic commands.")
@click.option("--jobs", default=1, type=click.IntRange(min=1),
              help="Worker parallelism bound.")
@click.pass_context
def main(ctx, config_path, out_dir, seed, jobs):
    """Risk-sensitive reinforcement learning toolkit."""
    os.makedirs(out_dir, exist_ok=True)
    ctx.obj = {"config": config_path, "out": out_dir, "seed": seed,
               "jobs": jobs}


@main.command()
@click.pass_obj
def solve(obj):
    """Risk-sensitive value iteration: emits v.csv, q.csv, policy.csv."""
    cfg = _load(obj["config"])
    try:
        cfgmod._check_keys(cfg, ("mdp", "discretize", "shortfall", "tol",
                                 "max_iter"), "solve config")
        built = _parse_mdp_section(cfg)
        if "discretize" in cfg:
            cfgmod._check_keys(cfg["discretize"], ("n_quantiles",),
                               "discretize")
            built = mdpmod.discretize(
                built, n_quantiles=int(cfg["discretize"].get("n_quantiles", 41)))
        shortfall = cfgmod.parse_shortfall(
            cfgmod._require(cfg, "shortfall", "solve config"))
        tol = float(cfg.get("tol", 1e-8))
        max_iter = int(cfg.get("max_iter", 100000))
    except ConfigError as exc:
        _fail(EXIT_CONFIG, exc)
    try:
        result = solver.value_iteration(built, shortfall, tol=tol,
                                        max_iter=max_iter)
    except (solver.SolverError, RootBracketError, UtilityError) as exc:
        _fail(EXIT_RUNTIME, exc)
    policy = solver.greedy_policy(built, result.q)
    out = obj["out"]
    _write_csv(os.path.join(out, "v.csv"), ("state", "v"),
               [(s, float(result.v[s])) for s in range(built.n_states)])
    _write_csv(os.path.join(out, "q.csv"), ("state", "action", "q"),
               [(s, a, float(result.q[(s, a)]))
                for (s, a) in built.admissible_pairs()])
    _write_csv(os.path.join(out, "policy.csv"), ("state", "action"),
               [(s, int(policy[s])) for s in range(built.n_states)])
    click.echo(f"converged in {result.iterations} sweeps "
               f"(residual {result.residual:.3e})")


@main.command()
@click.pass_obj
def learn(obj):
    """Model-free learning run: emits q.csv, counts.csv, optional trace.csv."""
    cfg = _load(obj["config"])
    try:
        cfgmod._check_keys(cfg, ("mdp", "learner", "trace", "steps_per_round"),
                           "learn config")
        built = _parse_mdp_section(cfg)
        lcfg = cfgmod.parse_learner(
            cfgmod._require(cfg, "learner", "learn config"), seed=obj["seed"])
        want_trace = bool(cfg.get("trace", False))
        steps_per_round = cfg.get("steps_per_round")
    except ConfigError as exc:
        _fail(EXIT_CONFIG, exc)
    try:
        result = learner.run(built, lcfg)
    except learner.LearnerError as exc:
        _fail(EXIT_RUNTIME, exc)
    out = obj["out"]
    _write_csv(os.path.join(out, "q.csv"), ("state", "action", "q"),
               [(s, a, float(result.q[s, a]))
                for (s, a) in built.admissible_pairs()])
    _write_csv(os.path.join(out, "counts.csv"), ("state", "action", "count"),
               [(s, a, int(result.counts[s, a]))
                for (s, a) in built.admissible_pairs()])
    if want_trace:
        tr = result.trace
        rounds = (np.arange(len(tr)) // int(steps_per_round)
                  if steps_per_round else np.zeros(len(tr), dtype=np.int64))
        _write_csv(os.path.join(out, "trace.csv"),
                   mdpmod.TRAJECTORY_COLUMNS + ("td", "update"),
                   [(int(rounds[t]), t, int(tr.states[t]), int(tr.actions[t]),
                     float(tr.rewards[t]), int(tr.next_states[t]),
                     float(tr.td[t]), float(tr.update[t]))
                    for t in range(len(tr))])
    report = learner.exploration_report(result.counts, built.admissible)
    click.echo(f"{lcfg.steps} steps; min visit count {report.min_count}")


@main.command()
@click.pass_obj
def simulate(obj):
    """Investment-game simulation: emits paths.csv and optional trajectory."""
    cfg = _load(obj["config"])
    try:
        cfgmod._check_keys(cfg, ("investment_game", "stat_rounds",
                                 "trajectory_rounds", "policy"),
                           "simulate config")
        game_cfg = cfgmod.parse_investment_game(cfg.get("investment_game", {}))
        stat_rounds = int(cfg.get("stat_rounds", 100000))
        traj_rounds = int(cfg.get("trajectory_rounds", 0))
        policy = cfg.get("policy", "uniform")
        if policy not in ("uniform", "zero"):
            raise ConfigError(f"unknown policy {policy!r}")
    except ConfigError as exc:
        _fail(EXIT_CONFIG, exc)
    rng = np.random.default_rng(obj["seed"])
    stats = mdpmod.path_statistics(game_cfg, stat_rounds, rng)
    out = obj["out"]
    _write_csv(os.path.join(out, "paths.csv"),
               ("path", "ev_exact", "ev_mc", "std_total", "std_within",
                "visit_frequency"),
               [(k + 1, float(stats.ev_exact[k]), float(stats.ev_mc[k]),
                 float(stats.std_total[k]), float(stats.std_within[k]),
                 float(stats.visit_frequency[k])) for k in range(4)])
    if traj_rounds > 0:
        game = mdpmod.build_investment_game(game_cfg)
        transitions = []
        s, t = 0, 0
        for rnd in range(traj_rounds):
            for _ in range(3):
                a = 0 if policy == "zero" else int(rng.integers(0, 4))
                tr = mdpmod.sample_transition(game, s, a, rng, t=t, round_=rnd)
                transitions.append(tr)
                s = tr.next_state
                t += 1
        mdpmod.save_trajectory(os.path.join(out, "trajectory.csv"), transitions)
    click.echo(f"{stat_rounds} rounds simulated")


_FIT_COLUMNS = ("subject", "model", "L", "B", "dB", "beta", "gamma", "k_plus",
                "l_plus", "k_minus", "l_minus", "alpha", "converged")


@main.command()
@click.pass_obj
def fit(obj):
    """Behavioral model comparison over subject trajectory files."""
    cfg = _load(obj["config"])
    try:
        cfgmod._check_keys(cfg, ("subjects", "models", "n_starts", "task"),
                           "fit config")
        subjects = cfgmod._require(cfg, "subjects", "fit config")
        models = tuple(cfg.get("models", fitting.MODELS))
        for m in models:
            if m not in fitting.MODELS:
                raise ConfigError(f"unknown model {m!r}")
        if "standard" not in models:
            raise ConfigError("models must include 'standard' (BIC baseline)")
        n_starts = int(cfg.get("n_starts", 16))
        task = cfg.get("task", {})
        cfgmod._check_keys(task, ("n_states", "n_actions"), "task")
        n_states = int(task.get("n_states", 7))
        n_actions = int(task.get("n_actions", 4))
    except ConfigError as exc:
        _fail(EXIT_CONFIG, exc)

    fit_rows, analysis_rows, error_rows = [], [], []
    for path in subjects:
        subject_id = os.path.splitext(os.path.basename(path))[0]
        try:
            data = fitting.SubjectData.from_trajectory(
                path, subject_id=subject_id, n_states=n_states,
                n_actions=n_actions)
            results = fitting.compare_models(data, models=models,
                                             n_starts=n_starts,
                                             seed=obj["seed"])
        except (OSError, mdpmod.MdpError, fitting.FittingError) as exc:
            error_rows.append((subject_id, str(exc)))
            continue
        for model in models:
            res = results[model]
            p = res.params
            fit_rows.append((
                subject_id, model, res.log_likelihood, res.bic, res.delta_bic,
                p.get("beta", float("nan")), p.get("gamma", float("nan")),
                p.get("k_plus", float("nan")), p.get("l_plus", float("nan")),
                p.get("k_minus", float("nan")), p.get("l_minus", float("nan")),
                p.get("alpha", float("nan")), int(res.converged)))
        if "rsql" in results:
            p = results["rsql"].params
            utility = fitting.LinearizedNearZero(
                PolynomialMixed(p["k_plus"], p["l_plus"],
                                p["k_minus"], p["l_minus"]),
                fitting.LINEARIZATION_PHI)
            rewards = data.rewards
            m_emp = float(rewards.mean())
            try:
                m_sub = fitting.empirical_subjective_mean(rewards, utility)
                delta_p = fitting.normalized_subjective_probability(rewards,
                                                                    utility)
            except fitting.FittingError as exc:
                error_rows.append((subject_id, str(exc)))
            else:
                analysis_rows.append((subject_id, m_emp, m_sub, delta_p))

    out = obj["out"]
    _write_csv(os.path.join(out, "fits.csv"), _FIT_COLUMNS, fit_rows)
    _write_csv(os.path.join(out, "analysis.csv"),
               ("subject", "m_emp", "m_sub", "delta_p"), analysis_rows)
    if error_rows:
        _write_csv(os.path.join(out, "errors.csv"), ("subject", "error"),
                   error_rows)
    click.echo(f"fitted {len(set(r[0] for r in fit_rows))} subjects, "
               f"{len(error_rows)} failures")
    if fit_rows == [] and error_rows:
        sys.exit(EXIT_RUNTIME)


_DEFAULT_CURVES = {
    "lin": {"family": "linear"},
    "ra": {"family": "exponential", "rate": -1.0},
    "rs": {"family": "exponential", "rate": 1.0},
    "mix1": {"family": "polynomial", "k_plus": 0.5, "l_plus": 2.0,
             "k_minus": 1.0, "l_minus": 2.0},
    "mix2": {"family": "polynomial", "k_plus": 1.0, "l_plus": 0.5,
             "k_minus": 1.5, "l_minus": 0.5},
}


@main.command()
@click.pass_obj
def curves(obj):
    """Utility curves and induced w(p) curves, one CSV pair per family."""
    cfg = _load(obj["config"])
    try:
        cfgmod._check_keys(cfg, ("utilities", "x_grid", "p_grid_n", "x1", "x2",
                                 "acceptance_level"), "curves config")
        specs = cfg.get("utilities", _DEFAULT_CURVES)
        utilities = {name: cfgmod.parse_utility(spec, context=f"utilities.{name}")
                     for name, spec in specs.items()}
        grid = cfg.get("x_grid", {})
        cfgmod._check_keys(grid, ("lo", "hi", "n"), "x_grid")
        lo = float(grid.get("lo", -1.0))
        hi = float(grid.get("hi", 1.0))
        n = int(grid.get("n", 201))
        p_grid_n = int(cfg.get("p_grid_n", 99))
        x1 = float(cfg.get("x1", 1.0))
        x2 = float(cfg.get("x2", -1.0))
        x0 = float(cfg.get("acceptance_level", 0.0))
    except ConfigError as exc:
        _fail(EXIT_CONFIG, exc)

    from .shortfall import Shortfall
    out = obj["out"]
    xs = np.linspace(lo, hi, n)
    ps = (np.arange(p_grid_n) + 1.0) / (p_grid_n + 1.0)
    try:
        for name, u in utilities.items():
            _write_csv(os.path.join(out, f"utility_{name}.csv"), ("x", "value"),
                       [(float(x), float(u(x))) for x in xs])
            shortfall = Shortfall(u, x0)
            _write_csv(os.path.join(out, f"wp_{name}.csv"), ("p", "w"),
                       [(float(p),
                         float(subjective_probability(x1, x2, p, shortfall)))
                        for p in ps])
    except (UtilityError, RootBracketError) as exc:
        _fail(EXIT_RUNTIME, exc)
    click.echo(f"emitted {len(utilities)} curve pairs")


if __name__ == "__main__":
    main()
