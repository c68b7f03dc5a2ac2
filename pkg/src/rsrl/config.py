"""YAML configuration parsing shared by all CLI commands.

Configs are plain nested mappings; unknown keys are errors (fail-fast)
so typos never silently fall back to defaults.
"""

import numpy as np
import yaml

from .mdp import (DiscreteReward, GaussianMixtureReward, InvestmentGameConfig,
                  Mdp)
from .shortfall import FiniteDistribution, Shortfall
from .utility import (Entropic, ExponentialUtility, Linear, LinearizedNearZero,
                      PiecewiseLinear, PolynomialMixed, Truncated)


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


def _check_keys(mapping, allowed, context):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context}: expected a mapping, got "
                          f"{type(mapping).__name__}")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")


def _require(mapping, key, context):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return mapping[key]


def load_config(path):
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


# ---------------------------------------------------------------------------
# Utility / shortfall specs
# ---------------------------------------------------------------------------

_UTILITY_KEYS = {
    "linear": (),
    "entropic": ("lam",),
    "exponential": ("rate",),
    "piecewise": ("kappa",),
    "polynomial": ("k_plus", "l_plus", "k_minus", "l_minus"),
    "truncated": ("inner", "lower", "upper", "slope"),
    "linearized": ("inner", "phi"),
}


def parse_utility(spec, context="utility"):
    """Build a UtilityFunction from {family: ..., <params>}."""
    if not isinstance(spec, dict):
        raise ConfigError(f"{context}: expected a mapping")
    family = _require(spec, "family", context)
    if family not in _UTILITY_KEYS:
        raise ConfigError(f"{context}: unknown family {family!r}; expected "
                          f"one of {sorted(_UTILITY_KEYS)}")
    _check_keys(spec, ("family",) + _UTILITY_KEYS[family], context)
    try:
        if family == "linear":
            return Linear()
        if family == "entropic":
            return Entropic(lam=float(_require(spec, "lam", context)))
        if family == "exponential":
            return ExponentialUtility(rate=float(_require(spec, "rate", context)))
        if family == "piecewise":
            return PiecewiseLinear(kappa=float(_require(spec, "kappa", context)))
        if family == "polynomial":
            return PolynomialMixed(
                k_plus=float(_require(spec, "k_plus", context)),
                l_plus=float(_require(spec, "l_plus", context)),
                k_minus=float(_require(spec, "k_minus", context)),
                l_minus=float(_require(spec, "l_minus", context)))
        inner = parse_utility(_require(spec, "inner", context),
                              context=f"{context}.inner")
        if family == "truncated":
            return Truncated(inner=inner,
                             lower=float(_require(spec, "lower", context)),
                             upper=float(_require(spec, "upper", context)),
                             slope=float(_require(spec, "slope", context)))
        return LinearizedNearZero(inner=inner,
                                  phi=float(_require(spec, "phi", context)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def parse_shortfall(spec, context="shortfall"):
    _check_keys(spec, ("utility", "acceptance_level"), context)
    utility = parse_utility(_require(spec, "utility", context),
                            context=f"{context}.utility")
    return Shortfall(utility=utility,
                     acceptance_level=float(spec.get("acceptance_level", 0.0)))


# ---------------------------------------------------------------------------
# MDP specs
# ---------------------------------------------------------------------------

def parse_investment_game(spec, context="investment_game"):
    _check_keys(spec, ("components", "component_std", "discount", "rounds"),
                context)
    kwargs = {}
    if "components" in spec:
        comps = spec["components"]
        if not isinstance(comps, list) or len(comps) != 7:
            raise ConfigError(f"{context}.components: expected 7 per-state "
                              "entries")
        kwargs["components"] = tuple(
            tuple((float(m), float(p)) for m, p in state_comp)
            for state_comp in comps)
    for key in ("component_std", "discount"):
        if key in spec:
            kwargs[key] = float(spec[key])
    if "rounds" in spec:
        kwargs["rounds"] = int(spec["rounds"])
    try:
        return InvestmentGameConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def _parse_reward(spec, context):
    _check_keys(spec, ("type", "values", "probs", "means", "stds", "weights"),
                context)
    kind = _require(spec, "type", context)
    if kind == "discrete":
        values = np.asarray(_require(spec, "values", context), dtype=float)
        probs = np.asarray(_require(spec, "probs", context), dtype=float)
        try:
            return DiscreteReward(FiniteDistribution(values, probs))
        except ValueError as exc:
            raise ConfigError(f"{context}: {exc}") from exc
    if kind == "mixture":
        try:
            return GaussianMixtureReward(
                means=np.asarray(_require(spec, "means", context), dtype=float),
                stds=np.asarray(_require(spec, "stds", context), dtype=float),
                weights=np.asarray(_require(spec, "weights", context), dtype=float))
        except ValueError as exc:
            raise ConfigError(f"{context}: {exc}") from exc
    raise ConfigError(f"{context}: unknown reward type {kind!r}")


def parse_mdp(spec, context="mdp"):
    """Build an Mdp from an explicit table spec or a bundled game.

    Explicit form: {n_states, discount, pairs: [{state, action,
    next: {state: prob}, reward: {...}}, ...]}.
    """
    if "investment_game" in spec:
        _check_keys(spec, ("investment_game",), context)
        from .mdp import build_investment_game
        return build_investment_game(
            parse_investment_game(spec["investment_game"],
                                  context=f"{context}.investment_game"))
    _check_keys(spec, ("n_states", "discount", "pairs"), context)
    n_states = int(_require(spec, "n_states", context))
    discount = float(_require(spec, "discount", context))
    pairs = _require(spec, "pairs", context)
    admissible = [[] for _ in range(n_states)]
    transitions, rewards = {}, {}
    for i, entry in enumerate(pairs):
        ctx = f"{context}.pairs[{i}]"
        _check_keys(entry, ("state", "action", "next", "reward"), ctx)
        s = int(_require(entry, "state", ctx))
        a = int(_require(entry, "action", ctx))
        if not 0 <= s < n_states:
            raise ConfigError(f"{ctx}: state {s} out of range")
        row = np.zeros(n_states)
        for ns, p in _require(entry, "next", ctx).items():
            ns = int(ns)
            if not 0 <= ns < n_states:
                raise ConfigError(f"{ctx}: next state {ns} out of range")
            row[ns] = float(p)
        admissible[s].append(a)
        transitions[(s, a)] = row
        rewards[(s, a)] = _parse_reward(_require(entry, "reward", ctx),
                                        f"{ctx}.reward")
    return Mdp(n_states=n_states,
               admissible=tuple(tuple(sorted(row)) for row in admissible),
               transitions=transitions, rewards=rewards, discount=discount)


# ---------------------------------------------------------------------------
# Learner specs
# ---------------------------------------------------------------------------

def parse_schedule(spec, context="schedule"):
    from .learner import Constant, InverseVisit
    _check_keys(spec, ("type", "alpha"), context)
    kind = _require(spec, "type", context)
    if kind == "inverse_visit":
        return InverseVisit()
    if kind == "constant":
        try:
            return Constant(alpha=float(_require(spec, "alpha", context)))
        except ValueError as exc:
            raise ConfigError(f"{context}: {exc}") from exc
    raise ConfigError(f"{context}: unknown schedule type {kind!r}")


def parse_learner(spec, steps=None, seed=None, context="learner"):
    from .learner import LearnerConfig
    allowed = ("algorithm", "steps", "seed", "utility", "acceptance_level",
               "discount", "schedule", "beta", "start_state", "q_init",
               "reward_bound", "truncation_slope", "clamp_q")
    _check_keys(spec, allowed, context)
    kwargs = {"algorithm": _require(spec, "algorithm", context)}
    if "utility" in spec:
        kwargs["utility"] = parse_utility(spec["utility"],
                                          context=f"{context}.utility")
    if "schedule" in spec:
        kwargs["schedule"] = parse_schedule(spec["schedule"],
                                            context=f"{context}.schedule")
    for key, cast in (("acceptance_level", float), ("discount", float),
                      ("beta", float), ("start_state", int), ("q_init", float),
                      ("reward_bound", float), ("truncation_slope", float),
                      ("clamp_q", bool), ("steps", int), ("seed", int)):
        if key in spec and spec[key] is not None:
            kwargs[key] = cast(spec[key])
    if steps is not None:
        kwargs["steps"] = steps
    if seed is not None:
        kwargs["seed"] = seed
    if "steps" not in kwargs:
        raise ConfigError(f"{context}: missing required key 'steps'")
    try:
        return LearnerConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc
