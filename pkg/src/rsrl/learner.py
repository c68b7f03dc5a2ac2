"""Model-free tabular algorithms: risk-sensitive Q-learning (plain and
truncated), the expected-utility variant, standard Q-learning, softmax
exploration, and visit diagnostics.

The simulation loop is compiled (see _kernels); the step-level operations
here are the reference implementations used by tests and by anyone who
wants to single-step an update by hand.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .mdp import Transition
from .utility import Linear, UtilityFunction, truncate


class LearnerError(RuntimeError):
    """Numeric failure during a learning run."""


@dataclass(frozen=True)
class InverseVisit:
    """alpha_t = 1 / N(s_t, a_t) — the Robbins-Monro harmonic schedule."""


@dataclass(frozen=True)
class Constant:
    """Fixed learning rate in (0, 1]."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("constant alpha must lie in (0, 1]")


ALGORITHMS = ("standard", "rsql", "rsql_truncated", "eu")


@dataclass(frozen=True)
class LearnerConfig:
    """Everything a run needs besides the MDP itself.

    discount defaults to the MDP's own discount when None. For
    rsql_truncated, reward_bound defaults to the MDP's reward bound and the
    truncation slope to the grid-estimated inner slope; clamp_q addition-
    ally clamps the Q table to the Lemma bounds after every update.
    """

    algorithm: str
    steps: int
    seed: int = 0
    utility: UtilityFunction = field(default_factory=Linear)
    acceptance_level: float = 0.0
    discount: float = None
    schedule: object = field(default_factory=InverseVisit)
    beta: float = 1.0
    start_state: int = 0
    q_init: float = 0.0
    reward_bound: float = None
    truncation_slope: float = None
    clamp_q: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; "
                             f"expected one of {ALGORITHMS}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.discount is not None and not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")


@dataclass(frozen=True)
class RunTrace:
    """Per-step record of one run, reproducible from (mdp, config)."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    td: np.ndarray
    update: np.ndarray

    def __len__(self):
        return self.states.size

    def to_transitions(self, steps_per_round=None):
        rounds = (np.arange(len(self)) // steps_per_round
                  if steps_per_round else np.zeros(len(self), dtype=np.int64))
        return [Transition(t=t, state=int(self.states[t]),
                           action=int(self.actions[t]),
                           reward=float(self.rewards[t]),
                           next_state=int(self.next_states[t]),
                           round=int(rounds[t]))
                for t in range(len(self))]


@dataclass(frozen=True)
class RunResult:
    q: np.ndarray
    counts: np.ndarray
    trace: RunTrace


def _resolve_utility(mdp, cfg, gamma):
    if cfg.algorithm != "rsql_truncated":
        return cfg.utility
    r_bar = cfg.reward_bound
    if r_bar is None:
        r_bar, _ = mdp.reward_bound()
    return truncate(cfg.utility, cfg.acceptance_level, r_bar, gamma,
                    slope=cfg.truncation_slope)


def run(mdp, cfg):
    """Execute cfg.steps iterations of sample -> update -> count.

    Fully reproducible from (mdp, cfg): the seed fixes action draws,
    rewards, and state transitions.
    """
    gamma = mdp.discount if cfg.discount is None else cfg.discount
    utility = _resolve_utility(mdp, cfg, gamma)
    uparams = _kernels.flatten_utility(utility)
    algo = {"standard": _kernels.ALGO_STANDARD,
            "rsql": _kernels.ALGO_RSQL,
            "rsql_truncated": _kernels.ALGO_RSQL,
            "eu": _kernels.ALGO_EU}[cfg.algorithm]
    if isinstance(cfg.schedule, Constant):
        alpha_mode, alpha_const = _kernels.ALPHA_CONSTANT, cfg.schedule.alpha
    elif isinstance(cfg.schedule, InverseVisit):
        alpha_mode, alpha_const = _kernels.ALPHA_INVERSE_VISIT, 0.0
    else:
        raise ValueError(f"unknown schedule {cfg.schedule!r}")
    if not mdp.is_admissible(cfg.start_state, mdp.admissible[cfg.start_state][0]):
        raise ValueError(f"invalid start state {cfg.start_state}")

    clamp_lo = clamp_hi = 0.0
    if cfg.clamp_q:
        r_bar = cfg.reward_bound
        if r_bar is None:
            r_bar, _ = mdp.reward_bound()
        y0 = utility.inverse(cfg.acceptance_level)
        clamp_lo = (-r_bar - y0) / (1.0 - gamma)
        clamp_hi = (r_bar - y0) / (1.0 - gamma)

    packed = _kernels.pack_mdp(mdp)
    (q, counts, st, ac, rw, ns, td, up, status, step) = _kernels.run_kernel(
        cfg.seed, cfg.steps, cfg.start_state, *packed,
        algo, uparams, cfg.acceptance_level, alpha_mode, alpha_const,
        cfg.beta, gamma, 1 if cfg.clamp_q else 0, clamp_lo, clamp_hi,
        cfg.q_init)
    if status != 0:
        raise LearnerError(f"non-finite update at step {step}")
    trace = RunTrace(states=st, actions=ac, rewards=rw, next_states=ns,
                     td=td, update=up)
    return RunResult(q=q, counts=counts, trace=trace)


# ---------------------------------------------------------------------------
# Reference step-level operations
# ---------------------------------------------------------------------------

def softmax_probabilities(q_row, beta, admissible=None):
    """Softmax over a Q row with max-subtraction; inadmissible actions get
    probability 0."""
    q_row = np.asarray(q_row, dtype=float)
    if admissible is None:
        admissible = range(q_row.size)
    mask = np.zeros(q_row.size, dtype=bool)
    mask[list(admissible)] = True
    z = np.full(q_row.size, -np.inf)
    z[mask] = beta * (q_row[mask] - q_row[mask].max())
    w = np.exp(z)
    w[~mask] = 0.0
    return w / w.sum()


def softmax_action(q_row, beta, rng, admissible=None):
    p = softmax_probabilities(q_row, beta, admissible)
    return int(rng.choice(p.size, p=p))


def td_error(q, transition, gamma, admissible=None):
    """r + gamma * max_a Q(s', a) - Q(s, a)."""
    q = np.asarray(q, dtype=float)
    s, a, ns = transition.state, transition.action, transition.next_state
    acts = admissible[ns] if admissible is not None else range(q.shape[1])
    mx = max(q[ns, b] for b in acts)
    return float(transition.reward + gamma * mx - q[s, a])


def rsql_step(q, transition, utility, acceptance_level, alpha, gamma,
              admissible=None):
    """Apply one risk-sensitive update in place; returns the new entry."""
    td = td_error(q, transition, gamma, admissible)
    update = alpha * (utility(td) - acceptance_level)
    if not np.isfinite(update):
        raise LearnerError(f"non-finite update at t={transition.t}")
    q[transition.state, transition.action] += update
    return float(q[transition.state, transition.action])


def eu_step(q, transition, utility, acceptance_level, alpha, gamma,
            admissible=None):
    """Expected-utility update: the transform hits the reward alone."""
    s, a, ns = transition.state, transition.action, transition.next_state
    acts = admissible[ns] if admissible is not None else range(q.shape[1])
    mx = max(q[ns, b] for b in acts)
    update = alpha * (utility(transition.reward) - acceptance_level
                      + gamma * mx - q[s, a])
    if not np.isfinite(update):
        raise LearnerError(f"non-finite update at t={transition.t}")
    q[s, a] += update
    return float(q[s, a])


@dataclass(frozen=True)
class ExplorationReport:
    counts: np.ndarray
    min_count: int
    starved: tuple   # admissible pairs never visited

    @property
    def proper(self):
        return not self.starved


def exploration_report(counts, admissible=None):
    """Visit-count diagnostics; flags admissible pairs with zero visits."""
    counts = np.asarray(counts)
    if admissible is None:
        pairs = [(s, a) for s in range(counts.shape[0])
                 for a in range(counts.shape[1])]
    else:
        pairs = [(s, a) for s in range(counts.shape[0])
                 for a in admissible[s]]
    starved = tuple(p for p in pairs if counts[p] == 0)
    min_count = int(min(counts[p] for p in pairs))
    return ExplorationReport(counts=counts, min_count=min_count,
                             starved=starved)
