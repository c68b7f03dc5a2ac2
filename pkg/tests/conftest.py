"""Shared fixtures: small MDP builders and the convergence fixture."""

import numpy as np
import pytest

from rsrl.mdp import DiscreteReward, Mdp
from rsrl.shortfall import FiniteDistribution


def two_point(hi, lo, p_hi=0.5):
    return DiscreteReward(FiniteDistribution(np.array([hi, lo], dtype=float),
                                             np.array([p_hi, 1.0 - p_hi])))


def point(v):
    return DiscreteReward(FiniteDistribution.point(v))


def single_state_mdp(reward=1.0, discount=0.5):
    """One state, one action, deterministic reward."""
    return Mdp(n_states=1, admissible=((0,),),
               transitions={(0, 0): np.array([1.0])},
               rewards={(0, 0): point(reward)}, discount=discount)


def random_mdp(rng, n_states=4, n_actions=2, discount=0.8, reward_scale=1.0,
               n_outcomes=2):
    """Random dense MDP with finite two-point rewards."""
    transitions, rewards = {}, {}
    for s in range(n_states):
        for a in range(n_actions):
            transitions[(s, a)] = rng.dirichlet(np.ones(n_states))
            vals = rng.normal(0.0, reward_scale, size=n_outcomes)
            probs = rng.dirichlet(np.ones(n_outcomes))
            rewards[(s, a)] = DiscreteReward(FiniteDistribution(vals, probs))
    return Mdp(n_states=n_states,
               admissible=tuple(tuple(range(n_actions)) for _ in range(n_states)),
               transitions=transitions, rewards=rewards, discount=discount)


# Fixed 3-state, 2-action MDP used by the Q-learning convergence checks.
# Transition rows list two probabilities; the third is the complement so
# every row sums to exactly 1.
_FIXTURE_ROWS = {
    (0, 0): (0.395462, 0.593018),
    (0, 1): (0.001040, 0.252156),
    (1, 0): (0.158652, 0.177899),
    (1, 1): (0.648202, 0.351660),
    (2, 0): (0.665230, 0.021254),
    (2, 1): (0.195029, 0.723643),
}
_FIXTURE_REWARDS = {
    (0, 0): (0.7058, -0.2942),
    (0, 1): (1.0213, 0.0213),
    (1, 0): (0.4357, -0.5643),
    (1, 1): (1.1832, 0.1832),
    (2, 0): (0.1674, -0.8326),
    (2, 1): (0.6758, -0.3242),
}


def convergence_fixture_mdp():
    transitions = {k: np.array([p0, p1, 1.0 - p0 - p1])
                   for k, (p0, p1) in _FIXTURE_ROWS.items()}
    rewards = {k: two_point(hi, lo) for k, (hi, lo) in _FIXTURE_REWARDS.items()}
    return Mdp(n_states=3, admissible=((0, 1), (0, 1), (0, 1)),
               transitions=transitions, rewards=rewards, discount=0.5)


@pytest.fixture
def fixture_mdp():
    return convergence_fixture_mdp()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
