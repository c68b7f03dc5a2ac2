"""Utility-based shortfall valuation of finite distributions.

The shortfall of a random outcome X under a strictly increasing utility u
and acceptance level x0 is the unique root m* of E[u(X - m)] = x0. The
centralized value m* + y0 (y0 the reference root u(y0) = x0) is a
subjective mean lying between min X and max X.
"""

from dataclasses import dataclass, field
import numpy as np

from .utility import UtilityFunction


class DistributionError(ValueError):
    """Invalid finite distribution."""


class RootBracketError(ArithmeticError):
    """The shortfall root bracket could not be established."""


_NORMALIZE_TOL = 1e-9


@dataclass(frozen=True)
class FiniteDistribution:
    """Finite outcome/probability pairs. Probabilities are normalized on
    construction when their sum deviates from 1 by at most 1e-9; larger
    deviations are rejected."""

    values: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        probs = np.atleast_1d(np.asarray(self.probabilities, dtype=float))
        if values.size == 0:
            raise DistributionError("distribution needs at least one outcome")
        if values.shape != probs.shape:
            raise DistributionError("values and probabilities must align")
        if not np.all(np.isfinite(values)):
            raise DistributionError("outcome values must be finite")
        if np.any(probs < 0):
            raise DistributionError("probabilities must be nonnegative")
        total = probs.sum()
        if abs(total - 1.0) > _NORMALIZE_TOL:
            raise DistributionError(f"probabilities sum to {total}, not 1")
        probs = probs / total
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_pairs(cls, pairs):
        vals, probs = zip(*pairs)
        return cls(np.asarray(vals, float), np.asarray(probs, float))

    @classmethod
    def point(cls, value):
        return cls(np.array([float(value)]), np.array([1.0]))

    @property
    def n_outcomes(self):
        return self.values.size

    @property
    def min(self):
        return float(self.values.min())

    @property
    def max(self):
        return float(self.values.max())

    @property
    def mean(self):
        return float(self.values @ self.probabilities)

    @property
    def variance(self):
        m = self.mean
        return float(((self.values - m) ** 2) @ self.probabilities)

    def shift(self, c):
        return FiniteDistribution(self.values + float(c), self.probabilities)


@dataclass(frozen=True)
class Shortfall:
    """Shortfall valuation induced by a utility and an acceptance level.

    The reference root y0 = u^{-1}(x0) is resolved once at construction.
    """

    utility: UtilityFunction
    acceptance_level: float = 0.0
    y0: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "y0", float(self.utility.inverse(self.acceptance_level)))

    def expected_utility(self, dist, m):
        """E[u(X - m)] under the distribution."""
        u_vals = self.utility(dist.values - m)
        return float(np.asarray(u_vals) @ dist.probabilities)

    def value(self, dist, tol=1e-10):
        """Root m* of E[u(X - m)] = x0, located by bisection.

        The bracket starts at [min X - y0 - 1, max X - y0 + 1] (the
        range-bound shifted by y0) and is widened geometrically if the sign
        condition fails; more than 60 doublings raises RootBracketError.
        A single-outcome distribution short-circuits to v - y0.
        """
        if tol <= 0:
            raise ValueError("tol must be > 0")
        if dist.n_outcomes == 1:
            return dist.min - self.y0
        x0 = self.acceptance_level
        lo = dist.min - self.y0 - 1.0
        hi = dist.max - self.y0 + 1.0

        # g(m) = E[u(X - m)] - x0 is strictly decreasing in m.
        step = 1.0
        for _ in range(61):
            if self.expected_utility(dist, lo) >= x0:
                break
            step *= 2.0
            lo -= step
        else:
            raise RootBracketError("no lower bracket after 60 doublings")
        step = 1.0
        for _ in range(61):
            if self.expected_utility(dist, hi) <= x0:
                break
            step *= 2.0
            hi += step
        else:
            raise RootBracketError("no upper bracket after 60 doublings")

        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break  # bracket at floating-point resolution
            if self.expected_utility(dist, mid) >= x0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def centralized_value(self, dist, tol=1e-10):
        """Subjective mean: shortfall value recentered so that the value of
        the zero outcome is 0. Lies in [min X, max X]."""
        return self.value(dist, tol=tol) + self.y0


def subjective_probability(x1, x2, p, shortfall, tol=1e-10):
    """Perceived probability w(p) of the high outcome in a two-outcome
    gamble (x1 with probability p, x2 otherwise), defined through the
    subjective mean: w(p) = (rho_tilde - x2) / (x1 - x2)."""
    if not x1 > x2:
        raise ValueError("requires x1 > x2")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    dist = FiniteDistribution(np.array([x1, x2], float), np.array([p, 1.0 - p]))
    rho = shortfall.centralized_value(dist, tol=tol)
    return (rho - x2) / (x1 - x2)
