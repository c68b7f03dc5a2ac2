"""Utility functions for shortfall valuations.

All utilities are strictly increasing scalar transforms. They evaluate
vectorized on numpy arrays and expose an ``inverse`` used to locate the
reference root y0 with u(y0) = x0.
"""

from dataclasses import dataclass, field
import numpy as np


class UtilityError(ValueError):
    """Invalid utility parameters or unsupported operation."""


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise UtilityError("utility argument must be finite")
    return arr


class UtilityFunction:
    """Base class; subclasses implement _eval on float arrays."""

    def __call__(self, x):
        arr = _as_array(x)
        out = self._eval(arr)
        if np.isscalar(x) or np.ndim(x) == 0:
            return float(out)
        return out

    def _eval(self, x):
        raise NotImplementedError

    def inverse(self, y):
        """Solve u(x) = y. Subclasses override with closed forms."""
        return _numeric_inverse(self, float(y))


def _numeric_inverse(u, y, tol=1e-13):
    lo, hi = -1.0, 1.0
    step = 1.0
    for _ in range(200):
        if u(lo) <= y:
            break
        step *= 2.0
        lo -= step
    else:
        raise UtilityError("inverse bracket not found (lower)")
    step = 1.0
    for _ in range(200):
        if u(hi) >= y:
            break
        step *= 2.0
        hi += step
    else:
        raise UtilityError("inverse bracket not found (upper)")
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if u(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Linear(UtilityFunction):
    """u(x) = x."""

    def _eval(self, x):
        return x

    def inverse(self, y):
        return float(y)


@dataclass(frozen=True)
class Entropic(UtilityFunction):
    """u(x) = exp(lam * x); canonical acceptance level is 1."""

    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise UtilityError("Entropic requires lam > 0; use ExponentialUtility "
                               "for the risk-averse (negative rate) form")

    def _eval(self, x):
        return np.exp(self.lam * x)

    def inverse(self, y):
        if y <= 0:
            raise UtilityError("Entropic inverse requires y > 0")
        return float(np.log(y) / self.lam)


@dataclass(frozen=True)
class ExponentialUtility(UtilityFunction):
    """u(x) = (exp(rate * x) - 1) / rate, increasing for any rate != 0.

    Induces the entropic valuation (1/rate) * log E[exp(rate * X)] at
    acceptance level 0. rate = -1 gives 1 - exp(-x), rate = 1 gives
    exp(x) - 1.
    """

    rate: float

    def __post_init__(self):
        if self.rate == 0:
            raise UtilityError("rate must be nonzero (use Linear)")

    def _eval(self, x):
        return np.expm1(self.rate * x) / self.rate

    def inverse(self, y):
        z = self.rate * y
        if z <= -1:
            raise UtilityError("value outside the range of ExponentialUtility")
        return float(np.log1p(z) / self.rate)


@dataclass(frozen=True)
class PiecewiseLinear(UtilityFunction):
    """Two-slope utility: (1 - kappa) x on gains, (1 + kappa) x on losses."""

    kappa: float

    def __post_init__(self):
        if not -1.0 < self.kappa < 1.0:
            raise UtilityError("kappa must lie in (-1, 1)")

    def _eval(self, x):
        return np.where(x > 0, (1.0 - self.kappa) * x, (1.0 + self.kappa) * x)

    def inverse(self, y):
        if y > 0:
            return float(y / (1.0 - self.kappa))
        return float(y / (1.0 + self.kappa))


@dataclass(frozen=True)
class PolynomialMixed(UtilityFunction):
    """Mixed power utility: k_plus x^l_plus on gains, -k_minus (-x)^l_minus on losses."""

    k_plus: float
    l_plus: float
    k_minus: float
    l_minus: float

    def __post_init__(self):
        if min(self.k_plus, self.l_plus, self.k_minus, self.l_minus) <= 0:
            raise UtilityError("polynomial utility requires k and l parameters > 0")

    def _eval(self, x):
        pos = x >= 0
        out = np.empty_like(x)
        out[pos] = self.k_plus * np.power(x[pos], self.l_plus)
        out[~pos] = -self.k_minus * np.power(-x[~pos], self.l_minus)
        return out

    def inverse(self, y):
        if y >= 0:
            return float((y / self.k_plus) ** (1.0 / self.l_plus))
        return float(-((-y / self.k_minus) ** (1.0 / self.l_minus)))


@dataclass(frozen=True)
class ShiftedPolynomial(UtilityFunction):
    """Shifted-power smoothing of PolynomialMixed: (x + phi)^l - phi^l per branch."""

    k_plus: float
    l_plus: float
    k_minus: float
    l_minus: float
    phi: float

    def __post_init__(self):
        if min(self.k_plus, self.l_plus, self.k_minus, self.l_minus) <= 0:
            raise UtilityError("polynomial utility requires k and l parameters > 0")
        if self.phi <= 0:
            raise UtilityError("phi must be > 0")

    def _eval(self, x):
        pos = x >= 0
        out = np.empty_like(x)
        out[pos] = self.k_plus * (np.power(x[pos] + self.phi, self.l_plus)
                                  - self.phi ** self.l_plus)
        out[~pos] = -self.k_minus * (np.power(-x[~pos] + self.phi, self.l_minus)
                                     - self.phi ** self.l_minus)
        return out

    def inverse(self, y):
        if y >= 0:
            return float((y / self.k_plus + self.phi ** self.l_plus)
                         ** (1.0 / self.l_plus) - self.phi)
        return float(-((-y / self.k_minus + self.phi ** self.l_minus)
                       ** (1.0 / self.l_minus) - self.phi))


@dataclass(frozen=True)
class Truncated(UtilityFunction):
    """Inner utility on [lower, upper], continued linearly with the given slope."""

    inner: UtilityFunction
    lower: float
    upper: float
    slope: float
    u_lower: float = field(init=False)
    u_upper: float = field(init=False)

    def __post_init__(self):
        if not self.lower < self.upper:
            raise UtilityError("truncation requires lower < upper")
        if self.slope <= 0:
            raise UtilityError("truncation slope must be > 0")
        object.__setattr__(self, "u_lower", float(self.inner(self.lower)))
        object.__setattr__(self, "u_upper", float(self.inner(self.upper)))

    def _eval(self, x):
        mid = self.inner(np.clip(x, self.lower, self.upper))
        out = np.where(x < self.lower, self.u_lower + self.slope * (x - self.lower),
                       np.where(x > self.upper,
                                self.u_upper + self.slope * (x - self.upper), mid))
        return out

    def inverse(self, y):
        if y < self.u_lower:
            return float(self.lower + (y - self.u_lower) / self.slope)
        if y > self.u_upper:
            return float(self.upper + (y - self.u_upper) / self.slope)
        return self.inner.inverse(y)


@dataclass(frozen=True)
class LinearizedNearZero(UtilityFunction):
    """Inner utility with the chord through (0, u(0)) and (+-phi, u(+-phi))
    substituted on (-phi, phi), giving a strictly positive slope at 0."""

    inner: UtilityFunction
    phi: float
    u_zero: float = field(init=False)
    slope_pos: float = field(init=False)
    slope_neg: float = field(init=False)

    def __post_init__(self):
        if self.phi <= 0:
            raise UtilityError("phi must be > 0")
        u0 = float(self.inner(0.0))
        object.__setattr__(self, "u_zero", u0)
        object.__setattr__(self, "slope_pos",
                           (float(self.inner(self.phi)) - u0) / self.phi)
        object.__setattr__(self, "slope_neg",
                           (u0 - float(self.inner(-self.phi))) / self.phi)

    def _eval(self, x):
        out = np.asarray(self.inner(x), dtype=float).copy()
        near_pos = (x >= 0) & (x < self.phi)
        near_neg = (x < 0) & (x > -self.phi)
        out[near_pos] = self.u_zero + self.slope_pos * x[near_pos]
        out[near_neg] = self.u_zero + self.slope_neg * x[near_neg]
        return out

    def inverse(self, y):
        hi = self.u_zero + self.slope_pos * self.phi
        lo = self.u_zero - self.slope_neg * self.phi
        if self.u_zero <= y < hi:
            return float((y - self.u_zero) / self.slope_pos)
        if lo < y < self.u_zero:
            return float((y - self.u_zero) / self.slope_neg)
        return self.inner.inverse(y)


@dataclass(frozen=True)
class SlopeBounds:
    """Divided-difference bounds of a utility on an interval."""

    lower: float
    upper: float
    interval: tuple
    ok: bool


def slope_bounds(u, interval, grid_n=201, tol=1e-12):
    """Min/max divided differences of u over all pairs of a uniform grid.

    ``ok`` is False when the lower bound is not strictly positive or the
    upper bound is not finite, in which case the utility violates the
    two-sided slope condition on this interval.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise UtilityError("interval must satisfy a < b")
    if grid_n < 2:
        raise UtilityError("grid_n must be >= 2")
    xs = np.linspace(a, b, grid_n)
    ys = np.asarray(u(xs), dtype=float)
    i, j = np.triu_indices(grid_n, k=1)
    slopes = (ys[j] - ys[i]) / (xs[j] - xs[i])
    lo = float(np.min(slopes))
    hi = float(np.max(slopes))
    ok = lo > tol and np.isfinite(hi)
    return SlopeBounds(lower=lo, upper=hi, interval=(a, b), ok=ok)


def truncate(u, x0, reward_bound, discount, slope=None, slope_floor=1e-6):
    """Truncate u outside [y0 - 2R/(1-g), y0 + 2R/(1-g)], R the reward bound.

    The default continuation slope is the grid-estimated lower slope of u
    on the kept interval, floored at ``slope_floor``.
    """
    if reward_bound <= 0:
        raise UtilityError("reward_bound must be > 0")
    if not 0.0 <= discount < 1.0:
        raise UtilityError("discount must lie in [0, 1)")
    y0 = u.inverse(x0)
    half_width = 2.0 * reward_bound / (1.0 - discount)
    lower = y0 - half_width
    upper = y0 + half_width
    if slope is None:
        slope = max(slope_bounds(u, (lower, upper)).lower, slope_floor)
    return Truncated(inner=u, lower=lower, upper=upper, slope=float(slope))


def linearize_near_zero(u, phi, scheme="linear"):
    """Remove degenerate slope at 0 by chord substitution or shifted powers."""
    if phi <= 0:
        raise UtilityError("phi must be > 0")
    if scheme == "linear":
        return LinearizedNearZero(inner=u, phi=float(phi))
    if scheme == "shift":
        if not isinstance(u, PolynomialMixed):
            raise UtilityError("shift scheme applies to polynomial mixed utilities only")
        return ShiftedPolynomial(u.k_plus, u.l_plus, u.k_minus, u.l_minus, float(phi))
    raise UtilityError(f"unknown linearization scheme: {scheme!r}")


def is_strictly_increasing(u, interval=(-20.0, 20.0), grid_n=2001):
    xs = np.linspace(interval[0], interval[1], grid_n)
    ys = np.asarray(u(xs), dtype=float)
    return bool(np.all(np.diff(ys) > 0))
