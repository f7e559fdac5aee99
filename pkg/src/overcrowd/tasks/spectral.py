from __future__ import annotations

import math
import numpy as np
import pandas as pd

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from scipy import integrate, optimize, special

from overcrowd.utils.errors import DivergentMoment, OrderTooLarge, QuadratureFailure, SamplingUnsupported

MASS_TOL = 1e-10        # total mass tolerance after normalization
TAIL_TOL = 1e-14        # relative tail contribution beyond the cutoff
GRID_REL_TOL = 1e-6     # Richardson error tolerance of grid density moments
LOG_MAX_FLOAT = 709.78  # log of the largest double
LOG_PI = math.log(math.pi)


def log_binom(n: int, k: int) -> float:
    """Logarithm of the binomial coefficient."""
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def angular_log_moment(m: int, n: int) -> float:
    """log of the mean of |cos|^m |sin|^n over the circle."""
    return (special.gammaln((m + 1) / 2) + special.gammaln((n + 1) / 2)
            - LOG_PI - special.gammaln((m + n) / 2 + 1))


def _log_powers(x: np.ndarray, n: float) -> np.ndarray:
    """n log|x| with the convention 0^0 = 1."""
    x = np.abs(np.asarray(x, dtype=float))
    if n == 0:
        return np.zeros_like(x)
    with np.errstate(divide="ignore"):
        return n * np.log(x)


def _logsumexp(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    if v.size == 0 or np.all(np.isneginf(v)):
        return -np.inf
    return float(special.logsumexp(v))


# One dimensional spectral measures

class SpectralMeasure1D(ABC):
    """Symmetric probability measure on the line."""
    family: str = ""
    closed_form: bool = True   # closed form moments available
    has_density: bool = True   # absolutely continuous

    @abstractmethod
    def log_moment(self, n: int) -> float:
        """log C_n = log of the integral of |x|^n."""

    @abstractmethod
    def log_density(self, x) -> np.ndarray:
        """Log density, -inf outside the support."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw frequencies."""

    @abstractmethod
    def params(self) -> dict:
        """Family parameters (as in the measure spec)."""

    @property
    def support_max(self) -> float:
        """Right end of the support (inf when unbounded)."""
        return math.inf

    def density(self, x) -> np.ndarray:
        """Density of the absolutely continuous part."""
        return np.exp(self.log_density(x))

    def spec(self) -> dict:
        """Measure spec (JSON/TOML form)."""
        return {"family": self.family, **self.params()}

    @property
    def ident(self) -> str:
        """Short readable id."""
        p = ",".join(f"{k}={v}" for k, v in self.params().items() if not isinstance(v, (list, np.ndarray)))
        return f"{self.family}({p})"

    def cutoff(self, order: int = 0, tol: float = TAIL_TOL) -> float:
        """
        Truncation point Lambda beyond which the tail contributes less than `tol`
        (relative) to the moment of the given order.
        :param order: moment order the tail is measured against
        :param tol: relative tail tolerance
        :return: cutoff Lambda
        """
        if math.isfinite(self.support_max):
            return self.support_max

        log_target = self.log_moment(order) - math.log(2) + math.log(tol)

        def g(x):  # log of a tail majorant minus the target
            return (order + 1) * math.log(x) + float(self.log_density(x)) - log_target

        x = 1.0
        for _ in range(200):
            if g(x) < 0 and g(2 * x) < g(x):
                break
            x *= 2
        else:
            raise DivergentMoment(f"{self.ident}: no cutoff found for order {order}")

        lo = x / 2
        if g(lo) < 0:
            return x
        return optimize.brentq(g, lo, x, xtol=1e-12 * x)

    def quadrature_log_moment(self, n: int) -> float:
        """log C_n by adaptive quadrature around the peak of x^n f(x)."""
        lam = self.cutoff(n)

        def h(x):
            with np.errstate(divide="ignore"):
                return float(_log_powers(x, n)) + float(self.log_density(x))

        res = optimize.minimize_scalar(lambda x: -h(x), bounds=(0.0, lam), method="bounded",
                                       options={"xatol": 1e-10 * max(1.0, lam)})
        x_star = float(res.x)
        h_star = max(h(x_star), h(0.0), h(lam))
        if not math.isfinite(h_star):
            raise DivergentMoment(f"{self.ident}: integrand not finite at order {n}")

        total = 0.0
        for a, b in [(0.0, x_star), (x_star, lam)]:
            if b <= a:
                continue
            val, err = integrate.quad(lambda x: math.exp(h(x) - h_star), a, b,
                                      epsabs=0.0, epsrel=1e-13, limit=400)
            total += val
        if not (total > 0 and math.isfinite(total)):
            raise DivergentMoment(f"{self.ident}: quadrature failed at order {n}")

        return math.log(2.0) + h_star + math.log(total)

    def __repr__(self):
        return self.ident


@dataclass(frozen=True, eq=False, repr=False)
class Uniform(SpectralMeasure1D):
    """Uniform measure on [-q, q]."""
    q: float = 1.0
    family = "uniform"

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("uniform: q must be positive")

    @property
    def support_max(self) -> float:
        return self.q

    def log_moment(self, n: int) -> float:
        return n * math.log(self.q) - math.log(n + 1)

    def log_density(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=float))
        return np.where(x <= self.q, -math.log(2 * self.q), -np.inf)

    def sample(self, rng, size):
        return rng.uniform(-self.q, self.q, size)

    def params(self) -> dict:
        return {"q": self.q}


@dataclass(frozen=True, eq=False, repr=False)
class StdNormal(SpectralMeasure1D):
    """Standard Gaussian measure."""
    family = "stdnormal"

    def log_moment(self, n: int) -> float:
        return 0.5 * n * math.log(2) + special.gammaln((n + 1) / 2) - 0.5 * LOG_PI

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -0.5 * x * x - 0.5 * math.log(2 * math.pi)

    def sample(self, rng, size):
        return rng.standard_normal(size)

    def params(self) -> dict:
        return {}


@dataclass(frozen=True, eq=False, repr=False)
class StretchedExp(SpectralMeasure1D):
    """Density proportional to exp(-|x|^(1/alpha))."""
    alpha: float = 1.0
    family = "stretched_exp"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("stretched_exp: alpha must be positive")

    @property
    def log_norm(self) -> float:
        return math.log(2 * self.alpha) + special.gammaln(self.alpha)

    def log_moment(self, n: int) -> float:
        return special.gammaln(self.alpha * (n + 1)) - special.gammaln(self.alpha)

    def log_density(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=float))
        return -x ** (1 / self.alpha) - self.log_norm

    def sample(self, rng, size):
        r = rng.gamma(self.alpha, 1.0, size) ** self.alpha
        return r * rng.choice([-1.0, 1.0], size)

    def params(self) -> dict:
        return {"alpha": self.alpha}


@dataclass(frozen=True, eq=False, repr=False)
class LogType(SpectralMeasure1D):
    """Density proportional to exp(-(log|x|)^(1+gamma)) on |x| >= 1."""
    gamma: float = 1.0
    family = "log_type"
    closed_form = False
    _table: tuple = field(default=None, init=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise DivergentMoment("log_type: gamma must be positive for finite moments")
        # inverse CDF table of u = log|x|
        u_hi = self._u_range(0)[1]
        u = np.linspace(0.0, u_hi, 8193)
        w = np.exp(self._g(u, 0) - self._g(self._u_peak(0), 0))
        cdf = integrate.cumulative_trapezoid(w, u, initial=0.0)
        object.__setattr__(self, "_table", (u, cdf / cdf[-1]))

    def _g(self, u, n):
        return (n + 1) * u - u ** (1 + self.gamma)

    def _u_peak(self, n) -> float:
        return ((n + 1) / (1 + self.gamma)) ** (1 / self.gamma)

    def _u_range(self, n, drop: float = 60.0) -> tuple[float, float]:
        """Peak and the point beyond it where the log integrand has dropped by `drop`."""
        u_star = self._u_peak(n)
        g_star = self._g(u_star, n)
        hi = 2 * u_star + 1
        while self._g(hi, n) - g_star > -drop:
            hi *= 2
        u_hi = optimize.brentq(lambda u: self._g(u, n) - g_star + drop, u_star, hi)
        return u_star, u_hi

    def _log_integral(self, n: int) -> float:
        """log of the integral over u >= 0 of exp((n+1)u - u^(1+gamma))."""
        u_star, u_hi = self._u_range(n)
        g_star = self._g(u_star, n)
        total = 0.0
        for a, b in [(0.0, u_star), (u_star, u_hi)]:
            val, _ = integrate.quad(lambda u: math.exp(self._g(u, n) - g_star), a, b,
                                    epsabs=0.0, epsrel=1e-13, limit=400)
            total += val
        if not (total > 0 and math.isfinite(total)):
            raise DivergentMoment(f"{self.ident}: quadrature failed at order {n}")
        return g_star + math.log(total)

    @property
    def log_norm(self) -> float:
        return math.log(2) + self._log_integral(0)

    def log_moment(self, n: int) -> float:
        if n == 0:
            return 0.0
        return self._log_integral(n) - self._log_integral(0)

    def quadrature_log_moment(self, n: int) -> float:
        return self.log_moment(n)

    def cutoff(self, order: int = 0, tol: float = TAIL_TOL) -> float:
        return math.exp(self._u_range(order, drop=-math.log(tol) + 5)[1])

    def log_density(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.log(np.maximum(x, 1.0))
            return np.where(x >= 1.0, -u ** (1 + self.gamma) - self.log_norm, -np.inf)

    def sample(self, rng, size):
        u, cdf = self._table
        r = np.exp(np.interp(rng.uniform(0.0, 1.0, size), cdf, u))
        return r * rng.choice([-1.0, 1.0], size)

    def params(self) -> dict:
        return {"gamma": self.gamma}


@dataclass(frozen=True, eq=False, repr=False)
class Arcsine(SpectralMeasure1D):
    """Density 1/(pi sqrt(1-x^2)) on (-1, 1): axis marginal of the uniform measure on the circle."""
    family = "arcsine"

    @property
    def support_max(self) -> float:
        return 1.0

    def log_moment(self, n: int) -> float:
        return special.gammaln((n + 1) / 2) - 0.5 * LOG_PI - special.gammaln(n / 2 + 1)

    def quadrature_log_moment(self, n: int) -> float:
        # algebraic end point weight (1-x)^(-1/2)
        val, _ = integrate.quad(lambda x: x ** n / (math.pi * math.sqrt(1 + x)), 0.0, 1.0,
                                weight="alg", wvar=(0.0, -0.5), epsabs=0.0, epsrel=1e-13)
        return math.log(2 * val)

    def log_density(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x < 1.0, -LOG_PI - 0.5 * np.log1p(-np.minimum(x, 1.0) ** 2), -np.inf)

    def sample(self, rng, size):
        return np.cos(2 * np.pi * rng.uniform(0.0, 1.0, size))

    def params(self) -> dict:
        return {}


@dataclass(frozen=True, eq=False, repr=False)
class Atomic(SpectralMeasure1D):
    """
    Atoms at +-frequency. Each frequency carries the total weight of its symmetric pair
    (a zero frequency is a single atom at the origin).
    """
    frequencies: np.ndarray = None
    weights: np.ndarray = None
    family = "atomic"
    has_density = False

    def __post_init__(self):
        lam = np.abs(np.atleast_1d(np.asarray(self.frequencies, dtype=float)))
        w = np.atleast_1d(np.asarray(self.weights if self.weights is not None else np.ones_like(lam), dtype=float))
        if lam.size == 0 or lam.shape != w.shape:
            raise ValueError("atomic: frequencies and weights must be non-empty and of equal length")
        if np.any(w <= 0) or not np.all(np.isfinite(lam)):
            raise ValueError("atomic: weights must be positive and frequencies finite")
        object.__setattr__(self, "frequencies", lam)
        object.__setattr__(self, "weights", w / w.sum())

    @property
    def support_max(self) -> float:
        return float(self.frequencies.max())

    def log_moment(self, n: int) -> float:
        return _logsumexp(np.log(self.weights) + _log_powers(self.frequencies, n))

    def quadrature_log_moment(self, n: int) -> float:
        return self.log_moment(n)

    def log_density(self, x) -> np.ndarray:
        return np.full_like(np.asarray(x, dtype=float), -np.inf)

    def sample(self, rng, size):
        idx = rng.choice(self.frequencies.size, size=size, p=self.weights)
        return self.frequencies[idx] * rng.choice([-1.0, 1.0], size)

    def params(self) -> dict:
        return {"frequencies": self.frequencies.tolist(), "weights": self.weights.tolist()}

    @property
    def ident(self) -> str:
        return f"atomic(k={self.frequencies.size})"


@dataclass(frozen=True, eq=False, repr=False)
class GridDensity(SpectralMeasure1D):
    """
    Density tabulated on a symmetric uniform grid of [-Lambda, Lambda] (odd point count).
    Values are symmetrized and normalized with the trapezoid rule; linear in between nodes.
    """
    x: np.ndarray = None
    values: np.ndarray = None
    tabulate_cdf: bool = True
    family = "grid"
    closed_form = False
    _cdf: np.ndarray = field(default=None, init=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.size < 3 or x.size % 2 == 0 or x.shape != v.shape:
            raise ValueError("grid: need an odd number (>= 3) of grid points and matching values")
        h = (x[-1] - x[0]) / (x.size - 1)
        if not (h > 0 and np.allclose(np.diff(x), h, rtol=1e-9, atol=0)
                and np.allclose(x, -x[::-1], atol=1e-9 * x[-1])):
            raise ValueError("grid: points must form a uniform grid symmetric about 0")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("grid: density values must be finite and nonnegative")
        v = 0.5 * (v + v[::-1])
        mass = integrate.trapezoid(v, x)
        if not mass > 0:
            raise ValueError("grid: density has zero mass")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v / mass)
        if self.tabulate_cdf:
            cdf = integrate.cumulative_trapezoid(self.values, x, initial=0.0)
            object.__setattr__(self, "_cdf", cdf / cdf[-1])

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def support_max(self) -> float:
        return float(self.x[-1])

    def density(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.x, self.values, left=0.0, right=0.0)

    def log_density(self, x) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.density(x))

    def _trapezoid_log(self, n: int, step: int) -> tuple[float, float]:
        """Scaled trapezoid sum of |x|^n f on the grid with the given node stride."""
        x, v = self.x[::step], self.values[::step]
        with np.errstate(divide="ignore"):
            logs = _log_powers(x, n) + np.log(v)
        top = np.max(logs)
        return top, integrate.trapezoid(np.exp(logs - top), dx=self.spacing * step)

    def grid_log_moment(self, n: int) -> tuple[float, float]:
        """
        log C_n by trapezoid rule with Richardson extrapolation against the 2h sub-grid.
        :return: log moment, relative error estimate
        """
        def richardson(k):
            top, t_h = self._trapezoid_log(k, 1)
            _, t_2h = self._trapezoid_log(k, 2)
            value = t_h + (t_h - t_2h) / 3
            return top, value, abs(t_h - t_2h) / 3

        top0, v0, _ = richardson(0)
        top, v, err = richardson(n)
        if not (v > 0 and v0 > 0):
            raise DivergentMoment(f"{self.ident}: grid moment of order {n} not positive")
        return top + math.log(v) - top0 - math.log(v0), err / v

    def log_moment(self, n: int) -> float:
        if n == 0:
            return 0.0
        return self.grid_log_moment(n)[0]

    def quadrature_log_moment(self, n: int) -> float:
        return self.log_moment(n)

    def sample(self, rng, size):
        if self._cdf is None:
            raise SamplingUnsupported("grid density has no CDF table")
        return np.interp(rng.uniform(0.0, 1.0, size), self._cdf, self.x)

    def params(self) -> dict:
        return {"x": self.x.tolist(), "values": self.values.tolist()}

    @property
    def ident(self) -> str:
        return f"grid(points={self.x.size},lambda={self.support_max:g})"


# Radial profiles: measures on [0, inf)

class RadialProfile(ABC):
    """Probability measure on the half line (law of |lambda| for a planar spectral measure)."""
    has_density: bool = True

    @abstractmethod
    def log_moment(self, k: int) -> float:
        """log of the integral of t^k."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw radii."""

    def density(self, t) -> np.ndarray:
        raise SamplingUnsupported(f"{type(self).__name__} has no density")

    @property
    def support_min(self) -> float:
        return 0.0

    def cutoff(self, order: int = 0) -> float:
        return math.inf

    @property
    def is_origin(self) -> bool:
        """All mass at the origin."""
        return False


@dataclass(frozen=True, eq=False)
class RadialAtoms(RadialProfile):
    """Atoms at the given radii."""
    radii: np.ndarray = None
    weights: np.ndarray = None
    has_density = False

    def __post_init__(self):
        r = np.abs(np.atleast_1d(np.asarray(self.radii, dtype=float)))
        w = np.atleast_1d(np.asarray(self.weights if self.weights is not None else np.ones_like(r), dtype=float))
        if r.size == 0 or r.shape != w.shape or np.any(w <= 0):
            raise ValueError("radial atoms: radii and positive weights of equal length required")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "weights", w / w.sum())

    def log_moment(self, k: int) -> float:
        return _logsumexp(np.log(self.weights) + _log_powers(self.radii, k))

    def sample(self, rng, size):
        return self.radii[rng.choice(self.radii.size, size=size, p=self.weights)]

    @property
    def support_min(self) -> float:
        return float(self.radii.min())

    def cutoff(self, order: int = 0) -> float:
        return float(self.radii.max())

    @property
    def is_origin(self) -> bool:
        return bool(np.all(self.radii == 0))


@dataclass(frozen=True, eq=False)
class Rayleigh(RadialProfile):
    """Density t exp(-t^2/2): radius of the standard planar Gaussian."""

    def log_moment(self, k: int) -> float:
        return 0.5 * k * math.log(2) + special.gammaln(k / 2 + 1)

    def density(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, t * np.exp(-0.5 * t * t), 0.0)

    def sample(self, rng, size):
        return rng.rayleigh(1.0, size)

    def cutoff(self, order: int = 0) -> float:
        return math.sqrt(2 * (order + 2) * math.log(order + 3) + 2 * -math.log(TAIL_TOL))


@dataclass(frozen=True, eq=False)
class HalfLineProfile(RadialProfile):
    """Law of |X| for a symmetric one dimensional measure."""
    base: SpectralMeasure1D = None

    def log_moment(self, k: int) -> float:
        return self.base.log_moment(k)

    def density(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, 2 * self.base.density(t), 0.0)

    def sample(self, rng, size):
        return np.abs(self.base.sample(rng, size))

    @property
    def support_min(self) -> float:
        return 1.0 if isinstance(self.base, LogType) else 0.0

    def cutoff(self, order: int = 0) -> float:
        return self.base.cutoff(order)


@dataclass(frozen=True, eq=False)
class RadialGrid(RadialProfile):
    """Radial density tabulated on a uniform grid of [0, t_max] (odd point count)."""
    t: np.ndarray = None
    values: np.ndarray = None
    _cdf: np.ndarray = field(default=None, init=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.clip(np.asarray(self.values, dtype=float), 0.0, None)
        mass = integrate.simpson(v, x=t)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v / mass)
        cdf = integrate.cumulative_trapezoid(self.values, t, initial=0.0)
        object.__setattr__(self, "_cdf", cdf / cdf[-1])

    def log_moment(self, k: int) -> float:
        with np.errstate(divide="ignore"):
            logs = _log_powers(self.t, k) + np.log(self.values)
        top = np.max(logs)
        return top + math.log(integrate.simpson(np.exp(logs - top), x=self.t))

    def density(self, t) -> np.ndarray:
        return np.interp(np.asarray(t, dtype=float), self.t, self.values, left=0.0, right=0.0)

    def sample(self, rng, size):
        return np.interp(rng.uniform(0.0, 1.0, size), self._cdf, self.t)

    def cutoff(self, order: int = 0) -> float:
        return float(self.t[-1])


# Two dimensional spectral measures

class SpectralMeasure2D(ABC):
    """Symmetric probability measure on the plane."""
    family: str = ""
    closed_form: bool = True

    @abstractmethod
    def log_moment(self, m: int, n: int) -> float:
        """log C_{m,n} = log of the integral of |x|^m |y|^n."""

    @abstractmethod
    def radial_profile(self) -> RadialProfile:
        """Pushforward by z -> |z|."""

    @abstractmethod
    def marginals(self, angle: float = 0.0) -> tuple[SpectralMeasure1D, SpectralMeasure1D]:
        """Marginals along v1 = (cos a, sin a) and v2 = (-sin a, cos a)."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw planar frequencies, shape (size, 2)."""

    @abstractmethod
    def params(self) -> dict:
        """Family parameters."""

    @property
    def degenerate_line(self) -> bool:
        """Support contained in a line through the origin."""
        return False

    def spec(self) -> dict:
        return {"family": self.family, **self.params()}

    @property
    def ident(self) -> str:
        p = ",".join(f"{k}={v}" for k, v in self.params().items() if not isinstance(v, (list, dict)))
        return f"{self.family}({p})"

    def __repr__(self):
        return self.ident


def _is_axis_angle(angle: float) -> int:
    """Quarter turns if the angle is a multiple of pi/2, else -1."""
    q = angle / (math.pi / 2)
    k = round(q)
    return k % 4 if abs(q - k) < 1e-12 else -1


@dataclass(frozen=True, eq=False, repr=False)
class Atomic2D(SpectralMeasure2D):
    """Atoms at +-p for the given points; each point carries the weight of its pair."""
    points: np.ndarray = None
    weights: np.ndarray = None
    family = "atomic2d"

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights if self.weights is not None else np.ones(len(p)), dtype=float))
        if p.shape[1] != 2 or p.shape[0] != w.size or np.any(w <= 0):
            raise ValueError("atomic2d: points of shape (k, 2) and k positive weights required")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w / w.sum())

    def log_moment(self, m: int, n: int) -> float:
        return _logsumexp(np.log(self.weights) + _log_powers(self.points[:, 0], m)
                          + _log_powers(self.points[:, 1], n))

    def radial_profile(self) -> RadialProfile:
        return RadialAtoms(np.hypot(self.points[:, 0], self.points[:, 1]), self.weights)

    def marginals(self, angle: float = 0.0):
        v1 = np.array([math.cos(angle), math.sin(angle)])
        v2 = np.array([-math.sin(angle), math.cos(angle)])
        return Atomic(self.points @ v1, self.weights), Atomic(self.points @ v2, self.weights)

    @property
    def degenerate_line(self) -> bool:
        scale = max(float(np.abs(self.points).max()), 1e-300)
        return int(np.linalg.matrix_rank(self.points, tol=1e-12 * scale)) <= 1

    def sample(self, rng, size):
        idx = rng.choice(self.weights.size, size=size, p=self.weights)
        return self.points[idx] * rng.choice([-1.0, 1.0], size)[:, None]

    def params(self) -> dict:
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}

    @property
    def ident(self) -> str:
        return f"atomic2d(k={self.weights.size})"


def _atoms_by_density(atoms: Atomic, dens: SpectralMeasure1D, points: int) -> RadialGrid:
    """
    Radial pushforward of atoms x density. Atom a puts its weight on |z| = hypot(a, y), y ~ dens,
    so the radial distribution is sum_i w_i P(|Y| <= sqrt(t^2 - a_i^2)); the tabulated density
    is its increment over a cell around each node (finite at the r = |a_i| edges).
    """
    lam = dens.cutoff(0)
    cells = 16 * points
    ds = lam / cells
    f = 2 * np.asarray(dens.density(ds * (np.arange(cells) + 0.5)), dtype=float)
    f[~np.isfinite(f)] = 0.0
    s = np.linspace(0.0, lam, cells + 1)
    F = np.concatenate([[0.0], np.cumsum(f * ds)])
    F /= F[-1]

    def distribution(t):
        reach = np.sqrt(np.clip(t[:, None] ** 2 - atoms.frequencies[None, :] ** 2, 0.0, None))
        return np.interp(reach, s, F, right=1.0) @ atoms.weights

    t = np.linspace(0.0, math.hypot(atoms.support_max, lam), points)
    h = t[1] - t[0]
    lo, hi = np.clip(t - h / 2, 0.0, None), t + h / 2
    return RadialGrid(t, (distribution(hi) - distribution(lo)) / (hi - lo))


@dataclass(frozen=True, eq=False, repr=False)
class ProductOfMarginals(SpectralMeasure2D):
    """Product measure mx x my."""
    mx: SpectralMeasure1D = None
    my: SpectralMeasure1D = None
    family = "product"

    @property
    def closed_form(self) -> bool:
        return self.mx.closed_form and self.my.closed_form

    def log_moment(self, m: int, n: int) -> float:
        return self.mx.log_moment(m) + self.my.log_moment(n)

    def radial_profile(self, points: int = 2049, angles: int = 1024) -> RadialProfile:
        if not self.mx.has_density and not self.my.has_density:
            rx, wx = self.mx.frequencies, self.mx.weights
            ry, wy = self.my.frequencies, self.my.weights
            return RadialAtoms(np.hypot(rx[:, None], ry[None, :]).ravel(), np.outer(wx, wy).ravel())
        if not self.mx.has_density:
            return _atoms_by_density(self.mx, self.my, points)
        if not self.my.has_density:
            return _atoms_by_density(self.my, self.mx, points)

        # circle integrals of the planar density fx(x) fy(y)
        t_max = math.hypot(self.mx.cutoff(0), self.my.cutoff(0))
        t = np.linspace(0.0, t_max, points)
        theta = np.linspace(0.0, 2 * np.pi, angles, endpoint=False)
        xs = np.outer(t, np.cos(theta))
        ys = np.outer(t, np.sin(theta))
        ring = (self.mx.density(xs) * self.my.density(ys)).mean(axis=1) * 2 * np.pi
        return RadialGrid(t, t * ring)

    def marginals(self, angle: float = 0.0):
        match _is_axis_angle(angle):
            case 0 | 2:
                return self.mx, self.my
            case 1 | 3:
                return self.my, self.mx
            case _:
                raise ValueError("product: marginals are available along the coordinate axes only")

    @property
    def degenerate_line(self) -> bool:
        def is_origin(mu):
            return isinstance(mu, Atomic) and bool(np.all(mu.frequencies == 0))
        return is_origin(self.mx) or is_origin(self.my)

    def sample(self, rng, size):
        return np.column_stack([self.mx.sample(rng, size), self.my.sample(rng, size)])

    def params(self) -> dict:
        return {"x": self.mx.spec(), "y": self.my.spec()}

    @property
    def ident(self) -> str:
        return f"product({self.mx.ident},{self.my.ident})"


@dataclass(frozen=True, eq=False, repr=False)
class Radial(SpectralMeasure2D):
    """Rotation invariant measure with the given radial profile."""
    profile: RadialProfile = None
    family = "radial"

    def log_moment(self, m: int, n: int) -> float:
        return self.profile.log_moment(m + n) + angular_log_moment(m, n)

    def radial_profile(self) -> RadialProfile:
        return self.profile

    def marginal_density(self, x) -> np.ndarray:
        """
        Density of the first coordinate: (1/pi) times the integral over r >= |x| of rho(r)/sqrt(r^2 - x^2).
        :param x: points
        :return: marginal density values
        """
        x = np.abs(np.atleast_1d(np.asarray(x, dtype=float)))
        prof = self.profile
        out = np.zeros_like(x)
        if isinstance(prof, RadialAtoms):
            for r, w in zip(prof.radii, prof.weights):
                inside = x < r
                out[inside] += w / (np.pi * np.sqrt(r * r - x[inside] ** 2))
            return out

        r_max = prof.cutoff(0)
        r_min = prof.support_min
        for i, a in enumerate(x):
            if a >= r_max:
                continue
            if a >= r_min:
                val, _ = integrate.quad(lambda r: float(prof.density(r)) / math.sqrt(r + a), a, r_max,
                                        weight="alg", wvar=(-0.5, 0.0), limit=200)
            else:
                val, _ = integrate.quad(lambda r: float(prof.density(r)) / math.sqrt(r * r - a * a),
                                        r_min, r_max, limit=200)
            out[i] = val / np.pi
        return out

    def marginal(self, points: int = 1025) -> SpectralMeasure1D:
        lam = self.profile.cutoff(0)
        x = np.linspace(-lam, lam, points)
        return GridDensity(x, self.marginal_density(x))

    def marginals(self, angle: float = 0.0):
        if self.profile.is_origin:
            origin = Atomic([0.0], [1.0])
            return origin, origin
        if isinstance(self.profile, RadialAtoms):
            # atom radii give arcsine type marginals, singular at +-r
            r = float(self.profile.radii.max())
            x = np.linspace(-r, r, 4097)
            v = self.marginal_density(x)
            v[~np.isfinite(v)] = 0.0
            m = GridDensity(x, v)
            return m, m
        m = self.marginal()
        return m, m

    @property
    def degenerate_line(self) -> bool:
        return self.profile.is_origin

    def sample(self, rng, size):
        r = self.profile.sample(rng, size)
        theta = rng.uniform(0.0, 2 * np.pi, size)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    def params(self) -> dict:
        return {}


@dataclass(frozen=True, eq=False, repr=False)
class UnitCircleUniform(Radial):
    """Uniform measure on the unit circle (random plane wave)."""
    profile: RadialProfile = field(default_factory=lambda: RadialAtoms([1.0], [1.0]), init=False)
    family = "unit_circle"

    def log_moment(self, m: int, n: int) -> float:
        return angular_log_moment(m, n)

    def marginals(self, angle: float = 0.0):
        return Arcsine(), Arcsine()


@dataclass(frozen=True, eq=False, repr=False)
class StdNormal2D(Radial):
    """Standard planar Gaussian measure."""
    profile: RadialProfile = field(default_factory=Rayleigh, init=False)
    family = "stdnormal2d"

    def log_moment(self, m: int, n: int) -> float:
        return StdNormal().log_moment(m) + StdNormal().log_moment(n)

    def marginals(self, angle: float = 0.0):
        return StdNormal(), StdNormal()

    def sample(self, rng, size):
        return rng.standard_normal((size, 2))


@dataclass(frozen=True, eq=False, repr=False)
class RadialStretchedExp(Radial):
    """Radial profile with density proportional to exp(-t^(1/alpha)) on t > 0."""
    profile: RadialProfile = field(default=None, init=False)
    alpha: float = 1.0
    family = "radial_stretched_exp"

    def __post_init__(self):
        object.__setattr__(self, "profile", HalfLineProfile(StretchedExp(self.alpha)))

    def params(self) -> dict:
        return {"alpha": self.alpha}


@dataclass(frozen=True, eq=False, repr=False)
class RadialLogType(Radial):
    """Radial profile with density proportional to exp(-(log t)^(1+gamma)) on t >= 1."""
    profile: RadialProfile = field(default=None, init=False)
    gamma: float = 1.0
    family = "radial_log_type"
    closed_form = False

    def __post_init__(self):
        object.__setattr__(self, "profile", HalfLineProfile(LogType(self.gamma)))

    def params(self) -> dict:
        return {"gamma": self.gamma}


# Moment tables

@dataclass
class MomentTable:
    """Moments in log-space. 1D: log C_n, log D_n. 2D: log C_{m,n} and the R/L quantities."""
    dimension: int
    max_order: int
    method: str
    measure: str
    log_c: np.ndarray                  # 1D: [n]; 2D: [m, n], nan outside m + n <= max_order + 2
    log_d: np.ndarray = None           # 1D only, n <= max_order / 2
    log_rtilde: np.ndarray = None      # 2D only
    log_r: np.ndarray = None
    log_ltilde: np.ndarray = None
    log_l: np.ndarray = None
    quadrature_error: float = 0.0      # worst relative error estimate (grid densities)

    @staticmethod
    def _linear(log_value: float, name: str) -> float:
        if math.isnan(log_value):
            raise ValueError(f"{name} is outside of the moment table")
        if log_value > LOG_MAX_FLOAT:
            raise OrderTooLarge(f"{name} overflows the float range (log value {log_value:.6g})")
        return math.exp(log_value)

    @staticmethod
    def _at(arr: np.ndarray, n: int, name: str) -> float:
        if arr is None or n < 0 or n >= len(arr):
            raise ValueError(f"{name}_{n} is outside of the moment table")
        return float(arr[n])

    def c(self, n: int, m: int = None) -> float:
        """C_n (1D) or C_{n,m} (2D, first index n)."""
        if self.dimension == 1:
            return self._linear(self._at(self.log_c, n, "C"), f"C_{n}")
        return self._linear(float(self.log_c[n, m]), f"C_{n},{m}")

    def log_moment(self, n: int) -> float:
        return self._at(self.log_c, n, "C")

    def d(self, n: int) -> float:
        return self._linear(self._at(self.log_d, n, "D"), f"D_{n}")

    def r(self, n: int) -> float:
        return self._linear(self._at(self.log_r, n, "R"), f"R_{n}")

    def l(self, n: int) -> float:
        return self._linear(self._at(self.log_l, n, "L"), f"L_{n}")

    def rtilde(self, n: int) -> float:
        return self._linear(self._at(self.log_rtilde, n, "Rtilde"), f"Rtilde_{n}")

    def ltilde(self, n: int) -> float:
        return self._linear(self._at(self.log_ltilde, n, "Ltilde"), f"Ltilde_{n}")

    def d_root(self, n: int) -> float:
        """D_n^(1/n) computed in log-space."""
        return math.exp(self._at(self.log_d, n, "D") / n)

    def r_root(self, n: int) -> float:
        return math.exp(self._at(self.log_r, n, "R") / n)

    def l_root(self, n: int) -> float:
        return math.exp(self._at(self.log_l, n, "L") / n)

    @property
    def n_max(self) -> int:
        """Largest n with D_n (1D) or R_n, L_n (2D) available."""
        arr = self.log_d if self.dimension == 1 else self.log_r
        return len(arr) - 1

    def invariant_violations(self, tol: float = 1e-8) -> list[str]:
        """Names of the table invariants that fail (empty when all hold)."""
        bad = []
        c0 = self.log_c[0] if self.dimension == 1 else self.log_c[0, 0]
        if abs(c0) > tol:
            bad.append("C_0 = 1")
        if self.dimension == 1:
            even = self.log_c[::2]
            for k in range(1, len(even) - 1):
                if 2 * even[k] > even[k - 1] + even[k + 1] + tol:
                    bad.append(f"log-convexity at C_{2 * k}")
            if np.any(self.log_d < -tol):
                bad.append("D_n >= 1")
            return bad

        for n in range(1, len(self.log_rtilde)):
            rt, lt = self.log_rtilde[n], self.log_ltilde[n]
            if rt > lt + tol or lt > rt + 0.5 * n * math.log(2) + tol:
                bad.append(f"Rtilde/Ltilde sandwich at n={n}")
        for n in range(1, len(self.log_r)):
            r, ll = self.log_r[n], self.log_l[n]
            if r > ll + tol or ll > r + 0.5 * (n + 1) * math.log(2) + tol:
                bad.append(f"R/L sandwich at n={n}")
        if np.any(self.log_r < -tol) or np.any(self.log_l < -tol):
            bad.append("R_n, L_n >= 1")
        return bad

    def to_frame(self) -> pd.DataFrame:
        """Moment rows (n, C_n, D_n [, R_n, L_n]) with log columns."""
        rows = []
        if self.dimension == 1:
            for n in range(len(self.log_c)):
                log_d = self.log_d[n] if n < len(self.log_d) else np.nan
                rows.append({"n": n, "C_n": _safe_exp(self.log_c[n]), "D_n": _safe_exp(log_d),
                             "log_C_n": self.log_c[n], "log_D_n": log_d})
        else:
            for n in range(len(self.log_rtilde)):
                get = lambda arr: arr[n] if n < len(arr) else np.nan
                rows.append({"n": n, "C_n0": _safe_exp(self.log_c[n, 0]),
                             "Rtilde_n": _safe_exp(get(self.log_rtilde)), "R_n": _safe_exp(get(self.log_r)),
                             "Ltilde_n": _safe_exp(get(self.log_ltilde)), "L_n": _safe_exp(get(self.log_l)),
                             "log_R_n": get(self.log_r), "log_L_n": get(self.log_l)})
        return pd.DataFrame(rows)


def _safe_exp(v: float) -> float:
    return math.exp(v) if np.isfinite(v) and v < LOG_MAX_FLOAT else (0.0 if v == -np.inf else np.nan)


def _checked(log_value: float, name: str) -> float:
    if math.isnan(log_value):
        raise DivergentMoment(f"{name} is not finite")
    if log_value == math.inf:
        raise OrderTooLarge(f"{name} overflows")
    return log_value


def moments_1d(mu: SpectralMeasure1D, max_order: int, grid_rel_tol: float = GRID_REL_TOL) -> MomentTable:
    """
    Moments C_n (0 <= n <= max_order + 2) and D_n = max{1, sqrt C_2n, sqrt C_2n+2}.
    :param mu: spectral measure
    :param max_order: highest requested order (>= 2)
    :param grid_rel_tol: Richardson error tolerance for grid densities
    :return: moment table
    """
    if max_order < 2:
        raise ValueError("max_order must be at least 2")
    top = max_order + 2
    worst = 0.0
    log_c = np.empty(top + 1)
    for n in range(top + 1):
        if isinstance(mu, GridDensity) and n > 0:
            value, err = mu.grid_log_moment(n)
            worst = max(worst, err)
            if err > grid_rel_tol:
                raise QuadratureFailure(f"{mu.ident}: grid does not resolve C_{n} (relative error {err:.3g})")
        else:
            value = mu.log_moment(n)
        log_c[n] = _checked(value, f"C_{n}")

    n_d = top // 2 - 1
    log_d = np.array([max(0.0, 0.5 * log_c[2 * n], 0.5 * log_c[2 * n + 2]) for n in range(n_d + 1)])
    method = "closed_form" if mu.closed_form else "quadrature"
    return MomentTable(dimension=1, max_order=max_order, method=method, measure=mu.ident,
                       log_c=log_c, log_d=log_d, quadrature_error=worst)


def moments_2d(mu: SpectralMeasure2D, max_order: int) -> MomentTable:
    """
    Mixed moments C_{m,n} (m + n <= max_order + 2) and Rtilde_n, R_n, Ltilde_n, L_n.
    Ltilde_n^2 is the binomial sum over C_{2k, 2n-2k}, i.e. the 2n-th moment of the radial profile.
    """
    if max_order < 2:
        raise ValueError("max_order must be at least 2")
    top = max_order + 2
    log_c = np.full((top + 1, top + 1), np.nan)
    for m in range(top + 1):
        for n in range(top + 1 - m):
            log_c[m, n] = _checked(mu.log_moment(m, n), f"C_{m},{n}")

    half = top // 2
    log_rt = np.array([max(0.5 * log_c[k, 2 * n - k] for k in range(2 * n + 1)) for n in range(half + 1)])
    log_lt = np.array([0.5 * _logsumexp([log_binom(n, k) + log_c[2 * k, 2 * n - 2 * k] for k in range(n + 1)])
                       for n in range(half + 1)])
    log_r = np.array([max(0.0, log_rt[1], log_rt[n], log_rt[n + 1]) for n in range(half)])
    log_l = np.array([max(0.0, log_lt[1], log_lt[n], log_lt[n + 1]) for n in range(half)])
    method = "closed_form" if mu.closed_form else "quadrature"
    return MomentTable(dimension=2, max_order=max_order, method=method, measure=mu.ident,
                       log_c=log_c, log_rtilde=log_rt, log_r=log_r, log_ltilde=log_lt, log_l=log_l)


def moment_quadrature(mu: SpectralMeasure1D, n: int) -> float:
    """log C_n by quadrature (cross-check of the closed forms)."""
    return mu.quadrature_log_moment(n)


def growth_class(mu: SpectralMeasure1D, max_order: int = 30, alpha: float = None, gamma: float = None) -> dict:
    """
    Fitted constants of the moment growth classes.
    :param alpha: exponent of the class C_n <= c n^(alpha n)
    :param gamma: exponent of the log-type class log C_n <= c n^(1 + 1/gamma)
    :return: dict with q (C_n <= q^n), gaussian (C_n <= n^(n/2)), c (alpha given), c_log (gamma given)
    """
    orders = np.arange(1, max_order + 1)
    log_c = np.array([mu.log_moment(int(n)) for n in orders])
    res = {
        "q": float(np.exp(np.max(log_c / orders))),
        "gaussian": bool(np.all(log_c <= 0.5 * orders * np.log(orders) + 1e-12)),
    }
    if alpha is not None:
        res["c"] = float(np.exp(np.max(log_c - alpha * orders * np.log(orders))))
    if gamma is not None:
        res["c_log"] = float(np.max(log_c / orders ** (1 + 1 / gamma)))
    return res


# Assumption checks

@dataclass
class AssumptionReport:
    """Absolutely continuous part certificate: |{f >= delta0}| >= delta0 and |S| >= delta0/2."""
    satisfied: bool
    delta0: float = 0.0
    M0: float = math.inf
    S_mass: float = 0.0
    b: float = 0.0
    level_set_measure: float = 0.0

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in self.__dict__.items()}


@dataclass
class AssumptionReport2D:
    satisfied: bool
    marginal_1: AssumptionReport
    marginal_2: AssumptionReport
    degenerate_line: bool
    angle: float = 0.0

    def to_dict(self) -> dict:
        return {"satisfied": self.satisfied, "degenerate_line": self.degenerate_line, "angle": self.angle,
                "marginal_1": self.marginal_1.to_dict(), "marginal_2": self.marginal_2.to_dict()}


def check_assumption_a1(mu: SpectralMeasure1D, cells: int = 2 ** 16) -> AssumptionReport:
    """
    Largest delta0 with |{f >= delta0}| >= delta0 (bisection on the level-set measure),
    then M0 = max(pi, smallest M with |{f >= delta0} within (-M, M)| >= delta0/2) and b = pi/M0.
    """
    if not mu.has_density:
        return AssumptionReport(satisfied=False)

    lam = mu.cutoff(0)
    h = 2 * lam / cells
    x = -lam + h * (np.arange(cells) + 0.5)
    f = mu.density(x)
    f[~np.isfinite(f)] = 0.0

    def level(delta):
        return h * np.count_nonzero(f >= delta)

    lo, hi = 0.0, float(f.max())
    if not hi > 0:
        return AssumptionReport(satisfied=False)
    if level(hi) >= hi:
        lo = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if level(mid) >= mid:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * hi:
                break
    delta0 = lo
    inside = np.sort(np.abs(x[f >= delta0]))
    k = min(max(1, math.ceil(0.5 * delta0 / h)), inside.size)
    m_needed = float(inside[k - 1]) + h / 2
    m0 = max(math.pi, m_needed)
    s_mass = h * np.count_nonzero((f >= delta0) & (np.abs(x) < m0))
    return AssumptionReport(satisfied=delta0 > 0, delta0=delta0, M0=m0, S_mass=s_mass,
                            b=math.pi / m0, level_set_measure=level(delta0))


def check_assumption_a2(mu: SpectralMeasure2D, angle: float = 0.0) -> AssumptionReport2D:
    """Check both orthogonal marginals and report line-supported measures."""
    m1, m2 = mu.marginals(angle)
    r1, r2 = check_assumption_a1(m1), check_assumption_a1(m2)
    return AssumptionReport2D(satisfied=r1.satisfied and r2.satisfied, marginal_1=r1, marginal_2=r2,
                              degenerate_line=mu.degenerate_line, angle=angle)


def radial_pushforward(mu: SpectralMeasure2D) -> RadialProfile:
    """Pushforward of the measure by z -> |z|."""
    return mu.radial_profile()
