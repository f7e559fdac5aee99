from __future__ import annotations

import logging
import math
import mpmath
import numpy as np
import pandas as pd

from dataclasses import dataclass, field, asdict
from scipy import integrate, linalg, special
from scipy.linalg import lapack

from overcrowd.tasks.spectral import (
    SpectralMeasure1D, SpectralMeasure2D, Uniform, StdNormal, StretchedExp, LogType, Arcsine, Atomic,
    Atomic2D, ProductOfMarginals, Radial, UnitCircleUniform, StdNormal2D, RadialAtoms,
    check_assumption_a1,
)
from overcrowd.utils import util
from overcrowd.utils.errors import (
    AssumptionViolated, EmptySubset, GridTooLarge, NotPSD, PreconditionFailed, QuadratureFailure,
)

KERNEL_ABS_TOL = 1e-12
PIVOT_TOL = 1e-12
PSD_TOL = 1e-9
MAX_GRAM = 512


# Kernel evaluation

def _trig_sign(n: int) -> tuple[str, int]:
    """cos(tx + n pi/2) = sign * cos(tx) (n even) or sign * sin(tx) (n odd)."""
    if n % 2 == 0:
        return "cos", (-1) ** (n // 2)
    return "sin", (-1) ** ((n + 1) // 2)


def _at_zero(mu: SpectralMeasure1D, n: int) -> float:
    """k^(n)(0) = (-1)^(n/2) C_n for even n, 0 for odd n."""
    if n % 2:
        return 0.0
    return (-1) ** (n // 2) * math.exp(mu.log_moment(n))


def _quad_derivative(mu: SpectralMeasure1D, n: int, t: float, tol: float) -> float:
    """2 times the integral over x > 0 of x^n f(x) cos(tx + n pi/2) by QUADPACK QAWO."""
    if t == 0:
        return _at_zero(mu, n)
    weight, sign = _trig_sign(n)
    odd_sign = -1.0 if (weight == "sin" and t < 0) else 1.0
    lo = 1.0 if isinstance(mu, LogType) else 0.0
    hi = mu.cutoff(n)
    scale = max(1.0, math.exp(mu.log_moment(n)))
    val, err = integrate.quad(lambda x: x ** n * float(mu.density(x)), lo, hi, weight=weight, wvar=abs(t),
                              epsabs=0.5 * tol * scale, epsrel=1e-10, limit=2000)
    if not math.isfinite(val) or err > 100 * tol * scale:
        raise QuadratureFailure(f"{mu.ident}: kernel quadrature stalled at t={t:g}, order {n} (error {err:.3g})")
    return 2.0 * sign * odd_sign * val


def _closed_derivative(mu: SpectralMeasure1D, n: int, t: np.ndarray):
    """Closed form k^(n)(t), or None when the family has none."""
    match mu:
        case StdNormal():
            return (-1) ** n * special.eval_hermitenorm(n, t) * np.exp(-0.5 * t * t)
        case Arcsine():
            return special.jvp(0, t, n) if n else special.j0(t)
        case Atomic():
            lam, w = mu.frequencies, mu.weights
            return (w * lam ** n * np.cos(np.outer(t, lam) + n * np.pi / 2)).sum(axis=1)
        case Uniform() if n == 0:
            return np.sinc(mu.q * t / np.pi)
        case StretchedExp() if n == 0 and mu.alpha == 1.0:
            return 1.0 / (1.0 + t * t)
    return None


def kernel_derivative(mu, order: int, points, tol: float = KERNEL_ABS_TOL) -> np.ndarray:
    """
    Derivative k^(n)(t) = integral of x^n cos(tx + n pi/2) dmu(x) (real by symmetry).
    Closed forms are used when available, oscillatory quadrature otherwise; every value
    is checked against |k^(n)| <= C_n.
    :param mu: one dimensional spectral measure
    :param order: derivative order n >= 0
    :param points: evaluation points t
    :param tol: absolute quadrature tolerance (relative to max(1, C_n))
    :return: values
    """
    if isinstance(mu, SpectralMeasure2D):
        return kernel_partial(mu, order, 0, points)
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    t = np.atleast_1d(np.asarray(points, dtype=float))
    if not np.all(np.isfinite(t)):
        raise ValueError("kernel points must be finite")

    values = _closed_derivative(mu, order, t)
    if values is None:
        values = np.array([_quad_derivative(mu, order, float(s), tol) for s in t])
    values = np.asarray(values, dtype=float)

    c_n = math.exp(mu.log_moment(order))
    if np.any(np.abs(values) > c_n * (1 + 1e-9) + 1e3 * tol):
        raise QuadratureFailure(f"{mu.ident}: |k^({order})| exceeds C_{order} = {c_n:.6g}")
    return values


def _radial_hankel(mu: Radial, r: np.ndarray) -> np.ndarray:
    """Integral of J0(t r) over the radial profile."""
    prof = mu.radial_profile()
    if isinstance(prof, RadialAtoms):
        return (prof.weights * special.j0(np.outer(r, prof.radii))).sum(axis=1)
    lo, hi = prof.support_min, prof.cutoff(0)
    out = []
    for s in r:
        val, err = integrate.quad(lambda t: special.j0(s * t) * float(prof.density(t)), lo, hi, limit=2000)
        out.append(val)
    return np.asarray(out)


def kernel_partial(mu: SpectralMeasure2D, i: int, j: int, points) -> np.ndarray:
    """
    Mixed partial derivative of the planar kernel:
    integral of x^i y^j cos(<lambda, z> + (i + j) pi/2).
    :param mu: planar spectral measure
    :param i: order in the first coordinate
    :param j: order in the second coordinate
    :param points: array of shape (k, 2)
    :return: values
    """
    z = np.atleast_2d(np.asarray(points, dtype=float))
    match mu:
        case Atomic2D():
            p, w = mu.points, mu.weights
            phase = z @ p.T + (i + j) * np.pi / 2
            return (w * p[:, 0] ** i * p[:, 1] ** j * np.cos(phase)).sum(axis=1)
        case ProductOfMarginals():
            return kernel_derivative(mu.mx, i, z[:, 0]) * kernel_derivative(mu.my, j, z[:, 1])
        case StdNormal2D():
            return kernel_derivative(StdNormal(), i, z[:, 0]) * kernel_derivative(StdNormal(), j, z[:, 1])
        case UnitCircleUniform() if i == j == 0:
            return special.j0(np.hypot(z[:, 0], z[:, 1]))
        case Radial() if i == j == 0:
            return _radial_hankel(mu, np.hypot(z[:, 0], z[:, 1]))
        case Radial():
            return _radial_partial(mu, i, j, z)
    raise ValueError(f"{mu.ident}: partial derivatives are not available")


def _radial_partial(mu: Radial, i: int, j: int, z: np.ndarray, angles: int = 512) -> np.ndarray:
    """Angular trapezoid (exact for trigonometric integrands) times the radial integral."""
    theta = np.linspace(0.0, 2 * np.pi, angles, endpoint=False)
    u = np.column_stack([np.cos(theta), np.sin(theta)])
    prof = mu.radial_profile()
    if isinstance(prof, RadialAtoms):
        radii, weights = prof.radii, prof.weights
    else:
        nodes, w = np.polynomial.legendre.leggauss(256)
        lo, hi = prof.support_min, prof.cutoff(i + j)
        radii = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        weights = 0.5 * (hi - lo) * w * prof.density(radii)
    out = np.zeros(len(z))
    for r, wr in zip(radii, weights):
        lam = r * u
        phase = z @ lam.T + (i + j) * np.pi / 2
        out += wr * (lam[:, 0] ** i * lam[:, 1] ** j * np.cos(phase)).mean(axis=1)
    return out


def kernel_eval(mu, points, tol: float = KERNEL_ABS_TOL) -> np.ndarray:
    """
    Covariance kernel k = Fourier transform of mu.
    :param mu: spectral measure (1D points t, or 2D points of shape (k, 2))
    :param points: evaluation points
    :param tol: absolute quadrature tolerance
    :return: values
    """
    if isinstance(mu, SpectralMeasure2D):
        return kernel_partial(mu, 0, 0, points)
    return kernel_derivative(mu, 0, points, tol)


def derivative_covariance(mu: SpectralMeasure1D, n: int, points) -> np.ndarray:
    """Covariance of X^(n): (-1)^n k^(2n)(t)."""
    return (-1) ** n * kernel_derivative(mu, 2 * n, points)


def increment_variance(mu: SpectralMeasure1D, n: int, points) -> np.ndarray:
    """E|X^(n)(t) - X^(n)(0)|^2 = 2 (-1)^n [k^(2n)(0) - k^(2n)(t)]."""
    t = np.atleast_1d(np.asarray(points, dtype=float))
    k0 = kernel_derivative(mu, 2 * n, [0.0])[0]
    return 2 * (-1) ** n * (k0 - kernel_derivative(mu, 2 * n, t))


@dataclass
class CovarianceKernel:
    """Kernel of a spectral measure with a per order derivative cache."""
    source: SpectralMeasure1D | SpectralMeasure2D
    tol: float = KERNEL_ABS_TOL
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def method(self) -> str:
        if isinstance(self.source, SpectralMeasure2D):
            return "closed_form" if self.source.closed_form else "quadrature"
        return "closed_form" if _closed_derivative(self.source, 0, np.zeros(1)) is not None else "quadrature"

    def __call__(self, points) -> np.ndarray:
        return self.derivative(0)(points)

    def derivative(self, order: int):
        """Cached callable t -> k^(order)(t)."""
        if order not in self._cache:
            self._cache[order] = lambda t: kernel_derivative(self.source, order, t, self.tol)
        return self._cache[order]


# Gram matrices

def pivoted_cholesky(a: np.ndarray, pivot_tol: float = PIVOT_TOL, psd_tol: float = PSD_TOL):
    """
    LAPACK pivoted Cholesky (pstrf) with a reconstruction residual check.
    :return: L (n x rank), pivot permutation, rank; P^T A P = L L^T
    """
    c, piv, rank, info = lapack.dpstrf(np.asarray(a, dtype=float), tol=pivot_tol, lower=1)
    if info < 0:
        raise NotPSD(f"pstrf argument error {info}")
    piv = piv - 1
    factor = np.tril(c)[:, :rank]
    permuted = a[np.ix_(piv, piv)]
    residual = float(np.max(np.abs(permuted - factor @ factor.T)))
    if residual > psd_tol * max(1.0, float(np.max(np.abs(np.diag(a))))):
        raise NotPSD(f"Cholesky residual {residual:.3g} exceeds {psd_tol:g}")
    return factor, piv, int(rank)


@dataclass
class GramMatrix:
    """Covariance of (X_0, X_{T/m}, ..., X_T)."""
    m: int
    T: float
    points: np.ndarray
    entries: np.ndarray
    rank: int
    log_det: float

    @property
    def det(self) -> float:
        return math.exp(self.log_det) if math.isfinite(self.log_det) else 0.0

    @property
    def eigenvalues(self) -> np.ndarray:
        return linalg.eigh(self.entries, eigvals_only=True)

    def to_dict(self) -> dict:
        return {"m": self.m, "T": self.T, "rank": self.rank, "log_det": self.log_det, "det": self.det}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.entries, columns=[f"t{k}" for k in range(self.m + 1)])


def gram_matrix(mu: SpectralMeasure1D, m: int, T: float, pivot_tol: float = PIVOT_TOL,
                psd_tol: float = PSD_TOL) -> GramMatrix:
    """
    Toeplitz Gram matrix with entries k((i - j) T/m), PSD verified by pivoted Cholesky.
    :param mu: spectral measure
    :param m: number of steps (m + 1 points)
    :param T: interval length
    :return: Gram matrix
    """
    if m < 1 or not T > 0:
        raise ValueError("gram_matrix needs m >= 1 and T > 0")
    points = np.arange(m + 1) * T / m
    entries = linalg.toeplitz(kernel_eval(mu, points))
    _, _, rank = pivoted_cholesky(entries, pivot_tol, psd_tol)
    sign, log_det = np.linalg.slogdet(entries)
    if sign <= 0:
        log_det = -math.inf
    return GramMatrix(m=m, T=T, points=points, entries=entries, rank=rank, log_det=float(log_det))


# High precision eigenvalues

def _mp_kernel(mu: SpectralMeasure1D):
    """Kernel k(t) at the working mpmath precision, or None when it can't be resolved."""
    match mu:
        case StdNormal():
            return lambda t: mpmath.exp(-t * t / 2)
        case Arcsine():
            return lambda t: mpmath.besselj(0, t)
        case Uniform():
            q = mpmath.mpf(mu.q)
            return lambda t: mpmath.sinc(q * t)
        case Atomic():
            lam = [mpmath.mpf(v) for v in mu.frequencies]
            w = [mpmath.mpf(v) for v in mu.weights]
            total = mpmath.fsum(w)
            return lambda t: mpmath.fsum(wi * mpmath.cos(li * t) for wi, li in zip(w, lam)) / total
        case StretchedExp():
            a = mpmath.mpf(mu.alpha)
            norm = 2 * a * mpmath.gamma(a)
            return _mp_quad_kernel(lambda x: mpmath.exp(-x ** (1 / a)) / norm, 0, mu.cutoff(0))
        case LogType():
            g = mpmath.mpf(mu.gamma)
            norm = 2 * mpmath.quad(lambda u: mpmath.exp(u - u ** (1 + g)), [0, mpmath.inf])
            return _mp_quad_kernel(lambda x: mpmath.exp(-mpmath.log(x) ** (1 + g)) / norm, 1, mu.cutoff(0))
    return None


def _mp_quad_kernel(density, lo: float, hi: float):
    def k(t):
        # split at half periods of cos(tx)
        pieces = int(min(200, max(8, abs(t) * (hi - lo) / mpmath.pi)))
        nodes = mpmath.linspace(lo, hi, pieces + 1)
        return 2 * mpmath.quad(lambda x: density(x) * mpmath.cos(t * x), nodes)
    return k


def _mp_lambda_min(mu: SpectralMeasure1D, m: int, T: float, dps: int, dps_max: int) -> tuple[float, int, bool]:
    """
    Smallest Gram eigenvalue by mpmath at doubling precision until it is resolved.
    :return: log lambda_min (or of the last bound), precision used, resolved flag
    """
    kernel = _mp_kernel(mu)
    if kernel is None:
        return -math.inf, 0, False
    last = -math.inf
    while dps <= dps_max:
        with mpmath.workdps(dps):
            step = mpmath.mpf(T) / m
            col = [kernel(i * step) for i in range(m + 1)]
            a = mpmath.matrix(m + 1, m + 1)
            for i in range(m + 1):
                for j in range(m + 1):
                    a[i, j] = col[abs(i - j)]
            lam = min(mpmath.eigsy(a, eigvals_only=True))
            if lam > mpmath.mpf(10) ** (-(dps - 15)):
                return float(mpmath.log(lam)), dps, True
            if lam > 0:
                last = float(mpmath.log(lam))
        dps *= 2
    return last, dps // 2, False


def cached_mp_lambda_min(mu: SpectralMeasure1D, m: int, T: float, dps: int = 50, dps_max: int = 400):
    """Memoized (joblib) high precision smallest eigenvalue."""
    return util.memory_cache().cache(_mp_lambda_min)(mu, m, T, dps, dps_max)


# Eigenvalue certificate

@dataclass
class EigenCertificate:
    m: int
    T: float
    lambda_min: float
    log_lambda_min: float
    c: float
    log_bound: float
    valid: bool
    c_fitted: float
    precision: str = "double"
    resolved: bool = True
    b: float = 0.0
    turan_A: float = 14.0

    @property
    def bound(self) -> float:
        return math.exp(self.log_bound) if self.log_bound > -745 else 0.0

    def to_dict(self) -> dict:
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else None) for k, v in asdict(self).items()}


def eigen_certificate(mu: SpectralMeasure1D, m: int, T: float, c: float = None, b: float = None,
                      max_gram: int = MAX_GRAM, dps: int = 50, dps_max: int = 400, turan_A: float = 14.0,
                      logger: logging.Logger = None) -> EigenCertificate:
    """
    Certificate lambda_min(Sigma_m) >= (cT/m)^(2(m-1)).
    Without `c` the certificate fits c = (m/T) lambda_min^(1/(2(m-1))) and is valid by construction.
    :param mu: spectral measure satisfying the absolutely continuous part assumption
    :param m: number of steps (2 <= m <= max_gram)
    :param T: interval length, T <= b m
    :param c: constant to certify (optional)
    :param b: threshold constant (default pi/M0 from the assumption check)
    :return: certificate
    """
    logger = logger or util.module_logger()
    if m < 2:
        raise PreconditionFailed("m_ge_2", "eigen certificate needs m >= 2", margin=m - 2)
    if m > max_gram:
        raise GridTooLarge(f"m = {m} exceeds the dense eigensolver limit {max_gram}")
    report = check_assumption_a1(mu)
    if not report.satisfied:
        raise AssumptionViolated()
    b = b or report.b
    if T > b * m:
        raise PreconditionFailed("T_le_bm", f"T = {T:g} exceeds b m = {b * m:g}", margin=b * m - T)

    gram = gram_matrix(mu, m, T)
    lam = float(linalg.eigh(gram.entries, eigvals_only=True, subset_by_index=[0, 0])[0])
    floor = 1e3 * np.finfo(float).eps * (m + 1)
    precision, resolved = "double", True
    if lam > floor:
        log_lam = math.log(lam)
    else:
        log_lam, used, resolved = cached_mp_lambda_min(mu, m, T, dps, dps_max)
        precision = f"mp{used}"
        if not resolved:
            logger.warning(f"{mu.ident}: smallest eigenvalue unresolved at m={m}, T={T:g}")

    c_fitted = (m / T) * math.exp(log_lam / (2 * (m - 1))) if math.isfinite(log_lam) else 0.0
    c_used = c if c is not None else c_fitted
    log_bound = 2 * (m - 1) * math.log(c_used * T / m) if c_used > 0 else -math.inf
    valid = resolved and log_lam >= log_bound - 1e-12 * abs(log_bound)
    return EigenCertificate(m=m, T=T, lambda_min=math.exp(log_lam) if math.isfinite(log_lam) else 0.0,
                            log_lambda_min=log_lam, c=c_used, log_bound=log_bound, valid=valid,
                            c_fitted=c_fitted, precision=precision, resolved=resolved, b=b, turan_A=turan_A)


def certificate_sweep(mu: SpectralMeasure1D, ms: list[int], ratio: float = 0.5, c: float = None,
                      b: float = None, **kwargs) -> pd.DataFrame:
    """Eigen certificates over T = ratio * b * m."""
    b = b or check_assumption_a1(mu).b
    rows = [eigen_certificate(mu, m, ratio * b * m, c=c, b=b, **kwargs).to_dict() for m in ms]
    return pd.DataFrame(rows)


# Folded density

@dataclass
class FoldedDensity:
    """Density of the spectral measure of Y_l = X_{lT/m}, wrapped onto [-pi, pi]."""
    points: np.ndarray
    values: np.ndarray
    mass: float
    level: float
    level_set_measure: float
    required: float
    holds: bool

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.points, "f": self.values})


def folded_density(mu: SpectralMeasure1D, m: int, T: float, points: int = 4097, b: float = None) -> FoldedDensity:
    """
    f_{m,T}(x) = sum over n of (m/T) f((m/T)(x + 2 pi n)) on [-pi, pi], with the level-set
    check |{f_{m,T} >= m delta0/T}| >= T delta0/(2m).
    """
    if not mu.has_density:
        raise AssumptionViolated()
    report = check_assumption_a1(mu)
    b = b or report.b
    if T > b * m:
        raise PreconditionFailed("T_le_bm", f"T = {T:g} exceeds b m = {b * m:g}", margin=b * m - T)

    x = np.linspace(-np.pi, np.pi, points)
    s = m / T
    n_max = math.ceil((mu.cutoff(0) / s + np.pi) / (2 * np.pi))
    values = np.zeros_like(x)
    for n in range(-n_max, n_max + 1):
        values += s * mu.density(s * (x + 2 * np.pi * n))
    values[~np.isfinite(values)] = 0.0

    h = x[1] - x[0]
    mass = float(integrate.trapezoid(values, x))
    level = s * report.delta0
    measure = h * np.count_nonzero(values >= level)
    required = report.delta0 / (2 * s)
    return FoldedDensity(points=x, values=values, mass=mass, level=level, level_set_measure=measure,
                         required=required, holds=bool(measure >= required and mass <= 1 + h * values.max()))


# Turan ratios

def _merge(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    res = []
    for a, b in sorted((min(p), max(p)) for p in intervals):
        if res and a <= res[-1][1]:
            res[-1] = (res[-1][0], max(res[-1][1], b))
        else:
            res.append((a, b))
    return res


def _lq_norm(coeffs, intervals, q: float) -> float:
    c = np.array([complex(ck) for ck, _ in coeffs])
    lam = np.array([float(lk) for _, lk in coeffs])

    def p_abs(t):
        return abs(np.sum(c * np.exp(1j * lam * t)))

    if math.isinf(q):
        return max(max(p_abs(t) for t in np.linspace(a, b, 4097)) for a, b in intervals)
    total = 0.0
    for a, b in intervals:
        val, _ = integrate.quad(lambda t: p_abs(t) ** q, a, b, limit=400, epsabs=1e-13, epsrel=1e-11)
        total += val
    return total ** (1 / q)


def turan_ratio(coeffs: list, interval: tuple[float, float], subset: list[tuple[float, float]],
                q: float = 2.0) -> float:
    """
    Norm ratio |p|_{Lq(I)} / |p|_{Lq(E)} of p(t) = sum c_k exp(i lambda_k t).
    :param coeffs: list of (c_k, lambda_k)
    :param interval: I = (a, b)
    :param subset: E, a finite union of intervals inside I
    :param q: norm exponent (q > 0, inf allowed)
    :return: ratio
    """
    if not q > 0:
        raise ValueError("q must be positive")
    a, b = min(interval), max(interval)
    pieces = _merge(subset)
    if any(lo < a - 1e-12 or hi > b + 1e-12 for lo, hi in pieces):
        raise ValueError("subset must lie inside the interval")
    if sum(hi - lo for lo, hi in pieces) <= 0:
        raise EmptySubset()
    den = _lq_norm(coeffs, pieces, q)
    if den == 0:
        raise EmptySubset("p vanishes on the subset")
    return _lq_norm(coeffs, [(a, b)], q) / den


def log_turan_bound(n: int, interval_length: float, subset_length: float, A: float = 14.0) -> float:
    """log of (A |I| / |E|)^(n-1)."""
    if subset_length <= 0:
        raise EmptySubset()
    return (n - 1) * math.log(A * interval_length / subset_length)


def turan_bound(n: int, interval_length: float, subset_length: float, A: float = 14.0) -> float:
    return math.exp(log_turan_bound(n, interval_length, subset_length, A))


def density_sup_bound(log_lambda_min: float, dim: int) -> float:
    """log of the Gaussian density sup bound (2 pi)^(-dim/2) lambda_min^(-dim/2)."""
    return -0.5 * dim * (math.log(2 * math.pi) + log_lambda_min)
