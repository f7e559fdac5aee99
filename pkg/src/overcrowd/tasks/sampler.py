from __future__ import annotations

import math
import numpy as np
import pandas as pd

from dataclasses import dataclass
from scipy import interpolate, linalg

from overcrowd.tasks.kernel import kernel_eval, pivoted_cholesky, PIVOT_TOL, PSD_TOL
from overcrowd.tasks.spectral import SpectralMeasure2D, Atomic, Atomic2D
from overcrowd.utils import util
from overcrowd.utils.errors import GridTooLarge

N_WAVES = 4096
MAX_N_WAVES = 65536
MAX_EXACT_POINTS = 8192
RIDGE = 1e-12
CHUNK = 1024  # evaluation points per block


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of [origin, origin + extent] (per axis)."""
    dimension: int
    extent: float
    points: int
    origin: float = 0.0

    def __post_init__(self):
        if self.dimension not in [1, 2]:
            raise ValueError("grid dimension must be 1 or 2")
        if self.points < 2 or not self.extent > 0:
            raise ValueError("grid needs at least 2 points and a positive extent")

    @property
    def spacing(self) -> float:
        return self.extent / (self.points - 1)

    @property
    def axis(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.points)

    @property
    def total_points(self) -> int:
        return self.points ** self.dimension

    def coordinates(self) -> np.ndarray:
        """Grid points: (points,) in 1D, (points^2, 2) in 2D in row major (y, x) order."""
        if self.dimension == 1:
            return self.axis
        xx, yy = np.meshgrid(self.axis, self.axis)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "extent": self.extent, "points": self.points, "origin": self.origin}


_QUARTER_TURNS = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]  # (cos, sin) of k pi/2


def _shifted(a: np.ndarray, b: np.ndarray, quarters: int) -> tuple[np.ndarray, np.ndarray]:
    """a cos(x + s) + b sin(x + s) = a' cos x + b' sin x for s = quarters * pi/2."""
    cs, sn = _QUARTER_TURNS[quarters % 4]
    return a * cs + b * sn, b * cs - a * sn


@dataclass
class WaveSum:
    """X(t) = sum of amp_j [a_j cos(lambda_j t) + b_j sin(lambda_j t)]."""
    frequencies: np.ndarray
    a: np.ndarray
    b: np.ndarray
    amplitudes: np.ndarray
    order: int = 0

    @property
    def n_waves(self) -> int:
        return self.frequencies.size

    def __call__(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t).ravel()
        ca, cb = self.amplitudes * self.a, self.amplitudes * self.b
        out = np.empty(flat.size)
        for s in range(0, flat.size, CHUNK):
            phase = np.outer(flat[s:s + CHUNK], self.frequencies)
            out[s:s + CHUNK] = np.cos(phase) @ ca + np.sin(phase) @ cb
        return out.reshape(t.shape) if t.ndim else float(out[0])

    def deriv(self, k: int = 1) -> WaveSum:
        """k-th derivative, exact per wave."""
        if k == 0:
            return self
        a, b = _shifted(self.a, self.b, k)
        power = self.frequencies ** k
        return WaveSum(self.frequencies, a * power, b * power, self.amplitudes, self.order + k)

    def to_dict(self) -> dict:
        return {"frequencies": self.frequencies.tolist(), "a": self.a.tolist(), "b": self.b.tolist(),
                "amplitudes": self.amplitudes.tolist(), "order": self.order}


@dataclass
class WaveField:
    """F(z) = sum of amp_j [a_j cos<lambda_j, z> + b_j sin<lambda_j, z>]."""
    frequencies: np.ndarray  # (N, 2)
    a: np.ndarray
    b: np.ndarray
    amplitudes: np.ndarray
    orders: tuple[int, int] = (0, 0)

    @property
    def n_waves(self) -> int:
        return len(self.frequencies)

    def __call__(self, x, y=None) -> np.ndarray | float:
        """Evaluate at points of shape (k, 2), or at (x, y)."""
        if y is not None:
            x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
            z = np.column_stack([x.ravel(), y.ravel()])
            shape = x.shape
        else:
            z = np.atleast_2d(np.asarray(x, dtype=float))
            shape = (len(z),)
        ca, cb = self.amplitudes * self.a, self.amplitudes * self.b
        out = np.empty(len(z))
        for s in range(0, len(z), CHUNK):
            phase = z[s:s + CHUNK] @ self.frequencies.T
            out[s:s + CHUNK] = np.cos(phase) @ ca + np.sin(phase) @ cb
        out = out.reshape(shape)
        return float(out) if out.ndim == 0 else out

    def partial(self, i: int = 0, j: int = 0) -> WaveField:
        """Mixed partial derivative d^i/dx^i d^j/dy^j, exact per wave."""
        if i == j == 0:
            return self
        a, b = _shifted(self.a, self.b, i + j)
        power = self.frequencies[:, 0] ** i * self.frequencies[:, 1] ** j
        return WaveField(self.frequencies, a * power, b * power, self.amplitudes,
                         (self.orders[0] + i, self.orders[1] + j))

    def on_grid(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Separable evaluation, values[i_y, j_x]."""
        ca, cb = self.amplitudes * self.a, self.amplitudes * self.b
        px = np.outer(xs, self.frequencies[:, 0])
        py = np.outer(ys, self.frequencies[:, 1])
        cx, sx, cy, sy = np.cos(px), np.sin(px), np.cos(py), np.sin(py)
        # cos(u + v) = cu cv - su sv ; sin(u + v) = su cv + cu sv
        return (cy * ca) @ cx.T - (sy * ca) @ sx.T + (cy * cb) @ sx.T + (sy * cb) @ cx.T

    def to_dict(self) -> dict:
        return {"frequencies": self.frequencies.tolist(), "a": self.a.tolist(), "b": self.b.tolist(),
                "amplitudes": self.amplitudes.tolist(), "orders": list(self.orders)}


@dataclass
class PathSample:
    """One dimensional sample path on a grid."""
    grid: GridSpec
    values: np.ndarray
    seed: int
    method: str
    measure: str
    n_waves: int = 0
    waves: WaveSum = None
    approximate: bool = False
    order: int = 0

    def interpolant(self):
        """Exact wave sum (spectral samples) or a cubic spline flagged approximate."""
        if self.waves is not None:
            return self.waves
        self.approximate = True
        return interpolate.CubicSpline(self.grid.axis, self.values)

    def header(self) -> dict:
        return {"kind": "path", "grid": self.grid.to_dict(), "seed": self.seed, "method": self.method,
                "measure": self.measure, "n_waves": self.n_waves, "approximate": self.approximate,
                "order": self.order}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.grid.axis, "value": self.values})


@dataclass
class FieldSample:
    """Two dimensional sample field, values[i_y, j_x]."""
    grid: GridSpec
    values: np.ndarray
    seed: int
    method: str
    measure: str
    n_waves: int = 0
    waves: WaveField = None
    approximate: bool = False
    orders: tuple[int, int] = (0, 0)

    def interpolant(self):
        if self.waves is not None:
            return self.waves
        self.approximate = True
        spline = interpolate.RectBivariateSpline(self.grid.axis, self.grid.axis, self.values.T, kx=3, ky=3)
        return lambda x, y: spline(x, y, grid=False)

    def header(self) -> dict:
        return {"kind": "field", "grid": self.grid.to_dict(), "seed": self.seed, "method": self.method,
                "measure": self.measure, "n_waves": self.n_waves, "approximate": self.approximate,
                "orders": list(self.orders)}

    def to_frame(self) -> pd.DataFrame:
        xx, yy = np.meshgrid(self.grid.axis, self.grid.axis)
        return pd.DataFrame({"x": xx.ravel(), "y": yy.ravel(), "value": self.values.ravel()})


# Exact sampler

def grid_covariance(mu, grid: GridSpec) -> np.ndarray:
    """Covariance of the process at the grid points."""
    if grid.dimension == 1:
        return linalg.toeplitz(kernel_eval(mu, grid.axis - grid.origin))
    # kernel on the displacement lattice, then gathered
    n, h = grid.points, grid.spacing
    idx = np.arange(-(n - 1), n)
    dx, dy = np.meshgrid(idx * h, idx * h)
    lattice = kernel_eval(mu, np.column_stack([dx.ravel(), dy.ravel()])).reshape(dx.shape)
    iy, ix = np.divmod(np.arange(n * n), n)
    return lattice[(iy[None, :] - iy[:, None]) + n - 1, (ix[None, :] - ix[:, None]) + n - 1]


class ExactSampler:
    """Cholesky sampler. The factor is computed once and reused for ensembles."""

    def __init__(self, mu, grid: GridSpec, ridge: float = RIDGE, max_points: int = MAX_EXACT_POINTS,
                 pivot_tol: float = PIVOT_TOL, psd_tol: float = PSD_TOL):
        if grid.total_points > max_points:
            raise GridTooLarge(f"{grid.total_points} grid points exceed the exact sampler limit {max_points}")
        if grid.dimension != (2 if isinstance(mu, SpectralMeasure2D) else 1):
            raise ValueError("grid dimension does not match the measure")
        self.mu = mu
        self.grid = grid
        cov = grid_covariance(mu, grid)
        cov[np.diag_indices_from(cov)] += ridge
        self.factor, self.piv, self.rank = pivoted_cholesky(cov, pivot_tol, psd_tol)

    def _values(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals (..., rank) to grid values (..., points)."""
        out = np.empty(z.shape[:-1] + (self.grid.total_points,))
        out[..., self.piv] = z @ self.factor.T
        return out

    def ensemble(self, seed: int, n_paths: int, name: str = "exact", index: int = 0) -> np.ndarray:
        """Values of n_paths independent draws, shape (n_paths, total_points)."""
        rng = util.substream(seed, name, index)
        return self._values(rng.standard_normal((n_paths, self.rank)))

    def sample(self, seed: int, index: int = 0) -> PathSample | FieldSample:
        values = self.ensemble(seed, 1, index=index)[0]
        kw = dict(grid=self.grid, seed=seed, method="cholesky_exact", measure=self.mu.ident)
        if self.grid.dimension == 1:
            return PathSample(values=values, **kw)
        return FieldSample(values=values.reshape(self.grid.points, self.grid.points), **kw)


def sample_exact(mu, grid: GridSpec, seed: int, **kwargs) -> PathSample | FieldSample:
    """
    Exact finite dimensional sample: values = L z with Sigma + ridge I = L L^T (pivoted).
    :param mu: spectral measure
    :param grid: grid spec (at most `max_points` points in total)
    :param seed: campaign seed
    :return: path or field sample
    """
    return ExactSampler(mu, grid, **kwargs).sample(seed)


# Spectral superposition

def _atoms(mu) -> tuple[np.ndarray, np.ndarray] | None:
    match mu:
        case Atomic():
            return mu.frequencies, mu.weights
        case Atomic2D():
            return mu.points, mu.weights
    return None


def draw_frequencies(mu, rng: np.random.Generator, n_waves: int) -> np.ndarray:
    return mu.sample(rng, n_waves)


def covariance_misfit(mu, frequencies: np.ndarray, extent: float, misfit_points: int = 16) -> float:
    """
    Largest deviation of the conditional covariance (mean of cos(lambda tau)) from k(tau)
    over a grid of displacements.
    """
    tau = np.linspace(0.0, extent, misfit_points)
    if frequencies.ndim == 1:
        empirical = np.cos(np.outer(tau, frequencies)).mean(axis=1)
        exact = kernel_eval(mu, tau)
    else:
        u = np.array([[1.0, 0.0], [math.sqrt(0.5), math.sqrt(0.5)]])
        z = np.concatenate([np.outer(tau, v) for v in u])
        empirical = np.cos(z @ frequencies.T).mean(axis=1)
        exact = kernel_eval(mu, z)
    return float(np.max(np.abs(empirical - exact)))


def _doubled_frequencies(mu, rng: np.random.Generator, n_waves: int, extent: float, max_n_waves: int,
                         misfit_points: int, adaptive: bool = True) -> np.ndarray:
    if n_waves < 1:
        raise ValueError("n_waves must be positive")
    freqs = draw_frequencies(mu, rng, n_waves)
    while adaptive and len(freqs) < max_n_waves:
        if covariance_misfit(mu, freqs, extent, misfit_points) <= 2 / math.sqrt(len(freqs)):
            break
        freqs = np.concatenate([freqs, draw_frequencies(mu, rng, len(freqs))])
    return freqs


def campaign_wave_count(mu, rng: np.random.Generator, n_waves: int, extent: float,
                        max_n_waves: int = MAX_N_WAVES, misfit_points: int = 16) -> int:
    """
    Wave count of a Monte Carlo campaign: n_waves doubled while one draw of frequencies
    misses the covariance by more than 2/sqrt(count) on [0, extent].
    Atomic measures return their number of atoms.
    """
    atoms = _atoms(mu)
    if atoms is not None:
        return len(atoms[1])
    return len(_doubled_frequencies(mu, rng, n_waves, extent, max_n_waves, misfit_points))


def make_waves(mu, rng: np.random.Generator, n_waves: int = N_WAVES, extent: float = 1.0,
               max_n_waves: int = MAX_N_WAVES, misfit_points: int = 16, adaptive: bool = True):
    """
    Wave representation of one path (field). Atomic measures give the exact finite sum;
    otherwise n_waves is doubled while the covariance misfit exceeds 2/sqrt(n_waves).
    """
    atoms = _atoms(mu)
    if atoms is not None:
        freqs, w = atoms
        amplitudes = np.sqrt(w)
    else:
        freqs = _doubled_frequencies(mu, rng, n_waves, extent, max_n_waves, misfit_points, adaptive)
        amplitudes = np.full(len(freqs), math.sqrt(1.0 / len(freqs)))

    a = rng.standard_normal(len(freqs))
    b = rng.standard_normal(len(freqs))
    if isinstance(mu, SpectralMeasure2D):
        return WaveField(np.asarray(freqs, dtype=float), a, b, amplitudes)
    return WaveSum(np.asarray(freqs, dtype=float), a, b, amplitudes)


def _evaluate(waves, grid: GridSpec) -> np.ndarray:
    if isinstance(waves, WaveField):
        return waves.on_grid(grid.axis, grid.axis)
    return waves(grid.axis)


def sample_spectral(mu, grid: GridSpec, seed: int, n_waves: int = N_WAVES, index: int = 0,
                    max_n_waves: int = MAX_N_WAVES, misfit_points: int = 16) -> PathSample | FieldSample:
    """
    Random wave superposition X = sqrt(1/N) sum [a_j cos<lambda_j, t> + b_j sin<lambda_j, t>]
    with lambda_j drawn from mu (unit variance).
    :param mu: spectral measure
    :param grid: grid spec
    :param seed: campaign seed
    :param n_waves: initial wave count
    :param index: path index (substream)
    :return: path or field sample carrying its wave representation
    """
    rng = util.substream(seed, "waves", index)
    waves = make_waves(mu, rng, n_waves, grid.extent, max_n_waves, misfit_points)
    kw = dict(grid=grid, seed=seed, method="spectral", measure=mu.ident, n_waves=waves.n_waves, waves=waves)
    if grid.dimension == 1:
        return PathSample(values=_evaluate(waves, grid), **kw)
    return FieldSample(values=_evaluate(waves, grid), **kw)


def sample_derivative_paths(mu, grid: GridSpec, seed: int, orders: list, n_waves: int = N_WAVES,
                            index: int = 0, **kwargs) -> list[PathSample | FieldSample]:
    """
    Joint samples of X and its derivatives from the same waves.
    Orders are integers in 1D and (i, j) pairs in 2D; order 0 reproduces sample_spectral.
    """
    base = sample_spectral(mu, grid, seed, n_waves, index, **kwargs)
    res = []
    for order in orders:
        if grid.dimension == 1:
            w = base.waves.deriv(int(order))
            res.append(PathSample(grid=grid, values=_evaluate(w, grid), seed=seed, method="spectral",
                                  measure=mu.ident, n_waves=w.n_waves, waves=w, order=int(order)))
        else:
            i, j = order
            w = base.waves.partial(i, j)
            res.append(FieldSample(grid=grid, values=_evaluate(w, grid), seed=seed, method="spectral",
                                   measure=mu.ident, n_waves=w.n_waves, waves=w, orders=(i, j)))
    return res


# Batched waves for Monte Carlo

@dataclass
class WaveBatch:
    """Independent wave sums, one per row."""
    frequencies: np.ndarray  # (paths, waves) or (paths, waves, 2)
    a: np.ndarray
    b: np.ndarray
    amplitudes: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.a.shape[0]

    def path(self, i: int):
        if self.frequencies.ndim == 3:
            return WaveField(self.frequencies[i], self.a[i], self.b[i], self.amplitudes[i])
        return WaveSum(self.frequencies[i], self.a[i], self.b[i], self.amplitudes[i])

    def values(self, t: np.ndarray, order: int = 0, chunk: int = 64) -> np.ndarray:
        """Derivative of the given order of every path at points t, shape (paths, len(t))."""
        t = np.asarray(t, dtype=float)
        a, b = _shifted(self.a, self.b, order)
        scale = self.amplitudes * self.frequencies ** order
        out = np.empty((self.n_paths, t.size))
        for s in range(0, self.n_paths, chunk):
            phase = self.frequencies[s:s + chunk, :, None] * t[None, None, :]
            out[s:s + chunk] = np.einsum("pw,pwt->pt", scale[s:s + chunk] * a[s:s + chunk], np.cos(phase)) \
                + np.einsum("pw,pwt->pt", scale[s:s + chunk] * b[s:s + chunk], np.sin(phase))
        return out


def draw_waves(mu, rng: np.random.Generator, n_paths: int, n_waves: int) -> WaveBatch:
    """
    Batched wave parameters for Monte Carlo (fixed wave count, atoms exact).
    :param mu: spectral measure
    :param rng: batch generator
    :param n_paths: number of paths
    :param n_waves: waves per path (ignored for atomic measures)
    :return: wave batch
    """
    atoms = _atoms(mu)
    if atoms is not None:
        freqs, w = atoms
        k = len(w)
        frequencies = np.broadcast_to(freqs, (n_paths,) + np.shape(freqs)).copy()
        amplitudes = np.broadcast_to(np.sqrt(w), (n_paths, k)).copy()
    else:
        k = n_waves
        frequencies = draw_frequencies(mu, rng, n_paths * k)
        frequencies = frequencies.reshape((n_paths, k) + frequencies.shape[1:])
        amplitudes = np.full((n_paths, k), math.sqrt(1.0 / k))
    a = rng.standard_normal((n_paths, k))
    b = rng.standard_normal((n_paths, k))
    return WaveBatch(frequencies, a, b, amplitudes)


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Named random substream (Philox)."""
    return util.substream(seed, name, index)
