from __future__ import annotations

import math
import numpy as np
import pandas as pd

from collections import defaultdict
from dataclasses import dataclass, field
from joblib import Parallel, delayed
from scipy import integrate, optimize
from skimage import measure

from overcrowd.utils.errors import (
    DegenerateCell, LineCountOverflow, NoConvergence, PreconditionFailed
)

ZERO_TOL = 1e-12      # relative size of a sample treated as a zero
XTOL = 1e-12          # root refinement tolerance
CORNER_TOL = 1e-14    # marching squares corners below this are zero
MAX_REFINEMENTS = 6
SUP_RTOL = 1e-9       # relative slack of certificate conclusions
MAX_CERTIFICATE_N = 40
MAX_LINES = 1_000_000


# Evaluable functions

def derivative(f, k: int):
    """
    k-th derivative of an evaluable 1D function.
    Supports wave sums and numpy polynomials (`deriv`) and scipy splines (`derivative`).
    """
    if k == 0:
        return f
    if hasattr(f, "deriv"):
        return f.deriv(k)
    if hasattr(f, "derivative"):
        return f.derivative(k)
    raise ValueError(f"{type(f).__name__} has no evaluable derivatives")


def evaluate(f, x: np.ndarray) -> np.ndarray:
    """Evaluate f on an array, broadcasting constant results."""
    return np.broadcast_to(np.asarray(f(x), dtype=float), np.shape(x))


@dataclass
class ExplicitField:
    """
    2D function given in closed form together with its mixed partials.
    `derivatives(i, j)` returns the callable of d^i/dx^i d^j/dy^j.
    """
    func: callable
    derivatives: callable = None

    def __call__(self, x, y=None):
        if y is None:
            z = np.atleast_2d(np.asarray(x, dtype=float))
            x, y = z[:, 0], z[:, 1]
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.broadcast_to(np.asarray(self.func(x, y), dtype=float), x.shape)
        return float(out) if out.ndim == 0 else out

    def partial(self, i: int = 0, j: int = 0) -> ExplicitField:
        if i == j == 0:
            return self
        if self.derivatives is None:
            raise ValueError("field has no evaluable partial derivatives")
        base = self.derivatives
        return ExplicitField(base(i, j), lambda a, b: base(i + a, j + b))


def grid_values(g, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Values of a 2D function on the grid xs x ys, indexed values[i_y, j_x]."""
    if hasattr(g, "on_grid"):
        return np.asarray(g.on_grid(xs, ys), dtype=float)
    xx, yy = np.meshgrid(xs, ys)
    return np.broadcast_to(np.asarray(g(xx, yy), dtype=float), xx.shape)


# Zero counting

@dataclass
class ZeroCount:
    """Zeros of a function on [start, start + T]."""
    interval: tuple[float, float]
    count: int
    locations: np.ndarray
    tangencies: np.ndarray
    resolution: int
    refinements: int = 0
    identically_zero: bool = False
    refinement: float = XTOL  # root bracketing tolerance

    def to_dict(self) -> dict:
        return {"interval": list(self.interval), "count": self.count, "locations": self.locations.tolist(),
                "tangencies": self.tangencies.tolist(), "resolution": self.resolution,
                "refinements": self.refinements, "identically_zero": self.identically_zero}


def _zero_runs(small: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges [i, j] of consecutive zero samples."""
    edges = np.diff(np.concatenate([[0], small.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1))


def _scan(f, lo: float, hi: float, points: int) -> ZeroCount:
    """Sign scan on a uniform grid followed by Brent refinement of every bracket."""
    x = np.linspace(lo, hi, points)
    v = evaluate(f, x)
    if not np.all(np.isfinite(v)):
        raise NoConvergence(f"non finite function values on [{lo}, {hi}]")
    tol = ZERO_TOL * max(1.0, float(np.max(np.abs(v))))
    small = np.abs(v) <= tol
    if small.all():
        return ZeroCount((lo, hi), 0, np.array([]), np.array([]), points, identically_zero=True)

    s = np.where(small, 0.0, np.sign(v))
    roots, tangent = [], []

    # sign changes between consecutive nonzero samples
    for i in np.flatnonzero(s[:-1] * s[1:] < 0):
        roots.append(optimize.brentq(lambda t: float(f(t)), x[i], x[i + 1], xtol=XTOL))

    # zero samples: endpoints always count, interior runs only when the sign changes across them
    last = points - 1
    for i, j in _zero_runs(small):
        at = x[0] if i == 0 else x[last] if j == last else 0.5 * (x[i] + x[j])
        if i == 0 or j == last or s[i - 1] * s[j + 1] < 0:
            roots.append(at)
        else:
            tangent.append(at)

    locations = np.unique(roots)
    return ZeroCount((lo, hi), locations.size, locations, np.array(tangent), points)


def count_zeros(f, T: float, resolution: int = 1025, start: float = 0.0,
                max_refinements: int = MAX_REFINEMENTS, logger=None) -> ZeroCount:
    """
    Count the zeros of f on [start, start + T].
    The grid is doubled until the count is unchanged over two consecutive doublings.
    :param f: evaluable function (vectorized)
    :param T: interval length
    :param resolution: initial number of grid points
    :return: ZeroCount of the finest scan
    """
    if not T > 0:
        raise ValueError("interval length must be positive")
    counts = []
    for r in range(max_refinements + 1):
        points = (resolution - 1) * 2 ** r + 1
        result = _scan(f, start, start + T, points)
        result.refinements = r
        if result.identically_zero:
            return result
        counts.append(result.count)
        if len(counts) >= 3 and len(set(counts[-3:])) == 1:
            if logger and result.tangencies.size:
                logger.warning(f"{result.tangencies.size} tangential zeros on [{start}, {start + T}] not counted")
            return result
    raise NoConvergence(f"zero count did not stabilize after {max_refinements} refinements: {counts} "
                        f"(possible tangential zero)")


def count_sign_changes(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """
    Vectorized zero count of sampled paths.
    Zero samples inherit the sign of the preceding nonzero sample.
    """
    s = np.moveaxis(np.sign(np.asarray(values, dtype=float)), axis, -1)
    idx = np.where(s != 0, np.arange(s.shape[-1]), 0)
    np.maximum.accumulate(idx, axis=-1, out=idx)
    filled = np.take_along_axis(s, idx, axis=-1)
    return np.count_nonzero(filled[..., 1:] * filled[..., :-1] < 0, axis=-1)


# Sup norms

@dataclass
class SupNorm:
    grid: float      # grid maximum of |f|
    padded: float    # grid maximum plus Lipschitz padding, an upper bound
    refined: float   # local maximization around the grid maximum
    lipschitz: float = 0.0
    spacing: float = 0.0

    def to_dict(self) -> dict:
        return {"grid": self.grid, "padded": self.padded, "refined": self.refined,
                "lipschitz": self.lipschitz, "spacing": self.spacing}


def sup_norm(f, a: float, b: float, points: int = 4097, lipschitz: float = None) -> SupNorm:
    """
    ||f||_{L^inf[a, b]} from a grid, padded by L h / 2.
    :param lipschitz: Lipschitz constant, default the grid sup of f'
    """
    x = np.linspace(a, b, points)
    v = np.abs(evaluate(f, x))
    h = (b - a) / (points - 1)
    i = int(np.argmax(v))
    grid = float(v[i])
    if lipschitz is None:
        try:
            lipschitz = float(np.max(np.abs(evaluate(derivative(f, 1), x))))
        except ValueError:
            lipschitz = float(np.max(np.abs(np.gradient(v, h))))  # finite difference estimate
    refined = grid
    if h > 0:
        lo, hi = x[max(i - 1, 0)], x[min(i + 1, points - 1)]
        res = optimize.minimize_scalar(lambda t: -abs(float(f(t))), bounds=(lo, hi), method="bounded",
                                       options={"xatol": XTOL})
        refined = max(grid, -float(res.fun))
    return SupNorm(grid, grid + lipschitz * h / 2, refined, lipschitz, h)


def sup_norm_2d(g, lo: float, hi: float, points: int = 257) -> SupNorm:
    """Sup norm of a 2D function on the square [lo, hi]^2 with gradient padding."""
    axis = np.linspace(lo, hi, points)
    h = (hi - lo) / (points - 1)
    v = np.abs(grid_values(g, axis, axis))
    iy, jx = np.unravel_index(int(np.argmax(v)), v.shape)
    grid = float(v[iy, jx])
    lipschitz = sum(float(np.max(np.abs(grid_values(g.partial(*d), axis, axis)))) for d in [(1, 0), (0, 1)])
    bounds = [(axis[max(jx - 1, 0)], axis[min(jx + 1, points - 1)]),
              (axis[max(iy - 1, 0)], axis[min(iy + 1, points - 1)])]
    res = optimize.minimize(lambda z: -abs(float(g(z[0], z[1]))), x0=[axis[jx], axis[iy]],
                            bounds=bounds, method="L-BFGS-B")
    return SupNorm(grid, grid + lipschitz * h / 2, max(grid, -float(res.fun)), lipschitz, h)


# Nodal length

@dataclass
class NodalLength:
    """Length of the zero set of a 2D function in [origin, origin + T]^2."""
    T: float
    length: float
    method: str
    resolution: int
    error_estimate: float = 0.0
    ambiguous_cells: int = 0
    contours: list = field(default_factory=list, repr=False)  # polylines as (k, 2) arrays of (x, y)

    def to_dict(self) -> dict:
        return {"T": self.T, "length": self.length, "method": self.method, "resolution": self.resolution,
                "error_estimate": self.error_estimate, "ambiguous_cells": self.ambiguous_cells,
                "contours": len(self.contours)}

    def to_frame(self) -> pd.DataFrame:
        """Contours as CSV ready polylines."""
        frames = [pd.DataFrame({"contour": k, "x": c[:, 0], "y": c[:, 1]}) for k, c in enumerate(self.contours)]
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["contour", "x", "y"])


def _saddles(values: np.ndarray) -> np.ndarray:
    """Cells with the ambiguous diagonal sign pattern, as (i_y, j_x) of their lower left corner."""
    s = values > 0
    a, b, c, d = s[:-1, :-1], s[:-1, 1:], s[1:, :-1], s[1:, 1:]
    return np.argwhere((a == d) & (b == c) & (a != b))


def _edge_xy(values: np.ndarray, edge: tuple, h: float, origin: float) -> tuple[float, float]:
    """Linear zero crossing on a cell edge; ('h', i, j) joins (i, j)-(i, j+1), ('v', i, j) joins (i, j)-(i+1, j)."""
    kind, i, j = edge
    if kind == "h":
        v0, v1 = values[i, j], values[i, j + 1]
        return origin + h * (j + v0 / (v0 - v1)), origin + h * i
    v0, v1 = values[i, j], values[i + 1, j]
    return origin + h * j, origin + h * (i + v0 / (v0 - v1))


def _cell_links(values: np.ndarray, centre_positive: np.ndarray) -> dict:
    """
    Marching squares segments as links between crossed edges.
    A saddle cell cuts off the two corners whose sign differs from its centre sample.
    """
    s = values > 0
    a, b, c, d = s[:-1, :-1], s[:-1, 1:], s[1:, :-1], s[1:, 1:]
    links = defaultdict(list)
    for i, j in np.argwhere(~((a == b) & (b == c) & (c == d))).tolist():
        bottom, top, left, right = ("h", i, j), ("h", i + 1, j), ("v", i, j), ("v", i, j + 1)
        if a[i, j] == d[i, j] and b[i, j] == c[i, j]:
            if a[i, j] != centre_positive[i, j]:
                pairs = [(bottom, left), (top, right)]
            else:
                pairs = [(bottom, right), (left, top)]
        else:
            crossed = [e for e, cut in [(bottom, a[i, j] != b[i, j]), (top, c[i, j] != d[i, j]),
                                        (left, a[i, j] != c[i, j]), (right, b[i, j] != d[i, j])] if cut]
            pairs = [tuple(crossed)]
        for p, q in pairs:
            links[p].append(q)
            links[q].append(p)
    return links


def _resolved_contours(values: np.ndarray, h: float, origin: float, centre_positive: np.ndarray) -> list:
    """Polylines of the zero set with every saddle cell resolved by its own centre sign."""
    links = _cell_links(values, centre_positive)
    polylines, seen = [], set()
    # open chains start on the boundary (single link), what remains are loops
    for start in [e for e, nb in links.items() if len(nb) == 1] + list(links):
        if start in seen:
            continue
        chain, cur = [start], start
        seen.add(start)
        while ahead := [e for e in links[cur] if e not in seen]:
            cur = ahead[0]
            seen.add(cur)
            chain.append(cur)
        if len(chain) > 2 and start in links[cur]:
            chain.append(start)
        polylines.append(np.array([_edge_xy(values, e, h, origin) for e in chain]))
    return polylines


def _contours(values: np.ndarray, h: float, origin: float, centre_positive: np.ndarray) -> tuple[list, float]:
    saddles = _saddles(values)
    modes = set(centre_positive[saddles[:, 0], saddles[:, 1]].tolist())
    if len(modes) > 1:
        polylines = _resolved_contours(values, h, origin, centre_positive)
    else:
        connect = "high" if modes == {True} else "low"
        polylines = [origin + h * c[:, ::-1] for c in measure.find_contours(values, 0.0, fully_connected=connect)]
    length = sum(float(np.sum(np.hypot(*np.diff(c, axis=0).T))) for c in polylines if len(c) > 1)
    return polylines, length


def nodal_length(g, T: float, resolution: int = 513, origin: float = 0.0, logger=None) -> NodalLength:
    """
    Nodal length of g in the square [origin, origin + T]^2 by marching squares.
    Each saddle cell is resolved by the sign of g at its centre,
    the discretization error is estimated from the 2h subgrid (whose centres are grid points).
    :param g: evaluable 2D function, values from g(x, y) or g.on_grid(xs, ys)
    :param resolution: odd number of grid points per axis
    """
    if resolution < 3 or resolution % 2 == 0:
        raise ValueError("resolution must be odd and at least 3")
    axis = np.linspace(origin, origin + T, resolution)
    h = T / (resolution - 1)
    values = np.array(grid_values(g, axis, axis))

    zero = np.abs(values) < CORNER_TOL
    degenerate = zero[:-1, :-1] & zero[:-1, 1:] & zero[1:, :-1] & zero[1:, 1:]
    if degenerate.any():
        iy, jx = np.argwhere(degenerate)[0]
        raise DegenerateCell(f"cell at ({axis[jx]:.6g}, {axis[iy]:.6g}) has all corners at zero "
                             f"(non transverse zero set)")

    saddles = _saddles(values)
    centre_positive = np.zeros((resolution - 1, resolution - 1), dtype=bool)
    if len(saddles):
        centres = origin + h * (saddles + 0.5)
        mid = np.asarray(g(centres[:, 1], centres[:, 0]), dtype=float)
        centre_positive[saddles[:, 0], saddles[:, 1]] = mid > 0
        if logger:
            logger.info(f"{len(saddles)} saddle cells, {np.count_nonzero(mid > 0)} with a positive centre")

    contours, length = _contours(values, h, origin, centre_positive)
    _, coarse = _contours(values[::2, ::2], 2 * h, origin, values[1::2, 1::2] > 0)
    return NodalLength(T, length, "marching_squares", resolution, abs(length - coarse), len(saddles), contours)


def _slice_count(g, along: str, fixed: float, T: float, resolution: int) -> int:
    if along == "y":
        f = lambda t: g(np.full_like(np.asarray(t, dtype=float), fixed), t)
    else:
        f = lambda t: g(t, np.full_like(np.asarray(t, dtype=float), fixed))
    return count_zeros(f, T, resolution).count


def line_intersection_bound(g, T: float, resolution: int = 257, mode: str = "grid",
                            slice_resolution: int = 257, workers: int = 1) -> float:
    """
    Integral geometric bound sqrt(2) (int N_1 + int N_2) of the nodal length in [0, T]^2,
    N_1(x) and N_2(y) being the zero counts of the vertical and horizontal slices.
    :param mode: 'grid' counts sign changes of the grid values,
                 'adaptive' runs count_zeros on every slice (joblib)
    """
    axis = np.linspace(0.0, T, resolution)
    match mode:
        case "grid":
            values = grid_values(g, axis, axis)
            n1 = count_sign_changes(values, axis=0)  # columns: x fixed
            n2 = count_sign_changes(values, axis=1)  # rows: y fixed
        case "adaptive":
            run = Parallel(n_jobs=workers)
            n1 = np.array(run(delayed(_slice_count)(g, "y", x, T, slice_resolution) for x in axis))
            n2 = np.array(run(delayed(_slice_count)(g, "x", y, T, slice_resolution) for y in axis))
        case _:
            raise ValueError(f"unknown slice counting mode: {mode}")
    return math.sqrt(2) * float(integrate.trapezoid(n1, axis) + integrate.trapezoid(n2, axis))


# Deterministic certificates

@dataclass
class CascadeCertificate:
    """Derivative cascade: n roots in [0, T] and ||f^(n)|| <= M bound every lower derivative on [T, 2T]."""
    n: int
    T: float
    M: float
    bounds: list[float]     # M (2T)^k / k!, k = 0..n
    measured: list[float]   # refined ||f^(n-k)||_{L^inf[T, 2T]}
    padded: list[float]     # padded grid sups
    roots: int
    top_sup: float          # padded ||f^(n)||_{L^inf[0, 2T]}
    holds: bool

    def to_dict(self) -> dict:
        return {"kind": "cascade", "n": self.n, "T": self.T, "M": self.M, "bounds": self.bounds,
                "measured": self.measured, "padded": self.padded, "roots": self.roots,
                "top_sup": self.top_sup, "holds": self.holds}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k": range(self.n + 1), "derivative": [self.n - k for k in range(self.n + 1)],
                             "bound": self.bounds, "measured": self.measured, "padded": self.padded})


def cascade_bound(M: float, T: float, k: int) -> float:
    """M (2T)^k / k!"""
    if M == 0:
        return 0.0
    return math.exp(math.log(M) + k * math.log(2 * T) - math.lgamma(k + 1))


def cascade_check(f, n: int, T: float, M: float, sup_norm_resolution: int = 4097,
                  zero_resolution: int = 1025) -> CascadeCertificate:
    """
    Verify the hypotheses of the derivative cascade and measure every conclusion
    ||f^(n-k)||_{L^inf[T, 2T]} <= M (2T)^k / k!, 0 <= k <= n.
    :param f: function with evaluable derivatives (wave sum or polynomial)
    """
    if n < 1 or not T > 0 or M < 0:
        raise ValueError("cascade check needs n >= 1, T > 0 and M >= 0")
    zeros = count_zeros(f, T, zero_resolution)
    if not zeros.identically_zero and zeros.count < n:
        raise PreconditionFailed("distinct_roots", f"{zeros.count} roots in [0, {T}], {n} required",
                                 margin=float(zeros.count - n))

    top = derivative(f, n)
    pad = sup_norm(derivative(f, n + 1), 0.0, 2 * T, sup_norm_resolution).grid
    top_sup = sup_norm(top, 0.0, 2 * T, sup_norm_resolution, lipschitz=pad).padded
    if top_sup > M:
        raise PreconditionFailed("derivative_sup", f"||f^({n})|| on [0, {2 * T}] is {top_sup:.6g} > M = {M}",
                                 margin=M - top_sup)

    bounds, measured, padded = [], [], []
    for k in range(n + 1):
        s = sup_norm(derivative(f, n - k), T, 2 * T, sup_norm_resolution)
        bounds.append(cascade_bound(M, T, k))
        measured.append(s.refined)
        padded.append(s.padded)
    holds = all(m <= b * (1 + SUP_RTOL) for m, b in zip(measured, bounds))
    return CascadeCertificate(n, T, M, bounds, measured, padded, zeros.count, top_sup, holds)


def no_more_than_n_zeros_check(f, n: int, T: float, M: float, sup_norm_resolution: int = 4097,
                               zero_resolution: int = 1025) -> bool:
    """
    With 2T < n, ||f^(n)||_{L^inf[0, n]} <= M and ||f||_{L^inf[T, 2T]} > M (2T)^n / n!,
    f has at most n - 1 zeros in [0, T]. Returns the measured conclusion.
    """
    if not 2 * T < n:
        raise PreconditionFailed("two_T_lt_n", f"2T = {2 * T} is not below n = {n}", margin=n - 2 * T)
    pad = sup_norm(derivative(f, n + 1), 0.0, n, sup_norm_resolution).grid
    top_sup = sup_norm(derivative(f, n), 0.0, n, sup_norm_resolution, lipschitz=pad).padded
    if top_sup > M:
        raise PreconditionFailed("derivative_sup", f"||f^({n})|| on [0, {n}] is {top_sup:.6g} > M = {M}",
                                 margin=M - top_sup)
    # the grid sup never exceeds the true sup
    low = sup_norm(f, T, 2 * T, sup_norm_resolution).grid
    level = cascade_bound(M, T, n)
    if not low > level:
        raise PreconditionFailed("sup_lower", f"||f|| on [{T}, {2 * T}] is {low:.6g} <= {level:.6g}",
                                 margin=low - level)
    return count_zeros(f, T, zero_resolution).count <= n - 1


@dataclass
class NodalBoxCertificate:
    n: int
    T: float
    M: float
    delta: float
    lines: int
    norms: dict[str, float]   # padded sups on [0, n]^2
    line_sups: dict[str, float]  # smallest sup over the separated lines per direction
    bounds_hold: bool
    implied_length_cap: float
    measured_length: float = None
    length_error: float = None
    length_ok: bool = None

    def to_dict(self) -> dict:
        return {"kind": "nodal_box", "n": self.n, "T": self.T, "M": self.M, "delta": self.delta,
                "lines": self.lines, "norms": self.norms, "line_sups": self.line_sups,
                "bounds_hold": self.bounds_hold, "implied_length_cap": self.implied_length_cap,
                "measured_length": self.measured_length, "length_error": self.length_error,
                "length_ok": self.length_ok}


def log_delta(n: int, T: float) -> float:
    """log of (2T)^n / n!"""
    return n * math.log(2 * T) - math.lgamma(n + 1)


def _check_norms(g, n: int, M: float, names: list[tuple[str, tuple[int, int]]], points: int) -> dict:
    norms = {}
    for name, orders in names:
        s = sup_norm_2d(g.partial(*orders), 0.0, float(n), points).padded
        if s > M / 2:
            raise PreconditionFailed(name, f"{name} = {s:.6g} > M/2 = {M / 2}", margin=M / 2 - s)
        norms[name] = s
    return norms


def _line_sups(g, T: float, offsets: np.ndarray, vertical: bool, points: int, chunk: int = 512) -> np.ndarray:
    """Grid sups of |g| over [T, 2T] along the lines y = offset (or x = offset)."""
    span = np.linspace(T, 2 * T, points)
    out = []
    for s in range(0, offsets.size, chunk):
        part = offsets[s:s + chunk]
        if vertical:
            out.append(np.max(np.abs(grid_values(g, part, span)), axis=0))
        else:
            out.append(np.max(np.abs(grid_values(g, span, part)), axis=1))
    return np.concatenate(out)


def _check_lines(g, T: float, M: float, delta: float, lines: int, points: int) -> dict:
    offsets = delta * np.arange(lines)
    level = M * delta
    sups = {}
    for name, vertical in [("line_y", False), ("line_x", True)]:
        values = _line_sups(g, T, offsets, vertical, points)
        bad = np.flatnonzero(values <= level)
        if bad.size:
            r = int(bad[0])
            axis = "x" if vertical else "y"
            raise PreconditionFailed(name, f"line {axis} = {offsets[r]:.6g} (r = {r}) has sup {values[r]:.6g} "
                                           f"<= M delta = {level:.6g}", margin=float(values[r] - level))
        sups[name] = float(values.min())
    return sups


def nodal_box_certificate(g, n: int, T: float, M: float, norm_points: int = 257, line_points: int = 1025,
                          max_lines: int = MAX_LINES, length_resolution: int = 257,
                          measure_length: bool = True) -> NodalBoxCertificate:
    """
    Verify the separated line hypotheses in both directions and the derivative bounds on [0, n]^2;
    together they cap the nodal length in [0, T]^2 by 4nT.
    :param g: 2D function with `partial(i, j)`
    :param measure_length: also measure the nodal length and compare it with the cap
    """
    if n > MAX_CERTIFICATE_N:
        raise PreconditionFailed("n_le_40", f"certificate order n = {n} exceeds {MAX_CERTIFICATE_N}")
    if not 2 * T <= n:
        raise PreconditionFailed("two_T_le_n", f"2T = {2 * T} exceeds n = {n}", margin=n - 2 * T)
    ld = log_delta(n, T)
    if math.log(T) - ld > math.log(max_lines):
        raise LineCountOverflow(f"floor(T / delta) = exp({math.log(T) - ld:.4g}) lines exceed {max_lines}")
    delta = math.exp(ld)
    lines = math.floor(T / delta) + 1  # r = 0..floor(T / delta)

    norms = _check_norms(g, n, M, [("d2_sup", (0, 1)), ("d1n_sup", (n, 0)),
                                   ("d1_sup", (1, 0)), ("d2n_sup", (0, n))], norm_points)
    line_sups = _check_lines(g, T, M, delta, lines, line_points)
    cap = 4 * n * T
    cert = NodalBoxCertificate(n, T, M, delta, lines, norms, line_sups, True, cap)
    if measure_length:
        length = nodal_length(g, T, length_resolution)
        cert.measured_length = length.length
        cert.length_error = length.error_estimate
        cert.length_ok = length.length <= cap + length.error_estimate
    return cert


@dataclass
class StripCertificate:
    """Single line version: hypotheses on g(., 0) bound the horizontal zero counts for t in [0, delta]."""
    n: int
    T: float
    M: float
    delta: float
    norms: dict[str, float]
    line_sup: float
    counts: list[int]
    holds: bool

    def to_dict(self) -> dict:
        return {"kind": "strip", "n": self.n, "T": self.T, "M": self.M, "delta": self.delta,
                "norms": self.norms, "line_sup": self.line_sup, "counts": self.counts, "holds": self.holds}


def strip_check(g, n: int, T: float, M: float, lines: int = 9, norm_points: int = 257,
                line_points: int = 1025, zero_resolution: int = 257) -> StripCertificate:
    """
    With ||d2 g||, ||d1^n g|| <= M/2 on [0, n]^2 and ||g(., 0)||_{L^inf[T, 2T]} > M delta,
    every horizontal line y = t, t in [0, delta], meets the zero set fewer than n times in [0, T].
    :param lines: number of sampled lines in [0, delta]
    """
    if n > MAX_CERTIFICATE_N:
        raise PreconditionFailed("n_le_40", f"certificate order n = {n} exceeds {MAX_CERTIFICATE_N}")
    if not 2 * T <= n:
        raise PreconditionFailed("two_T_le_n", f"2T = {2 * T} exceeds n = {n}", margin=n - 2 * T)
    delta = math.exp(log_delta(n, T))
    norms = _check_norms(g, n, M, [("d2_sup", (0, 1)), ("d1n_sup", (n, 0))], norm_points)
    line_sup = float(_line_sups(g, T, np.array([0.0]), False, line_points)[0])
    if not line_sup > M * delta:
        raise PreconditionFailed("line_y", f"||g(., 0)|| = {line_sup:.6g} <= M delta = {M * delta:.6g}",
                                 margin=line_sup - M * delta)
    counts = [_slice_count(g, "x", t, T, zero_resolution) for t in np.linspace(0.0, delta, lines)]
    return StripCertificate(n, T, M, delta, norms, line_sup, counts, all(c < n for c in counts))
