"""
Monte Carlo estimators of zero count, small ball and nodal length events,
with Wilson intervals, quasi Monte Carlo orthant probabilities and constant calibration.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import Future
from dataclasses import dataclass, field, asdict

import numpy as np
import pandas as pd
from scipy import integrate, stats
from scipy.stats import qmc

from overcrowd.tasks import bounds as bnd
from overcrowd.tasks import geometry, kernel, sampler, spectral
from overcrowd.tasks.spectral import Atomic, SpectralMeasure1D, SpectralMeasure2D
from overcrowd.utils import util
from overcrowd.utils.errors import AssumptionViolated, InfeasibleCalibration, NoConvergence, PreconditionFailed

MIN_SAMPLES = 1000
BATCH_SIZE = 10000
N_WAVES = 256        # initial wave count, doubled by the campaign misfit check
MISFIT_POINTS = 16
POINTS_PER_UNIT = 64
MIN_POINTS = 257
QMC_POINTS = 4096
QMC_BATCHES = 16
MAX_ORTHANT_N = 10
LOWER_MAX_N = 4       # zero tail campaigns used to fit the lower bound constant
NODAL_RESOLUTION = 129


@dataclass
class TailEstimate:
    """Frequency of an event with its confidence interval."""
    event: str
    params: dict
    n_samples: int | None  # None for closed forms
    n_hits: int | None     # None for closed forms and quasi Monte Carlo estimates
    p_hat: float
    ci_lo: float
    ci_hi: float
    seed: int
    method: str
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_hits is None:
            return
        if not self.n_samples or not math.isclose(self.p_hat, self.n_hits / self.n_samples):
            raise ValueError(f"p_hat {self.p_hat} is not n_hits / n_samples = {self.n_hits}/{self.n_samples}")

    @property
    def ci(self) -> tuple[float, float]:
        return self.ci_lo, self.ci_hi

    def to_dict(self) -> dict:
        return asdict(self)

    def to_record(self) -> dict:
        """Ledger row (parameters serialized with sorted keys)."""
        return {"event": self.event, "method": self.method, "params": json.dumps(self.params, sort_keys=True),
                "n_samples": self.n_samples, "n_hits": self.n_hits, "p_hat": self.p_hat,
                "ci_lo": self.ci_lo, "ci_hi": self.ci_hi, "seed": self.seed}


@dataclass
class CalibrationResult:
    """Fitted constant, the sweep it was fitted on and the smallest margin over that sweep."""
    name: str
    value: float
    sweep: dict
    worst_margin: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SplitEstimate:
    """Frequencies of {N_T >= n}, the small sup event on [T, 2T] and the large derivative event."""
    zeros: TailEstimate
    small: TailEstimate
    large: TailEstimate
    violations: int     # paths in the zero event and in neither of the other two

    @property
    def holds(self) -> bool:
        return self.violations == 0 and self.zeros.ci_lo <= self.small.ci_hi + self.large.ci_hi

    def to_frame(self) -> pd.DataFrame:
        rows = [{"part": part, **est.to_record()} for part, est in
                [("zeros", self.zeros), ("small", self.small), ("large", self.large)]]
        return pd.DataFrame(rows)


def wilson_interval(hits: int, n: int, confidence: float = 0.95, comparisons: int = 1) -> tuple[float, float]:
    """
    Wilson score interval of a binomial proportion.
    :param hits: number of successes
    :param n: number of trials
    :param confidence: joint confidence level
    :param comparisons: number of simultaneous intervals (Bonferroni)
    :return: (lo, hi), always containing hits / n
    """
    if n <= 0:
        raise ValueError("wilson interval of an empty sample")
    if not 0 <= hits <= n:
        raise ValueError(f"hits {hits} outside [0, {n}]")
    alpha = (1.0 - confidence) / comparisons
    z = float(stats.norm.ppf(1.0 - alpha / 2))
    p = hits / n
    z2n = z * z / n
    center = (p + z2n / 2) / (1 + z2n)
    half = z * math.sqrt(p * (1 - p) / n + z2n / (4 * n)) / (1 + z2n)
    lo, hi = max(0.0, center - half), min(1.0, center + half)
    return min(lo, p), max(hi, p)


def _estimate(event: str, params: dict, hits: int, n: int, seed: int, method: str,
              confidence: float, comparisons: int, **extras) -> TailEstimate:
    lo, hi = wilson_interval(hits, n, confidence, comparisons)
    return TailEstimate(event=event, params=params, n_samples=n, n_hits=hits, p_hat=hits / n,
                        ci_lo=lo, ci_hi=hi, seed=seed, method=method, extras=extras)


def screen_points(mu, T: float, points_per_unit: int = POINTS_PER_UNIT, min_points: int = MIN_POINTS) -> int:
    """Screening grid size: points_per_unit per unit length and per unit of sqrt(C_2)."""
    c2 = math.exp(mu.log_moment(2))
    return max(min_points, math.ceil(points_per_unit * T * max(1.0, math.sqrt(c2))))


def wave_count(mu, extent: float, seed: int, stream: str, n_waves: int = N_WAVES,
               max_n_waves: int = sampler.MAX_N_WAVES, misfit_points: int = MISFIT_POINTS,
               logger: logging.Logger = None) -> int:
    """Wave count of a campaign, fixed once by the covariance misfit check on its own substream."""
    count = sampler.campaign_wave_count(mu, util.substream(seed, f"{stream}:waves"), n_waves, extent,
                                        max_n_waves, misfit_points)
    if count != n_waves:
        (logger or util.module_logger()).info(f"{stream}: {count} waves per path (initial {n_waves})")
    return count


def run_batches(task, n_samples: int, batch_size: int = BATCH_SIZE, name: str = "Monte Carlo",
                workers: int = 1, operation=None, logger: logging.Logger = None, **kwargs) -> list[dict]:
    """
    Run `task(index=, size=, **kwargs)` over batches and return the results ordered by batch index.
    Every batch draws from its own substream, so the result doesn't depend on the number of workers.
    :param task: module level batch function returning a dict with the batch 'index'
    :param operation: config section with raise_if_stopped (stop file)
    """
    logger = logger or util.module_logger()
    sizes = [min(batch_size, n_samples - s) for s in range(0, n_samples, batch_size)]
    total_count = len(sizes)
    results: dict[int, dict] = {}
    done_perc = 0

    def stop_check():
        if operation is not None:
            operation.raise_if_stopped()

    if workers <= 1 or total_count == 1:
        for index, size in enumerate(sizes):
            stop_check()
            results[index] = task(index=index, size=size, **kwargs)
            done_perc = util.report_progress(logger=logger, name=name, items=results,
                                             done_perc=done_perc, total_count=total_count)
        return [results[i] for i in range(total_count)]

    def process_future(ft: Future):
        nonlocal done_perc
        if ft.exception() is not None:
            return
        out = ft.result()
        results[out["index"]] = out
        done_perc = util.report_progress(logger=logger, name=name, items=results,
                                         done_perc=done_perc, total_count=total_count)

    fts: list[Future] = []
    with util.PoolExecutor(max_workers=workers) as executor:
        for index, size in enumerate(sizes):
            stop_check()
            ft = executor.submit(task, index=index, size=size, **kwargs)
            ft.add_done_callback(process_future)
            fts.append(ft)
    for ft in fts:
        ft.result()  # re-raise batch errors
    return [results[i] for i in range(total_count)]


def _recount(waves: sampler.WaveBatch, counts: np.ndarray, n: int, T: float, points: int) -> tuple[int, int]:
    """Exact zero count of paths whose grid count is n - 2 or n - 1 (grid counts never exceed the truth)."""
    near = np.flatnonzero((counts >= n - 2) & (counts < n))
    unresolved = 0
    for i in near:
        try:
            counts[i] = geometry.count_zeros(waves.path(int(i)), T, resolution=points).count
        except NoConvergence:
            unresolved += 1
    return int(near.size), unresolved


def _zero_tail_batch(mu, n: int, T: float, seed: int, stream: str, n_waves: int, points: int,
                     index: int, size: int) -> dict:
    waves = sampler.draw_waves(mu, util.substream(seed, stream, index), size, n_waves)
    counts = geometry.count_sign_changes(waves.values(np.linspace(0.0, T, points)))
    recounted, unresolved = _recount(waves, counts, n, T, points)
    return {"index": index, "hits": int(np.count_nonzero(counts >= n)),
            "recounted": recounted, "unresolved": unresolved}


def _zero_tail_exact_batch(exact: sampler.ExactSampler, n: int, seed: int, stream: str,
                           index: int, size: int) -> dict:
    counts = geometry.count_sign_changes(exact.ensemble(seed, size, name=stream, index=index))
    return {"index": index, "hits": int(np.count_nonzero(counts >= n)), "recounted": 0, "unresolved": 0}


def estimate_zero_tail(mu: SpectralMeasure1D, n: int, T: float, n_samples: int, seed: int,
                       method: str = "direct", batch_size: int = BATCH_SIZE, n_waves: int = N_WAVES,
                       max_n_waves: int = sampler.MAX_N_WAVES, misfit_points: int = MISFIT_POINTS,
                       points_per_unit: int = POINTS_PER_UNIT, min_points: int = MIN_POINTS,
                       confidence: float = 0.95, comparisons: int = 1, workers: int = 1,
                       operation=None, logger: logging.Logger = None) -> TailEstimate:
    """
    Frequency of {N_T >= n}.
    direct: random wave paths screened on a grid, near threshold paths recounted exactly.
    grid_exact: Cholesky samples on the screening grid, sign changes only.
    :param mu: spectral measure
    :param n: zero count threshold
    :param T: interval length
    :param n_samples: number of paths
    :param seed: campaign seed
    :return: tail estimate with Wilson interval
    """
    logger = logger or util.module_logger()
    params = {"measure": mu.ident, "n": n, "T": T}
    if n <= 0:
        return _estimate("zeros", params, n_samples, n_samples, seed, method, confidence, comparisons)
    if n_samples < MIN_SAMPLES:
        logger.warning(f"zero tail with {n_samples} samples, intervals will be wide")

    points = screen_points(mu, T, points_per_unit, min_points)
    stream = f"zeros:{n}:{T!r}"
    count = None
    match method:
        case "direct":
            count = wave_count(mu, T, seed, stream, n_waves, max_n_waves, misfit_points, logger)
            out = run_batches(_zero_tail_batch, n_samples, batch_size, name="Zero tail", workers=workers,
                              operation=operation, logger=logger, mu=mu, n=n, T=T, seed=seed, stream=stream,
                              n_waves=count, points=points)
        case "grid_exact":
            exact = sampler.ExactSampler(mu, sampler.GridSpec(1, T, points))
            out = run_batches(_zero_tail_exact_batch, n_samples, batch_size, name="Zero tail", workers=workers,
                              operation=operation, logger=logger, exact=exact, n=n, seed=seed, stream=stream)
        case _:
            raise ValueError(f"Unknown zero tail method: {method}")

    hits = sum(o["hits"] for o in out)
    unresolved = sum(o["unresolved"] for o in out)
    if unresolved:
        logger.warning(f"{unresolved} near threshold paths kept their grid count")
    return _estimate("zeros", params, hits, n_samples, seed, method, confidence, comparisons, points=points,
                     recounted=sum(o["recounted"] for o in out), unresolved=unresolved, n_waves=count)


def parabolic_max(values: np.ndarray) -> np.ndarray:
    """Row maxima refined by the parabola through the largest sample and its neighbours."""
    values = np.asarray(values, dtype=float)
    rows = np.arange(values.shape[0])
    i = np.argmax(values, axis=1)
    top = values[rows, i]
    inner = (i > 0) & (i < values.shape[1] - 1)
    j = np.clip(i, 1, values.shape[1] - 2)
    y0, y1, y2 = values[rows, j - 1], values[rows, j], values[rows, j + 1]
    curve = y0 - 2 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        peak = np.where(curve < 0, y1 - (y2 - y0) ** 2 / (8 * curve), y1)
    return np.where(inner, np.maximum(top, peak), top)


def _smallball_batch(mu, T: float, eta: float, seed: int, stream: str, n_waves: int, points: int,
                     index: int, size: int) -> dict:
    waves = sampler.draw_waves(mu, util.substream(seed, stream, index), size, n_waves)
    sup = parabolic_max(np.abs(waves.values(np.linspace(0.0, T, points))))
    return {"index": index, "hits": int(np.count_nonzero(sup <= eta))}


def estimate_smallball(mu: SpectralMeasure1D, T: float, eta: float, n_samples: int, seed: int,
                       batch_size: int = BATCH_SIZE, n_waves: int = N_WAVES,
                       max_n_waves: int = sampler.MAX_N_WAVES, misfit_points: int = MISFIT_POINTS,
                       points_per_unit: int = POINTS_PER_UNIT, min_points: int = MIN_POINTS,
                       confidence: float = 0.95, comparisons: int = 1, workers: int = 1,
                       operation=None, logger: logging.Logger = None) -> TailEstimate:
    """
    Frequency of {sup_[0,T] |X| <= eta} over a grid with parabolic refinement of the maximum.
    """
    params = {"measure": mu.ident, "T": T, "eta": eta}
    if eta <= 0:
        # the sup of a nondegenerate path is positive almost surely
        return _estimate("smallball", params, 0, n_samples, seed, "direct", confidence, comparisons)
    points = screen_points(mu, T, points_per_unit, min_points)
    stream = f"smallball:{T!r}:{eta!r}"
    count = wave_count(mu, T, seed, stream, n_waves, max_n_waves, misfit_points, logger)
    out = run_batches(_smallball_batch, n_samples, batch_size, name="Small ball", workers=workers,
                      operation=operation, logger=logger, mu=mu, T=T, eta=eta, seed=seed,
                      stream=stream, n_waves=count, points=points)
    hits = sum(o["hits"] for o in out)
    return _estimate("smallball", params, hits, n_samples, seed, "direct", confidence, comparisons, points=points,
                     n_waves=count)


def line_reduction(mu2d: SpectralMeasure2D) -> SpectralMeasure1D | None:
    """
    1D measure of a planar measure supported on a coordinate axis, None otherwise.
    The field then depends on one coordinate and its nodal set in [0,T]^2 is made of N_T full segments.
    """
    if not mu2d.degenerate_line:
        return None
    for angle in (0.0, math.pi / 2):
        try:
            along, across = mu2d.marginals(angle)
        except ValueError:
            continue
        if isinstance(across, Atomic) and bool(np.all(across.frequencies == 0)):
            return along
    return None


def _nodal_batch(mu2d, n: int, T: float, seed: int, stream: str, n_waves: int, resolution: int,
                 index: int, size: int) -> dict:
    waves = sampler.draw_waves(mu2d, util.substream(seed, stream, index), size, n_waves)
    lengths = np.array([geometry.nodal_length(waves.path(i), T, resolution=resolution).length
                        for i in range(size)])
    return {"index": index, "hits": int(np.count_nonzero(lengths > 4 * n * T)), "lengths": lengths}


def estimate_nodal_tail(mu2d: SpectralMeasure2D, n: int, T: float, n_samples: int, seed: int,
                        resolution: int = NODAL_RESOLUTION, batch_size: int = 100, n_waves: int = N_WAVES,
                        max_n_waves: int = sampler.MAX_N_WAVES, misfit_points: int = MISFIT_POINTS,
                        confidence: float = 0.95, comparisons: int = 1, workers: int = 1,
                        operation=None, logger: logging.Logger = None, **kwargs) -> TailEstimate:
    """
    Frequency of {L_T > 4nT} for the nodal length in [0,T]^2.
    Measures supported on a coordinate axis use L_T = T N_T, i.e. the 1D event {N_T >= 4n + 1}.
    :param kwargs: screening options of the 1D reduction
    """
    params = {"measure": mu2d.ident, "n": n, "T": T}
    line = line_reduction(mu2d)
    if line is not None:
        est = estimate_zero_tail(line, 4 * n + 1, T, n_samples, seed, confidence=confidence,
                                 comparisons=comparisons, n_waves=n_waves, max_n_waves=max_n_waves,
                                 misfit_points=misfit_points, workers=workers,
                                 operation=operation, logger=logger, **kwargs)
        est.extras.update(reduction="line", line_measure=line.ident, zero_threshold=4 * n + 1)
        est.event, est.params = "nodal", params
        return est

    stream = f"nodal:{n}:{T!r}"
    count = wave_count(mu2d, T, seed, stream, n_waves, max_n_waves, misfit_points, logger)
    out = run_batches(_nodal_batch, n_samples, batch_size, name="Nodal tail", workers=workers,
                      operation=operation, logger=logger, mu2d=mu2d, n=n, T=T, seed=seed,
                      stream=stream, n_waves=count, resolution=resolution)
    hits = sum(o["hits"] for o in out)
    lengths = np.concatenate([o["lengths"] for o in out])
    return _estimate("nodal", params, hits, n_samples, seed, "direct", confidence, comparisons,
                     resolution=resolution, mean_length=math.fsum(lengths) / lengths.size, n_waves=count)


def gradient_covariance(mu2d: SpectralMeasure2D) -> np.ndarray:
    """Covariance of the gradient of the field, the second moment matrix of mu."""
    if isinstance(mu2d, spectral.Atomic2D):
        p = mu2d.points
        return (p.T * mu2d.weights) @ p
    # product and radial families are symmetric in each coordinate
    return np.diag([math.exp(mu2d.log_moment(2, 0)), math.exp(mu2d.log_moment(0, 2))])


def kac_rice_mean(mu, T: float) -> float:
    """
    Expected zero count (T/pi) sqrt(C_2) in 1D, expected nodal length T^2 E|grad X| / sqrt(2 pi) in 2D.
    """
    if isinstance(mu, SpectralMeasure2D):
        s1, s2 = np.clip(np.linalg.eigvalsh(gradient_covariance(mu)), 0.0, None)
        # E|Z| for Z ~ N(0, diag(s1, s2)) in polar coordinates
        angular, _ = integrate.quad(lambda a: math.sqrt(s1 * math.cos(a) ** 2 + s2 * math.sin(a) ** 2),
                                    0.0, 2 * math.pi)
        mean_grad = math.sqrt(math.pi / 2) * angular / (2 * math.pi)
        return T * T * mean_grad / math.sqrt(2 * math.pi)
    return T / math.pi * math.exp(0.5 * mu.log_moment(2))


def _count_batch(mu, T: float, seed: int, stream: str, n_waves: int, points: int,
                 index: int, size: int) -> dict:
    waves = sampler.draw_waves(mu, util.substream(seed, stream, index), size, n_waves)
    values = waves.values(np.linspace(0.0, 2 * T, 2 * points - 1))
    return {"index": index, "first": geometry.count_sign_changes(values[:, :points]),
            "double": geometry.count_sign_changes(values)}


def _length_batch(mu2d, T: float, seed: int, stream: str, n_waves: int, resolution: int,
                  index: int, size: int) -> dict:
    waves = sampler.draw_waves(mu2d, util.substream(seed, stream, index), size, n_waves)
    first = np.empty(size)
    double = np.empty(size)
    for i in range(size):
        field = waves.path(i)
        first[i] = geometry.nodal_length(field, T, resolution=resolution).length
        double[i] = geometry.nodal_length(field, 2 * T, resolution=2 * resolution - 1).length
    return {"index": index, "first": first, "double": double}


def _bootstrap_ci(data: tuple, statistic, rng, resamples: int, confidence: float, paired: bool = False):
    if data[0].size < 2 or all(np.all(d == d[0]) for d in data):
        value = float(statistic(*data, axis=-1))
        return value, value
    res = stats.bootstrap(data, statistic, n_resamples=resamples, confidence_level=confidence, paired=paired,
                          vectorized=True, method="percentile", batch=50, random_state=rng)
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def estimate_expectation_and_moments(mu, T: float, m_max: int, n_samples: int, seed: int,
                                     batch_size: int = BATCH_SIZE, n_waves: int = N_WAVES,
                                     max_n_waves: int = sampler.MAX_N_WAVES, misfit_points: int = MISFIT_POINTS,
                                     points_per_unit: int = POINTS_PER_UNIT, min_points: int = MIN_POINTS,
                                     resolution: int = NODAL_RESOLUTION, resamples: int = 999,
                                     confidence: float = 0.95, workers: int = 1, operation=None,
                                     logger: logging.Logger = None) -> pd.DataFrame:
    """
    Empirical moments E[N_T^m] (E[L_T^m] for planar measures), m = 1..m_max, with bootstrap intervals,
    the Kac-Rice mean and the ratio E[N_2T]/E[N_T] (2 in 1D, 4 for lengths).
    :return: DataFrame with columns quantity, order, value, ci_lo, ci_hi, reference
    """
    planar = isinstance(mu, SpectralMeasure2D)
    stream = f"moments:{T!r}"
    count = wave_count(mu, 2 * T, seed, stream, n_waves, max_n_waves, misfit_points, logger)
    if planar:
        out = run_batches(_length_batch, n_samples, batch_size, name="Moments", workers=workers,
                          operation=operation, logger=logger, mu2d=mu, T=T, seed=seed, stream=stream,
                          n_waves=count, resolution=resolution)
    else:
        points = screen_points(mu, T, points_per_unit, min_points)
        out = run_batches(_count_batch, n_samples, batch_size, name="Moments", workers=workers,
                          operation=operation, logger=logger, mu=mu, T=T, seed=seed, stream=stream,
                          n_waves=count, points=points)
    first = np.concatenate([o["first"] for o in out]).astype(float)
    double = np.concatenate([o["double"] for o in out]).astype(float)
    rng = util.substream(seed, stream + ":bootstrap")

    rows = []
    for m in range(1, m_max + 1):
        lo, hi = _bootstrap_ci((first ** m,), np.mean, rng, resamples, confidence)
        rows.append({"quantity": "moment", "order": m, "value": math.fsum(first ** m) / first.size,
                     "ci_lo": lo, "ci_hi": hi, "reference": math.nan})
    mean = math.fsum(first) / first.size
    oracle = kac_rice_mean(mu, T)
    rows.append({"quantity": "mean", "order": 1, "value": mean, "ci_lo": rows[0]["ci_lo"],
                 "ci_hi": rows[0]["ci_hi"], "reference": oracle})

    def ratio(a, b, axis=-1):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.mean(b, axis=axis) / np.mean(a, axis=axis)

    if mean > 0:
        lo, hi = _bootstrap_ci((first, double), ratio, rng, resamples, confidence, paired=True)
        value = math.fsum(double) / math.fsum(first)
    else:
        lo = hi = value = math.nan
    rows.append({"quantity": "linearity_ratio", "order": 1, "value": value, "ci_lo": lo, "ci_hi": hi,
                 "reference": 4.0 if planar else 2.0})
    df = pd.DataFrame(rows)
    df.attrs["n_waves"] = count
    return df


def _split_batch(mu, n: int, T: float, M: float, level: float, seed: int, stream: str, n_waves: int,
                 points: int, index: int, size: int) -> dict:
    waves = sampler.draw_waves(mu, util.substream(seed, stream, index), size, n_waves)
    t = np.linspace(0.0, 2 * T, 2 * points - 1)
    values = waves.values(t)
    counts = geometry.count_sign_changes(values[:, :points])
    _recount(waves, counts, n, T, points)
    zeros = counts >= n
    small = parabolic_max(np.abs(values[:, points - 1:])) <= level
    large = parabolic_max(np.abs(waves.values(t, order=n))) > M
    return {"index": index, "zeros": int(np.count_nonzero(zeros)), "small": int(np.count_nonzero(small)),
            "large": int(np.count_nonzero(large)), "violations": int(np.count_nonzero(zeros & ~small & ~large))}


def estimate_probability_split(mu: SpectralMeasure1D, n: int, T: float, M: float, n_samples: int, seed: int,
                               batch_size: int = BATCH_SIZE, n_waves: int = N_WAVES,
                               max_n_waves: int = sampler.MAX_N_WAVES, misfit_points: int = MISFIT_POINTS,
                               points_per_unit: int = POINTS_PER_UNIT, min_points: int = MIN_POINTS,
                               confidence: float = 0.95, workers: int = 1, operation=None,
                               logger: logging.Logger = None) -> SplitEstimate:
    """
    Frequencies of {N_T >= n}, {sup_[T,2T] |X| <= M (2T)^n / n!} and {sup_[0,2T] |X^(n)| > M}.
    Every path of the first event lies in one of the other two.
    """
    if n < 1:
        raise PreconditionFailed("n_positive", f"n = {n}")
    level = math.exp(math.log(M) + n * math.log(2 * T) - math.lgamma(n + 1))
    points = screen_points(mu, 2 * T, points_per_unit, min_points) // 2 + 1
    stream = f"split:{n}:{T!r}:{M!r}"
    count = wave_count(mu, 2 * T, seed, stream, n_waves, max_n_waves, misfit_points, logger)
    out = run_batches(_split_batch, n_samples, batch_size, name="Probability split", workers=workers,
                      operation=operation, logger=logger, mu=mu, n=n, T=T, M=M, level=level, seed=seed,
                      stream=stream, n_waves=count, points=points)
    params = {"measure": mu.ident, "n": n, "T": T, "M": M}
    # three intervals are compared jointly
    parts = {k: _estimate(event, {**params, "level": level} if k == "small" else params,
                          sum(o[k] for o in out), n_samples, seed, "direct", confidence, 3, n_waves=count)
             for k, event in [("zeros", "zeros"), ("small", "sup_small"), ("large", "derivative_large")]}
    violations = sum(o["violations"] for o in out)
    if violations:
        (logger or util.module_logger()).warning(f"{violations} zero event paths outside the split events")
    return SplitEstimate(parts["zeros"], parts["small"], parts["large"], violations)


def alternating_signs(n: int) -> np.ndarray:
    """Signs s_k of the event s_k X_{t_k} > 0: X_{t_0} < 0, X_{t_1} > 0, ..."""
    return np.where(np.arange(n + 1) % 2 == 0, -1.0, 1.0)


def _genz_batch(factor: np.ndarray, rank: int, w: np.ndarray) -> float:
    """Separation of variables estimate of P(Y <= 0), Y = factor z, on the points w of the unit cube."""
    d = factor.shape[0]
    y = np.zeros((w.shape[0], rank))
    weight = np.ones(w.shape[0])
    tiny = np.finfo(float).tiny
    for i in range(d):
        if i < rank:
            s = y[:, :i] @ factor[i, :i]
            e = stats.norm.cdf(-s / factor[i, i])
            weight *= e
            if i < w.shape[1]:
                y[:, i] = stats.norm.ppf(np.clip(w[:, i] * e, tiny, 1.0))
        else:
            # rows beyond the rank are linear in the sampled variables
            weight *= (y @ factor[i, :rank]) <= 0
    return float(np.mean(weight))


def orthant_probability(cov: np.ndarray, seed: int, stream: str = "orthant", qmc_points: int = QMC_POINTS,
                        qmc_batches: int = QMC_BATCHES) -> tuple[float, float]:
    """
    P(Y <= 0) for Y ~ N(0, cov) by separation of variables over randomly scrambled Sobol batches.
    :return: estimate and its standard error over the batches
    """
    factor, _, rank = kernel.pivoted_cholesky(np.asarray(cov, dtype=float))
    d = factor.shape[0]
    dims = rank if rank < d else rank - 1
    dims = max(dims, 1)
    log2_points = max(int(round(math.log2(qmc_points))), 1)
    estimates = []
    for b in range(qmc_batches):
        engine = qmc.Sobol(d=dims, scramble=True, seed=util.substream(seed, stream, b))
        estimates.append(_genz_batch(factor, rank, engine.random_base2(log2_points)))
    est = np.array(estimates)
    se = float(est.std(ddof=1) / math.sqrt(qmc_batches)) if qmc_batches > 1 else math.nan
    return math.fsum(est) / qmc_batches, se


def _alternating_batch(mu, signs: np.ndarray, t: np.ndarray, seed: int, stream: str, n_waves: int,
                       index: int, size: int) -> dict:
    waves = sampler.draw_waves(mu, util.substream(seed, stream, index), size, n_waves)
    hits = np.all(waves.values(t) * signs > 0, axis=1)
    return {"index": index, "hits": int(np.count_nonzero(hits))}


def alternating_sign_probability(mu: SpectralMeasure1D, n: int, T: float, method: str = "orthant_grid",
                                 n_samples: int = 100000, seed: int = 0, batch_size: int = BATCH_SIZE,
                                 n_waves: int = N_WAVES, qmc_points: int = QMC_POINTS,
                                 max_n_waves: int = sampler.MAX_N_WAVES, misfit_points: int = MISFIT_POINTS,
                                 qmc_batches: int = QMC_BATCHES, confidence: float = 0.95, comparisons: int = 1,
                                 workers: int = 1, operation=None, logger: logging.Logger = None) -> TailEstimate:
    """
    P(X_{t_0} < 0, X_{t_1} > 0, ..., (-1)^(n+1) X_{t_n} > 0) at t_k = kT/n, a lower bound of P(N_T >= n).
    n = 1 uses the bivariate closed form 1/4 - arcsin(k(T)) / (2 pi).
    :param method: mc (sign patterns of sampled paths) or orthant_grid (quasi Monte Carlo)
    """
    if n < 1:
        raise PreconditionFailed("n_positive", f"n = {n}")
    params = {"measure": mu.ident, "n": n, "T": T}
    if n == 1 and method != "mc":
        rho = float(np.clip(kernel.kernel_eval(mu, np.array([T]))[0], -1.0, 1.0))
        p = 0.25 - math.asin(rho) / (2 * math.pi)
        return TailEstimate("alternating", params, None, None, p, p, p, seed, "closed_form", {"rho": rho})

    signs = alternating_signs(n)
    match method:
        case "mc":
            t = np.linspace(0.0, T, n + 1)
            stream = f"alternating:{n}:{T!r}"
            count = wave_count(mu, T, seed, stream, n_waves, max_n_waves, misfit_points, logger)
            out = run_batches(_alternating_batch, n_samples, batch_size, name="Alternating signs",
                              workers=workers, operation=operation, logger=logger, mu=mu, signs=signs, t=t,
                              seed=seed, stream=stream, n_waves=count)
            hits = sum(o["hits"] for o in out)
            return _estimate("alternating", params, hits, n_samples, seed, "mc", confidence, comparisons,
                             n_waves=count)
        case "orthant_grid" | "orthant_qmc":
            if n > MAX_ORTHANT_N:
                raise PreconditionFailed("n_le_10", f"orthant integration needs n <= {MAX_ORTHANT_N}, got {n}",
                                         margin=MAX_ORTHANT_N - n)
            gram = kernel.gram_matrix(mu, n, T)
            # Y_k = -s_k X_{t_k} <= 0, sign flips conjugate the covariance
            cov = gram.entries * np.outer(signs, signs)
            p, se = orthant_probability(cov, seed, f"orthant:{n}:{T!r}", qmc_points, qmc_batches)
            z = float(stats.norm.ppf(1.0 - (1.0 - confidence) / (2 * comparisons)))
            half = z * se if math.isfinite(se) else 0.0
            p = min(max(p, 0.0), 1.0)
            return TailEstimate("alternating", params, qmc_points * qmc_batches, None, p,
                                max(0.0, p - half), min(1.0, p + half), seed, "orthant_qmc",
                                {"std_error": se, "error_estimate": 3 * se, "rank": gram.rank})
        case _:
            raise ValueError(f"Unknown alternating sign method: {method}")


def phase_oracle_cosine(n: int, T: float, frequency: float = 1.0) -> float:
    """
    Exact P(N_T >= n) for X_t = a cos(wt) + b sin(wt) = R cos(wt - phi), phi uniform.
    The zeros form a lattice of spacing pi/w with a uniform offset in [0, pi/w).
    """
    if n <= 0:
        return 1.0
    span = abs(frequency) * T
    return min(1.0, max(0.0, (span - (n - 1) * math.pi) / math.pi))


def calibrate_constants(mu: SpectralMeasure1D, ms: list[int], ratios: list[float], etas: list[float],
                        n_samples: int, seed: int, T: float = 1.0, A: float = bnd.A_1D, turan_A: float = 14.0,
                        confidence: float = 0.95, mc_kwargs: dict = None, cert_kwargs: dict = None,
                        logger: logging.Logger = None) -> list[CalibrationResult]:
    """
    Fit the constants of the bounds over a sweep:
    c: lambda_min >= (cT/m)^(2(m-1)) for T = r b m, r in ratios, m in ms
    b: largest certified T/m ratio
    C: Monte Carlo small ball on [0, T] below (Cm/T)^(m^2) eta^m
    C_from_c: the small ball prefactor implied by c through the Gram density
    B: (4eAC)^-1
    c_lower: Monte Carlo lower interval of P(N_T >= n) above exp(-n^2 log(cn/T))
    :param mc_kwargs: options of the Monte Carlo estimators (batch_size, n_waves, workers...)
    :param cert_kwargs: options of the eigenvalue certificates (max_gram, dps...)
    :return: calibration results in the order c, b, C, C_from_c, B, c_lower
    """
    logger = logger or util.module_logger()
    mc_kwargs = dict(mc_kwargs or {})
    cert_kwargs = dict(cert_kwargs or {})
    report = spectral.check_assumption_a1(mu)
    if not report.satisfied:
        raise AssumptionViolated(f"{mu.ident} has no density level set, constants cannot be calibrated")
    b0 = report.b

    # eigenvalue constant
    certs = []
    for m in ms:
        for r in ratios:
            certs.append(kernel.eigen_certificate(mu, m, r * b0 * m, b=b0, turan_A=turan_A, logger=logger,
                                                  **cert_kwargs))
    fitted = [ct for ct in certs if ct.m > 1 and math.isfinite(ct.c_fitted) and ct.c_fitted > 0]
    if not fitted:
        raise InfeasibleCalibration("no positive eigenvalue on the sweep, c cannot be fitted")
    c = min(ct.c_fitted for ct in fitted)
    margin = min(ct.log_lambda_min - 2 * (ct.m - 1) * math.log(c * ct.T / ct.m) for ct in fitted)
    sweep = {"ms": list(ms), "ratios": list(ratios), "b": b0}
    results = [CalibrationResult("c", c, sweep, margin)]

    # threshold ratio
    certified = [r for r in ratios if all(ct.resolved for ct in certs if math.isclose(ct.T, r * b0 * ct.m))]
    if not certified:
        raise InfeasibleCalibration("no ratio with resolved certificates, b cannot be fitted")
    b = max(certified) * b0
    results.append(CalibrationResult("b", b, sweep, b0 - b))

    # small ball prefactor
    ms_T = [m for m in ms if T <= b0 * m]
    if not ms_T or not etas:
        raise InfeasibleCalibration(f"no m in {ms} with T = {T} <= b m, C cannot be fitted")
    need, sb = [], []
    for eta in etas:
        est = estimate_smallball(mu, T, eta, n_samples, seed, confidence=confidence, comparisons=len(etas),
                                 logger=logger, **mc_kwargs)
        sb.append((eta, est))
        for m in ms_T:
            need.append((math.log(est.ci_hi) - m * math.log(eta)) / (m * m) + math.log(T / m))
    C = max(1.0, math.exp(max(need)))
    margin = min(bnd.smallball_bound(m, T, eta, C, strict=False).log_bound - math.log(est.ci_hi)
                 for eta, est in sb for m in ms_T)
    results.append(CalibrationResult("C", C, {"ms": ms_T, "etas": list(etas), "T": T}, margin))

    # prefactor implied by c
    implied = [bnd.eigen_smallball_bound(0.0, ct.m, 1.0, log_lambda=2 * (ct.m - 1) * math.log(c * ct.T / ct.m))
               / (ct.m * ct.m) + math.log(ct.T / ct.m) for ct in fitted]
    C_from_c = max(1.0, math.exp(max(implied)))
    results.append(CalibrationResult("C_from_c", C_from_c, sweep, math.log(C_from_c) - max(implied)))

    B = bnd.BoundConstants(b=b, c=c, C=C, A=A, turan_A=turan_A).derived_B()
    results.append(CalibrationResult("B", B, {"A": A, "C": C}, 0.0))

    # lower bound constant
    lower = []
    for n in [m for m in ms if m <= LOWER_MAX_N]:
        for r in ratios:
            Tn = r * b0 * n
            est = estimate_zero_tail(mu, n, Tn, n_samples, seed, confidence=confidence,
                                     comparisons=len(ratios), logger=logger, **mc_kwargs)
            if est.ci_lo > 0:
                lower.append((n, Tn, est.ci_lo))
            else:
                logger.info(f"c_lower: P(N_{Tn:.3g} >= {n}) has a zero lower interval, skipped")
    if not lower:
        raise InfeasibleCalibration("every zero tail lower interval is 0, c_lower cannot be fitted")
    c_lower = max(Tn / n * math.exp(-math.log(lo) / (n * n)) for n, Tn, lo in lower)
    margin = min(math.log(lo) + n * n * math.log(c_lower * n / Tn) for n, Tn, lo in lower)
    results.append(CalibrationResult("c_lower", c_lower,
                                     {"points": [{"n": n, "T": Tn, "ci_lo": lo} for n, Tn, lo in lower]},
                                     margin))
    for res in results:
        logger.info(f"calibrated {res.name} = {res.value:.6g} (worst margin {res.worst_margin:.3g})")
    return results
