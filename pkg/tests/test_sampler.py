import math

import numpy as np
import pytest

from overcrowd.tasks import sampler
from overcrowd.tasks.sampler import GridSpec, PathSample, WaveField, WaveSum
from overcrowd.tasks.spectral import Atomic, Atomic2D, StdNormal, StdNormal2D, Uniform
from overcrowd.utils import util
from overcrowd.utils.errors import GridTooLarge


# GridSpec tests


@pytest.mark.unit
def test_grid_spec():
    grid = GridSpec(1, 2.0, 5, origin=1.0)
    assert grid.spacing == pytest.approx(0.5)
    assert grid.axis.tolist() == pytest.approx([1.0, 1.5, 2.0, 2.5, 3.0])
    assert grid.total_points == 5
    grid = GridSpec(2, 1.0, 3)
    assert grid.total_points == 9
    assert grid.coordinates().shape == (9, 2)
    # row major (y, x): x runs fastest
    assert grid.coordinates()[1].tolist() == pytest.approx([0.5, 0.0])


@pytest.mark.unit
@pytest.mark.parametrize("dimension, extent, points", [(3, 1.0, 5), (1, 1.0, 1), (1, 0.0, 5)])
def test_grid_spec_rejects_bad_grids(dimension, extent, points):
    with pytest.raises(ValueError):
        GridSpec(dimension, extent, points)


# WaveSum / WaveField tests


@pytest.mark.unit
def test_wave_sum_derivatives_are_exact():
    waves = WaveSum(np.array([2.0]), np.array([1.0]), np.array([0.0]), np.array([1.0]))
    t = np.linspace(0.0, 3.0, 7)
    assert np.allclose(waves(t), np.cos(2 * t))
    assert np.allclose(waves.deriv(1)(t), -2 * np.sin(2 * t))
    assert np.allclose(waves.deriv(2)(t), -4 * np.cos(2 * t))
    assert waves.deriv(3).order == 3
    assert isinstance(waves(0.5), float)


@pytest.mark.unit
def test_wave_field_partials_and_grid():
    field = WaveField(np.array([[1.0, 2.0]]), np.array([1.0]), np.array([0.0]), np.array([1.0]))
    xs, ys = np.linspace(0.0, 1.0, 4), np.linspace(0.0, 2.0, 3)
    grid_values = field.on_grid(xs, ys)
    assert grid_values.shape == (3, 4)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    assert np.allclose(grid_values, np.cos(xx + 2 * yy))
    assert np.allclose(field(xx, yy), grid_values)
    assert np.allclose(field.partial(0, 1)(xx, yy), -2 * np.sin(xx + 2 * yy))
    assert field.partial(1, 1).orders == (1, 1)
    assert isinstance(field(0.1, 0.2), float)


# ExactSampler tests


@pytest.mark.unit
def test_exact_sampler_is_reproducible():
    grid = GridSpec(1, 1.0, 5)
    s1 = sampler.sample_exact(StdNormal(), grid, seed=7)
    s2 = sampler.sample_exact(StdNormal(), grid, seed=7)
    assert s1.method == "cholesky_exact"
    assert np.array_equal(s1.values, s2.values)
    assert not np.array_equal(s1.values, sampler.sample_exact(StdNormal(), grid, seed=8).values)


@pytest.mark.unit
def test_exact_sampler_covariance():
    grid = GridSpec(1, 2.0, 5)
    exact = sampler.ExactSampler(Uniform(1.0), grid)
    values = exact.ensemble(seed=3, n_paths=20000)
    assert values.shape == (20000, 5)
    cov = np.cov(values, rowvar=False)
    assert np.allclose(cov, sampler.grid_covariance(Uniform(1.0), grid), atol=0.05)


@pytest.mark.unit
def test_exact_sampler_field():
    grid = GridSpec(2, 1.0, 4)
    sample = sampler.sample_exact(StdNormal2D(), grid, seed=1)
    assert sample.values.shape == (4, 4)
    cov = sampler.grid_covariance(StdNormal2D(), grid)
    assert np.allclose(cov, cov.T)
    assert np.allclose(np.diag(cov), 1.0)
    # neighbours along x at distance 1/3
    assert cov[0, 1] == pytest.approx(math.exp(-0.5 / 9))


@pytest.mark.unit
def test_exact_sampler_limits():
    with pytest.raises(GridTooLarge):
        sampler.ExactSampler(StdNormal(), GridSpec(1, 1.0, 100), max_points=50)
    with pytest.raises(ValueError):
        sampler.ExactSampler(StdNormal2D(), GridSpec(1, 1.0, 10))


# sample_spectral tests


@pytest.mark.unit
def test_sample_spectral_atomic_is_exact():
    grid = GridSpec(1, 2 * np.pi, 9)
    sample = sampler.sample_spectral(Atomic([1.0]), grid, seed=5)
    assert sample.n_waves == 1
    w = sample.waves
    assert np.allclose(sample.values, w.a[0] * np.cos(grid.axis) + w.b[0] * np.sin(grid.axis))
    again = sampler.sample_spectral(Atomic([1.0]), grid, seed=5)
    assert np.array_equal(sample.values, again.values)
    other = sampler.sample_spectral(Atomic([1.0]), grid, seed=5, index=1)
    assert not np.array_equal(sample.values, other.values)


@pytest.mark.unit
def test_sample_spectral_unit_variance():
    rng = util.substream(11, "test", 0)
    waves = sampler.make_waves(StdNormal(), rng, n_waves=256, adaptive=False)
    assert waves.n_waves == 256
    assert np.allclose(waves.amplitudes ** 2, 1 / 256)
    with pytest.raises(ValueError):
        sampler.make_waves(StdNormal(), rng, n_waves=0)


@pytest.mark.unit
@pytest.mark.parametrize("misfits, expected, calls", [([0.0], 8, 1), ([1.0, 0.0], 16, 2), ([1.0] * 3, 64, 3)])
def test_campaign_wave_count_doubles(mocker, misfits, expected, calls):
    check = mocker.patch.object(sampler, "covariance_misfit", side_effect=misfits)
    count = sampler.campaign_wave_count(StdNormal(), util.substream(1, "test"), 8, 2.0, max_n_waves=64)
    assert count == expected
    assert check.call_count == calls


@pytest.mark.unit
def test_campaign_wave_count_of_atoms(mocker):
    check = mocker.patch.object(sampler, "covariance_misfit")
    assert sampler.campaign_wave_count(Atomic([1.0, 2.0]), util.substream(1, "test"), 8, 2.0) == 2
    check.assert_not_called()


@pytest.mark.unit
def test_covariance_misfit_of_atoms_is_zero():
    assert sampler.covariance_misfit(Atomic([1.0]), np.array([1.0]), 3.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.unit
def test_sample_derivative_paths():
    grid = GridSpec(1, 1.0, 11)
    base = sampler.sample_spectral(StdNormal(), grid, seed=2, n_waves=256)
    paths = sampler.sample_derivative_paths(StdNormal(), grid, seed=2, orders=[0, 1], n_waves=256)
    assert [p.order for p in paths] == [0, 1]
    assert np.array_equal(paths[0].values, base.values)
    h = 1e-5
    t = grid.axis
    fd = (base.waves(t + h) - base.waves(t - h)) / (2 * h)
    assert np.allclose(paths[1].values, fd, atol=1e-6)


@pytest.mark.unit
def test_sample_derivative_fields():
    grid = GridSpec(2, 1.0, 5)
    fields = sampler.sample_derivative_paths(StdNormal2D(), grid, seed=2, orders=[(0, 0), (1, 0)], n_waves=128)
    assert [f.orders for f in fields] == [(0, 0), (1, 0)]
    assert fields[1].values.shape == (5, 5)


# PathSample tests


@pytest.mark.unit
def test_path_sample_spline_is_approximate():
    grid = GridSpec(1, 1.0, 11)
    sample = PathSample(grid=grid, values=np.sin(grid.axis), seed=0, method="cholesky_exact", measure="x")
    f = sample.interpolant()
    assert sample.approximate
    assert f(0.55) == pytest.approx(math.sin(0.55), abs=1e-4)
    assert sample.header()["approximate"] is True
    assert list(sample.to_frame().columns) == ["t", "value"]


# draw_waves tests


@pytest.mark.unit
def test_draw_waves_batch():
    rng = util.substream(1, "batch", 0)
    batch = sampler.draw_waves(StdNormal(), rng, n_paths=3, n_waves=8)
    assert batch.frequencies.shape == (3, 8)
    assert batch.n_paths == 3
    t = np.linspace(0.0, 1.0, 6)
    values = batch.values(t)
    for i in range(3):
        assert np.allclose(values[i], batch.path(i)(t))
    assert np.allclose(batch.values(t, order=1)[2], batch.path(2).deriv(1)(t))


@pytest.mark.unit
def test_draw_waves_atoms():
    rng = util.substream(1, "batch", 0)
    batch = sampler.draw_waves(Atomic2D([[1.0, 0.0], [0.0, 2.0]]), rng, n_paths=4, n_waves=100)
    assert batch.frequencies.shape == (4, 2, 2)
    assert np.allclose(batch.amplitudes ** 2, 0.5)
    assert isinstance(batch.path(0), WaveField)


@pytest.mark.unit
def test_substream_is_reproducible():
    a = util.substream(42, "waves", 3).standard_normal(4)
    b = util.substream(42, "waves", 3).standard_normal(4)
    c = util.substream(42, "waves", 4).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
