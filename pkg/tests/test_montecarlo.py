import math

import numpy as np
import pytest

from unittest.mock import MagicMock, patch

from overcrowd.tasks import bounds, montecarlo
from overcrowd.tasks.montecarlo import TailEstimate
from overcrowd.tasks.spectral import Atomic, Atomic2D, StdNormal, StdNormal2D, Uniform
from overcrowd.utils.errors import AssumptionViolated, PreconditionFailed


def batch_task(index: int, size: int, offset: int = 0) -> dict:
    return {"index": index, "size": size + offset}


# wilson_interval tests


@pytest.mark.unit
def test_wilson_interval_half():
    lo, hi = montecarlo.wilson_interval(50, 100)
    assert lo == pytest.approx(0.40383, abs=1e-4)
    assert lo + hi == pytest.approx(1.0)


@pytest.mark.unit
def test_wilson_interval_edges():
    assert montecarlo.wilson_interval(0, 10)[0] == 0.0
    assert montecarlo.wilson_interval(10, 10)[1] == 1.0
    lo, hi = montecarlo.wilson_interval(3, 10)
    assert lo <= 0.3 <= hi


@pytest.mark.unit
def test_wilson_interval_comparisons_widen():
    lo1, hi1 = montecarlo.wilson_interval(30, 100)
    lo3, hi3 = montecarlo.wilson_interval(30, 100, comparisons=3)
    assert lo3 < lo1 and hi1 < hi3


@pytest.mark.unit
@pytest.mark.parametrize("hits, n", [(0, 0), (5, 4), (-1, 4)])
def test_wilson_interval_rejects_bad_counts(hits, n):
    with pytest.raises(ValueError):
        montecarlo.wilson_interval(hits, n)


# run_batches tests


@pytest.mark.unit
def test_run_batches_sizes_and_stop_checks():
    operation = MagicMock()
    out = montecarlo.run_batches(batch_task, 25, batch_size=10, operation=operation, offset=1)
    assert [o["index"] for o in out] == [0, 1, 2]
    assert [o["size"] for o in out] == [11, 11, 6]
    assert operation.raise_if_stopped.call_count == 3


# TailEstimate tests


@pytest.mark.unit
def test_tail_estimate_record():
    est = TailEstimate("zeros", {"n": 2, "T": 1.0}, 10, 3, 0.3, 0.1, 0.6, 7, "direct")
    assert est.ci == (0.1, 0.6)
    rec = est.to_record()
    assert rec["params"] == '{"T": 1.0, "n": 2}'
    assert rec["n_hits"] == 3


@pytest.mark.unit
@pytest.mark.parametrize("n_samples, n_hits, p_hat", [(10, 3, 0.5), (0, 0, 0.0), (None, 1, 0.1)])
def test_tail_estimate_counts_must_match(n_samples, n_hits, p_hat):
    with pytest.raises(ValueError):
        TailEstimate("zeros", {}, n_samples, n_hits, p_hat, 0.0, 1.0, 7, "direct")


@pytest.mark.unit
def test_tail_estimate_without_counts():
    est = TailEstimate("alternating", {}, None, None, 0.25, 0.25, 0.25, 7, "closed_form")
    assert est.to_record()["n_samples"] is None


# estimate_zero_tail tests


@pytest.mark.unit
def test_zero_tail_trivial_threshold():
    est = montecarlo.estimate_zero_tail(StdNormal(), 0, 1.0, 100, seed=1)
    assert est.p_hat == 1.0
    assert est.n_hits == 100


@pytest.mark.unit
def test_zero_tail_unknown_method():
    with pytest.raises(ValueError):
        montecarlo.estimate_zero_tail(StdNormal(), 2, 1.0, 100, seed=1, method="bisection")


@pytest.mark.unit
def test_zero_tail_is_reproducible():
    kwargs = dict(n_samples=300, seed=3, batch_size=100, n_waves=64)
    a = montecarlo.estimate_zero_tail(StdNormal(), 1, 2.0, **kwargs)
    b = montecarlo.estimate_zero_tail(StdNormal(), 1, 2.0, **kwargs)
    assert a.n_hits == b.n_hits
    assert a.ci_lo <= a.p_hat <= a.ci_hi
    assert a.extras["points"] == montecarlo.screen_points(StdNormal(), 2.0)
    assert a.extras["n_waves"] >= 64


@pytest.mark.unit
def test_zero_tail_uses_doubled_wave_count(mocker):
    check = mocker.patch.object(montecarlo.sampler, "covariance_misfit", side_effect=[1.0, 0.0])
    draw = mocker.spy(montecarlo.sampler, "draw_waves")
    est = montecarlo.estimate_zero_tail(StdNormal(), 1, 2.0, n_samples=200, seed=3, batch_size=100, n_waves=16)
    assert check.call_count == 2
    assert est.extras["n_waves"] == 32
    assert [c.args[3] for c in draw.call_args_list] == [32, 32]


@pytest.mark.unit
def test_smallball_wave_count_limit(mocker):
    mocker.patch.object(montecarlo.sampler, "covariance_misfit", return_value=1.0)
    est = montecarlo.estimate_smallball(StdNormal(), 1.0, 0.5, 100, seed=2, n_waves=8, max_n_waves=32)
    assert est.extras["n_waves"] == 32


@pytest.mark.unit
def test_wave_count_of_atoms():
    assert montecarlo.wave_count(Atomic([1.0]), 2.0, seed=1, stream="zeros") == 1


@pytest.mark.unit
@pytest.mark.slow
def test_zero_tail_matches_cosine_oracle():
    T = 1.5 * math.pi
    expected = montecarlo.phase_oracle_cosine(2, T)
    assert expected == pytest.approx(0.5)
    est = montecarlo.estimate_zero_tail(Atomic([1.0]), 2, T, n_samples=4000, seed=11, batch_size=1000)
    assert est.p_hat == pytest.approx(expected, abs=0.05)


@pytest.mark.unit
def test_phase_oracle_cosine():
    assert montecarlo.phase_oracle_cosine(0, 1.0) == 1.0
    assert montecarlo.phase_oracle_cosine(1, 0.5 * math.pi) == pytest.approx(0.5)
    assert montecarlo.phase_oracle_cosine(1, 2 * math.pi) == 1.0
    assert montecarlo.phase_oracle_cosine(3, math.pi) == 0.0


@pytest.mark.unit
def test_screen_points():
    assert montecarlo.screen_points(StdNormal(), 1.0) == montecarlo.MIN_POINTS
    assert montecarlo.screen_points(StdNormal(), 10.0) == 640


# estimate_smallball tests


@pytest.mark.unit
def test_parabolic_max():
    x = np.array([-1.0, 0.0, 1.0])
    values = np.array([-(x - 0.2) ** 2, [0.0, 1.0, 0.0], [5.0, 1.0, 0.0]])
    assert montecarlo.parabolic_max(values).tolist() == pytest.approx([0.0, 1.0, 5.0])


@pytest.mark.unit
def test_smallball_nonpositive_eta():
    est = montecarlo.estimate_smallball(StdNormal(), 1.0, 0.0, 50, seed=1)
    assert est.n_hits == 0
    assert est.p_hat == 0.0


@pytest.mark.unit
def test_smallball_large_eta():
    # |a cos t + b sin t| <= sqrt(a^2 + b^2)
    est = montecarlo.estimate_smallball(Atomic([1.0]), 1.0, 100.0, 200, seed=1, batch_size=100)
    assert est.n_hits == 200


# estimate_nodal_tail tests


@pytest.mark.unit
def test_line_reduction():
    line = montecarlo.line_reduction(Atomic2D([[2.0, 0.0]]))
    assert isinstance(line, Atomic)
    assert line.frequencies.tolist() == [2.0]
    assert montecarlo.line_reduction(StdNormal2D()) is None


@pytest.mark.unit
def test_nodal_tail_line_reduction():
    est = montecarlo.estimate_nodal_tail(Atomic2D([[1.0, 0.0]]), 1, 1.0, 100, seed=2, batch_size=50)
    assert est.event == "nodal"
    assert est.extras["reduction"] == "line"
    assert est.extras["zero_threshold"] == 5
    # cos and sin have at most one zero on [0, 1]
    assert est.n_hits == 0


# kac_rice_mean tests


@pytest.mark.unit
def test_kac_rice_mean():
    assert montecarlo.kac_rice_mean(StdNormal(), math.pi) == pytest.approx(1.0)
    assert montecarlo.kac_rice_mean(StdNormal2D(), 1.0) == pytest.approx(0.5, rel=1e-6)


@pytest.mark.unit
def test_gradient_covariance():
    cov = montecarlo.gradient_covariance(Atomic2D([[1.0, 0.0], [0.0, 2.0]]))
    assert np.allclose(cov, np.diag([0.5, 2.0]))
    assert np.allclose(montecarlo.gradient_covariance(StdNormal2D()), np.eye(2))


@pytest.mark.unit
def test_expectation_and_moments_frame():
    df = montecarlo.estimate_expectation_and_moments(StdNormal(), 1.0, 2, 200, seed=4, batch_size=100,
                                                     n_waves=64, resamples=99)
    assert list(df.columns) == ["quantity", "order", "value", "ci_lo", "ci_hi", "reference"]
    assert df["quantity"].tolist() == ["moment", "moment", "mean", "linearity_ratio"]
    assert df["reference"].iloc[2] == pytest.approx(1 / math.pi)
    assert df["reference"].iloc[3] == 2.0
    assert df["value"].iloc[1] >= df["value"].iloc[0]
    assert df.attrs["n_waves"] >= 64


# estimate_probability_split tests


@pytest.mark.unit
def test_probability_split_estimate():
    split = montecarlo.estimate_probability_split(StdNormal(), 1, 1.0, 2.0, 100, seed=5, batch_size=50,
                                                  n_waves=64)
    df = split.to_frame()
    assert df["part"].tolist() == ["zeros", "small", "large"]
    assert split.small.params["level"] == pytest.approx(4.0)
    with pytest.raises(PreconditionFailed):
        montecarlo.estimate_probability_split(StdNormal(), 0, 1.0, 2.0, 100, seed=5)


# alternating_sign_probability tests


@pytest.mark.unit
def test_alternating_signs():
    assert montecarlo.alternating_signs(3).tolist() == [-1.0, 1.0, -1.0, 1.0]


@pytest.mark.unit
def test_alternating_closed_form():
    est = montecarlo.alternating_sign_probability(Atomic([1.0]), 1, math.pi)
    assert est.method == "closed_form"
    assert est.n_samples is None
    assert est.n_hits is None
    assert est.p_hat == pytest.approx(0.5)
    assert est.ci == (est.p_hat, est.p_hat)


@pytest.mark.unit
@pytest.mark.parametrize("rho, expected", [(0.0, 0.25), (0.5, 1 / 3)])
def test_orthant_probability_bivariate(rho, expected):
    p, se = montecarlo.orthant_probability(np.array([[1.0, rho], [rho, 1.0]]), seed=1)
    assert p == pytest.approx(expected, abs=1e-3)
    assert se >= 0


@pytest.mark.unit
def test_alternating_orthant():
    est = montecarlo.alternating_sign_probability(StdNormal(), 2, 2.0, seed=3, qmc_batches=4, qmc_points=1024)
    assert est.method == "orthant_qmc"
    assert est.n_hits is None
    assert 0.0 < est.p_hat < 1.0
    assert est.ci_lo <= est.p_hat <= est.ci_hi


@pytest.mark.unit
def test_alternating_errors():
    with pytest.raises(PreconditionFailed) as ex:
        montecarlo.alternating_sign_probability(StdNormal(), 11, 5.0)
    assert ex.value.precondition == "n_le_10"
    with pytest.raises(PreconditionFailed):
        montecarlo.alternating_sign_probability(StdNormal(), 0, 1.0)
    with pytest.raises(ValueError):
        montecarlo.alternating_sign_probability(StdNormal(), 2, 1.0, method="exact")


# calibrate_constants tests


@pytest.mark.unit
def test_calibrate_needs_density():
    with pytest.raises(AssumptionViolated):
        montecarlo.calibrate_constants(Atomic([1.0]), [2], [0.5], [0.1], 100, seed=1)


@pytest.mark.unit
def test_calibrate_constants_with_fixed_estimates():
    def fixed(ci_lo, ci_hi):
        return lambda *args, **kwargs: TailEstimate("x", {}, 100, 1, 0.01, ci_lo, ci_hi, 1, "direct")

    with patch.object(montecarlo, "estimate_smallball", side_effect=fixed(0.0, 1e-3)), \
            patch.object(montecarlo, "estimate_zero_tail", side_effect=fixed(0.01, 0.02)):
        results = montecarlo.calibrate_constants(Uniform(1.0), [2, 3], [0.5], [0.1], 100, seed=1)
    by_name = {r.name: r for r in results}
    assert [r.name for r in results] == ["c", "b", "C", "C_from_c", "B", "c_lower"]
    assert by_name["b"].value == pytest.approx(0.5)
    assert by_name["C"].value == 1.0
    assert by_name["B"].value == pytest.approx(1 / (4 * math.e * bounds.A_1D))
    assert by_name["c_lower"].value == pytest.approx(0.5 * 10 ** 0.5)
    assert by_name["c_lower"].worst_margin == pytest.approx(0.0, abs=1e-9)
    assert by_name["c"].worst_margin >= -1e-9
