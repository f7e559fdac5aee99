import math

import pytest

from types import SimpleNamespace

from overcrowd.tasks import bounds
from overcrowd.tasks.bounds import A_1D, BoundConstants
from overcrowd.tasks.spectral import Atomic, StdNormal, Uniform, moments_1d
from overcrowd.utils.errors import PreconditionFailed, UnknownRow


@pytest.fixture
def constants():
    return BoundConstants(b=1.0, B=0.5, C=2.0)


# BoundConstants tests


@pytest.mark.unit
def test_bound_constants_from_config():
    section = SimpleNamespace(b=0.0, B=0.0, c=3.0, c_lower=0.0, C=2.0, turan_A=14.0, provenance="fitted")
    k = BoundConstants.from_config(section, dimension=1, assumption=SimpleNamespace(b=0.25))
    assert k.b == 0.25
    assert k.c == 3.0
    assert k.c_lower is None
    assert k.B == pytest.approx(1 / (4 * math.e * A_1D * 2.0))
    assert k.provenance == "fitted"
    assert BoundConstants.from_config(section, dimension=2).A == bounds.A_2D


@pytest.mark.unit
def test_bound_constants_regime_and_derived():
    assert BoundConstants(b=0.5, B=0.1, C=2.0).standard_regime
    assert not BoundConstants(b=0.5, B=0.1, C=0.5).standard_regime
    with pytest.raises(ValueError):
        BoundConstants().derived_B()


# floor_eps_n tests


@pytest.mark.unit
def test_floor_eps_n_is_exact():
    assert 0.29 * 100 < 29  # float product rounds down
    assert bounds.floor_eps_n(0.29, 100) == 29
    assert bounds.floor_eps_n(0.1, 30) == 3


# theorem1_lower tests


@pytest.mark.unit
@pytest.mark.parametrize("n, expected", [(4, -16 * math.log(40)), (2, -4 * math.log(20))])
def test_theorem1_lower(n, expected):
    report = bounds.theorem1_lower(n, 1.0, c=10.0, b=1.0)
    assert report.valid
    assert report.log_bound == pytest.approx(expected)
    assert report.bound == pytest.approx(math.exp(expected))


@pytest.mark.unit
def test_theorem1_lower_preconditions():
    with pytest.raises(PreconditionFailed) as ex:
        bounds.theorem1_lower(2, 3.0, c=10.0, b=1.0)
    assert ex.value.precondition == "T_le_bn"
    report = bounds.theorem1_lower(2, 3.0, c=10.0, b=1.0, strict=False)
    assert not report.valid
    assert report.log_bound is None
    assert report.bound is None


@pytest.mark.unit
def test_theorem1_lower_derives_b_from_measure():
    # uniform on [-1, 1]: b = pi/M0 = 1, so T = 3 > b n for n = 2
    with pytest.raises(PreconditionFailed) as ex:
        bounds.theorem1_lower(2, 3.0, c=10.0, mu=Uniform(1.0))
    assert ex.value.precondition == "T_le_bn"
    report = bounds.theorem1_lower(4, 1.0, c=10.0, mu=Uniform(1.0))
    assert report.inputs["b"] == pytest.approx(1.0)
    assert report.log_bound == pytest.approx(-16 * math.log(40))


@pytest.mark.unit
@pytest.mark.parametrize("mu", [None, Atomic([1.0])])
def test_theorem1_lower_without_b(mu):
    report = bounds.theorem1_lower(4, 1.0, c=10.0, mu=mu, strict=False)
    assert not report.valid
    assert report.preconditions[0].name == "T_le_bn"
    assert report.preconditions[0].margin is None


# theorem1_upper tests


@pytest.mark.unit
def test_theorem1_upper(constants):
    report = bounds.theorem1_upper(0.1, 100, 1.0, 1.0, constants)
    h = math.log(0.5) + 0.8 * math.log(100)
    assert report.valid
    assert report.audit["h_n"] == pytest.approx(h)
    assert report.audit["m"] == 10
    assert report.log_bound == pytest.approx(math.log(2) - 500 * h)
    assert report.bound == 0.0
    assert [p.name for p in report.preconditions] == ["eps_range", "n_ge_inv_eps2", "T_in_open_interval",
                                                      "argument_ge_e"]


@pytest.mark.unit
def test_theorem1_upper_with_moment_table():
    k = BoundConstants(b=1.0, B=0.5)
    table = moments_1d(StdNormal(), max_order=40)
    report = bounds.theorem1_upper(0.25, 16, 1.0, table, k, strict=False)
    assert report.inputs["D_root"] == pytest.approx(table.d_root(16))


@pytest.mark.unit
def test_theorem1_upper_argument_below_e():
    k = BoundConstants(b=1000.0, B=0.5)
    with pytest.raises(PreconditionFailed) as ex:
        bounds.theorem1_upper(0.1, 100, 100.0, 1.0, k)
    assert ex.value.precondition == "argument_ge_e"
    assert ex.value.margin == pytest.approx(math.log(0.5) - 1)


@pytest.mark.unit
def test_theorem1_upper_needs_constants():
    with pytest.raises(ValueError):
        bounds.theorem1_upper(0.1, 100, 1.0, 1.0, BoundConstants(b=1.0))


# theorem2_upper tests


@pytest.mark.unit
def test_theorem2_upper(constants):
    report = bounds.theorem2_upper(0.1, 100, 1.0, 1.0, constants)
    h = math.log(0.5) + 0.6 * math.log(100)
    assert report.valid
    assert report.inputs["length"] == 400.0
    assert report.log_bound == pytest.approx(math.log(6) - 500 * h)


@pytest.mark.unit
def test_theorem2_upper_eps_range(constants):
    report = bounds.theorem2_upper(0.3, 100, 1.0, 1.0, constants, strict=False)
    assert not report.valid
    assert report.preconditions[0].name == "eps_range"


# smallball_bound tests


@pytest.mark.unit
def test_smallball_bound():
    report = bounds.smallball_bound(2, 1.0, 0.1, 2.0)
    assert report.log_bound == pytest.approx(4 * math.log(4) + 2 * math.log(0.1))
    with pytest.raises(PreconditionFailed) as ex:
        bounds.smallball_bound(2, 1.0, 0.0, 2.0)
    assert ex.value.precondition == "eta_positive"
    with pytest.raises(PreconditionFailed):
        bounds.smallball_bound(2, 3.0, 0.1, 2.0, b=1.0)


@pytest.mark.unit
def test_eigen_smallball_and_orthant_bounds():
    assert bounds.eigen_smallball_bound(1.0, 1, 0.5) == pytest.approx(-math.log(2 * math.pi))
    assert bounds.orthant_lower_bound(4.0, 1) == pytest.approx(0.0)
    assert bounds.orthant_lower_bound(None, 3, log_lambda=0.0) == pytest.approx(-4 * math.log(2))
    with pytest.raises(PreconditionFailed):
        bounds.eigen_smallball_bound(0.0, 1, 0.5)
    with pytest.raises(PreconditionFailed):
        bounds.orthant_lower_bound(-1.0, 1)


# lemsbp_bound tests


@pytest.mark.unit
def test_lemsbp_bound():
    report = bounds.lemsbp_bound(0.1, 100, 1.0, 1.0, B=0.5, C=1.0)
    h = math.log(0.5) + 0.8 * math.log(100)
    assert report.valid
    assert report.log_bound == pytest.approx(-500 * h)
    assert report.audit["exponent"] == -900
    assert report.audit["exponent_ok"]
    assert "log_smallball" in report.audit


@pytest.mark.unit
def test_lemsbp_bound_needs_constants():
    with pytest.raises(ValueError):
        bounds.lemsbp_bound(0.1, 100, 1.0, 1.0)
    report = bounds.lemsbp_bound(0.1, 100, 1.0, 1.0, C=1.0, strict=False)
    assert not report.valid
    assert {p.name for p in report.preconditions if not p.satisfied} == {"h_ge_1"}


# dudley_sup_bound tests


@pytest.mark.unit
def test_dudley_sup_bound():
    sup = bounds.dudley_sup_bound(moments_1d(StdNormal(), max_order=8), 1, 1.0)
    assert sup.sigma == pytest.approx(1.0)
    assert sup.beta == pytest.approx(4 * math.sqrt(3.0))
    assert sup.expected_sup == pytest.approx(48 * math.sqrt(math.pi) * math.sqrt(3.0))
    assert sup.expected_abs_sup == pytest.approx(A_1D * math.sqrt(3.0))
    assert sup.a_n_dn == pytest.approx(A_1D * math.sqrt(3.0))
    assert sup.log_tail_at(1.0) == 0.0
    assert sup.log_tail_at(sup.expected_abs_sup + 2.0) == pytest.approx(-2.0)


# probability_split tests


@pytest.mark.unit
def test_probability_split():
    table = moments_1d(StdNormal(), max_order=8)
    report = bounds.probability_split(2, 1.0, 1.0, table, BoundConstants(C=2.0))
    assert report.audit["log_eta"] == pytest.approx(math.log(2))
    assert report.audit["smallball_term"] == 0.0
    assert report.audit["sup_tail_term"] == 0.0
    assert report.log_bound == pytest.approx(math.log(2))


@pytest.mark.unit
def test_probability_split_needs_C():
    table = moments_1d(StdNormal(), max_order=8)
    with pytest.raises(PreconditionFailed) as ex:
        bounds.probability_split(2, 1.0, 1.0, table, BoundConstants())
    assert ex.value.precondition == "C_given"


# short_range_repulsion tests


@pytest.mark.unit
def test_short_range_repulsion():
    k = BoundConstants(B=0.5)
    report = bounds.short_range_repulsion(16, 0.1, 1.0, k)
    log_b_n = math.log(2) - 32 * (math.log(0.5) + 0.5 * math.log(16))
    assert report.audit["log_b_n"] == pytest.approx(log_b_n)
    assert report.audit["b_prime"] == pytest.approx(16 * math.exp(-2 * (1 - math.log(0.5))))
    assert report.log_bound == pytest.approx(log_b_n + 16 * math.log(0.1))
    with pytest.raises(PreconditionFailed) as ex:
        bounds.short_range_repulsion(8, 0.1, 1.0, k)
    assert ex.value.precondition == "n_ge_16"


# regime_table tests


@pytest.mark.unit
def test_regime_table_compact():
    report = bounds.regime_table("compact", 1, 10, 1.0, m=4)
    assert report.constraint.satisfied
    assert report.log_tail == pytest.approx(-100 * math.log(10))
    assert report.log_moment == pytest.approx(4 * math.log(2))
    assert report.to_dict()["row"] == "compact"


@pytest.mark.unit
def test_regime_table_rows():
    with pytest.raises(UnknownRow) as ex:
        bounds.regime_table("critical", 1, 10, 1.0)
    assert ex.value.precondition == "regime_row"
    with pytest.raises(PreconditionFailed) as ex:
        bounds.regime_table("subcritical", 1, 10, 1.0)
    assert ex.value.precondition == "alpha_lt_1"
    with pytest.raises(PreconditionFailed) as ex:
        bounds.regime_table("logtype", 1, 10, 1.0, gamma=0.4)
    assert ex.value.precondition == "gamma_gt_half"
    with pytest.raises(PreconditionFailed) as ex:
        bounds.regime_table("supercritical", 1, 10, 2.0, alpha=1.0)
    assert ex.value.precondition == "T_eq_1"


@pytest.mark.unit
def test_regime_table_supercritical_subdivision():
    report = bounds.regime_table("supercritical", 1, 10, 2.0, alpha=1.0, kappa=0.1, strict=False)
    assert not report.constraint.satisfied
    assert report.subdivision["pieces"] == 2


@pytest.mark.unit
def test_kappa_chain():
    chain = bounds.kappa_chain(0.5, 0.2)
    eps = chain["eps"]
    assert chain["kappa_double_prime"] == pytest.approx((1 - 0.5 - 2 * eps) / (1 - 2 * eps))
    assert chain["kappa"] < chain["kappa_prime"] < chain["kappa_double_prime"] < 0.5
    with pytest.raises(PreconditionFailed):
        bounds.kappa_chain(0.5, 0.6)


@pytest.mark.unit
def test_regime_doubling_ratio():
    ratio = bounds.regime_doubling_ratio("compact", 1, 10, 1.0)
    assert ratio == pytest.approx(4 * math.log(20) / math.log(10))


# BoundReport tests


@pytest.mark.unit
def test_bound_report_frame():
    df = bounds.theorem1_lower(2, 1.0, c=10.0, b=1.0).to_frame()
    assert df["row"].tolist() == ["T_le_bn", "cn_over_T_ge_1", "log_bound"]
    assert df["satisfied"].all()
