import json
import math

import pandas as pd
import pytest

from overcrowd.config.config import Config, read_config_file
from overcrowd.flows import AnalysisWorkflow, CampaignWorkflow, SimulationWorkflow, CASCADE_SLACK, MIN_ROOT_GAP
from overcrowd.tasks import montecarlo
from overcrowd.tasks.montecarlo import CalibrationResult
from overcrowd.tasks.spectral import Atomic, StdNormal
from overcrowd.utils.errors import ConfigError

SMALL_SAMPLER = {"sampler": {"n_waves": 64, "max_n_waves": 64}}


def read_json(file) -> dict:
    return json.loads(file.read_text(encoding="utf-8"))


# SimulationWorkflow tests


@pytest.mark.unit
def test_simulate_exact(make_cfg):
    cfg = make_cfg("simulate", {"experiment": {
        "measure": {"family": "stdnormal"},
        "simulate": {"T": 2.0, "points": 33, "n_paths": 2, "method": "exact"}}})
    files = SimulationWorkflow(cfg=cfg).simulate()
    assert [f.name for f in files] == ["sample_0_order_0.csv", "sample_0_order_0.frame",
                                       "sample_1_order_0.csv", "sample_1_order_0.frame", "samples.plot.csv"]
    df = pd.read_csv(files[0])
    assert list(df.columns) == ["schema_version", "t", "value"]
    assert len(df) == 33


@pytest.mark.unit
def test_simulate_derivatives(make_cfg):
    cfg = make_cfg("simulate", {**SMALL_SAMPLER, "experiment": {
        "measure": {"family": "stdnormal"},
        "simulate": {"T": 2.0, "points": 33, "n_paths": 1, "orders": [0, 1]}}})
    files = SimulationWorkflow(cfg=cfg).simulate()
    names = [f.name for f in files]
    assert "sample_0_order_1.frame" in names
    assert names[-1] == "samples.plot.csv"


@pytest.mark.unit
def test_zeros(make_cfg):
    cfg = make_cfg("zeros", {**SMALL_SAMPLER, "experiment": {
        "measure": {"family": "stdnormal"}, "zeros": {"T": 5.0, "n_paths": 3, "resolution": 257}}})
    files = SimulationWorkflow(cfg=cfg).zeros()
    df = pd.read_csv(files[0])
    assert df["path"].tolist() == [0, 1, 2]
    assert (df["count"] >= 0).all()
    doc = read_json(files[1])
    assert doc["kac_rice"] == pytest.approx(5.0 / math.pi)


@pytest.mark.unit
def test_zeros_needs_1d_measure(make_cfg):
    cfg = make_cfg("zeros", {"experiment": {"measure": {"family": "stdnormal2d"}}})
    with pytest.raises(ConfigError):
        SimulationWorkflow(cfg=cfg).zeros()


@pytest.mark.unit
def test_nodal(make_cfg):
    cfg = make_cfg("nodal", {**SMALL_SAMPLER, "experiment": {
        "measure": {"family": "stdnormal2d"}, "nodal": {"T": 1.0, "resolution": 33, "n_fields": 2}}})
    files = SimulationWorkflow(cfg=cfg).nodal()
    df = pd.read_csv(files[0])
    assert df["field"].tolist() == [0, 1]
    assert (df["line_bound"] >= 0).all()
    assert files[-1].name == "nodal.plot.csv"


# AnalysisWorkflow tests


@pytest.mark.unit
def test_cascade_instances(make_cfg):
    cfg = make_cfg("certify", {"experiment": {"certify": {"instances": 4}}})
    instances = AnalysisWorkflow(cfg=cfg)._cascade_instances(3, 1.0)
    assert len(instances) == 4
    for p, M in instances:
        roots = sorted(r.real for r in p.roots())
        assert min(b - a for a, b in zip(roots, roots[1:])) >= MIN_ROOT_GAP - 1e-9
        assert M == pytest.approx(abs(p.coef[-1]) * 6 * (1 + CASCADE_SLACK))


@pytest.mark.unit
def test_certify_zeros(make_cfg):
    cfg = make_cfg("certify", {"experiment": {"certify": {
        "kind": "zeros", "n": 2, "T": 0.4, "M": 1.0, "coefficients": [1.0, 1.0]}}})
    doc = read_json(AnalysisWorkflow(cfg=cfg).certify()[0])
    assert doc["holds"]
    assert doc["instances"][0]["kind"] == "zeros"


@pytest.mark.unit
def test_certify_zeros_needs_coefficients(make_cfg):
    cfg = make_cfg("certify", {"experiment": {"certify": {"kind": "zeros"}}})
    with pytest.raises(ConfigError) as ex:
        AnalysisWorkflow(cfg=cfg).certify()
    assert ex.value.keys == ["experiment/certify/coefficients"]


@pytest.mark.unit
def test_certify_turan(make_cfg):
    cfg = make_cfg("certify", {"experiment": {"certify": {"kind": "turan", "n": 3, "instances": 3}}})
    doc = read_json(AnalysisWorkflow(cfg=cfg).certify()[0])
    assert doc["holds"]
    assert len(doc["instances"]) == 3


@pytest.mark.unit
def test_certify_gram(make_cfg):
    cfg = make_cfg("certify", {"experiment": {"certify": {"kind": "gram", "ms": [2, 3], "ratio": 0.5}}})
    doc = read_json(AnalysisWorkflow(cfg=cfg).certify()[0])
    assert [r["m"] for r in doc["instances"]] == [2, 3]
    assert [r["rank"] for r in doc["instances"]] == [3, 4]


@pytest.mark.unit
def test_bound_report_needs_2d_measure(make_cfg):
    cfg = make_cfg("bounds", {"constants": {"C": 2.0}, "experiment": {"bounds": {"formula": "theorem2_upper"}}})
    wf = AnalysisWorkflow(cfg=cfg)
    mu = wf.measure()
    with pytest.raises(ConfigError):
        wf.bound_report(mu, wf.constants(mu))


@pytest.mark.unit
def test_bound_report_regime(make_cfg):
    cfg = make_cfg("bounds", {"experiment": {"bounds": {"formula": "regime", "row": "compact", "n": 10}}})
    wf = AnalysisWorkflow(cfg=cfg)
    mu = wf.measure()
    res = wf.bound_report(mu, wf.constants(mu))
    assert res["row"] == "compact"
    assert res["log_tail"] == pytest.approx(-100 * math.log(10))


# CampaignWorkflow tests


@pytest.mark.unit
def test_zero_tail_oracle():
    assert CampaignWorkflow.zero_tail_oracle(Atomic([2.0]), 1, math.pi / 4) == pytest.approx(0.5)
    assert CampaignWorkflow.zero_tail_oracle(StdNormal(), 1, 1.0) is None


@pytest.mark.unit
def test_calibrate_saves_constants(make_cfg, make_config, mocker):
    results = [CalibrationResult(name, value, {}, 0.0) for name, value in
               [("c", 0.3), ("b", 0.5), ("C", 2.0), ("C_from_c", 3.0), ("B", 1e-4), ("c_lower", 4.0)]]
    mock_cal = mocker.patch.object(montecarlo, "calibrate_constants", return_value=results)
    cfg = make_cfg("calibrate")
    files = CampaignWorkflow(cfg=cfg).calibrate()
    mock_cal.assert_called_once()
    assert "logger" not in mock_cal.call_args.kwargs["mc_kwargs"]
    assert files[-1] == cfg.constants.file
    saved = read_config_file(cfg.constants.file)
    assert saved["constants"] == {"b": 0.5, "B": 1e-4, "c": 0.3, "c_lower": 4.0, "C": 2.0}
    assert saved["calibration"] == {"C_from_c": 3.0}

    fitted = Config(config_file=make_config({}))
    assert fitted.constants.provenance == "fitted"
    assert fitted.constants.C == 2.0
    assert fitted.constants.c_lower == 4.0


@pytest.mark.unit
def test_report_empty_ledger(make_cfg):
    cfg = make_cfg("report")
    assert CampaignWorkflow(cfg=cfg).report() == []
