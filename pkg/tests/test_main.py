import json
import math

import pytest

from overcrowd.flows import AnalysisWorkflow
from overcrowd.main import main, parse_args
from overcrowd.utils import commands, util
from overcrowd.utils.errors import CertificateFalsified


def run_main(argv: list[str]) -> int:
    with pytest.raises(SystemExit) as ex:
        main(argv)
    return ex.value.code


@pytest.fixture
def cli(make_config, tmp_path):
    """Run a command on a config with overrides; returns (exit code, output dir)."""
    def run(command: str, overrides: dict = None, *extra: str, out_name: str = None) -> tuple[int, object]:
        out = tmp_path / "out" / (out_name or command)
        file = make_config(overrides or {})
        return run_main([command, "-c", str(file), "--out", str(out), *extra]), out
    return run


# parse_args tests


@pytest.mark.unit
def test_parse_args():
    args = parse_args(["mc", "-c", "x.toml", "--seed", "7", "--workers", "2", "-n", "campaign"])
    assert args.command == "mc"
    assert args.config_file == "x.toml"
    assert args.seed == 7
    assert args.workers == 2
    assert args.run_name == "campaign"


@pytest.mark.unit
def test_parse_args_rejects_unknown_command():
    with pytest.raises(SystemExit):
        parse_args(["plot"])


# main tests


@pytest.mark.unit
def test_main_config(tmp_path):
    file = tmp_path / "new" / "config.toml"
    assert run_main(["config", "-c", str(file)]) == 0
    assert file.is_file()


@pytest.mark.unit
def test_main_reset():
    cache = util.memory_cache_dir()
    cache.mkdir(parents=True)
    assert run_main(["reset"]) == 0
    assert not cache.exists()


@pytest.mark.unit
def test_main_moments(cli):
    code, out = cli("moments")
    assert code == 0
    for name in ["moments.csv", "assumption.json", "moments.plot.csv"]:
        assert (out / name).is_file()
    doc = json.loads((out / "assumption.json").read_text(encoding="utf-8"))
    assert doc["assumption"]["satisfied"]
    assert doc["schema_version"] == 1


@pytest.mark.unit
def test_main_bounds_precondition(cli, capsys):
    code, _ = cli("bounds", {"constants": {"C": 2.0}})
    assert code == 4
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "PreconditionFailed"
    assert err["precondition"] == "argument_ge_e"
    assert err["margin"] < 0


@pytest.mark.unit
def test_main_bounds_lower(cli):
    overrides = {"constants": {"c": 0.5, "c_lower": 10.0},
                 "experiment": {"bounds": {"formula": "theorem1_lower", "n": 4}}}
    code, out = cli("bounds", overrides)
    assert code == 0
    doc = json.loads((out / "bounds.json").read_text(encoding="utf-8"))
    assert doc["valid"]
    assert doc["constants"]["b"] == pytest.approx(1.0)
    assert doc["constants"]["c_lower"] == 10.0
    # exp(-16 log(10 * 4 / 1)) with the lower bound constant, not the eigenvalue one
    assert doc["log_bound"] == pytest.approx(-16 * math.log(40.0))


@pytest.mark.unit
@pytest.mark.parametrize("overrides", [
    {"experiment": {"mc": {"n_samples": 0}}},
    {"experiment": {"measure": {"q": 1.0}}},
    {},
])
def test_main_config_errors(cli, capsys, overrides):
    command = "mc" if overrides else "bounds"    # bounds without B or C
    code, _ = cli(command, overrides)
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ConfigError"
    assert err["keys"]


@pytest.mark.unit
def test_main_mc_and_report(cli):
    overrides = {"experiment": {"measure": {"family": "atomic", "frequencies": [1.0]},
                                "mc": {"n_samples": 200, "n": 1, "T": 4.0}},
                 "montecarlo": {"batch_size": 100}}
    code, out = cli("mc", overrides, out_name="campaign")
    assert code == 0
    doc = json.loads((out / "mc.json").read_text(encoding="utf-8"))
    # a unit frequency cosine always has a zero on an interval longer than pi
    assert doc["oracle"] == 1.0
    assert doc["estimates"][0]["n_hits"] == 200
    assert (out / "ledger.csv").is_file()

    code, out = cli("report", overrides, out_name="campaign")
    assert code == 0
    assert (out / "report.csv").is_file()
    assert (out / "tails.plot.csv").is_file()


@pytest.mark.unit
def test_main_certify_cascade(cli):
    code, out = cli("certify", {"experiment": {"certify": {"kind": "cascade", "instances": 5}}})
    assert code == 0
    doc = json.loads((out / "certify.json").read_text(encoding="utf-8"))
    assert doc["holds"]
    assert len(doc["instances"]) == 5


@pytest.mark.unit
def test_main_certificate_falsified(cli, capsys, mocker):
    mocker.patch.object(AnalysisWorkflow, "certify", side_effect=CertificateFalsified("cascade", {"instances": [1]}))
    code, _ = cli("certify")
    assert code == 5
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["details"] == {"instances": [1]}


@pytest.mark.unit
def test_main_dispatch(cli, mocker):
    mock_mc = mocker.patch.object(commands, "cmd_mc", return_value=[])
    code, _ = cli("mc")
    assert code == 0
    mock_mc.assert_called_once()
    assert mock_mc.call_args.args[0].command == "mc"


@pytest.mark.unit
def test_main_stopped_campaign(cli, mocker):
    mocker.patch.object(commands, "cmd_calibrate", side_effect=InterruptedError("Stopped by the user."))
    code, _ = cli("calibrate")
    assert code == 0
