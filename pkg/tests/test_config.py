import pytest

from dataclasses import dataclass
from pathlib import Path
from unittest.mock import patch

from overcrowd.config.config import Config, DataClassFactory, RuntimeArgs, create_config_file, save_constants
from overcrowd.config.config import populate, is_str_item, is_path_key, path_to_obj
from overcrowd.config.config import deep_merge, hash_config, read_config_file
from overcrowd.utils.errors import ConfigError


@pytest.mark.unit
def test_config_init(cfg, app_dir):
    assert cfg.experiment.seed == 20240917
    assert cfg.experiment.measure == {"family": "uniform", "q": 1.0}
    assert cfg.experiment.mc.event == "zeros"
    assert cfg.numerics.max_gram == 512
    assert cfg.results.out_dir == app_dir / "results" / "run"
    assert cfg.results.ledger_file == app_dir / "results" / "run" / "ledger.csv"
    assert cfg.constants.file == app_dir / "constants" / "fitted.toml"
    assert cfg.constants.provenance == "config"


@pytest.mark.unit
def test_config_defaults_for_absent_tables(cfg):
    assert cfg.experiment.report.ledger_files == []
    assert cfg.experiment.certify.ms == list(range(2, 9))
    assert cfg.experiment.calibrate.etas == [0.05, 0.1, 0.2]


@pytest.mark.unit
def test_config_load_config_file():
    with patch.object(Config, "_load_config_file") as mock_load:
        Config(config_file=Path("test_config.toml"), _load=True)
        mock_load.assert_called_once()


@pytest.mark.unit
def test_config_load_config_file_not_called():
    with patch.object(Config, "_load_config_file") as mock_load:
        Config(config_file=Path("test_config.toml"), _load=False)
        mock_load.assert_not_called()


@pytest.mark.unit
def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        Config(config_file=tmp_path / "missing.toml")


# runtime overrides tests


@pytest.mark.unit
def test_runtime_overrides(make_cfg, tmp_path):
    cfg = make_cfg("mc", seed=7, run_name="seven")
    assert cfg.experiment.seed == 7
    assert cfg.run_name == "seven"
    assert cfg.results.out_dir == tmp_path / "out" / "mc"


@pytest.mark.unit
def test_config_hash_ignores_results(make_cfg):
    a = make_cfg("mc", seed=7)
    b = make_cfg("zeros", seed=7)
    c = make_cfg("mc", seed=8)
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash


@pytest.mark.unit
def test_n_workers(make_cfg):
    assert make_cfg("mc").n_workers == 1
    assert make_cfg("mc", workers=3).n_workers == 3


# validation tests


@pytest.mark.unit
def test_unknown_section(make_config):
    with pytest.raises(ConfigError) as ex:
        Config(config_file=make_config({"plots": {"dpi": 300}}))
    assert ex.value.keys == ["plots"]


@pytest.mark.unit
def test_unknown_experiment_key(make_config):
    with pytest.raises(ConfigError) as ex:
        Config(config_file=make_config({"experiment": {"mc": {"samples": 10}}}))
    assert "experiment/mc/samples" in ex.value.keys


@pytest.mark.unit
@pytest.mark.parametrize("table, values, key", [
    ("mc", {"n_samples": 0}, "experiment/mc/n_samples"),
    ("mc", {"event": "crossings"}, "experiment/mc/event"),
    ("bounds", {"formula": "theorem3"}, "experiment/bounds/formula"),
    ("simulate", {"dimension": 3}, "experiment/simulate/dimension"),
    ("certify", {"kind": "all"}, "experiment/certify/kind"),
])
def test_experiment_validation(make_config, table, values, key):
    with pytest.raises(ConfigError) as ex:
        Config(config_file=make_config({"experiment": {table: values}}))
    assert ex.value.keys == [key]
    assert ex.value.exit_code == 2


@pytest.mark.unit
@pytest.mark.parametrize("section, values", [
    ("constants", {"c": -1.0}),
    ("sampler", {"method": "karhunen_loeve"}),
    ("montecarlo", {"confidence": 1.0}),
])
def test_settings_validation(make_config, section, values):
    with pytest.raises(ConfigError):
        Config(config_file=make_config({section: values}))


# constants tests


@pytest.mark.unit
def test_fitted_constants_override(make_config, tmp_path):
    fitted = save_constants(tmp_path / "fitted.toml", {"c": 0.5, "C": 2.0, "B": float("nan")}, {"measure": "u"})
    assert read_config_file(fitted)["constants"] == {"c": 0.5, "C": 2.0}
    cfg = Config(config_file=make_config({"constants": {"file": str(fitted)}}))
    assert cfg.constants.provenance == "fitted"
    assert cfg.constants.c == 0.5
    assert cfg.constants.C == 2.0
    assert cfg.constants.b == 0.0


@pytest.mark.unit
def test_fitted_constants_unknown_key(make_config, tmp_path):
    fitted = save_constants(tmp_path / "fitted.toml", {"D": 1.0})
    with pytest.raises(ConfigError):
        Config(config_file=make_config({"constants": {"file": str(fitted)}}))


# results operation tests


@pytest.mark.unit
def test_results_stop_file(cfg):
    assert not cfg.results.is_stopped()
    cfg.results.stop()
    assert cfg.results.is_stopped()
    with pytest.raises(InterruptedError):
        cfg.results.raise_if_stopped()
    cfg.results.clear()
    assert not cfg.results.is_stopped()
    cfg.results.cleanup()


@pytest.mark.unit
def test_results_file(cfg):
    assert cfg.results.file("moments.csv") == cfg.results.out_dir / "moments.csv"
    assert not cfg.results.ready()


# create_config_file tests


@pytest.mark.unit
def test_create_config_file_keeps_existing(tmp_path):
    file = tmp_path / "config.toml"
    file.write_text("[experiment]\n", encoding="utf-8")
    create_config_file(file)
    assert file.read_text(encoding="utf-8") == "[experiment]\n"
    create_config_file(file, force=True)
    assert read_config_file(file)["experiment"]["seed"] == 20240917


# RuntimeArgs tests


@pytest.mark.unit
def test_runtime_args_from_dict():
    args = RuntimeArgs.from_dict({"config_file": "c.toml", "command": "mc", "verbose": True})
    assert args.config_file == Path("c.toml")
    args.init_run_name()
    assert args.run_name == "mc"


# deep_merge / hash_config tests


@pytest.mark.unit
def test_deep_merge():
    base = {"a": {"x": 1, "y": 2}, "b": 1}
    assert deep_merge(base, {"a": {"y": 3}, "c": 4}) == {"a": {"x": 1, "y": 3}, "b": 1, "c": 4}
    assert base["a"]["y"] == 2


@pytest.mark.unit
def test_hash_config():
    cfg = {"experiment": {"seed": 1}, "results": {"out_dir": "a"}}
    other = {"experiment": {"seed": 1}, "results": {"out_dir": "b"}}
    assert hash_config(cfg) == hash_config(other)
    assert len(hash_config(cfg)) == 16


# dict helper tests


@pytest.mark.unit
@pytest.mark.parametrize("args, expected", [
    ({"app_dir": "/app", "run_name": "r1"}, {"out_dir": "/app/results/r1", "log_file": "/app/results/r1/r1.log"}),
    ({"app_dir": "/app"}, {"out_dir": "/app/results/{run_name}", "log_file": "/app/results/{run_name}/{run_name}.log"}),
])
def test_populate(args, expected):
    data = {"out_dir": "{app_dir}/results/{run_name}", "log_file": "{app_dir}/results/{run_name}/{run_name}.log"}
    assert populate(data, args) == expected


@pytest.mark.unit
def test_populate_nested_lists_and_paths():
    data = {"report": {"ledger_files": ["{app_dir}\\a.csv", 3]}}
    assert populate(data, {"app_dir": Path("/app"), "_skip": "x"}) == {"report": {"ledger_files": ["/app/a.csv", 3]}}


@pytest.mark.unit
@pytest.mark.parametrize("k, v, expected", [
    ("app_dir", Path("/app"), True),
    ("run_name", "mc", True),
    (7, "/app", False),
    ("_logger", "/app", False),
    ("seed", 7, False),
])
def test_is_str_item(k, v, expected):
    assert is_str_item(k, v) == expected


@pytest.mark.unit
@pytest.mark.parametrize("k, expected", [
    ("file", True), ("dir", True), ("ledger_file", True), ("out_dir", True),
    ("seed", False), ("file_test", False), ("directory", False),
])
def test_is_path_key(k, expected):
    assert is_path_key(k) == expected


@pytest.mark.unit
def test_path_to_obj():
    data = {"file": "/a/measure.csv", "out_dir": "", "seed": 3,
            "constants": {"file": "/a/fitted.toml", "C": 1.5}, "report": {"file": ["x", "y"]}}
    converted = path_to_obj(data)
    assert converted["file"] == Path("/a/measure.csv")
    assert converted["out_dir"] is None
    assert converted["seed"] == 3
    assert converted["constants"] == {"file": Path("/a/fitted.toml"), "C": 1.5}
    assert converted["report"]["file"] == ["x", "y"]


# DataClassFactory tests


@dataclass
class Params:
    event: str
    batches: int = 2


@pytest.mark.unit
def test_dataclass_factory_make():
    params = DataClassFactory(cfg={"mc": {"event": "zeros", "batches": 5}}).make(Params, ["mc"])
    assert params == Params(event="zeros", batches=5)


@pytest.mark.unit
def test_dataclass_factory_nested_path_and_defaults():
    params = DataClassFactory(cfg={"experiment": {"mc": {"event": "nodal"}}}).make(Params, ["experiment", "mc"])
    assert params == Params(event="nodal", batches=2)


@pytest.mark.unit
def test_dataclass_factory_collects_problems():
    factory = DataClassFactory(cfg={"mc": {"batches": 3}, "sim": {"event": "zeros", "batchez": 1}})
    assert factory.make(Params, ["mc"]) is None
    assert factory.make(Params, ["sim"]) == Params(event="zeros")
    assert factory.make(Params, ["nodal"]) is None
    assert factory.missing == ["mc/event", "nodal"]
    assert factory.unused == ["sim/batchez"]
    with pytest.raises(ConfigError) as ex:
        factory.check(Path("config.toml"))
    assert ex.value.keys == ["sim/batchez", "mc/event", "nodal"]


@pytest.mark.unit
def test_dataclass_factory_optional_table():
    factory = DataClassFactory(cfg={})
    assert factory.make(Params, ["mc"], optional=True) is None
    assert factory.missing == ["mc/event"]


@pytest.mark.unit
def test_dataclass_factory_ignore():
    params = DataClassFactory(cfg={"mc": {"batches": 4}}).make(Params, ["mc"], ignore=["event"])
    assert params == Params(event=None, batches=4)


@pytest.mark.unit
def test_dataclass_factory_invalid_value():
    @dataclass
    class Checked:
        n: int = 1

        def __post_init__(self):
            if self.n < 1:
                raise ValueError("n must be positive")

    with pytest.raises(ConfigError) as ex:
        DataClassFactory(cfg={"t": {"n": 0}}).make(Checked, ["t"])
    assert ex.value.keys == ["t"]
