import tempfile

import pytest
import tomli_w

from pathlib import Path

from overcrowd.config.config import Config, RuntimeArgs, create_config_file, deep_merge, read_config_file


@pytest.fixture(autouse=True)
def app_dir(tmp_path, monkeypatch):
    """Keep app data (cache, results, fitted constants) inside the test's temp dir."""
    root = tmp_path / "app-data"
    monkeypatch.setenv("OVERCROWD_ROOT_DIR", str(root))
    monkeypatch.setenv("OVERCROWD_THREADS", "1")
    return root


@pytest.fixture
def config_file():
    config_file = Path(tempfile.mktemp(suffix=".toml"))
    create_config_file(config_file)
    yield config_file
    config_file.unlink(missing_ok=True)


@pytest.fixture
def make_config(tmp_path):
    """Factory writing the user template merged with overrides; returns the file path."""
    def make(overrides: dict, name: str = "config.toml") -> Path:
        base = read_config_file(Config.default_template_user_file)
        data = deep_merge(base, overrides)
        # measure specs are replaced, not merged
        if "measure" in overrides.get("experiment", {}):
            data["experiment"]["measure"] = overrides["experiment"]["measure"]
        file = tmp_path / name
        file.write_text(tomli_w.dumps(data), encoding="utf-8")
        return file
    return make


@pytest.fixture
def make_cfg(make_config, tmp_path):
    """Factory building a Config for a command with the given overrides."""
    def make(command: str, overrides: dict = None, **kwargs) -> Config:
        file = make_config(overrides or {})
        args = RuntimeArgs(config_file=file, command=command, out_dir=str(tmp_path / "out" / command), **kwargs)
        return Config.create_instance(run_args=args)
    return make


@pytest.fixture
def cfg(config_file):
    return Config(config_file=config_file)
