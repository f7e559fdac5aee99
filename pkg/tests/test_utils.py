import logging
import time

import numpy as np
import pytest

from unittest.mock import MagicMock

from overcrowd.utils import util


# hash_str / text_to_id tests


@pytest.mark.unit
def test_hash_str():
    assert util.hash_str("abc") == "900150983cd24fb0d6963f7d28e17f72"
    assert util.hash_str("abc", max_len=7) == "9001509"


@pytest.mark.unit
@pytest.mark.parametrize("text, expected", [
    ("zero tail  n=4", "zero_tail_n4"),
    ("  a/b\\c ", "abc"),
    ("run-1", "run-1"),
])
def test_text_to_id(text, expected):
    assert util.text_to_id(text) == expected


# substream tests


@pytest.mark.unit
def test_stream_key_is_stable():
    assert util.stream_key("zeros") == int(util.hash_str("zeros", max_len=8), 16)
    assert util.stream_key("zeros") != util.stream_key("small")


@pytest.mark.unit
def test_substream_reproducible():
    a = util.substream(7, "zeros", 3).standard_normal(5)
    b = util.substream(7, "zeros", 3).standard_normal(5)
    np.testing.assert_array_equal(a, b)


@pytest.mark.unit
@pytest.mark.parametrize("other", [(8, "zeros", 3), (7, "small", 3), (7, "zeros", 4)])
def test_substream_independent(other):
    a = util.substream(7, "zeros", 3).standard_normal(5)
    b = util.substream(*other).standard_normal(5)
    assert not np.array_equal(a, b)


# path helper tests


@pytest.mark.unit
def test_make_dir(tmp_path):
    assert util.make_dir(tmp_path / "a" / "b.csv") == tmp_path / "a"
    assert (tmp_path / "a").is_dir()
    assert util.make_dir(tmp_path / "c") == tmp_path / "c"
    assert (tmp_path / "c").is_dir()


@pytest.mark.unit
def test_file_ready(tmp_path):
    f = tmp_path / "ledger.csv"
    assert not util.file_ready(f)
    f.touch()
    assert not util.file_ready(f)
    f.write_text("x")
    assert util.file_ready(f)


# elapsed time / progress tests


@pytest.mark.unit
def test_elapsed_time_str():
    assert util.elapsed_time_str(time.time() - 3725) == "01h:02m:05s"


@pytest.mark.unit
def test_report_progress():
    logger = MagicMock()
    done = util.report_progress(logger, "mc", [1, 2], 0, 4)
    assert done == 50
    logger.info.assert_called_once_with("mc: 2/4: 50%")
    assert util.report_progress(logger, "mc", [1, 2], done, 4) == 50
    assert logger.info.call_count == 1


# environment tests


@pytest.mark.unit
def test_app_dir_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("OVERCROWD_ROOT_DIR", str(tmp_path))
    assert util.app_dir() == tmp_path
    assert util.memory_cache_dir() == tmp_path / "cache"


@pytest.mark.unit
@pytest.mark.parametrize("value, expected", [("4", 4), ("0", 1), ("many", 1)])
def test_default_workers(monkeypatch, value, expected):
    monkeypatch.setenv("OVERCROWD_THREADS", value)
    assert util.default_workers() == expected


@pytest.mark.unit
def test_default_workers_unset(monkeypatch):
    monkeypatch.delenv("OVERCROWD_THREADS", raising=False)
    assert util.default_workers() == 1


# logger tests


@pytest.mark.unit
def test_init_logger_file(tmp_path):
    file = tmp_path / "logs" / "run.log"
    logger = util.init_logger(file=file)
    logger.info("hello")
    for h in logger.handlers:
        h.flush()
    assert file.read_text().strip() == "hello"
    assert len(logger.handlers) == 2
    logger.handlers.clear()


@pytest.mark.unit
def test_init_logger_console():
    logger = util.init_logger(name="overcrowd-test")
    assert logger.name == "overcrowd-test"
    assert logger.level == logging.INFO
    assert len(logger.handlers) == 1
    # re-initialization replaces the handlers
    assert len(util.init_logger(name="overcrowd-test").handlers) == 1


@pytest.mark.unit
def test_module_logger():
    assert util.module_logger().name == "overcrowd"
