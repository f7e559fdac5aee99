import hashlib
import joblib
import logging
import logging.handlers
import numpy as np
import os
import re
import sys
import time

from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from pathlib import Path
from uuid import uuid4

LOG_FORMAT_FILE = "%(message)s"
LOG_FORMAT_CONSOLE = "%(levelname)s: %(message)s"


def hash_str(v, max_len: int = None) -> str:
    """MD5 hex digest of str(v), optionally truncated to max_len characters."""
    digest = hashlib.md5(str(v).encode()).hexdigest()
    return digest[:max_len] if max_len else digest


def text_to_id(text: str) -> str:
    """Identifier form of a text: blanks become underscores, other symbols are dropped."""
    words = str(text).split()
    return re.sub(r"[^\w-]", "", "_".join(words), flags=re.ASCII)


# Random number streams

def stream_key(name: str) -> int:
    """Stable integer key of a named random substream."""
    return int(hash_str(name, max_len=8), 16)


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """
    Counter based generator for a named substream.
    Identical (seed, name, index) triples give identical draws on every platform and worker.
    :param seed: campaign seed
    :param name: substream name (event id, grid draw, wave set...)
    :param index: batch or draw index
    :return: numpy Generator backed by Philox
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream_key(name), int(index)))
    return np.random.Generator(np.random.Philox(seq))


# Files

def make_dir(f: Path) -> Path:
    """Create the directory of a file path (a path with a suffix) or the directory path itself."""
    d = f if not f.suffix else f.parent
    d.mkdir(parents=True, exist_ok=True)
    return d


def file_ready(f: Path) -> bool:
    """True for an existing non-empty file."""
    return f.is_file() and f.stat().st_size > 0


# Timing and progress

def elapsed_time_str(start_time: float) -> str:
    """Time since start_time as HHh:MMm:SSs."""
    m, s = divmod(int(time.time() - start_time), 60)
    h, m = divmod(m, 60)
    return f"{h:02d}h:{m:02d}m:{s:02d}s"


def report_progress(logger, name: str, items, done_perc: int, total_count: int) -> int:
    """
    Log `name: done/total: perc%` when the rounded percentage of done items moves.
    :param items: collection of finished items
    :param done_perc: last reported percentage
    :return: the current percentage
    """
    done = len(items)
    perc = round(100 * done / total_count)
    if perc != done_perc:
        logger.info(f"{name}: {done}/{total_count}: {perc}%")
    return perc


# Environment

def app_dir() -> Path:
    """Root of the app data (OVERCROWD_ROOT_DIR, default ./app-data)."""
    return Path(os.getenv("OVERCROWD_ROOT_DIR", default=str(Path.cwd() / "app-data")))


def default_workers() -> int:
    """Default worker count for Monte Carlo campaigns."""
    try:
        return max(1, int(os.getenv("OVERCROWD_THREADS", default="1")))
    except ValueError:
        return 1


def memory_cache_dir() -> Path:
    return app_dir() / "cache"


def memory_cache() -> joblib.Memory:
    """joblib cache of expensive deterministic results (cleared by `overcrowd reset`)."""
    return joblib.Memory(memory_cache_dir(), verbose=0)


# Worker processes need fork semantics, fall back to threads elsewhere
PoolExecutor = ProcessPoolExecutor if sys.platform.startswith("linux") else ThreadPoolExecutor


# Logging

def init_logger(name: str = None, file: Path = None) -> logging.Logger:
    """
    INFO logger writing `LEVEL: message` to the console and, with `file`, bare messages to the file.
    Existing handlers of the named logger are replaced.
    :param name: logger name (default: derived from the file, or random)
    :param file: log file, truncated on open
    """
    handlers: list[logging.Handler] = []
    if file:
        name = name or hash_str(text_to_id(str(file)))
        make_dir(file)
        to_file = logging.handlers.WatchedFileHandler(str(file), mode="w")
        to_file.setFormatter(logging.Formatter(LOG_FORMAT_FILE))
        handlers.append(to_file)

    to_console = logging.StreamHandler()
    to_console.setFormatter(logging.Formatter(LOG_FORMAT_CONSOLE))
    handlers.append(to_console)

    logger = logging.getLogger(name or f"overcrowd-{uuid4().hex[:8]}")
    logger.handlers.clear()
    for h in handlers:
        logger.addHandler(h)
    logger.setLevel(logging.INFO)
    return logger


def module_logger(name: str = "overcrowd") -> logging.Logger:
    """Logger used by library functions when the caller doesn't pass one."""
    return logging.getLogger(name)
