import json
import math
import struct
import numpy as np
import pandas as pd

from pathlib import Path

from overcrowd.config.config import SCHEMA_VERSION
from overcrowd.utils import util

LEDGER_COLUMNS = ["schema_version", "config_hash", "event", "method", "params",
                  "n_samples", "n_hits", "p_hat", "ci_lo", "ci_hi", "seed"]

FRAME_HEADER = struct.Struct("<I")  # header length, little-endian uint32
FRAME_DTYPE = np.dtype("<f8")


def _json_default(v):
    """JSON encoding of numpy scalars, arrays and paths."""
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return _clean(float(v))
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"Object of type {type(v).__name__} is not JSON serializable")


def _clean(v):
    """Replace non-finite floats by None, recursively."""
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def to_json(data: dict) -> str:
    """Stable JSON text (schema version stamped, sorted keys, non-finite floats as null)."""
    doc = {"schema_version": SCHEMA_VERSION, **data}
    return json.dumps(_clean(doc), default=_json_default, sort_keys=True, indent=2)


def write_json(file: Path, data: dict) -> Path:
    """Write a JSON report."""
    util.make_dir(file)
    file.write_text(to_json(data) + "\n", encoding="utf-8")
    return file


def write_csv(file: Path, df: pd.DataFrame) -> Path:
    """Write a table with a leading schema_version column."""
    util.make_dir(file)
    df = df.copy()
    if "schema_version" not in df.columns:
        df.insert(0, "schema_version", SCHEMA_VERSION)
    df.to_csv(file, index=False, encoding="utf-8")
    return file


def ledger_rows(estimates: list, config_hash: str) -> pd.DataFrame:
    """
    Ledger rows of Monte Carlo estimates.
    :param estimates: TailEstimate objects
    :param config_hash: hash of the computational config
    :return: DataFrame with the ledger columns
    """
    rows = [{"schema_version": SCHEMA_VERSION, "config_hash": config_hash, **est.to_record()} for est in estimates]
    df = pd.DataFrame(rows, columns=LEDGER_COLUMNS)
    df[["n_samples", "n_hits"]] = df[["n_samples", "n_hits"]].astype("Int64")
    return df


def append_ledger(file: Path, estimates: list, config_hash: str) -> pd.DataFrame:
    """Append estimates to the CSV ledger (header written with the first rows)."""
    df = ledger_rows(estimates, config_hash)
    util.make_dir(file)
    df.to_csv(file, mode="a", header=not file.is_file() or file.stat().st_size == 0, index=False,
              encoding="utf-8")
    return df


def read_ledger(files: list[Path]) -> pd.DataFrame:
    """Read and concatenate ledgers, skipping missing files."""
    dfs = [pd.read_csv(f, dtype={"params": str, "config_hash": str}) for f in files if Path(f).is_file()]
    if not dfs:
        return pd.DataFrame(columns=LEDGER_COLUMNS)
    df = pd.concat(dfs, ignore_index=True)
    df[["n_samples", "n_hits"]] = df[["n_samples", "n_hits"]].astype("Int64")
    return df


def write_frame(file: Path, header: dict, values: np.ndarray) -> Path:
    """
    Binary sample frame: uint32 header length, UTF-8 JSON header, float64 values (little-endian).
    :param header: sample metadata, the shape is added
    :param values: sample values
    """
    values = np.ascontiguousarray(values, dtype=FRAME_DTYPE)
    head = to_json({**header, "shape": list(values.shape), "dtype": FRAME_DTYPE.str}).encode("utf-8")
    util.make_dir(file)
    with open(file, "wb") as fp:
        fp.write(FRAME_HEADER.pack(len(head)))
        fp.write(head)
        fp.write(values.tobytes())
    return file


def read_frame(file: Path) -> tuple[dict, np.ndarray]:
    """Read a binary sample frame."""
    data = Path(file).read_bytes()
    (size,) = FRAME_HEADER.unpack_from(data, 0)
    start = FRAME_HEADER.size
    header = json.loads(data[start:start + size].decode("utf-8"))
    values = np.frombuffer(data, dtype=FRAME_DTYPE, offset=start + size).reshape(header["shape"])
    return header, values


def write_sample(sample, out_dir: Path, name: str) -> list[Path]:
    """
    Write a path or field sample as CSV (grid + values) and as a binary frame.
    :return: written files
    """
    csv_file = write_csv(out_dir / f"{name}.csv", sample.to_frame())
    frame_file = write_frame(out_dir / f"{name}.frame", sample.header(), sample.values)
    return [csv_file, frame_file]
