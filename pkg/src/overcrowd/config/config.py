from __future__ import annotations

import json
import logging
import math
import shutil
import tomli
import tomli_w

from dataclasses import dataclass, asdict, fields, MISSING
from pathlib import Path

from overcrowd.utils import util
from overcrowd.utils.errors import ConfigError

SCHEMA_VERSION = 1


# Base classes
@dataclass
class BaseData:
    """Plain config record."""


@dataclass
class Section(BaseData):
    """A top level config table."""

    def ready(self) -> bool:
        """True when the inputs or outputs the section points at are in place."""
        raise NotImplementedError(f"{type(self).__name__}.ready")


@dataclass
class Operation:
    """
    Run bookkeeping shared by long operations: a log file and a `.stop` control file.
    The logger is created on first use.
    """
    control_file: Path
    log_file: Path
    _logger: logging.Logger

    def __post_init__(self):
        # a stop request left over from a previous run doesn't apply
        if self.control_file:
            self.control_file.unlink(missing_ok=True)

    @property
    def logger(self) -> logging.Logger:
        if self._logger is None:
            self.init_logger()
        return self._logger

    @logger.setter
    def logger(self, value: logging.Logger):
        self._logger = value

    def init_logger(self):
        self._logger = util.init_logger(file=self.log_file)

    def stop(self):
        """Request a stop by touching the control file."""
        util.make_dir(self.control_file.parent)
        self.control_file.touch()

    def clear(self):
        """Withdraw a stop request."""
        self.control_file.unlink(missing_ok=True)

    def is_stopped(self) -> bool:
        """A stop is pending when the control file is not older than the log."""
        if not self.control_file.is_file():
            return False
        log_time = self.log_file.stat().st_atime if self.log_file.is_file() else 0
        return self.control_file.stat().st_mtime >= log_time

    def raise_if_stopped(self):
        if self.is_stopped():
            self.logger.warning(f"Stop requested ({self.control_file.name})")
            raise InterruptedError("Stopped by the user.")

    def cleanup(self):
        """Detach the log handlers."""
        self.logger.handlers.clear()


class WorkflowEntity:
    """Holds the config and the run logger."""
    cfg: Config
    logger: logging.Logger

    def __init__(self, cfg: Config, logger: logging.Logger = None):
        self.cfg = cfg
        self.logger = logger if logger is not None else cfg.results.logger


class Workflow(WorkflowEntity):
    pass


# Sections

@dataclass
class Numerics(Section):
    """Numerical tolerances and size limits."""
    grid_rel_tol: float = 1e-6      # Richardson error tolerance for grid density moments
    kernel_abs_tol: float = 1e-12   # absolute tolerance of kernel quadrature
    pivot_tol: float = 1e-12        # pivoted Cholesky tolerance
    psd_tol: float = 1e-9           # Cholesky reconstruction residual tolerance
    ridge: float = 1e-12            # diagonal ridge of the exact sampler
    max_gram: int = 512             # largest Gram matrix (m + 1 points) handled by the eigen certificate
    max_exact_points: int = 8192    # dense Cholesky limit of the exact sampler
    max_lines: int = 1000000        # largest number of separated lines in the nodal box certificate
    max_refinements: int = 6        # resolution doublings of zero counting
    sup_norm_points: int = 4097     # grid of the sup norm checks
    mp_dps: int = 50                # starting mpmath precision of the eigen certificate
    mp_dps_max: int = 400           # largest mpmath precision

    def ready(self):
        return True


@dataclass
class Constants(Section):
    """Bound constants. Zero means derived (b, B) or fitted by calibrate (c, c_lower, C)."""
    file: Path = None          # fitted constants file written by calibrate
    b: float = 0.0             # T <= b m threshold (0: pi/M0 from the assumption check)
    B: float = 0.0             # 0: (4eAC)^-1
    c: float = 0.0             # eigenvalue constant
    c_lower: float = 0.0       # lower bound constant, P(N_T >= n) >= exp(-n^2 log(c_lower n/T))
    C: float = 0.0             # small ball constant
    turan_A: float = 14.0      # Turan constant
    provenance: str = "config"

    def __post_init__(self):
        for k in ["b", "B", "c", "c_lower", "C", "turan_A"]:
            if getattr(self, k) < 0:
                raise ConfigError(f"constants.{k} must be nonnegative", keys=[f"constants/{k}"])

    def load_fitted(self):
        """Override constants with the fitted values of `file`, if it exists."""
        if not self.file or not Path(self.file).is_file():
            return
        fitted = read_config_file(Path(self.file)).get("constants", {})
        unknown = [k for k in fitted if k not in ["b", "B", "c", "c_lower", "C", "turan_A"]]
        if unknown:
            raise ConfigError(f"Unknown fitted constants in {self.file}", keys=unknown)
        for k, v in fitted.items():
            setattr(self, k, float(v))
        self.provenance = "fitted"

    def ready(self):
        return self.file is None or Path(self.file).is_file()


@dataclass
class SamplerSettings(Section):
    """Sampler defaults."""
    method: str = "spectral"     # spectral or exact
    n_waves: int = 4096          # initial wave count of the spectral superposition
    max_n_waves: int = 65536     # wave count doubling limit
    misfit_points: int = 16       # displacement grid of the covariance misfit check

    def __post_init__(self):
        if self.method not in ["spectral", "exact"]:
            raise ConfigError(f"Unknown sampler method: {self.method}", keys=["sampler/method"])
        if self.n_waves < 1 or self.max_n_waves < self.n_waves:
            raise ConfigError("sampler.n_waves must be >= 1 and <= max_n_waves", keys=["sampler/n_waves"])

    def ready(self):
        return True


@dataclass
class MonteCarloSettings(Section):
    """Monte Carlo defaults."""
    batch_size: int = 10000        # paths per batch (one RNG substream per batch)
    confidence: float = 0.95       # Wilson interval confidence
    points_per_unit: int = 64      # screening grid density per unit length and sqrt(C_2)
    min_points: int = 257          # smallest screening grid
    n_waves: int = 256             # initial waves per Monte Carlo path, doubled by the sampler misfit check
    qmc_points: int = 4096         # scrambled Sobol points per QMC batch (power of two)
    qmc_batches: int = 16          # independent QMC batches
    bootstrap_resamples: int = 999

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ConfigError("montecarlo.confidence must be in (0, 1)", keys=["montecarlo/confidence"])
        if self.batch_size < 1:
            raise ConfigError("montecarlo.batch_size must be positive", keys=["montecarlo/batch_size"])

    def ready(self):
        return True


@dataclass
class Results(Section, Operation):
    """Run output directory, ledger and run bookkeeping."""
    out_dir: Path       # run output directory
    ledger_file: Path   # Monte Carlo ledger (appended by mc)

    def file(self, name: str) -> Path:
        """Output file path inside the run directory."""
        return self.out_dir / name

    def ready(self):
        """True once mc has written ledger rows."""
        return util.file_ready(self.ledger_file)


# Experiment (per command) data classes

def _require(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(message, keys=[key])


@dataclass
class MomentsParams(BaseData):
    max_order: int = 20

    def __post_init__(self):
        _require(self.max_order >= 2, "experiment/moments/max_order", "max_order must be at least 2")


BOUND_FORMULAS = ["theorem1_upper", "theorem1_lower", "theorem2_upper", "smallball", "lemsbp",
                  "probability_split", "short_range_repulsion", "dudley", "regime"]


@dataclass
class BoundsParams(BaseData):
    formula: str = "theorem1_upper"
    eps: float = 0.25
    n: int = 64
    T: float = 1.0
    m: int = 4
    eta: float = 0.1
    k: int = 0                   # moment index (0: n)
    delta: float = 0.1
    M: float = 1.0
    row: str = "compact"
    kappa: float = 0.1
    lower: bool = False

    def __post_init__(self):
        _require(self.n >= 1, "experiment/bounds/n", "n must be positive")
        _require(self.T > 0, "experiment/bounds/T", "T must be positive")
        _require(self.formula in BOUND_FORMULAS, "experiment/bounds/formula",
                 f"formula must be one of {BOUND_FORMULAS}")


@dataclass
class SimulateParams(BaseData):
    dimension: int = 1
    T: float = 10.0
    points: int = 1025
    n_paths: int = 1
    method: str = ""             # default: sampler.method
    orders: list[int] = None     # derivative orders (spectral method)

    def __post_init__(self):
        _require(self.dimension in [1, 2], "experiment/simulate/dimension", "dimension must be 1 or 2")
        _require(self.points >= 2, "experiment/simulate/points", "points must be at least 2")
        _require(self.n_paths >= 1, "experiment/simulate/n_paths", "n_paths must be positive")
        _require(self.method in ["", "spectral", "exact"], "experiment/simulate/method", "unknown method")
        self.orders = list(self.orders or [0])


@dataclass
class ZerosParams(BaseData):
    T: float = 10.0
    n_paths: int = 100
    resolution: int = 1025

    def __post_init__(self):
        _require(self.n_paths >= 1, "experiment/zeros/n_paths", "n_paths must be positive")


@dataclass
class NodalParams(BaseData):
    T: float = 3.0
    resolution: int = 257
    n_fields: int = 10
    line_mode: str = "grid"

    def __post_init__(self):
        _require(self.n_fields >= 1, "experiment/nodal/n_fields", "n_fields must be positive")
        _require(self.line_mode in ["grid", "adaptive"], "experiment/nodal/line_mode", "unknown line mode")


@dataclass
class CertifyParams(BaseData):
    kind: str = "cascade"        # cascade, zeros, nodal_box, strip, eigen, gram, folded, turan
    n: int = 3
    T: float = 1.0
    M: float = 1.0
    ms: list[int] = None
    ratio: float = 0.5
    instances: int = 100
    coefficients: list[float] = None   # polynomial coefficients of the cascade/zeros test function

    def __post_init__(self):
        kinds = ["cascade", "zeros", "nodal_box", "strip", "eigen", "gram", "folded", "turan"]
        _require(self.kind in kinds, "experiment/certify/kind", f"kind must be one of {kinds}")
        _require(self.instances >= 0, "experiment/certify/instances", "instances must be nonnegative")
        self.ms = list(self.ms or range(2, 9))


@dataclass
class McParams(BaseData):
    event: str = "zeros"         # zeros, smallball, nodal, moments, alternating, split
    n: int = 2
    T: float = 1.0
    eta: float = 0.1
    M: float = 1.0
    m_max: int = 3
    n_samples: int = 100000
    method: str = "direct"
    comparisons: int = 1

    def __post_init__(self):
        events = ["zeros", "smallball", "nodal", "moments", "alternating", "split"]
        _require(self.event in events, "experiment/mc/event", f"event must be one of {events}")
        _require(self.n_samples >= 1, "experiment/mc/n_samples", "n_samples must be positive")
        _require(self.method in ["direct", "grid_exact", "orthant_grid", "orthant_qmc", "mc"], "experiment/mc/method",
                 "unknown Monte Carlo method")
        _require(self.comparisons >= 1, "experiment/mc/comparisons", "comparisons must be positive")


@dataclass
class CalibrateParams(BaseData):
    ms: list[int] = None
    ratios: list[float] = None
    etas: list[float] = None
    n_samples: int = 20000
    T: float = 1.0
    save: bool = True

    def __post_init__(self):
        self.ms = list(self.ms or [2, 4, 8, 16, 32])
        self.ratios = list(self.ratios or [0.25, 0.5, 1.0])
        self.etas = list(self.etas or [0.05, 0.1, 0.2])
        _require(self.n_samples >= 1, "experiment/calibrate/n_samples", "n_samples must be positive")


@dataclass
class ReportParams(BaseData):
    ledger_files: list[str] = None   # extra ledgers merged into the report

    def __post_init__(self):
        self.ledger_files = list(self.ledger_files or [])


EXPERIMENT_TABLES = {
    "moments": MomentsParams,
    "bounds": BoundsParams,
    "simulate": SimulateParams,
    "zeros": ZerosParams,
    "nodal": NodalParams,
    "certify": CertifyParams,
    "mc": McParams,
    "calibrate": CalibrateParams,
    "report": ReportParams,
}


@dataclass
class Experiment(BaseData):
    """Experiment section: seed, measure spec and one table per command."""
    seed: int = 0
    measure: dict = None
    moments: MomentsParams = None
    bounds: BoundsParams = None
    simulate: SimulateParams = None
    zeros: ZerosParams = None
    nodal: NodalParams = None
    certify: CertifyParams = None
    mc: McParams = None
    calibrate: CalibrateParams = None
    report: ReportParams = None


@dataclass
class RuntimeArgs(BaseData):
    """Command line values that override or complete the config file."""
    config_file: Path = None
    command: str = ""
    seed: int = None
    out_dir: str = ""
    run_name: str = ""
    workers: int = 0

    def __post_init__(self):
        if isinstance(self.config_file, str) and self.config_file:
            self.config_file = Path(self.config_file)

    def init_run_name(self):
        """The run directory is named after the command unless -n is given."""
        self.run_name = self.run_name or self.command or "run"

    @classmethod
    def from_dict(cls, args_dict: dict) -> RuntimeArgs:
        known = {f.name for f in fields(RuntimeArgs)}
        return cls(**{k: v for k, v in args_dict.items() if k in known})


class DataClassFactory:
    """
    Builds section data classes out of the merged config dict.
    Unknown and missing keys are collected across all `make` calls and reported together by `check`.
    """
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.unused: list[str] = []
        self.missing: list[str] = []

    def _table(self, key_path: list[str], optional: bool):
        table = self.cfg
        for depth, k in enumerate(key_path):
            if isinstance(table, dict) and k in table:
                table = table[k]
            elif optional:
                return {}
            else:
                self.missing.append(self.key_str(key_path[:depth + 1]))
                return None
        if not isinstance(table, dict):
            self.missing.append(f"{self.key_str(key_path)} (table expected)")
            return None
        return table

    def make(self, dc: dataclass, key_path: list[str], ignore: list[str] = None, optional: bool = False):
        """
        Instantiate `dc` from the table at `key_path`, e.g. ["experiment", "mc"] for the Monte Carlo parameters.
        :param ignore: fields set to None instead of read from the table
        :param optional: an absent table means all defaults
        :return: the data class, or None when the table or a required field is missing
        """
        table = self._table(key_path, optional)
        if table is None:
            return None

        ignore = ignore or []
        declared = [f for f in fields(dc) if f.name not in ignore and not f.name.startswith("_")]
        names = {f.name for f in declared}
        self.unused += [self.key_str(key_path + [k]) for k in table if k not in names and not k.startswith("_")]

        required = [f.name for f in declared if f.default is MISSING and f.default_factory is MISSING]
        absent = [self.key_str(key_path + [k]) for k in required if k not in table]
        if absent:
            self.missing += absent
            return None

        all_names = {f.name for f in fields(dc)}
        kwargs = {k: v for k, v in table.items() if k in all_names}
        kwargs.update({k: None for k in ignore})
        try:
            return dc(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as ex:
            raise ConfigError(f"Invalid {self.key_str(key_path)} table: {ex}", keys=[self.key_str(key_path)])

    def check(self, config_file: Path):
        """Raise one ConfigError naming every unknown and missing key seen so far."""
        problems = []
        if self.unused:
            problems.append(f"Unknown config keys in file {config_file}: {', '.join(self.unused)}")
        if self.missing:
            problems.append(f"Missing required fields in file {config_file}: {', '.join(self.missing)}")
        if problems:
            raise ConfigError("; ".join(problems), keys=self.unused + self.missing)

    @staticmethod
    def key_str(key_path: list[str]) -> str:
        return "/".join(key_path)


SECTIONS = ["schema_version", "numerics", "constants", "sampler", "montecarlo", "results", "experiment"]


@dataclass
class Config(RuntimeArgs):
    """
    Validated configuration of one run: the packaged system defaults merged with the user file,
    then completed by the runtime args.
    """
    numerics: Numerics = None
    constants: Constants = None
    sampler: SamplerSettings = None
    montecarlo: MonteCarloSettings = None
    results: Results = None
    experiment: Experiment = None
    config_hash: str = ""
    _load: bool = True
    default_file: str = util.app_dir() / "config.toml"
    default_template_sys_file: Path = Path(__file__).parent / "template_sys.toml"
    default_template_user_file: Path = Path(__file__).parent / "template_user.toml"

    def __post_init__(self):
        super().__post_init__()
        self.config_file = Path(self.config_file or Config.default_file)
        self.init_run_name()
        if self._load:
            self._load_config_file()

    def _load_config_file(self) -> None:
        cfg = deep_merge(read_config_file(Config.default_template_sys_file), read_config_file(self.config_file))

        unknown = [k for k in cfg if k not in SECTIONS]
        if unknown:
            raise ConfigError(f"Unknown config sections in file {self.config_file}: {', '.join(unknown)}", keys=unknown)

        if self.seed is not None:
            cfg.setdefault("experiment", {})["seed"] = int(self.seed)
        if self.out_dir:
            cfg["results"]["out_dir"] = str(self.out_dir)

        # hashed before any run specific substitution
        self.config_hash = hash_config(cfg)

        cfg = populate(cfg, {"app_dir": util.app_dir(), "run_name": self.run_name, "command": self.command})
        cfg["results"] = populate(cfg["results"], prim_items(cfg["results"]))
        dc = DataClassFactory(cfg=path_to_obj(cfg))

        self.numerics = dc.make(Numerics, ["numerics"], optional=True)
        self.constants = dc.make(Constants, ["constants"], optional=True)
        self.sampler = dc.make(SamplerSettings, ["sampler"], optional=True)
        self.montecarlo = dc.make(MonteCarloSettings, ["montecarlo"], optional=True)

        dc.cfg["results"]["_logger"] = None
        self.results = dc.make(Results, ["results"])
        if self.results:
            self.results._logger = None

        exp = cfg.get("experiment", {})
        dc.unused += [dc.key_str(["experiment", k]) for k in exp
                      if k not in ["seed", "measure"] + list(EXPERIMENT_TABLES)]
        tables = {name: dc.make(table, ["experiment", name], optional=True)
                  for name, table in EXPERIMENT_TABLES.items()}
        self.experiment = Experiment(seed=int(exp.get("seed", 0)), measure=exp.get("measure"), **tables)

        dc.check(self.config_file)

        if self.constants:
            self.constants.load_fitted()

    @property
    def logger(self) -> logging.Logger:
        return self.results.logger

    @property
    def n_workers(self) -> int:
        return self.workers or util.default_workers()

    @classmethod
    def create_instance(cls, config_file: Path = None, run_args: RuntimeArgs = None) -> Config:
        """Load the config for a command (`run_args`) or just a config file."""
        if run_args is None:
            return cls(config_file=config_file)

        run_args.config_file = config_file or run_args.config_file
        run_args.init_run_name()
        return cls(**asdict(run_args))


# Dict helpers

def read_config_file(config_file: Path) -> dict:
    """Parse a TOML config file (JSON when the suffix says so)."""
    config_file = Path(config_file)
    if not config_file.is_file():
        raise ConfigError(f"File not found: {config_file}.", keys=[str(config_file)])
    text = config_file.read_text(encoding="utf-8")
    try:
        return json.loads(text) if config_file.suffix.lower() == ".json" else tomli.loads(text)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as ex:
        raise ConfigError(f"Unable to read the config file {config_file}: {ex}", keys=[str(config_file)])


def deep_merge(base: dict, over: dict) -> dict:
    """Copy of `base` with `over` merged in, table by table."""
    res = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(res.get(k), dict):
            res[k] = deep_merge(res[k], v)
        else:
            res[k] = v
    return res


def prim_items(cfg: dict) -> dict:
    """Top level non-table items."""
    return {k: v for k, v in cfg.items() if not isinstance(v, dict)}


def populate(data, args: dict):
    """Replace {name} placeholders in string values (nested tables and lists included)."""
    if isinstance(data, dict):
        return {k: populate(v, args) for k, v in data.items()}
    if isinstance(data, list):
        return [populate(v, args) for v in data]
    if not isinstance(data, str):
        return data
    for k, v in args.items():
        if is_str_item(k, v):
            data = data.replace("{" + k + "}", str(v))
    return data.replace("\\", "/")


def is_str_item(k, v) -> bool:
    """A public string key holding a string or a path."""
    return isinstance(k, str) and not k.startswith("_") and isinstance(v, (str, Path))


def is_path_key(k) -> bool:
    """Keys named `file`, `dir` or ending in `_file`/`_dir` hold paths."""
    k = str(k)
    return k in ("file", "dir") or k.endswith(("_file", "_dir"))


def path_to_obj(data: dict) -> dict:
    """Turn path valued items into Path objects in place, empty ones into None."""
    for k, v in data.items():
        if isinstance(v, dict):
            data[k] = path_to_obj(v)
        elif is_str_item(k, v) and is_path_key(k):
            data[k] = Path(v) if v else None
    return data


def hash_config(cfg: dict) -> str:
    """Hash of the computational config (all sections except results)."""
    relevant = {k: v for k, v in cfg.items() if k != "results"}
    return util.hash_str(json.dumps(relevant, sort_keys=True, default=str), max_len=16)


def create_config_file(config_file, force: bool = False):
    """Write the user config template to `config_file`, an existing file is kept unless forced."""
    cfg_file = Path(config_file)
    logger = util.init_logger(name="config")
    if cfg_file.is_file() and not force:
        logger.warning(f"Config file {cfg_file} exists, kept.")
        return
    util.make_dir(cfg_file.parent)
    shutil.copy2(Config.default_template_user_file, cfg_file)
    logger.info(f"Config file created: {cfg_file}")


def save_constants(file: Path, values: dict, meta: dict = None) -> Path:
    """Write fitted constants as TOML (readable through `constants.file`)."""
    file = Path(file)
    util.make_dir(file)
    doc = {"schema_version": SCHEMA_VERSION, **(meta or {}),
           "constants": {k: float(v) for k, v in values.items() if v is not None and math.isfinite(v)}}
    file.write_text(tomli_w.dumps(doc), encoding="utf-8")
    return file
