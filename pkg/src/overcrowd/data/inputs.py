import json
import tomli
import pandas as pd

from pathlib import Path

from overcrowd.config.config import Config, WorkflowEntity
from overcrowd.tasks import spectral
from overcrowd.utils.errors import ConfigError

# family -> (class, accepted keys)
FAMILIES_1D = {
    "uniform": (spectral.Uniform, ["q"]),
    "stdnormal": (spectral.StdNormal, []),
    "stretched_exp": (spectral.StretchedExp, ["alpha"]),
    "log_type": (spectral.LogType, ["gamma"]),
    "arcsine": (spectral.Arcsine, []),
    "atomic": (spectral.Atomic, ["frequencies", "weights"]),
    "grid": (spectral.GridDensity, ["x", "values", "file"]),
}

FAMILIES_2D = {
    "atomic2d": (spectral.Atomic2D, ["points", "weights"]),
    "product": (spectral.ProductOfMarginals, ["x", "y"]),
    "unit_circle": (spectral.UnitCircleUniform, []),
    "stdnormal2d": (spectral.StdNormal2D, []),
    "radial_stretched_exp": (spectral.RadialStretchedExp, ["alpha"]),
    "radial_log_type": (spectral.RadialLogType, ["gamma"]),
}


def measure_dimension(spec: dict) -> int:
    """Dimension of a measure spec (1 or 2) from its family."""
    return 2 if spec.get("family") in FAMILIES_2D else 1


def measure_from_spec(spec: dict | str | Path, key: str = "experiment/measure"):
    """
    Build a spectral measure from its specification.
    :param spec: dict with a 'family' key and the family parameters, or a TOML/JSON/CSV file
    :param key: config key path used in error messages
    :return: SpectralMeasure1D or SpectralMeasure2D
    """
    if isinstance(spec, (str, Path)):
        return load_measure(Path(spec))
    if not isinstance(spec, dict):
        raise ConfigError(f"Measure spec must be a table, got {type(spec).__name__}", keys=[key])
    if "family" not in spec:
        raise ConfigError("Measure spec is missing the 'family' key", keys=[f"{key}/family"])

    family = spec["family"]
    families = {**FAMILIES_1D, **FAMILIES_2D}
    if family not in families:
        raise ConfigError(f"Unknown measure family: {family}", keys=[f"{key}/family"])
    cls, accepted = families[family]
    params = {k: v for k, v in spec.items() if k != "family"}
    unknown = [k for k in params if k not in accepted]
    if unknown:
        raise ConfigError(f"Unknown keys of the {family} measure: {', '.join(unknown)}",
                          keys=[f"{key}/{k}" for k in unknown])

    match family:
        case "grid" if "file" in params:
            if set(params) != {"file"}:
                raise ConfigError("grid measure: give either 'file' or 'x' and 'values'", keys=[f"{key}/file"])
            return load_measure(Path(params["file"]))
        case "product":
            missing = [k for k in ["x", "y"] if k not in params]
            if missing:
                raise ConfigError("product measure needs both marginals", keys=[f"{key}/{k}" for k in missing])
            params = {"mx": measure_from_spec(params["x"], f"{key}/x"),
                      "my": measure_from_spec(params["y"], f"{key}/y")}
            if any(not isinstance(m, spectral.SpectralMeasure1D) for m in params.values()):
                raise ConfigError("product marginals must be one dimensional", keys=[f"{key}/x", f"{key}/y"])

    try:
        return cls(**params)
    except (TypeError, ValueError) as ex:
        raise ConfigError(f"Invalid {family} measure: {ex}", keys=[key])


def load_measure(file: Path):
    """
    Measure from a file: TOML or JSON spec (top level or under 'measure'),
    or a CSV density table with columns x and density.
    """
    if not file.is_file():
        raise ConfigError(f"File not found: {str(file)}.", keys=[str(file)])
    match file.suffix.lower():
        case ".csv":
            df = pd.read_csv(file)
            missing = [c for c in ["x", "density"] if c not in df.columns]
            if missing:
                raise ConfigError(f"Density table {file} is missing columns: {', '.join(missing)}",
                                  keys=[str(file)])
            df = df.sort_values("x")
            try:
                return spectral.GridDensity(df["x"].to_numpy(dtype=float), df["density"].to_numpy(dtype=float))
            except ValueError as ex:
                raise ConfigError(f"Invalid density table {file}: {ex}", keys=[str(file)])
        case ".json":
            spec = json.loads(file.read_text(encoding="utf-8"))
        case ".toml":
            try:
                spec = tomli.loads(file.read_text(encoding="utf-8"))
            except tomli.TOMLDecodeError as ex:
                raise ConfigError(f"Unable to read the measure file {file}: {ex}", keys=[str(file)])
        case _:
            raise ConfigError(f"Unsupported measure file type: {file.suffix}", keys=[str(file)])
    return measure_from_spec(spec.get("measure", spec), key=str(file))


class DataInputs(WorkflowEntity):
    """Experiment inputs preparation."""
    def __init__(self, cfg: Config):
        super().__init__(cfg)

    def measure(self, dimension: int = None):
        """
        Spectral measure of the experiment.
        :param dimension: required dimension, if any
        :return: measure object
        """
        spec = self.cfg.experiment.measure
        if spec is None:
            raise ConfigError("The experiment has no measure table", keys=["experiment/measure"])
        mu = measure_from_spec(spec)
        actual = 2 if isinstance(mu, spectral.SpectralMeasure2D) else 1
        if dimension and dimension != actual:
            raise ConfigError(f"The command needs a {dimension}D measure, {mu.ident} is {actual}D",
                              keys=["experiment/measure/family"])
        self.logger.info(f"Measure: {mu.ident}")
        return mu
