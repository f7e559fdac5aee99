import json
import numpy as np
import pandas as pd

from pathlib import Path

from overcrowd.config.config import Config, WorkflowEntity
from overcrowd.data import outputs

TIDY_COLUMNS = ["x", "y", "series"]


def tidy(x, y, series: str) -> pd.DataFrame:
    """Long format plot data of one series."""
    return pd.DataFrame({"x": np.asarray(x, dtype=float), "y": np.asarray(y, dtype=float), "series": series})


def moment_series(df_moments: pd.DataFrame) -> pd.DataFrame:
    """log moments against n, one series per log column of a moment table frame."""
    cols = [c for c in df_moments.columns if c.startswith("log_")]
    return pd.concat([tidy(df_moments["n"], df_moments[c], c) for c in cols], ignore_index=True)


def sample_series(samples: list) -> pd.DataFrame:
    """Path samples against t, one series per path."""
    return pd.concat([tidy(s.grid.axis, s.values, f"path_{i}") for i, s in enumerate(samples)],
                     ignore_index=True)


def contour_series(lengths: list) -> pd.DataFrame:
    """Nodal lines of NodalLength results, one series per field and contour."""
    dfs = []
    for i, nl in enumerate(lengths):
        df = nl.to_frame()
        for c, g in df.groupby("contour"):
            dfs.append(tidy(g["x"], g["y"], f"field_{i}/contour_{c}"))
    return pd.concat(dfs, ignore_index=True) if dfs else pd.DataFrame(columns=TIDY_COLUMNS)


def certificate_series(df_sweep: pd.DataFrame) -> pd.DataFrame:
    """log lambda_min and its certified lower bound against m."""
    return pd.concat([tidy(df_sweep["m"], df_sweep["log_lambda_min"], "log_lambda_min"),
                      tidy(df_sweep["m"], df_sweep["log_bound"], "log_bound")], ignore_index=True)


def tail_series(df_ledger: pd.DataFrame, x_key: str = "n") -> pd.DataFrame:
    """p_hat and its interval against a parameter of the ledger rows (missing parameter: NaN)."""
    x = df_ledger["params"].map(lambda s: json.loads(s).get(x_key, np.nan))
    return pd.concat([tidy(x, df_ledger[c], c) for c in ["p_hat", "ci_lo", "ci_hi"]], ignore_index=True)


class PlotData(WorkflowEntity):
    """Tidy (x, y, series) CSV files for external plotting."""
    def __init__(self, cfg: Config):
        super().__init__(cfg)

    def write(self, df: pd.DataFrame, name: str) -> Path:
        """
        Write plot data into the run directory.
        :param df: tidy plot data
        :param name: plot name, the file is <name>.plot.csv
        :return: the written file
        """
        file = outputs.write_csv(self.cfg.results.file(f"{name}.plot.csv"), df[TIDY_COLUMNS])
        self.logger.info(f"Plot data: {file}")
        return file
