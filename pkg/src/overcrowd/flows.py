import math
import time
import logging

import numpy as np
import pandas as pd

from pathlib import Path

from numpy.polynomial import Polynomial

from overcrowd.config.config import Config, Workflow, save_constants
from overcrowd.data import inputs, outputs
from overcrowd.tasks import bounds as bnd
from overcrowd.tasks import geometry, kernel, montecarlo, sampler, spectral
from overcrowd.tasks.spectral import SpectralMeasure2D
from overcrowd.utils import util
from overcrowd.utils.errors import CertificateFalsified, ConfigError, PreconditionFailed
from overcrowd.viz import plotdata

CASCADE_SLACK = 1e-9   # relative slack of the derivative bound of random cascade instances
MIN_ROOT_GAP = 0.02    # smallest root gap of random cascade instances, relative to T
RATIO_RTOL = 1e-9      # rounding slack of the Turan norm ratio


class ExperimentWorkflow(Workflow):
    """Common parts of the command workflows: measure, constants, Monte Carlo options and outputs."""
    data_inputs: inputs.DataInputs
    plots: plotdata.PlotData

    def __init__(self, cfg: Config, logger: logging.Logger = None):
        super().__init__(cfg, logger)
        self.data_inputs = inputs.DataInputs(cfg=self.cfg)
        self.plots = plotdata.PlotData(cfg=self.cfg)

    @property
    def seed(self) -> int:
        return self.cfg.experiment.seed

    def measure(self, dimension: int = None):
        return self.data_inputs.measure(dimension)

    def constants(self, mu) -> bnd.BoundConstants:
        """Bound constants of the config (fitted file first), missing ones derived from the measure."""
        if isinstance(mu, SpectralMeasure2D):
            return bnd.BoundConstants.from_config(self.cfg.constants, 2, spectral.check_assumption_a2(mu))
        return bnd.BoundConstants.from_config(self.cfg.constants, 1, spectral.check_assumption_a1(mu))

    def mc_kwargs(self, with_grid: bool = True) -> dict:
        """Monte Carlo options shared by the estimators."""
        mc = self.cfg.montecarlo
        kw = dict(batch_size=mc.batch_size, n_waves=mc.n_waves, max_n_waves=self.cfg.sampler.max_n_waves,
                  misfit_points=self.cfg.sampler.misfit_points, confidence=mc.confidence,
                  workers=self.cfg.n_workers, operation=self.cfg.results, logger=self.logger)
        if with_grid:
            kw |= dict(points_per_unit=mc.points_per_unit, min_points=mc.min_points)
        return kw

    def cert_kwargs(self) -> dict:
        num = self.cfg.numerics
        return dict(max_gram=num.max_gram, dps=num.mp_dps, dps_max=num.mp_dps_max,
                    turan_A=self.cfg.constants.turan_A)

    def file(self, name: str) -> Path:
        return self.cfg.results.file(name)

    def write_json(self, name: str, data: dict) -> Path:
        return outputs.write_json(self.file(name), {"config_hash": self.cfg.config_hash, **data})


class AnalysisWorkflow(ExperimentWorkflow):
    """Deterministic computations: moments, bounds and certificates."""

    def moments(self) -> list[Path]:
        """Moment table, assumption check and moment plot data."""
        mu = self.measure()
        p = self.cfg.experiment.moments
        if isinstance(mu, SpectralMeasure2D):
            table = spectral.moments_2d(mu, p.max_order)
            report = spectral.check_assumption_a2(mu)
            extra = {}
        else:
            table = spectral.moments_1d(mu, p.max_order, grid_rel_tol=self.cfg.numerics.grid_rel_tol)
            report = spectral.check_assumption_a1(mu)
            params = mu.params()
            extra = {"growth": spectral.growth_class(mu, max_order=p.max_order, alpha=params.get("alpha"),
                                                       gamma=params.get("gamma"))}

        violations = table.invariant_violations()
        if violations:
            self.logger.warning(f"Moment table invariants failed: {', '.join(violations)}")
        df = table.to_frame()
        files = [outputs.write_csv(self.file("moments.csv"), df),
                 self.write_json("assumption.json", {"measure": mu.spec(), "assumption": report.to_dict(),
                                                     "method": table.method, "violations": violations,
                                                     "quadrature_error": table.quadrature_error, **extra})]
        if table.dimension == 1:
            files.append(self.plots.write(plotdata.moment_series(df), "moments"))
        return files

    def bound_report(self, mu, k: bnd.BoundConstants) -> dict:
        """Evaluate the configured bound formula (strict: failed preconditions raise)."""
        p = self.cfg.experiment.bounds
        order = 2 * max(p.n, p.k or p.n) + 2
        planar = isinstance(mu, SpectralMeasure2D)
        if p.formula in ["theorem1_upper", "lemsbp", "probability_split", "short_range_repulsion", "dudley"] \
                and planar:
            raise ConfigError(f"{p.formula} needs a 1D measure", keys=["experiment/bounds/formula"])
        if p.formula == "theorem2_upper" and not planar:
            raise ConfigError("theorem2_upper needs a 2D measure", keys=["experiment/bounds/formula"])

        def table():
            return spectral.moments_2d(mu, order) if planar else spectral.moments_1d(mu, order)

        def require_c(value, name):
            if value is None:
                raise ConfigError(f"{p.formula} needs constants.{name} (set it or run calibrate)",
                                  keys=[f"constants/{name}"])
            return value

        def lower(k):
            return bnd.theorem1_lower(p.n, p.T, require_c(k.c_lower, "c_lower"), k.b, mu=None if planar else mu)

        if p.formula in ["theorem1_upper", "theorem2_upper", "lemsbp", "short_range_repulsion"] and k.B is None:
            raise ConfigError(f"{p.formula} needs constants.B or constants.C (set one or run calibrate)",
                              keys=["constants/C"])

        match p.formula:
            case "theorem1_upper":
                res = bnd.theorem1_upper(p.eps, p.n, p.T, table(), k).to_dict()
            case "theorem1_lower":
                res = lower(k).to_dict()
            case "theorem2_upper":
                res = bnd.theorem2_upper(p.eps, p.n, p.T, table(), k).to_dict()
            case "smallball":
                res = bnd.smallball_bound(p.m, p.T, p.eta, require_c(k.C, "C"), k.b).to_dict()
            case "lemsbp":
                res = bnd.lemsbp_bound(p.eps, p.n, p.T, table(), A=k.A, C=k.C, B=k.B, b=k.b).to_dict()
            case "probability_split":
                res = bnd.probability_split(p.n, p.T, p.M, table(), k, m=p.m).to_dict()
            case "short_range_repulsion":
                res = bnd.short_range_repulsion(p.n, p.delta, table(), k).to_dict()
            case "dudley":
                res = {"formula": "dudley", "sup": bnd.dudley_sup_bound(table(), p.n, p.T, k.A).to_dict()}
            case "regime":
                alpha = self.cfg.experiment.measure.get("alpha") if self.cfg.experiment.measure else None
                gamma = self.cfg.experiment.measure.get("gamma") if self.cfg.experiment.measure else None
                res = bnd.regime_table(p.row, 2 if planar else 1, p.n, p.T, m=p.m, c=k.c or 1.0, C=k.C or 1.0,
                                       kappa=p.kappa, alpha=alpha, gamma=gamma).to_dict()
            case _:
                raise ConfigError(f"Unknown bound formula: {p.formula}", keys=["experiment/bounds/formula"])

        if p.lower:
            res["log_bound_lower"] = lower(k).log_bound
        return res

    def bounds(self) -> list[Path]:
        mu = self.measure()
        k = self.constants(mu)
        res = self.bound_report(mu, k)
        for pc in res.get("preconditions", []):
            self.logger.info(f"  {pc['name']:<28} {'ok' if pc['satisfied'] else 'FAILED':<7} margin {pc['margin']}")
        self.logger.info(f"{res.get('formula', res.get('row'))}: log bound {res.get('log_bound', res.get('log_tail'))}")
        return [self.write_json("bounds.json", {"measure": mu.spec(), **res, "constants": k.to_dict()})]

    # Certificates

    def _cascade_instances(self, n: int, T: float) -> list[tuple[Polynomial, float]]:
        """Random polynomials with n separated roots in [0, T] and M = |p^(n)|."""
        res = []
        for i in range(self.cfg.experiment.certify.instances):
            rng = util.substream(self.seed, "cascade", i)
            roots = np.sort(rng.uniform(0.0, T, n))
            while n > 1 and np.min(np.diff(roots)) < MIN_ROOT_GAP * T:
                roots = np.sort(rng.uniform(0.0, T, n))
            lead = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
            p = lead * Polynomial.fromroots(roots)
            res.append((p, abs(lead) * math.factorial(n) * (1 + CASCADE_SLACK)))
        return res

    def _fields(self, mu, extent: float) -> list:
        mc = self.cfg.sampler
        return [sampler.make_waves(mu, util.substream(self.seed, "waves", i), mc.n_waves, extent,
                                   mc.max_n_waves, mc.misfit_points)
                for i in range(self.cfg.experiment.certify.instances)]

    def _falsified(self, kind: str, rows: list[dict], broken: list[int]):
        if broken:
            raise CertificateFalsified(f"{kind}: conclusion failed on instances {broken}",
                                       details={"instances": [rows[i] for i in broken[:10]]})

    def certify(self) -> list[Path]:
        """Run the configured certificate on the configured or random instances."""
        p = self.cfg.experiment.certify
        num = self.cfg.numerics
        rows, broken = [], []

        def precondition_row(i: int, ex: PreconditionFailed) -> dict:
            return {"instance": i, "precondition": ex.precondition, "margin": ex.margin}

        match p.kind:
            case "cascade" | "zeros":
                if p.coefficients:
                    instances = [(Polynomial(p.coefficients), p.M)]
                elif p.kind == "cascade":
                    instances = self._cascade_instances(p.n, p.T)
                else:
                    raise ConfigError("the zeros certificate needs polynomial coefficients",
                                      keys=["experiment/certify/coefficients"])
                for i, (f, M) in enumerate(instances):
                    if p.kind == "cascade":
                        cert = geometry.cascade_check(f, p.n, p.T, M, num.sup_norm_points)
                        rows.append({"instance": i, **cert.to_dict()})
                        holds = cert.holds
                    else:
                        holds = geometry.no_more_than_n_zeros_check(f, p.n, p.T, M, num.sup_norm_points)
                        rows.append({"instance": i, "kind": "zeros", "n": p.n, "T": p.T, "M": M, "holds": holds})
                    if not holds:
                        broken.append(i)
            case "nodal_box" | "strip":
                mu = self.measure(dimension=2)
                for i, g in enumerate(self._fields(mu, p.n)):
                    self.cfg.results.raise_if_stopped()
                    try:
                        if p.kind == "nodal_box":
                            cert = geometry.nodal_box_certificate(g, p.n, p.T, p.M, max_lines=num.max_lines)
                            ok = not cert.bounds_hold or cert.length_ok is not False
                        else:
                            cert = geometry.strip_check(g, p.n, p.T, p.M)
                            ok = cert.holds
                    except PreconditionFailed as ex:
                        rows.append(precondition_row(i, ex))
                        continue
                    rows.append({"instance": i, **cert.to_dict()})
                    if not ok:
                        broken.append(len(rows) - 1)
            case "eigen":
                mu = self.measure(dimension=1)
                k = self.constants(mu)
                df = kernel.certificate_sweep(mu, p.ms, p.ratio, c=k.c, b=k.b, logger=self.logger,
                                              **self.cert_kwargs())
                rows = df.to_dict("records")
                broken = [i for i, r in enumerate(rows) if not r["valid"]]
                files = [outputs.write_csv(self.file("certify.csv"), df),
                         self.plots.write(plotdata.certificate_series(df), "eigen")]
                self._falsified("eigen", rows, broken)
                return files
            case "gram":
                mu = self.measure(dimension=1)
                b = self.constants(mu).b
                for m in p.ms:
                    g = kernel.gram_matrix(mu, m, p.ratio * b * m, num.pivot_tol, num.psd_tol)
                    rows.append({"m": m, "T": g.T, "rank": g.rank, "log_det": g.log_det})
            case "folded":
                mu = self.measure(dimension=1)
                b = self.constants(mu).b
                for i, m in enumerate(p.ms):
                    fd = kernel.folded_density(mu, m, p.ratio * b * m, b=b)
                    rows.append({"m": m, "T": p.ratio * b * m, "mass": fd.mass, "level": fd.level,
                                 "level_set_measure": fd.level_set_measure, "required": fd.required,
                                 "holds": fd.holds})
                    if not fd.holds:
                        broken.append(i)
            case "turan":
                A = self.cfg.constants.turan_A
                for i in range(p.instances):
                    rng = util.substream(self.seed, "turan", i)
                    coeffs = [(complex(*rng.standard_normal(2)), lam) for lam in rng.uniform(-5.0, 5.0, p.n)]
                    lo = rng.uniform(0.0, 0.8)
                    subset = [(lo, lo + rng.uniform(0.05, 1.0 - lo))]
                    ratio = kernel.turan_ratio(coeffs, (0.0, 1.0), subset, q=math.inf)
                    bound = kernel.turan_bound(p.n, 1.0, subset[0][1] - subset[0][0], A)
                    rows.append({"instance": i, "n": p.n, "subset_length": subset[0][1] - subset[0][0],
                                 "ratio": ratio, "bound": bound, "holds": ratio <= bound * (1 + RATIO_RTOL)})
                    if ratio > bound * (1 + RATIO_RTOL):
                        broken.append(i)

        files = [self.write_json("certify.json", {"kind": p.kind, "instances": rows,
                                                  "holds": not broken, "failed": len(broken)})]
        self._falsified(p.kind, rows, broken)
        return files


class SimulationWorkflow(ExperimentWorkflow):
    """Sample paths and fields, zero counts and nodal lengths."""

    def simulate(self) -> list[Path]:
        p = self.cfg.experiment.simulate
        s = self.cfg.sampler
        num = self.cfg.numerics
        mu = self.measure(dimension=p.dimension)
        grid = sampler.GridSpec(p.dimension, p.T, p.points)
        method = p.method or s.method
        files, paths = [], []

        exact = None
        if method == "exact":
            exact = sampler.ExactSampler(mu, grid, ridge=num.ridge, max_points=num.max_exact_points,
                                         pivot_tol=num.pivot_tol, psd_tol=num.psd_tol)
        # 2D orders are (i, j) pairs, a bare integer differentiates along x
        orders = p.orders if p.dimension == 1 else [tuple(o) if isinstance(o, (list, tuple)) else (int(o), 0)
                                                    for o in p.orders]
        if exact is not None:
            orders = orders[:1]
            if orders != [0] and orders != [(0, 0)]:
                self.logger.warning("The exact sampler draws values only, derivative orders ignored.")
        for i in range(p.n_paths):
            self.cfg.results.raise_if_stopped()
            if exact is not None:
                samples = [exact.sample(self.seed, index=i)]
            else:
                samples = sampler.sample_derivative_paths(mu, grid, self.seed, orders, s.n_waves, index=i,
                                                          max_n_waves=s.max_n_waves, misfit_points=s.misfit_points)
            for order, sample in zip(orders, samples):
                label = "-".join(map(str, order)) if isinstance(order, tuple) else str(order)
                files.extend(outputs.write_sample(sample, self.cfg.results.out_dir, f"sample_{i}_order_{label}"))
                if p.dimension == 1 and sample.order == 0:
                    paths.append(sample)
        if paths:
            files.append(self.plots.write(plotdata.sample_series(paths), "samples"))
        return files

    def zeros(self) -> list[Path]:
        """Zero counts of independent paths on [0, T]."""
        p = self.cfg.experiment.zeros
        s = self.cfg.sampler
        mu = self.measure(dimension=1)
        rows = []
        for i in range(p.n_paths):
            self.cfg.results.raise_if_stopped()
            f = sampler.make_waves(mu, util.substream(self.seed, "waves", i), s.n_waves, p.T, s.max_n_waves,
                                   s.misfit_points)
            zc = geometry.count_zeros(f, p.T, p.resolution, max_refinements=self.cfg.numerics.max_refinements,
                                      logger=self.logger)
            rows.append({"path": i, "count": zc.count, "tangencies": zc.tangencies, "resolution": zc.resolution})
        df = pd.DataFrame(rows)
        mean = math.fsum(df["count"]) / len(df)
        oracle = montecarlo.kac_rice_mean(mu, p.T)
        self.logger.info(f"Mean zero count {mean:.4g}, Kac-Rice {oracle:.4g}")
        return [outputs.write_csv(self.file("zeros.csv"), df),
                self.write_json("zeros.json", {"measure": mu.spec(), "T": p.T, "n_paths": p.n_paths,
                                               "mean": mean, "kac_rice": oracle})]

    def nodal(self) -> list[Path]:
        """Nodal lengths of independent fields on [0, T]^2 with the line intersection bound."""
        p = self.cfg.experiment.nodal
        s = self.cfg.sampler
        mu = self.measure(dimension=2)
        rows, lengths = [], []
        for i in range(p.n_fields):
            self.cfg.results.raise_if_stopped()
            g = sampler.make_waves(mu, util.substream(self.seed, "waves", i), s.n_waves, p.T, s.max_n_waves,
                                   s.misfit_points)
            nl = geometry.nodal_length(g, p.T, p.resolution, logger=self.logger)
            line = geometry.line_intersection_bound(g, p.T, p.resolution, p.line_mode,
                                                    workers=self.cfg.n_workers)
            lengths.append(nl)
            rows.append({"field": i, "length": nl.length, "error_estimate": nl.error_estimate,
                         "ambiguous_cells": nl.ambiguous_cells, "line_bound": line})
        df = pd.DataFrame(rows)
        mean = math.fsum(df["length"]) / len(df)
        oracle = montecarlo.kac_rice_mean(mu, p.T)
        self.logger.info(f"Mean nodal length {mean:.4g}, Kac-Rice {oracle:.4g}")
        return [outputs.write_csv(self.file("nodal.csv"), df),
                self.write_json("nodal.json", {"measure": mu.spec(), "T": p.T, "n_fields": p.n_fields,
                                               "mean": mean, "kac_rice": oracle}),
                self.plots.write(plotdata.contour_series(lengths), "nodal")]


class CampaignWorkflow(ExperimentWorkflow):
    """Monte Carlo campaigns, calibration and the ledger report."""

    def estimates(self) -> tuple[list, dict]:
        """Run the configured Monte Carlo event; returns ledger estimates and extra JSON content."""
        p = self.cfg.experiment.mc
        mc = self.cfg.montecarlo
        seed = self.seed
        extra = {}
        match p.event:
            case "zeros":
                mu = self.measure(dimension=1)
                method = p.method if p.method in ["direct", "grid_exact"] else "direct"
                est = montecarlo.estimate_zero_tail(mu, p.n, p.T, p.n_samples, seed, method=method,
                                                    comparisons=p.comparisons, **self.mc_kwargs())
                extra["oracle"] = self.zero_tail_oracle(mu, p.n, p.T)
                return [est], extra
            case "smallball":
                mu = self.measure(dimension=1)
                return [montecarlo.estimate_smallball(mu, p.T, p.eta, p.n_samples, seed,
                                                      comparisons=p.comparisons, **self.mc_kwargs())], extra
            case "nodal":
                mu = self.measure(dimension=2)
                kw = self.mc_kwargs(with_grid=False)
                kw["batch_size"] = min(kw["batch_size"], 100)
                return [montecarlo.estimate_nodal_tail(mu, p.n, p.T, p.n_samples, seed,
                                                       comparisons=p.comparisons, **kw)], extra
            case "moments":
                mu = self.measure()
                kw = self.mc_kwargs(with_grid=not isinstance(mu, SpectralMeasure2D))
                df = montecarlo.estimate_expectation_and_moments(mu, p.T, p.m_max, p.n_samples, seed,
                                                                 resamples=mc.bootstrap_resamples, **kw)
                extra["moments_file"] = str(outputs.write_csv(self.file("mc_moments.csv"), df))
                extra["n_waves"] = df.attrs.get("n_waves")
                return [], extra
            case "alternating":
                mu = self.measure(dimension=1)
                method = p.method if p.method in ["mc", "orthant_grid", "orthant_qmc"] else "orthant_grid"
                est = montecarlo.alternating_sign_probability(mu, p.n, p.T, method, p.n_samples, seed,
                                                              qmc_points=mc.qmc_points, qmc_batches=mc.qmc_batches,
                                                              comparisons=p.comparisons,
                                                              **self.mc_kwargs(with_grid=False))
                return [est], extra
            case "split":
                mu = self.measure(dimension=1)
                split = montecarlo.estimate_probability_split(mu, p.n, p.T, p.M, p.n_samples, seed,
                                                              **self.mc_kwargs())
                extra |= {"violations": split.violations, "holds": split.holds}
                return [split.zeros, split.small, split.large], extra
        raise ConfigError(f"Unknown Monte Carlo event: {p.event}", keys=["experiment/mc/event"])

    @staticmethod
    def zero_tail_oracle(mu, n: int, T: float) -> float | None:
        """Exact tail of the single frequency cosine process, None for other measures."""
        if isinstance(mu, spectral.Atomic) and mu.frequencies.size == 1:
            return montecarlo.phase_oracle_cosine(n, T, float(mu.frequencies[0]))
        return None

    def mc(self) -> list[Path]:
        ts = time.time()
        estimates, extra = self.estimates()
        self.logger.info(f"Monte Carlo done in: {util.elapsed_time_str(ts)}")
        for est in estimates:
            self.logger.info(f"{est.event} ({est.method}): p_hat {est.p_hat:.6g} in [{est.ci_lo:.6g}, {est.ci_hi:.6g}]")
        files = [self.write_json("mc.json", {"estimates": [e.to_dict() for e in estimates], **extra})]
        if estimates:
            outputs.append_ledger(self.cfg.results.ledger_file, estimates, self.cfg.config_hash)
            files.append(self.cfg.results.ledger_file)
        if "moments_file" in extra:
            files.append(Path(extra["moments_file"]))
        return files

    def calibrate(self) -> list[Path]:
        p = self.cfg.experiment.calibrate
        mu = self.measure(dimension=1)
        results = montecarlo.calibrate_constants(mu, p.ms, p.ratios, p.etas, p.n_samples, self.seed, T=p.T,
                                                 turan_A=self.cfg.constants.turan_A,
                                                 confidence=self.cfg.montecarlo.confidence,
                                                 mc_kwargs={k: v for k, v in self.mc_kwargs().items()
                                                            if k not in ["confidence", "logger"]},
                                                 cert_kwargs={k: v for k, v in self.cert_kwargs().items()
                                                              if k != "turan_A"},
                                                 logger=self.logger)
        values = {r.name: r.value for r in results}
        df = pd.DataFrame([{"name": r.name, "value": r.value, "worst_margin": r.worst_margin} for r in results])
        files = [outputs.write_csv(self.file("calibration.csv"), df),
                 self.write_json("calibration.json", {"measure": mu.spec(),
                                                      "results": [r.to_dict() for r in results]})]
        if p.save:
            target = self.cfg.constants.file or self.file("constants.toml")
            meta = {"measure": mu.ident, "config_hash": self.cfg.config_hash,
                    "calibration": {"C_from_c": values["C_from_c"]}}
            files.append(save_constants(target, {k: values[k] for k in ["b", "B", "c", "c_lower", "C"]}, meta))
            self.logger.info(f"Fitted constants saved: {target}")
        return files

    def report(self) -> list[Path]:
        """Summary of the ledger (and any extra ledgers) with the tail plot data."""
        p = self.cfg.experiment.report
        ledger_files = [self.cfg.results.ledger_file] + [Path(f) for f in p.ledger_files]
        df = outputs.read_ledger(ledger_files)
        if df.empty:
            self.logger.warning("The ledger is empty, run `overcrowd mc` first.")
            return []
        summary = df.groupby(["event", "method"], as_index=False).agg(
            estimates=("p_hat", "size"), samples=("n_samples", "sum"),
            p_min=("p_hat", "min"), p_max=("p_hat", "max"))
        return [outputs.write_csv(self.file("report.csv"), summary),
                self.write_json("report.json", {"ledgers": [str(f) for f in ledger_files], "rows": len(df),
                                                "summary": summary.to_dict("records")}),
                self.plots.write(plotdata.tail_series(df), "tails")]
