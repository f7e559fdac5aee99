from pathlib import Path

from overcrowd.config.config import Config
from overcrowd.flows import AnalysisWorkflow, CampaignWorkflow, SimulationWorkflow


def cmd_moments(cfg: Config) -> list[Path]:
    log_command_args(cfg, "moments", max_order=cfg.experiment.moments.max_order)
    return log_files(cfg, AnalysisWorkflow(cfg=cfg).moments())


def cmd_bounds(cfg: Config) -> list[Path]:
    p = cfg.experiment.bounds
    log_command_args(cfg, "bounds", formula=p.formula, n=p.n, T=p.T)
    return log_files(cfg, AnalysisWorkflow(cfg=cfg).bounds())


def cmd_certify(cfg: Config) -> list[Path]:
    p = cfg.experiment.certify
    log_command_args(cfg, "certify", kind=p.kind, n=p.n, T=p.T, M=p.M)
    return log_files(cfg, AnalysisWorkflow(cfg=cfg).certify())


def cmd_simulate(cfg: Config) -> list[Path]:
    p = cfg.experiment.simulate
    log_command_args(cfg, "simulate", dimension=p.dimension, T=p.T, points=p.points, paths=p.n_paths)
    return log_files(cfg, SimulationWorkflow(cfg=cfg).simulate())


def cmd_zeros(cfg: Config) -> list[Path]:
    p = cfg.experiment.zeros
    log_command_args(cfg, "zeros", T=p.T, paths=p.n_paths)
    return log_files(cfg, SimulationWorkflow(cfg=cfg).zeros())


def cmd_nodal(cfg: Config) -> list[Path]:
    p = cfg.experiment.nodal
    log_command_args(cfg, "nodal", T=p.T, fields=p.n_fields, resolution=p.resolution)
    return log_files(cfg, SimulationWorkflow(cfg=cfg).nodal())


def cmd_mc(cfg: Config) -> list[Path]:
    """Run a Monte Carlo campaign, the stop file interrupts it between batches."""
    p = cfg.experiment.mc
    log_command_args(cfg, "mc", event=p.event, method=p.method, n=p.n, T=p.T, samples=p.n_samples)
    cfg.results.clear()
    try:
        return log_files(cfg, CampaignWorkflow(cfg=cfg).mc())
    except InterruptedError:
        cfg.results.cleanup()
        raise


def cmd_calibrate(cfg: Config) -> list[Path]:
    p = cfg.experiment.calibrate
    log_command_args(cfg, "calibrate", ms=p.ms, ratios=p.ratios, samples=p.n_samples)
    cfg.results.clear()
    try:
        return log_files(cfg, CampaignWorkflow(cfg=cfg).calibrate())
    except InterruptedError:
        cfg.results.cleanup()
        raise


def cmd_report(cfg: Config) -> list[Path]:
    log_command_args(cfg, "report", ledger=cfg.results.ledger_file)
    return log_files(cfg, CampaignWorkflow(cfg=cfg).report())


def log_files(cfg: Config, files: list[Path]) -> list[Path]:
    """Log the written result files."""
    if files:
        cfg.results.logger.info("Result files:")
        cfg.results.logger.info("\n".join(f"  {f}" for f in files))
    else:
        cfg.results.logger.info("No results written.")
    return files


def log_command_args(cfg: Config, command: str, **options) -> None:
    """Log the command arguments."""
    logger = cfg.results.logger
    logger.info("---")
    logger.info(f"Command:     {command}")
    logger.info("Options:")
    logger.info(f"  run:       {cfg.run_name}")
    logger.info(f"  config:    {cfg.config_file}")
    logger.info(f"  results:   {cfg.results.out_dir}")
    logger.info(f"  measure:   {(cfg.experiment.measure or {}).get('family', '-')}")
    logger.info(f"  seed:      {cfg.experiment.seed}")
    for k, v in options.items():
        logger.info(f"  {k + ':':<10} {v}")
    logger.info("---")
