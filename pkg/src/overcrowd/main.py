import argparse
import json
import shutil
import sys
import time

from overcrowd.utils import commands, util
from overcrowd.utils.errors import EXIT_OK, OvercrowdError

from overcrowd.config.config import RuntimeArgs, Config, create_config_file

COMMANDS = {
    "config": "create a config file from the user template",
    "reset": "clear the cache of high precision eigenvalues",
    "moments": "moment table and assumption check of the measure",
    "bounds": "evaluate a bound formula (experiment.bounds.formula)",
    "simulate": "sample paths or fields (and derivatives) on a grid",
    "zeros": "zero counts of independent paths",
    "nodal": "nodal lengths of independent fields",
    "certify": "deterministic certificates (experiment.certify.kind)",
    "mc": "Monte Carlo campaign, rows appended to the ledger",
    "calibrate": "fit the bound constants and save them",
    "report": "summary of the Monte Carlo ledger",
}

EPILOG = "commands:\n" + "\n".join(f"  {k:<10} {v}" for k, v in COMMANDS.items()) + """

measure families:
  1D: uniform, stdnormal, stretched_exp, log_type, arcsine, atomic, grid
  2D: atomic2d, product, unit_circle, stdnormal2d, radial_stretched_exp, radial_log_type

exit codes: 0 ok, 2 config error, 3 numeric error, 4 failed precondition, 5 falsified certificate
"""


def parse_args(argv: list[str] = None) -> argparse.Namespace:
    example = "overcrowd mc -c config.toml --seed 7"
    parser = argparse.ArgumentParser(example, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    # Commands
    parser.add_argument('command', choices=list(COMMANDS), help="Command to execute.")
    # Optional arguments
    parser.add_argument('-c', '--config', dest='config_file', default=Config.default_file,
                        help="Config file path.")
    parser.add_argument('-n', '--name', dest='run_name', default='',
                        help="Run name, used as the output dir name (default: the command).")
    parser.add_argument('--seed', dest='seed', type=int, default=None,
                        help="Campaign seed, overrides experiment.seed.")
    parser.add_argument('--out', dest='out_dir', default='',
                        help="Output directory, overrides results.out_dir.")
    parser.add_argument('--workers', dest='workers', type=int, default=0,
                        help="Worker processes (default: OVERCROWD_THREADS or 1).")
    args = parser.parse_args(argv)

    return args


def run(args: RuntimeArgs) -> int:
    """Execute a command, returns the exit code."""
    ts0 = time.time()
    if args.command == "reset":
        # cached eigenvalues only, results and ledgers stay
        shutil.rmtree(util.memory_cache_dir(), ignore_errors=True)
        return EXIT_OK

    elif args.command == "config":
        # user template, an existing file is kept
        create_config_file(args.config_file)
        return EXIT_OK

    # system defaults + config file + command line
    cfg: Config = Config.create_instance(run_args=args)

    match args.command:
        case "moments":
            commands.cmd_moments(cfg)
        case "bounds":
            commands.cmd_bounds(cfg)
        case "simulate":
            commands.cmd_simulate(cfg)
        case "zeros":
            commands.cmd_zeros(cfg)
        case "nodal":
            commands.cmd_nodal(cfg)
        case "certify":
            commands.cmd_certify(cfg)
        case "mc":
            commands.cmd_mc(cfg)
        case "calibrate":
            commands.cmd_calibrate(cfg)
        case "report":
            commands.cmd_report(cfg)
        case _:
            raise ValueError(f"Unsupported command: {args.command}")

    cfg.results.logger.info(f"{args.command} done in {util.elapsed_time_str(ts0)}")
    return EXIT_OK


def main(argv: list[str] = None):
    args_raw: argparse.Namespace = parse_args(argv)
    args: RuntimeArgs = RuntimeArgs.from_dict(args_raw.__dict__)
    try:
        code = run(args)
    except OvercrowdError as ex:
        print(json.dumps(ex.to_dict(), default=str), file=sys.stderr)
        code = ex.exit_code
    except InterruptedError as ex:
        util.init_logger(name="overcrowd").warning(str(ex))
        code = EXIT_OK
    sys.exit(code)


if __name__ == "__main__":
    main()
