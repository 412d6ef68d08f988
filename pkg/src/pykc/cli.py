import argparse
import json
import logging
import sys
from typing import List, Optional

from pykc.experiments.aggregate import STATISTICS, aggregate, write_aggregate_csv
from pykc.experiments.config import EXPERIMENTS, ExperimentConfig, validate_config
from pykc.experiments.runner import ExperimentRunner
from pykc.scaling import PyKCError

logger = logging.getLogger(__name__)

EXIT_OK = 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='kc', description='Tagged Rayleigh gas experiments and kinetic solvers.')
    commands = parser.add_subparsers(dest='command', required=True)
    for experiment in EXPERIMENTS:
        command = commands.add_parser(experiment, help=f'run the {experiment} experiment')
        command.add_argument('--config', required=True, help='experiment config file')
        command.add_argument('--seed', type=int, help='overrides the configured base seed')
        command.add_argument('--workers', type=int, help='replica worker processes (KC_WORKERS overrides)')
        command.add_argument('--out', help='output directory, default the configured one')
        command.add_argument('-v', '--verbose', action='count', default=0)
    validate = commands.add_parser('validate', help='check a config without running it')
    validate.add_argument('--config', required=True)
    validate.add_argument('-v', '--verbose', action='count', default=0)
    pool = commands.add_parser('aggregate', help='pool the numeric columns of result tables')
    pool.add_argument('files', nargs='+')
    pool.add_argument('--stat', choices=STATISTICS, default='mean')
    pool.add_argument('-v', '--verbose', action='count', default=0)
    return parser


def _configure_logging(verbose: int):
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')


def _validate(args) -> int:
    report = validate_config(args.config)
    print(json.dumps(report.to_json(), indent=4))
    if report.ok:
        return EXIT_OK
    for error in report.errors:
        print(error.message, file=sys.stderr)
    return report.errors[0].exit_code


def _aggregate(args) -> int:
    write_aggregate_csv(sys.stdout, aggregate(args.files, args.stat))
    return EXIT_OK


def _run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if cfg.experiment != args.command:
        logger.warning(f'config names experiment `{cfg.experiment}`, running `{args.command}`')
    overrides = {'experiment': args.command}
    if args.seed is not None:
        overrides['seed'] = args.seed
    cfg = cfg.with_values(overrides)
    ExperimentRunner().verbosity(args.verbose).workers(args.workers).out_dir(args.out).run(cfg)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        if args.command == 'validate':
            return _validate(args)
        if args.command == 'aggregate':
            return _aggregate(args)
        return _run(args)
    except PyKCError as e:
        print(f'{type(e).__name__}: {e.message}', file=sys.stderr)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
