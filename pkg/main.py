import argparse
import os
import sys

# Add src to python path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from utils.config import (ALGORITHMS, FEASIBLE_SETS, FORMATS, GEOMETRIES, load_config, merge_cli_overrides,
                          validate_config)
from utils.errors import MirrorDescentError
from utils.logger import set_default_level, setup_logger
from bench.report import write_report
from bench.runner import BenchConfig, BenchRunner


def build_parser():
    parser = argparse.ArgumentParser(
        description="Switching Mirror Descent benchmark on seeded Fermat-Torricelli-Steiner instances")
    parser.add_argument('--config', default='config.yaml', help="YAML file with bench defaults")
    parser.add_argument('--algorithm', choices=ALGORITHMS)
    parser.add_argument('--eps', action='append', help="Accuracy, decimal or fraction (repeatable)")
    parser.add_argument('--delta', type=float)
    parser.add_argument('--n', type=int)
    parser.add_argument('--r', type=int)
    parser.add_argument('--m', type=int)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--theta0-sq', dest='theta0_sq', type=float)
    parser.add_argument('--geometry', choices=GEOMETRIES)
    parser.add_argument('--set', dest='set', choices=FEASIBLE_SETS)
    parser.add_argument('--paper-start', '--diagonal-start', dest='paper_start', action='store_true', default=None,
                        help="Start from (1/sqrt(n), ..., 1/sqrt(n)) instead of argmin_Q d")
    parser.add_argument('--trials', type=int)
    parser.add_argument('--noise', type=float, help="Subgradient noise amplitude for stochastic rows")
    parser.add_argument('--rounds', type=int)
    parser.add_argument('--format', choices=FORMATS)
    parser.add_argument('--out', help="Report path (stdout when omitted)")
    parser.add_argument('--trace', help="Per-step trace path")
    return parser


def main(argv=None):
    logger = setup_logger()
    args = vars(build_parser().parse_args(argv))
    config_path = args.pop('config')

    try:
        # 1. Load configuration
        config = load_config(config_path)
        config = merge_cli_overrides(config, args)
        validate_config(config)
        set_default_level((config.get('logging') or {}).get('level', 'INFO'))

        # 2. Run bench
        bench_config = BenchConfig.from_config(config)
        rows = BenchRunner(bench_config).run()
        write_report(rows, bench_config.format, bench_config.out)
    except (MirrorDescentError, FileNotFoundError) as e:
        logger.error(f"Bench aborted: {e}")
        return 2
    except Exception as e:
        logger.exception(f"An unexpected error occurred: {e}")
        return 2

    failed = sum(1 for row in rows if row.error)
    if failed:
        logger.warning(f"{failed} of {len(rows)} runs failed")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
