import logging
import os
import sys
import traceback
from pathlib import Path

from zonalnls.cli import build_parser
from zonalnls.config import load_config
from zonalnls.errors import ConfigError, ZonalError
from zonalnls.experiments import run_experiment

logger = logging.getLogger("zonalnls")


def _setup_logging(debug: bool):
    if debug:
        logger.setLevel(logging.DEBUG)
        logging.basicConfig(level=logging.DEBUG)
    else:
        logger.setLevel(logging.INFO)
        logging.basicConfig(level=logging.INFO)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if os.environ.get("ZONALNLS_DEBUG", None) is not None:
        args.debug = True
    _setup_logging(args.debug)

    overrides = {"seed": args.seed, "threads": args.threads, "out": args.out}
    try:
        config = load_config(args.config, args.experiment, overrides)
    except ConfigError as e:
        parser.error(str(e))

    logger.info(f"Experiment: {config.experiment}")
    logger.info(f"Threads: {config.threads}")

    try:
        result = run_experiment(config)
    except ZonalError as e:
        frame = traceback.extract_tb(e.__traceback__)[-1]
        logger.error(f"{config.experiment} failed in {Path(frame.filename).stem}.{frame.name}: {type(e).__name__}: {e}")
        return 1

    failed = [name for name, ok in result.checks.items() if not ok]
    if failed:
        logger.warning(f"Failed checks: {', '.join(failed)}")
    if failed and (args.assert_checks or config.experiment == "selftest"):
        return 1
    return 0


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
