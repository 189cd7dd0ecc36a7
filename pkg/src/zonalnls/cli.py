import argparse

from zonalnls.config import EXPERIMENTS

HELP = {
    "selftest": "Run the invariant suites and report pass/fail per suite.",
    "simulate": "Evolve initial data and write the trajectory.",
    "conservation": "Evolve initial data and check mass, energy and Re-integral drift.",
    "convergence": "Halve dt repeatedly and check second-order energy drift.",
    "blowup-dichotomy": "Classify a parameter grid and simulate blow-up and small-data behaviour.",
    "estimate-scan": "Scan multilinear forms over dyadic bands and fit the scaling exponent.",
    "counting-scan": "Count lattice representations over dyadic scales.",
}


def _common_arguments() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)

    # Action (running mode)
    # --------------------------------------------
    action_group = parent.add_argument_group("Action (running mode)")
    action_group.add_argument(
        "--assert",
        dest="assert_checks",
        action="store_true",
        help="Exit with status 1 when any acceptance check fails.",
    )
    action_group.add_argument(
        "--debug",
        action="store_true",
        help="Run in debug mode, with per-step diagnostics in the log.",
    )

    # Environment setup
    # --------------------------------------------
    env_group = parent.add_argument_group("Environment setup")
    env_group.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker threads for independent tasks (overrides the config file).",
    )
    env_group.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Master seed for random initial data (overrides the config file).",
    )

    # Experiment configuration
    # --------------------------------------------
    config_group = parent.add_argument_group("Experiment configuration")
    config_group.add_argument(
        "--config",
        type=str,
        default=None,
        help="Path to a TOML experiment file. Defaults are used when omitted.",
    )

    # Output configuration
    # --------------------------------------------
    output_group = parent.add_argument_group("Output configuration")
    output_group.add_argument(
        "--out",
        type=str,
        default=None,
        help="Root of the output tree; files go to <out>/<experiment>/<run id>.",
    )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zonalnls",
        description="Zonal NLS simulator and estimate verification harness on the 4-sphere.",
    )
    parent = _common_arguments()
    subparsers = parser.add_subparsers(dest="experiment", metavar="experiment", required=True)
    for name in EXPERIMENTS:
        subparsers.add_parser(name, parents=[parent], help=HELP[name], description=HELP[name])
    return parser
