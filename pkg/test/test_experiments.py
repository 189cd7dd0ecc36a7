import dataclasses
import json
import tomllib
from pathlib import Path

import pytest

from zonalnls.cli import build_parser
from zonalnls.config import load_config
from zonalnls.experiments import run_experiment
from zonalnls.harmonics import save_tensor, triple_product_tensor
from zonalnls.main import main
from zonalnls.selftest import SuiteResult, run_selftest, tensor_cache_suite


def _config(tmp_path, experiment, text=""):
    path = tmp_path / "experiment.toml"
    path.write_text(text)
    return load_config(str(path), experiment, {"out": str(tmp_path / "out")})


def _manifest(result):
    return json.loads((result.output_dir / "manifest.json").read_text())


def test_conservation_run(tmp_path):
    config = _config(
        tmp_path,
        "conservation",
        """
[initial]
modes = [[1, 1.0], [2, 0.0, 0.5]]

[discretization]
P = 8
dt = 1e-2
T = 0.1

[checks]
mass_drift = 1e-10
""",
    )
    result = run_experiment(config)
    assert result.passed, result.checks
    assert {"mass_drift", "completed"} <= set(result.checks)
    assert (result.output_dir / "trajectory.csv").exists()
    drifts = json.loads((result.output_dir / "conservation.json").read_text())
    assert drifts["status"] == "completed"

    manifest = _manifest(result)
    assert {"experiment", "config_echo", "seed", "run_id", "versions", "started", "finished"} <= set(manifest)
    assert manifest["run_id"] == config.run_id()
    assert result.output_dir == tmp_path / "out" / "conservation" / config.run_id()


def test_counting_scan_run(tmp_path):
    config = _config(tmp_path, "counting-scan", "[counting]\nscales = [4, 8]\nbound = 2.0\n")
    result = run_experiment(config)
    assert result.checks == {"scaling": True}
    lines = (result.output_dir / "counting.csv").read_text().splitlines()
    assert lines[0] == "N,sigma,M_star,max_count,excluded_degenerate"
    assert len(lines) == 5


def test_blowup_dichotomy_run(tmp_path):
    config = _config(
        tmp_path,
        "blowup-dichotomy",
        """
[dichotomy]
angles = 1
magnitudes = [1.0]
ratios = [0.0]
small_T = 1.0
""",
    )
    result = run_experiment(config)
    assert result.passed, result.checks
    report = json.loads((result.output_dir / "dichotomy.json").read_text())
    assert report["pairs"] == 2
    assert report["disagreements"] == []
    (trial,) = report["blowup"]
    assert trial["closed_form_t_star"] == pytest.approx(2.0)
    assert trial["rel_gap"] < 0.02
    (small,) = report["small_data"]
    assert small["condition_holds"]


def test_tensor_cache_integrity(tmp_path):
    path = save_tensor(triple_product_tensor(6), tmp_path / "tensor.bin")
    suite = SuiteResult("tensor")
    tensor_cache_suite(suite, tensor_cache=str(path))
    assert suite.passed, suite.failures

    data = bytearray(path.read_bytes())
    data[-8:] = b"\xff" * 8
    path.write_bytes(bytes(data))
    suite = SuiteResult("tensor")
    tensor_cache_suite(suite, tensor_cache=str(path))
    assert not suite.passed
    assert suite.failures[0].startswith("tensor_cache_integrity")


@pytest.mark.slow
def test_selftest_is_deterministic():
    first = run_selftest(threads=2).to_dict()
    second = run_selftest(threads=1).to_dict()
    assert first == second
    assert first["passed"], first


def test_parser():
    parser = build_parser()
    args = parser.parse_args(["conservation", "--config", "c.toml", "--seed", "4", "--assert"])
    assert args.experiment == "conservation"
    assert args.config == "c.toml"
    assert args.seed == 4
    assert args.assert_checks
    assert not args.debug
    assert args.threads is None

    with pytest.raises(SystemExit):
        parser.parse_args([])
    with pytest.raises(SystemExit):
        parser.parse_args(["warp-drive"])


def test_main_rejects_bad_config(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[discretization]\ndt = 0.0\n")
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--config", str(path), "--out", str(tmp_path)])
    assert e.value.code == 2


def test_main_counting_scan(tmp_path):
    path = tmp_path / "counting.toml"
    path.write_text("[counting]\nscales = [4]\nbound = 2.0\n")
    assert main(["counting-scan", "--config", str(path), "--out", str(tmp_path), "--assert"]) == 0
    assert list((tmp_path / "counting-scan").glob("*/counting.csv"))


def test_main_rejects_zero_magnitude(tmp_path):
    path = tmp_path / "dichotomy.toml"
    path.write_text("[dichotomy]\nmagnitudes = [0.0]\n")
    with pytest.raises(SystemExit) as e:
        main(["blowup-dichotomy", "--config", str(path), "--out", str(tmp_path)])
    assert e.value.code == 2


SHIPPED = sorted((Path(__file__).parents[1] / "experiments").glob("*.toml"))


def _shipped(path, tmp_path):
    with open(path, "rb") as f:
        experiment = tomllib.load(f)["experiment"]
    return load_config(str(path), experiment, {"out": str(tmp_path / "out")})


def _reduced(config):
    disc = config.discretization
    if config.experiment == "conservation":
        disc = dataclasses.replace(disc, P=min(disc.P, 8), T=10 * disc.dt)
    elif config.experiment == "convergence":
        disc = dataclasses.replace(disc, T=0.2, refinements=1)
    dichotomy = dataclasses.replace(
        config.dichotomy, angles=2, blowup_pairs=2, holding_pairs=2, small_T=1.0
    )
    counting = dataclasses.replace(config.counting, scales=config.counting.scales[:2])
    scan = dataclasses.replace(config.scan, schedule=config.scan.schedule[:3], draws=1)
    return dataclasses.replace(
        config, discretization=disc, dichotomy=dichotomy, counting=counting, scan=scan
    )


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
def test_shipped_config_runs(path, tmp_path):
    config = _reduced(_shipped(path, tmp_path))
    result = run_experiment(config)
    assert result.checks
    assert (result.output_dir / "manifest.json").exists()
    assert result.files and all(f.exists() for f in result.files)
    if config.experiment == "estimate-scan":
        fit = json.loads((result.output_dir / "fit.json").read_text())
        assert fit["n_samples"] == 3
    if config.experiment == "convergence":
        lines = (result.output_dir / "convergence.csv").read_text().splitlines()
        assert len(lines) == 3


def test_shipped_scan_schedules_are_not_degenerate():
    for path in SHIPPED:
        with open(path, "rb") as f:
            data = tomllib.load(f)
        if data["experiment"] != "estimate-scan":
            continue
        assert len({min(entry) for entry in data["scan"]["schedule"]}) >= 3, path.name
        assert 0 < data["scan"]["slope_bound"] <= 0.65, path.name


def test_focusing_config_matches_long_run():
    path = Path(__file__).parents[1] / "experiments" / "focusing_hartree.toml"
    config = load_config(str(path), "conservation")
    assert config.equation.focusing
    assert config.equation.alpha == pytest.approx(1.5)
    assert config.initial.random_band == 4
    assert config.initial.h1_norm == pytest.approx(1.0)
    assert config.discretization.T == pytest.approx(20.0)
    assert config.checks.h1_growth == pytest.approx(10.0)


@pytest.mark.slow
@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
def test_shipped_config_passes(path, tmp_path):
    result = run_experiment(_shipped(path, tmp_path))
    assert result.passed, result.checks
