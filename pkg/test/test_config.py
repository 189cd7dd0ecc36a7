import pytest

from zonalnls.config import initial_data, load_config
from zonalnls.errors import ConfigError
from zonalnls.evolution import Hartree, Quadratic
from zonalnls.field import sobolev_norm


def _write(tmp_path, text):
    path = tmp_path / "experiment.toml"
    path.write_text(text)
    return str(path)


def test_defaults():
    config = load_config(None, "simulate")
    assert config.seed == 0
    assert config.threads == 1
    assert config.discretization.P == 32
    assert isinstance(config.equation.build(), Hartree)


def test_overrides_win_over_file(tmp_path):
    path = _write(tmp_path, 'experiment = "simulate"\nseed = 3\nthreads = 2\n')
    config = load_config(path, "simulate", {"seed": 9, "threads": None})
    assert config.seed == 9
    assert config.threads == 2


def test_quadratic_equation_from_toml(tmp_path):
    path = _write(
        tmp_path,
        """
experiment = "conservation"

[equation]
kind = "quadratic"
a = [0.25, 0.0]
b = 0.25

[initial]
modes = [[0, 0.1], [2, 0.0, 0.05]]

[discretization]
P = 8
""",
    )
    config = load_config(path, "conservation")
    spec = config.equation.build()
    assert isinstance(spec, Quadratic)
    assert spec.c == pytest.approx(0.5)
    u0 = initial_data(config)
    assert u0.max_degree == 8
    assert complex(u0.coeffs[2]) == pytest.approx(0.05j)


def test_h1_rescaling(tmp_path):
    path = _write(tmp_path, "[initial]\nrandom_band = 2\nh1_norm = 0.05\n[discretization]\nP = 8\n")
    config = load_config(path, "simulate")
    assert sobolev_norm(initial_data(config), 1.0) == pytest.approx(0.05)


@pytest.mark.parametrize(
    "text",
    [
        "bogus = 1\n",
        "[equation]\nkind = 'cubic'\n",
        "[equation]\nalpha = 0.0\n",
        "[discretization]\ndt = -1.0\n",
        "[discretization]\nspeed = 2\n",
        "[scan]\nkind = 'quintic'\n",
        "[counting]\nsigmas = [2]\n",
        "[dichotomy]\nmagnitudes = [0.0, 1.0]\n",
        "[dichotomy]\nratios = [-1.0]\n",
        "[equation]\na = [1, 2, 3]\nkind = 'quadratic'\n",
        "[initial]\nmodes = [[40, 1.0]]\n[discretization]\nP = 8\n",
        "experiment = 'simulate'\n[discretization\n",
    ],
)
def test_invalid_configs(tmp_path, text):
    path = _write(tmp_path, text)
    with pytest.raises(ConfigError):
        config = load_config(path, "simulate")
        initial_data(config)


def test_experiment_mismatch(tmp_path):
    path = _write(tmp_path, 'experiment = "counting-scan"\n')
    with pytest.raises(ConfigError):
        load_config(path, "simulate")


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/experiment.toml", "simulate")


def test_run_id(tmp_path):
    first = load_config(None, "counting-scan", {"seed": 1})
    second = load_config(None, "counting-scan", {"seed": 1})
    third = load_config(None, "counting-scan", {"seed": 2})
    assert first.run_id() == second.run_id()
    assert first.run_id() != third.run_id()
    assert len(first.run_id()) == 12
    assert first.output_dir().parts[-2:] == ("counting-scan", first.run_id())
