import dataclasses
import hashlib
import json
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from zonalnls.errors import ConfigError, ZonalError
from zonalnls.estimates import SCAN_KINDS, TRILINEAR_PATTERNS
from zonalnls.evolution import EquationSpec, Hartree, Quadratic, SimConfig
from zonalnls.field import DyadicBand, ZonalSpectrum, random_localized, sobolev_norm

EXPERIMENTS = (
    "selftest",
    "simulate",
    "conservation",
    "convergence",
    "blowup-dichotomy",
    "estimate-scan",
    "counting-scan",
)


def _complex(value, key: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ConfigError(f"{key}: expected a number or [re, im], got {value!r}")


def _pair(z: Optional[complex]):
    return None if z is None else [z.real, z.imag]


@dataclass(frozen=True)
class EquationConfig:
    kind: str = "hartree"
    alpha: float = 1.0
    focusing: bool = False
    a: complex = 0j
    b: complex = 0j
    c: Optional[complex] = None  # defaults to 2 conj(a)

    def build(self) -> EquationSpec:
        if self.kind == "hartree":
            return Hartree(self.alpha, self.focusing)
        c = 2 * self.a.conjugate() if self.c is None else self.c
        return Quadratic(self.a, self.b, c)

    def echo(self):
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "focusing": self.focusing,
            "a": _pair(self.a),
            "b": _pair(self.b),
            "c": _pair(self.c),
        }


@dataclass(frozen=True)
class InitialConfig:
    modes: Tuple[Tuple[int, float, float], ...] = ((1, 1.0, 0.0),)
    constant: Optional[complex] = None
    random_band: Optional[float] = None
    h1_norm: Optional[float] = None

    def build(self, max_degree: int, seed: int) -> ZonalSpectrum:
        u0 = ZonalSpectrum.zeros(max_degree)
        for degree, re, im in self.modes:
            if degree > max_degree:
                raise ConfigError(f"initial.modes: degree {degree} exceeds P={max_degree}")
            u0 = u0 + ZonalSpectrum.mode(degree, max_degree, complex(re, im))
        if self.constant is not None:
            u0 = u0 + ZonalSpectrum.constant(self.constant, max_degree)
        if self.random_band is not None:
            u0 = u0 + random_localized(DyadicBand(self.random_band), seed, max_degree)
        if self.h1_norm is not None:
            norm = sobolev_norm(u0, 1.0)
            if norm == 0:
                raise ConfigError("initial.h1_norm: cannot rescale zero data")
            u0 = u0 * (self.h1_norm / norm)
        return u0

    def echo(self):
        return {
            "modes": [list(m) for m in self.modes],
            "constant": _pair(self.constant),
            "random_band": self.random_band,
            "h1_norm": self.h1_norm,
        }


@dataclass(frozen=True)
class DiscretizationConfig:
    P: int = 32
    dt: float = 1e-3
    T: float = 1.0
    blowup_threshold: float = 1e3
    record_stride: int = 10
    refinements: int = 1

    def sim_config(self, dt: Optional[float] = None) -> SimConfig:
        return SimConfig(
            dt=self.dt if dt is None else dt,
            T=self.T,
            P=self.P,
            blowup_threshold=self.blowup_threshold,
            record_stride=self.record_stride,
        )


@dataclass(frozen=True)
class ChecksConfig:
    """Acceptance thresholds applied under --assert; unset ones are not checked."""

    mass_drift: Optional[float] = None
    energy_drift: Optional[float] = None
    re_integral_drift: Optional[float] = None
    h1_growth: Optional[float] = None
    order_ratio: Tuple[float, float] = (3.4, 4.6)


@dataclass(frozen=True)
class ScanConfig:
    kind: str = "zonal_L1"
    alpha: float = 0.0
    schedule: Tuple[Tuple[float, ...], ...] = ((4, 64, 64), (8, 64, 64), (16, 64, 64), (32, 64, 64))
    draws: int = 1
    pattern: str = "u1u2ū3"
    slope_bound: float = 0.65


@dataclass(frozen=True)
class CountingConfig:
    scales: Tuple[int, ...] = tuple(2**k for k in range(4, 12))
    sigmas: Tuple[int, ...] = (1, -1)
    exclude_degenerate: bool = True
    bound: float = 0.4


@dataclass(frozen=True)
class DichotomyConfig:
    angles: int = 5
    magnitudes: Tuple[float, ...] = (0.25, 1.0)
    ratios: Tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    blowup_pairs: int = 10
    holding_pairs: int = 10
    y0: float = 0.5
    steps_to_blowup: int = 2000
    rel_gap: float = 0.02
    small_h1: float = 0.05
    small_T: float = 50.0
    small_dt: float = 1e-2
    small_P: int = 8
    h1_growth: float = 10.0


@dataclass(frozen=True)
class SelftestConfig:
    tensor_cache: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    out: str = "out"
    threads: int = 1
    window_width: float = 1.0
    equation: EquationConfig = field(default_factory=EquationConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    counting: CountingConfig = field(default_factory=CountingConfig)
    dichotomy: DichotomyConfig = field(default_factory=DichotomyConfig)
    selftest: SelftestConfig = field(default_factory=SelftestConfig)

    def echo(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data["equation"] = self.equation.echo()
        data["initial"] = self.initial.echo()
        return json.loads(json.dumps(data))

    def run_id(self) -> str:
        """First 12 hex digits of the SHA-1 of the canonical (config, seed) JSON."""
        canonical = json.dumps({"config": self.echo(), "seed": self.seed}, sort_keys=True)
        return hashlib.sha1(canonical.encode()).hexdigest()[:12]

    def output_dir(self) -> Path:
        return Path(self.out) / self.experiment / self.run_id()


SECTIONS = {
    "equation": EquationConfig,
    "initial": InitialConfig,
    "discretization": DiscretizationConfig,
    "checks": ChecksConfig,
    "scan": ScanConfig,
    "counting": CountingConfig,
    "dichotomy": DichotomyConfig,
    "selftest": SelftestConfig,
}
TOP_LEVEL = {"experiment", "seed", "out", "threads", "window_width"}


def _coerce(name: str, key: str, value):
    """Convert TOML values to the field types the dataclasses expect."""
    if key in ("a", "b", "c", "constant"):
        return _complex(value, f"{name}.{key}")
    if key == "modes":
        return tuple((int(m[0]), float(m[1]), float(m[2]) if len(m) > 2 else 0.0) for m in value)
    if key == "schedule":
        return tuple(tuple(float(n) for n in entry) for entry in value)
    if key in ("scales", "sigmas"):
        return tuple(int(n) for n in value)
    if key in ("magnitudes", "ratios", "order_ratio"):
        return tuple(float(x) for x in value)
    return value


def _build_section(cls, name: str, data: Dict[str, Any]):
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {name}.{key}")
    return cls(**{k: _coerce(name, k, v) for k, v in data.items()})


def validate(config: ExperimentConfig) -> ExperimentConfig:
    def require(ok: bool, message: str):
        if not ok:
            raise ConfigError(message)

    require(config.experiment in EXPERIMENTS, f"unknown experiment {config.experiment!r}")
    require(isinstance(config.seed, int) and config.seed >= 0, "seed must be a nonnegative integer")
    require(config.threads >= 1, "threads must be >= 1")
    require(config.window_width > 0, "window_width must be positive")

    eq = config.equation
    require(eq.kind in ("hartree", "quadratic"), f"equation.kind must be hartree or quadratic, got {eq.kind!r}")
    if eq.kind == "hartree":
        require(eq.alpha > 0, "equation.alpha must be positive")

    disc = config.discretization
    require(isinstance(disc.P, int) and disc.P >= 0, "discretization.P must be a nonnegative integer")
    require(disc.dt > 0 and disc.T > 0, "discretization.dt and discretization.T must be positive")
    require(disc.blowup_threshold > 0, "discretization.blowup_threshold must be positive")
    require(disc.record_stride >= 1, "discretization.record_stride must be >= 1")
    require(disc.refinements >= 1, "discretization.refinements must be >= 1")

    lo, hi = config.checks.order_ratio
    require(0 < lo <= hi, "checks.order_ratio must be an increasing positive pair")

    scan = config.scan
    require(scan.kind in SCAN_KINDS, f"scan.kind must be one of {SCAN_KINDS}, got {scan.kind!r}")
    require(len(scan.schedule) > 0, "scan.schedule must not be empty")
    require(scan.draws >= 1, "scan.draws must be >= 1")
    require(scan.pattern in TRILINEAR_PATTERNS, f"scan.pattern must be one of {list(TRILINEAR_PATTERNS)}")
    require(scan.slope_bound > 0, "scan.slope_bound must be positive")

    counting = config.counting
    require(all(n >= 1 for n in counting.scales), "counting.scales must be >= 1")
    require(set(counting.sigmas) <= {1, -1}, "counting.sigmas must be +1 or -1")

    dich = config.dichotomy
    require(dich.angles >= 1, "dichotomy.angles must be >= 1")
    require(
        len(dich.magnitudes) > 0 and all(A > 0 for A in dich.magnitudes),
        "dichotomy.magnitudes must be positive",
    )
    require(all(r >= 0 for r in dich.ratios), "dichotomy.ratios must be nonnegative")
    require(dich.y0 > 0 and dich.small_h1 > 0, "dichotomy.y0 and small_h1 must be positive")
    require(dich.steps_to_blowup >= 10, "dichotomy.steps_to_blowup must be >= 10")
    return config


def load_config(
    path: Optional[str],
    experiment: str,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Read a TOML experiment file (or start from defaults), apply command-line
    overrides, and validate everything before any computation runs.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e

    file_experiment = data.pop("experiment", experiment)
    if file_experiment != experiment:
        raise ConfigError(f"config is for {file_experiment!r}, not {experiment!r}")

    top, sections = {}, {}
    for key, value in data.items():
        if key in SECTIONS:
            sections[key] = _build_section(SECTIONS[key], key, value)
        elif key in TOP_LEVEL:
            top[key] = value
        else:
            raise ConfigError(f"unknown key {key}")
    for key, value in (overrides or {}).items():
        if value is not None:
            top[key] = value

    try:
        config = ExperimentConfig(experiment=experiment, **top, **sections)
        return validate(config)
    except ConfigError:
        raise
    except (TypeError, ValueError, ZonalError) as e:
        raise ConfigError(str(e)) from e


def initial_data(config: ExperimentConfig) -> ZonalSpectrum:
    return config.initial.build(config.discretization.P, config.seed)

