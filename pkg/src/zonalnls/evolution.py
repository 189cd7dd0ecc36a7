import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Union

import torch

from zonalnls.errors import InsufficientRuleError, InvalidParameterError, NonFiniteError
from zonalnls.field import (
    GridField,
    ZonalSpectrum,
    analyze,
    bessel_potential,
    gradient_norm_sq,
    sobolev_norm,
    synthesize,
)
from zonalnls.harmonics import eigenvalues
from zonalnls.quadrature import (
    SPHERE_AREA,
    QuadratureRule,
    gauss_rule,
    integrate,
    nodes_for_degree,
)

logger = logging.getLogger(__name__)

HAMILTONIAN_TOL = 1e-14


@dataclass(frozen=True)
class Hartree:
    """
    i u_t + Delta u = +-((1 - Delta)^{-alpha} |u|^2) u, defocusing (+) unless
    focusing is set.
    """

    alpha: float
    focusing: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidParameterError(f"Hartree alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class Quadratic:
    """i u_t + Delta u = a u^2 + b conj(u)^2 + c |u|^2."""

    a: complex
    b: complex
    c: complex

    @property
    def hamiltonian(self) -> bool:
        return abs(complex(self.c) - 2 * complex(self.a).conjugate()) <= HAMILTONIAN_TOL

    def nonlinearity(self, u: torch.Tensor) -> torch.Tensor:
        return self.a * u * u + self.b * u.conj() * u.conj() + self.c * (u * u.conj())

    def potential(self, u: torch.Tensor) -> torch.Tensor:
        """
        Energy density 2 Re(a u |u|^2) + (2/3) Re(conj(b) u^3), whose
        conj(u)-derivative is the nonlinearity when c = 2 conj(a).
        """
        a, b = complex(self.a), complex(self.b)
        cubic = 2 * a * u * (u * u.conj()) + (2.0 / 3.0) * b.conjugate() * u**3
        return cubic.real


EquationSpec = Union[Hartree, Quadratic]


@dataclass(frozen=True)
class SimConfig:
    dt: float
    T: float
    P: int
    blowup_threshold: float = 1e3
    record_stride: int = 1
    max_halvings: int = 20

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if not self.T > 0:
            raise InvalidParameterError(f"T must be positive, got {self.T}")
        if self.P < 0:
            raise InvalidParameterError(f"P must be nonnegative, got {self.P}")
        if self.record_stride < 1:
            raise InvalidParameterError(f"record_stride must be >= 1, got {self.record_stride}")
        if not self.blowup_threshold > 0:
            raise InvalidParameterError("blowup_threshold must be positive")


@dataclass(frozen=True)
class Diagnostics:
    mass: float
    energy: float
    h1: float
    sup: float
    re_integral: float


class Status(enum.Enum):
    COMPLETED = "completed"
    BLOWUP = "blowup"


@dataclass
class Trajectory:
    times: List[float] = field(default_factory=list)
    records: List[Diagnostics] = field(default_factory=list)
    status: Status = Status.COMPLETED
    blowup_time: Optional[float] = None
    final: Optional[ZonalSpectrum] = None

    def append(self, t: float, record: Diagnostics):
        self.times.append(t)
        self.records.append(record)

    def series(self, name: str) -> torch.Tensor:
        return torch.tensor([getattr(r, name) for r in self.records], dtype=torch.float64)

    def drift(self, name: str) -> float:
        """max_t |q(t) - q(0)|."""
        values = self.series(name)
        return float((values - values[0]).abs().max()) if values.numel() else 0.0

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as f:
            csv_writer = csv.writer(f)
            csv_writer.writerow(["t", "mass", "energy", "h1", "sup", "re_integral", "status"])
            for idx, (t, r) in enumerate(zip(self.times, self.records)):
                last = idx == len(self.times) - 1
                csv_writer.writerow(
                    [
                        repr(t),
                        repr(r.mass),
                        repr(r.energy),
                        repr(r.h1),
                        repr(r.sup),
                        repr(r.re_integral),
                        self.status.value if last else "running",
                    ]
                )
        return path


def dealiasing_rule(max_degree: int) -> QuadratureRule:
    """Smallest Gauss rule exact through degree 3 * max_degree."""
    return gauss_rule(nodes_for_degree(3 * max_degree))


def free_propagate(f: ZonalSpectrum, t: float) -> ZonalSpectrum:
    phase = torch.exp(-1j * t * eigenvalues(f.max_degree).to(torch.complex128))
    return ZonalSpectrum(f.coeffs * phase)


def hartree_potential(u: GridField, alpha: float, max_degree: Optional[int] = None) -> GridField:
    """
    V = (1 - Delta)^{-alpha} |u|^2, with |u|^2 projected onto degrees <= max_degree
    (by default the largest degree the rule dealiases). The imaginary part is
    dropped; it is roundoff only.
    """
    if max_degree is None:
        max_degree = u.rule.exact_degree // 3
    density = GridField((u.values * u.values.conj()).real, u.rule)
    smoothed = bessel_potential(analyze(density, max_degree), -alpha)
    return GridField(synthesize(smoothed, u.rule).values.real, u.rule)


def hartree_substep(
    u: GridField,
    alpha: float,
    dt: float,
    focusing: bool = False,
    max_degree: Optional[int] = None,
) -> GridField:
    potential = hartree_potential(u, alpha, max_degree).values.real
    sign = 1.0 if focusing else -1.0
    return GridField(u.values * torch.exp(sign * 1j * dt * potential), u.rule)


def quadratic_substep(u: GridField, a: complex, b: complex, c: complex, dt: float) -> GridField:
    """One classical RK4 step of the nodewise ODE u' = -i q(u)."""
    eq = Quadratic(a, b, c)

    def rhs(v):
        return -1j * eq.nonlinearity(v)

    y = u.values
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    out = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not bool(torch.isfinite(out).all()):
        raise NonFiniteError(f"quadratic substep produced non-finite values at dt={dt}")
    return GridField(out, u.rule)


def _nonlinear_substep(f: ZonalSpectrum, spec: EquationSpec, dt: float, rule: QuadratureRule):
    u = synthesize(f, rule)
    if isinstance(spec, Hartree):
        u = hartree_substep(u, spec.alpha, dt, spec.focusing, f.max_degree)
    elif isinstance(spec, Quadratic):
        u = quadratic_substep(u, spec.a, spec.b, spec.c, dt)
    else:
        raise InvalidParameterError(f"unknown equation {spec!r}")
    return analyze(u, f.max_degree)


def strang_step(
    f: ZonalSpectrum,
    spec: EquationSpec,
    dt: float,
    rule: Optional[QuadratureRule] = None,
) -> ZonalSpectrum:
    rule = dealiasing_rule(f.max_degree) if rule is None else rule
    if rule.exact_degree < 3 * f.max_degree:
        raise InsufficientRuleError(
            f"splitting at degree {f.max_degree} needs exact degree {3 * f.max_degree}"
        )
    half = free_propagate(f, dt / 2)
    return free_propagate(_nonlinear_substep(half, spec, dt, rule), dt / 2)


def diagnostics(
    f: ZonalSpectrum,
    spec: EquationSpec,
    rule: Optional[QuadratureRule] = None,
) -> Diagnostics:
    rule = dealiasing_rule(f.max_degree) if rule is None else rule
    u = synthesize(f, rule)
    kinetic = gradient_norm_sq(f)

    if isinstance(spec, Hartree):
        density = GridField((u.values * u.values.conj()).real, rule)
        d = analyze(density, f.max_degree).coeffs
        weights = (1 + eigenvalues(f.max_degree)) ** (-spec.alpha)
        interaction = 0.5 * float(torch.sum(weights * d.abs() ** 2))
        energy = kinetic - interaction if spec.focusing else kinetic + interaction
    else:
        energy = kinetic + integrate(rule, spec.potential(u.values)).real

    return Diagnostics(
        mass=f.mass(),
        energy=energy,
        h1=sobolev_norm(f, 1.0),
        sup=u.sup_norm(),
        re_integral=float(f.coeffs[0].real) * math.sqrt(SPHERE_AREA),
    )


def _finite(f: ZonalSpectrum) -> bool:
    return bool(torch.isfinite(f.coeffs).all())


def simulate(
    u0: ZonalSpectrum,
    spec: EquationSpec,
    config: SimConfig,
    record: Optional[Callable[[float, Diagnostics], None]] = None,
) -> Trajectory:
    """
    March Strang steps from u0 to config.T.

    A step whose result is non-finite or reaches the sup-norm threshold is
    retried from the previous state with half the step, at most
    config.max_halvings times over the run; once the budget is spent the
    trajectory ends with status BLOWUP at the last accepted time.

    Args:
        u0 (ZonalSpectrum): initial data, resized to config.P.
        spec (EquationSpec): Hartree or Quadratic.
        config (SimConfig): step, horizon, truncation and detection settings.
        record (Callable, optional): called with (t, Diagnostics) at every
            recorded sample.
    """
    f = u0.resized(config.P)
    rule = dealiasing_rule(config.P)
    trajectory = Trajectory()

    def sample(t, current):
        diag = diagnostics(current, spec, rule)
        trajectory.append(t, diag)
        if record is not None:
            record(t, diag)
        return diag

    first = sample(0.0, f)
    if first.sup >= config.blowup_threshold:
        raise InvalidParameterError(
            f"blowup_threshold {config.blowup_threshold} does not exceed initial sup {first.sup}"
        )

    t, dt, halvings, steps = 0.0, config.dt, 0, 0
    # Stop when the remaining span is roundoff relative to T
    while config.T - t > 1e-12 * config.T:
        step = min(dt, config.T - t)
        try:
            candidate = strang_step(f, spec, step, rule)
            ok = _finite(candidate) and synthesize(candidate, rule).sup_norm() < config.blowup_threshold
        except NonFiniteError:
            ok = False

        if not ok:
            if halvings >= config.max_halvings:
                trajectory.status = Status.BLOWUP
                trajectory.blowup_time = t
                logger.info(f"Blow-up detected at t={t:.6g} after {halvings} step halvings")
                break
            dt /= 2
            halvings += 1
            logger.debug(f"Step rejected at t={t:.6g}, halving to dt={dt:.3g}")
            continue

        f, t, steps = candidate, t + step, steps + 1
        if steps % config.record_stride == 0:
            sample(t, f)

    if trajectory.times[-1] != t:
        sample(t, f)
    trajectory.final = f
    return trajectory
