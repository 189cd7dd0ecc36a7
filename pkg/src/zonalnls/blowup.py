import cmath
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy.optimize import brentq

from zonalnls.errors import (
    AtBlowupError,
    ConditionUndefinedError,
    DegenerateNonlinearityError,
    InvalidParameterError,
    NoGaugeError,
)
from zonalnls.evolution import Quadratic

logger = logging.getLogger(__name__)

CONDITION_TOL = 1e-12
GAUGE_TOL = 1e-12
IMAGINARY_TOL = 1e-9
DIRECTION_SAMPLES = 2048


@dataclass(frozen=True)
class HamiltonianQuadratic:
    """q(u) = a u^2 + b conj(u)^2 + 2 conj(a) |u|^2, with a = A e^{i alpha}, b = B e^{i beta}."""

    a: complex
    b: complex

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", complex(self.b))

    @property
    def c(self) -> complex:
        return 2 * self.a.conjugate()

    @property
    def polar(self) -> Tuple[float, float, float, float]:
        """(A, alpha, B, beta)."""
        A, alpha = cmath.polar(self.a)
        B, beta = cmath.polar(self.b)
        return A, alpha, B, beta

    def q(self, u):
        return self.a * u * u + self.b * np.conj(u) ** 2 + self.c * u * np.conj(u)

    def f(self, theta):
        """Real part of q(e^{i theta}) e^{-i theta}: 3A cos(alpha + theta) + B cos(beta - 3 theta)."""
        A, alpha, B, beta = self.polar
        return 3 * A * np.cos(alpha + theta) + B * np.cos(beta - 3 * theta)

    def f_prime(self, theta):
        A, alpha, B, beta = self.polar
        return -3 * A * np.sin(alpha + theta) + 3 * B * np.sin(beta - 3 * theta)

    def g(self, theta):
        """Imaginary part: -A sin(alpha + theta) + B sin(beta - 3 theta)."""
        A, alpha, B, beta = self.polar
        return -A * np.sin(alpha + theta) + B * np.sin(beta - 3 * theta)

    def equation(self) -> Quadratic:
        return Quadratic(self.a, self.b, self.c)


def condition_holds(a: complex, b: complex) -> bool:
    """conj(a)^2 / a = b, up to 1e-12 max(1, |b|)."""
    a, b = complex(a), complex(b)
    if a == 0:
        raise ConditionUndefinedError("conj(a)^2 / a is undefined for a = 0")
    return abs(a.conjugate() ** 2 / a - b) <= CONDITION_TOL * max(1.0, abs(b))


def gauge_decompose(a: complex, b: complex, checks: int = 100) -> Tuple[complex, float]:
    """
    (omega, c) with |omega| = 1 and c > 0 such that q(omega v) = c omega (Re v)^2.
    """
    a, b = complex(a), complex(b)
    if a == 0 or not condition_holds(a, b):
        raise NoGaugeError(f"no gauge for a={a}, b={b}: condition fails")
    omega = a.conjugate() / abs(a)
    c = 4 * abs(a)

    scale = max(1.0, abs(a), abs(b))
    if abs(c * omega.conjugate() / 4 - a) > GAUGE_TOL * scale or abs(c * omega**3 / 4 - b) > GAUGE_TOL * scale:
        raise NoGaugeError(f"gauge equations fail for a={a}, b={b}")

    generator = torch.Generator().manual_seed(0)
    v = torch.randn(checks, dtype=torch.complex128, generator=generator).numpy()
    nonlinearity = HamiltonianQuadratic(a, b)
    gap = np.abs(nonlinearity.q(omega * v) - c * omega * v.real**2)
    if float(gap.max()) > GAUGE_TOL * scale * max(1.0, float(np.abs(v).max()) ** 2):
        raise NoGaugeError(f"gauge identity fails for a={a}, b={b} (gap {gap.max():.3g})")
    return omega, c


def resonant_direction(a: complex, b: complex) -> Optional[float]:
    """
    A simple zero theta* in [0, 2 pi) of f, found by dense sampling and
    bracketing, at which q(omega) conj(omega) is purely imaginary and nonzero.
    None when f has no simple zero, which happens exactly in the triple-zero
    case A = B, 3 alpha + beta = 2 k pi.
    """
    if complex(a) == 0 and complex(b) == 0:
        raise DegenerateNonlinearityError("a = b = 0: the equation is linear")
    nonlinearity = HamiltonianQuadratic(a, b)

    theta = np.linspace(0.0, 2 * math.pi, DIRECTION_SAMPLES + 1)
    values = nonlinearity.f(theta)
    scale = float(np.abs(values).max())

    for lo, hi, f_lo, f_hi in zip(theta[:-1], theta[1:], values[:-1], values[1:]):
        if f_lo == 0:
            root = lo
        elif f_lo * f_hi < 0:
            root = brentq(nonlinearity.f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            continue
        simple = abs(nonlinearity.f_prime(root)) > 1e-8 * scale
        if simple and abs(nonlinearity.g(root)) > 1e-10:
            return float(root % (2 * math.pi))
    return None


def ode_solution(y0: float, omega: complex, a: complex, b: complex, t: float) -> complex:
    """y(t) = 1 / (1/y0 + i q(omega) conj(omega) t); the PDE solution from omega y0 is omega y(t)."""
    if y0 == 0:
        raise InvalidParameterError("y0 must be nonzero")
    z = HamiltonianQuadratic(a, b).q(complex(omega)) * complex(omega).conjugate()
    denominator = 1 / y0 + 1j * z * t
    if abs(denominator) < 1e-14:
        raise AtBlowupError(f"t={t} is the blow-up time of the constant solution")
    return complex(1 / denominator)


def blowup_time(y0: float, omega: complex, a: complex, b: complex) -> Optional[float]:
    """
    t* = 1 / (kappa y0) when q(omega) conj(omega) = i kappa and kappa y0 > 0;
    None when the constant solution is global forward in time.
    """
    if y0 == 0:
        raise InvalidParameterError("y0 must be nonzero")
    z = complex(HamiltonianQuadratic(a, b).q(complex(omega)) * complex(omega).conjugate())
    if z == 0 or abs(z.real) > IMAGINARY_TOL * abs(z):
        return None
    kappa = z.imag
    if kappa * y0 <= 0:
        return None
    return 1.0 / (kappa * y0)


@dataclass(frozen=True)
class BlowupVerdict:
    a: complex
    b: complex
    condition_holds: bool
    linear: bool = False
    omega: Optional[complex] = None
    c: Optional[float] = None
    theta_star: Optional[float] = None
    kappa: Optional[float] = None

    def witness(self) -> dict:
        if self.linear:
            return {"linear": True}
        if self.omega is not None:
            return {"omega": [self.omega.real, self.omega.imag], "c": self.c}
        return {"theta_star": self.theta_star, "kappa": self.kappa}

    def blowup_data(self, y0_magnitude: float) -> Optional[Tuple[complex, float]]:
        """
        Constant data omega y0 that blows up forward in time along the resonant
        direction, with the sign of y0 chosen so that kappa y0 > 0.
        """
        if self.theta_star is None or not self.kappa:
            return None
        y0 = math.copysign(abs(y0_magnitude), self.kappa)
        return cmath.exp(1j * self.theta_star), y0


def classify(a: complex, b: complex) -> BlowupVerdict:
    """
    Condition verdict with its witness: the gauge (omega, c) when the
    condition holds, the resonant direction and kappa when it fails. a = b = 0
    is the linear equation, global for all data.
    """
    a, b = complex(a), complex(b)
    if a == 0 and b == 0:
        return BlowupVerdict(a, b, False, linear=True)
    holds = condition_holds(a, b) if a != 0 else False
    if holds:
        omega, c = gauge_decompose(a, b)
        return BlowupVerdict(a, b, True, omega=omega, c=c)

    theta = resonant_direction(a, b)
    if theta is None:
        logger.warning(f"Condition fails for a={a}, b={b} but no simple zero was found")
        return BlowupVerdict(a, b, False)
    kappa = HamiltonianQuadratic(a, b).g(theta)
    return BlowupVerdict(a, b, False, theta_star=theta, kappa=float(kappa))


def parameter_grid(
    magnitudes: Sequence[float] = (0.25, 1.0),
    ratios: Sequence[float] = (0.0, 0.5, 1.0, 2.0),
    angles: int = 5,
) -> List[Tuple[complex, complex]]:
    """
    (a, b) pairs with a = A e^{i alpha}, b = r A e^{i beta} over the given
    magnitudes A, ratios r and angles 2 pi k / angles, followed by the
    boundary family b = conj(a)^2 / a for every a.
    """
    if any(not A > 0 for A in magnitudes):
        raise InvalidParameterError(f"magnitudes must be positive, got {list(magnitudes)}")
    if any(r < 0 for r in ratios):
        raise InvalidParameterError(f"ratios must be nonnegative, got {list(ratios)}")
    if angles < 1:
        raise InvalidParameterError(f"angles must be >= 1, got {angles}")
    phases = [2 * math.pi * k / angles for k in range(angles)]
    pairs = [
        (cmath.rect(A, alpha), cmath.rect(r * A, beta))
        for A in magnitudes
        for alpha in phases
        for r in ratios
        for beta in phases
    ]
    for A in magnitudes:
        for alpha in phases:
            a = cmath.rect(A, alpha)
            pairs.append((a, a.conjugate() ** 2 / a))
    return pairs
