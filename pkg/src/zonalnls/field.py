import json
import math
from dataclasses import dataclass
from typing import List, Optional

import torch

from zonalnls.errors import (
    EmptyBandError,
    InsufficientRuleError,
    InvalidParameterError,
    LengthMismatchError,
    RuleMismatchError,
)
from zonalnls.harmonics import eigenvalues, rule_basis
from zonalnls.quadrature import SPHERE_AREA, QuadratureRule

# Every weight, operator and band test uses (1 + mu_p) raised to a power
CONVENTION = "one-plus-mu"


@dataclass(frozen=True, eq=False)
class ZonalSpectrum:
    """Coefficients c_p of a zonal field on the orthonormal basis Z_0..Z_P."""

    coeffs: torch.Tensor

    def __post_init__(self):
        coeffs = torch.as_tensor(self.coeffs).to(torch.complex128).reshape(-1)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def max_degree(self) -> int:
        return self.coeffs.numel() - 1

    @classmethod
    def zeros(cls, max_degree: int) -> "ZonalSpectrum":
        return cls(torch.zeros(max_degree + 1, dtype=torch.complex128))

    @classmethod
    def mode(cls, degree: int, max_degree: Optional[int] = None, amplitude: complex = 1.0):
        """amplitude * Z_degree."""
        max_degree = degree if max_degree is None else max_degree
        coeffs = torch.zeros(max_degree + 1, dtype=torch.complex128)
        coeffs[degree] = amplitude
        return cls(coeffs)

    @classmethod
    def constant(cls, value: complex, max_degree: int) -> "ZonalSpectrum":
        """The field equal to value everywhere; Z_0 = 1 / sqrt(|S^4|)."""
        return cls.mode(0, max_degree, complex(value) * math.sqrt(SPHERE_AREA))

    def resized(self, max_degree: int) -> "ZonalSpectrum":
        """Zero-pad or truncate to a new maximal degree."""
        out = torch.zeros(max_degree + 1, dtype=torch.complex128)
        n = min(max_degree, self.max_degree) + 1
        out[:n] = self.coeffs[:n]
        return ZonalSpectrum(out)

    def __add__(self, other: "ZonalSpectrum") -> "ZonalSpectrum":
        size = max(self.max_degree, other.max_degree)
        return ZonalSpectrum(self.resized(size).coeffs + other.resized(size).coeffs)

    def __mul__(self, scalar) -> "ZonalSpectrum":
        return ZonalSpectrum(self.coeffs * scalar)

    __rmul__ = __mul__

    def support(self) -> torch.Tensor:
        return torch.nonzero(self.coeffs != 0).reshape(-1)

    def l2_norm(self) -> float:
        return float(torch.linalg.vector_norm(self.coeffs))

    def mass(self) -> float:
        return float(torch.sum(self.coeffs.abs() ** 2))

    def to_json(self) -> str:
        return json.dumps(
            {
                "P": self.max_degree,
                "convention": CONVENTION,
                "coeffs": [[c.real, c.imag] for c in self.coeffs.tolist()],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ZonalSpectrum":
        data = json.loads(text)
        if data.get("convention") != CONVENTION:
            raise InvalidParameterError(f"unsupported convention {data.get('convention')!r}")
        coeffs = torch.tensor([complex(re, im) for re, im in data["coeffs"]], dtype=torch.complex128)
        if coeffs.numel() != data["P"] + 1:
            raise LengthMismatchError(f"header says P={data['P']}, got {coeffs.numel()} coefficients")
        return cls(coeffs)


@dataclass(frozen=True, eq=False)
class GridField:
    """Complex samples of a zonal field at the nodes of a quadrature rule."""

    values: torch.Tensor
    rule: QuadratureRule

    def __post_init__(self):
        values = torch.as_tensor(self.values).to(torch.complex128).reshape(-1)
        if values.numel() != len(self.rule):
            raise LengthMismatchError(
                f"{values.numel()} values for a rule with {len(self.rule)} nodes"
            )
        object.__setattr__(self, "values", values)

    def sup_norm(self) -> float:
        return float(self.values.abs().max()) if self.values.numel() else 0.0


@dataclass(frozen=True)
class DyadicBand:
    """Degrees p with N <= sqrt(1 + mu_p) <= 2N."""

    N: float

    def __post_init__(self):
        if self.N <= 0:
            raise InvalidParameterError(f"dyadic scale must be positive, got {self.N}")

    def contains(self, p: int) -> bool:
        weight = 1 + p * (p + 3)
        return self.N**2 <= weight <= 4 * self.N**2

    def degrees(self) -> List[int]:
        out, p = [], 0
        while 1 + p * (p + 3) <= 4 * self.N**2:
            if self.contains(p):
                out.append(p)
            p += 1
        return out

    @property
    def max_degree(self) -> int:
        degrees = self.degrees()
        if not degrees:
            raise EmptyBandError(f"no degree lies in the band N={self.N}")
        return degrees[-1]


def _bessel_weights(max_degree: int, exponent: float) -> torch.Tensor:
    return (1 + eigenvalues(max_degree)) ** exponent


def _require_rule(rule: QuadratureRule, degree: int, what: str):
    if rule.exact_degree < degree:
        raise InsufficientRuleError(
            f"{what} needs a rule exact to degree {degree}, rule has {rule.exact_degree}"
        )


def synthesize(f: ZonalSpectrum, rule: QuadratureRule) -> GridField:
    _require_rule(rule, 2 * f.max_degree, "synthesis")
    basis = rule_basis(rule, f.max_degree).to(torch.complex128)
    return GridField(f.coeffs @ basis, rule)


def analyze(g: GridField, max_degree: int) -> ZonalSpectrum:
    """c_p = int g Z_p dx for p = 0..max_degree, by the rule the field lives on."""
    _require_rule(g.rule, 2 * max_degree, "analysis")
    basis = rule_basis(g.rule, max_degree).to(torch.complex128)
    weighted = g.values * g.rule.weights.to(torch.complex128)
    return ZonalSpectrum(basis @ weighted)


def dyadic_project(f: ZonalSpectrum, band: DyadicBand) -> ZonalSpectrum:
    weight = 1 + eigenvalues(f.max_degree)
    keep = (weight >= band.N**2) & (weight <= 4 * band.N**2)
    return ZonalSpectrum(torch.where(keep, f.coeffs, torch.zeros_like(f.coeffs)))


def bessel_potential(f: ZonalSpectrum, exponent: float) -> ZonalSpectrum:
    """(1 - Delta)^exponent; exponent = -alpha gives the Hartree smoothing operator."""
    return ZonalSpectrum(f.coeffs * _bessel_weights(f.max_degree, exponent))


def sobolev_norm(f: ZonalSpectrum, s: float) -> float:
    weights = _bessel_weights(f.max_degree, s)
    return math.sqrt(float(torch.sum(weights * f.coeffs.abs() ** 2)))


def gradient_norm_sq(f: ZonalSpectrum) -> float:
    """int |grad u|^2 = sum mu_p |c_p|^2."""
    return float(torch.sum(eigenvalues(f.max_degree) * f.coeffs.abs() ** 2))


def pointwise_product(u: GridField, v: GridField) -> GridField:
    if u.rule is not v.rule:
        raise RuleMismatchError("fields live on different quadrature rules")
    return GridField(u.values * v.values, u.rule)


def dealiased_product(u: GridField, v: GridField, max_degree: int) -> ZonalSpectrum:
    """
    Spectrum of u * v truncated at max_degree. With band-limited factors of
    degree <= max_degree the product has degree <= 2 max_degree, and projecting
    it onto Z_p needs exactness through 3 max_degree.
    """
    _require_rule(u.rule, 3 * max_degree, "dealiased product")
    return analyze(pointwise_product(u, v), max_degree)


def random_localized(
    band: DyadicBand,
    seed: int,
    max_degree: Optional[int] = None,
) -> ZonalSpectrum:
    """
    Unit-L^2 spectrum with i.i.d. complex Gaussian coefficients on the band,
    deterministic in seed.
    """
    degrees = band.degrees()
    if not degrees:
        raise EmptyBandError(f"no degree lies in the band N={band.N}")
    max_degree = degrees[-1] if max_degree is None else max_degree
    if max_degree < degrees[-1]:
        raise InvalidParameterError(
            f"band N={band.N} reaches degree {degrees[-1]} > max_degree {max_degree}"
        )

    generator = torch.Generator().manual_seed(int(seed))
    draws = torch.randn(len(degrees), dtype=torch.complex128, generator=generator)
    coeffs = torch.zeros(max_degree + 1, dtype=torch.complex128)
    coeffs[torch.tensor(degrees)] = draws / torch.linalg.vector_norm(draws)
    return ZonalSpectrum(coeffs)
