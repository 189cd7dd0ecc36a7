import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import torch

from zonalnls.errors import InvalidParameterError, LengthMismatchError

# |S^3|, the factor produced by integrating out the three angles orthogonal to the pole
S3_AREA = 2 * math.pi**2
SPHERE_AREA = 8 * math.pi**2 / 3


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Quadrature for zonal integrands on S^4. A zonal integral reduces to
    2 pi^2 * int_0^pi f(theta) sin^3(theta) d(theta); the weights already carry
    the full measure factor, so integrating 1 returns the surface area 8 pi^2 / 3.

    Args:
        nodes (torch.Tensor): polar angles in (0, pi), strictly increasing.
        weights (torch.Tensor): positive weights, one per node.
        exact_degree (int): largest degree of a polynomial in cos(theta)
            integrated exactly against the measure.
        panels (int, optional): number of uniform theta panels for composite
            rules, None for a single Gauss rule.
        per_panel (int, optional): nodes per panel for composite rules.
        breakpoints (tuple, optional): extra panel edges of a composite rule.
    """

    nodes: torch.Tensor
    weights: torch.Tensor
    exact_degree: int
    panels: Optional[int] = None
    per_panel: Optional[int] = None
    breakpoints: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise LengthMismatchError(
                f"{self.nodes.numel()} nodes but {self.weights.numel()} weights"
            )

    def __len__(self):
        return self.nodes.numel()

    @property
    def cos_nodes(self) -> torch.Tensor:
        return torch.cos(self.nodes)

    @property
    def is_composite(self) -> bool:
        return self.panels is not None

    def refined(self) -> "QuadratureRule":
        if not self.is_composite:
            raise InvalidParameterError("only composite rules can be refined")
        return composite_rule(2 * self.panels, self.per_panel, self.breakpoints)

    def digest(self) -> bytes:
        h = hashlib.sha256()
        h.update(self.nodes.numpy().astype("<f8").tobytes())
        h.update(self.weights.numpy().astype("<f8").tobytes())
        return h.digest()


def _golub_welsch(off_diagonal: torch.Tensor, mu0: float, n: int):
    # Symmetric orthogonal-polynomial weights have a zero diagonal in the Jacobi matrix
    jacobi = torch.zeros((n, n), dtype=torch.float64)
    if n > 1:
        jacobi += torch.diag(off_diagonal, -1) + torch.diag(off_diagonal, 1)
    x, vectors = torch.linalg.eigh(jacobi)
    w = mu0 * vectors[0, :] ** 2
    return x, w


@lru_cache(maxsize=64)
def legendre_rule(n: int):
    """Gauss-Legendre nodes (ascending) and weights on [-1, 1]."""
    if n < 1:
        raise InvalidParameterError(f"need at least one node, got {n}")
    k = torch.arange(1, n, dtype=torch.float64)
    beta = torch.sqrt(k**2 / (4 * k**2 - 1))
    return _golub_welsch(beta, 2.0, n)


@lru_cache(maxsize=64)
def gauss_rule(n: int) -> QuadratureRule:
    """
    n-point Gauss rule for the weight (1 - x^2) on [-1, 1] with x = cos(theta),
    i.e. Gauss-Gegenbauer of order 3/2, exact for polynomials in cos(theta)
    of degree 2n - 1.
    """
    if n < 1:
        raise InvalidParameterError(f"need at least one node, got {n}")
    k = torch.arange(1, n, dtype=torch.float64)
    beta = torch.sqrt(k * (k + 2) / ((2 * k + 1) * (2 * k + 3)))
    x, w = _golub_welsch(beta, 4.0 / 3.0, n)

    # Ascending x is descending theta
    x = torch.flip(x, dims=(0,))
    w = torch.flip(w, dims=(0,))
    return QuadratureRule(
        nodes=torch.arccos(x.clamp(-1.0, 1.0)),
        weights=S3_AREA * w,
        exact_degree=2 * n - 1,
    )


@lru_cache(maxsize=64)
def composite_rule(panels: int, per_panel: int, breakpoints: Tuple[float, ...] = ()) -> QuadratureRule:
    """
    Piecewise Gauss rule on a uniform partition of [0, pi] in theta.

    Each panel [t_k, t_{k+1}] is mapped to its x = cos(theta) interval and
    integrated with Gauss-Legendre against (1 - x^2), so a panel is exact for
    polynomials in cos(theta) of degree 2 * per_panel - 3 while the partition
    stays uniform in theta and resolves the poles. Extra breakpoints (polar
    angles) split the panels they fall in; placing them at the kinks of an
    integrand such as |Z_p Z_q Z_l| leaves every piece smooth.
    """
    if panels < 1:
        raise InvalidParameterError(f"need at least one panel, got {panels}")
    if per_panel < 2:
        raise InvalidParameterError(f"need at least two nodes per panel, got {per_panel}")
    if any(not 0.0 < b < math.pi for b in breakpoints):
        raise InvalidParameterError("breakpoints must lie strictly inside (0, pi)")

    ref_x, ref_w = legendre_rule(per_panel)
    edges = torch.linspace(0.0, math.pi, panels + 1, dtype=torch.float64)
    if breakpoints:
        edges = torch.cat([edges, torch.tensor(breakpoints, dtype=torch.float64)]).sort().values
        edges = edges[torch.cat([torch.tensor([True]), torch.diff(edges) > 1e-13])]
    upper = torch.cos(edges[:-1])  # x at the panel start (theta small)
    lower = torch.cos(edges[1:])

    half = (upper - lower)[:, None] / 2
    mid = (upper + lower)[:, None] / 2
    # flip the reference nodes so theta increases inside every panel
    x = mid + half * torch.flip(ref_x, dims=(0,))[None, :]
    w = half * torch.flip(ref_w, dims=(0,))[None, :] * (1 - x**2)

    return QuadratureRule(
        nodes=torch.arccos(x.reshape(-1).clamp(-1.0, 1.0)),
        weights=S3_AREA * w.reshape(-1),
        exact_degree=2 * per_panel - 3,
        panels=panels,
        per_panel=per_panel,
        breakpoints=tuple(breakpoints),
    )


def integrate(rule: QuadratureRule, values) -> complex:
    values = torch.as_tensor(values)
    values = values.to(torch.complex128 if values.is_complex() else torch.float64)
    if values.numel() != len(rule):
        raise LengthMismatchError(
            f"expected {len(rule)} values, got {values.numel()}"
        )
    return complex(torch.sum(rule.weights.to(values.dtype) * values.reshape(-1)).item())


def weighted_sum(rule: QuadratureRule, values: torch.Tensor) -> torch.Tensor:
    """Batched integrate over the last axis, keeping torch types."""
    if values.shape[-1] != len(rule):
        raise LengthMismatchError(
            f"expected {len(rule)} values, got {values.shape[-1]}"
        )
    return values @ rule.weights.to(values.dtype)


def nodes_for_degree(degree: int) -> int:
    """Smallest Gauss rule size integrating polynomials of the given degree."""
    return max(1, (degree + 2) // 2)
