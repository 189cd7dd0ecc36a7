import hashlib
import logging
import math
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch
from scipy.optimize import minimize_scalar

from zonalnls.errors import (
    InsufficientRuleError,
    InvalidParameterError,
    TensorCacheError,
)
from zonalnls.quadrature import QuadratureRule, gauss_rule, nodes_for_degree
from zonalnls.sweep import parallel_map

logger = logging.getLogger(__name__)

# Gegenbauer order (d - 1) / 2 on S^4
LAMBDA = 1.5


def eigenvalue(p: int) -> int:
    """mu_p = p (p + 3), eigenvalue of -Delta on degree-p harmonics of S^4."""
    return p * (p + 3)


def eigenvalues(max_degree: int) -> torch.Tensor:
    p = torch.arange(max_degree + 1, dtype=torch.float64)
    return p * (p + 3)


def gegenbauer(p: int, x):
    """C_p^{3/2}(x) by the forward three-term recurrence."""
    if p < 0:
        raise InvalidParameterError(f"degree must be nonnegative, got {p}")
    prev, cur = 1.0, 3.0 * x
    if p == 0:
        return prev + 0.0 * x
    for n in range(2, p + 1):
        prev, cur = cur, (2 * x * (n + LAMBDA - 1) * cur - (n + 2 * LAMBDA - 2) * prev) / n
    return cur


def gegenbauer_table(max_degree: int, x: torch.Tensor) -> torch.Tensor:
    """All C_p^{3/2}(x) for p = 0..max_degree in one sweep, shape (max_degree + 1, len(x))."""
    x = torch.as_tensor(x, dtype=torch.float64)
    table = torch.empty((max_degree + 1,) + tuple(x.shape), dtype=torch.float64)
    table[0] = 1.0
    if max_degree >= 1:
        table[1] = 3.0 * x
    for n in range(2, max_degree + 1):
        table[n] = (2 * x * (n + LAMBDA - 1) * table[n - 1] - (n + 2 * LAMBDA - 2) * table[n - 2]) / n
    return table


@lru_cache(maxsize=16)
def norm_constants(max_degree: int) -> torch.Tensor:
    """
    L^2(S^4) normalizing factors for C_p^{3/2}(cos theta), computed by exact
    quadrature of C_p^2 rather than from the closed-form Gamma ratio.
    """
    rule = gauss_rule(max_degree + 1)
    table = gegenbauer_table(max_degree, rule.cos_nodes)
    norms_sq = (table**2) @ rule.weights
    return 1.0 / torch.sqrt(norms_sq)


def zonal_value(p: int, theta):
    theta = torch.as_tensor(theta, dtype=torch.float64)
    return norm_constants(p)[p] * gegenbauer(p, torch.cos(theta))


def zonal_table(max_degree: int, theta: torch.Tensor) -> torch.Tensor:
    """Z_p(theta) for p = 0..max_degree, shape (max_degree + 1, len(theta))."""
    theta = torch.as_tensor(theta, dtype=torch.float64)
    return norm_constants(max_degree)[:, None] * gegenbauer_table(max_degree, torch.cos(theta))


@lru_cache(maxsize=32)
def rule_basis(rule: QuadratureRule, max_degree: int) -> torch.Tensor:
    """Cached zonal_table on the nodes of a rule."""
    return zonal_table(max_degree, rule.nodes)


@dataclass(frozen=True)
class ZonalHarmonic:
    degree: int

    @property
    def norm_constant(self) -> float:
        return float(norm_constants(self.degree)[self.degree])

    @property
    def eigenvalue(self) -> int:
        return eigenvalue(self.degree)

    def __call__(self, theta):
        return zonal_value(self.degree, theta)


def pointwise_bound_ratio(p: int, samples: int = 4096) -> float:
    """max_theta |Z_p(theta)| / p^{3/2}; the maximum sits at the poles."""
    theta = torch.linspace(0.0, math.pi, samples, dtype=torch.float64)
    return float(zonal_table(p, theta)[p].abs().max()) / max(p, 1) ** 1.5


@dataclass(frozen=True)
class OscillationReport:
    degree: int
    frequency: float
    amplitude: float
    phase: float
    relative_residual: float


def oscillation_check(p: int, c: float = 4.0, samples: int = 2048) -> OscillationReport:
    """
    Fit Z_p(theta) sin(theta)^{3/2} on [c/p, pi - c/p] to A cos(nu theta + beta).

    The frequency is found by a bounded scalar search around p + 3/2; for a
    fixed frequency the amplitude and phase come from linear least squares.
    The residual is reported relative to the fitted amplitude.
    """
    if p < 8:
        raise InvalidParameterError(f"oscillation fit needs p >= 8, got {p}")
    theta = np.linspace(c / p, math.pi - c / p, samples)
    target = zonal_table(p, torch.from_numpy(theta))[p].numpy() * np.sin(theta) ** 1.5

    def lstsq(nu):
        design = np.stack([np.cos(nu * theta), np.sin(nu * theta)], axis=1)
        coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
        return coeffs, target - design @ coeffs

    def objective(nu):
        return float(np.sum(lstsq(nu)[1] ** 2))

    best = minimize_scalar(
        objective,
        bounds=(p + LAMBDA - 1.0, p + LAMBDA + 1.0),
        method="bounded",
        options={"xatol": 1e-10},
    )
    (ca, cb), residual = lstsq(best.x)
    amplitude = math.hypot(ca, cb)
    return OscillationReport(
        degree=p,
        frequency=float(best.x),
        amplitude=amplitude,
        phase=math.atan2(-cb, ca),
        relative_residual=float(np.max(np.abs(residual)) / amplitude),
    )


@dataclass(frozen=True, eq=False)
class TripleProductTensor:
    """
    Sparse G[p][q][l] = int_{S^4} Z_p Z_q Z_l dx over sorted triples p <= q <= l.

    Only triples allowed by the selection rules (l <= p + q, p + q + l even)
    are stored; every other entry is exactly zero.
    """

    max_degree: int
    indices: torch.Tensor  # (K, 3) int64, sorted rows
    values: torch.Tensor  # (K,) float64
    rule_digest: bytes = b""

    def __len__(self):
        return self.values.numel()

    @cached_property
    def _lookup(self):
        return {
            tuple(row): float(v)
            for row, v in zip(self.indices.tolist(), self.values.tolist())
        }

    def __getitem__(self, key) -> float:
        p, q, l = sorted(int(k) for k in key)
        if l > self.max_degree:
            raise IndexError(f"degree {l} exceeds tensor max degree {self.max_degree}")
        return self._lookup.get((p, q, l), 0.0)

    @cached_property
    def dense(self) -> torch.Tensor:
        size = self.max_degree + 1
        out = torch.zeros((size, size, size), dtype=torch.float64)
        p, q, l = self.indices.unbind(1)
        for a, b, c in ((p, q, l), (p, l, q), (q, p, l), (q, l, p), (l, p, q), (l, q, p)):
            out[a, b, c] = self.values
        return out


def admissible(p: int, q: int, l: int) -> bool:
    p, q, l = sorted((p, q, l))
    return l <= p + q and (p + q + l) % 2 == 0


def triple_product_tensor(
    max_degree: int,
    rule: Optional[QuadratureRule] = None,
    threads: int = 1,
) -> TripleProductTensor:
    if rule is None:
        rule = gauss_rule(nodes_for_degree(3 * max_degree))
    if rule.exact_degree < 3 * max_degree:
        raise InsufficientRuleError(
            f"tensor up to degree {max_degree} needs exact degree {3 * max_degree}, "
            f"rule has {rule.exact_degree}"
        )

    basis = rule_basis(rule, max_degree)
    weighted = basis * rule.weights

    def l_slice(l):
        # G[:, :, l] restricted to p <= q <= l
        block = (weighted * basis[l]) @ basis[: l + 1].T
        return block[: l + 1]

    logger.debug(f"Building triple-product tensor up to degree {max_degree} on {len(rule)} nodes")
    slices = parallel_map(l_slice, list(range(max_degree + 1)), threads=threads)

    indices, values = [], []
    for l, block in enumerate(slices):
        p = torch.arange(l + 1)[:, None].expand(l + 1, l + 1)
        q = torch.arange(l + 1)[None, :].expand(l + 1, l + 1)
        keep = (p <= q) & (l <= p + q) & ((p + q + l) % 2 == 0)
        indices.append(torch.stack([p[keep], q[keep], torch.full_like(p[keep], l)], dim=1))
        values.append(block[keep])

    return TripleProductTensor(
        max_degree=max_degree,
        indices=torch.cat(indices).to(torch.int64),
        values=torch.cat(values),
        rule_digest=rule.digest(),
    )


@lru_cache(maxsize=4)
def cached_tensor(max_degree: int) -> TripleProductTensor:
    return triple_product_tensor(max_degree)


# On-disk layout, little endian:
#   header  magic(4s) version(u32) max_degree(u32) rule_digest(32s) count(u64)
#   records count * (p u32, q u32, l u32, value f8)
#   trailer sha256 of the record bytes (32s)
CACHE_MAGIC = b"ZTPT"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sII32sQ")
_RECORD = np.dtype([("p", "<u4"), ("q", "<u4"), ("l", "<u4"), ("value", "<f8")])


def save_tensor(tensor: TripleProductTensor, path: Union[str, Path]) -> Path:
    path = Path(path)
    records = np.empty(len(tensor), dtype=_RECORD)
    idx = tensor.indices.numpy()
    records["p"], records["q"], records["l"] = idx[:, 0], idx[:, 1], idx[:, 2]
    records["value"] = tensor.values.numpy()
    payload = records.tobytes()

    digest = tensor.rule_digest.ljust(32, b"\0")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, tensor.max_degree, digest, len(tensor)))
        f.write(payload)
        f.write(hashlib.sha256(payload).digest())
    logger.info(f"Saved triple-product tensor ({len(tensor)} entries) to {path}")
    return path


def load_tensor(
    path: Union[str, Path], rule: Optional[QuadratureRule] = None
) -> TripleProductTensor:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 32:
        raise TensorCacheError(f"{path}: truncated header")
    magic, version, max_degree, digest, count = _HEADER.unpack_from(raw, 0)
    if magic != CACHE_MAGIC:
        raise TensorCacheError(f"{path}: bad magic {magic!r}")
    if version != CACHE_VERSION:
        raise TensorCacheError(f"{path}: unsupported version {version}")
    if rule is not None and digest != rule.digest():
        raise TensorCacheError(f"{path}: built with a different quadrature rule")

    end = _HEADER.size + count * _RECORD.itemsize
    if len(raw) != end + 32:
        raise TensorCacheError(f"{path}: expected {count} records")
    payload = raw[_HEADER.size : end]
    if hashlib.sha256(payload).digest() != raw[end:]:
        raise TensorCacheError(f"{path}: record checksum mismatch")

    records = np.frombuffer(payload, dtype=_RECORD)
    indices = np.stack([records["p"], records["q"], records["l"]], axis=1).astype(np.int64)
    return TripleProductTensor(
        max_degree=max_degree,
        indices=torch.from_numpy(indices),
        values=torch.from_numpy(records["value"].astype(np.float64)),
        rule_digest=digest,
    )
