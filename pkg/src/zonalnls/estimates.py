import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from zonalnls.errors import (
    DegenerateFitError,
    InvalidParameterError,
    TensorDegreeError,
    UnderResolvedError,
)
from zonalnls.field import DyadicBand, ZonalSpectrum, random_localized
from zonalnls.harmonics import (
    TripleProductTensor,
    cached_tensor,
    eigenvalues,
    rule_basis,
    zonal_table,
)
from zonalnls.quadrature import (
    QuadratureRule,
    composite_rule,
    gauss_rule,
    legendre_rule,
    nodes_for_degree,
)
from zonalnls.sweep import parallel_map

logger = logging.getLogger(__name__)

TRILINEAR_PATTERNS = {
    "u1u2ū3": (1, 1, -1),
    "ū1u2u3": (-1, 1, 1),
}
SCAN_KINDS = ("bilinear", "trilinear", "quadrilinear", "zonal_L1", "harmonic_bilinear")
L1_AGREEMENT = 1e-5


@dataclass(frozen=True)
class Window:
    """Gaussian time window chi(t) = exp(-t^2 / (2 width^2))."""

    width: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidParameterError(f"window width must be positive, got {self.width}")

    def value(self, t):
        t = torch.as_tensor(t, dtype=torch.float64)
        return torch.exp(-(t**2) / (2 * self.width**2))

    def hat(self, xi):
        """int chi(t) e^{-i t xi} dt."""
        xi = torch.as_tensor(xi, dtype=torch.float64)
        return self.width * math.sqrt(2 * math.pi) * torch.exp(-(self.width**2) * xi**2 / 2)

    def cutoff(self) -> int:
        """Frequency offset beyond which hat() is below 1e-31 of its peak."""
        return int(math.ceil(12.0 / self.width))


def m_smallest_two(*scales: float) -> float:
    if any(n < 1 for n in scales):
        raise InvalidParameterError(f"dyadic scales must be >= 1, got {scales}")
    low = sorted(scales)
    return low[0] * low[1]


def _collapse(frequencies: torch.Tensor, amplitudes: torch.Tensor):
    """Sum amplitudes (last axis) that share a frequency."""
    unique, inverse = torch.unique(frequencies.reshape(-1), return_inverse=True)
    flat = amplitudes.reshape(*amplitudes.shape[: amplitudes.dim() - frequencies.dim()], -1)
    out = torch.zeros(flat.shape[:-1] + (unique.numel(),), dtype=flat.dtype)
    out.index_add_(flat.dim() - 1, inverse, flat)
    return unique, out


@dataclass(frozen=True, eq=False)
class ResonanceSpectrum:
    """
    A time-windowed form reduced to its distinct integer resonance frequencies K
    and aggregated spatial weights S_K; the form at tau is sum_K hat(K - tau) S_K.
    """

    frequencies: torch.Tensor  # int64, sorted
    amplitudes: torch.Tensor  # complex128

    def __post_init__(self):
        object.__setattr__(self, "frequencies", torch.as_tensor(self.frequencies).to(torch.int64))
        object.__setattr__(self, "amplitudes", torch.as_tensor(self.amplitudes).to(torch.complex128))

    @classmethod
    def empty(cls) -> "ResonanceSpectrum":
        return cls(torch.zeros(0, dtype=torch.int64), torch.zeros(0, dtype=torch.complex128))

    @property
    def omega_max(self) -> int:
        if self.frequencies.numel() == 0:
            return 0
        return int(self.frequencies.abs().max())

    def evaluate(self, tau, window: Window = Window()):
        tau = torch.as_tensor(tau, dtype=torch.float64)
        scalar = tau.dim() == 0
        tau = tau.reshape(-1)
        out = torch.zeros(tau.numel(), dtype=torch.complex128)
        if self.frequencies.numel():
            freqs = self.frequencies.to(torch.float64)
            for start in range(0, tau.numel(), 64):
                chunk = tau[start : start + 64]
                kernel = window.hat(freqs[None, :] - chunk[:, None]).to(torch.complex128)
                out[start : start + 64] = kernel @ self.amplitudes
        return complex(out[0]) if scalar else out

    def on_integer_grid(self, window: Window = Window()):
        """The form at every integer tau in [-omega_max, omega_max]."""
        omega = self.omega_max
        taus = torch.arange(-omega, omega + 1, dtype=torch.int64)
        if self.frequencies.numel() == 0:
            return taus.to(torch.float64), torch.zeros(taus.numel(), dtype=torch.complex128)

        cut = window.cutoff()
        dense = torch.zeros(2 * (omega + cut) + 1, dtype=torch.complex128)
        dense[self.frequencies + omega + cut] = self.amplitudes
        values = torch.zeros(taus.numel(), dtype=torch.complex128)
        for shift in range(-cut, cut + 1):
            weight = float(window.hat(float(shift)))
            start = cut + shift
            values += weight * dense[start : start + taus.numel()]
        return taus.to(torch.float64), values


def _top_degree(f: ZonalSpectrum) -> int:
    support = f.support()
    return int(support.max()) if support.numel() else -1


def _check_tensor(tensor: TripleProductTensor, required: int, what: str):
    if required > tensor.max_degree:
        raise TensorDegreeError(
            f"{what} needs tensor degree {required}, tensor has {tensor.max_degree}"
        )


def _pair_spectrum(
    x: ZonalSpectrum,
    y: ZonalSpectrum,
    signs: Tuple[int, int],
    tensor: TripleProductTensor,
):
    """
    Frequencies k = s_x mu_{n1} + s_y mu_{n2} and, per frequency, the
    Z_p-coefficients (p = 0..tensor.max_degree) of the matching part of
    x^{s_x} y^{s_y} Z_{n1} Z_{n2}, where a minus sign conjugates.
    """
    idx1, idx2 = x.support(), y.support()
    cx = x.coeffs[idx1] if signs[0] > 0 else x.coeffs[idx1].conj()
    cy = y.coeffs[idx2] if signs[1] > 0 else y.coeffs[idx2].conj()
    mu = eigenvalues(tensor.max_degree).to(torch.int64)

    kernel = tensor.dense[:, idx1][:, :, idx2].to(torch.complex128)
    amplitudes = kernel * (cx[:, None] * cy[None, :])[None, :, :]
    frequencies = signs[0] * mu[idx1][:, None] + signs[1] * mu[idx2][None, :]
    return _collapse(frequencies, amplitudes)


def quadrilinear_spectrum(
    f1: ZonalSpectrum,
    f2: ZonalSpectrum,
    f3: ZonalSpectrum,
    f4: ZonalSpectrum,
    alpha: float,
    tensor: TripleProductTensor,
) -> ResonanceSpectrum:
    """Resonance spectrum of int int chi e^{i t tau} (1 - Delta)^{-alpha}(u1 conj(u2)) u3 conj(u4)."""
    tops = [_top_degree(f) for f in (f1, f2, f3, f4)]
    if min(tops) < 0:
        return ResonanceSpectrum.empty()
    _check_tensor(tensor, max(tops[0] + tops[1], tops[2] + tops[3]), "quadrilinear form")

    k12, a12 = _pair_spectrum(f1, f2, (1, -1), tensor)
    k34, a34 = _pair_spectrum(f3, f4, (1, -1), tensor)
    weights = (1 + eigenvalues(tensor.max_degree)) ** (-alpha)
    coupling = (a12 * weights[:, None]).T @ a34
    frequencies, amplitudes = _collapse(k12[:, None] + k34[None, :], coupling)
    return ResonanceSpectrum(frequencies, amplitudes)


def quadrilinear_form(
    f1: ZonalSpectrum,
    f2: ZonalSpectrum,
    f3: ZonalSpectrum,
    f4: ZonalSpectrum,
    alpha: float,
    tau: float,
    window: Window,
    tensor: TripleProductTensor,
) -> complex:
    return quadrilinear_spectrum(f1, f2, f3, f4, alpha, tensor).evaluate(tau, window)


def trilinear_spectrum(
    f1: ZonalSpectrum,
    f2: ZonalSpectrum,
    f3: ZonalSpectrum,
    tensor: TripleProductTensor,
    pattern: str = "u1u2ū3",
) -> ResonanceSpectrum:
    if pattern not in TRILINEAR_PATTERNS:
        raise InvalidParameterError(f"unknown trilinear pattern {pattern!r}")
    signs = TRILINEAR_PATTERNS[pattern]
    tops = [_top_degree(f) for f in (f1, f2, f3)]
    if min(tops) < 0:
        return ResonanceSpectrum.empty()
    _check_tensor(tensor, max(tops), "trilinear form")

    k12, a12 = _pair_spectrum(f1, f2, signs[:2], tensor)
    c3 = f3.resized(tensor.max_degree).coeffs
    c3 = c3 if signs[2] > 0 else c3.conj()
    mu = eigenvalues(tensor.max_degree).to(torch.int64)
    # int Z_p Z_{n3} dx = delta, so the third factor selects p = n3
    frequencies, amplitudes = _collapse(k12[:, None] + signs[2] * mu[None, :], a12.T * c3[None, :])
    return ResonanceSpectrum(frequencies, amplitudes)


def trilinear_form(
    f1: ZonalSpectrum,
    f2: ZonalSpectrum,
    f3: ZonalSpectrum,
    tau: float,
    window: Window,
    tensor: TripleProductTensor,
    pattern: str = "u1u2ū3",
) -> complex:
    return trilinear_spectrum(f1, f2, f3, tensor, pattern).evaluate(tau, window)


def _unit_interval_exp(omega: torch.Tensor) -> torch.Tensor:
    """int_0^1 e^{i omega t} dt, equal to 1 at omega = 0."""
    omega = omega.to(torch.complex128)
    safe = torch.where(omega == 0, torch.ones_like(omega), omega)
    return torch.where(omega == 0, torch.ones_like(omega), (torch.exp(1j * safe) - 1) / (1j * safe))


def bilinear_spacetime_norm(
    f1: ZonalSpectrum,
    f2: ZonalSpectrum,
    alpha: float,
    tensor: TripleProductTensor,
) -> float:
    """||(1 - Delta)^{-alpha/2}(u1 u2)|| in L^2((0, 1) x S^4), u_j = S(t) f_j."""
    tops = [_top_degree(f1), _top_degree(f2)]
    if min(tops) < 0:
        return 0.0
    _check_tensor(tensor, tops[0] + tops[1], "bilinear norm")

    k, a = _pair_spectrum(f1, f2, (1, 1), tensor)
    # u1 u2 carries e^{-i t k}, so the product of the k and k' terms has e^{i t (k' - k)}
    gram = _unit_interval_exp((k[None, :] - k[:, None]).to(torch.float64))
    weights = (1 + eigenvalues(tensor.max_degree)) ** (-alpha)
    per_degree = torch.einsum("pk,kl,pl->p", a, gram, a.conj()).real
    return math.sqrt(max(float(torch.sum(weights * per_degree)), 0.0))


def harmonic_bilinear_norm(n: int, l: int, alpha: float, tensor: TripleProductTensor) -> float:
    """||(1 - Delta)^{-alpha/2}(Z_n Z_l)||_{L^2(S^4)} from the tensor."""
    _check_tensor(tensor, n + l, "harmonic bilinear norm")
    column = tensor.dense[:, n, l]
    weights = (1 + eigenvalues(tensor.max_degree)) ** (-alpha)
    return math.sqrt(float(torch.sum(weights * column**2)))


def _kinks(*degrees: int) -> Tuple[float, ...]:
    """Polar angles of the zeros of Z_p, which are the nodes of the p-point Gauss rule."""
    angles = set()
    for p in degrees:
        if p > 0:
            angles.update(gauss_rule(p).nodes.tolist())
    return tuple(sorted(angles))


def zonal_trilinear_L1(p: int, q: int, l: int, rule: Optional[QuadratureRule] = None) -> float:
    """
    int_{S^4} |Z_p Z_q Z_l| dx on a composite rule whose panels are split at
    the zeros of the three factors. The value is accepted only if doubling
    the panels changes it by at most 1e-5 relative; the refined value is
    returned.
    """
    top = max(p, q, l)
    if rule is None:
        rule = composite_rule(max(8 * top, 16), 8)
    if not rule.is_composite:
        raise InvalidParameterError("zonal_trilinear_L1 needs a composite rule")
    if rule.panels < 4 * top:
        raise UnderResolvedError(f"{rule.panels} panels cannot resolve degree {top}")
    rule = composite_rule(rule.panels, rule.per_panel, _kinks(p, q, l))

    def evaluate(r):
        table = rule_basis(r, top)
        return float((table[p] * table[q] * table[l]).abs() @ r.weights)

    coarse, fine = evaluate(rule), evaluate(rule.refined())
    if abs(coarse - fine) > L1_AGREEMENT * abs(fine):
        raise UnderResolvedError(
            f"L1 norm of ({p},{q},{l}) moved from {coarse:.10g} to {fine:.10g} under refinement"
        )
    return fine


FormEvaluator = Union[ResonanceSpectrum, Callable[[torch.Tensor], torch.Tensor]]


def sup_tau(
    form: FormEvaluator,
    window: Window = Window(),
    omega_max: Optional[int] = None,
) -> Tuple[float, float]:
    """
    Maximize |form(tau)| over integer tau in [-omega_max, omega_max], then
    refine around the best integer with step 0.1. Returns (tau_star, value);
    an identically zero form gives (0.0, 0.0).
    """
    if isinstance(form, ResonanceSpectrum):
        taus, values = form.on_integer_grid(window)

        def evaluator(t):
            return form.evaluate(t, window)

    else:
        if omega_max is None:
            raise InvalidParameterError("a callable form needs omega_max")
        evaluator = form
        taus = torch.arange(-omega_max, omega_max + 1, dtype=torch.float64)
        values = evaluator(taus)

    magnitudes = values.abs()
    if magnitudes.numel() == 0 or float(magnitudes.max()) == 0.0:
        return 0.0, 0.0
    best = int(torch.argmax(magnitudes))
    center = float(taus[best])

    local = center + 0.1 * torch.arange(-10, 11, dtype=torch.float64)
    local_values = evaluator(local).abs()
    refined = int(torch.argmax(local_values))
    if float(local_values[refined]) > float(magnitudes[best]):
        return float(local[refined]), float(local_values[refined])
    return center, float(magnitudes[best])


@dataclass(frozen=True)
class EstimateSample:
    kind: str
    bands: Tuple[float, ...]
    m: float
    value: float
    tau_star: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.m < 1:
            raise InvalidParameterError(f"m must be >= 1, got {self.m}")
        if self.value < 0:
            raise InvalidParameterError(f"form value must be nonnegative, got {self.value}")


@dataclass(frozen=True)
class FitReport:
    slope: float
    intercept: float
    max_residual: float
    n_samples: int

    def to_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "max_residual": self.max_residual,
            "n_samples": self.n_samples,
        }


def exponent_fit(samples: Sequence[EstimateSample]) -> FitReport:
    """Least-squares fit of log(value) = slope * log(m) + intercept."""
    usable = [s for s in samples if s.value > 0]
    if len(usable) < len(samples):
        logger.warning(f"Excluding {len(samples) - len(usable)} zero-valued samples from the fit")
    if len({s.m for s in usable}) < 3:
        raise DegenerateFitError(
            f"need at least 3 distinct m values, got {sorted({s.m for s in usable})}"
        )

    log_m = torch.tensor([math.log(s.m) for s in usable], dtype=torch.float64)
    log_v = torch.tensor([math.log(s.value) for s in usable], dtype=torch.float64)
    design = torch.stack([log_m, torch.ones_like(log_m)], dim=1)
    solution = torch.linalg.lstsq(design, log_v[:, None], driver="gelsd").solution[:, 0]
    residual = log_v - design @ solution
    return FitReport(
        slope=float(solution[0]),
        intercept=float(solution[1]),
        max_residual=float(residual.abs().max()),
        n_samples=len(usable),
    )


def _draw_seed(seed: int, task: int, draw: int) -> int:
    return int(np.random.SeedSequence([seed, task, draw]).generate_state(1)[0])


def _random_field(band: float, draw_seed: int, factor: int) -> ZonalSpectrum:
    factor_seed = int(np.random.SeedSequence([draw_seed, factor]).generate_state(1)[0])
    return random_localized(DyadicBand(band), factor_seed)


def _required_degree(kind: str, entry: Sequence[float]) -> int:
    if kind in ("zonal_L1",):
        return 0
    if kind == "harmonic_bilinear":
        return int(entry[0]) + int(entry[1])
    tops = [DyadicBand(n).max_degree for n in entry]
    if kind == "trilinear":
        return max(tops)
    if kind == "bilinear":
        return tops[0] + tops[1]
    return max(tops[0] + tops[1], tops[2] + tops[3])


def _scale_m(kind: str, entry: Sequence[float]) -> float:
    if kind == "quadrilinear":
        return m_smallest_two(*entry)
    if kind == "harmonic_bilinear":
        return 1 + min(entry)
    return min(entry)


def estimate_scan(
    kind: str,
    alpha: float,
    schedule: Sequence[Sequence[float]],
    draws: int = 1,
    seed: int = 0,
    tensor: Optional[TripleProductTensor] = None,
    window: Window = Window(),
    threads: int = 1,
    pattern: str = "u1u2ū3",
) -> Tuple[List[EstimateSample], FitReport]:
    """
    Evaluate one estimate over a schedule and fit its scaling exponent.

    Args:
        kind (str): one of bilinear, trilinear, quadrilinear, zonal_L1,
            harmonic_bilinear.
        alpha (float): smoothing exponent of the Bessel potential, where used.
        schedule (Sequence): dyadic scale tuples (N1, ..), or degree tuples
            for zonal_L1 and harmonic_bilinear.
        draws (int, optional): random draws per entry; the max is kept.
        seed (int, optional): base seed; draw seeds depend only on
            (seed, entry index, draw index).
        tensor (TripleProductTensor, optional): built to the schedule's
            degree budget when omitted.
        window (Window, optional): time window of the tau-modulated forms.
        threads (int, optional): worker threads.
        pattern (str, optional): conjugation pattern of the trilinear form.
    """
    if kind not in SCAN_KINDS:
        raise InvalidParameterError(f"unknown scan kind {kind!r}")
    arity = {"bilinear": 2, "trilinear": 3, "quadrilinear": 4, "zonal_L1": 3, "harmonic_bilinear": 2}
    for entry in schedule:
        if len(entry) != arity[kind]:
            raise InvalidParameterError(f"{kind} schedule entries need {arity[kind]} values, got {entry}")
    deterministic = kind in ("zonal_L1", "harmonic_bilinear")
    draws = 1 if deterministic else draws
    if draws < 1:
        raise InvalidParameterError(f"draws must be >= 1, got {draws}")

    required = max(_required_degree(kind, entry) for entry in schedule)
    if kind != "zonal_L1":
        if tensor is None:
            tensor = cached_tensor(required)
        _check_tensor(tensor, required, f"{kind} scan")
        _ = tensor.dense  # materialize before workers share it

    def evaluate(task):
        idx, d = task
        entry = tuple(schedule[idx])
        draw_seed = None if deterministic else _draw_seed(seed, idx, d)
        tau_star = None
        if kind == "zonal_L1":
            value = zonal_trilinear_L1(*(int(n) for n in entry))
        elif kind == "harmonic_bilinear":
            value = harmonic_bilinear_norm(int(entry[0]), int(entry[1]), alpha, tensor)
        else:
            fields = [_random_field(n, draw_seed, j) for j, n in enumerate(entry)]
            if kind == "bilinear":
                value = bilinear_spacetime_norm(*fields, alpha, tensor)
            elif kind == "trilinear":
                tau_star, value = sup_tau(trilinear_spectrum(*fields, tensor, pattern), window)
            else:
                tau_star, value = sup_tau(quadrilinear_spectrum(*fields, alpha, tensor), window)
        return EstimateSample(kind, entry, _scale_m(kind, entry), value, tau_star, draw_seed)

    tasks = [(idx, d) for idx in range(len(schedule)) for d in range(draws)]
    results = parallel_map(evaluate, tasks, threads=threads, desc=f"{kind} scan")

    samples = []
    for idx in range(len(schedule)):
        best = None
        for (task_idx, _), sample in zip(tasks, results):
            if task_idx == idx and (best is None or sample.value > best.value):
                best = sample
        samples.append(best)
    fit = exponent_fit(samples)
    logger.info(f"{kind} scan: slope {fit.slope:.4f}, intercept {fit.intercept:.4f}")
    return samples, fit


# Independent time-quadrature evaluations used to cross-check the resonance sums


def _propagated_values(f: ZonalSpectrum, times: torch.Tensor, rule: QuadratureRule, conj=False):
    """u(t, theta_i) = sum_p c_p e^{-i t mu_p} Z_p(theta_i), shape (len(times), len(rule))."""
    phases = torch.exp(-1j * times[:, None] * eigenvalues(f.max_degree)[None, :])
    values = (f.coeffs[None, :] * phases) @ rule_basis(rule, f.max_degree).to(torch.complex128)
    return values.conj() if conj else values


def _time_grid(window: Window, omega: int):
    step = min(0.05, 0.5 / max(omega, 1))
    span = 8 * window.width
    count = int(math.ceil(2 * span / step))
    times = torch.linspace(-span, span, count + 1, dtype=torch.float64)
    weights = torch.full_like(times, 2 * span / count)
    weights[0] = weights[-1] = span / count
    return times, weights


def quadrilinear_form_by_time_quadrature(
    f1: ZonalSpectrum,
    f2: ZonalSpectrum,
    f3: ZonalSpectrum,
    f4: ZonalSpectrum,
    alpha: float,
    tau: float,
    window: Window = Window(),
) -> complex:
    tops = [max(_top_degree(f), 0) for f in (f1, f2, f3, f4)]
    inner = tops[0] + tops[1]
    rule = gauss_rule(nodes_for_degree(max(2 * inner, inner + tops[2] + tops[3])))
    mu_top = [t * (t + 3) for t in tops]
    times, weights = _time_grid(window, mu_top[0] + mu_top[1] + mu_top[2] + mu_top[3])

    product = _propagated_values(f1, times, rule) * _propagated_values(f2, times, rule, conj=True)
    basis = zonal_table(inner, rule.nodes).to(torch.complex128)
    coeffs = product @ (basis * rule.weights).T
    smoothing = (1 + eigenvalues(inner)) ** (-alpha)
    potential = (coeffs * smoothing) @ basis
    partner = _propagated_values(f3, times, rule) * _propagated_values(f4, times, rule, conj=True)
    spatial = (potential * partner) @ rule.weights.to(torch.complex128)

    integrand = window.value(times) * torch.exp(1j * tau * times) * spatial
    return complex(torch.sum(weights * integrand))


def trilinear_form_by_time_quadrature(
    f1: ZonalSpectrum,
    f2: ZonalSpectrum,
    f3: ZonalSpectrum,
    tau: float,
    window: Window = Window(),
    pattern: str = "u1u2ū3",
) -> complex:
    signs = TRILINEAR_PATTERNS[pattern]
    tops = [max(_top_degree(f), 0) for f in (f1, f2, f3)]
    rule = gauss_rule(nodes_for_degree(sum(tops)))
    times, weights = _time_grid(window, sum(t * (t + 3) for t in tops))

    spatial = torch.ones(times.numel(), len(rule), dtype=torch.complex128)
    for f, s in zip((f1, f2, f3), signs):
        spatial = spatial * _propagated_values(f, times, rule, conj=s < 0)
    spatial = spatial @ rule.weights.to(torch.complex128)

    integrand = window.value(times) * torch.exp(1j * tau * times) * spatial
    return complex(torch.sum(weights * integrand))


def bilinear_norm_by_time_quadrature(
    f1: ZonalSpectrum, f2: ZonalSpectrum, alpha: float
) -> float:
    tops = [max(_top_degree(f), 0) for f in (f1, f2)]
    inner = tops[0] + tops[1]
    rule = gauss_rule(nodes_for_degree(2 * inner))
    omega = 2 * sum(t * (t + 3) for t in tops)
    x, w = legendre_rule(int(0.75 * omega) + 40)
    times, weights = (x + 1) / 2, w / 2

    product = _propagated_values(f1, times, rule) * _propagated_values(f2, times, rule)
    basis = zonal_table(inner, rule.nodes).to(torch.complex128)
    coeffs = product @ (basis * rule.weights).T
    smoothing = (1 + eigenvalues(inner)) ** (-alpha)
    spatial = (coeffs.abs() ** 2) @ smoothing
    return math.sqrt(float(torch.sum(weights * spatial)))
