"""
Invariant suites run by `zonalnls selftest`. Every suite records the named
invariants that failed; the report carries no timings so that two runs
produce the same payload.
"""

import logging
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import torch

from zonalnls.blowup import condition_holds, gauge_decompose, parameter_grid, resonant_direction
from zonalnls.errors import ZonalError
from zonalnls.estimates import (
    Window,
    bilinear_norm_by_time_quadrature,
    bilinear_spacetime_norm,
    quadrilinear_form,
    quadrilinear_form_by_time_quadrature,
    trilinear_form,
    trilinear_form_by_time_quadrature,
)
from zonalnls.evolution import Hartree, dealiasing_rule, quadratic_substep, strang_step
from zonalnls.field import DyadicBand, GridField, ZonalSpectrum, analyze, random_localized, synthesize
from zonalnls.harmonics import load_tensor, rule_basis, save_tensor, triple_product_tensor, zonal_table
from zonalnls.quadrature import SPHERE_AREA, S3_AREA, composite_rule, gauss_rule, integrate
from zonalnls.resonance import count_representations, gamma_set, lambda_set, max_count_scan
from zonalnls.sweep import parallel_map

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    name: str
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def check(self, invariant: str, ok: bool, detail: str = ""):
        if not ok:
            self.failures.append(f"{invariant}: {detail}" if detail else invariant)


@dataclass
class SelftestReport:
    suites: List[SuiteResult]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def to_dict(self):
        return {
            "passed": self.passed,
            "suites": [{"name": s.name, "passed": s.passed, "failures": s.failures} for s in self.suites],
        }


def _moment(k: int) -> float:
    """2 pi^2 int_{-1}^{1} x^k (1 - x^2) dx."""
    if k % 2:
        return 0.0
    return S3_AREA * (2.0 / (k + 1) - 2.0 / (k + 3))


def quadrature_suite(s: SuiteResult):
    for n in (1, 2, 5, 16, 64):
        rule = gauss_rule(n)
        total = integrate(rule, torch.ones(n)).real
        s.check("surface_area", abs(total - SPHERE_AREA) <= 1e-12 * SPHERE_AREA, f"n={n}: {total}")
        s.check("positive_weights", bool((rule.weights > 0).all()), f"n={n}")
        s.check("increasing_nodes", bool((torch.diff(rule.nodes) > 0).all()), f"n={n}")
        x = rule.cos_nodes
        for k in range(rule.exact_degree + 1):
            value = integrate(rule, x**k).real
            exact = _moment(k)
            tol = 1e-12 if k % 2 else 1e-11 * abs(exact)
            s.check("monomial_exactness", abs(value - exact) <= tol, f"n={n}, k={k}: {value} vs {exact}")
    rule = composite_rule(8, 4)
    total = integrate(rule, torch.ones(len(rule))).real
    s.check("composite_area", abs(total - SPHERE_AREA) <= 1e-10, f"{total}")


def harmonics_suite(s: SuiteResult):
    rule = gauss_rule(65)
    table = zonal_table(64, rule.nodes)
    gram = (table * rule.weights) @ table.T
    error = float((gram - torch.eye(65, dtype=torch.float64)).abs().max())
    s.check("orthonormality", error < 1e-9, f"max error {error:.3e}")

    tensor = triple_product_tensor(12)
    dense = tensor.dense
    brute_rule = gauss_rule(40)
    basis = rule_basis(brute_rule, 12)
    brute = torch.einsum("pn,qn,ln,n->pql", basis, basis, basis, brute_rule.weights)
    error = float((brute - dense).abs().max())
    s.check("selection_rules", error < 1e-12, f"max deviation from brute force {error:.3e}")
    s.check("tensor_symmetry", bool(torch.equal(dense, dense.permute(1, 0, 2))))
    z0 = math.sqrt(3 / (8 * math.pi**2))
    expected = z0 * torch.eye(13, dtype=torch.float64)
    s.check("constant_row", float((dense[0] - expected).abs().max()) < 1e-12)


def tensor_cache_suite(s: SuiteResult, tensor_cache: Optional[str] = None):
    tensor = triple_product_tensor(8)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_tensor(tensor, Path(tmp) / "tensor.bin")
        loaded = load_tensor(path)
        s.check(
            "cache_round_trip",
            torch.equal(loaded.indices, tensor.indices) and torch.equal(loaded.values, tensor.values),
        )

    if tensor_cache is not None:
        try:
            cached = load_tensor(tensor_cache)
        except (ZonalError, OSError) as e:
            s.check("tensor_cache_integrity", False, str(e))
            return
        fresh = triple_product_tensor(cached.max_degree)
        s.check(
            "tensor_cache_integrity",
            torch.equal(cached.indices, fresh.indices)
            and float((cached.values - fresh.values).abs().max()) < 1e-13,
            "cached entries differ from a fresh build",
        )


def field_suite(s: SuiteResult):
    generator = torch.Generator().manual_seed(7)
    f = ZonalSpectrum(torch.randn(65, dtype=torch.complex128, generator=generator))
    rule = gauss_rule(97)
    g = synthesize(f, rule)
    back = analyze(g, 64)
    s.check("round_trip", float((back.coeffs - f.coeffs).abs().max()) < 1e-10)
    grid_mass = integrate(rule, (g.values * g.values.conj()).real).real
    s.check("parseval", abs(grid_mass - f.mass()) <= 1e-10 * f.mass(), f"{grid_mass} vs {f.mass()}")
    s.check("band_degrees", DyadicBand(4).degrees() == [3, 4, 5, 6], str(DyadicBand(4).degrees()))


def evolution_suite(s: SuiteResult):
    f = ZonalSpectrum.mode(1, 16) + ZonalSpectrum.mode(2, 16, 0.5j)
    spec = Hartree(1.0)
    stepped = strang_step(f, spec, 1e-3)
    s.check("hartree_mass_step", abs(stepped.mass() - f.mass()) <= 1e-13 * f.mass())
    back = strang_step(stepped, spec, -1e-3)
    s.check("reversibility", float((back.coeffs - f.coeffs).abs().max()) < 1e-11)

    rule = dealiasing_rule(2)
    u = GridField(torch.full((len(rule),), 0.1j, dtype=torch.complex128), rule)
    out = quadratic_substep(u, 1, 0, 2, 1e-3)
    exact = 1j / (10 + 1e-3)
    s.check("constant_oracle", float((out.values - exact).abs().max()) < 1e-8)


def estimates_suite(s: SuiteResult):
    tensor = triple_product_tensor(12)
    window = Window()
    for seed in (1, 2):
        f = [random_localized(DyadicBand(2), 10 * seed + j) for j in range(4)]
        fast = quadrilinear_form(*f, 0.5, 3.0, window, tensor)
        slow = quadrilinear_form_by_time_quadrature(*f, 0.5, 3.0, window)
        s.check("quadrilinear_oracle", abs(fast - slow) <= 1e-6 * max(abs(slow), 1e-12), f"seed {seed}")
        fast = trilinear_form(*f[:3], 2.0, window, tensor)
        slow = trilinear_form_by_time_quadrature(*f[:3], 2.0, window)
        s.check("trilinear_oracle", abs(fast - slow) <= 1e-6 * max(abs(slow), 1e-12), f"seed {seed}")
        g = random_localized(DyadicBand(4), 100 + seed)
        fast = bilinear_spacetime_norm(f[0], g, 1.0, tensor)
        slow = bilinear_norm_by_time_quadrature(f[0], g, 1.0)
        s.check("bilinear_oracle", abs(fast - slow) <= 1e-8 * slow, f"seed {seed}")


def resonance_suite(s: SuiteResult):
    s.check("count_example", count_representations(4, 1, 25) == 2)
    s.check("degenerate_line", count_representations(4, -1, 0) == 5)
    s.check("max_count_example", max_count_scan(1, 1) == (5, 2), str(max_count_scan(1, 1)))
    bands = [DyadicBand(2)] * 4
    left = {}
    for n1 in DyadicBand(2).degrees():
        for n2 in DyadicBand(2).degrees():
            a = n1 * (n1 + 3) - n2 * (n2 + 3)
            left[a] = left.get(a, 0) + 1
    for k in (0, 6, -8):
        split = sum(c * len(gamma_set(k - a, (bands[2], bands[3]), (1, -1))) for a, c in left.items())
        s.check("splitting_identity", len(lambda_set(k, bands)) == split, f"k={k}")


def blowup_suite(s: SuiteResult):
    s.check("condition_example", condition_holds(0.25, 0.25) and not condition_holds(1, 0))
    omega, c = gauge_decompose(-0.25, -0.25)
    s.check("gauge_example", abs(omega + 1) < 1e-12 and abs(c - 1) < 1e-12)
    s.check("triple_zero", resonant_direction(0.25, 0.25) is None)
    disagreements = [
        (a, b) for a, b in parameter_grid(angles=3) if condition_holds(a, b) == (resonant_direction(a, b) is not None)
    ]
    s.check("dichotomy", not disagreements, f"{len(disagreements)} disagreements")


SUITES = {
    "quadrature": quadrature_suite,
    "harmonics": harmonics_suite,
    "tensor": tensor_cache_suite,
    "field": field_suite,
    "evolution": evolution_suite,
    "estimates": estimates_suite,
    "resonance": resonance_suite,
    "blowup": blowup_suite,
}


def _run_suite(name: str, fn: Callable, **kwargs) -> SuiteResult:
    result = SuiteResult(name)
    try:
        fn(result, **kwargs)
    except (ZonalError, ArithmeticError, ValueError) as e:
        result.check("raised", False, f"{type(e).__name__}: {e}")
    logger.info(f"selftest {name}: {'pass' if result.passed else 'FAIL'}")
    for failure in result.failures:
        logger.warning(f"selftest {name}: {failure}")
    return result


def run_selftest(tensor_cache: Optional[str] = None, threads: int = 1) -> SelftestReport:
    def run(name):
        kwargs = {"tensor_cache": tensor_cache} if name == "tensor" else {}
        return _run_suite(name, SUITES[name], **kwargs)

    return SelftestReport(parallel_map(run, list(SUITES), threads=threads))
