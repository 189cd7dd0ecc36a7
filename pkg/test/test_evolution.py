import cmath
import csv
import math

import pytest
import torch

from zonalnls.blowup import gauge_decompose, ode_solution
from zonalnls.errors import InsufficientRuleError, InvalidParameterError
from zonalnls.evolution import (
    Hartree,
    Quadratic,
    SimConfig,
    Status,
    dealiasing_rule,
    diagnostics,
    free_propagate,
    hartree_potential,
    hartree_substep,
    quadratic_substep,
    simulate,
    strang_step,
)
from zonalnls.field import DyadicBand, GridField, ZonalSpectrum, random_localized, synthesize
from zonalnls.quadrature import SPHERE_AREA, gauss_rule


@pytest.fixture
def field16():
    return random_localized(DyadicBand(2), seed=1, max_degree=16) + random_localized(
        DyadicBand(4), seed=2, max_degree=16
    ) * 0.5


def test_free_propagate_identities(field16):
    torch.testing.assert_close(free_propagate(field16, 0.0).coeffs, field16.coeffs)
    torch.testing.assert_close(free_propagate(field16, 2 * math.pi).coeffs, field16.coeffs, atol=1e-10, rtol=0)
    assert free_propagate(field16, 0.37).mass() == pytest.approx(field16.mass(), rel=1e-14)


def test_free_propagate_phase():
    out = free_propagate(ZonalSpectrum.mode(2), 0.1)
    assert complex(out.coeffs[2]) == pytest.approx(complex(math.cos(1.0), -math.sin(1.0)))


def test_hartree_potential_special_cases(rule16):
    zero = GridField(torch.zeros(len(rule16)), rule16)
    assert float(hartree_potential(zero, 1.0).values.abs().max()) == 0.0

    kappa = 0.3 - 0.4j
    constant = GridField(torch.full((len(rule16),), kappa, dtype=torch.complex128), rule16)
    potential = hartree_potential(constant, 1.0)
    torch.testing.assert_close(potential.values.real, torch.full((len(rule16),), 0.25, dtype=torch.float64))


def test_hartree_potential_phase_invariant(rule16, field16):
    u = synthesize(field16, rule16)
    rotated = GridField(u.values * complex(math.cos(0.7), math.sin(0.7)), rule16)
    torch.testing.assert_close(hartree_potential(u, 0.5).values, hartree_potential(rotated, 0.5).values)


def test_hartree_substep(rule16, field16):
    u = synthesize(field16, rule16)
    torch.testing.assert_close(hartree_substep(u, 1.0, 0.0).values, u.values)
    stepped = hartree_substep(u, 1.0, 0.1, focusing=True)
    torch.testing.assert_close(stepped.values.abs(), u.values.abs())


def test_quadratic_substep_identities(rule16, field16):
    u = synthesize(field16, rule16)
    torch.testing.assert_close(quadratic_substep(u, 1, 0.5j, 2, 0.0).values, u.values)
    torch.testing.assert_close(quadratic_substep(u, 0, 0, 0, 0.3).values, u.values)


def test_quadratic_substep_constant_oracle():
    rule = gauss_rule(3)
    u = GridField(torch.full((3,), -0.5j, dtype=torch.complex128), rule)
    # i u_t = u^2 + 2 |u|^2 keeps u = i y with y' = -y^2
    out = quadratic_substep(u, 1, 0, 2, 0.01)
    expected = 1j / (1 / -0.5 + 0.01)
    torch.testing.assert_close(out.values, torch.full((3,), expected, dtype=torch.complex128), atol=1e-11, rtol=0)


def test_strang_step_linear_limit(field16):
    stepped = strang_step(field16, Quadratic(0, 0, 0), 0.05)
    torch.testing.assert_close(stepped.coeffs, free_propagate(field16, 0.05).coeffs, atol=1e-12, rtol=0)


def test_strang_step_needs_dealiasing(field16):
    with pytest.raises(InsufficientRuleError):
        strang_step(field16, Hartree(1.0), 0.01, rule=gauss_rule(20))


def test_hartree_step_is_reversible(field16):
    spec = Hartree(0.5)
    forward = strang_step(field16, spec, 0.01)
    torch.testing.assert_close(strang_step(forward, spec, -0.01).coeffs, field16.coeffs, atol=1e-10, rtol=0)


def test_diagnostics_of_constant():
    f = ZonalSpectrum.constant(0.2 + 0.1j, 4)
    diag = diagnostics(f, Hartree(1.0))
    assert diag.mass == pytest.approx(0.05 * SPHERE_AREA)
    assert diag.re_integral == pytest.approx(0.2 * SPHERE_AREA)
    assert diag.sup == pytest.approx(abs(0.2 + 0.1j))
    # the Hartree interaction of a constant is |kappa|^4 |S^4| / 2
    assert diag.energy == pytest.approx(0.5 * 0.05**2 * SPHERE_AREA)
    assert diagnostics(f, Hartree(1.0, focusing=True)).energy == pytest.approx(-diag.energy)


def test_simulate_zero_data():
    trajectory = simulate(ZonalSpectrum.zeros(8), Hartree(1.0), SimConfig(dt=0.1, T=0.5, P=8))
    assert trajectory.status is Status.COMPLETED
    assert trajectory.times[-1] == pytest.approx(0.5)
    assert all(r.mass == 0 and r.energy == 0 for r in trajectory.records)
    assert trajectory.final.max_degree == 8


def test_simulate_hartree_conserves_mass(field16):
    config = SimConfig(dt=1e-2, T=0.5, P=16, record_stride=5)
    trajectory = simulate(field16, Hartree(1.0), config)
    assert trajectory.status is Status.COMPLETED
    assert len(trajectory.times) == 11
    assert trajectory.drift("mass") < 1e-10 * trajectory.records[0].mass
    assert trajectory.drift("energy") < 1e-3 * abs(trajectory.records[0].energy)


def test_simulate_records_callback(field16):
    seen = []
    simulate(field16, Hartree(1.0), SimConfig(dt=0.1, T=0.3, P=16), record=lambda t, d: seen.append(t))
    assert seen == pytest.approx([0.0, 0.1, 0.2, 0.3])


def test_simulate_threshold_must_exceed_initial_sup():
    u0 = ZonalSpectrum.constant(5.0, 2)
    with pytest.raises(InvalidParameterError):
        simulate(u0, Hartree(1.0), SimConfig(dt=0.1, T=1.0, P=2, blowup_threshold=1.0))


def test_simulate_detects_constant_blowup():
    # i u_t = u^2 + 2|u|^2 from u0 = -0.5 i blows up at t = 2
    u0 = ZonalSpectrum.constant(-0.5j, 2)
    config = SimConfig(dt=1e-3, T=3.0, P=2, blowup_threshold=500.0)
    trajectory = simulate(u0, Quadratic(1, 0, 2), config)
    assert trajectory.status is Status.BLOWUP
    assert trajectory.blowup_time == pytest.approx(2.0, rel=0.02)
    assert trajectory.blowup_time < 2.0


def test_trajectory_csv(tmp_path, field16):
    trajectory = simulate(field16, Hartree(1.0), SimConfig(dt=0.1, T=0.2, P=16))
    path = trajectory.to_csv(tmp_path / "trajectory.csv")
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "mass", "energy", "h1", "sup", "re_integral", "status"]
    assert [r[-1] for r in rows[1:]] == ["running", "running", "completed"]


@pytest.mark.slow
def test_energy_drift_is_second_order(field16):
    def drift(dt):
        return simulate(field16, Hartree(1.0), SimConfig(dt=dt, T=1.0, P=16)).drift("energy")

    ratio = drift(0.02) / drift(0.01)
    assert 3.4 <= ratio <= 4.6


def test_equation_validation():
    with pytest.raises(InvalidParameterError):
        Hartree(0.0)
    assert Quadratic(1 + 1j, 0, 2 - 2j).hamiltonian
    assert not Quadratic(1, 0, 1).hamiltonian
    with pytest.raises(InvalidParameterError):
        SimConfig(dt=0.0, T=1.0, P=4)
    with pytest.raises(InvalidParameterError):
        SimConfig(dt=0.1, T=1.0, P=4, record_stride=0)


def test_dealiasing_rule():
    assert dealiasing_rule(10).exact_degree >= 30


@pytest.mark.parametrize("spec", [Hartree(1.0), Hartree(1.5, focusing=True), Quadratic(1, 0.5j, 2)])
def test_constant_data_stays_constant(spec):
    u0 = ZonalSpectrum.constant(0.3 - 0.2j, 8)
    trajectory = simulate(u0, spec, SimConfig(dt=1e-2, T=0.5, P=8))
    assert trajectory.status is Status.COMPLETED
    assert float(trajectory.final.coeffs[1:].abs().max()) <= 1e-12


def test_constant_blowup_follows_ode_solution():
    # u = i y with y' = -y^2, y(0) = -0.5, so |u(t)| = 1 / (2 - t)
    u0 = ZonalSpectrum.constant(-0.5j, 2)
    checked = []

    def check(t, diag):
        expected = 1.0 / (2.0 - t)
        assert diag.sup == pytest.approx(expected, rel=1e-6), t
        checked.append(t)

    config = SimConfig(dt=2.5e-4, T=1.99, P=2, blowup_threshold=1e3, record_stride=40)
    trajectory = simulate(u0, Quadratic(1, 0, 2), config, record=check)
    assert trajectory.status is Status.COMPLETED
    assert len(checked) > 100

    value = complex(synthesize(trajectory.final, gauss_rule(3)).values[0])
    exact = 1j * ode_solution(-0.5, 1j, 1, 0, 1.99)
    assert abs(value - exact) <= 1e-6 * abs(exact)
    assert abs(exact) == pytest.approx(100.0)


def test_gauge_maps_trajectories():
    a = 0.3 * cmath.exp(1j * math.pi / 3)
    b = a.conjugate() ** 2 / a
    omega, c = gauge_decompose(a, b)
    v0 = random_localized(DyadicBand(2), seed=5, max_degree=8) * 0.2
    config = SimConfig(dt=1e-2, T=0.5, P=8)

    gauged = simulate(v0 * omega, Quadratic(a, b, 2 * a.conjugate()), config)
    real_square = simulate(v0, Quadratic(c / 4, c / 4, c / 2), config)
    assert gauged.status is Status.COMPLETED
    torch.testing.assert_close(gauged.final.coeffs, real_square.final.coeffs * omega, atol=1e-9, rtol=0)
