import math

import pytest
import torch

from zonalnls.errors import (
    EmptyBandError,
    InsufficientRuleError,
    InvalidParameterError,
    LengthMismatchError,
    RuleMismatchError,
)
from zonalnls.field import (
    DyadicBand,
    GridField,
    ZonalSpectrum,
    analyze,
    bessel_potential,
    dealiased_product,
    dyadic_project,
    gradient_norm_sq,
    pointwise_product,
    random_localized,
    sobolev_norm,
    synthesize,
)
from zonalnls.quadrature import SPHERE_AREA, gauss_rule, integrate

Z0 = math.sqrt(3 / (8 * math.pi**2))


def test_synthesize_constant_mode():
    rule = gauss_rule(8)
    g = synthesize(ZonalSpectrum.mode(0, 4), rule)
    torch.testing.assert_close(g.values, torch.full((8,), Z0, dtype=torch.complex128))


def test_synthesize_zero():
    g = synthesize(ZonalSpectrum.zeros(6), gauss_rule(8))
    assert float(g.values.abs().max()) == 0.0


def test_constant_field_value():
    g = synthesize(ZonalSpectrum.constant(2 - 1j, 3), gauss_rule(4))
    torch.testing.assert_close(g.values, torch.full((4,), 2 - 1j, dtype=torch.complex128))


def test_analyze_recovers_harmonic():
    rule = gauss_rule(10)
    back = analyze(synthesize(ZonalSpectrum.mode(3, 8), rule), 8)
    expected = torch.zeros(9, dtype=torch.complex128)
    expected[3] = 1
    torch.testing.assert_close(back.coeffs, expected, atol=1e-11, rtol=0)


def test_round_trip_and_parseval(fine_rule):
    f = random_localized(DyadicBand(8), seed=11, max_degree=40)
    g = synthesize(f, fine_rule)
    torch.testing.assert_close(analyze(g, 40).coeffs, f.coeffs, atol=1e-12, rtol=0)
    mass = integrate(fine_rule, (g.values.abs() ** 2)).real
    assert mass == pytest.approx(f.mass(), rel=1e-12)


def test_rules_must_be_exact_enough():
    with pytest.raises(InsufficientRuleError):
        synthesize(ZonalSpectrum.mode(5), gauss_rule(5))
    with pytest.raises(InsufficientRuleError):
        analyze(GridField(torch.zeros(5), gauss_rule(5)), 5)
    rule = gauss_rule(8)
    u = synthesize(ZonalSpectrum.mode(1, 6), rule)
    with pytest.raises(InsufficientRuleError):
        dealiased_product(u, u, 6)


def test_grid_field_length():
    with pytest.raises(LengthMismatchError):
        GridField(torch.zeros(3), gauss_rule(4))


def test_dyadic_band_degrees():
    assert DyadicBand(1).degrees() == [0]
    assert DyadicBand(2).degrees() == [1, 2]
    assert DyadicBand(4).degrees() == [3, 4, 5, 6]
    assert DyadicBand(4).contains(6) and not DyadicBand(4).contains(7)
    assert DyadicBand(8).max_degree == 14


def test_empty_band():
    with pytest.raises(EmptyBandError):
        DyadicBand(1.1).max_degree
    with pytest.raises(EmptyBandError):
        random_localized(DyadicBand(1.1), seed=0)
    with pytest.raises(InvalidParameterError):
        DyadicBand(0)


def test_dyadic_project():
    f = ZonalSpectrum(torch.arange(1, 10, dtype=torch.float64))
    projected = dyadic_project(f, DyadicBand(4))
    assert projected.support().tolist() == [3, 4, 5, 6]
    torch.testing.assert_close(projected.coeffs[3:7], f.coeffs[3:7])


def test_bessel_potential():
    f = ZonalSpectrum.mode(4, 6, 2.0)
    torch.testing.assert_close(bessel_potential(f, 0.0).coeffs, f.coeffs)
    smoothed = bessel_potential(f, -0.5)
    assert smoothed.coeffs[4].real == pytest.approx(2.0 * 29**-0.5)
    torch.testing.assert_close(bessel_potential(smoothed, 0.5).coeffs, f.coeffs, atol=1e-12, rtol=0)


def test_sobolev_norm_convention():
    f = random_localized(DyadicBand(4), seed=2)
    assert sobolev_norm(f, 0.0) == pytest.approx(f.l2_norm())
    assert sobolev_norm(ZonalSpectrum.mode(0, 3), 3.0) == pytest.approx(1.0)
    assert sobolev_norm(ZonalSpectrum.mode(1), 2.0) == pytest.approx(5.0)


def test_gradient_norm():
    assert gradient_norm_sq(ZonalSpectrum.constant(3.0, 5)) == 0.0
    assert gradient_norm_sq(ZonalSpectrum.mode(6)) == pytest.approx(54.0)


def test_products_follow_selection_rules():
    rule = gauss_rule(12)
    u = synthesize(ZonalSpectrum.mode(1, 6), rule)
    v = synthesize(ZonalSpectrum.mode(2, 6), rule)
    product = dealiased_product(u, v, 6)
    nonzero = [p for p, c in enumerate(product.coeffs.tolist()) if abs(c) > 1e-12]
    assert nonzero == [1, 3]


def test_product_with_one_is_identity():
    rule = gauss_rule(12)
    f = random_localized(DyadicBand(2), seed=5, max_degree=6)
    u = synthesize(f, rule)
    one = GridField(torch.ones(len(rule)), rule)
    torch.testing.assert_close(dealiased_product(u, one, 6).coeffs, f.coeffs, atol=1e-13, rtol=0)


def test_pointwise_product_requires_same_rule():
    with pytest.raises(RuleMismatchError):
        pointwise_product(GridField(torch.ones(4), gauss_rule(4)), GridField(torch.ones(5), gauss_rule(5)))


def test_random_localized():
    band = DyadicBand(8)
    f = random_localized(band, seed=3, max_degree=20)
    g = random_localized(band, seed=3, max_degree=20)
    assert torch.equal(f.coeffs, g.coeffs)
    assert f.l2_norm() == pytest.approx(1.0)
    assert set(f.support().tolist()) <= set(band.degrees())
    assert not torch.equal(random_localized(band, seed=4).coeffs, random_localized(band, seed=3).coeffs)
    with pytest.raises(InvalidParameterError):
        random_localized(band, seed=3, max_degree=10)


def test_spectrum_arithmetic():
    f = ZonalSpectrum.mode(1, 3) + ZonalSpectrum.mode(5, amplitude=2j)
    assert f.max_degree == 5
    assert (0.5 * f).mass() == pytest.approx(0.25 * 5)
    assert f.resized(2).support().tolist() == [1]


def test_spectrum_json():
    f = random_localized(DyadicBand(4), seed=9)
    back = ZonalSpectrum.from_json(f.to_json())
    assert torch.equal(back.coeffs, f.coeffs)
    with pytest.raises(InvalidParameterError):
        ZonalSpectrum.from_json('{"P": 0, "convention": "other", "coeffs": [[1, 0]]}')
    with pytest.raises(LengthMismatchError):
        ZonalSpectrum.from_json('{"P": 2, "convention": "one-plus-mu", "coeffs": [[1, 0]]}')


def test_constant_uses_surface_area():
    assert ZonalSpectrum.constant(1.0, 0).coeffs[0].real == pytest.approx(math.sqrt(SPHERE_AREA))
