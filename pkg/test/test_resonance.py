import pytest

from zonalnls.errors import EnumerationBudgetError, InvalidParameterError
from zonalnls.field import DyadicBand
from zonalnls.harmonics import eigenvalue
from zonalnls.resonance import (
    CountingRecord,
    count_representations,
    counting_scaling_holds,
    counting_scan,
    gamma_set,
    lambda_set,
    max_count_scan,
    shifted_square_pairs,
)


def test_count_representations():
    assert count_representations(1, 1, 2) == 1
    assert count_representations(4, 1, 25) == 2
    assert count_representations(4, -1, 0) == 5
    assert count_representations(4, 1, 3) == 0


def test_count_matches_brute_force():
    N = 6
    for sigma in (1, -1):
        for M in range(-50, 200, 7):
            brute = sum(
                1 for k1 in range(N, 2 * N + 1) for k2 in range(0, 4 * N) if k1 * k1 + sigma * k2 * k2 == M
            )
            assert count_representations(N, sigma, M) == brute


def test_counting_arguments_are_validated():
    with pytest.raises(InvalidParameterError):
        count_representations(0, 1, 4)
    with pytest.raises(InvalidParameterError):
        count_representations(4, 2, 4)
    with pytest.raises(InvalidParameterError):
        max_count_scan(2**21, 1)


def test_max_count_scan():
    assert max_count_scan(1, 1) == (5, 2)
    assert max_count_scan(4, -1, exclude_degenerate=False) == (0, 5)
    m_star, count = max_count_scan(4, -1)
    assert m_star != 0
    assert 1 <= count < 5


def test_counting_scan_records():
    records = counting_scan([2, 4, 8], sigmas=(1, -1), threads=2)
    assert [(r.sigma, r.N) for r in records] == [(1, 2), (1, 4), (1, 8), (-1, 2), (-1, 4), (-1, 8)]
    assert all(r.excluded_degenerate == (r.sigma == -1) for r in records)
    assert all(r.max_count >= 1 for r in records)


def test_counting_scaling_rule():
    def record(N, count):
        return CountingRecord(N, 1, 0, count, False)

    assert record(16, 2).exponent == pytest.approx(0.25)
    assert counting_scaling_holds([record(16, 2), record(32, 4)], bound=0.4)
    # above the bound but past its peak
    assert counting_scaling_holds([record(16, 4), record(64, 6)], bound=0.45)
    assert not counting_scaling_holds([record(16, 4), record(64, 16)], bound=0.45)
    assert not counting_scaling_holds([record(16, 8)], bound=0.4)


def test_degenerate_line_dominates_when_included():
    included = counting_scan([16], sigmas=(-1,), exclude_degenerate=False)[0]
    excluded = counting_scan([16], sigmas=(-1,))[0]
    assert included.M_star == 0
    assert included.max_count == 17
    assert excluded.exponent < included.exponent


def test_lambda_set_lowest_band():
    bands = [DyadicBand(1)] * 4
    assert lambda_set(0, bands) == [(0, 0, 0, 0)]
    assert lambda_set(1, bands) == []
    with pytest.raises(InvalidParameterError):
        lambda_set(0, bands[:3])


def test_lambda_set_members():
    bands = [DyadicBand(2), DyadicBand(4), DyadicBand(2), DyadicBand(4)]
    for k in (-60, -8, 0):
        for n1, n2, n3, n4 in lambda_set(k, bands):
            assert eigenvalue(n1) - eigenvalue(n2) + eigenvalue(n3) - eigenvalue(n4) == k


def test_gamma_set():
    band = DyadicBand(4)
    assert gamma_set(0, (band, band), (1, -1)) == [(3, 3), (4, 4), (5, 5), (6, 6)]
    assert gamma_set(4, ([0, 1], [0, 1]), (1, 1)) == [(0, 1), (1, 0)]


def test_splitting_identity():
    bands = [DyadicBand(4)] * 4
    degrees = bands[0].degrees()
    for k in (0, 12, -30, 47):
        split = 0
        for n1 in degrees:
            for n2 in degrees:
                a = eigenvalue(n1) - eigenvalue(n2)
                split += len(gamma_set(k - a, (bands[2], bands[3]), (1, -1)))
        assert len(lambda_set(k, bands)) == split


def test_shifted_square_pairs_agree_with_gamma_set():
    band = DyadicBand(16)
    for a in (-120, -40, 0, 18, 100, 244):
        assert shifted_square_pairs(a, band, band) == gamma_set(a, (band, band), (1, -1))


def test_enumeration_budget():
    wide = list(range(20000))
    with pytest.raises(EnumerationBudgetError):
        gamma_set(0, (wide, wide), (1, -1))
