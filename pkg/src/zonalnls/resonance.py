import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import torch

from zonalnls.errors import EnumerationBudgetError, InvalidParameterError
from zonalnls.field import DyadicBand
from zonalnls.harmonics import eigenvalue
from zonalnls.sweep import parallel_map

logger = logging.getLogger(__name__)

ENUMERATION_BUDGET = 10**8
MAX_SCALE = 2**20

BandLike = Union[DyadicBand, Sequence[int]]


def degrees_of(band: BandLike) -> List[int]:
    if isinstance(band, DyadicBand):
        return band.degrees()
    return sorted(int(n) for n in band)


def _check_budget(sizes: Iterable[int]):
    total = math.prod(sizes)
    if total > ENUMERATION_BUDGET:
        raise EnumerationBudgetError(
            f"enumeration of {total} candidates exceeds the budget {ENUMERATION_BUDGET}"
        )


def _check_counting_args(N: int, sigma: int):
    if N < 1:
        raise InvalidParameterError(f"N must be >= 1, got {N}")
    if N > MAX_SCALE:
        raise InvalidParameterError(f"N={N} exceeds the 64-bit safe range {MAX_SCALE}")
    if sigma not in (1, -1):
        raise InvalidParameterError(f"sigma must be +1 or -1, got {sigma}")


def count_representations(N: int, sigma: int, M: int) -> int:
    """#{(k1, k2) : N <= k1 <= 2N, k2 >= 0, k1^2 + sigma k2^2 = M}."""
    _check_counting_args(N, sigma)
    count = 0
    for k1 in range(N, 2 * N + 1):
        rest = sigma * (M - k1 * k1)
        if rest < 0:
            continue
        k2 = math.isqrt(rest)
        if k2 * k2 == rest:
            count += 1
    return count


def max_count_scan(N: int, sigma: int, exclude_degenerate: bool = True) -> Tuple[int, int]:
    """
    Most frequent value of k1^2 + sigma k2^2 over N <= k1 <= 2N, 0 <= k2 <= 2N.
    Returns (M*, count) with ties going to the smallest M; the line
    (sigma = -1, M = 0) is skipped when exclude_degenerate is set.
    """
    _check_counting_args(N, sigma)
    _check_budget([N + 1, 2 * N + 1])
    k1 = torch.arange(N, 2 * N + 1, dtype=torch.int64)
    k2 = torch.arange(0, 2 * N + 1, dtype=torch.int64)
    values = (k1[:, None] ** 2 + sigma * k2[None, :] ** 2).reshape(-1)
    if exclude_degenerate and sigma == -1:
        values = values[values != 0]
    if values.numel() == 0:
        return 0, 0

    unique, counts = torch.unique(values, return_counts=True)
    best = int(torch.argmax(counts))
    return int(unique[best]), int(counts[best])


@dataclass(frozen=True)
class CountingRecord:
    N: int
    sigma: int
    M_star: int
    max_count: int
    excluded_degenerate: bool

    @property
    def exponent(self) -> float:
        """log(max_count) / log(N)."""
        if self.N < 2 or self.max_count < 1:
            return 0.0
        return math.log(self.max_count) / math.log(self.N)


def counting_scan(
    scales: Sequence[int],
    sigmas: Sequence[int] = (1, -1),
    exclude_degenerate: bool = True,
    threads: int = 1,
) -> List[CountingRecord]:
    tasks = [(sigma, N) for sigma in sigmas for N in scales]

    def run(task):
        sigma, N = task
        m_star, count = max_count_scan(N, sigma, exclude_degenerate)
        return CountingRecord(N, sigma, m_star, count, exclude_degenerate and sigma == -1)

    records = parallel_map(run, tasks, threads=threads, desc="counting scan")
    if not exclude_degenerate and -1 in sigmas:
        logger.warning("Degenerate line sigma=-1, M=0 included; it grows like N and is not bounded")
    return records


def counting_scaling_holds(records: Sequence[CountingRecord], bound: float = 0.4) -> bool:
    """
    Per sign, the exponents log(max_count)/log(N) either all stay at or below
    bound, or the exponent at the largest scale does not exceed the peak
    reached at the smaller ones.
    """
    by_sigma: Dict[int, List[CountingRecord]] = defaultdict(list)
    for record in records:
        by_sigma[record.sigma].append(record)
    for series in by_sigma.values():
        exponents = [r.exponent for r in sorted(series, key=lambda r: r.N)]
        if all(e <= bound for e in exponents):
            continue
        if len(exponents) < 2 or exponents[-1] > max(exponents[:-1]):
            return False
    return True


def gamma_set(
    a: int,
    bands: Tuple[BandLike, BandLike],
    signs: Tuple[int, int],
) -> List[Tuple[int, int]]:
    """All (n1, n2) in the bands with s1 mu_{n1} + s2 mu_{n2} = a."""
    first, second = (degrees_of(b) for b in bands)
    _check_budget([len(first), len(second)])
    s1, s2 = signs
    by_value: Dict[int, List[int]] = defaultdict(list)
    for n2 in second:
        by_value[s2 * eigenvalue(n2)].append(n2)
    return sorted((n1, n2) for n1 in first for n2 in by_value.get(a - s1 * eigenvalue(n1), []))


def _pair_table(first: List[int], second: List[int], signs: Tuple[int, int]):
    table: Dict[int, List[Tuple[int, int]]] = defaultdict(list)
    for n1 in first:
        for n2 in second:
            table[signs[0] * eigenvalue(n1) + signs[1] * eigenvalue(n2)].append((n1, n2))
    return table


def lambda_set(k: int, bands: Sequence[BandLike]) -> List[Tuple[int, int, int, int]]:
    """All (n1, n2, n3, n4) in the bands with mu1 - mu2 + mu3 - mu4 = k."""
    if len(bands) != 4:
        raise InvalidParameterError(f"lambda_set needs four bands, got {len(bands)}")
    degrees = [degrees_of(b) for b in bands]
    _check_budget(len(d) for d in degrees)

    left = _pair_table(degrees[0], degrees[1], (1, -1))
    right = _pair_table(degrees[2], degrees[3], (1, -1))
    out = []
    for a, pairs in left.items():
        for n1, n2 in pairs:
            for n3, n4 in right.get(k - a, []):
                out.append((n1, n2, n3, n4))
    return sorted(out)


def shifted_square_pairs(a: int, first: BandLike, second: BandLike) -> List[Tuple[int, int]]:
    """
    Pairs with mu_{n1} - mu_{n2} = a found through k = 2n + 3, for which
    4 n (n + 3) = k^2 - 9 and the condition becomes k1^2 - k2^2 = 4a.
    """
    targets = set(degrees_of(second))
    out = []
    for n1 in degrees_of(first):
        k1 = 2 * n1 + 3
        rest = k1 * k1 - 4 * a
        if rest < 9:
            continue
        k2 = math.isqrt(rest)
        if k2 * k2 == rest and k2 % 2 == 1 and (k2 - 3) // 2 in targets:
            out.append((n1, (k2 - 3) // 2))
    return sorted(out)
