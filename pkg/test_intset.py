#!/usr/bin/env python

"""
Tests for truncated integer sets: invariance, closures, dimensions and sumsets
"""

import logging
import math
from fractions import Fraction

import numpy as np
import pytest

from fractal_lab.geometry import DEFAULTS, intset
from fractal_lab.geometry.digits import to_digits
from fractal_lab.geometry.intset import (
    IntSet,
    IntSetError,
    affine_floor,
    check_invariance,
    closure,
    core,
    counterexample_pair,
    counterexample_set,
    counterexample_sumset_counts,
    dimension_gap_example,
    dumps,
    floor_affine_sumset,
    from_range,
    hausdorff_dimension,
    limit_points,
    loads,
    mass_dimension,
    rescale,
    restricted_digits,
    scale,
    single,
    sumset,
    sumset_level_counts,
)

logging.basicConfig(level=logging.INFO,
                    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger('intset_test')

CANTOR_DIMENSION = math.log(2) / math.log(3)


def brute_affine_sumset(A, B, lam, eta, bound):
    return sorted({math.floor(lam * a + eta * b) for a in A for b in B} & set(range(bound)))


def test_intset_validation():
    with pytest.raises(IntSetError):
        IntSet((3, 1), 10)
    with pytest.raises(IntSetError):
        IntSet((1, 10), 10)
    A = IntSet.from_array([5, 1, 1, 12], 10)
    assert A.elements == (1, 5)
    assert A.count_below(5) == 1
    assert A.window(3).elements == (1,)
    assert 5 in A


def test_restricted_digits_and_invariance():
    A = restricted_digits(3, {0, 2}, 3 ** 8)
    assert len(A) == 2 ** 8
    assert all(set(to_digits(a, 3).digits) <= {0, 2} for a in A)
    assert check_invariance(A, 3) == (True, True)
    assert check_invariance(IntSet((0, 12), 100), 10) == (False, False)
    with pytest.raises(IntSetError):
        restricted_digits(3, {1, 2}, 27)


def test_closure_contains_every_digit_block():
    C = closure([71393], [('phi', 10), ('psi', 10)], 10 ** 5)
    text = '71393'
    blocks = {int(text[i:j]) for i in range(len(text)) for j in range(i + 1, len(text) + 1)}
    assert set(C.elements) == blocks | {0}
    assert closure([0], [('phi', 2), ('psi', 3)], 10).elements == (0,)
    with pytest.raises(IntSetError):
        closure([200], [('phi', 10)], 100)


def test_core_of_invariant_set_is_itself():
    A = restricted_digits(3, {0, 2}, 3 ** 10)
    C = core(A, 3)
    assert C.bound > 1
    assert C.elements == A.window(C.bound).elements


def test_core_drops_elements_without_psi_preimages():
    powers = [0] + [2 ** k for k in range(20)]
    A = IntSet(tuple(powers), 2 ** 20)
    assert check_invariance(A, 2) == (True, True)
    assert core(A, 2).elements == (0,)


def test_mass_dimension_of_digit_sets():
    A = restricted_digits(3, {0, 2}, 3 ** 12)
    estimate = mass_dimension(A, 3)
    assert abs(estimate.slope - CANTOR_DIMENSION) <= 1e-9
    assert [count for (_, count, _) in estimate.levels] == [2 ** N for N in range(1, 13)]
    assert abs(mass_dimension(from_range(2 ** 16), 2).slope - 1.0) <= 1e-9
    with pytest.raises(IntSetError):
        mass_dimension(from_range(3), 2)


def test_hausdorff_dimension_estimates():
    assert hausdorff_dimension(from_range(2 ** 10), 2).slope >= 0.999
    assert hausdorff_dimension(single(0, 2 ** 16), 2).slope <= 0.01
    cantor = hausdorff_dimension(restricted_digits(3, {0, 2}, 3 ** 12), 3)
    assert abs(cantor.slope - CANTOR_DIMENSION) <= 0.02
    assert cantor.skipped == []
    assert [N for (N, _, _) in cantor.levels] == list(range(7, 13))


@pytest.mark.parametrize("r, digits, depth", [(3, {0, 2}, 10), (4, {0, 3}, 8), (5, {0, 1, 3}, 7)])
def test_hausdorff_and_mass_dimension_agree(r, digits, depth):
    A = restricted_digits(r, digits, r ** depth)
    mass = mass_dimension(A, r).slope
    assert abs(mass - math.log(len(digits), r)) <= 1e-9
    assert abs(hausdorff_dimension(A, r).slope - mass) <= 0.02


def test_hausdorff_dimension_lists_levels_over_point_cap(monkeypatch):
    monkeypatch.setattr(intset, 'HAUSDORFF_POINT_CAP', 64)
    estimate = hausdorff_dimension(restricted_digits(3, {0, 2}, 3 ** 8), 3)
    assert estimate.skipped == [7, 8]
    assert [N for (N, _, _) in estimate.levels] == [4, 5, 6]
    assert abs(estimate.slope - CANTOR_DIMENSION) <= 0.02


def test_floor_affine_sumset_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(30):
        A = IntSet.from_array(rng.integers(0, 200, size=25), 200)
        B = IntSet.from_array(rng.integers(0, 200, size=25), 200)
        for lam, eta in ((1, 1), (Fraction(1, 2), Fraction(3, 2)), (Fraction(2, 3), 2)):
            S = floor_affine_sumset(A, B, lam, eta, 150)
            assert list(S.elements) == brute_affine_sumset(A, B, Fraction(lam), Fraction(eta), 150)
            counts = sumset_level_counts(A, B, lam, eta, [10, 50, 100])
            assert counts == [S.count_below(W) for W in (10, 50, 100)]
    with pytest.raises(IntSetError):
        floor_affine_sumset(A, B, 0, 1, 10)


def test_same_base_sumset_counts():
    A = restricted_digits(10, {0, 1, 2}, 10 ** 5)
    counts = sumset_level_counts(A, A, 1, 1, [10 ** N for N in range(1, 6)])
    assert counts == [5 ** N for N in range(1, 6)]
    assert sumset(A, A, 10 ** 3).count_below(10 ** 3) == 125


def test_affine_floor_and_scale():
    A = IntSet((0, 1, 2, 3), 4)
    assert affine_floor(A, Fraction(1, 2), Fraction(1, 2), 10).elements == (0, 1, 2)
    assert scale(A, 3, 8).elements == (0, 3, 6)
    assert scale(A, 3, 8).is_subset(IntSet((0, 3, 6, 7), 8))


def test_counterexample_properties():
    bound = 2 ** 14
    A, B = counterexample_pair(2, 3, bound)
    assert scale(A, 2, bound).is_subset(A)
    assert scale(B, 3, bound).is_subset(B)
    assert check_invariance(A, 2)[0]
    images = {a // 2 for a in A}
    assert all(a in images for a in A if 2 * a < bound)
    with pytest.raises(IntSetError):
        counterexample_pair(3, 2, bound)


def test_counterexample_counts_match_brute_force():
    windows = [2 ** k for k in range(1, 11)]
    A = counterexample_set(2, max(windows))
    B = counterexample_set(3, max(windows))
    sums = {a + b for a in A for b in B}
    results = counterexample_sumset_counts(2, 3, windows)
    assert [W for (W, _) in results] == windows
    for (W, count) in results:
        assert count == sum(1 for x in sums if x < W)


def test_counterexample_counts_are_exact_across_chunks(monkeypatch):
    limits = dict(DEFAULTS, SUMSET_MASK_CEILING=2 ** 6)
    monkeypatch.setattr(intset, 'setting', lambda name: limits[name])
    windows = [2 ** k for k in range(4, 12)] + [100, 1000, 3 ** 7]
    A = counterexample_set(2, max(windows))
    B = counterexample_set(3, max(windows))
    sums = {a + b for a in A for b in B}
    for (W, count) in counterexample_sumset_counts(2, 3, windows):
        assert count == sum(1 for x in sums if x < W)


def test_counterexample_counts_for_deep_windows(monkeypatch):
    levels = list(range(24, 31))
    counted = counterexample_sumset_counts(2, 3, [2 ** N for N in levels])
    counts = [count for (_, count) in counted]
    assert counts == sorted(counts)
    for N, (W, count) in zip(levels, counted):
        assert 0 < count < W
        assert count ** 5 <= (4 * N ** 4) ** 5 * 2 ** (4 * N)
    # the same window counted sixteen chunks at a time
    limits = dict(DEFAULTS, SUMSET_MASK_CEILING=2 ** 20)
    monkeypatch.setattr(intset, 'setting', lambda name: limits[name])
    assert counterexample_sumset_counts(2, 3, [2 ** 24]) == [counted[0]]


def test_sumsets_with_wide_coefficients():
    A = from_range(50)
    lam = Fraction(3 ** 40 + 1, 3 ** 40)
    assert sumset_level_counts(A, A, lam, 1, [10, 50, 100]) == [10, 50, 99]
    assert floor_affine_sumset(A, A, lam, 1, 100) == sumset(A, A, 100)


def test_dimension_gap_examples():
    bound = 2 ** 14
    blocks = dimension_gap_example('long_blocks', bound)
    spread = dimension_gap_example('sparse_spread', bound)
    for n in range(5, 13):
        top = 2 ** n + math.floor(2 ** (n - n / math.log(n)))
        assert blocks.count_below(top + 1) - blocks.count_below(2 ** n) == top - 2 ** n + 1
        assert spread.count_below(2 ** (n + 1)) - spread.count_below(2 ** n) == 2 * math.floor(2 ** (n / math.log(n)))
    alternating = dimension_gap_example('alternating_blocks', 2 ** 20)
    complement = dimension_gap_example('alternating_complement', 2 ** 20)
    assert set(range(1, 2)) <= set(alternating.elements)
    assert set(range(16, 2 ** 9 + 1)) <= set(alternating.elements)
    assert set(alternating.elements) | set(complement.elements) == set(range(2 ** 20))
    with pytest.raises(IntSetError):
        dimension_gap_example('unknown', 10)


def test_rescale_and_limit_points():
    A = restricted_digits(3, {0, 2}, 3 ** 6)
    X2 = limit_points(A, 3, 2)
    assert X2.points == (Fraction(0), Fraction(2, 9), Fraction(6, 9), Fraction(8, 9))
    assert len(rescale(A, 27)) == 8
    with pytest.raises(IntSetError):
        rescale(A, 0)
    with pytest.raises(IntSetError):
        rescale(A, 3 ** 7)


def test_serialization():
    A = restricted_digits(2, {0, 1}, 16)
    assert loads(dumps(A)) == A
    with pytest.raises(IntSetError):
        loads("1\n2\n")


if __name__ == "__main__":
    logger.info("Starting integer set tests")
    test_intset_validation()
    test_restricted_digits_and_invariance()
    test_closure_contains_every_digit_block()
    test_core_of_invariant_set_is_itself()
    test_core_drops_elements_without_psi_preimages()
    test_mass_dimension_of_digit_sets()
    test_hausdorff_dimension_estimates()
    for r, digits, depth in [(3, {0, 2}, 10), (4, {0, 3}, 8), (5, {0, 1, 3}, 7)]:
        test_hausdorff_and_mass_dimension_agree(r, digits, depth)
    test_floor_affine_sumset_matches_brute_force()
    test_same_base_sumset_counts()
    test_sumsets_with_wide_coefficients()
    test_affine_floor_and_scale()
    test_counterexample_properties()
    test_counterexample_counts_match_brute_force()
    test_dimension_gap_examples()
    test_rescale_and_limit_points()
    test_serialization()
    logger.info("Integer set tests completed (monkeypatched tests run under pytest only)")
