#!/usr/bin/env python

"""
Tests for subshift presentations, language counting and entropy
"""

import logging
import math
from itertools import product

import networkx as nx
import pytest

from fractal_lab.geometry import intset
from fractal_lab.geometry.subshift import (
    EmptySubshiftError,
    Subshift,
    embed,
    entropy,
    enumerate_words,
    even_shift,
    fit_slope,
    from_fixture_text,
    full_shift,
    golden_mean_shift,
    language_count,
    language_counts,
    named_shift,
    prime_gap_shift,
    restricted_digit_shift,
    sft_from_forbidden,
)
from fractal_lab.geometry.digits import DigitError, to_digits

logging.basicConfig(level=logging.INFO,
                    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger('subshift_test')

GOLDEN_DIMENSION = 0.6942
PRIME_GAP_DIMENSION = 0.437
PRIME_GAP_PREFIX = [0, 1, 2, 4, 8, 9, 16, 17, 18, 32, 34, 36, 64, 65, 68, 72, 73]


def brute_force_avoiding(r, forbidden, N):
    """Words of length N containing none of the forbidden words."""
    words = []
    for w in product(range(r), repeat=N):
        text = ''.join(map(str, w))
        if not any(''.join(map(str, f)) in text for f in forbidden):
            words.append(w)
    return words


def in_even_language(w):
    """0-runs enclosed by 1's on both sides have even length."""
    ones = [i for i, a in enumerate(w) if a == 1]
    return all((b - a - 1) % 2 == 0 for a, b in zip(ones, ones[1:]))


def test_golden_mean_counts():
    golden = golden_mean_shift()
    assert language_count(golden, 10) == 144
    assert language_counts(golden, 5) == [1, 2, 3, 5, 8, 13]
    assert embed(golden, 16).elements == (0, 1, 2, 4, 5, 8, 9, 10)


def test_counts_match_brute_force():
    for r, forbidden in ((2, [(1, 1)]), (3, [(0, 2), (1, 1)]), (2, [(1, 0, 1)]), (3, [(2,)])):
        sigma = sft_from_forbidden(r, forbidden)
        for N in range(0, 8):
            expected = brute_force_avoiding(r, forbidden, N)
            assert language_count(sigma, N) == len(expected)
            assert enumerate_words(sigma, N) == sorted(expected)


def test_even_shift_language():
    even = even_shift()
    for N in range(1, 11):
        expected = [w for w in product((0, 1), repeat=N) if in_even_language(w)]
        assert language_count(even, N) == len(expected)
    assert even.accepts((1, 0, 0, 1))
    assert not even.accepts((1, 0, 1))
    # a leading odd 0-run has no 1 before it
    assert even.accepts((0, 1, 0, 0, 1))


def test_full_and_restricted_shifts():
    assert language_count(full_shift(10), 6) == 10 ** 6
    cantor = restricted_digit_shift(3, [0, 2])
    assert language_count(cantor, 7) == 2 ** 7
    A = embed(cantor, 3 ** 4)
    assert all(set(to_digits(a, 3).digits) <= {0, 2} for a in A.elements)
    assert len(A) == 2 ** 4


def test_entropy_estimates():
    golden = entropy(golden_mean_shift(), 40)
    assert abs(golden.slope - GOLDEN_DIMENSION) <= 0.01
    assert abs(golden.spectral - math.log((1 + math.sqrt(5)) / 2, 2)) <= 0.005
    even = entropy(even_shift(), 40)
    assert abs(even.slope - golden.slope) <= 0.01
    assert abs(entropy(full_shift(7), 20).slope - 1.0) <= 1e-9


def test_fit_slope_uses_top_half_of_levels():
    levels = list(range(1, 11))
    assert abs(fit_slope(levels, [0.5 * N + 3 for N in levels]) - 0.5) <= 1e-9
    # the bottom half is ignored
    bent = [10.0] * 5 + [2.0 * N for N in levels[5:]]
    assert abs(fit_slope(levels, bent) - 2.0) <= 1e-9
    assert fit_slope([4], [2.0]) == 0.5
    assert fit_slope([], []) == 0.0
    assert intset.fit_slope is fit_slope


def test_prime_gap_shift():
    sigma = prime_gap_shift(50)
    estimate = entropy(sigma, 40)
    assert abs(estimate.slope - PRIME_GAP_DIMENSION) <= 0.01
    assert list(embed(sigma, 74).elements) == PRIME_GAP_PREFIX


def test_empty_subshift_rejected():
    with pytest.raises(EmptySubshiftError):
        sft_from_forbidden(2, [(0,), (1,)])
    G = nx.MultiDiGraph()
    G.add_edge('a', 'b', label=0)
    with pytest.raises(EmptySubshiftError):
        Subshift(2, G)


def test_nondeterministic_presentation_counts():
    """Two edges with the same label from one state still count each word once."""
    G = nx.MultiDiGraph()
    G.add_edge('a', 'a', label=0)
    G.add_edge('a', 'b', label=0)
    G.add_edge('b', 'a', label=1)
    sigma = Subshift(2, G, name='doubled')
    for N in range(1, 9):
        expected = brute_force_avoiding(2, [(1, 1)], N)
        assert language_count(sigma, N) == len(expected)


def test_fixture_text():
    sigma = from_fixture_text("radix 2\n# golden mean\nforbid 11\n")
    assert language_count(sigma, 10) == 144
    assert from_fixture_text("radix 2\neven\n").name == 'even'
    with pytest.raises(DigitError):
        from_fixture_text("forbid 11\n")
    with pytest.raises(DigitError):
        from_fixture_text("radix 2\nforbid 12\n")


def test_named_shift():
    assert language_count(named_shift('golden'), 10) == 144
    assert language_count(named_shift('digits:10:0,1,2'), 3) == 27
    assert named_shift('full:4').radix == 4
    assert named_shift('primegap:7').name == 'prime gap (cap 7)'
    with pytest.raises(DigitError):
        named_shift('golden:2')
    with pytest.raises(DigitError):
        named_shift('nothing')


if __name__ == "__main__":
    logger.info("Starting subshift tests")
    test_golden_mean_counts()
    test_counts_match_brute_force()
    test_even_shift_language()
    test_full_and_restricted_shifts()
    test_entropy_estimates()
    test_fit_slope_uses_top_half_of_levels()
    test_prime_gap_shift()
    test_empty_subshift_rejected()
    test_nondeterministic_presentation_counts()
    test_fixture_text()
    test_named_shift()
    logger.info("Subshift tests completed")
