#!/usr/bin/env python

"""
Tests for base-r digit arithmetic
"""

import logging
import math

import numpy as np
import pytest

from fractal_lab.geometry.digits import (
    DigitError,
    DigitWord,
    begins_with,
    big_endian_value,
    floor_log,
    from_digits,
    n_prime,
    phi,
    psi,
    to_digits,
    to_digits_big_endian,
)

logging.basicConfig(level=logging.INFO,
                    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger('digits_test')

RANDOM_SAMPLES = 10 ** 5


def random_cases(seed=0, count=RANDOM_SAMPLES):
    rng = np.random.default_rng(seed)
    ns = rng.integers(1, 2 ** 62, size=count)
    rs = rng.integers(2, 13, size=count)
    return [(int(n), int(r)) for n, r in zip(ns, rs)]


def test_digit_maps_known_values():
    assert phi(71393, 10) == 7139
    assert psi(71393, 10) == 1393
    assert psi(0, 10) == 0
    assert phi(0, 7) == 0
    assert psi(7, 10) == 0
    # Ψ drops only the leading digit; zeros after it stay as value
    assert psi(1005, 10) == 5


def test_floor_log_exact_at_powers():
    for r in range(2, 13):
        for k in range(0, 60):
            assert floor_log(r ** k, r) == k
            if k:
                assert floor_log(r ** k - 1, r) == k - 1
    assert floor_log(10 ** 300, 10) == 300


def test_floor_log_rejects_zero():
    with pytest.raises(DigitError):
        floor_log(0, 10)
    with pytest.raises(DigitError):
        phi(5, 1)


def test_digit_deletion_equivalence():
    """Φ and Ψ agree with deleting the first and last digit of the canonical word."""
    for n, r in random_cases():
        word = to_digits(n, r)
        assert phi(n, r) == from_digits(word.digits[1:], r)
        assert psi(n, r) == from_digits(word.digits[:-1], r)


def test_round_trips():
    for n, r in random_cases(seed=1):
        word = to_digits(n, r)
        assert word.is_canonical
        assert from_digits(word) == n
        assert big_endian_value(to_digits_big_endian(n, r), r) == n
        assert len(word) == floor_log(n, r) + 1
    assert to_digits(0, 10).digits == (0,)
    assert from_digits((), 3) == 0


def test_n_prime_exact():
    for n in range(0, 400):
        for r, s in ((2, 3), (3, 2), (2, 5), (10, 7)):
            k = n_prime(n, r, s)
            assert s ** k <= r ** n < s ** (k + 1)
    assert n_prime(0, 2, 3) == 0
    assert n_prime(4, 2, 3) == 2


def test_begins_with():
    assert begins_with(71393, (7, 1), 10)
    assert begins_with(7, (7,), 10)
    assert not begins_with(71393, (7, 2), 10)
    assert not begins_with(6, (7,), 10)
    assert begins_with(12, (1, 1), 2)
    # leading zeros taken literally: the all-zero word leads everything
    assert begins_with(5, (0, 0), 2)
    assert begins_with(71393, DigitWord((1, 7), 10), 10)


def test_digit_word_validation():
    with pytest.raises(DigitError):
        DigitWord((3,), 3)
    with pytest.raises(DigitError):
        big_endian_value((1, 10), 10)
    assert not DigitWord((1, 0), 10).is_canonical
    assert DigitWord((0,), 10).is_canonical
    assert DigitWord((3, 2, 1), 10).value() == 123


def test_floor_log_matches_float_for_small_values():
    for n in range(1, 5000):
        for r in (2, 3, 10):
            assert r ** floor_log(n, r) <= n < r ** (floor_log(n, r) + 1)
            assert floor_log(n, r) == int(math.floor(math.log(n, r) + 1e-12))


if __name__ == "__main__":
    logger.info("Starting digit arithmetic tests")
    test_digit_maps_known_values()
    test_floor_log_exact_at_powers()
    test_floor_log_rejects_zero()
    test_digit_deletion_equivalence()
    test_round_trips()
    test_n_prime_exact()
    test_begins_with()
    test_digit_word_validation()
    test_floor_log_matches_float_for_small_values()
    logger.info("Digit arithmetic tests completed")
