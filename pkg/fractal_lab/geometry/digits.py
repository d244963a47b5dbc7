"""Base-r Digit Arithmetic

Exact digit maps on arbitrary-size non-negative integers. Φ_r forgets
the least significant base-r digit and Ψ_r the most significant one.
All exponent comparisons are done with integer powers, never with
floating point logarithms, so identities such as s^{n'} ≤ r^n < s^{n'+1}
hold bit for bit.

Words are stored least-significant-first (w_0 is the units digit). The
big-endian value (w)_r of a word read most-significant-first is
available through big_endian_value.
"""

import logging
import math
from dataclasses import dataclass

logger = logging.getLogger(__name__)


class DigitError(ValueError):
    """Invalid radix, digit or argument to a digit map."""


def check_radix(r):
    """Validate a radix and return it as an int."""
    if int(r) != r or r < 2:
        raise DigitError(f"radix must be an integer >= 2, got {r}")
    return int(r)


@dataclass(frozen=True)
class DigitWord:
    """A finite word over {0, ..., r-1}, least significant digit first."""

    digits: tuple
    radix: int

    def __post_init__(self):
        check_radix(self.radix)
        object.__setattr__(self, 'digits', tuple(int(d) for d in self.digits))
        for d in self.digits:
            if not 0 <= d < self.radix:
                raise DigitError(f"digit {d} out of range for radix {self.radix}")

    def __len__(self):
        return len(self.digits)

    @property
    def is_canonical(self):
        # no most-significant zero, except the one-digit word (0,)
        return len(self.digits) <= 1 or self.digits[-1] != 0

    def value(self):
        return from_digits(self)

    def big_endian(self):
        """Digits most significant first."""
        return tuple(reversed(self.digits))


def phi(n, r):
    """Φ_r(n) = floor(n / r)."""
    r = check_radix(r)
    if n < 0:
        raise DigitError(f"phi needs a non-negative integer, got {n}")
    return n // r


def floor_log(n, r):
    """Return the unique k with r^k <= n < r^(k+1), by exact comparison.

    Args:
        n: positive integer
        r: radix

    Returns:
        k as an int
    """
    r = check_radix(r)
    if n < 1:
        raise DigitError(f"floor_log is undefined for n = {n}")
    # float estimate, corrected exactly
    k = max(0, int((n.bit_length() - 1) / math.log2(r)) - 1)
    power = r ** k
    while power > n:
        k -= 1
        power //= r
    while power * r <= n:
        k += 1
        power *= r
    return k


def psi(n, r):
    """Ψ_r(n): drop the most significant base-r digit. Ψ_r(0) = 0."""
    r = check_radix(r)
    if n < 0:
        raise DigitError(f"psi needs a non-negative integer, got {n}")
    if n == 0:
        return 0
    return n % r ** floor_log(n, r)


def n_prime(n, r, s):
    """The greatest k with s^k <= r^n.

    Aligns the base-r resolution ladder r^{-n} with the base-s ladder.
    """
    r = check_radix(r)
    s = check_radix(s)
    if n < 0:
        raise DigitError(f"n_prime needs n >= 0, got {n}")
    target = r ** n
    k = max(0, int(n * math.log(r) / math.log(s)) - 1)
    power = s ** k
    while power > target:
        k -= 1
        power //= s
    while power * s <= target:
        k += 1
        power *= s
    return k


def to_digits(n, r):
    """Canonical little-endian digit word of n; to_digits(0, r) is (0,)."""
    r = check_radix(r)
    if n < 0:
        raise DigitError(f"to_digits needs a non-negative integer, got {n}")
    if n == 0:
        return DigitWord((0,), r)
    digits = []
    while n:
        n, d = divmod(n, r)
        digits.append(d)
    return DigitWord(tuple(digits), r)


def to_digits_big_endian(n, r):
    """Digits of n most significant first, as a plain tuple."""
    return to_digits(n, r).big_endian()


def from_digits(word, r=None):
    """Evaluate a little-endian word: w_0 + w_1 r + ... ; the empty word is 0.

    Args:
        word: DigitWord, or a digit sequence together with r
        r: radix when word is a plain sequence
    """
    if not isinstance(word, DigitWord):
        if r is None:
            raise DigitError("from_digits needs a radix for a plain digit sequence")
        word = DigitWord(tuple(word), r)
    value = 0
    for d in reversed(word.digits):
        value = value * word.radix + d
    return value


def big_endian_value(word, r):
    """(w)_r = w_0 r^{l-1} + ... + w_{l-1} for digits read most significant first."""
    r = check_radix(r)
    value = 0
    for d in word:
        if not 0 <= d < r:
            raise DigitError(f"digit {d} out of range for radix {r}")
        value = value * r + d
    return value


def begins_with(n, word, r):
    """True iff n = (w)_r r^d + n_0 for some d >= 0 and 0 <= n_0 < r^d.

    The word is read most significant first. Leading zeros in the word are
    taken literally, so an all-zero word is a prefix of everything.
    """
    r = check_radix(r)
    if isinstance(word, DigitWord):
        word = word.big_endian()
    head = big_endian_value(word, r)
    if head == 0:
        return True
    scale = 1
    while head * scale <= n:
        if n < (head + 1) * scale:
            return True
        scale *= r
    return False
