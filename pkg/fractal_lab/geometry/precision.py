"""High Precision Reals

Shared decimal contexts for the few inexact steps in the library
(γ-th powers, logarithms, e^t). Values feeding a pass/fail decision are
widened in the conservative direction so a pass is sound.
"""

import decimal
from decimal import Decimal
from fractions import Fraction

from . import setting

UP = 'up'
DOWN = 'down'


def context(precision=None):
    """Build a decimal context with the configured number of significant digits."""
    return decimal.Context(prec=precision or setting('DECIMAL_PRECISION'),
                           rounding=decimal.ROUND_HALF_EVEN)


def to_decimal(value, ctx=None):
    """Convert an int, Fraction, float or Decimal to a Decimal in the given context."""
    ctx = ctx or context()
    if isinstance(value, Decimal):
        return ctx.plus(value)
    if isinstance(value, Fraction):
        return ctx.divide(Decimal(value.numerator), Decimal(value.denominator))
    if isinstance(value, float):
        return ctx.plus(Decimal(value))
    return ctx.plus(Decimal(int(value)))


def widen(value, direction, ctx=None):
    """Push a rounded result past its error bound.

    The decimal module rounds ln, exp and power to nearest, so the true
    value is within half an ulp. Moving a few ulps is a safe enclosure.
    """
    ctx = ctx or context()
    slack = Decimal(10) ** (-(ctx.prec - 4))
    bump = abs(value) * slack + slack
    if direction == UP:
        return ctx.add(value, bump)
    if direction == DOWN:
        return ctx.subtract(value, bump)
    return value


def ln(value, direction=None, ctx=None):
    ctx = ctx or context()
    value = to_decimal(value, ctx)
    if value == 1:
        return Decimal(0)
    return widen(ctx.ln(value), direction, ctx)


def log_base(value, base, direction=None, ctx=None):
    """log_base(value) with optional directed rounding; log of exactly 1 is exactly 0."""
    ctx = ctx or context()
    value = to_decimal(value, ctx)
    if value == 1:
        return Decimal(0)
    result = ctx.divide(ctx.ln(value), ctx.ln(to_decimal(base, ctx)))
    return widen(result, direction, ctx)


def power(base, exponent, direction=None, ctx=None):
    """base ** exponent for a positive base and real exponent."""
    ctx = ctx or context()
    result = ctx.power(to_decimal(base, ctx), to_decimal(exponent, ctx))
    return widen(result, direction, ctx)


def exp(value, direction=None, ctx=None):
    ctx = ctx or context()
    return widen(ctx.exp(to_decimal(value, ctx)), direction, ctx)
