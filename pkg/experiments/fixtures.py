"""
Fixture registry for the experiments.

Subshift fixtures use the short names of subshift.named_shift ("golden",
"even", "primegap:50", "digits:3:0,2", "full:10") or a path to a
plain-text fixture file. Integer-set fixtures add the truncation bound:

    - digits:R:D,D,...    restricted digit set
    - full / zero         [0, bound) and {0}
    - counterexample:R    the base-R half of the two-base counterexample
    - long_blocks, sparse_spread, alternating_blocks, alternating_complement
    - shift:NAME          the language set of a subshift fixture
"""

import logging
import os

from fractal_lab.geometry import intset, subshift

logger = logging.getLogger(__name__)

GAP_EXAMPLES = ('long_blocks', 'sparse_spread', 'alternating_blocks', 'alternating_complement')


class FixtureError(ValueError):
    """Unknown or malformed fixture name."""


def subshift_fixture(name):
    """Resolve a subshift fixture by name or fixture file path."""
    if os.path.isfile(name):
        with open(name) as handle:
            sigma = subshift.from_fixture_text(handle.read())
        logger.info(f"Loaded subshift fixture from {name}: {sigma}")
        return sigma
    try:
        return subshift.named_shift(name)
    except ValueError as e:
        raise FixtureError(str(e)) from e


def intset_fixture(name, bound):
    """Resolve an integer-set fixture truncated at bound."""
    key, _, rest = name.partition(':')
    try:
        if key == 'digits':
            radix, digits = rest.split(':')
            return intset.restricted_digits(int(radix), [int(d) for d in digits.split(',')], bound)
        if key == 'full' and not rest:
            return intset.from_range(bound)
        if key == 'zero' and not rest:
            return intset.single(0, bound)
        if key == 'counterexample':
            return intset.counterexample_set(int(rest), bound)
        if key in GAP_EXAMPLES and not rest:
            return intset.dimension_gap_example(key, bound)
        if key == 'shift':
            return subshift.embed(subshift_fixture(rest), bound)
    except ValueError as e:
        raise FixtureError(f"bad fixture {name!r}: {e}") from e
    raise FixtureError(f"unknown integer-set fixture {name!r}")


def fixture_radix(name):
    """The radix a digit-based integer-set fixture is invariant under, or None."""
    key, _, rest = name.partition(':')
    if key in ('digits', 'counterexample'):
        return int(rest.split(':')[0])
    if key == 'shift':
        return subshift_fixture(rest).radix
    return None
