"""
Experiment specifications.

A spec file is INI: one section per entry, with a `kind` naming the
experiment and the keys below. Integers accept powers written "2^20";
levels accept ranges written "1..40"; grid values are exact rationals;
fixtures are separated by semicolons.

    [golden]
    kind = dims
    fixtures = golden
    levels = 40
    target = 0.6942

Keys other than the common ones stay in `options` for the runner.
"""

import configparser
import logging
from dataclasses import dataclass, field
from fractions import Fraction

logger = logging.getLogger(__name__)

KINDS = ('dims', 'sumset_dim', 'counterexample', 'furstenberg', 'iterated_sumset',
         'digit_intersection', 'pipeline')
COMMON_KEYS = ('kind', 'fixtures', 'bases', 'levels', 'grid', 'bound', 'elements', 'out', 'seed')


class SpecError(ValueError):
    """A spec file that cannot be parsed or names an unknown experiment."""


def parse_int(text):
    text = text.strip()
    if '^' in text:
        base, exponent = text.split('^')
        return int(base) ** int(exponent)
    return int(text)


def parse_ints(text):
    values = []
    for part in text.split(','):
        part = part.strip()
        if '..' in part:
            lo, hi = part.split('..')
            values.extend(range(parse_int(lo), parse_int(hi) + 1))
        elif part:
            values.append(parse_int(part))
    return values


def parse_list(text):
    return [part.strip() for part in text.split(';') if part.strip()]


@dataclass
class ExperimentSpec:
    name: str
    kind: str
    fixtures: list = field(default_factory=list)
    bases: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    grid: list = field(default_factory=list)
    bound: int = None
    elements: list = field(default_factory=list)
    out: str = None
    seed: int = 0
    options: dict = field(default_factory=dict)

    def option(self, key, default=None, cast=str):
        value = self.options.get(key)
        return default if value is None else cast(value)

    def to_dict(self):
        return {
            'name': self.name, 'kind': self.kind, 'fixtures': self.fixtures, 'bases': self.bases,
            'levels': self.levels, 'grid': [str(g) for g in self.grid], 'bound': self.bound,
            'elements': self.elements, 'out': self.out, 'seed': self.seed, 'options': dict(self.options),
        }


def _entry(name, section, seed):
    kind = section.get('kind', '').strip().replace('-', '_')
    if kind not in KINDS:
        raise SpecError(f"[{name}]: unknown experiment kind {kind!r}")
    try:
        return ExperimentSpec(
            name=name,
            kind=kind,
            # fixture names may contain commas, so entries are split on ';'
            fixtures=parse_list(section.get('fixtures', '')),
            bases=parse_ints(section.get('bases', '')),
            levels=parse_ints(section.get('levels', '')),
            grid=[Fraction(v.strip()) for v in section.get('grid', '').split(',') if v.strip()],
            bound=parse_int(section['bound']) if 'bound' in section else None,
            elements=parse_ints(section.get('elements', '')),
            out=section.get('out'),
            seed=int(section.get('seed', seed)),
            options={k: v for k, v in section.items() if k not in COMMON_KEYS},
        )
    except (ValueError, ZeroDivisionError) as e:
        raise SpecError(f"[{name}]: {e}") from e


def loads(text, kind=None, seed=0):
    """Parse spec text; with kind given, keep only the entries of that kind."""
    parser = configparser.ConfigParser(interpolation=None)
    # keys are case sensitive (N, r, s in pipeline entries)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise SpecError(f"unreadable spec: {e}") from e
    specs = [_entry(name, parser[name], seed) for name in parser.sections()]
    if kind is not None:
        specs = [spec for spec in specs if spec.kind == kind]
    if not specs:
        raise SpecError(f"no {kind or 'experiment'} entries in the spec")
    logger.info(f"Loaded {len(specs)} spec entries")
    return specs


def load(path, kind=None, seed=0):
    try:
        with open(path) as handle:
            return loads(handle.read(), kind, seed)
    except OSError as e:
        raise SpecError(f"cannot read spec {path}: {e}") from e


DEFAULT_SPECS = {
    'dims': """
[golden]
kind = dims
fixtures = golden
levels = 40
target = 0.6942

[even]
kind = dims
fixtures = even
levels = 40
compare = golden

[prime_gap]
kind = dims
fixtures = primegap:50
levels = 40
target = 0.437
expect_prefix = 0, 1, 2, 4, 8, 9, 16, 17, 18, 32, 34, 36, 64, 65, 68, 72, 73
""",
    'sumset_dim': """
[transverse]
kind = sumset_dim
fixtures = digits:4:0,3; digits:5:0,4
bases = 4, 5
levels = 1..12
ladder = 4
grid = 1/2, 1, 3/2, 2
target = 0.9307

[same_base]
kind = sumset_dim
fixtures = digits:10:0,1,2; digits:10:0,1,2
bases = 10, 10
levels = 1..7
ladder = 10
grid = 1
independent = no
target = 0.69897
tolerance = same_base
exact_power = 5
""",
    'counterexample': """
[two_three]
kind = counterexample
bases = 2, 3
levels = 1..30
""",
    'furstenberg': """
[seeds]
kind = furstenberg
bases = 2, 3
bound = 2^20
elements = 0, 5
expect_interval = 1000
word_length = 4
""",
    'iterated_sumset': """
[digits_012]
kind = iterated_sumset
fixtures = digits:10:0,1,2
bases = 10
levels = 1..6
summands = 6

[full]
kind = iterated_sumset
fixtures = full
bases = 10
levels = 1..4
summands = 2

[zero]
kind = iterated_sumset
fixtures = zero
bases = 10
levels = 1..4
summands = 3
""",
    'digit_intersection': """
[folklore]
kind = digit_intersection
bases = 2, 3, 4, 5
bound = 10^7
expect = 0, 1, 82000
""",
    'pipeline': """
[golden_cantor]
kind = pipeline
r = 2
s = 3
m = 4
N = 4
t = 1/2
epsilon = 1/2
interval = 0, 1
x_fixture = golden
y_fixture = digits:3:0,2
sweep = 16
""",
}
