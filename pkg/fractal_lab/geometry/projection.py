"""Projections, Exceptional Directions and Rotation Orbits

Orthogonal projections π_θ onto the line through the origin at angle θ,
oblique projections Π_t(x, y) = x + t y, the arcs of angles where a
vector projects short, the scan for exceptional directions of a finite
planar set, good oblique slopes with separated subsets, the rotation
x -> x + α (mod β) that aligns base-r and base-s scales, discrepancy of
finite sequences, and the search for an element of a ×s-invariant set
with a prescribed leading base-r word.

Angle scans run in float64; every statement that is reported as exact
(separation of extracted subsets, orbit branches, leading words) is
re-checked in Decimal or integer arithmetic.
"""

import bisect
import decimal
import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import precision, setting
from .digits import DigitWord, begins_with, big_endian_value, check_radix, floor_log, n_prime
from .fractal import PointSet1D, metric_entropy

logger = logging.getLogger(__name__)

# |arc| <= TRANSVERSALITY_CONSTANT * ρ / |x| for each arc of transversality_arcs
TRANSVERSALITY_CONSTANT = math.pi
SCAN_COLUMNS = ['theta_or_t', 'entropy_of_projection', 'flagged']


class DependentBasesError(ValueError):
    """r and s are multiplicatively dependent (r^a = s^b for small a, b)."""


class WordSearchError(LookupError):
    """No element with the requested leading word inside the truncation."""


def multiplicatively_independent(r, s, cap=None):
    """False iff r^a = s^b for some 1 <= a, b <= cap.

    Args:
        r, s: radices
        cap: exponent bound (INDEPENDENCE_EXPONENT_CAP by default)
    """
    r = check_radix(r)
    s = check_radix(s)
    cap = cap or setting('INDEPENDENCE_EXPONENT_CAP')
    powers = {s ** b for b in range(1, cap + 1)}
    return not any(r ** a in powers for a in range(1, cap + 1))


def require_independent(r, s):
    if not multiplicatively_independent(r, s):
        logger.error(f"bases {r} and {s} are multiplicatively dependent")
        raise DependentBasesError(f"bases {r} and {s} are multiplicatively dependent")


# Arcs

@dataclass
class ArcSet:
    """Disjoint half-open intervals [lo, hi), merged and sorted."""

    intervals: list = field(default_factory=list)

    def __post_init__(self):
        merged = []
        for lo, hi in sorted((lo, hi) for lo, hi in self.intervals if hi > lo):
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        self.intervals = merged

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    @property
    def length(self):
        return sum(hi - lo for lo, hi in self.intervals)

    def contains(self, x):
        i = bisect.bisect_right([lo for lo, _ in self.intervals], x) - 1
        return i >= 0 and x < self.intervals[i][1]

    def shift(self, d):
        return ArcSet([(lo + d, hi + d) for lo, hi in self.intervals])

    def clip(self, lo, hi):
        return ArcSet([(max(a, lo), min(b, hi)) for a, b in self.intervals])

    def complement(self, lo, hi):
        gaps = []
        cursor = lo
        for a, b in self.clip(lo, hi):
            if a > cursor:
                gaps.append((cursor, a))
            cursor = max(cursor, b)
        if cursor < hi:
            gaps.append((cursor, hi))
        return ArcSet(gaps)


def wrapped_arc(start, length, period):
    """The arc [start, start + length) on a circle of the given period, as ≤ 2 intervals."""
    if length >= period:
        return ArcSet([(0, period)])
    start = start % period
    end = start + length
    if end <= period:
        return ArcSet([(start, end)])
    return ArcSet([(start, period), (0, end - period)])


# Projections

def _decimal_points(P):
    ctx = precision.context()
    return [(precision.to_decimal(x, ctx), precision.to_decimal(y, ctx)) for x, y in P]


def oblique(P, t):
    """Π_{e^t}(x, y) = x + e^t y, in Decimal."""
    ctx = precision.context()
    scale = precision.exp(t, ctx=ctx)
    with decimal.localcontext(ctx):
        return PointSet1D([x + scale * y for x, y in _decimal_points(P)])


def orthogonal_coordinates(P, theta):
    """Signed coordinates of π_θ P along (cos θ, sin θ), float64."""
    xy = np.asarray([(float(x), float(y)) for x, y in P], dtype=float).reshape(-1, 2)
    return xy[:, 0] * math.cos(theta) + xy[:, 1] * math.sin(theta)


def project(P, t, kind='oblique'):
    """Image of a planar set under Π_{e^t} ('oblique') or π_θ with θ = t ('orthogonal')."""
    if kind == 'oblique':
        return oblique(P, t)
    if kind == 'orthogonal':
        if not 0 <= t < math.pi:
            raise ValueError(f"orthogonal projection needs theta in [0, pi), got {t}")
        return PointSet1D([Decimal(repr(float(v))) for v in orthogonal_coordinates(P, t)])
    raise ValueError(f"unknown projection kind {kind}")


def transversality_arcs(x, rho):
    """{θ ∈ [0, π) : |π_θ x| <= ρ} as at most two arcs.

    With x = |x| (cos φ, sin φ), π_θ x = |x| cos(θ - φ), so the set is the
    closed arc of half-width arcsin(ρ / |x|) about φ + π/2 (mod π). Its
    diameter is at most π ρ / |x|.
    """
    a, b = float(x[0]), float(x[1])
    norm = math.hypot(a, b)
    if norm == 0:
        raise ValueError("transversality_arcs needs a nonzero vector")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    ratio = float(rho) / norm
    if ratio >= 1:
        return ArcSet([(0.0, math.pi)])
    half = math.asin(ratio)
    center = (math.atan2(b, a) + math.pi / 2) % math.pi
    return wrapped_arc(center - half, 2 * half, math.pi)


# Exceptional directions

def max_covered(values, width, windows):
    """Largest number of sorted values covered by `windows` half-open windows [v, v + width).

    Windows may be assumed to start at points, so with next(i) the first
    index at or beyond values[i] + width,
    f_j(i) = max(f_j(i + 1), next(i) - i + f_{j-1}(next(i))).
    """
    n = len(values)
    if n == 0 or windows <= 0:
        return 0
    values = np.sort(np.asarray(values, dtype=float))
    nxt = np.searchsorted(values, values + width, side='left')
    idx = np.arange(n)
    best = np.zeros(n + 1, dtype=np.int64)
    for _ in range(min(windows, n)):
        gain = nxt - idx + best[nxt]
        current = np.zeros(n + 1, dtype=np.int64)
        current[:n] = np.maximum.accumulate(gain[::-1])[::-1]
        if np.array_equal(current, best):
            break
        best = current
    return int(best[0])


@dataclass
class ScanResult:
    """Per-grid-point entropies and flags, plus the merged flagged arcs."""

    angles: list
    entropies: list
    flagged: list
    arcs: ArcSet
    step: float
    rho: float

    @property
    def cover_size(self):
        return len(self.arcs)

    @property
    def flagged_fraction(self):
        return sum(self.flagged) / len(self.flagged) if self.flagged else 0.0

    def to_frame(self):
        return pd.DataFrame({'theta_or_t': self.angles, 'entropy_of_projection': self.entropies,
                             'flagged': self.flagged}, columns=SCAN_COLUMNS)


def _flag_runs(grid, flagged, step):
    arcs = []
    start = None
    for value, flag in zip(grid, flagged):
        if flag and start is None:
            start = value
        if not flag and start is not None:
            arcs.append((start, value))
            start = None
    if start is not None:
        arcs.append((start, grid[-1] + step))
    return ArcSet(arcs)


def _classify(coordinates, rho, windows, needed):
    entropy = metric_entropy(PointSet1D(coordinates.tolist()), rho)
    return entropy, max_covered(coordinates, rho, windows) >= needed


def exceptional_scan(A, rho, delta, m, resolution=None, n_jobs=1):
    """Classify a uniform angle grid by membership in the exceptional set.

    θ is exceptional when some A' ⊆ A with |A'| >= δ|A| has
    N(π_θ A', ρ) <= m. That holds exactly when m half-open windows of
    length ρ cover δ|A| projected points, which max_covered decides.

    Args:
        A: PointSet2D
        rho: scale
        delta: proportion in (0, 1]
        m: number of clusters allowed
        resolution: grid step (ρ/4 by default)
        n_jobs: joblib workers over the grid

    Returns:
        ScanResult whose arcs cover the flagged grid cells
    """
    if not 0 < delta <= 1 or m < 0:
        raise ValueError(f"need 0 < delta <= 1 and m >= 0, got {delta}, {m}")
    rho = float(rho)
    step = float(resolution or rho / 4)
    grid = list(np.arange(0.0, math.pi, step))
    needed = math.ceil(delta * len(A) - 1e-12)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_classify)(orthogonal_coordinates(A, theta), rho, m, needed) for theta in grid)
    entropies = [e for e, _ in results]
    flagged = [bool(f) for _, f in results]
    arcs = _flag_runs(grid, flagged, step).clip(0.0, math.pi)
    logger.info(f"exceptional scan: {sum(flagged)} of {len(grid)} angles flagged, {len(arcs)} arcs")
    return ScanResult(grid, entropies, flagged, arcs, step, rho)


def scan_to_csv(scan, path=None):
    """Write the scan rows; returns the CSV text when no path is given."""
    frame = scan.to_frame()
    if path is None:
        return frame.to_csv(index=False)
    frame.to_csv(path, index=False)
    logger.info(f"scan written to {path}")
    return path


# Good slopes

@dataclass
class GoodSlopes:
    """Good oblique parameters T within I, and the scan behind it."""

    good: ArcSet
    bad: ArcSet
    interval: tuple
    step: float
    subset_size: int
    separated_size: int
    separation: float

    @property
    def bad_measure(self):
        return self.bad.length


def check_marstrand_chain(gamma2, gamma3, gamma4=None, gamma5=None):
    """0 < γ2 < γ3, γ2 < 1, and when given, γ3 < γ4 < γ5 with 2(γ5 - γ3) < γ4 - γ2."""
    g2, g3 = Fraction(gamma2), Fraction(gamma3)
    if not 0 < g2 < g3 or not g2 < 1:
        raise ValueError(f"need 0 < gamma2 < gamma3 and gamma2 < 1, got {gamma2}, {gamma3}")
    if gamma4 is not None and gamma5 is not None:
        g4, g5 = Fraction(gamma4), Fraction(gamma5)
        if not g3 < g4 < g5:
            raise ValueError(f"need gamma3 < gamma4 < gamma5, got {gamma3}, {gamma4}, {gamma5}")
        if not 2 * (g5 - g3) < g4 - g2:
            raise ValueError(f"need 2(gamma5 - gamma3) < gamma4 - gamma2, got {gamma2}..{gamma5}")


def slope_is_good(A, t, subset_size, separated_size, separation):
    """Every A' ⊆ A with |A'| >= subset_size has a separated_size subset with separation-separated Π_{e^t} image.

    Equivalent to: no separated_size - 1 windows of length `separation`
    cover subset_size projected points.
    """
    scale = math.exp(t)
    values = np.asarray([float(x) + scale * float(y) for x, y in A], dtype=float)
    return max_covered(values, separation, separated_size - 1) < subset_size


def good_slopes(A, interval, epsilon, gamma2, gamma3, rho, c3, gamma4=None, gamma5=None,
                resolution=None, n_jobs=1):
    """Slopes t ∈ I where every large subset keeps a separated oblique image.

    The grid over I has step ρ/4 unless given. A grid point t is good when
    each A' ⊆ A of size ⌈ρ^{-γ3}⌉ has ⌈ρ^{-γ2}⌉ points whose images under
    Π_{e^t} are c3 ρ-separated. c3 is a number or a function of t. Only the
    cells between two good grid points count as good: every bad run is
    widened by one step to the left and the runs are merged into half-open
    intervals.

    Returns:
        GoodSlopes; `separation` is the widest c3 ρ used
    """
    check_marstrand_chain(gamma2, gamma3, gamma4, gamma5)
    lo, hi = float(interval[0]), float(interval[1])
    step = float(resolution or float(rho) / 4)
    subset_size = math.ceil(float(rho) ** (-float(gamma3)) - 1e-9)
    separated_size = math.ceil(float(rho) ** (-float(gamma2)) - 1e-9)
    grid = list(np.arange(lo, hi, step)) or [lo]
    widths = [float(c3(t) if callable(c3) else c3) * float(rho) for t in grid]
    flags = Parallel(n_jobs=n_jobs)(
        delayed(slope_is_good)(A, t, subset_size, separated_size, width) for t, width in zip(grid, widths))
    runs = _flag_runs(grid, [not f for f in flags], step)
    bad = ArcSet([(a - step, b) for a, b in runs]).clip(lo, hi)
    good = bad.complement(lo, hi)
    if bad.length >= epsilon:
        logger.warning(f"bad slopes measure {bad.length:.4f} exceeds epsilon {epsilon}")
    return GoodSlopes(good, bad, (lo, hi), step, subset_size, separated_size, max(widths))


def extract_separated(points, t, separation):
    """One point per greedy cluster of the Π_{e^t} image: a separated subset.

    Returns:
        list of the chosen points, in projection order
    """
    images = oblique(points, t)
    image_of = {}
    ctx = precision.context()
    scale = precision.exp(t, ctx=ctx)
    with decimal.localcontext(ctx):
        for p in points:
            image_of.setdefault(precision.to_decimal(p[0], ctx) + scale * precision.to_decimal(p[1], ctx), p)
    sep = precision.to_decimal(separation, ctx)
    chosen = []
    last = None
    for value in images:
        if last is None or value - last >= sep:
            chosen.append(image_of[value])
            last = value
    return chosen


def is_separated_image(points, t, separation):
    """Pairwise distances of the Π_{e^t} image are all >= separation (Decimal)."""
    images = list(oblique(points, t))
    if len(images) < len(set(points)):
        return False
    sep = precision.to_decimal(separation)
    return all(b - a >= sep for a, b in zip(images, images[1:]))


# Rotation orbit

@dataclass
class RotationOrbit:
    """R^n(0) for the rotation x -> x + α (mod β), α = log(r^m / s^m'), β = log s.

    points[n] is R^n(0) obtained by iterating the rotation in Decimal,
    primes[n] is (nm)' from big-integer comparison, wrapped[n] records
    R^n(0) + α >= β, exact_wrapped[n] records ((n+1)m)' = (nm)' + m' + 1.
    """

    r: int
    s: int
    m: int
    m_prime: int
    alpha: Decimal
    beta: Decimal
    points: list
    primes: list
    wrapped: list
    exact_wrapped: list

    def residuals(self):
        """|R^n(0) + (nm)' log s - nm log r| per n."""
        ctx = precision.context()
        log_r = precision.ln(self.r, ctx=ctx)
        log_s = precision.ln(self.s, ctx=ctx)
        with decimal.localcontext(ctx):
            return [abs(x + k * log_s - n * self.m * log_r)
                    for n, (x, k) in enumerate(zip(self.points, self.primes))]

    def branch_mismatches(self):
        return [n for n, (a, b) in enumerate(zip(self.wrapped, self.exact_wrapped)) if a != b]

    def normalized(self):
        """The orbit scaled to [0, 1) as floats."""
        return [float(x / self.beta) for x in self.points]


def rotation_orbit(r, s, m, N):
    """R^n(0) for n = 0..N with the exact companions (nm)'."""
    r = check_radix(r)
    s = check_radix(s)
    require_independent(r, s)
    ctx = precision.context()
    m_prime = n_prime(m, r, s)
    beta = precision.ln(s, ctx=ctx)
    with decimal.localcontext(ctx):
        alpha = m * precision.ln(r, ctx=ctx) - m_prime * beta
    r_step, s_step = r ** m, s ** m_prime
    r_pow, s_pow, k = 1, 1, 0
    x = Decimal(0)
    points, primes, wrapped, exact = [x], [0], [], []
    with decimal.localcontext(ctx):
        for _ in range(N):
            r_pow *= r_step
            s_pow *= s_step
            k += m_prime
            carry = s_pow * s <= r_pow
            if carry:
                s_pow *= s
                k += 1
            exact.append(carry)
            x = x + alpha
            wrapped.append(x >= beta)
            if x >= beta:
                x = x - beta
            points.append(x)
            primes.append(k)
    logger.debug(f"rotation orbit r={r} s={s} m={m}: alpha={float(alpha):.6f}, {N} steps")
    return RotationOrbit(r, s, m, m_prime, alpha, beta, points, primes, wrapped, exact)


# Discrepancy

def star_discrepancy(values):
    """D*_N = max_i max(i/N - x_(i), x_(i) - (i-1)/N) over the sorted sequence."""
    xs = np.sort(np.asarray(values, dtype=float))
    N = len(xs)
    if N == 0:
        return 0.0
    i = np.arange(1, N + 1)
    return float(max(np.max(i / N - xs), np.max(xs - (i - 1) / N)))


def discrepancy(values):
    """Extreme discrepancy over half-open intervals: 1/N + max(i/N - x_(i)) - min(i/N - x_(i))."""
    xs = np.sort(np.asarray(values, dtype=float))
    N = len(xs)
    if N == 0:
        return 0.0
    d = np.arange(1, N + 1) / N - xs
    return float(min(1.0, 1.0 / N + d.max() - d.min()))


def visit_fraction(values, arcs):
    """Share of the sequence that lands in the arc set."""
    values = list(values)
    if not values:
        return 0.0
    return sum(1 for v in values if arcs.contains(v)) / len(values)


# Leading words

def word_arc(w, r):
    """I_w: the arc of {log x / log r} mod 1 for which floor(x) begins with w.

    Args:
        w: DigitWord (reading order is most significant first) or a
            big-endian digit tuple
        r: radix

    Returns:
        ArcSet on [0, 1) with float endpoints
    """
    r = check_radix(r)
    digits = w.big_endian() if isinstance(w, DigitWord) else tuple(w)
    head = big_endian_value(digits, r)
    if head < 1:
        raise ValueError("word_arc needs (w)_r >= 1")
    ctx = precision.context()
    start = precision.log_base(head, r, ctx=ctx)
    end = precision.log_base(head + 1, r, ctx=ctx)
    with decimal.localcontext(ctx):
        length = end - start
        offset = start - int(start)
    if length >= 1:
        return ArcSet([(0.0, 1.0)])
    return wrapped_arc(float(offset), float(length), 1.0)


def _log_fraction(numerator, denominator, r, ctx):
    with decimal.localcontext(ctx):
        value = (ctx.ln(Decimal(numerator)) - ctx.ln(Decimal(denominator))) / ctx.ln(Decimal(r))
        return float(value - int(value)) if value >= 0 else float(value - int(value) + 1)


def _scan_chain(n, s, digits, head, r, arc, ctx):
    k = floor_log(n, s) if n > 0 else 0
    for i in range(k + 1):
        scale = s ** (k - i)
        # s^i x with x = n / s^k
        if n < head * scale:
            continue
        if arc.contains(_log_fraction(n, scale, r, ctx)):
            candidate = n // scale
            if begins_with(candidate, digits, r):
                return candidate
    return None


def find_beginning_with(B, w, r, s, seeds=None, max_seeds=None):
    """An element of a ×s-invariant set that begins with w in base r.

    For a seed n with k = floor(log_s n), the numbers floor(s^i n / s^k)
    are Φ_s-iterates of n, hence in B. The scan keeps the i whose
    {log(s^i x) / log r} falls in I_w and returns the first one that
    passes the exact leading-word check.

    Args:
        B: IntSet (its elements are the seeds, largest first) or None when
            seeds are given
        w: word, most significant digit first
        r, s: radices
        seeds: optional iterable of known elements of B
        max_seeds: stop after this many seeds

    Raises:
        WordSearchError: nothing found inside the truncation
    """
    r = check_radix(r)
    s = check_radix(s)
    digits = w.big_endian() if isinstance(w, DigitWord) else tuple(w)
    head = big_endian_value(digits, r)
    if head == 0:
        return 0
    arc = word_arc(digits, r)
    ctx = precision.context()
    if seeds is None:
        seeds = reversed(B.elements)
    for count, n in enumerate(seeds):
        if max_seeds is not None and count >= max_seeds:
            break
        found = _scan_chain(n, s, digits, head, r, arc, ctx)
        if found is not None:
            return found
    logger.warning(f"no element beginning with {digits} in base {r} inside the truncation")
    raise WordSearchError(f"no element beginning with {digits} in base {r} found")
