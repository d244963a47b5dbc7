"""Truncated ×r-Structured Integer Sets

An IntSet is A ∩ [0, bound) for a set A of non-negative integers: the
elements are stored sorted and the bound travels with them, so every
operation knows where the truncation begins.

This module checks ×r-invariance (Φ_r(A) ⊆ A and Ψ_r(A) ⊆ A), builds
closures and the core A' with Φ_r(A') = Ψ_r(A') = A', estimates mass and
discrete Hausdorff dimension, forms exact sumsets and floor-affine images,
and constructs the two-base counterexample pair whose sumset stays small.

Example usage:
    - A = restricted_digits(3, {0, 2}, 3 ** 8)
    - check_invariance(A, 3)          -> (True, True)
    - mass_dimension(A, 3).slope      -> log 2 / log 3
"""

import bisect
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import setting
from .digits import check_radix, floor_log, phi, psi
from .fractal import PointSet1D, cover_dp_integer
from .subshift import fit_slope

logger = logging.getLogger(__name__)

# levels with more points than this are left out of the Hausdorff estimate
HAUSDORFF_POINT_CAP = 4096
SERIAL_HEADER = "# bound="


class IntSetError(ValueError):
    """Invalid elements, scalars or serialized data for an IntSet."""


@dataclass(frozen=True)
class IntSet:
    """A ∩ [0, bound) with sorted, duplicate-free elements."""

    elements: tuple
    bound: int

    def __post_init__(self):
        elements = tuple(int(a) for a in self.elements)
        object.__setattr__(self, 'elements', elements)
        object.__setattr__(self, 'bound', int(self.bound))
        if self.bound < 0:
            raise IntSetError(f"bound must be non-negative, got {self.bound}")
        if elements and (elements[0] < 0 or elements[-1] >= self.bound):
            raise IntSetError(f"elements must lie in [0, {self.bound})")
        if any(x >= y for x, y in zip(elements, elements[1:])):
            raise IntSetError("elements must be sorted and duplicate-free")

    @classmethod
    def from_array(cls, values, bound):
        """Build from any iterable or numpy array, sorting and deduplicating."""
        values = np.unique(np.asarray(values, dtype=object if bound >= 2 ** 62 else np.int64))
        values = values[values < bound]
        return cls(tuple(int(v) for v in values), bound)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, n):
        return n in self.members

    @cached_property
    def members(self):
        return frozenset(self.elements)

    @cached_property
    def array(self):
        """Elements as a numpy array (int64 while the bound allows it)."""
        dtype = object if self.bound >= 2 ** 62 else np.int64
        return np.asarray(self.elements, dtype=dtype)

    def count_below(self, n):
        """|A ∩ [0, n)|."""
        return bisect.bisect_left(self.elements, n)

    def window(self, n):
        """A ∩ [0, n) with bound n."""
        n = min(n, self.bound)
        return IntSet(self.elements[:self.count_below(n)], n)

    def is_subset(self, other):
        return self.members <= other.members


@dataclass
class DimensionEstimate:
    """Per-level values and the fitted dimension.

    levels holds (N, count, value): for kind 'mass' the value is
    log_r count / N, for 'hausdorff' it is log_r of the content ratio at
    the chosen γ over the top levels. skipped lists levels left out.
    """

    kind: str
    slope: float
    levels: list = field(default_factory=list)
    floor: float = None
    skipped: list = field(default_factory=list)


# Constructors

def from_range(bound):
    return IntSet(tuple(range(bound)), bound)


def single(n, bound):
    return IntSet((n,), bound)


def restricted_digits(r, digits, bound):
    """{Σ d_i r^i : d_i ∈ D} ∩ [0, bound)."""
    r = check_radix(r)
    digits = sorted(set(digits))
    if any(not 0 <= d < r for d in digits):
        raise IntSetError(f"digits {digits} invalid for radix {r}")
    if 0 not in digits:
        raise IntSetError("restricted digit sets need the digit 0")
    values = [0]
    place = 1
    while place < bound:
        values = [v + d * place for d in digits for v in values if v + d * place < bound]
        place *= r
    return IntSet(tuple(sorted(set(values))), bound)


def dimension_gap_example(kind, bound):
    """Integer sets whose mass and discrete Hausdorff dimensions behave differently.

    Args:
        kind: 'long_blocks' (mass dim 1, Hausdorff dim 0), 'sparse_spread'
            (its mass-dim-0 companion, summing with it to everything),
            'alternating_blocks' (lower dims 0, upper dims 1) or
            'alternating_complement'
        bound: truncation

    Returns:
        IntSet
    """
    values = set()
    if kind in ('long_blocks', 'sparse_spread'):
        values.update(range(min(17, bound)))
        n = 2
        while 2 ** n < bound:
            if kind == 'long_blocks':
                top = 2 ** n + math.floor(2 ** (n - n / math.log(n)))
                values.update(range(2 ** n, min(top + 1, bound)))
            else:
                k = 2 * math.floor(2 ** (n / math.log(n)))
                step = 2 ** n / k
                values.update(x for x in (2 ** n + math.floor(j * step) for j in range(k)) if x < bound)
            n += 1
    elif kind in ('alternating_blocks', 'alternating_complement'):
        blocks = set([0])
        n = 0
        while 2 ** (2 * n) ** 2 < bound:
            lo, hi = 2 ** ((2 * n) ** 2), 2 ** ((2 * n + 1) ** 2)
            blocks.update(range(lo, min(hi + 1, bound)))
            n += 1
        if kind == 'alternating_blocks':
            values = blocks
        else:
            values = {0} | {x for x in range(bound) if x not in blocks}
    else:
        raise IntSetError(f"unknown example kind {kind}")
    return IntSet(tuple(sorted(values)), bound)


# ×r structure

def check_invariance(A, r):
    """(phi_ok, psi_ok): whether Φ_r(A) ⊆ A and Ψ_r(A) ⊆ A on the truncation."""
    r = check_radix(r)
    members = A.members
    phi_ok = all(phi(a, r) in members for a in A.elements)
    psi_ok = all(psi(a, r) in members for a in A.elements)
    return phi_ok, psi_ok


def _map(kind, radix):
    if kind == 'phi':
        return lambda n: phi(n, radix)
    if kind == 'psi':
        return lambda n: psi(n, radix)
    raise IntSetError(f"unknown digit map {kind}")


def closure(seed, maps, bound=None):
    """Smallest superset of seed closed under the given digit maps.

    Args:
        seed: IntSet or iterable of integers
        maps: iterable of (kind, radix) with kind 'phi' or 'psi'
        bound: truncation of the result (defaults to seed.bound)

    Returns:
        IntSet
    """
    if bound is None:
        bound = seed.bound
    functions = [_map(kind, radix) for kind, radix in maps]
    found = set(seed)
    queue = deque(found)
    while queue:
        n = queue.popleft()
        for f in functions:
            m = f(n)
            if m not in found:
                found.add(m)
                queue.append(m)
    if found and max(found) >= bound:
        raise IntSetError(f"seed has elements beyond bound {bound}")
    return IntSet(tuple(sorted(found)), bound)


def _psi_witness(a, r, members, limit):
    """Some x < limit in members with Ψ_r(x) = a, searching by length."""
    k = floor_log(a, r) + 1
    while r ** k < limit:
        for d in range(1, r):
            x = d * r ** k + a
            if x >= limit:
                break
            if x in members:
                return True
        k += 1
    return False


def core(A, r):
    """The largest A' ⊆ A with Φ_r(A') = Ψ_r(A') = A', on a safe inner truncation.

    Greatest fixpoint of X -> X ∩ Φ_r(X) ∩ Ψ_r(X). An element a is judged
    only when r^(digits(a) + 2) fits below the current frontier, so its
    Φ-preimages and its Ψ-preimages with up to two extra digits are
    visible; elements above are kept as undetermined. Each round moves
    the frontier down by r^2 so judged witnesses were themselves judged
    in the previous round. After the first round without deletions the
    result is reported below frontier / r^3.
    """
    r = check_radix(r)
    current = set(A.elements)
    frontier = A.bound
    rounds = 0
    while frontier >= r ** 3:
        rounds += 1
        removed = []
        for a in sorted(current):
            if a == 0:
                continue
            if r ** (floor_log(a, r) + 3) > frontier:
                break
            has_phi = any(r * a + d in current for d in range(r))
            if not has_phi or not _psi_witness(a, r, current, frontier):
                removed.append(a)
        current.difference_update(removed)
        logger.debug(f"core round {rounds}: removed {len(removed)} below frontier {frontier}")
        if not removed:
            break
        frontier //= r ** 2
    frontier //= r ** 3
    inner = {a for a in current if a < frontier}
    # images of kept elements must stay inside the reported set
    result = set()
    for a in sorted(inner):
        if a == 0 or (phi(a, r) in result and psi(a, r) in result):
            result.add(a)
    logger.info(f"core: {len(result)} elements below safe bound {frontier} after {rounds} rounds")
    return IntSet(tuple(sorted(result)), frontier)


# Dimensions

def _window_levels(A, r):
    levels = []
    N = 1
    while r ** N <= A.bound:
        levels.append(N)
        N += 1
    return levels


def mass_dimension(A, r):
    """log_r |A ∩ [0, r^N)| / N per level and the least-squares slope of log_r count on N."""
    r = check_radix(r)
    if A.bound < r * r:
        raise IntSetError(f"bound {A.bound} is below r^2 = {r * r}")
    levels = []
    for N in _window_levels(A, r):
        count = A.count_below(r ** N)
        value = math.log(count, r) / N if count else 0.0
        levels.append((N, count, value))
    if not len(A):
        return DimensionEstimate('mass', 0.0, levels)
    xs = [N for (N, _, _) in levels]
    ys = [math.log(count, r) if count else 0.0 for (_, count, _) in levels]
    slope = fit_slope(xs, ys)
    return DimensionEstimate('mass', slope, levels)


def _log_content_ratios(A, r, levels, gamma):
    """log_r(H^γ_{≥1}(A ∩ [0, r^N)) / r^{Nγ}) per level, from the exact 1-D cover DP."""
    out = []
    for N in levels:
        points = np.asarray(A.elements[:A.count_below(r ** N)], dtype=float)
        out.append(math.log(cover_dp_integer(points, gamma), r) - N * gamma)
    return out


def hausdorff_dimension(A, r, floor=None, steps=None):
    """Discrete Hausdorff dimension estimate over the windows [0, r^N).

    γ runs down the grid k/steps. Below the dimension the content ratio
    H^γ_{≥1}(A ∩ [0, r^N)) / r^{Nγ} stays bounded; above it the ratio decays
    like r^{-N(γ - dim)}. The estimate is the largest grid γ whose ratio
    stays above the floor at the top levels while its fitted decay over
    those levels is under one grid step per level, less that decay.

    Levels with more than HAUSDORFF_POINT_CAP points are left out and
    listed in `skipped`.
    """
    r = check_radix(r)
    if A.bound < r * r:
        raise IntSetError(f"bound {A.bound} is below r^2 = {r * r}")
    floor = floor or setting('HAUSDORFF_RATIO_FLOOR')
    steps = steps or setting('HAUSDORFF_GAMMA_STEPS')
    levels = _window_levels(A, r)
    counts = {N: A.count_below(r ** N) for N in levels}
    skipped = [N for N in levels if counts[N] > HAUSDORFF_POINT_CAP]
    usable = [N for N in levels if 0 < counts[N] <= HAUSDORFF_POINT_CAP]
    if skipped:
        logger.warning(f"hausdorff estimate leaves out levels {skipped}: more than {HAUSDORFF_POINT_CAP} points")
    if not usable:
        return DimensionEstimate('hausdorff', 0.0, [], floor, skipped)
    top = usable[len(usable) // 2:]
    log_floor = math.log(floor, r)
    for k in range(steps, -1, -1):
        gamma = k / steps
        ratios = _log_content_ratios(A, r, usable, gamma)
        decay = fit_slope(usable, ratios)
        if min(ratios[len(usable) // 2:]) >= log_floor and decay >= -1 / steps:
            break
    estimate = min(1.0, max(0.0, gamma + min(0.0, decay)))
    logger.debug(f"hausdorff estimate {estimate:.4f} at grid gamma {gamma:.4f}, decay {decay:.4f}")
    rows = [(N, counts[N], value) for N, value in zip(usable, ratios) if N in top]
    return DimensionEstimate('hausdorff', estimate, rows, floor, skipped)


# Sumsets and affine images

def _as_fraction(value, name):
    value = Fraction(value)
    if value <= 0:
        raise IntSetError(f"{name} must be positive, got {value}")
    return value


def _affine_parts(lam, eta):
    lam = _as_fraction(lam, 'lambda')
    eta = _as_fraction(eta, 'eta')
    q = lam.denominator * eta.denominator
    return lam.numerator * eta.denominator, eta.numerator * lam.denominator, q


def _mark_sums(A, B, ca, cb, q, lo, hi, mask):
    """mask[s - lo] = True for every s = floor((ca a + cb b) / q) in [lo, hi)."""
    # int64 holds every scaled term and search key below 2^62
    top = max(A.bound * ca + B.bound * cb, hi * q)
    exact = top >= 2 ** 62
    a_vals = (A.array.astype(object) if exact else A.array) * ca
    b_vals = (B.array.astype(object) if exact else B.array) * cb
    if len(a_vals) > len(b_vals):
        a_vals, b_vals = b_vals, a_vals
    b_sorted = np.sort(b_vals)
    for x in a_vals:
        j0 = np.searchsorted(b_sorted, lo * q - x, side='left')
        j1 = np.searchsorted(b_sorted, hi * q - x, side='left')
        if j0 < j1:
            mask[((x + b_sorted[j0:j1]) // q - lo).astype(np.int64)] = True


def floor_affine_sumset(A, B, lam, eta, bound):
    """{floor(λa + ηb) : a ∈ A, b ∈ B} ∩ [0, bound), with λ, η exact rationals."""
    ca, cb, q = _affine_parts(lam, eta)
    if not len(A) or not len(B) or bound <= 0:
        return IntSet((), max(bound, 0))
    ceiling = setting('SUMSET_MASK_CEILING')
    elements = []
    for lo in range(0, bound, ceiling):
        hi = min(bound, lo + ceiling)
        mask = np.zeros(hi - lo, dtype=bool)
        _mark_sums(A, B, ca, cb, q, lo, hi, mask)
        elements.extend(int(x) + lo for x in np.flatnonzero(mask))
    return IntSet(tuple(elements), bound)


def sumset(A, B, bound):
    """(A + B) ∩ [0, bound)."""
    return floor_affine_sumset(A, B, 1, 1, bound)


def affine_floor(A, lam, eta, bound):
    """{floor(λa + η) : a ∈ A} ∩ [0, bound)."""
    lam = _as_fraction(lam, 'lambda')
    eta = Fraction(eta)
    if eta < 0:
        raise IntSetError(f"eta must be non-negative, got {eta}")
    values = sorted({math.floor(lam * a + eta) for a in A.elements})
    return IntSet(tuple(v for v in values if v < bound), bound)


def scale(A, k, bound):
    """kA ∩ [0, bound)."""
    return IntSet(tuple(k * a for a in A.elements if k * a < bound), bound)


def sumset_level_counts(A, B, lam, eta, windows):
    """Exact |floor(λA + ηB) ∩ [0, W)| for each window W.

    The caller supplies truncations deep enough that no element beyond
    A.bound or B.bound can land below the largest window.
    """
    ca, cb, q = _affine_parts(lam, eta)
    top = max(windows)
    if top > setting('SUMSET_MASK_CEILING'):
        raise IntSetError(f"window {top} exceeds the exact counting ceiling")
    mask = np.zeros(top, dtype=bool)
    if len(A) and len(B):
        _mark_sums(A, B, ca, cb, q, 0, top, mask)
    running = np.concatenate(([0], np.cumsum(mask)))
    return [int(running[W]) for W in windows]


# Two-base counterexample

def counterexample_components(r, bound):
    """The progressions r^l I_i, I_i = [r^i, r^i + isqrt(r^(i+1))], clipped to bound.

    Returns:
        list of (start, step, length) with every term below bound
    """
    r = check_radix(r)
    components = []
    i = 0
    while r ** i < bound:
        lo = r ** i
        width = math.isqrt(r ** (i + 1))
        ell = 0
        while r ** ell * lo < bound:
            step = r ** ell
            start = step * lo
            length = min(width + 1, (bound - 1 - start) // step + 1)
            components.append((start, step, length))
            ell += 1
        i += 1
    return components


def counterexample_set(r, bound):
    """A = {0} ∪ ⋃_{i,l} r^l I_i, truncated at bound."""
    values = {0}
    for start, step, length in counterexample_components(r, bound):
        values.update(range(start, start + step * length, step))
    return IntSet(tuple(sorted(values)), bound)


def counterexample_pair(r, s, bound):
    """The sets A (base r) and B (base s) whose sumset has mass dimension at most 4/5."""
    r = check_radix(r)
    s = check_radix(s)
    if not r < s:
        raise IntSetError(f"counterexample needs r < s, got r={r}, s={s}")
    return counterexample_set(r, bound), counterexample_set(s, bound)


def _progression_sum_rows(first, second):
    """{a0 + ip + b0 + jt : i < L, j < M} as progressions (start, step, count).

    With g = gcd(p, t) and q = p/g, the rows j ≡ c (mod q) lie on one
    progression of step p and consecutive ones meet when Lg >= t, so each
    class folds into a single progression. Otherwise the shorter side
    gives one row per term.

    Returns:
        (starts, steps, counts) int64 arrays
    """
    for (a0, p, L), (b0, t, M) in ((first, second), (second, first)):
        g = math.gcd(p, t)
        q = p // g
        if L * g >= t:
            c = np.arange(min(q, M), dtype=np.int64)
            runs = (M - c + q - 1) // q
            return a0 + b0 + c * t, np.full(len(c), p, dtype=np.int64), (runs - 1) * (t // g) + L
    (a0, p, L), (b0, t, M) = (first, second) if second[2] <= first[2] else (second, first)
    j = np.arange(M, dtype=np.int64)
    return a0 + b0 + j * t, np.full(M, p, dtype=np.int64), np.full(M, L, dtype=np.int64)


def _count_progression_union(starts, steps, counts, windows, chunk):
    """|(union of the progressions) ∩ [0, W)| per window, marking chunk entries at a time."""
    top = max(windows)
    ends = starts + steps * (counts - 1)
    keep = starts < top
    starts, steps, ends = starts[keep], steps[keep], ends[keep]
    pending = sorted(set(windows))
    results = {}
    before = 0
    for lo in range(0, top, chunk):
        hi = min(top, lo + chunk)
        mask = np.zeros(hi - lo, dtype=bool)
        live = (starts < hi) & (ends >= lo)
        s, p, e = starts[live], steps[live], ends[live]
        first = np.where(s >= lo, s, s + (lo - s + p - 1) // p * p)
        for a, b, step in zip((first - lo).tolist(), (np.minimum(e + 1, hi) - lo).tolist(), p.tolist()):
            mask[a:b:step] = True
        running = np.cumsum(mask)
        while pending and pending[0] <= hi:
            W = pending.pop(0)
            results[W] = before + int(running[W - lo - 1])
        before += int(running[-1])
    return results


def counterexample_sumset_counts(r, s, windows):
    """Exact |(A + B) ∩ [0, W)| per window for the counterexample pair.

    A + B is the union over component pairs of the sums of two
    progressions. Each pair folds into a few long progressions, which are
    marked on a boolean window of SUMSET_MASK_CEILING entries at a time.

    Returns:
        list of (W, count) tuples
    """
    windows = [int(W) for W in windows]
    if not windows or max(windows) <= 0:
        return [(W, 0) for W in windows]
    top = max(windows)
    comps_a = [(0, 1, 1)] + counterexample_components(r, top)
    comps_b = [(0, 1, 1)] + counterexample_components(s, top)
    parts = [_progression_sum_rows(a, b) for a in comps_a for b in comps_b if a[0] + b[0] < top]
    starts, steps, counts = (np.concatenate(column) for column in zip(*parts))
    logger.debug(f"{len(parts)} component pairs folded into {len(starts)} progressions below {top}")
    results = _count_progression_union(starts, steps, counts, [W for W in windows if W > 0],
                                       setting('SUMSET_MASK_CEILING'))
    return [(W, results.get(W, 0)) for W in windows]


# Continuous side

def rescale(A, N):
    """{a / N : a ∈ A ∩ [0, N)} as exact fractions."""
    if N <= 0:
        raise IntSetError(f"rescale needs N >= 1, got {N}")
    if N > A.bound:
        raise IntSetError(f"window {N} exceeds the truncation bound {A.bound}")
    return PointSet1D([Fraction(a, N) for a in A.elements[:A.count_below(N)]])


def limit_points(A, r, k):
    """X_k = (A ∩ [0, r^k)) / r^k."""
    return rescale(A, r ** k)


# Serialization

def dumps(A):
    lines = [f"{SERIAL_HEADER}{A.bound}"]
    lines.extend(str(a) for a in A.elements)
    return "\n".join(lines) + "\n"


def loads(text):
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith(SERIAL_HEADER):
        raise IntSetError(f"missing '{SERIAL_HEADER}B' header")
    bound = int(lines[0][len(SERIAL_HEADER):])
    return IntSet(tuple(int(line) for line in lines[1:]), bound)
