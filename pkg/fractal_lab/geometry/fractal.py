"""Discrete Fractal Geometry of Finite Point Sets

Metric entropy, discrete Hausdorff content and (ρ,γ)_c-set checks for
finite point sets on the line and in the plane, Hausdorff distance, and
the lattice approximations X_n of the compact set carried by a subshift.

Points are exact rationals (projected sets may carry Decimals). The only
inexact step in content computations is the γ-th power, evaluated in
80-bit extended precision.

Two classical facts about the line are used here:
    - left-to-right greedy selection gives a maximum ρ-separated subset;
    - some optimal interval cover uses only intervals spanning consecutive
      runs of the sorted points, so a DP over the sorted order is exact.
Both are checked against brute force in the test suite.
"""

import bisect
import io
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

import numpy as np
import pandas as pd

from . import precision
from .subshift import enumerate_words

logger = logging.getLogger(__name__)

EXTENDED = np.longdouble


class PointSetError(ValueError):
    """Empty or malformed point set, or invalid scale parameters."""


@dataclass(frozen=True)
class PointSet1D:
    """A finite sorted set of reals (Fractions, or Decimals after projection)."""

    points: tuple

    def __init__(self, points):
        object.__setattr__(self, 'points', tuple(sorted(set(points))))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def diameter(self):
        return self.points[-1] - self.points[0] if self.points else 0

    @property
    def is_decimal(self):
        return bool(self.points) and isinstance(self.points[0], Decimal)

    def as_array(self):
        return _extended(self.points)


@dataclass(frozen=True)
class PointSet2D:
    """A finite set of points in the plane, sorted lexicographically."""

    points: tuple

    def __init__(self, points):
        object.__setattr__(self, 'points', tuple(sorted(set((x, y) for x, y in points))))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


@dataclass
class CoverSolution:
    """Intervals (center, diameter) of a cover and its cost Σ diameter^γ."""

    intervals: list = field(default_factory=list)
    cost: float = 0.0

    def covers(self, P):
        for p in P:
            if not any(abs(p - c) <= d / 2 for c, d in self.intervals):
                return False
        return True


def _extended(values):
    # exact rationals to extended floats through numerator/denominator division
    out = np.empty(len(values), dtype=EXTENDED)
    for i, v in enumerate(values):
        if isinstance(v, Fraction):
            out[i] = EXTENDED(v.numerator) / EXTENDED(v.denominator)
        else:
            out[i] = EXTENDED(str(v)) if not isinstance(v, (int, float)) else EXTENDED(v)
    return out


def _check_scale(rho):
    if rho <= 0:
        raise PointSetError(f"scale must be positive, got {rho}")


def _scale_for(P, rho):
    """ρ in the arithmetic of P: Decimals for projected sets, Fractions otherwise."""
    _check_scale(rho)
    if isinstance(P, PointSet1D) and P.is_decimal:
        return precision.to_decimal(rho)
    return Fraction(rho) if not isinstance(rho, Decimal) else Fraction(str(rho))


# Metric entropy

@dataclass
class Packing:
    size: int
    exact: bool
    centers: list


def packing(P, rho):
    """Greedy ρ-separated subset; exact maximum on the line, a lower bound in the plane."""
    rho = _scale_for(P, rho)
    if isinstance(P, PointSet2D):
        rho_sq = rho * rho
        chosen = []
        for (x, y) in P:
            if all((x - u) ** 2 + (y - v) ** 2 >= rho_sq for (u, v) in chosen):
                chosen.append((x, y))
        return Packing(len(chosen), False, chosen)
    chosen = []
    for x in P:
        if not chosen or x - chosen[-1] >= rho:
            chosen.append(x)
    return Packing(len(chosen), True, chosen)


def metric_entropy(P, rho):
    """N(P, ρ): the largest size of a ρ-separated subset (separation ≥ ρ is inclusive)."""
    result = packing(P, rho)
    if not result.exact:
        logger.debug(f"2-D metric entropy {result.size} is a greedy lower bound")
    return result.size


# Discrete Hausdorff content

def _cover_dp(x, rho, gamma):
    """Minimum Σ max(x_j - x_i, ρ)^γ over covers by runs; returns (value, cut points)."""
    n = len(x)
    best = np.zeros(n + 1, dtype=x.dtype)
    choice = np.zeros(n, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        costs = np.maximum(x[i:] - x[i], rho) ** gamma + best[i + 1:]
        j = int(np.argmin(costs))
        best[i] = costs[j]
        choice[i] = i + j
    return best[0], choice


def cover_dp_integer(points, gamma):
    """Content of sorted integer points at scale 1: min Σ max(length, 1)^γ.

    Args:
        points: sorted numpy array of integers (as floats)
        gamma: dimension

    Returns:
        float
    """
    if len(points) == 0:
        return 0.0
    value, _ = _cover_dp(np.asarray(points, dtype=float), 1.0, float(gamma))
    return float(value)


def content_1d(P, rho, gamma):
    """H^γ_{≥ρ}(P) exactly over interval covers, with an optimal cover.

    Returns:
        (value, CoverSolution)
    """
    rho = _scale_for(P, rho)
    if not 0 < gamma <= 1:
        raise PointSetError(f"gamma must be in (0, 1], got {gamma}")
    if not len(P):
        return 0.0, CoverSolution([], 0.0)
    x = P.as_array()
    value, choice = _cover_dp(x, _extended([rho])[0], EXTENDED(float(gamma)))
    intervals = []
    i = 0
    while i < len(P):
        j = int(choice[i])
        lo, hi = P.points[i], P.points[j]
        diameter = max(hi - lo, rho)
        intervals.append(((lo + hi) / 2, diameter))
        i = j + 1
    return float(value), CoverSolution(intervals, float(value))


def is_rho_gamma_c_set(P, rho, gamma, c):
    """Check that P is ρ-separated with |P ∩ B| <= c (δ/ρ)^γ on the candidate balls.

    Candidates have diameters δ = 2^k ρ up to twice the diameter of P: on
    the line the interval [p, p + δ] for each point p, in the plane the
    closed disc of radius δ/2 centred at p. Any interval of length in
    [δ, 2δ) sits inside a candidate of diameter 2δ, and any disc of
    diameter in [δ, 2δ) sits inside a candidate of diameter 4δ, so passing
    certifies the ball condition for all δ >= ρ with constant c·2^γ on the
    line and c·4^γ in the plane.

    Returns:
        (ok, worst) with worst = (anchor, δ, count, allowed) for the ball of
        largest count/allowed ratio, or the closest pair when separation fails
    """
    rho = _scale_for(P, rho)
    points = list(P.points)
    if len(points) < 2:
        return True, None
    planar = isinstance(P, PointSet2D)
    c = precision.to_decimal(c)
    if planar:
        rho_sq = rho * rho
        for a in range(len(points)):
            for b in range(a + 1, len(points)):
                (x1, y1), (x2, y2) = points[a], points[b]
                if (x1 - x2) ** 2 + (y1 - y2) ** 2 < rho_sq:
                    return False, (points[a], points[b], None, None)
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        extent = max(max(xs) - min(xs), max(ys) - min(ys)) * 2
    else:
        for a, b in zip(points, points[1:]):
            if b - a < rho:
                return False, (a, b, None, None)
        extent = points[-1] - points[0]
    worst = None
    worst_ratio = -1.0
    k = 0
    while True:
        delta = rho * 2 ** k
        allowed = c * precision.power(2, k * Fraction(gamma), precision.DOWN)
        for anchor in points:
            if planar:
                radius_sq = (delta / 2) ** 2
                count = sum(1 for (x, y) in points
                            if (x - anchor[0]) ** 2 + (y - anchor[1]) ** 2 <= radius_sq)
            else:
                count = bisect.bisect_right(points, anchor + delta) - bisect.bisect_left(points, anchor)
            ratio = count / float(allowed)
            if ratio > worst_ratio:
                worst_ratio = ratio
                worst = (anchor, delta, count, float(allowed))
            if count > allowed:
                return False, worst
        if delta >= 2 * extent:
            break
        k += 1
    return True, worst


# Distances

def _nearest_distance(sorted_points, x):
    i = bisect.bisect_left(sorted_points, x)
    candidates = []
    if i < len(sorted_points):
        candidates.append(abs(sorted_points[i] - x))
    if i > 0:
        candidates.append(abs(x - sorted_points[i - 1]))
    return min(candidates)


def hausdorff_distance(P, Q):
    """d_H(P, Q) = max of the two directed max-min distances, exact."""
    if not len(P) or not len(Q):
        raise PointSetError("hausdorff_distance needs two non-empty sets")
    forward = max(_nearest_distance(Q.points, p) for p in P.points)
    backward = max(_nearest_distance(P.points, q) for q in Q.points)
    return max(forward, backward)


def neighborhood_contains(P, Q, eps):
    """True iff P ⊆ [Q]_ε, the closed ε-neighborhood of Q."""
    if not len(P):
        return True
    if not len(Q):
        return False
    return all(_nearest_distance(Q.points, p) <= eps for p in P.points)


# Lattice approximations

def approximate(sigma, n):
    """X_n = {0.w_1...w_n in base r : w ∈ L_n(Σ)}, exact rationals."""
    if n < 0:
        raise PointSetError(f"n must be >= 0, got {n}")
    r = sigma.radix
    points = []
    for word in enumerate_words(sigma, n):
        numerator = 0
        for digit in word:
            numerator = numerator * r + digit
        points.append(Fraction(numerator, r ** n))
    logger.debug(f"X_{n} of {sigma.name}: {len(points)} points")
    return PointSet1D(points)


def times_r(P, r):
    """T_r P = {r x mod 1}."""
    return PointSet1D([(r * x) % 1 for x in P.points])


# Serialization

def dump_points(P):
    """CSV of exact fractions "p/q", one point per line (two columns in the plane)."""
    if isinstance(P, PointSet2D):
        frame = pd.DataFrame({'x': [str(Fraction(x)) for x, _ in P], 'y': [str(Fraction(y)) for _, y in P]})
    else:
        frame = pd.DataFrame({'x': [str(Fraction(x)) for x in P]})
    return frame.to_csv(header=False, index=False)


def load_points(text):
    frame = pd.read_csv(io.StringIO(text), header=None, dtype=str)
    if frame.shape[1] == 2:
        return PointSet2D([(Fraction(x), Fraction(y)) for x, y in frame.itertuples(index=False)])
    return PointSet1D([Fraction(x) for x in frame[0]])
