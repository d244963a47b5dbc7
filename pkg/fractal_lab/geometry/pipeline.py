"""Tree Construction Pipeline

Builds the grids Q_{nm} = X_{nm} × Y_{(nm)'} of a base-r subshift X and a
base-s subshift Y, the tree Γ whose level n is Q_{nm}, the thinned tree Γ'
of the content recursion, and the subtree Γ'' whose children at selected
levels project to separated sets under Π_{e^{t + R^n(0)}}. The equal-split
flow on Γ'' pushed forward by Π_{e^t} is then checked against the ball
bound μ(B) <= r^{N0 m} δ^{γ1} and, scale by scale, against the masses of
the nodes of Γ''.

N0 comes from the thinning threshold and the discrepancy threshold. When
this scale cannot reach the fertility fraction 1 - ε/6 or the visit
fraction 1 - ε/3, the threshold is taken at the fraction the scale does
certify and the shortfall is reported in the regime notes.

Level n of Γ holds |X_{nm}| |Y_{(nm)'}| points, far too many to store at
useful depths. The subtree below a grid point depends only on its level and
on the follower states of its two digit words, so contents are computed
over (level, state pair) classes and only Γ'' is built node by node.

Example usage:
    - config = PipelineConfig.from_text(open('pipeline.cfg').read())
    - report = run(config)
    - report.passed, report.to_json()
"""

import bisect
import decimal
import json
import logging
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction

import joblib
import numpy as np
from joblib import Parallel, delayed

from . import precision, setting, tree
from .digits import n_prime
from .fractal import PointSet2D, approximate
from .projection import ArcSet, discrepancy, extract_separated, good_slopes, require_independent, rotation_orbit
from .subshift import entropy, language_counts, named_shift

logger = logging.getLogger(__name__)

ENTROPY_LEVELS = 24
DISCREPANCY_HORIZON = 4096
GAMMA_DIGITS = 6
BALL_TOLERANCE = 1e-9
TREE_FILE = 'pipeline_tree'


class InfeasibleConfigError(ValueError):
    """A run parameter is out of range; `inequality` names the failed condition."""

    def __init__(self, inequality, values=None):
        self.inequality = inequality
        self.values = values or {}
        super().__init__(f"infeasible configuration, {inequality} fails: {self.values}")


class GridOverflowError(ValueError):
    """A grid or the selected tree would exceed the node cap."""

    def __init__(self, sizes, cap):
        self.sizes = sizes
        self.cap = cap
        super().__init__(f"sizes {sizes} exceed the node cap {cap}")


# Parameters

def check_gamma_chain(gammas, epsilon, dim_sum):
    """Raise InfeasibleConfigError unless
    γ1/(1-ε/2) < γ2 < γ3 < γ4 < dim_sum < γ5, γ5 < γ4 + ε(γ4-γ3)/6,
    γ2 < 1 and 2(γ5 - γ3) < γ4 - γ2. Compared in exact rationals.
    """
    g1, g2, g3, g4, g5 = (Fraction(g) for g in gammas)
    eps = Fraction(epsilon)
    d = Fraction(dim_sum)
    values = {'gammas': [float(g) for g in (g1, g2, g3, g4, g5)], 'epsilon': float(eps), 'dim_sum': float(d)}
    checks = [
        ('epsilon_range', 0 < eps < 1),
        ('gamma1_positive', g1 > 0),
        ('gamma1_margin', g1 / (1 - eps / 2) < g2),
        ('gamma_order', g2 < g3 < g4),
        ('dimension_window', g4 < d < g5),
        ('gamma5_slack', g5 < g4 + eps * (g4 - g3) / 6),
        ('gamma2_below_one', g2 < 1),
        ('marstrand', 2 * (g5 - g3) < g4 - g2),
    ]
    for name, ok in checks:
        if not ok:
            logger.error(f"gamma chain rejected: {name} with {values}")
            raise InfeasibleConfigError(name, values)


def suggest_gammas(dim_x, dim_y, epsilon, tree_radix=None, gamma2=None):
    """A γ-chain around d = dim X + dim Y.

    γ4 = d - η and γ5 = d + η with η = ε(d - γ2)/40, γ3 = γ2/3 + 2γ4/3 and
    γ1 just below γ2(1 - ε/2). γ2 is the requested value capped by
    min(d, 1)(1 - ε/4) and, for a tree radix R, by d - 3 log_R 2 - 0.05 so
    that thinning has B > 0.

    Returns:
        tuple of five Fractions with GAMMA_DIGITS decimals
    """
    d = float(dim_x) + float(dim_y)
    eps = float(epsilon)
    cap = min(d, 1.0) * (1 - eps / 4)
    if tree_radix:
        cap = min(cap, d - 3 * math.log(2) / math.log(tree_radix) - 0.05)
    g2 = min(cap, float(gamma2)) if gamma2 is not None else cap
    if g2 <= 0:
        raise InfeasibleConfigError('B_positive', {'dim_sum': d, 'tree_radix': tree_radix})
    eta = eps * (d - g2) / 40
    g4, g5 = d - eta, d + eta
    g3 = g2 / 3 + 2 * g4 / 3
    g1 = g2 * (1 - eps / 2) * 0.99
    gammas = tuple(Fraction(str(round(g, GAMMA_DIGITS))) for g in (g1, g2, g3, g4, g5))
    check_gamma_chain(gammas, Fraction(str(eps)), Fraction(d))
    return gammas


def _fraction(text):
    return Fraction(text.strip())


def _fractions(text):
    return tuple(_fraction(v) for v in text.split(','))


CONFIG_PARSERS = {
    'r': int, 's': int, 'm': int, 'N': int,
    't': _fraction, 'epsilon': _fraction, 'interval': _fractions,
    'gammas': _fractions, 'gamma2': _fraction, 'c3': _fraction,
    'precision_bits': int, 'seed': int,
    'x_fixture': str.strip, 'y_fixture': str.strip,
}


@dataclass
class PipelineConfig:
    """Parameters of one run; fixtures are subshift names (see subshift.named_shift)."""

    r: int = 2
    s: int = 3
    m: int = 4
    N: int = 4
    t: Fraction = Fraction(0)
    epsilon: Fraction = Fraction(1, 2)
    interval: tuple = (Fraction(0), Fraction(1))
    gammas: tuple = None
    gamma2: Fraction = Fraction(3, 20)
    c3: Fraction = None
    precision_bits: int = 128
    seed: int = 0
    x_fixture: str = 'golden'
    y_fixture: str = 'digits:3:0,2'

    def __post_init__(self):
        self.t = Fraction(self.t)
        self.epsilon = Fraction(self.epsilon)
        self.interval = tuple(Fraction(v) for v in self.interval)
        if self.gammas is not None:
            self.gammas = tuple(Fraction(g) for g in self.gammas)
            if len(self.gammas) != 5:
                raise InfeasibleConfigError('gamma_count', {'gammas': self.gammas})
        if self.m < 1 or self.N < 1:
            raise InfeasibleConfigError('positive_levels', {'m': self.m, 'N': self.N})
        if len(self.interval) != 2 or not self.interval[0] < self.interval[1]:
            raise InfeasibleConfigError('interval', {'interval': self.interval})
        if not self.interval[0] <= self.t <= self.interval[1]:
            raise InfeasibleConfigError('slope_in_interval', {'t': self.t, 'interval': self.interval})
        if not 0 < self.epsilon < 1:
            raise InfeasibleConfigError('epsilon_range', {'epsilon': self.epsilon})
        require_independent(self.r, self.s)

    @classmethod
    def from_text(cls, text):
        """Parse "key = value" lines; '#' starts a comment."""
        values = {}
        for raw in text.splitlines():
            line = raw.split('#')[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            key = key.strip()
            if not sep or key not in CONFIG_PARSERS:
                raise InfeasibleConfigError('config_syntax', {'line': raw})
            try:
                values[key] = CONFIG_PARSERS[key](value)
            except (ValueError, ZeroDivisionError) as e:
                raise InfeasibleConfigError('config_syntax', {'line': raw, 'error': str(e)}) from e
        return cls(**values)

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [str(v) for v in value]
            elif isinstance(value, Fraction):
                value = str(value)
            out[f.name] = value
        return out

    @property
    def tree_radix(self):
        return self.r ** self.m

    @property
    def digits(self):
        """Decimal digits carrying at least precision_bits bits."""
        return max(setting('DECIMAL_PRECISION'), math.ceil(self.precision_bits * math.log10(2)) + 4)


# Grids and the tree Γ

@dataclass
class Grids:
    """Q_{nm} for n = 0..N with Q_m and Q~_m = X_m × Y_{m'+1}."""

    r: int
    s: int
    m: int
    levels: list
    primes: list
    q_m: PointSet2D
    q_tilde: PointSet2D


def _product(xs, ys):
    return PointSet2D([(x, y) for x in xs for y in ys])


def level_sizes(X, Y, m, N):
    """|X_{nm}|, |Y_{(nm)'}| and their product per level, exact, without building the grids."""
    primes = [n_prime(n * m, X.radix, Y.radix) for n in range(N + 1)]
    xs = language_counts(X, N * m)
    ys = language_counts(Y, primes[-1])
    return [{'level': n, 'x': xs[n * m], 'y': ys[k], 'size': xs[n * m] * ys[k]}
            for n, k in enumerate(primes)]


def build_grids(X, Y, m, N, cap=None):
    """Materialize Q_{nm} = X_{nm} × Y_{(nm)'} for n = 0..N, plus Q_m and Q~_m.

    Raises:
        GridOverflowError: the levels together hold more than cap points
    """
    cap = cap or setting('TREE_NODE_CAP')
    sizes = level_sizes(X, Y, m, N)
    total = sum(row['size'] for row in sizes)
    if total > cap:
        logger.error(f"grids would hold {total} points, cap is {cap}")
        raise GridOverflowError([row['size'] for row in sizes], cap)
    primes = [n_prime(n * m, X.radix, Y.radix) for n in range(N + 1)]
    levels = [_product(approximate(X, n * m), approximate(Y, k)) for n, k in enumerate(primes)]
    m_prime = n_prime(m, X.radix, Y.radix)
    x_m = approximate(X, m)
    q_m = _product(x_m, approximate(Y, m_prime))
    q_tilde = _product(x_m, approximate(Y, m_prime + 1))
    logger.info(f"built grids up to level {N}: {[len(Q) for Q in levels]} points")
    return Grids(X.radix, Y.radix, m, levels, primes, q_m, q_tilde)


def build_tree(grids, gamma5=None):
    """Γ: level n is Q_{nm}; a point's parent is the level n-1 point whose rectangle contains it.

    Points keep their payload (x, y); children stay in payload order.

    Raises:
        tree.TreeError: a point has no parent, so the grids do not nest
        tree.HypothesisError: with gamma5 given, a node has more than r^{m γ5} children
    """
    r, s, m = grids.r, grids.s, grids.m
    R = r ** m
    rows = []
    previous = {}
    next_id = 0
    for n, Q in enumerate(grids.levels):
        k = grids.primes[n]
        current = {}
        for (x, y) in Q:
            i, j = int(x * r ** (n * m)), int(y * s ** k)
            parent = None
            if n:
                key = (i // R, j // s ** (k - grids.primes[n - 1]))
                parent = previous.get(key)
                if parent is None:
                    logger.error(f"grid point {(x, y)} at level {n} has no parent")
                    raise tree.TreeError(f"grid point {(x, y)} at level {n} lies in no level {n - 1} rectangle")
            rows.append((next_id, n, parent, (x, y)))
            current[(i, j)] = next_id
            next_id += 1
        previous = current
    T = tree.Tree(rows)
    if gamma5 is not None:
        limit = precision.power(R, Fraction(gamma5))
        widest = max(len(kids) for kids in T.children.values())
        if widest > limit:
            raise tree.HypothesisError('max_children', values={'children': widest, 'limit': limit})
    return T


class GridClasses:
    """Γ up to translation: the nodes of each level grouped by follower-state pair.

    Args:
        X: base-r subshift
        Y: base-s subshift
        m: digits per level in base r
        N: height
    """

    def __init__(self, X, Y, m, N):
        self.X, self.Y, self.m, self.N = X, Y, m, N
        self.r, self.s = X.radix, Y.radix
        self.primes = [n_prime(n * m, self.r, self.s) for n in range(N + 1)]
        self.steps = [b - a for a, b in zip(self.primes, self.primes[1:])]
        self._extensions = {}
        self.classes = [{(0, 0)}]
        for n in range(N):
            self.classes.append({(a2, b2) for (a, b) in self.classes[n]
                                 for _, a2 in self.x_extensions(a)
                                 for _, b2 in self.y_extensions(b, n)})
        logger.debug(f"grid classes per level: {[len(c) for c in self.classes]}")

    def _extend(self, sigma, state, length):
        key = (id(sigma), state, length)
        if key not in self._extensions:
            _, delta, _ = sigma.follower_automaton
            words = [(0, state)]
            for _ in range(length):
                words = [(v * sigma.radix + a, j) for v, i in words for a, j in sorted(delta[i].items())]
            self._extensions[key] = words
        return self._extensions[key]

    def x_extensions(self, a):
        """(value, end state) of the m-digit extensions from state a, values ascending."""
        return self._extend(self.X, a, self.m)

    def y_extensions(self, b, n):
        return self._extend(self.Y, b, self.steps[n])

    def children(self, n, a, b):
        """(u, v, a', b') per child of a level-n node in class (a, b), in payload order."""
        return [(u, v, a2, b2) for u, a2 in self.x_extensions(a) for v, b2 in self.y_extensions(b, n)]

    def max_children(self):
        return max(len(self.x_extensions(a)) * len(self.y_extensions(b, n))
                   for n in range(self.N) for (a, b) in self.classes[n])

    def costs(self, R, gamma, ctx=None):
        """cost(Q) = min(R^{-nγ}, Σ_children cost) per (level, class), in Decimal.

        Returns:
            (per-level dicts of costs, weights R^{-nγ})
        """
        ctx = ctx or precision.context()
        weights = [precision.power(R, -n * Fraction(gamma), ctx=ctx) for n in range(self.N + 1)]
        cost = [None] * (self.N + 1)
        cost[self.N] = {c: weights[self.N] for c in self.classes[self.N]}
        with decimal.localcontext(ctx):
            for n in range(self.N - 1, -1, -1):
                level = {}
                for (a, b) in self.classes[n]:
                    xs = Counter(a2 for _, a2 in self.x_extensions(a))
                    ys = Counter(b2 for _, b2 in self.y_extensions(b, n))
                    total = sum((cx * cy * cost[n + 1][(a2, b2)]
                                 for a2, cx in xs.items() for b2, cy in ys.items()), decimal.Decimal(0))
                    level[(a, b)] = min(weights[n], total)
                cost[n] = level
        return cost, weights


def grid_content(X, Y, m, N, gamma, ctx=None):
    """H_{r^m}^γ(Γ) without building Γ."""
    classes = GridClasses(X, Y, m, N)
    cost, _ = classes.costs(X.radix ** m, gamma, ctx)
    return cost[0][(0, 0)]


# Report

@dataclass
class PipelineReport:
    """Statistics of one run; `subtree` is Γ'' and stays out of the JSON."""

    config: dict
    dims: dict
    gammas: list
    gamma5_effective: float
    below_regime: bool
    regime_notes: list
    grid_sizes: list
    q_m_sizes: dict
    content: str
    max_children: int
    N0_tree: int
    N0_discrepancy: int
    N0_empirical: int
    N0: int
    targets: dict
    constants: dict
    slopes: dict
    selection: dict
    leaves: int
    fertility_histogram: dict
    thinned_fertility_violations: int
    bound_violations: int
    selection_violations: int
    fertility_violations: int
    separation: dict
    mass: str
    concentration: float
    threshold: float
    balls: dict
    density: dict
    orbit: dict
    checks: dict
    passed: bool
    subtree: object = field(default=None, repr=False, compare=False)

    def to_dict(self):
        out = asdict(replace(self, subtree=None))
        del out['subtree']
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str)


# Stages

def _measured_constants(config, q_m, beta, gamma4):
    """P over I_β, the separation constant c1 of Q_m, its ball constant c2, and c3."""
    R = config.tree_radix
    rho = 1.0 / R
    hi = float(config.interval[1]) + float(beta)
    P = math.sqrt(1 + math.exp(2 * hi))
    xy = np.asarray([(float(x), float(y)) for x, y in q_m], dtype=float).reshape(-1, 2)
    dist = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2))
    if len(xy) > 1:
        c1 = float(dist[~np.eye(len(xy), dtype=bool)].min() / rho)
    else:
        c1 = None
    c2 = 0.0
    k = 0
    while True:
        delta = rho * 2 ** k
        counts = (dist <= delta + 1e-15).sum(axis=1)
        c2 = max(c2, float(counts.max() / (delta / rho) ** float(gamma4)))
        if delta >= 2 * math.sqrt(2):
            break
        k += 1
    # leaves below a level n+1 node lie within (1 + e^{t + R^{n+1}(0)}) ρ^{n+1} of it, on one side
    displacement = 1 + config.s * math.exp(float(config.t))
    c3 = config.c3 if config.c3 is not None else separation_constant(float(config.t) + float(beta))
    return {'P': P, 'c1': c1, 'c2': c2, 'c3': float(c3), 'c3_formula': 4 * P / config.s + 1,
            'displacement': displacement}


def separation_constant(exponent):
    """2 + e^{exponent} rounded up to a multiple of 1/1000."""
    return Fraction(math.ceil((2 + math.exp(float(exponent))) * 1000), 1000)


def level_separations(config, orbit):
    """c3 for the children of each level n < N: 2 + e^{t + R^{n+1}(0)}, or the configured c3."""
    if config.c3 is not None:
        return [Fraction(config.c3)] * config.N
    return [separation_constant(float(config.t) + float(orbit.points[n + 1])) for n in range(config.N)]


def _scan_separation(config, orbit):
    """c3 as a function of the slope τ = t + R^n(0), read off at R^{n+1}(0) = τ - t + α mod β."""
    if config.c3 is not None:
        return config.c3
    t, alpha, beta = float(config.t), float(orbit.alpha), float(orbit.beta)
    return lambda tau: separation_constant(t + (tau - t + alpha) % beta)


def _visit_set(config, gammas, q_m, q_tilde, orbit, n_jobs, check_chain):
    """J = (T - t) ∩ [0, β) with T the slopes good for both Q_m and Q~_m over I_β."""
    g2, g3, g4, g5 = gammas[1:]
    beta = float(orbit.beta)
    interval = (float(config.interval[0]), float(config.interval[1]) + beta)
    kwargs = dict(epsilon=float(config.epsilon) * beta / 12, gamma2=g2, gamma3=g3,
                  rho=Fraction(1, config.tree_radix), c3=_scan_separation(config, orbit), n_jobs=n_jobs)
    if check_chain:
        kwargs.update(gamma4=g4, gamma5=g5)
    scans = [good_slopes(Q, interval, **kwargs) for Q in (q_m, q_tilde)]
    bad = ArcSet(scans[0].bad.intervals + scans[1].bad.intervals)
    J = bad.shift(-float(config.t)).complement(0.0, beta)
    stats = {'interval': list(interval), 'bad_measure': bad.length, 'J_measure': J.length,
             'J_intervals': len(J), 'step': scans[0].step,
             'subset_size': scans[0].subset_size, 'separated_size': scans[0].separated_size,
             'max_separation': max(scan.separation for scan in scans)}
    return J, stats


def discrepancy_profile(values, horizon):
    """D_n of the first n values for n = 1..horizon."""
    return [discrepancy(values[:n]) for n in range(1, horizon + 1)]


def certified_arcs(J, beta, profile):
    """The longest k arcs of J, with k maximizing |J_k|/β - k D_horizon.

    Fewer arcs carry a smaller discrepancy term, so a short arc is worth
    keeping only when its length beats that term. Any J_k ⊆ J is visited
    at good slopes only.
    """
    ranked = sorted(J, key=lambda arc: arc[0] - arc[1])
    best, best_k, length = 0.0, 0, 0.0
    for k, (lo, hi) in enumerate(ranked, start=1):
        length += hi - lo
        margin = length / float(beta) - k * profile[-1]
        if margin > best:
            best, best_k = margin, k
    return ArcSet(ranked[:best_k]), best


def discrepancy_threshold(profile, share, arcs, target):
    """Smallest n0 with share - U D_n >= target for every n0 <= n <= horizon, or None."""
    last_bad = 0
    for n, d in enumerate(profile, start=1):
        if share - arcs * d < target:
            last_bad = n
    return last_bad + 1 if last_bad < len(profile) else None


def _tree_target(params, epsilon):
    """(certified thinned fertility fraction, whether it reaches 1 - ε/6).

    The thinning bound tends to B/(A+B), so when that limit is at most
    1 - ε/6 the fraction certified is (1 - ε/6) B/(A+B).
    """
    ctx = precision.context()
    with decimal.localcontext(ctx):
        configured = 1 - precision.to_decimal(epsilon, ctx) / 6
        limit = params.B / (params.A + params.B)
        if limit > configured:
            return configured, True
        return configured * limit, False


def _visit_target(certified, epsilon):
    """(certified visit fraction, whether it reaches 1 - ε/3)."""
    configured = 1 - float(epsilon) / 3
    if certified > configured:
        return configured, True
    return configured * certified, False


def children_needed(R, gamma, ctx=None):
    """⌈R^γ⌉, the least child count that makes a node R^γ-fertile."""
    ctx = ctx or precision.context()
    return math.ceil(precision.power(R, gamma, ctx=ctx) - decimal.Decimal('1e-30'))


def _select_subtree(config, classes, cost, weights, params, orbit, J, separations, gamma2, ctx):
    """Γ'': top down, thin by content, then keep separated children on levels of 𝒥.

    Children of a level n node are kept separations[n]/R apart in the
    Π_{e^{t + R^n(0)}} image of their offsets.

    Returns:
        (Tree, {node: children kept in Γ'}, selection counts, visited flag per level)
    """
    R, s, N = config.tree_radix, config.s, config.N
    cap = setting('TREE_NODE_CAP')
    spread = children_needed(R, gamma2, ctx)
    t = precision.to_decimal(config.t, ctx)
    rows = [(0, 0, None, (Fraction(0), Fraction(0)))]
    frontier = [(0, 0, 0, 0, 0)]
    thinned = {}
    selection = Counter()
    visited = []
    next_id = 1
    for n in range(N):
        step = s ** classes.steps[n]
        in_J = J.contains(float(orbit.points[n]))
        visited.append(in_J)
        with decimal.localcontext(ctx):
            slope = t + orbit.points[n]
            separation = precision.to_decimal(separations[n], ctx) / R
        following = []
        for node, i, j, a, b in frontier:
            kids = classes.children(n, a, b)
            with decimal.localcontext(ctx):
                here = cost[n][(a, b)] / weights[n]
                contents = [cost[n + 1][(a2, b2)] / weights[n + 1] for _, _, a2, b2 in kids]
            kept = tree.thinning_choice(here, contents, params, node)
            thinned[node] = len(kept)
            chosen = None
            if in_J and len(kept) >= params.fertile:
                offsets = [(Fraction(kids[k][0], R), Fraction(kids[k][1], step)) for k in kept]
                picked = extract_separated(offsets, slope, separation)
                if len(picked) >= spread:
                    index = dict(zip(offsets, kept))
                    chosen = sorted(index[p] for p in picked[:spread])
                    selection['separated'] += 1
                else:
                    logger.debug(f"level {n} node {node}: {len(picked)} separated images, need {spread}")
                    selection['fallback'] += 1
            else:
                selection['single'] += 1
            if chosen is None:
                chosen = [max(kept, key=lambda k: (contents[k], -k))]
            for k in chosen:
                u, v, a2, b2 = kids[k]
                i2, j2 = i * R + u, j * step + v
                payload = (Fraction(i2, R ** (n + 1)), Fraction(j2, s ** classes.primes[n + 1]))
                rows.append((next_id, n + 1, node, payload))
                following.append((next_id, i2, j2, a2, b2))
                next_id += 1
            if next_id > cap:
                logger.error(f"selected tree passes the node cap {cap} at level {n + 1}")
                raise GridOverflowError([len(frontier), len(following)], cap)
        frontier = following
        logger.debug(f"level {n + 1}: {len(frontier)} nodes kept, n in J: {in_J}")
    return tree.Tree(rows), thinned, dict(selection), visited


def _ancestor_counts(T, passes):
    """Number of ancestors of each node that satisfy passes(ancestor)."""
    counts = {T.root: 0}
    for level in T.levels[1:]:
        for node in level:
            parent = T.parent[node]
            counts[node] = counts[parent] + (1 if passes(parent) else 0)
    return counts


def _leaf_separation(T, projections, R, ctx):
    """Min over inner nodes of (gap between leaves below different children) / ρ^{n+1}.

    The closest pair of leaves below different children of a node is
    adjacent in the sorted merged order, so one sort per node suffices.
    """
    slack = precision.to_decimal(setting('SEPARATION_SLACK'), ctx)
    below = {leaf: [projections[leaf]] for leaf in T.leaves}
    worst = None
    failures = 0
    with decimal.localcontext(ctx):
        for n in range(T.height - 1, -1, -1):
            scale = decimal.Decimal(R) ** (n + 1)
            for node in T.levels[n]:
                kids = T.children[node]
                if len(kids) == 1:
                    below[node] = below.pop(kids[0])
                    continue
                merged = sorted((p, label) for label, c in enumerate(kids) for p in below.pop(c))
                for (p1, l1), (p2, l2) in zip(merged, merged[1:]):
                    if l1 == l2:
                        continue
                    ratio = (p2 - p1) * scale
                    if worst is None or ratio < worst[0]:
                        worst = (ratio, node, n)
                    if (p2 - p1 - slack) * scale < 1:
                        failures += 1
                below[node] = [p for p, _ in merged]
    return {'ok': failures == 0, 'failures': failures,
            'min_ratio': float(worst[0]) if worst else None,
            'worst_node': worst[1] if worst else None, 'worst_level': worst[2] if worst else None}


def _concentration(atoms, N, R, gamma1):
    """max μ(B)/δ^{γ1} over intervals with endpoints at atoms and over the ρ-ladder."""
    values = sorted(atoms)
    p = np.asarray([float(v) for v in values], dtype=float)
    w = np.asarray([float(atoms[v]) for v in values], dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(w)])
    floor = float(R) ** -N
    g = float(gamma1)
    worst = 0.0
    for i in range(len(p)):
        masses = cum[i + 1:] - cum[i]
        delta = np.maximum(p[i:] - p[i], floor)
        worst = max(worst, float((masses / delta ** g).max()))
    for k in range(N + 1):
        delta = float(R) ** -k
        ends = np.searchsorted(p, p + delta, side='right')
        masses = cum[ends] - cum[:-1]
        worst = max(worst, float(masses.max() / delta ** g))
    return worst


def _scale_balls(atoms, mass, T, R, ctx):
    """Per level k: the heaviest window [p, p + R^{-k}) of the image measure and the heaviest level k node.

    Leaves of T that are more than R^{-k} apart whenever they split below
    level k put every such window under one level k node.
    """
    values = sorted(atoms)
    cum = [Fraction(0)]
    for v in values:
        cum.append(cum[-1] + atoms[v])
    rows = []
    with decimal.localcontext(ctx):
        for k in range(T.height + 1):
            delta = 1 / decimal.Decimal(R) ** k
            window = max(cum[bisect.bisect_left(values, v + delta)] - cum[i] for i, v in enumerate(values))
            node = max(mass[q] for q in T.levels[k])
            rows.append({'level': k, 'window': str(window), 'node': str(node), 'ok': window <= node})
    return rows


def run(config, X=None, Y=None, n_jobs=1, out_dir=None, check_chain=True):
    """Build Γ'' for the configuration and verify its invariants.

    Args:
        config: PipelineConfig
        X, Y: subshifts; resolved from the config's fixture names when omitted
        n_jobs: joblib workers for the slope scans
        out_dir: when given, Γ'' is written there as CSV and joblib dumps
        check_chain: reject configurations whose γ-chain fails

    Returns:
        PipelineReport; `passed` is False when a verified inequality fails

    Raises:
        InfeasibleConfigError: the γ-chain fails, or thinning has B <= 0
        GridOverflowError: Γ'' would pass the node cap
    """
    X = X or named_shift(config.x_fixture)
    Y = Y or named_shift(config.y_fixture)
    if (X.radix, Y.radix) != (config.r, config.s):
        raise InfeasibleConfigError('fixture_radix', {'x': X.radix, 'y': Y.radix, 'r': config.r, 's': config.s})
    ctx = precision.context(config.digits)
    R, N, eps = config.tree_radix, config.N, config.epsilon
    dim_x = entropy(X, ENTROPY_LEVELS).spectral
    dim_y = entropy(Y, ENTROPY_LEVELS).spectral
    gammas = config.gammas or suggest_gammas(dim_x, dim_y, eps, R, config.gamma2)
    if check_chain:
        check_gamma_chain(gammas, eps, Fraction(dim_x) + Fraction(dim_y))
    g1, g2, g3, g4, g5 = gammas
    logger.info(f"pipeline r={config.r} s={config.s} m={config.m} N={N} t={config.t}: "
                f"dims {dim_x:.4f} + {dim_y:.4f}, gammas {[float(g) for g in gammas]}")
    notes = []

    classes = GridClasses(X, Y, config.m, N)
    sizes = level_sizes(X, Y, config.m, N)
    widest = classes.max_children()
    gamma5_eff = g5
    if widest > precision.power(R, g5, ctx=ctx):
        gamma5_eff = Fraction(math.ceil(math.log(widest, R) * 10 ** GAMMA_DIGITS) + 1, 10 ** GAMMA_DIGITS)
        notes.append(f"max children {widest} exceeds R^gamma5; thinning uses gamma5 = {float(gamma5_eff):.6f}")
    try:
        params = tree.ThinningParameters(R, g3, g4, gamma5_eff)
    except tree.HypothesisError as e:
        logger.error(f"thinning hypothesis fails: {e}")
        raise InfeasibleConfigError(e.inequality, e.values) from e
    cost, weights = classes.costs(R, g4, ctx)
    total = cost[0][(0, 0)]
    target_T, tree_reached = _tree_target(params, eps)
    N0_tree = tree.threshold_height(params, 1 - target_T, total)
    if not tree_reached:
        notes.append(f"B/(A+B) = {float(params.B / (params.A + params.B)):.4f} is at most 1 - epsilon/6; "
                     f"thinned fertility is certified at {float(target_T):.4f} per level")
    logger.info(f"content of the grid tree {float(total):.6g}, max children {widest}, tree N0 {N0_tree}")

    m_prime = classes.primes[1]
    x_m = approximate(X, config.m)
    q_m = _product(x_m, approximate(Y, m_prime))
    q_tilde = _product(x_m, approximate(Y, m_prime + 1))
    horizon = max(N, DISCREPANCY_HORIZON)
    orbit = rotation_orbit(config.r, config.s, config.m, horizon)
    if orbit.primes[:N + 1] != classes.primes:
        raise tree.TreeError("rotation orbit and grid levels disagree on (nm)'")
    constants = _measured_constants(config, q_m, orbit.beta, g4)
    separations = level_separations(config, orbit)
    constants['c3_levels'] = [float(c) for c in separations]
    good, slope_stats = _visit_set(config, gammas, q_m, q_tilde, orbit, n_jobs, check_chain)
    profile = discrepancy_profile(orbit.normalized(), horizon)
    J, certified = certified_arcs(good, orbit.beta, profile)
    share = J.length / float(orbit.beta)
    target_D, visits_reached = _visit_target(certified, eps)
    slope_stats.update({'certified_measure': J.length, 'certified_intervals': len(J), 'certified_margin': certified})
    if len(J):
        N0_disc = discrepancy_threshold(profile, share, len(J), target_D)
        if not visits_reached:
            notes.append(f"|J|/beta - U D_n reaches {certified:.4f}, not 1 - epsilon/3; "
                         f"visits are certified at {target_D:.4f} per level")
    else:
        N0_disc = None
        notes.append("no slope of [t, t + beta) is good, J is empty")
    N0 = max(N0_tree, N0_disc) if N0_disc is not None else None
    logger.info(f"J measure {J.length:.4f} in {len(J)} arcs, N0 tree {N0_tree}, discrepancy {N0_disc}")

    subtree, thinned, selection, visited = _select_subtree(config, classes, cost, weights, params, orbit, J,
                                                           separations, g2, ctx)
    spread = children_needed(R, g2, ctx)
    f2 = _ancestor_counts(subtree, lambda q: len(subtree.children[q]) >= spread)
    f3 = _ancestor_counts(subtree, lambda q: thinned[q] >= params.fertile)
    f3_visited = _ancestor_counts(subtree, lambda q: visited[subtree.level[q]] and thinned[q] >= params.fertile)
    failing = [subtree.level[q] for q in subtree.nodes() if f2[q] < (1 - eps / 2) * subtree.level[q]]
    N0_emp = max(failing) + 1 if failing else 1
    target_F = max(0.0, float(target_T) + target_D - 1)
    reach = N0 if N0 is not None else N + 1
    below = reach > N or not (tree_reached and visits_reached)
    if reach > N:
        notes.append(f"N = {N} is below N0 = {N0}; the per-level fractions apply from level N0 on")
    for note in notes:
        logger.warning(note)

    log_content = precision.log_base(total, R, precision.UP, ctx)
    bound_violations = sum(1 for q in subtree.nodes() if f3[q] < params.bound(subtree.level[q], log_content))
    selection_violations = sum(1 for q in subtree.nodes() if f2[q] < f3_visited[q])
    thinned_violations = sum(1 for q in subtree.nodes()
                             if subtree.level[q] >= reach and f3[q] < target_T * subtree.level[q])
    fertility_violations = sum(1 for q in subtree.nodes()
                               if subtree.level[q] >= reach and f2[q] < target_F * subtree.level[q])

    with decimal.localcontext(ctx):
        scale = precision.exp(config.t, ctx=ctx)
        projections = {leaf: precision.to_decimal(subtree.payload[leaf][0], ctx)
                       + scale * precision.to_decimal(subtree.payload[leaf][1], ctx) for leaf in subtree.leaves}
    separation = _leaf_separation(subtree, projections, R, ctx)
    flow = tree.flow_measure(subtree)
    nu = {leaf: flow[leaf] for leaf in subtree.leaves}
    mass = sum(nu.values(), Fraction(0))
    atoms = {}
    for leaf, weight in nu.items():
        atoms[projections[leaf]] = atoms.get(projections[leaf], Fraction(0)) + weight
    concentration = _concentration(atoms, N, R, g1)
    exponent = math.log(concentration, R) if concentration > 0 else -math.inf
    threshold = float(R) ** reach if reach * math.log2(R) < 1000 else math.inf
    ball_ok = exponent <= reach + math.log1p(BALL_TOLERANCE) / math.log(R)
    balls = _scale_balls(atoms, flow, subtree, R, ctx)

    visits = [1 if J.contains(v) else 0 for v in (float(x) for x in orbit.points[:horizon])]
    prefix = np.concatenate([[0], np.cumsum(visits)])
    density_violations = [n for n in range(max(reach, 1), horizon + 1) if prefix[n] < target_D * n]
    residual = max(float(x) for x in orbit.residuals())

    checks = {
        'leaf_separation': separation['ok'],
        'separated_selection': selection.get('fallback', 0) == 0 and selection_violations == 0,
        'fertility': fertility_violations == 0 and thinned_violations == 0,
        'thinning_bound': bound_violations == 0,
        'ball_bound': ball_ok and all(row['ok'] for row in balls),
        'unit_mass': mass == 1,
        'visit_density': N0_disc is not None and not density_violations,
    }
    passed = all(checks.values())
    if passed:
        logger.info(f"pipeline passed: {len(subtree.leaves)} leaves, selection {selection}, "
                    f"concentration {concentration:.4g} <= R^{reach}")
    else:
        logger.error(f"pipeline failed: {[k for k, ok in checks.items() if not ok]}")

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f'{TREE_FILE}.csv'), 'w') as handle:
            handle.write(tree.dump(subtree))
        joblib.dump(subtree, os.path.join(out_dir, f'{TREE_FILE}.joblib'))
        logger.info(f"selected tree written to {out_dir}")

    return PipelineReport(
        config=config.to_dict(),
        dims={'x': dim_x, 'y': dim_y},
        gammas=[str(g) for g in gammas],
        gamma5_effective=float(gamma5_eff),
        below_regime=below,
        regime_notes=notes,
        grid_sizes=sizes,
        q_m_sizes={'q_m': len(q_m), 'q_tilde': len(q_tilde),
                   'lower': float(precision.power(R, g4, ctx=ctx)), 'upper': float(precision.power(R, g5, ctx=ctx))},
        content=str(total),
        max_children=widest,
        N0_tree=N0_tree,
        N0_discrepancy=N0_disc,
        N0_empirical=N0_emp,
        N0=N0,
        targets={
            'thinned_fertility': {'configured': float(1 - eps / 6), 'certified': float(target_T)},
            'visits': {'configured': float(1 - eps / 3), 'certified': target_D},
            'fertility': {'configured': float(1 - eps / 2), 'certified': target_F},
        },
        constants=constants,
        slopes=slope_stats,
        selection=selection,
        leaves=len(subtree.leaves),
        fertility_histogram=tree.fertility_histogram(subtree, spread),
        thinned_fertility_violations=thinned_violations,
        bound_violations=bound_violations,
        selection_violations=selection_violations,
        fertility_violations=fertility_violations,
        separation=separation,
        mass=str(mass),
        concentration=concentration,
        threshold=threshold,
        balls={'exponent': exponent, 'levels': balls},
        density={'horizon': horizon, 'visits': int(prefix[N]), 'violations': len(density_violations),
                 'first_violation': density_violations[0] if density_violations else None},
        orbit={'alpha': str(orbit.alpha), 'beta': str(orbit.beta), 'max_residual': residual,
               'branch_mismatches': len(orbit.branch_mismatches())},
        checks=checks,
        passed=passed,
        subtree=subtree,
    )


def load_tree(path):
    """A Γ'' written by run(out_dir=...), from its joblib dump."""
    return joblib.load(path)


def concentration_sweep(config, points=16, X=None, Y=None, n_jobs=1):
    """Run the pipeline at `points` evenly spaced slopes of I.

    Returns:
        (rows of {'t', 'concentration', 'threshold', 'passed'}, max concentration)
    """
    lo, hi = config.interval
    ts = [lo + (hi - lo) * Fraction(k, points - 1) for k in range(points)] if points > 1 else [lo]
    reports = Parallel(n_jobs=n_jobs)(delayed(run)(replace(config, t=t), X, Y) for t in ts)
    rows = [{'t': str(t), 'concentration': rep.concentration, 'threshold': rep.threshold, 'passed': rep.passed}
            for t, rep in zip(ts, reports)]
    worst = max(row['concentration'] for row in rows)
    logger.info(f"concentration over {len(ts)} slopes: max {worst:.4g}")
    return rows, worst
