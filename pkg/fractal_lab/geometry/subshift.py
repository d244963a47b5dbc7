"""Subshift Presentations and Language Sets

Subshifts of {0, ..., r-1}^N0 are stored as labeled graphs
(networkx MultiDiGraph, each edge carries a digit `label`) in which every
state is initial. The language L(Σ) is the set of labels of finite paths.
Presentations are trimmed forward only: a state without an outgoing edge
cannot start an infinite word, while a state without an incoming edge is
still a legal starting point of a one-sided sequence.

Counting goes through the subset presentation started from the set of all
states, which recognizes L(Σ) from a single start. Word counts are exact
integers from repeated matrix-vector products with numpy object arrays.

Example usage:
    - golden = sft_from_forbidden(2, [(1, 1)])
    - language_count(golden, 10)   -> 144
    - embed(golden, 16).elements   -> (0, 1, 2, 4, 5, 8, 9, 10)
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import networkx as nx
import numpy as np
from sklearn.linear_model import LinearRegression
from sympy import isprime

from .digits import DigitError, DigitWord, check_radix

logger = logging.getLogger(__name__)

POWER_ITERATIONS = 400


class EmptySubshiftError(ValueError):
    """The presentation has no infinite path: every long word is forbidden."""


def out_labels(G, q):
    return [label for (_, _, label) in G.out_edges(q, data="label")]


def is_deterministic(G):
    """True iff every edge leaving a state carries a distinct label."""
    for q in G:
        labels = out_labels(G, q)
        if len(labels) != len(set(labels)):
            return False
    return True


def trim(G):
    """Remove states that cannot start an infinite path, in place."""
    nonextensible = [q for q in G if not G.out_edges(q)]
    while nonextensible:
        frontier = {q for (q, _) in G.in_edges(nonextensible)}
        G.remove_nodes_from(nonextensible)
        nonextensible = [q for q in frontier if q in G and not G.out_edges(q)]
    return G


def subset_presentation(G, radix):
    """Deterministic presentation of L(G) with the single start frozenset(G).

    Returns:
        (states, delta) with states[0] the start and delta[i][digit] -> j
    """
    start = frozenset(G)
    index = {start: 0}
    states = [start]
    delta = [{}]
    stack = [start]
    while stack:
        X = stack.pop()
        i = index[X]
        for a in range(radix):
            Y = frozenset(q for (_, q, b) in G.out_edges(X, data="label") if b == a)
            if not Y:
                continue
            if Y not in index:
                index[Y] = len(states)
                states.append(Y)
                delta.append({})
                stack.append(Y)
            delta[i][a] = index[Y]
    return states, delta


class Subshift:
    """A subshift over {0, ..., r-1} given by a trimmed labeled graph."""

    def __init__(self, radix, graph, name="subshift"):
        self.radix = check_radix(radix)
        self.name = name
        for (_, _, label) in graph.edges(data="label"):
            if label is None or not 0 <= label < self.radix:
                raise DigitError(f"edge label {label} invalid for radix {self.radix}")
        self.graph = trim(graph.copy())
        if len(self.graph) == 0:
            raise EmptySubshiftError(f"{name}: no state starts an infinite word")
        if not is_deterministic(self.graph):
            logger.warning(f"{name}: presentation is not deterministic; counting uses its subset presentation")
        logger.debug(f"Built {name} with {len(self.graph)} states and {self.graph.number_of_edges()} edges")

    def __repr__(self):
        return f"Subshift({self.name!r}, radix={self.radix}, states={len(self.graph)})"

    @cached_property
    def follower_automaton(self):
        """(states, delta, matrix) of the subset presentation; matrix is an exact object array."""
        states, delta = subset_presentation(self.graph, self.radix)
        matrix = np.zeros((len(states), len(states)), dtype=object)
        for i, row in enumerate(delta):
            for j in row.values():
                matrix[i, j] += 1
        return states, delta, matrix

    def accepts(self, word):
        """True iff the word (in time order, least significant digit first) is in L(Σ)."""
        _, delta, _ = self.follower_automaton
        state = 0
        for a in word:
            state = delta[state].get(a)
            if state is None:
                return False
        return True


@dataclass
class EntropyEstimate:
    """Normalized entropy h_top / log r, as a counting slope and a spectral estimate."""

    slope: float
    spectral: float
    levels: list = field(default_factory=list)


def transfer_matrix(sigma):
    """Edge-count matrix of the presentation, rows and columns in sorted state order."""
    nodes = list(sigma.graph.nodes)
    index = {q: i for i, q in enumerate(nodes)}
    matrix = np.zeros((len(nodes), len(nodes)), dtype=object)
    for (u, v) in sigma.graph.edges():
        matrix[index[u], index[v]] += 1
    return matrix


def sft_from_forbidden(r, forbidden, name=None):
    """Shift of finite type avoiding the given words.

    States are the allowed words of length at most l-1 (l the longest
    forbidden word); short states cover one-sided sequences whose first
    symbols have no admissible past.

    Args:
        r: radix
        forbidden: iterable of DigitWord or digit sequences in time order
        name: fixture name for logs

    Returns:
        Subshift
    """
    r = check_radix(r)
    words = set()
    for w in forbidden:
        digits = w.digits if isinstance(w, DigitWord) else tuple(w)
        DigitWord(digits, r)
        if not digits:
            raise DigitError("the empty word cannot be forbidden")
        words.add(tuple(digits))
    memory = max((len(w) for w in words), default=1) - 1

    def allowed_suffixes(u):
        return not any(u[len(u) - k:] in words for k in range(1, len(u) + 1))

    def avoids(u):
        return all(allowed_suffixes(u[:i]) for i in range(1, len(u) + 1))

    G = nx.MultiDiGraph()
    for length in range(memory + 1):
        for u in product(range(r), repeat=length):
            if avoids(u):
                G.add_node(u)
    for u in list(G.nodes):
        for b in range(r):
            extended = u + (b,)
            if not allowed_suffixes(extended):
                continue
            target = extended if len(u) < memory else extended[1:]
            G.add_edge(u, target, label=b)
    name = name or f"sft(r={r}, forbidden={sorted(words)})"
    return Subshift(r, G, name=name)


def full_shift(r):
    return sft_from_forbidden(r, [], name=f"full {r}-shift")


def golden_mean_shift():
    return sft_from_forbidden(2, [(1, 1)], name="golden mean")


def restricted_digit_shift(r, digits):
    """All sequences using only the given digits."""
    r = check_radix(r)
    digits = set(digits)
    return sft_from_forbidden(r, [(d,) for d in range(r) if d not in digits],
                              name=f"digits {sorted(digits)} base {r}")


def even_shift():
    """Binary sequences with an even number of 0's between any two 1's."""
    G = nx.MultiDiGraph()
    G.add_edge("even", "even", label=1)
    G.add_edge("even", "odd", label=0)
    G.add_edge("odd", "even", label=0)
    return Subshift(2, G, name="even")


def prime_gap_shift(gap_cap):
    """Binary sequences whose 0-runs between consecutive 1's have prime length <= gap_cap.

    Leading and trailing 0-runs are unrestricted. The full prime gap shift
    is not sofic; its entropy is approached from below as gap_cap grows.
    """
    if gap_cap < 2:
        raise DigitError(f"gap_cap must be >= 2, got {gap_cap}")
    G = nx.MultiDiGraph()
    G.add_edge("free", "free", label=0)
    G.add_edge("free", ("gap", 0), label=1)
    for k in range(gap_cap):
        G.add_edge(("gap", k), ("gap", k + 1), label=0)
    for k in range(gap_cap + 1):
        if isprime(k):
            G.add_edge(("gap", k), ("gap", 0), label=1)
    # a 0-run longer than the cap can only be the trailing run
    G.add_edge(("gap", gap_cap), "tail", label=0)
    G.add_edge("tail", "tail", label=0)
    return Subshift(2, G, name=f"prime gap (cap {gap_cap})")


def from_fixture_text(text):
    """Parse the plain-text fixture format.

    First line "radix r"; then "forbid w" lines (digit strings, time order)
    or one named key: "golden", "even", "primegap G", "full".
    """
    lines = [line.split('#')[0].strip() for line in text.splitlines()]
    lines = [line for line in lines if line]
    if not lines or not lines[0].startswith('radix'):
        raise DigitError("fixture text must start with 'radix r'")
    r = check_radix(int(lines[0].split()[1]))
    forbidden = []
    for line in lines[1:]:
        key, *args = line.split()
        if key == 'forbid':
            forbidden.append(tuple(int(ch) for ch in args[0]))
        elif key == 'golden':
            return golden_mean_shift()
        elif key == 'even':
            return even_shift()
        elif key == 'primegap':
            return prime_gap_shift(int(args[0]))
        elif key == 'full':
            return full_shift(r)
        else:
            raise DigitError(f"unknown fixture line: {line}")
    return sft_from_forbidden(r, forbidden)


def language_count(sigma, N):
    """Exact |L_N(Σ)|, words of length N counted with leading zeros."""
    if N < 0:
        raise ValueError(f"N must be >= 0, got {N}")
    return language_counts(sigma, N)[N]


def language_counts(sigma, N_max):
    """[|L_0|, ..., |L_{N_max}|] from one pass of matrix-vector products."""
    _, _, matrix = sigma.follower_automaton
    vector = np.ones(matrix.shape[0], dtype=object)
    counts = [int(vector[0])]
    for _ in range(N_max):
        vector = matrix.dot(vector)
        counts.append(int(vector[0]))
    return counts


def enumerate_words(sigma, N):
    """All words of L_N(Σ) as tuples, in lexicographic order."""
    _, delta, _ = sigma.follower_automaton
    words = [((), 0)]
    for _ in range(N):
        words = [(w + (a,), j) for (w, i) in words for a, j in sorted(delta[i].items())]
    return [w for (w, _) in words]


def spectral_radius(matrix, iterations=POWER_ITERATIONS):
    """Dominant eigenvalue by power iteration on the all-ones vector.

    Growth is averaged over the whole run so periodic components do not
    make the estimate oscillate.
    """
    M = np.asarray(matrix, dtype=float)
    v = np.ones(M.shape[0])
    log_growth = 0.0
    for _ in range(iterations):
        v = M @ v
        norm = np.linalg.norm(v)
        if norm == 0:
            return 0.0
        log_growth += math.log(norm)
        v = v / norm
    return math.exp((log_growth - math.log(math.sqrt(M.shape[0]))) / iterations)


def fit_slope(xs, ys):
    """Least-squares slope over the top ceil(half) of the points.

    A single point gives its ratio y/x; no points give 0.
    """
    start = len(xs) // 2
    X = np.asarray(xs[start:], dtype=float).reshape(-1, 1)
    y = np.asarray(ys[start:], dtype=float)
    if len(X) == 0:
        return 0.0
    if len(X) == 1:
        return float(y[0] / X[0, 0]) if X[0, 0] else 0.0
    return float(LinearRegression().fit(X, y).coef_[0])


def entropy(sigma, N_max):
    """Estimate h_top(Σ)/log r.

    Args:
        sigma: Subshift
        N_max: deepest level counted, >= 2

    Returns:
        EntropyEstimate with the counting slope of N -> log_r |L_N| over the
        top half of 1..N_max and the power-iteration estimate; slope and
        spectral are None when the language is empty at N_max
    """
    if N_max < 2:
        raise ValueError(f"N_max must be >= 2, got {N_max}")
    counts = language_counts(sigma, N_max)
    levels = list(range(1, N_max + 1))
    if counts[N_max] == 0:
        logger.warning(f"{sigma.name}: empty language at N={N_max}, entropy undefined")
        return EntropyEstimate(None, None, [])
    logs = [math.log(counts[N]) / math.log(sigma.radix) for N in levels]
    slope = fit_slope(levels, logs)
    lam = spectral_radius(transfer_matrix(sigma))
    spectral = math.log(lam) / math.log(sigma.radix) if lam > 0 else 0.0
    logger.info(f"{sigma.name}: entropy slope {slope:.6f}, spectral {spectral:.6f}")
    return EntropyEstimate(slope, spectral, [(N, counts[N], logs[N - 1] / N) for N in levels])


def embed(sigma, bound):
    """A_Σ ∩ [0, bound): 0 together with the values of all words of L(Σ).

    A positive n belongs to A_Σ iff its canonical digit word is in L(Σ),
    since L(Σ) is closed under prefixes.
    """
    from .intset import IntSet

    if bound <= 0:
        return IntSet((), max(bound, 0))
    _, delta, _ = sigma.follower_automaton
    r = sigma.radix
    elements = [0]
    # (automaton state, value so far, next place value)
    stack = [(0, 0, 1)]
    while stack:
        state, value, place = stack.pop()
        if place >= bound:
            continue
        for a, nxt in delta[state].items():
            extended = value + a * place
            if a and extended < bound:
                elements.append(extended)
            stack.append((nxt, extended, place * r))
    return IntSet(sorted(elements), bound)


def named_shift(name):
    """Resolve a short fixture name.

    Names: "golden", "even", "full:R", "digits:R:D,D,..." and "primegap:G".
    """
    key, _, rest = name.partition(':')
    args = rest.split(':') if rest else []
    try:
        if key == 'golden' and not args:
            return golden_mean_shift()
        if key == 'even' and not args:
            return even_shift()
        if key == 'full' and len(args) == 1:
            return full_shift(int(args[0]))
        if key == 'digits' and len(args) == 2:
            return restricted_digit_shift(int(args[0]), [int(d) for d in args[1].split(',')])
        if key == 'primegap' and len(args) == 1:
            return prime_gap_shift(int(args[0]))
    except ValueError as e:
        raise DigitError(f"bad fixture name {name!r}: {e}") from e
    raise DigitError(f"unknown fixture name {name!r}")
