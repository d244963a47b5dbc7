"""Leveled Trees

Finite rooted trees whose nodes are split into levels Γ_0, ..., Γ_N, with
base-r Hausdorff content computed by a min-cut DP, fertility queries along
ancestor chains, the content-driven thinning recursion, extraction of
subtrees with fertile ancestry, and equal-split flow measures.

Trees are immutable once built. Children keep insertion order, which the
pipeline feeds in payload (grid point) order; that order breaks ties
wherever children are ranked.

Example usage:
    - T = full_tree(2, 5)
    - content(T, 2, 1)[0]      -> 1
    - flow_measure(T)          -> {node: Fraction}
"""

import decimal
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import pandas as pd

from . import precision, setting

logger = logging.getLogger(__name__)

DUMP_COLUMNS = ['id', 'level', 'parent_id', 'payload']


class TreeError(ValueError):
    """A malformed tree: several roots, missing parents, childless inner nodes."""


class HypothesisError(ValueError):
    """A precondition of thinning or subtree extraction fails.

    Attributes:
        inequality: short name of the failed condition
        node: the offending node, when there is one
        values: the numbers that were compared
    """

    def __init__(self, inequality, node=None, values=None):
        self.inequality = inequality
        self.node = node
        self.values = values or {}
        super().__init__(f"{inequality} fails at node {node}: {self.values}")


@dataclass(frozen=True)
class Cut:
    nodes: frozenset = field(default_factory=frozenset)

    def __contains__(self, node):
        return node in self.nodes

    def __len__(self):
        return len(self.nodes)


class Tree:
    """A leveled rooted tree.

    Args:
        rows: iterable of (id, level, parent_id, payload); parent_id is None
            for the root only
    """

    def __init__(self, rows):
        self.parent = {}
        self.level = {}
        self.payload = {}
        self.children = {}
        levels = {}
        cap = setting('TREE_NODE_CAP')
        for node, level, parent, payload in rows:
            if node in self.level:
                raise TreeError(f"duplicate node id {node}")
            self.level[node] = int(level)
            self.parent[node] = parent
            self.payload[node] = payload
            self.children[node] = []
            levels.setdefault(int(level), []).append(node)
            if len(self.level) > cap:
                raise TreeError(f"tree exceeds the node cap {cap}")
        if not levels or len(levels.get(0, [])) != 1:
            raise TreeError("a tree needs exactly one node at level 0")
        self.height = max(levels)
        self.levels = tuple(tuple(levels.get(n, ())) for n in range(self.height + 1))
        self.root = self.levels[0][0]
        if self.parent[self.root] is not None:
            raise TreeError("the root cannot have a parent")
        for node, parent in self.parent.items():
            if node == self.root:
                continue
            if parent not in self.level:
                raise TreeError(f"node {node} has unknown parent {parent}")
            if self.level[parent] != self.level[node] - 1:
                raise TreeError(f"node {node} at level {self.level[node]} has parent at level {self.level[parent]}")
            self.children[parent].append(node)
        for n, nodes in enumerate(self.levels[:-1]):
            for node in nodes:
                if not self.children[node]:
                    raise TreeError(f"inner node {node} at level {n} has no children")
        self.children = {node: tuple(kids) for node, kids in self.children.items()}

    @classmethod
    def from_parent_lists(cls, parent_lists, payloads=None):
        """Build from per-level parent indices.

        Args:
            parent_lists: parent_lists[n - 1][i] is the index, within level
                n - 1, of the parent of the i-th node of level n
            payloads: optional per-level payload lists, root level included

        Returns:
            Tree with ids numbered level by level
        """
        rows = [(0, 0, None, payloads[0][0] if payloads else None)]
        previous = [0]
        next_id = 1
        for n, parents in enumerate(parent_lists, start=1):
            current = []
            for i, p in enumerate(parents):
                if not 0 <= p < len(previous):
                    raise TreeError(f"level {n} node {i} has parent index {p} out of range")
                rows.append((next_id, n, previous[p], payloads[n][i] if payloads else None))
                current.append(next_id)
                next_id += 1
            previous = current
        return cls(rows)

    def __len__(self):
        return len(self.level)

    def __contains__(self, node):
        return node in self.level

    def __repr__(self):
        return f"Tree(height={self.height}, nodes={len(self)}, leaves={len(self.leaves)})"

    @property
    def leaves(self):
        return self.levels[-1]

    def nodes(self):
        """All nodes, level by level."""
        for level in self.levels:
            yield from level

    def ancestors(self, node):
        """A_Γ(Q): parent, grandparent, ..., root."""
        chain = []
        parent = self.parent[node]
        while parent is not None:
            chain.append(parent)
            parent = self.parent[parent]
        return chain

    def rows(self):
        for node in self.nodes():
            yield node, self.level[node], self.parent[node], self.payload[node]


def path_tree(height):
    return Tree.from_parent_lists([[0]] * height)


def full_tree(branching, height):
    """Complete tree where every inner node has `branching` children."""
    lists = []
    width = 1
    for _ in range(height):
        lists.append([i // branching for i in range(width * branching)])
        width *= branching
    return Tree.from_parent_lists(lists)


# Cuts and content

def is_cut(T, nodes):
    """Every leaf has itself or an ancestor in nodes."""
    nodes = set(nodes)
    covered = {}
    for node in T.nodes():
        parent = T.parent[node]
        covered[node] = node in nodes or (parent is not None and covered[parent])
    return all(covered[leaf] for leaf in T.leaves)


def _weights(T, r, gamma, ctx):
    return [precision.power(r, -n * Fraction(gamma), ctx=ctx) for n in range(T.height + 1)]


def cut_cost(T, cut, r, gamma):
    """Σ_{Q ∈ C} r^{-height(Q) γ} as a Decimal."""
    ctx = precision.context()
    weights = _weights(T, r, gamma, ctx)
    nodes = cut.nodes if isinstance(cut, Cut) else cut
    with decimal.localcontext(ctx):
        return sum((weights[T.level[q]] for q in nodes), decimal.Decimal(0))


def node_costs(T, r, gamma):
    """cost(Q) = min(r^{-height(Q) γ}, Σ_children cost), bottom up, in Decimal."""
    if gamma <= 0:
        raise HypothesisError('gamma_positive', values={'gamma': gamma})
    ctx = precision.context()
    weights = _weights(T, r, gamma, ctx)
    cost = {}
    with decimal.localcontext(ctx):
        for n in range(T.height, -1, -1):
            for node in T.levels[n]:
                kids = T.children[node]
                if not kids:
                    cost[node] = weights[n]
                else:
                    cost[node] = min(weights[n], sum((cost[c] for c in kids), decimal.Decimal(0)))
    return cost, weights


def content(T, r, gamma):
    """H_r^γ(Γ): the cheapest cut and its cost.

    Returns:
        (value, Cut) with value a Decimal
    """
    cost, weights = node_costs(T, r, gamma)
    chosen = []
    stack = [T.root]
    while stack:
        node = stack.pop()
        if cost[node] == weights[T.level[node]]:
            chosen.append(node)
        else:
            stack.extend(T.children[node])
    return cost[T.root], Cut(frozenset(chosen))


def induced_contents(T, r, gamma):
    """H_r^γ(Γ_Q) for every node, with heights measured from Q.

    Uses H(Γ_Q) = r^{height(Q) γ} cost(Q), so one bottom-up pass serves
    every induced tree.
    """
    cost, weights = node_costs(T, r, gamma)
    ctx = precision.context()
    with decimal.localcontext(ctx):
        return {node: cost[node] / weights[T.level[node]] for node in T.nodes()}


# Subtrees

def induced(T, node):
    """Γ_Q: the descendants of Q, re-leveled so that Q is the root."""
    base = T.level[node]
    rows = [(node, 0, None, T.payload[node])]
    frontier = [node]
    while frontier:
        following = []
        for q in frontier:
            for c in T.children[q]:
                rows.append((c, T.level[c] - base, q, T.payload[c]))
                following.append(c)
        frontier = following
    return Tree(rows)


def restrict_to_leaves(T, leaves):
    """The subtree of the same height determined by a non-empty leaf subset."""
    leaves = set(leaves)
    if not leaves:
        raise TreeError("a subtree needs at least one leaf")
    if any(T.level.get(leaf) != T.height for leaf in leaves):
        raise TreeError("restrict_to_leaves takes leaves of the tree")
    keep = set(leaves)
    for leaf in leaves:
        keep.update(T.ancestors(leaf))
    return Tree(row for row in T.rows() if row[0] in keep)


def prune(T, select):
    """Subtree whose child sets are chosen top down.

    Args:
        T: tree
        select: callable (node, children) -> non-empty subset of children,
            called only for nodes that stay in the subtree

    Returns:
        Tree
    """
    keep = {T.root}
    for level in T.levels[:-1]:
        for node in level:
            if node not in keep:
                continue
            chosen = list(select(node, T.children[node]))
            if not chosen:
                raise TreeError(f"child selection at {node} is empty")
            keep.update(chosen)
    return restrict_to_leaves(T, [leaf for leaf in T.leaves if leaf in keep])


# Fertility

def fertile_ancestor_count(T, node, c):
    """|F_{Γ,c}(Q)|: ancestors of Q with at least c children."""
    return sum(1 for a in T.ancestors(node) if len(T.children[a]) >= c)


def has_fertile_ancestry(T, node, c, omega):
    """|F_{Γ,c}(Q)| >= ω |A_Γ(Q)|, compared exactly."""
    ancestry = T.level[node]
    return fertile_ancestor_count(T, node, c) >= Fraction(omega) * ancestry


def fertility_histogram(T, c):
    """Counts of nodes by number of c-fertile ancestors."""
    histogram = {}
    for node in T.nodes():
        k = fertile_ancestor_count(T, node, c)
        histogram[k] = histogram.get(k, 0) + 1
    return dict(sorted(histogram.items()))


# Thinning

@dataclass
class ThinningParameters:
    """A = γ5 - γ4 + log_r 2, B = γ4 - γ3 - log_r 2 and the fertility threshold r^γ3."""

    r: int
    gamma3: object
    gamma4: object
    gamma5: object
    A: decimal.Decimal = None
    B: decimal.Decimal = None
    fertile: decimal.Decimal = None
    max_children: decimal.Decimal = None

    def __post_init__(self):
        ctx = precision.context()
        log2 = precision.log_base(2, self.r, ctx=ctx)
        g3, g4, g5 = (precision.to_decimal(g, ctx) for g in (self.gamma3, self.gamma4, self.gamma5))
        with decimal.localcontext(ctx):
            self.A = g5 - g4 + log2
            self.B = g4 - g3 - log2
        self.fertile = precision.power(self.r, g3, precision.UP, ctx)
        self.max_children = precision.power(self.r, g5, ctx=ctx)
        if not g3 > 0 or not g3 < g4 < g5:
            raise HypothesisError('gamma_order', values={'gamma3': g3, 'gamma4': g4, 'gamma5': g5})
        if not self.B > 0:
            raise HypothesisError('B_positive', values={'B': self.B, 'r': self.r})

    @property
    def factors(self):
        """(r^{-A}, r^B) in Decimal."""
        ctx = precision.context()
        return (precision.power(self.r, -self.A, ctx=ctx), precision.power(self.r, self.B, ctx=ctx))

    def bound(self, ancestry, log_content):
        """(|A(Q)| B + log_r H) / (A + B)."""
        with decimal.localcontext(precision.context()):
            return (ancestry * self.B + log_content) / (self.A + self.B)


def _check_branching(T, params):
    for node in T.nodes():
        k = len(T.children[node])
        if k > params.max_children:
            logger.error(f"node {node} has {k} children, more than r^gamma5")
            raise HypothesisError('max_children', node, {'children': k, 'limit': params.max_children})


def thinning_choice(here, child_contents, params, node=None):
    """Indices of the children kept by the thinning case split.

    Args:
        here: induced content of the node
        child_contents: induced contents of its children, in child order
        params: ThinningParameters
        node: reported in the error

    Returns:
        the indices of all children with content >= here r^{-A} when there
        are at least r^γ3 of them, else the index of the best child
    """
    drop, lift = params.factors
    ranked = sorted(range(len(child_contents)), key=lambda i: -child_contents[i])
    strong = [i for i in ranked if child_contents[i] >= here * drop]
    if len(strong) >= params.fertile:
        return sorted(strong)
    best = ranked[0]
    if child_contents[best] >= here * lift:
        return [best]
    raise HypothesisError('case_split', node, {
        'content': here, 'best_child': child_contents[best], 'strong_children': len(strong),
    })


def _select_thinned(T, contents, params):
    """Kept leaves of the thinned subtree, walking the case split top down."""
    kept = []
    stack = [T.root]
    while stack:
        node = stack.pop()
        kids = T.children[node]
        if not kids:
            kept.append(node)
            continue
        chosen = thinning_choice(contents[node], [contents[c] for c in kids], params, node)
        stack.extend(kids[i] for i in chosen)
    return kept


def verify_thinning(T, thinned, total, params):
    """Check the fertility bound at every node of the thinned tree.

    Args:
        T: original tree (only its content enters)
        thinned: subtree to check
        total: H_r^γ4(T)
        params: ThinningParameters

    Returns:
        list of (node, fertile count, bound) for nodes that fail
    """
    log_content = precision.log_base(total, params.r, precision.UP)
    failures = []
    for node in thinned.nodes():
        count = fertile_ancestor_count(thinned, node, params.fertile)
        bound = params.bound(thinned.level[node], log_content)
        if count < bound:
            failures.append((node, count, bound))
    return failures


def thin(T, r, gamma3, gamma4, gamma5):
    """Subtree Γ' in which every node has
    |F_{Γ',r^γ3}(Q)| >= (|A_{Γ'}(Q)| B + log_r H_r^γ4(Γ)) / (A + B).

    At each kept node, keep every child whose induced content is at least
    H r^{-A} when there are at least r^γ3 of them; otherwise keep the single
    child of largest content, which then has content at least H r^B. Ties
    between equal contents keep the input order.

    Raises:
        HypothesisError: a node has more than r^γ5 children, B <= 0, or the
            bound fails on the result
    """
    params = ThinningParameters(r, gamma3, gamma4, gamma5)
    _check_branching(T, params)
    contents = induced_contents(T, r, gamma4)
    thinned = restrict_to_leaves(T, _select_thinned(T, contents, params))
    failures = verify_thinning(T, thinned, contents[T.root], params)
    if failures:
        node, count, bound = failures[0]
        logger.error(f"thinned tree fails the fertility bound at {len(failures)} nodes")
        raise HypothesisError('fertility_bound', node, {'fertile': count, 'bound': bound})
    logger.info(f"thinned {len(T.leaves)} leaves to {len(thinned.leaves)}")
    return thinned


def threshold_height(params, epsilon, V):
    """Smallest N >= 1 with (N B + log_r V) / (N (A + B)) > 1 - ε."""
    ctx = precision.context()
    log_v = precision.log_base(V, params.r, precision.DOWN, ctx)
    target = 1 - precision.to_decimal(epsilon, ctx)
    with decimal.localcontext(ctx):
        slack = params.B - target * (params.A + params.B)
        if slack <= 0:
            raise HypothesisError('radix_large', values={'B/(A+B)': params.B / (params.A + params.B),
                                                        '1-epsilon': target})
        N = max(1, int(math.floor(-log_v / slack)) + 1) if log_v < 0 else 1
        while (N * params.B + log_v) / (N * (params.A + params.B)) <= target:
            N += 1
        while N > 1 and ((N - 1) * params.B + log_v) / ((N - 1) * (params.A + params.B)) > target:
            N -= 1
    return N


def regular_subtree(T, r, gamma3, gamma4, gamma5, epsilon, V):
    """Subtree where every node of height >= N0 has (r^γ3, 1 - ε)-fertile ancestry.

    Returns:
        (subtree, N0)

    Raises:
        HypothesisError: naming the failed hypothesis ('gamma_chain',
            'radix_large', 'content_floor') or a failed final check
    """
    eps = Fraction(epsilon)
    g3, g4, g5 = Fraction(gamma3), Fraction(gamma4), Fraction(gamma5)
    if not (0 < eps < 1 and g3 < g4 < g5 < g4 + eps * (g4 - g3)):
        raise HypothesisError('gamma_chain', values={'gamma3': gamma3, 'gamma4': gamma4,
                                                     'gamma5': gamma5, 'epsilon': epsilon})
    params = ThinningParameters(r, gamma3, gamma4, gamma5)
    N0 = threshold_height(params, epsilon, V)
    total, _ = content(T, r, gamma4)
    if total < precision.to_decimal(V):
        raise HypothesisError('content_floor', values={'content': total, 'V': V})
    thinned = thin(T, r, gamma3, gamma4, gamma5)
    omega = 1 - eps
    for node in thinned.nodes():
        if thinned.level[node] >= N0 and not has_fertile_ancestry(thinned, node, params.fertile, omega):
            raise HypothesisError('fertile_ancestry', node, {'N0': N0})
    if T.height < N0:
        logger.warning(f"tree height {T.height} is below N0 = {N0}, the fertility claim is vacuous")
    return thinned, N0


# Flow

def flow_measure(T):
    """Equal-split flow of mass 1 from the root, exact Fractions."""
    mass = {T.root: Fraction(1)}
    for level in T.levels[:-1]:
        for node in level:
            kids = T.children[node]
            share = mass[node] / len(kids)
            for c in kids:
                mass[c] = share
    return mass


def leaf_measure(T):
    mass = flow_measure(T)
    return {leaf: mass[leaf] for leaf in T.leaves}


# Serialization

def _payload_text(payload):
    if payload is None:
        return ''
    if isinstance(payload, tuple):
        return ';'.join(str(Fraction(v)) for v in payload)
    return str(payload)


def _payload_value(text):
    if not isinstance(text, str) or not text:
        return None
    parts = tuple(Fraction(v) for v in text.split(';'))
    return parts if len(parts) > 1 else parts[0]


def dump(T):
    """CSV with one node per line: id, level, parent_id, payload."""
    frame = pd.DataFrame([(node, level, '' if parent is None else parent, _payload_text(payload))
                          for node, level, parent, payload in T.rows()], columns=DUMP_COLUMNS)
    return frame.to_csv(index=False)


def load(text):
    frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    missing = set(DUMP_COLUMNS) - set(frame.columns)
    if missing:
        raise TreeError(f"tree dump is missing columns {sorted(missing)}")
    rows = [(int(row.id), int(row.level), int(row.parent_id) if row.parent_id else None,
             _payload_value(row.payload)) for row in frame.itertuples(index=False)]
    return Tree(rows)
