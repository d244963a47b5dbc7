#!/usr/bin/env python

"""
Tests for leveled trees: content, thinning, fertile subtrees and flows
"""

import decimal
import logging
from decimal import Decimal
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from fractal_lab.geometry import precision
from fractal_lab.geometry.tree import (
    HypothesisError,
    ThinningParameters,
    Tree,
    TreeError,
    content,
    cut_cost,
    dump,
    fertile_ancestor_count,
    fertility_histogram,
    flow_measure,
    full_tree,
    has_fertile_ancestry,
    induced,
    induced_contents,
    is_cut,
    leaf_measure,
    load,
    path_tree,
    prune,
    regular_subtree,
    restrict_to_leaves,
    thin,
    threshold_height,
    verify_thinning,
)

logging.basicConfig(level=logging.INFO,
                    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger('tree_test')

ORACLE_TREES = 500
THINNING_TREES = 200
TOLERANCE = Decimal('1e-40')

# r = 16: A = 0.3, B = 0.25, at least 2 children are fertile, at most 6 are allowed
THIN_R = 16
THIN_GAMMAS = (Fraction(1, 10), Fraction(3, 5), Fraction(13, 20))
THIN_EPSILON = Fraction(3, 5)


def random_tree(rng, max_children, height, max_leaves=None, min_children=1):
    """Random leveled tree; widths are capped so the last level stays below max_leaves."""
    parent_lists = []
    width = 1
    for n in range(height):
        parents = []
        for p in range(width):
            k = int(rng.integers(min_children, max_children + 1))
            if max_leaves is not None:
                # every remaining node needs at least one child
                room = max_leaves - len(parents) - (width - p - 1)
                k = max(1, min(k, room))
            parents.extend([p] * k)
        parent_lists.append(parents)
        width = len(parents)
    return Tree.from_parent_lists(parent_lists)


def all_cuts(T, node):
    """Every antichain cut of the subtree below node."""
    kids = T.children[node]
    cuts = [frozenset([node])]
    if kids:
        for combo in product(*(all_cuts(T, c) for c in kids)):
            cuts.append(frozenset().union(*combo))
    return cuts


def test_content_matches_cut_enumeration():
    rng = np.random.default_rng(5)
    for trial in range(ORACLE_TREES):
        T = random_tree(rng, 3, int(rng.integers(1, 5)), max_leaves=12)
        r = int(rng.choice([2, 3]))
        gamma = [Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(1)][int(rng.integers(0, 4))]
        value, cut = content(T, r, gamma)
        # one weight per level, then exact sums over every cut
        weights = [cut_cost(T, [T.levels[n][0]], r, gamma) for n in range(T.height + 1)]
        with decimal.localcontext(precision.context()):
            brute = min(sum((weights[T.level[q]] for q in c), Decimal(0)) for c in all_cuts(T, T.root))
        assert abs(value - brute) <= TOLERANCE, f"trial {trial}: {value} vs {brute}"
        assert is_cut(T, cut.nodes)
        assert abs(cut_cost(T, cut, r, gamma) - value) <= TOLERANCE


def test_known_contents():
    value, cut = content(full_tree(2, 5), 2, 1)
    assert value == 1
    assert len(cut) == 1
    value, cut = content(path_tree(3), 2, 1)
    assert abs(value - Decimal(1) / 8) <= TOLERANCE
    assert cut.nodes == frozenset(path_tree(3).leaves)
    with pytest.raises(HypothesisError):
        content(path_tree(2), 2, 0)


def test_induced_contents_match_induced_trees():
    rng = np.random.default_rng(9)
    T = random_tree(rng, 3, 4, max_leaves=20)
    contents = induced_contents(T, 2, Fraction(1, 2))
    for node in T.nodes():
        value, _ = content(induced(T, node), 2, Fraction(1, 2))
        assert abs(contents[node] - value) <= TOLERANCE


def test_thinning_satisfies_the_fertility_bound():
    rng = np.random.default_rng(17)
    g3, g4, g5 = THIN_GAMMAS
    params = ThinningParameters(THIN_R, g3, g4, g5)
    for trial in range(THINNING_TREES):
        T = random_tree(rng, 6, int(rng.integers(1, 5)))
        thinned = thin(T, THIN_R, g3, g4, g5)
        total, _ = content(T, THIN_R, g4)
        assert verify_thinning(T, thinned, total, params) == []
        assert set(thinned.nodes()) <= set(T.nodes())
        assert thinned.height == T.height


def test_regular_subtree_has_fertile_ancestry():
    rng = np.random.default_rng(23)
    g3, g4, g5 = THIN_GAMMAS
    params = ThinningParameters(THIN_R, g3, g4, g5)
    for trial in range(THINNING_TREES):
        T = random_tree(rng, 6, int(rng.integers(1, 5)), min_children=2)
        V, _ = content(T, THIN_R, g4)
        subtree, N0 = regular_subtree(T, THIN_R, g3, g4, g5, THIN_EPSILON, V)
        for node in subtree.nodes():
            if subtree.level[node] >= N0:
                assert has_fertile_ancestry(subtree, node, params.fertile, 1 - THIN_EPSILON)


def test_thinning_hypotheses():
    with pytest.raises(HypothesisError) as info:
        thin(full_tree(7, 2), THIN_R, *THIN_GAMMAS)
    assert info.value.inequality == 'max_children'
    with pytest.raises(HypothesisError) as info:
        ThinningParameters(2, Fraction(1, 2), Fraction(3, 5), Fraction(7, 10))
    assert info.value.inequality == 'B_positive'
    with pytest.raises(HypothesisError) as info:
        regular_subtree(full_tree(2, 2), THIN_R, Fraction(1, 10), Fraction(3, 5), Fraction(9, 10),
                        Fraction(1, 10), 1)
    assert info.value.inequality == 'gamma_chain'


def test_threshold_height_is_smallest():
    params = ThinningParameters(THIN_R, *THIN_GAMMAS)
    for V in (Decimal(1), Decimal('0.01'), Decimal('1e-6')):
        N = threshold_height(params, THIN_EPSILON, V)
        ratio = lambda n: (n * params.B + precision.log_base(V, THIN_R)) / (n * (params.A + params.B))
        assert ratio(N) > 1 - THIN_EPSILON
        assert N == 1 or ratio(N - 1) <= 1 - THIN_EPSILON
    with pytest.raises(HypothesisError):
        threshold_height(params, Fraction(1, 10), Decimal(1))


def test_fertility_queries():
    T = full_tree(2, 3)
    leaf = T.leaves[0]
    assert fertile_ancestor_count(T, leaf, 2) == 3
    assert fertile_ancestor_count(T, leaf, 3) == 0
    assert has_fertile_ancestry(T, leaf, 2, 1)
    assert fertility_histogram(T, 2) == {0: 1, 1: 2, 2: 4, 3: 8}


def test_flow_measure():
    T = Tree.from_parent_lists([[0, 0, 0], [0, 1, 1, 2]])
    nu = leaf_measure(T)
    assert sum(nu.values()) == 1
    assert sorted(nu.values()) == [Fraction(1, 6), Fraction(1, 6), Fraction(1, 3), Fraction(1, 3)]
    assert flow_measure(T)[T.root] == 1


def test_subtrees():
    T = full_tree(3, 2)
    sub = restrict_to_leaves(T, T.leaves[:2])
    assert len(sub.leaves) == 2
    assert len(sub.levels[1]) == 1
    pruned = prune(T, lambda node, kids: kids[:1])
    assert len(pruned.leaves) == 1
    below = induced(T, T.levels[1][0])
    assert below.height == 1 and len(below.leaves) == 3
    with pytest.raises(TreeError):
        restrict_to_leaves(T, [])
    with pytest.raises(TreeError):
        restrict_to_leaves(T, [T.root])
    assert not is_cut(T, T.leaves[:3])
    assert is_cut(T, [T.root])


def test_malformed_trees():
    with pytest.raises(TreeError):
        Tree([(0, 0, None, None), (1, 0, None, None)])
    with pytest.raises(TreeError):
        Tree([(0, 0, None, None), (1, 1, 0, None), (2, 1, 0, None), (3, 2, 1, None)])
    with pytest.raises(TreeError):
        Tree([(0, 0, None, None), (1, 1, 5, None)])
    with pytest.raises(TreeError):
        Tree.from_parent_lists([[1]])


def test_dump_and_load():
    payloads = [[(Fraction(0), Fraction(0))], [(Fraction(1, 4), Fraction(1, 9)), (Fraction(1, 2), Fraction(0))]]
    T = Tree.from_parent_lists([[0, 0]], payloads)
    again = load(dump(T))
    assert list(again.rows()) == list(T.rows())
    with pytest.raises(TreeError):
        load("id,level\n0,0\n")


if __name__ == "__main__":
    logger.info("Starting tree tests")
    test_content_matches_cut_enumeration()
    test_known_contents()
    test_induced_contents_match_induced_trees()
    test_thinning_satisfies_the_fertility_bound()
    test_regular_subtree_has_fertile_ancestry()
    test_thinning_hypotheses()
    test_threshold_height_is_smallest()
    test_fertility_queries()
    test_flow_measure()
    test_subtrees()
    test_malformed_trees()
    test_dump_and_load()
    logger.info("Tree tests completed")
