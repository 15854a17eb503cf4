import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glauber_lab.errors import InfeasiblePinning, NotATree, VertexOutOfRange
from glauber_lab.graph_core import (
    build_graph,
    complete_binary_tree,
    complete_graph,
    cycle_graph,
    empty_graph,
    path_graph,
    path_tree,
    rooted_tree,
    star_graph,
)
from glauber_lab.matching_influence import (
    edge_influence_table,
    edge_marginal,
    enumerate_matchings,
    exhaustive_pinning_check,
    forest_edge_marginals,
    graph_to_tree_check,
    influence_factorization_check,
    influence_matrix_matchings,
    matching_poly,
    polynomial_identity_check,
    saturation_bound,
    total_influence_bound,
    tree_activities,
    tree_edge_path,
    tree_influence_row,
    tree_matching_poly,
    tree_recursion,
    tree_total_influence_bound,
    unmatched_probability,
)

import oracles


@st.composite
def small_graphs(draw, max_n=6, min_m=1):
    n = draw(st.integers(2, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [p for p, k in zip(pairs, keep) if k] or [pairs[0]]
    return build_graph(n, edges)


@pytest.mark.parametrize("g,x,expected", [
    (complete_graph(2), 2.5, 3.5),
    (path_graph(3), 1.0, 3.0),
    (cycle_graph(4), 1.0, 7.0),
    (empty_graph(3), 1.0, 1.0),
])
def test_matching_poly_examples(g, x, expected):
    assert matching_poly(g, x) == pytest.approx(expected)


@settings(max_examples=40, deadline=None)
@given(small_graphs(), st.integers(0, 10**6))
def test_matching_poly_oracle_and_multiaffine(g, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 3, g.m)
    assert matching_poly(g, x) == pytest.approx(oracles.matching_poly(g, x), rel=1e-12)
    assert matching_poly(g, np.zeros(g.m)) == 1.0
    assert len(enumerate_matchings(g)) == len(oracles.matchings(g))
    e = int(rng.integers(g.m))
    vals = []
    for t in (0.0, 1.0, 2.0):
        y = x.copy()
        y[e] = t
        vals.append(matching_poly(g, y))
    assert abs(vals[0] - 2 * vals[1] + vals[2]) <= 1e-9 * max(vals)


@settings(max_examples=30, deadline=None)
@given(small_graphs(), st.floats(0.1, 5.0))
def test_marginals_and_saturation(g, lam):
    ms = oracles.matchings(g)
    Z = math.fsum(lam ** len(M) for M in ms)
    for e in range(g.m):
        direct = math.fsum(lam ** len(M) for M in ms if e in M) / Z
        assert edge_marginal(g, lam, e) == pytest.approx(direct, abs=1e-12)
    for r in range(g.n):
        covered = 1 - unmatched_probability(g, lam, r)
        assert covered <= saturation_bound(lam, g.max_degree) + 1e-12


def test_influence_table_examples():
    t = edge_influence_table(path_graph(3), 1.0, 0)
    assert t.influences == {1: pytest.approx(-0.5)} and t.total == pytest.approx(0.5)
    g = build_graph(4, [(0, 1), (2, 3)])
    assert edge_influence_table(g, 2.0, 0).influences[1] == pytest.approx(0.0, abs=1e-15)
    for e in range(3):
        assert edge_influence_table(star_graph(3), 1.0, e).total <= 4.0
    assert "edge,target,influence" in t.to_csv(path_graph(3))


@settings(max_examples=30, deadline=None)
@given(small_graphs(max_n=5), st.floats(0.2, 4.0), st.data())
def test_pinned_table_oracle(g, lam, data):
    e = data.draw(st.integers(0, g.m - 1))
    others = [i for i in range(g.m) if i != e]
    pinned = data.draw(st.lists(st.sampled_from(others), unique=True, max_size=len(others))) \
        if others else []
    pinning = {i: data.draw(st.integers(0, 1)) for i in pinned}
    try:
        t = edge_influence_table(g, lam, e, pinning)
    except InfeasiblePinning:
        return
    for f, val in t.influences.items():
        assert abs(val) <= 1 + 1e-12
        assert val == pytest.approx(oracles.matching_influence(g, lam, e, f, pinning), abs=1e-12)


def test_infeasible_pinnings():
    g = path_graph(4)
    with pytest.raises(InfeasiblePinning):
        edge_influence_table(g, 1.0, 2, {0: 1, 1: 1})
    with pytest.raises(InfeasiblePinning):
        edge_influence_table(g, 1.0, 1, {0: 1})
    with pytest.raises(InfeasiblePinning):
        edge_influence_table(g, 1.0, 1, {1: 0})


def test_tree_recursion_examples():
    t = tree_recursion(empty_graph(1), 1.0)
    assert t.root_value == 1.0
    assert tree_recursion(star_graph(2), 1.0).root_value == pytest.approx(1 / 3)
    st4 = tree_recursion(path_graph(4), 1.0)
    ms = oracles.matchings(path_graph(4))
    assert len(ms) == 5
    assert st4.root_value == pytest.approx(sum(1 for M in ms if 0 not in M) / 5)
    assert st4.residual <= 1e-12 and (st4.unmatched > 0).all() and (st4.unmatched <= 1).all()
    with pytest.raises(NotATree):
        tree_recursion(cycle_graph(4), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10**6), st.floats(0.1, 4.0))
def test_forest_marginals_match_enumeration(n, seed, lam):
    rng = np.random.default_rng(seed)
    edges = [(int(rng.integers(v)), v) for v in range(1, n)]
    g = build_graph(n, edges)
    t = rooted_tree(g, 0)
    xt = np.full(t.size, lam)
    adj = [[] for _ in range(t.size)]
    for c in t.edge_nodes():
        adj[t.parent[c]].append((c, c))
        adj[c].append((t.parent[c], c))
    marg = forest_edge_marginals(adj, xt)
    for c in t.edge_nodes():
        assert marg[c] == pytest.approx(edge_marginal(g, lam, t.origin_edge[c]), abs=1e-12)
    assert tree_matching_poly(t, xt) == pytest.approx(matching_poly(g, lam), rel=1e-12)
    assert tree_matching_poly(t, xt, drop_root=True) == pytest.approx(
        matching_poly(g, lam, removed=1), rel=1e-12)


def test_tree_influences_match_graph_influences():
    g = complete_binary_tree(2)
    t = rooted_tree(g, 0)
    xt = tree_activities(t, g, 1.3)
    I = influence_matrix_matchings(g, 1.3)
    for c in t.edge_nodes():
        row = tree_influence_row(t, xt, c)
        for d in t.edge_nodes():
            if d != c:
                assert row[d] == pytest.approx(I[t.origin_edge[c], t.origin_edge[d]], abs=1e-12)


def test_edge_path():
    t = rooted_tree(complete_binary_tree(2), 0)
    # leaves in different branches pass through both root edges
    a, b = t.children[t.children[0][0]][0], t.children[t.children[0][1]][0]
    path = tree_edge_path(t, a, b)
    assert path[0] == a and path[-1] == b and len(path) == 4
    assert tree_edge_path(t, t.children[0][0], a) == [t.children[0][0], a]


def test_factorization_examples():
    t = rooted_tree(path_graph(4), 0)
    lhs, rhs = influence_factorization_check(t, 1.0, 1, 3)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    g = path_graph(4)
    assert lhs == pytest.approx(oracles.matching_influence(g, 1.0, 0, 2), abs=1e-12)
    lhs, rhs = influence_factorization_check(t, 1.0, 1, 2)
    assert lhs == rhs
    bt = rooted_tree(complete_binary_tree(2), 0)
    for e in bt.edge_nodes():
        for f in bt.edge_nodes():
            if e != f:
                lhs, rhs = influence_factorization_check(bt, 0.8, e, f)
                assert abs(lhs - rhs) <= 1e-12


@pytest.mark.parametrize("g", [complete_graph(3), cycle_graph(4), complete_graph(4),
                               star_graph(3), cycle_graph(5)])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_graph_to_tree_identity(g, lam):
    for r in range(g.n):
        for v in g.adjacency[r]:
            e = g.edge_id(r, v)
            gs, ts = graph_to_tree_check(g, r, lam, e)
            for f in gs:
                assert abs(gs[f] - ts[f]) <= 1e-10
    if g == complete_graph(3):
        t = path_tree(g, 0)
        assert t.size == 5 and all(len(t.copies(f)) == 2 for f in range(3) if 0 not in g.edges[f])


def test_graph_to_tree_on_tree_is_identity():
    g = complete_binary_tree(2)
    t = path_tree(g, 0)
    assert all(len(t.copies(f)) == 1 for f in range(g.m))
    gs, ts = graph_to_tree_check(g, 0, 1.0, g.edge_id(0, 1))
    assert gs == pytest.approx(ts, abs=1e-12)
    with pytest.raises(VertexOutOfRange):
        graph_to_tree_check(g, 3, 1.0, g.edge_id(0, 1))


@settings(max_examples=15, deadline=None)
@given(small_graphs(max_n=5), st.permutations(range(5)), st.floats(0.3, 3.0))
def test_graph_to_tree_order_invariant(g, perm, lam):
    perm = [p for p in perm if p < g.n]
    h = g.relabel(perm)
    r = 0
    if not g.adjacency[r]:
        return
    e = g.edge_id(r, g.adjacency[r][0])
    gs, ts = graph_to_tree_check(g, r, lam, e)
    u, v = g.edges[e]
    gs2, ts2 = graph_to_tree_check(h, perm[r], lam, h.edge_id(perm[u], perm[v]))
    for f, (a, b) in enumerate(g.edges):
        if f == e:
            continue
        f2 = h.edge_id(perm[a], perm[b])
        assert ts2[f2] == pytest.approx(ts[f], abs=1e-12)
        assert gs2[f2] == pytest.approx(gs[f], abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(small_graphs(max_n=6), st.integers(0, 10**6))
def test_polynomial_identities(g, seed):
    rng = np.random.default_rng(seed)
    for r in range(g.n):
        if path_tree(g, r).size > 200:
            continue
        pc = polynomial_identity_check(g, r, rng.uniform(0.1, 2.0, g.m))
        assert abs(pc.graph_ratio - pc.tree_ratio) <= 1e-10 * pc.graph_ratio
        assert pc.quotient_shift <= 1e-10


def test_tree_total_influence_examples():
    rep = tree_total_influence_bound(rooted_tree(path_graph(2), 0), 1.0, 1)
    assert rep.total == 0 and rep.holds
    rep = tree_total_influence_bound(rooted_tree(path_graph(3), 1), 1.0, 1)
    assert rep.total == pytest.approx(0.5)
    assert rep.bound == pytest.approx(2 * math.sqrt(3))
    t = rooted_tree(complete_binary_tree(4), 0)
    for e in (1, 5, 20):
        rep = tree_total_influence_bound(t, 2.0, e)
        assert rep.bound == pytest.approx(2 * math.sqrt(7))
        assert rep.holds


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 14), st.integers(0, 10**6), st.floats(0.1, 5.0))
def test_tree_total_influence_random_trees(n, seed, lam):
    rng = np.random.default_rng(seed)
    g = build_graph(n, [(int(rng.integers(v)), v) for v in range(1, n)])
    t = rooted_tree(g, 0)
    for e in t.edge_nodes():
        rep = tree_total_influence_bound(t, lam, e)
        assert rep.holds, rep
        assert rep.majorant_within_bound, rep


def test_single_path_can_exceed_gradient_factor():
    # 1 - 2 - 4 with extra leaves 0 and 3 on vertex 1; Delta = 3, lambda = 2
    g = build_graph(5, [(0, 1), (1, 2), (1, 3), (2, 4)])
    t = rooted_tree(g, 0)
    e = next(c for c in t.edge_nodes() if t.origin_edge[c] == g.edge_id(0, 1))
    rep = tree_total_influence_bound(t, 2.0, e)
    # mu_{T(1)}(1) = 8/11 and mu_{T(2)}(2) = 2/3, product 16/33
    assert rep.path_maxima[1] == pytest.approx(16 / 33, abs=1e-12)
    assert rep.path_bounds[1] == pytest.approx(1 - 2 / (math.sqrt(7) + 1), abs=1e-12)
    assert not rep.path_bounds_hold
    assert rep.holds and rep.majorant_within_bound


def test_bound_formula():
    assert total_influence_bound(1.0, 3) == pytest.approx(4.0)
    assert total_influence_bound(0.25, 2) == pytest.approx(1.0)


def test_exhaustive_small():
    res = exhaustive_pinning_check(star_graph(3), 1.0)
    assert res.subsets == 7 and res.max_row_total <= res.bound
    assert res.max_eta <= res.bound
