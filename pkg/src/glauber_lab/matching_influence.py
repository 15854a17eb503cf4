"""Monomer-dimer (weighted matching) machinery: matching polynomials, tree
recursions for unmatched probabilities, edge-to-edge influences on graphs
and on self-avoiding-walk trees, and total-influence bounds.

Edge activities ``x`` are arrays indexed like ``g.edges`` (a scalar means the
same activity on every edge). Influence ``I(e -> f)`` is
``P(f in M | e in M) - P(f in M | e not in M)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePinning, NotATree, ParameterOutOfRange, VertexOutOfRange
from .graph_core import Graph, RootedTree, build_graph, path_tree


def _activities(g: Graph, x) -> np.ndarray:
    if np.isscalar(x):
        return np.full(g.m, float(x))
    a = np.asarray(x, dtype=float)
    if a.shape != (g.m,):
        raise ParameterOutOfRange(f"need {g.m} edge activities, got shape {a.shape}")
    if (a < 0).any():
        raise ParameterOutOfRange("activities must be nonnegative")
    return a


# matchings and polynomials

def enumerate_matchings(g: Graph) -> list[int]:
    """All matchings as bitmasks over edge ids (the empty matching included)."""
    out = []
    inc = [[] for _ in range(g.n)]
    for i, (u, v) in enumerate(g.edges):
        inc[u].append(i)
        inc[v].append(i)

    def rec(i, used, mask):
        if i == g.m:
            out.append(mask)
            return
        rec(i + 1, used, mask)
        u, v = g.edges[i]
        if not (used >> u & 1 or used >> v & 1):
            rec(i + 1, used | 1 << u | 1 << v, mask | 1 << i)

    rec(0, 0, 0)
    return out


def matching_poly(g: Graph, x=1.0, removed: int = 0) -> float:
    """``M_G(x)`` by vertex deletion at the lowest remaining vertex, memoised on the
    remaining vertex set; ``removed`` is a bitmask of vertices deleted up front."""
    a = _activities(g, x)
    memo: dict[int, float] = {}

    def rec(alive: int) -> float:
        if alive == 0:
            return 1.0
        hit = memo.get(alive)
        if hit is not None:
            return hit
        r = (alive & -alive).bit_length() - 1
        rest = alive & ~(1 << r)
        terms = [rec(rest)]
        for v in g.adjacency[r]:
            if rest >> v & 1:
                terms.append(a[g.edge_id(r, v)] * rec(rest & ~(1 << v)))
        val = math.fsum(terms)
        memo[alive] = val
        return val

    return rec(((1 << g.n) - 1) & ~removed)


def edge_marginal(g: Graph, x, e: int) -> float:
    """``P(e in M) = x_e M_{G-u-v} / M_G``, the log-derivative ``x_e d/dx_e log M_G``."""
    a = _activities(g, x)
    u, v = g.edges[e]
    return a[e] * matching_poly(g, a, 1 << u | 1 << v) / matching_poly(g, a)


def unmatched_probability(g: Graph, x, r: int) -> float:
    """``P(r unmatched) = M_{G-r} / M_G``."""
    a = _activities(g, x)
    return matching_poly(g, a, 1 << r) / matching_poly(g, a)


def saturation_bound(lam: float, delta: int) -> float:
    return lam * delta / (1 + lam * delta)


def total_influence_bound(lam: float, delta: int) -> float:
    """``min(2 lam Delta, 2 sqrt(1 + lam Delta))``."""
    return min(2 * lam * delta, 2 * math.sqrt(1 + lam * delta))


# influences on small graphs by enumeration

def influence_matrix_matchings(g: Graph, x=1.0) -> np.ndarray:
    """Full edge-to-edge influence matrix by matching enumeration (zero diagonal)."""
    a = _activities(g, x)
    masks = np.array(enumerate_matchings(g), dtype=np.int64)
    return _influence_from_masks(masks, a, np.arange(g.m))


def _influence_from_masks(masks: np.ndarray, a: np.ndarray, edges: np.ndarray) -> np.ndarray:
    X = ((masks[:, None] >> edges[None, :]) & 1).astype(float)
    w = np.exp(X @ np.log(np.maximum(a[edges], 1e-300)))
    w = w / w.sum()
    p = w @ X
    joint = X.T @ (w[:, None] * X)
    I = joint / p[:, None] - (p[None, :] - joint) / (1 - p)[:, None]
    np.fill_diagonal(I, 0.0)
    return I


@dataclass(frozen=True)
class EdgeInfluenceTable:
    source: int
    influences: dict          # target edge id -> I(source -> target)
    total: float

    def to_csv(self, g: Graph) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["edge", "target", "influence"])
        for f, val in sorted(self.influences.items()):
            w.writerow([f"{g.edges[self.source]}", f"{g.edges[f]}", repr(float(val))])
        return buf.getvalue()


def reduce_pinning(g: Graph, pinning: dict) -> tuple[Graph, list[int], set[int]]:
    """Pinned graph reduction.

    ``pinning`` maps edge id to 1 (in the matching) or 0 (out). Returns the
    reduced graph ``H`` on the same vertices, the map from ``H``'s edges to
    edge ids of ``g``, and the set of free edges frozen out of the matching.
    """
    covered = 0
    for e, s in pinning.items():
        if s == 1:
            u, v = g.edges[e]
            if covered >> u & 1 or covered >> v & 1:
                raise InfeasiblePinning("two pinned matching edges share a vertex")
            covered |= 1 << u | 1 << v
    keep, frozen = [], set()
    for i, (u, v) in enumerate(g.edges):
        if i in pinning:
            continue
        if covered >> u & 1 or covered >> v & 1:
            frozen.add(i)
        else:
            keep.append(i)
    return build_graph(g.n, [g.edges[i] for i in keep]), keep, frozen


def edge_influence_table(g: Graph, lam, e: int, pinning: dict | None = None) -> EdgeInfluenceTable:
    """Influences of edge ``e`` on every other free edge under a pinning."""
    pinning = dict(pinning or {})
    a = _activities(g, lam)
    if e in pinning:
        raise InfeasiblePinning(f"edge {e} is pinned")
    H, keep, frozen = reduce_pinning(g, pinning)
    if e in frozen:
        raise InfeasiblePinning(f"edge {e} is forced out of the matching by the pinning")
    I = influence_matrix_matchings(H, a[keep])
    row = I[keep.index(e)]
    table = {f: float(row[j]) for j, f in enumerate(keep) if f != e}
    table.update({f: 0.0 for f in frozen})
    return EdgeInfluenceTable(e, table, math.fsum(abs(v) for v in table.values()))


@dataclass(frozen=True)
class ExhaustiveResult:
    subsets: int
    max_row_total: float
    max_eta: float
    bound: float
    worst_ratio: float        # max row total / bound


def exhaustive_pinning_check(g: Graph, lam: float) -> ExhaustiveResult:
    """Every pinning of the matching model on ``g``.

    A pinning's conditional law is the matching law of a spanning subgraph
    (pinned-out edges and the neighbourhoods of pinned-in edges removed),
    and every spanning subgraph arises by pinning its complement out; edges
    frozen by the pinning add only zero rows. So sweeping all edge subsets
    covers all pinnings.
    """
    a = _activities(g, lam)
    masks = np.array(enumerate_matchings(g), dtype=np.int64)
    bound = total_influence_bound(lam, g.max_degree)
    worst_total, worst_eta, count = 0.0, 0.0, 0
    for F in range(1, 1 << g.m):
        edges = np.array([i for i in range(g.m) if F >> i & 1])
        sub = masks[(masks & ~F) == 0]
        I = _influence_from_masks(sub, a, edges)
        count += 1
        worst_total = max(worst_total, float(np.abs(I).sum(axis=1).max()))
        if len(edges) > 1:
            worst_eta = max(worst_eta, float(np.linalg.eigvals(I).real.max()))
    return ExhaustiveResult(count, worst_total, worst_eta, bound,
                            worst_total / bound if bound else 0.0)


# trees

def _tree_adjacency(t: RootedTree) -> list[list[tuple[int, int]]]:
    adj = [[] for _ in range(t.size)]
    for c in t.edge_nodes():
        p = t.parent[c]
        adj[p].append((c, c))
        adj[c].append((p, c))
    return adj


def forest_edge_marginals(adj, x: np.ndarray, dead_nodes=(), dead_edge: int = -1) -> np.ndarray:
    """``P(edge in M)`` for every edge of a forest (0 for removed edges).

    ``adj[u]`` lists ``(neighbour, edge id)``. Messages are unmatched
    probabilities of a vertex inside its side of an edge.
    """
    N = len(adj)
    alive = np.ones(N, dtype=bool)
    alive[list(dead_nodes)] = False
    parent = np.full(N, -1)
    pedge = np.full(N, -1)
    seen = np.zeros(N, dtype=bool)
    order = []
    for root in range(N):
        if not alive[root] or seen[root]:
            continue
        seen[root] = True
        stack = [root]
        while stack:
            u = stack.pop()
            order.append(u)
            for v, eid in adj[u]:
                if eid == dead_edge or not alive[v] or seen[v]:
                    continue
                seen[v] = True
                parent[v], pedge[v] = u, eid
                stack.append(v)
    kids = [[] for _ in range(N)]
    for u in order:
        if parent[u] >= 0:
            kids[parent[u]].append(u)
    down = np.ones(N)
    for u in reversed(order):
        s = math.fsum(x[pedge[c]] * down[c] for c in kids[u])
        down[u] = 1.0 / (1.0 + s)
    up = np.ones(N)
    marg = np.zeros(len(x))
    for u in order:
        outside = x[pedge[u]] * up[u] if parent[u] >= 0 else 0.0
        for c in kids[u]:
            s = math.fsum([outside] + [x[pedge[o]] * down[o] for o in kids[u] if o != c])
            up[c] = 1.0 / (1.0 + s)
            z = x[pedge[c]] * down[c] * up[c]
            marg[pedge[c]] = z / (1.0 + z)
    return marg


def tree_activities(t: RootedTree, g: Graph, x) -> np.ndarray:
    """Activities on tree edges (indexed by child node, entry 0 unused) copied from ``g``."""
    a = _activities(g, x)
    out = np.zeros(t.size)
    for c in t.edge_nodes():
        out[c] = a[t.origin_edge[c]]
    return out


def tree_influence_row(t: RootedTree, xt: np.ndarray, e: int,
                       adj=None) -> np.ndarray:
    """``I_T(e -> f)`` for every tree edge ``f`` (edges named by child node; entry ``e`` is 0)."""
    adj = adj or _tree_adjacency(t)
    p = t.parent[e]
    given_in = forest_edge_marginals(adj, xt, dead_nodes=(p, e))
    given_out = forest_edge_marginals(adj, xt, dead_edge=e)
    row = given_in - given_out
    row[0] = 0.0
    row[e] = 0.0
    return row


@dataclass(frozen=True)
class TreeRecursionState:
    tree: RootedTree
    unmatched: np.ndarray      # mu_{T(u)}(u unmatched), subtree of u
    residual: float

    @property
    def root_value(self) -> float:
        return float(self.unmatched[0])


def tree_recursion(t: RootedTree | Graph, lam, root: int = 0) -> TreeRecursionState:
    """Bottom-up unmatched probabilities ``1/(1 + sum_c x_c * value(c))``."""
    if isinstance(t, Graph):
        if not t.is_tree():
            raise NotATree("graph is not a tree")
        t = path_tree(t, root)
    xt = np.full(t.size, float(lam)) if np.isscalar(lam) else np.asarray(lam, dtype=float)
    val = np.ones(t.size)
    for u in sorted(range(t.size), key=lambda u: -t.depth[u]):
        val[u] = 1.0 / (1.0 + math.fsum(xt[c] * val[c] for c in t.children[u]))
    res = max(abs(val[u] * (1 + math.fsum(xt[c] * val[c] for c in t.children[u])) - 1)
              for u in range(t.size))
    return TreeRecursionState(t, val, res)


def tree_matching_poly(t: RootedTree, xt: np.ndarray, drop_root: bool = False) -> float:
    """Matching polynomial of the tree (or of the tree minus its root)."""
    full = np.ones(t.size)
    free = np.ones(t.size)
    for u in sorted(range(t.size), key=lambda u: -t.depth[u]):
        kids = t.children[u]
        free[u] = math.prod(full[c] for c in kids)
        full[u] = free[u] * (1.0 + math.fsum(xt[c] * free[c] / full[c] for c in kids))
    return float(free[0] if drop_root else full[0])


def influence_factorization_check(t: RootedTree, lam, e: int, f: int) -> tuple[float, float]:
    """Direct influence of tree edge ``e`` on ``f`` and the product of consecutive
    influences along the edge path between them."""
    if e == f:
        raise ParameterOutOfRange("need two distinct edges")
    xt = np.full(t.size, float(lam)) if np.isscalar(lam) else np.asarray(lam, dtype=float)
    adj = _tree_adjacency(t)
    path = tree_edge_path(t, e, f)
    lhs = tree_influence_row(t, xt, e, adj)[f]
    rhs = 1.0
    for a, b in zip(path, path[1:]):
        rhs *= tree_influence_row(t, xt, a, adj)[b]
    return float(lhs), float(rhs)


def tree_edge_path(t: RootedTree, e: int, f: int) -> list[int]:
    """Tree edges (child nodes) on the shortest edge-adjacency path from ``e`` to ``f``."""
    up_e = t.path_to_root(e)
    up_f = t.path_to_root(f)
    on_f = set(up_f)
    lca = next(u for u in up_e if u in on_f)
    nodes = up_e[:up_e.index(lca) + 1] + list(reversed(up_f[:up_f.index(lca)]))
    edges = []
    for a, b in zip(nodes, nodes[1:]):
        edges.append(a if t.parent[a] == b else b)
    if not edges or edges[0] != e:
        edges.insert(0, e)
    if edges[-1] != f:
        edges.append(f)
    return edges


# graph to tree reduction

def graph_to_tree_check(g: Graph, r: int, lam, e: int,
                        tree: RootedTree | None = None) -> tuple[dict, dict]:
    """Influences of ``e`` (an edge at ``r``) in ``g`` and the sums over the path-tree
    copies of each target edge."""
    if r not in g.edges[e]:
        raise VertexOutOfRange(f"edge {g.edges[e]} is not incident to root {r}")
    a = _activities(g, lam)
    t = tree or path_tree(g, r)
    row_g = influence_matrix_matchings(g, a)[e]
    xt = tree_activities(t, g, a)
    root_copy = next(c for c in t.children[0] if t.origin_edge[c] == e)
    row_t = tree_influence_row(t, xt, root_copy)
    sums: dict[int, list] = {}
    for c in t.edge_nodes():
        if c != root_copy:
            sums.setdefault(t.origin_edge[c], []).append(row_t[c])
    graph_side = {f: float(row_g[f]) for f in range(g.m) if f != e}
    tree_side = {f: math.fsum(sums.get(f, [0.0])) for f in range(g.m) if f != e}
    return graph_side, tree_side


@dataclass(frozen=True)
class PolynomialCheck:
    graph_ratio: float        # M_G / M_{G-r}
    tree_ratio: float         # Mbar_T / Mbar_{T-r}
    quotient_shift: float     # largest relative change of Mbar_T / M_G when x_e moves, e at r


def polynomial_identity_check(g: Graph, r: int, x, tree: RootedTree | None = None,
                              step: float = 0.37) -> PolynomialCheck:
    a = _activities(g, x)
    t = tree or path_tree(g, r)
    xt = tree_activities(t, g, a)
    graph_ratio = matching_poly(g, a) / matching_poly(g, a, 1 << r)
    tree_ratio = 1.0 / tree_recursion(t, xt).root_value
    q0 = tree_matching_poly(t, xt) / matching_poly(g, a)
    shift = 0.0
    for v in g.adjacency[r]:
        b = a.copy()
        b[g.edge_id(r, v)] += step
        q1 = tree_matching_poly(t, tree_activities(t, g, b)) / matching_poly(g, b)
        shift = max(shift, abs(q1 - q0) / abs(q0))
    return PolynomialCheck(graph_ratio, tree_ratio, shift)


# tree total influence and its majorants

def _side_tree(t: RootedTree, start: int, banned: int):
    """Children lists of the component of ``start`` in ``T`` minus the edge to ``banned``,
    rooted at ``start``, with the activity of each child's parent edge."""
    adj = _tree_adjacency(t)
    kids: dict[int, list[tuple[int, int]]] = {}
    order = [start]
    parent = {start: banned}
    i = 0
    while i < len(order):
        u = order[i]
        i += 1
        kids[u] = []
        for v, eid in adj[u]:
            if v == parent[u]:
                continue
            parent[v] = u
            kids[u].append((v, eid))
            order.append(v)
    return kids, order


@dataclass(frozen=True)
class TotalInfluenceReport:
    total: float
    bound: float
    majorant: float
    path_maxima: tuple[float, ...]      # k = 1..depth
    path_bounds: tuple[float, ...]

    @property
    def holds(self) -> bool:
        """Total influence below both the path-product majorant and the closed-form bound."""
        tol = 1e-12
        return self.total <= self.majorant + tol and self.total <= self.bound + tol

    @property
    def majorant_within_bound(self) -> bool:
        return self.majorant <= self.bound + 1e-12

    @property
    def path_bounds_hold(self) -> bool:
        """Whether every per-length path maximum sits below its per-length bound.

        Reported, not asserted: the gradient factor can be exceeded by a single
        path product (e.g. the 5-vertex tree 0-1, 1-2, 1-3, 2-4 at lambda = 2).
        """
        return all(m <= b + 1e-12 for m, b in zip(self.path_maxima, self.path_bounds))


def tree_total_influence_bound(t: RootedTree, lam: float, e: int) -> TotalInfluenceReport:
    """Total absolute influence of tree edge ``e``, the path-product majorant and the
    per-length path bounds."""
    xt = np.full(t.size, float(lam))
    row = tree_influence_row(t, xt, e)
    total = math.fsum(abs(v) for v in row)
    delta = t.max_degree
    bound = total_influence_bound(lam, delta)
    best: dict[int, float] = {}
    for start, banned in ((e, t.parent[e]), (t.parent[e], e)):
        kids, order = _side_tree(t, start, banned)
        val = {}
        for u in reversed(order):
            val[u] = 1.0 / (1.0 + math.fsum(xt[eid] * val[c] for c, eid in kids[u]))
        sat = {u: 1.0 - val[u] for u in order}
        # longest[k][u]: best product over downward paths of k nodes starting at u
        prev = dict(sat)
        k = 1
        while prev:
            best[k] = max(best.get(k, 0.0), prev[start] if start in prev else 0.0)
            nxt = {}
            for u in order:
                cand = [prev[c] for c, _ in kids[u] if c in prev]
                if cand:
                    nxt[u] = sat[u] * max(cand)
            prev = nxt
            k += 1
    ks = sorted(k for k in best if best[k] > 0)
    maxima = tuple(best[k] for k in ks)
    s = saturation_bound(lam, delta)
    gfac = 1.0 - 2.0 / (math.sqrt(1.0 + lam * delta) + 1.0)
    bounds = tuple(min(s ** k, gfac ** (k // 2)) for k in ks)
    majorant = 2.0 * math.fsum(maxima)
    return TotalInfluenceReport(total, bound, majorant, maxima, bounds)
