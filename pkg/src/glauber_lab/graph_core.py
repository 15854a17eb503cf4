"""Undirected simple graphs, line graphs, self-avoiding-walk trees and
connected-subset counting.

Vertices are the integers ``0..n-1`` and every edge is stored as a sorted
pair, so edges can be used directly as dictionary keys.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

import networkx as nx

from .errors import (
    DuplicateEdge,
    EmptyEdgeSet,
    GraphFormatError,
    InstanceTooLarge,
    NotATree,
    PathTreeTooLarge,
    SelfLoop,
    SizeOutOfRange,
    VertexOutOfRange,
)

PATH_TREE_CAP = 100_000
SUBSET_CAP = 10_000_000


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...]
    _edge_index: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._edge_index

    def edge_id(self, u: int, v: int) -> int:
        """Position of edge ``{u, v}`` in ``self.edges``."""
        return self._edge_index[(min(u, v), max(u, v))]

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        return len(components_within(self, range(self.n)).blocks) == 1

    def is_tree(self) -> bool:
        return self.n >= 1 and self.m == self.n - 1 and self.is_connected()

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Graph with vertex ``v`` renamed to ``perm[v]``."""
        return build_graph(self.n, [(perm[u], perm[v]) for u, v in self.edges])

    def to_networkx(self) -> nx.Graph:
        h = nx.Graph()
        h.add_nodes_from(range(self.n))
        h.add_edges_from(self.edges)
        return h


def build_graph(n: int, edge_list: Iterable[Sequence[int]]) -> Graph:
    """Validate an edge list and build a :class:`Graph`.

    Edges keep their input order after normalisation to ``(min, max)``.
    """
    if n < 0:
        raise VertexOutOfRange(f"vertex count must be nonnegative, got {n}")
    edges: list[tuple[int, int]] = []
    index: dict[tuple[int, int], int] = {}
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for pair in edge_list:
        u, v = int(pair[0]), int(pair[1])
        for w in (u, v):
            if not 0 <= w < n:
                raise VertexOutOfRange(f"vertex {w} outside [0, {n})")
        if u == v:
            raise SelfLoop(f"self-loop at vertex {u}")
        e = (min(u, v), max(u, v))
        if e in index:
            raise DuplicateEdge(f"edge {e} listed twice")
        index[e] = len(edges)
        edges.append(e)
        nbrs[u].append(v)
        nbrs[v].append(u)
    adjacency = tuple(tuple(sorted(a)) for a in nbrs)
    return Graph(n, tuple(edges), adjacency, index)


def from_networkx(h: nx.Graph) -> Graph:
    nodes = sorted(h.nodes())
    pos = {v: i for i, v in enumerate(nodes)}
    return build_graph(len(nodes), sorted((min(pos[u], pos[v]), max(pos[u], pos[v]))
                                          for u, v in h.edges()))


# named generators

def empty_graph(n: int) -> Graph:
    return build_graph(n, [])


def path_graph(n: int) -> Graph:
    return build_graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise SizeOutOfRange("a cycle needs at least 3 vertices")
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(leaves: int) -> Graph:
    """Star with centre 0 and ``leaves`` leaves."""
    return build_graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def complete_graph(n: int) -> Graph:
    return build_graph(n, list(combinations(range(n), 2)))


def complete_binary_tree(depth: int) -> Graph:
    """Complete binary tree with ``depth`` levels below the root, heap numbering."""
    n = 2 ** (depth + 1) - 1
    return build_graph(n, [((i - 1) // 2, i) for i in range(1, n)])


def random_regular_graph(n: int, d: int, seed: int) -> Graph:
    if n * d % 2 or d >= n:
        raise SizeOutOfRange(f"no {d}-regular graph on {n} vertices")
    return from_networkx(nx.random_regular_graph(d, n, seed=seed))


def random_graph(n: int, p: float, seed: int) -> Graph:
    return from_networkx(nx.gnp_random_graph(n, p, seed=seed))


def all_graphs(max_n: int, min_n: int = 1, connected: bool = False) -> list[Graph]:
    """Every graph on ``min_n..max_n`` vertices up to isomorphism (``max_n <= 7``)."""
    if max_n > 7:
        raise SizeOutOfRange("the graph atlas only covers up to 7 vertices")
    out = []
    for h in nx.graph_atlas_g():
        k = h.number_of_nodes()
        if k < min_n or k > max_n:
            continue
        if connected and not nx.is_connected(h):
            continue
        out.append(from_networkx(h))
    return out


# text format

def parse_graph_text(text: str) -> Graph:
    """Parse ``"n m"`` followed by ``m`` lines ``"u v"``; blank lines and ``#`` comments skipped."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line))
    if not rows:
        raise GraphFormatError("empty graph file", 1)
    lineno, header = rows[0]
    n, m = _two_ints(header, lineno)
    body = rows[1:]
    if len(body) != m:
        where = body[m][0] if len(body) > m else (body[-1][0] + 1 if body else lineno + 1)
        raise GraphFormatError(f"header promises {m} edges, found {len(body)}", where)
    edges = []
    seen = set()
    for lineno, line in body:
        u, v = _two_ints(line, lineno)
        if u >= n or v >= n:
            raise GraphFormatError(f"vertex out of range [0, {n}) in {line!r}", lineno)
        if u == v:
            raise GraphFormatError(f"self-loop at vertex {u}", lineno)
        e = (min(u, v), max(u, v))
        if e in seen:
            raise GraphFormatError(f"edge {e} listed twice", lineno)
        seen.add(e)
        edges.append(e)
    return build_graph(n, edges)


def _two_ints(line: str, lineno: int) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise GraphFormatError(f"expected two integers, got {line!r}", lineno)
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError:
        raise GraphFormatError(f"expected two integers, got {line!r}", lineno) from None
    if a < 0 or b < 0:
        raise GraphFormatError(f"negative value in {line!r}", lineno)
    return a, b


def read_graph_file(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph_text(fh.read())


def format_graph_text(g: Graph) -> str:
    lines = [f"{g.n} {g.m}"] + [f"{u} {v}" for u, v in g.edges]
    return "\n".join(lines) + "\n"


# derived graphs

def line_graph(g: Graph) -> tuple[Graph, tuple[tuple[int, int], ...]]:
    """Line graph of ``g``; vertex ``i`` of the result is ``g.edges[i]``."""
    if g.m == 0:
        raise EmptyEdgeSet("line graph of an edgeless graph is empty")
    pairs = []
    for i, j in combinations(range(g.m), 2):
        if set(g.edges[i]) & set(g.edges[j]):
            pairs.append((i, j))
    return build_graph(g.m, pairs), g.edges


@dataclass(frozen=True)
class RootedTree:
    """Rooted tree with node 0 as root.

    ``origin_vertex[u]`` is the source-graph vertex that node ``u`` copies and
    ``origin_edge[u]`` is the source-graph edge id copied by the tree edge
    ``(parent[u], u)`` (``-1`` at the root). Tree edges are named by their
    child node.
    """
    parent: tuple[int, ...]
    children: tuple[tuple[int, ...], ...]
    origin_vertex: tuple[int, ...]
    origin_edge: tuple[int, ...]
    depth: tuple[int, ...]

    @property
    def root(self) -> int:
        return 0

    @property
    def size(self) -> int:
        return len(self.parent)

    @property
    def max_degree(self) -> int:
        return max(len(c) + (p >= 0) for c, p in zip(self.children, self.parent))

    def edge_nodes(self) -> range:
        """Child nodes naming the tree edges."""
        return range(1, self.size)

    def copies(self, edge_id: int) -> list[int]:
        """Tree edges (as child nodes) copying source edge ``edge_id``."""
        return [u for u in self.edge_nodes() if self.origin_edge[u] == edge_id]

    def path_to_root(self, u: int) -> list[int]:
        out = [u]
        while self.parent[out[-1]] >= 0:
            out.append(self.parent[out[-1]])
        return out

    def as_graph(self) -> Graph:
        return build_graph(self.size, [(self.parent[u], u) for u in self.edge_nodes()])


def path_tree(g: Graph, r: int, cap: int = PATH_TREE_CAP) -> RootedTree:
    """Tree of self-avoiding walks in ``g`` starting at ``r``.

    Built breadth first with children in ascending neighbour order.
    """
    if not 0 <= r < g.n:
        raise VertexOutOfRange(f"root {r} outside [0, {g.n})")
    parent = [-1]
    children: list[list[int]] = [[]]
    vert = [r]
    edge = [-1]
    depth = [0]
    visited = [1 << r]
    queue = deque([0])
    while queue:
        u = queue.popleft()
        x = vert[u]
        for y in g.adjacency[x]:
            if visited[u] >> y & 1:
                continue
            node = len(parent)
            if node >= cap:
                raise PathTreeTooLarge(f"path tree from {r} exceeds {cap} nodes")
            parent.append(u)
            children.append([])
            children[u].append(node)
            vert.append(y)
            edge.append(g.edge_id(x, y))
            depth.append(depth[u] + 1)
            visited.append(visited[u] | 1 << y)
            queue.append(node)
    return RootedTree(tuple(parent), tuple(tuple(c) for c in children), tuple(vert),
                      tuple(edge), tuple(depth))


def rooted_tree(g: Graph, r: int = 0) -> RootedTree:
    """View a tree graph as a :class:`RootedTree` rooted at ``r``."""
    if not g.is_tree():
        raise NotATree("graph is not a tree")
    return path_tree(g, r)


def count_self_avoiding_walks(g: Graph, r: int) -> int:
    """Number of self-avoiding walks from ``r``, the empty walk included (DFS)."""
    def walk(x, seen):
        return 1 + sum(walk(y, seen | 1 << y) for y in g.adjacency[x] if not seen >> y & 1)
    return walk(r, 1 << r)


# connected subsets

@dataclass(frozen=True)
class ComponentStructure:
    subset: frozenset
    blocks: tuple[frozenset, ...]
    lookup: dict = field(compare=False, repr=False)

    def component_of(self, v: int) -> frozenset:
        """The block containing ``v``, or the empty set if ``v`` is outside the subset."""
        i = self.lookup.get(v)
        return self.blocks[i] if i is not None else frozenset()


def components_within(g: Graph, s: Iterable[int]) -> ComponentStructure:
    """Connected components of the induced subgraph ``g[s]``."""
    sub = frozenset(s)
    for v in sub:
        if not 0 <= v < g.n:
            raise VertexOutOfRange(f"vertex {v} outside [0, {g.n})")
    lookup: dict[int, int] = {}
    blocks = []
    for v in sorted(sub):
        if v in lookup:
            continue
        comp = {v}
        lookup[v] = len(blocks)
        stack = [v]
        while stack:
            x = stack.pop()
            for y in g.adjacency[x]:
                if y in sub and y not in comp:
                    comp.add(y)
                    lookup[y] = len(blocks)
                    stack.append(y)
        blocks.append(frozenset(comp))
    return ComponentStructure(sub, tuple(blocks), lookup)


def _component_mask(g: Graph, mask: int, v: int) -> int:
    """Bitmask of the component of ``v`` inside vertex set ``mask``."""
    if not mask >> v & 1:
        return 0
    comp = 1 << v
    stack = [v]
    while stack:
        x = stack.pop()
        for y in g.adjacency[x]:
            if mask >> y & 1 and not comp >> y & 1:
                comp |= 1 << y
                stack.append(y)
    return comp


def count_connected_supersets(g: Graph, v: int, k: int) -> int:
    """Number of ``k``-sets containing ``v`` that induce a connected subgraph."""
    if not 0 <= v < g.n:
        raise VertexOutOfRange(f"vertex {v} outside [0, {g.n})")
    if not 1 <= k <= g.n:
        raise SizeOutOfRange(f"size {k} outside [1, {g.n}]")
    level = {1 << v}
    for _ in range(k - 1):
        nxt = set()
        for s in level:
            for x in range(g.n):
                if s >> x & 1:
                    for y in g.adjacency[x]:
                        if not s >> y & 1:
                            nxt.add(s | 1 << y)
        level = nxt
    return len(level)


def connected_count_bound(max_degree: int, k: int) -> float:
    return (math.e * max_degree) ** (k - 1)


def component_size_table(g: Graph, ell: int, cap: int = SUBSET_CAP) -> list[list[Fraction]]:
    """``table[v][k]`` = probability that a uniform ``ell``-subset S has ``|S_v| = k``."""
    n = g.n
    if not 1 <= ell <= n:
        raise SizeOutOfRange(f"block size {ell} outside [1, {n}]")
    total = math.comb(n, ell)
    if total > cap:
        raise InstanceTooLarge(f"C({n},{ell}) = {total} subsets exceeds cap {cap}")
    counts = [[0] * (ell + 1) for _ in range(n)]
    for s in combinations(range(n), ell):
        mask = sum(1 << x for x in s)
        done = 0
        for x in s:
            if done >> x & 1:
                continue
            comp = _component_mask(g, mask, x)
            done |= comp
            size = bin(comp).count("1")
            for y in range(n):
                if comp >> y & 1:
                    counts[y][size] += 1
        for y in range(n):
            if not mask >> y & 1:
                counts[y][0] += 1
    return [[Fraction(c, total) for c in row] for row in counts]


def component_size_probability(g: Graph, v: int, ell: int, k: int,
                               cap: int = SUBSET_CAP) -> Fraction:
    """Exact ``P(|S_v| = k)`` for a uniformly random ``ell``-subset ``S``."""
    if not 0 <= v < g.n:
        raise VertexOutOfRange(f"vertex {v} outside [0, {g.n})")
    if not 1 <= k <= ell <= g.n:
        raise SizeOutOfRange(f"need 1 <= k <= ell <= n, got k={k}, ell={ell}, n={g.n}")
    return component_size_table(g, ell, cap)[v][k]


def component_probability_bound(n: int, ell: int, max_degree: int, k: int) -> float:
    """``(ell/n) (2 e Delta theta)^(k-1)`` with ``theta = ell/n``."""
    theta = ell / n
    return theta * (2 * math.e * max_degree * theta) ** (k - 1)
