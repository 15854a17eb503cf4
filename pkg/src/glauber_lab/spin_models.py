"""Spin systems with nearest-neighbour interactions and the parameter-regime
checks used to locate them (critical thresholds, up-to-Delta uniqueness and
the Dobrushin condition).

A configuration ``sigma`` on a graph has weight
``prod_{uv in E} A[sigma_u, sigma_v] * prod_v h[sigma_v]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .errors import (
    DegreeTooSmall,
    FixedPointNoConverge,
    InstanceTooLarge,
    NonPositiveParameter,
    NotAntiferromagnetic,
)
from .graph_core import Graph, line_graph


@dataclass(frozen=True)
class SpinSystem:
    q: int
    A: np.ndarray
    h: np.ndarray
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        h = np.array(self.h, dtype=float)
        if A.shape != (self.q, self.q) or h.shape != (self.q,):
            raise NonPositiveParameter("interaction matrix and field must match q")
        if self.q < 2:
            raise NonPositiveParameter("need at least two spins")
        if not np.array_equal(A, A.T) or (A < 0).any():
            raise NonPositiveParameter("interaction matrix must be symmetric and nonnegative")
        if (h <= 0).any():
            raise NonPositiveParameter("fields must be positive")
        A.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "h", h)

    @property
    def hard_pairs(self) -> frozenset:
        return frozenset((i, j) for i in range(self.q) for j in range(self.q) if self.A[i, j] == 0)

    def to_json(self) -> dict:
        if self.name == "custom":
            return {"model": "custom", "params": {"A": self.A.tolist(), "h": self.h.tolist()}}
        return {"model": self.name, "params": dict(self.params)}


@dataclass(frozen=True)
class TwoSpinParams:
    """Edge weights ``beta`` (between two 1-spins) and ``gamma`` (two 0-spins), field ``lam`` on 1-spins."""
    beta: float
    gamma: float
    lam: float

    def __post_init__(self):
        if self.beta < 0 or self.gamma <= 0 or self.lam <= 0:
            raise NonPositiveParameter("need beta >= 0, gamma > 0, lambda > 0")

    @property
    def antiferromagnetic(self) -> bool:
        return self.beta * self.gamma < 1

    def to_system(self) -> SpinSystem:
        # spin index 0 carries gamma, spin index 1 carries beta and the field
        return SpinSystem(2, [[self.gamma, 1.0], [1.0, self.beta]], [1.0, self.lam], "two_spin",
                          {"beta": self.beta, "gamma": self.gamma, "lambda": self.lam})


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise NonPositiveParameter(f"{k} must be positive, got {v}")


def hardcore(lam: float) -> SpinSystem:
    """Hard-core model; spin 1 means occupied."""
    _positive(lam=lam)
    return SpinSystem(2, [[1.0, 1.0], [1.0, 0.0]], [1.0, lam], "hardcore", {"lambda": lam})


def ising(beta: float, lam: float = 1.0) -> SpinSystem:
    """Ising model: weight ``beta`` on agreeing edges, field ``lam`` on spin 1."""
    _positive(beta=beta, lam=lam)
    return SpinSystem(2, [[beta, 1.0], [1.0, beta]], [1.0, lam], "ising",
                      {"beta": beta, "lambda": lam})


def colorings(q: int) -> SpinSystem:
    if q < 2:
        raise NonPositiveParameter("need at least two colours")
    return SpinSystem(q, np.ones((q, q)) - np.eye(q), np.ones(q), "colorings", {"q": q})


def monomer_dimer(g: Graph, lam: float) -> tuple[SpinSystem, Graph, tuple[tuple[int, int], ...]]:
    """Matchings of ``g`` weighted ``lam^|M|`` as a hard-core model on the line graph.

    Returns the system, the line graph and the edge correspondence
    (line-graph vertex ``i`` is edge ``g.edges[i]``; spin 1 = edge in the matching).
    """
    _positive(lam=lam)
    lg, corr = line_graph(g)
    s = SpinSystem(2, [[1.0, 1.0], [1.0, 0.0]], [1.0, lam], "monomer_dimer", {"lambda": lam})
    return s, lg, corr


def system_from_json(entry: dict) -> SpinSystem:
    """Build a system from ``{"model": ..., "params": {...}}``."""
    model = entry.get("model")
    p = entry.get("params", {})
    if model == "hardcore" or model == "monomer_dimer":
        return hardcore(float(p["lambda"]))
    if model == "ising":
        return ising(float(p["beta"]), float(p.get("lambda", 1.0)))
    if model == "colorings":
        return colorings(int(p["q"]))
    if model == "two_spin":
        return TwoSpinParams(float(p["beta"]), float(p["gamma"]), float(p["lambda"])).to_system()
    if model == "custom":
        A = np.asarray(p["A"], dtype=float)
        return SpinSystem(A.shape[0], A, p["h"])
    raise NonPositiveParameter(f"unknown model {model!r}")


# critical thresholds

def critical_fugacity(delta: int) -> Fraction:
    """Hard-core uniqueness threshold ``(D-1)^(D-1) / (D-2)^D`` as an exact fraction."""
    if delta < 3:
        raise DegreeTooSmall("critical fugacity needs max degree >= 3")
    return Fraction((delta - 1) ** (delta - 1), (delta - 2) ** delta)


def ising_critical(delta: int) -> tuple[Fraction, Fraction]:
    """Antiferromagnetic and ferromagnetic Ising thresholds ``((D-2)/D, D/(D-2))``."""
    if delta < 3:
        raise DegreeTooSmall("Ising thresholds need max degree >= 3")
    return Fraction(delta - 2, delta), Fraction(delta, delta - 2)


@dataclass(frozen=True)
class UniquenessReport:
    delta: int
    fixed_points: tuple[float, ...]      # R*_d for d = 1..delta-1
    derivatives: tuple[float, ...]       # |f'_d(R*_d)|
    gap: float

    @property
    def unique(self) -> bool:
        return self.gap > 0


def tree_map(p: TwoSpinParams, d: int, R: float) -> float:
    return p.lam * ((p.beta * R + 1) / (R + p.gamma)) ** d


def tree_map_derivative(p: TwoSpinParams, d: int, R: float) -> float:
    b, g, lam = p.beta, p.gamma, p.lam
    return d * lam * (b * R + 1) ** (d - 1) * (b * g - 1) / (R + g) ** (d + 1)


def uniqueness_gap(p: TwoSpinParams, delta: int, tol: float = 1e-12,
                   max_iter: int = 200) -> UniquenessReport:
    """Fixed points of the degree-``d`` tree maps for ``1 <= d < delta`` and the gap
    ``1 - max_d |f_d'(R*_d)|`` (negative when uniqueness fails)."""
    if not p.antiferromagnetic:
        raise NotAntiferromagnetic("uniqueness gap needs beta * gamma < 1")
    if delta < 2:
        raise DegreeTooSmall("need delta >= 2")
    points, derivs = [], []
    for d in range(1, delta):
        lo, hi = 0.0, tree_map(p, d, 0.0)   # f_d decreasing, so the fixed point lies in (0, f_d(0)]
        for _ in range(max_iter):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if tree_map(p, d, mid) > mid:
                lo = mid
            else:
                hi = mid
        else:
            raise FixedPointNoConverge(f"bisection for d={d} did not reach {tol}")
        r = 0.5 * (lo + hi)
        points.append(r)
        derivs.append(abs(tree_map_derivative(p, d, r)))
    return UniquenessReport(delta, tuple(points), tuple(derivs), 1.0 - max(derivs))


# Dobrushin condition

def dobrushin_matrix(s: SpinSystem, g: Graph, cap: int = 2 * 10**7) -> np.ndarray:
    """Dependence matrix ``R[u, v]``: worst TV change of ``v``'s conditional law when
    a feasible boundary on ``V - {v}`` is changed at ``u`` only."""
    n, q = g.n, s.q
    if q ** n > cap:
        raise InstanceTooLarge(f"q^n = {q ** n} exceeds cap {cap}")
    R = np.zeros((n, n))
    if n == 0:
        return R
    configs = np.array(list(product(range(q), repeat=n)), dtype=np.int64)
    w = np.prod(s.h[configs], axis=1)
    for a, b in g.edges:
        w = w * s.A[configs[:, a], configs[:, b]]
    support = configs[w > 0]
    for v in range(n):
        nb = g.adjacency[v]
        if not nb:
            continue
        others = [x for x in range(n) if x != v]
        boundaries = np.unique(support[:, others], axis=0)
        # local conditional of v from its neighbours only
        col = {x: i for i, x in enumerate(others)}
        loc = np.ones((len(boundaries), q)) * s.h
        for x in nb:
            loc = loc * s.A[:, boundaries[:, col[x]]].T
        loc = loc / loc.sum(axis=1, keepdims=True)
        for u in nb:
            rest = [i for i, x in enumerate(others) if x != u]
            keys = {}
            for idx, row in enumerate(boundaries[:, rest]):
                keys.setdefault(row.tobytes(), []).append(idx)
            worst = 0.0
            for group in keys.values():
                if len(group) < 2:
                    continue
                P = loc[group]
                tv = 0.5 * np.abs(P[:, None, :] - P[None, :, :]).sum(axis=2)
                worst = max(worst, float(tv.max()))
            R[u, v] = worst
    return R


def dobrushin_check(s: SpinSystem, g: Graph, cap: int = 2 * 10**7) -> tuple[bool, float]:
    """Return ``(holds, c)`` with ``c = 1 - max_v sum_u R(u, v)``; holds iff ``c > 0``."""
    R = dobrushin_matrix(s, g, cap)
    c = 1.0 - (float(R.sum(axis=0).max()) if g.n else 0.0)
    return c > 0, c
