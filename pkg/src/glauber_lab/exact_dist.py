"""Exact Gibbs distributions by enumeration, with pinnings, functionals
(entropy, variance, KL), influence matrices and the sweeps over all pinnings
that define spectral independence, marginal bounds and total connectivity.

An :class:`ExactDistribution` lives on a tuple of *free* vertices; its
``configs`` array has one column per free vertex. Conditioning removes
columns, so a conditional law is again an :class:`ExactDistribution`.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import rel_entr, xlogy

from .errors import (
    EmptySupport,
    InfeasiblePinning,
    InstanceTooLarge,
    NegativeFunctionValue,
    SupportMismatch,
    TooFewFreeVertices,
    VertexOutOfRange,
)
from .graph_core import Graph
from .spin_models import SpinSystem

ENUM_CAP = 2 * 10**7
PINNING_CAP = 10**6
IMAG_TOL = 1e-8


@dataclass(frozen=True)
class Pinning:
    vertices: tuple[int, ...] = ()
    spins: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.vertices) != len(self.spins):
            raise InfeasiblePinning("pinning needs one spin per vertex")
        if len(set(self.vertices)) != len(self.vertices):
            raise InfeasiblePinning("vertex pinned twice")

    @classmethod
    def from_dict(cls, mapping: Mapping[int, int]) -> "Pinning":
        items = sorted(mapping.items())
        return cls(tuple(int(v) for v, _ in items), tuple(int(s) for _, s in items))

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.vertices, self.spins))

    def __len__(self):
        return len(self.vertices)


EMPTY = Pinning()


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    system: SpinSystem
    graph: Graph
    free: tuple[int, ...]
    configs: np.ndarray
    weights: np.ndarray
    pinning: Pinning = EMPTY
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.configs.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.free)

    @property
    def q(self) -> int:
        return self.system.q

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def Z(self) -> float:
        if "Z" not in self._cache:
            self._cache["Z"] = math.fsum(self.weights)
        return self._cache["Z"]

    @property
    def probs(self) -> np.ndarray:
        if "probs" not in self._cache:
            p = self.weights / self.Z
            p.setflags(write=False)
            self._cache["probs"] = p
        return self._cache["probs"]

    @property
    def min_prob(self) -> float:
        return float(self.probs.min())

    def column(self, v: int) -> int:
        try:
            return self.free.index(v)
        except ValueError:
            raise VertexOutOfRange(f"vertex {v} is not free in this distribution") from None

    def columns(self, vs) -> tuple[int, ...]:
        return tuple(self.column(v) for v in vs)

    def marginals(self) -> np.ndarray:
        """``m[c, i]`` = probability that free column ``c`` has spin ``i``."""
        if "marg" not in self._cache:
            m = np.zeros((self.n, self.q))
            for c in range(self.n):
                m[c] = np.bincount(self.configs[:, c], weights=self.probs, minlength=self.q)
            self._cache["marg"] = m
        return self._cache["marg"]

    def fibers(self, cols: Sequence[int]) -> tuple[np.ndarray, int]:
        """Group ids of support rows by their spins outside ``cols``.

        Rows in the same group differ only on ``cols``; the groups are the
        fibres of resampling the block ``cols``.
        """
        key = frozenset(cols)
        hit = self._cache.get(("fib", key))
        if hit is None:
            rest = [c for c in range(self.n) if c not in key]
            hit = _group_rows(self.configs, rest, self.q)
            self._cache[("fib", key)] = hit
        return hit

    def support_strings(self) -> list[str]:
        return [config_string(row) for row in self.configs]


def config_string(row) -> str:
    alphabet = "0123456789abcdefghijklmnopqrstuvwxyz"
    return "".join(alphabet[int(s)] for s in row)


def _encode(configs: np.ndarray, cols: Sequence[int], q: int) -> np.ndarray:
    key = np.zeros(len(configs), dtype=np.int64)
    for c in cols:
        key = key * q + configs[:, c]
    return key


def _group_rows(configs: np.ndarray, cols: Sequence[int], q: int) -> tuple[np.ndarray, int]:
    key = _encode(configs, cols, q)
    _, inv = np.unique(key, return_inverse=True)
    inv = inv.ravel()
    return inv, int(inv.max()) + 1 if len(inv) else 0


def enumerate_gibbs(s: SpinSystem, g: Graph, cap: int = ENUM_CAP,
                    chunk: int = 1 << 18) -> ExactDistribution:
    """Enumerate all ``q^n`` configurations and keep those of positive weight.

    Rows are in lexicographic order with vertex 0 most significant.
    """
    n, q = g.n, s.q
    total = q ** n
    if total > cap:
        raise InstanceTooLarge(f"q^n = {total} raw states exceeds cap {cap}")
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    keep_c, keep_w = [], []
    eu = np.array([e[0] for e in g.edges], dtype=np.int64)
    ev = np.array([e[1] for e in g.edges], dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        cfg = (idx[:, None] // powers[None, :]) % q
        w = np.prod(s.h[cfg], axis=1) if n else np.ones(len(idx))
        if len(eu):
            w = w * np.prod(s.A[cfg[:, eu], cfg[:, ev]], axis=1)
        ok = w > 0
        keep_c.append(cfg[ok].astype(np.int8))
        keep_w.append(w[ok])
    configs = np.concatenate(keep_c) if keep_c else np.zeros((1, 0), dtype=np.int8)
    weights = np.concatenate(keep_w) if keep_w else np.ones(1)
    if len(weights) == 0:
        raise EmptySupport("no configuration has positive weight")
    return ExactDistribution(s, g, tuple(range(n)), configs, weights)


def condition(d: ExactDistribution, p: Pinning | Mapping[int, int]) -> ExactDistribution:
    """Conditional law given the pinning, on the remaining free vertices."""
    if not isinstance(p, Pinning):
        p = Pinning.from_dict(p)
    if not len(p):
        return d
    cols = d.columns(p.vertices)
    mask = np.ones(d.size, dtype=bool)
    for c, s in zip(cols, p.spins):
        mask &= d.configs[:, c] == s
    if not mask.any():
        raise InfeasiblePinning(f"pinning {p.as_dict()} has zero probability")
    keep = [c for c in range(d.n) if c not in cols]
    merged = {**d.pinning.as_dict(), **p.as_dict()}
    return ExactDistribution(d.system, d.graph, tuple(d.free[c] for c in keep),
                             np.ascontiguousarray(d.configs[mask][:, keep]),
                             np.array(d.weights[mask]), Pinning.from_dict(merged))


# functionals

def _probs(mu) -> np.ndarray:
    return mu.probs if isinstance(mu, ExactDistribution) else np.asarray(mu, dtype=float)


def _fvec(mu, f) -> tuple[np.ndarray, np.ndarray]:
    p = _probs(mu)
    f = np.asarray(f, dtype=float)
    if f.shape != p.shape:
        raise SupportMismatch(f"function has shape {f.shape}, support has {p.shape}")
    return p, f


def mean(mu, f) -> float:
    p, f = _fvec(mu, f)
    return float(p @ f)


def entropy(mu, f) -> float:
    """``mu(f log f) - mu(f) log mu(f)`` with natural log and ``0 log 0 = 0``."""
    p, f = _fvec(mu, f)
    if (f < 0).any():
        raise NegativeFunctionValue("entropy needs f >= 0")
    m = float(p @ f)
    return float(p @ xlogy(f, f)) - float(xlogy(m, m))


def variance(mu, f) -> float:
    p, f = _fvec(mu, f)
    m = float(p @ f)
    return float(p @ (f - m) ** 2)


def kl(nu, mu) -> float:
    """Relative entropy ``KL(nu || mu)``."""
    a, b = _probs(nu), _probs(mu)
    if a.shape != b.shape:
        raise SupportMismatch("distributions live on different supports")
    if ((a > 0) & (b <= 0)).any():
        raise SupportMismatch("nu is not absolutely continuous w.r.t. mu")
    return float(rel_entr(a, b).sum())


def block_conditional_mean(d: ExactDistribution, cols: Sequence[int], f) -> np.ndarray:
    """``mu_S(f)`` as a function on the support (S given by column indices)."""
    p, f = _fvec(d, f)
    gid, ng = d.fibers(cols)
    mass = np.bincount(gid, weights=p, minlength=ng)
    num = np.bincount(gid, weights=p * f, minlength=ng)
    return (num / mass)[gid]


def block_entropy(d: ExactDistribution, cols: Sequence[int], f) -> float:
    """``mu[Ent_S(f)]``: expected entropy of f under resampling of the block S."""
    p, f = _fvec(d, f)
    if (f < 0).any():
        raise NegativeFunctionValue("entropy needs f >= 0")
    gid, ng = d.fibers(cols)
    mass = np.bincount(gid, weights=p, minlength=ng)
    num = np.bincount(gid, weights=p * f, minlength=ng)
    cm = num / mass
    return float(p @ xlogy(f, f)) - float(mass @ xlogy(cm, cm))


def block_variance(d: ExactDistribution, cols: Sequence[int], f) -> float:
    """``mu[Var_S(f)]``."""
    p, f = _fvec(d, f)
    gid, ng = d.fibers(cols)
    mass = np.bincount(gid, weights=p, minlength=ng)
    num = np.bincount(gid, weights=p * f, minlength=ng)
    return float(p @ f**2) - float(num @ (num / mass))


def average_block_entropy(d: ExactDistribution, ell: int, f) -> float:
    """``(1/C(n, ell)) sum_{|S| = ell} mu[Ent_S(f)]``."""
    vals = [block_entropy(d, S, f) for S in combinations(range(d.n), ell)]
    return math.fsum(vals) / len(vals)


def average_block_variance(d: ExactDistribution, ell: int, f) -> float:
    vals = [block_variance(d, S, f) for S in combinations(range(d.n), ell)]
    return math.fsum(vals) / len(vals)


# pair statistics and influence

def pair_statistics(configs: np.ndarray, probs: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Single-site marginals ``m`` (flattened ``c*q + i``) and pair joint matrix ``J``."""
    N, F = configs.shape
    X = np.zeros((N, F * q))
    X[np.arange(N)[:, None], np.arange(F)[None, :] * q + configs] = 1.0
    m = probs @ X
    J = X.T @ (probs[:, None] * X)
    return m, J


@dataclass(frozen=True)
class InfluenceMatrix:
    index: tuple[tuple[int, int], ...]      # (vertex, spin) per row
    matrix: np.ndarray
    eigenvalues: np.ndarray                 # nonsymmetric solver output
    lambda1: float
    max_imag: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row"] + [f"{v}:{i}" for v, i in self.index])
        for (v, i), row in zip(self.index, self.matrix):
            w.writerow([f"{v}:{i}"] + [repr(float(x)) for x in row])
        return buf.getvalue()


def _influence_from_stats(m: np.ndarray, J: np.ndarray, F: int, q: int,
                          free: Sequence[int]) -> InfluenceMatrix:
    feas = np.flatnonzero(m > 0)
    vert = feas // q
    mf = m[feas]
    Jf = J[np.ix_(feas, feas)]
    psi = Jf / mf[:, None] - mf[None, :]
    psi[vert[:, None] == vert[None, :]] = 0.0
    if len(feas):
        ev = np.linalg.eigvals(psi)
        max_imag = float(np.abs(ev.imag).max())
        lam1 = float(ev.real.max())
    else:
        ev, max_imag, lam1 = np.zeros(0), 0.0, 0.0
    index = tuple((free[a // q], int(a % q)) for a in feas)
    return InfluenceMatrix(index, psi, ev, lam1, max_imag)


def influence_matrix(d: ExactDistribution, p: Pinning | Mapping = EMPTY) -> InfluenceMatrix:
    """Influence matrix over (vertex, feasible spin) pairs of the conditional law.

    Entry ``((u,i),(v,j))`` is ``mu(v=j | u=i) - mu(v=j)`` for ``u != v`` and 0 otherwise.
    """
    c = condition(d, p)
    if c.n < 2:
        raise TooFewFreeVertices("influence needs at least two free vertices")
    m, J = pair_statistics(c.configs, c.probs, c.q)
    return _influence_from_stats(m, J, c.n, c.q, c.free)


def symmetric_influence_spectrum(d: ExactDistribution, p: Pinning | Mapping = EMPTY) -> np.ndarray:
    """Spectrum of the influence matrix through its symmetric similar form
    ``D^{-1/2} C D^{-1/2}`` (C the off-block covariance, D the marginals)."""
    c = condition(d, p)
    m, J = pair_statistics(c.configs, c.probs, c.q)
    feas = np.flatnonzero(m > 0)
    vert = feas // c.q
    mf = m[feas]
    C = J[np.ix_(feas, feas)] - np.outer(mf, mf)
    C[vert[:, None] == vert[None, :]] = 0.0
    s = 1.0 / np.sqrt(mf)
    return np.linalg.eigvalsh(s[:, None] * C * s[None, :])


def signed_influence_matrix(d: ExactDistribution, p: Pinning | Mapping = EMPTY) -> np.ndarray:
    """Two-spin influence ``I[u, v] = mu(v=1 | u=1) - mu(v=1 | u=0)`` over free vertices
    (rows of frozen vertices are zero)."""
    c = condition(d, p)
    if c.q != 2:
        raise ValueError("signed influence is defined for two-spin systems")
    m, J = pair_statistics(c.configs, c.probs, 2)
    F = c.n
    out = np.zeros((F, F))
    for u in range(F):
        a0, a1 = 2 * u, 2 * u + 1
        if m[a0] <= 0 or m[a1] <= 0:
            continue
        for v in range(F):
            if v != u:
                out[u, v] = J[a1, 2 * v + 1] / m[a1] - J[a0, 2 * v + 1] / m[a0]
    return out


def influence_matrix_tv(d: ExactDistribution, p: Pinning | Mapping = EMPTY) -> np.ndarray:
    """Vertex-by-vertex TV influence: worst TV between ``v``'s conditional laws
    under two feasible spins of ``u``."""
    c = condition(d, p)
    F, q = c.n, c.q
    m, J = pair_statistics(c.configs, c.probs, q)
    R = np.zeros((F, F))
    for u in range(F):
        rows = [u * q + i for i in range(q) if m[u * q + i] > 0]
        if len(rows) < 2:
            continue
        for v in range(F):
            if v == u:
                continue
            cond = J[np.ix_(rows, range(v * q, v * q + q))] / m[rows][:, None]
            tv = 0.5 * np.abs(cond[:, None, :] - cond[None, :, :]).sum(axis=2)
            R[u, v] = tv.max()
    return R


# sweeps over pinnings

@dataclass(frozen=True)
class PinnedView:
    pinned: tuple[int, ...]        # column indices of the pinned set
    spins: tuple[int, ...]
    free: tuple[int, ...]          # column indices left free
    configs: np.ndarray            # rows restricted to the free columns
    probs: np.ndarray              # conditional probabilities


def pinning_count_bound(d: ExactDistribution) -> int:
    """Upper bound on the number of (pinned set, feasible boundary) pairs."""
    return sum(math.comb(d.n, k) * min(d.size, d.q ** k) for k in range(d.n))


def iter_pinned(d: ExactDistribution, min_free: int = 1, include_full: bool = False,
                cap: int = PINNING_CAP) -> Iterator[PinnedView]:
    """Every pinned set ``L`` (a proper subset of the free columns, increasing size)
    with every feasible boundary on it, as a conditional view."""
    if pinning_count_bound(d) > cap:
        raise InstanceTooLarge(f"pinning sweep would visit up to {pinning_count_bound(d)} "
                               f"boundaries, cap {cap}")
    n = d.n
    top = n + 1 if include_full else n
    for k in range(0, min(top, n - min_free + 1)):
        for lam in combinations(range(n), k):
            rest = tuple(c for c in range(n) if c not in lam)
            gid, ng = _group_rows(d.configs, lam, d.q)
            order = np.argsort(gid, kind="stable")
            bounds = np.searchsorted(gid[order], np.arange(ng + 1))
            for gi in range(ng):
                rows = order[bounds[gi]:bounds[gi + 1]]
                p = d.weights[rows]
                tau = tuple(int(s) for s in d.configs[rows[0], list(lam)])
                yield PinnedView(lam, tau, rest, d.configs[np.ix_(rows, rest)], p / p.sum())


@dataclass(frozen=True)
class SweepResult:
    eta: float
    argmax: Pinning
    max_imag: float
    count: int


def influence_sweep(d: ExactDistribution, cap: int = PINNING_CAP) -> SweepResult:
    """Largest influence eigenvalue over all pinnings leaving at least two free vertices."""
    eta, arg, worst_imag, count = 0.0, EMPTY, 0.0, 0
    for view in iter_pinned(d, min_free=2, cap=cap):
        m, J = pair_statistics(view.configs, view.probs, d.q)
        infl = _influence_from_stats(m, J, len(view.free), d.q, view.free)
        count += 1
        worst_imag = max(worst_imag, infl.max_imag)
        if infl.lambda1 > eta:
            eta = infl.lambda1
            arg = Pinning(tuple(d.free[c] for c in view.pinned), view.spins)
    return SweepResult(eta, arg, worst_imag, count)


def spectral_independence(d: ExactDistribution, cap: int = PINNING_CAP) -> float:
    """``eta`` = max over pinnings of the largest influence eigenvalue (0 if n < 2)."""
    return influence_sweep(d, cap).eta


def marginal_bound(d: ExactDistribution, cap: int = PINNING_CAP) -> float:
    """Smallest positive conditional single-site marginal over all pinnings."""
    b = 1.0
    for view in iter_pinned(d, min_free=1, cap=cap):
        for j in range(len(view.free)):
            mj = np.bincount(view.configs[:, j], weights=view.probs, minlength=d.q)
            pos = mj[mj > 0]
            b = min(b, float(pos.min()))
    return b


def hamming_connected(configs: np.ndarray) -> bool:
    """Whether distinct configurations form a connected graph under single-site changes."""
    N = len(configs)
    if N <= 1:
        return True
    diff = (configs[:, None, :] != configs[None, :, :]).sum(axis=2)
    adj = csr_matrix(diff == 1)
    k, _ = connected_components(adj, directed=False)
    return k == 1


def totally_connected_check(d: ExactDistribution, cap: int = PINNING_CAP) -> bool:
    """True iff every conditional support (every nonempty free set, every boundary)
    is Hamming-connected."""
    return all(hamming_connected(view.configs) for view in iter_pinned(d, min_free=1, cap=cap))


# export

def distribution_to_json(d: ExactDistribution) -> dict:
    return {
        "free": list(d.free),
        "pinning": {str(v): s for v, s in d.pinning.as_dict().items()},
        "Z": d.Z,
        "support": d.support_strings(),
        "probabilities": [float(x) for x in d.probs],
    }
