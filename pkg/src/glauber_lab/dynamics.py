"""Glauber and uniform-block heat-bath dynamics.

Two faces: explicit transition matrices over the enumerated support (for
exact mixing times, gaps and functional-inequality constants), and samplers
that only look at a vertex's neighbours (for simulation).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import xlogy

from ._numerics import multistart_minimize, random_starts, reversible_eigenvalues, spectral_gap
from .errors import (
    DegenerateKL,
    InfeasibleState,
    InstanceTooLarge,
    NotErgodic,
    ParameterOutOfRange,
    SizeOutOfRange,
)
from .exact_dist import ExactDistribution, config_string
from .graph_core import Graph
from .spin_models import SpinSystem

MATRIX_CAP = 4096


@dataclass(frozen=True, eq=False)
class ChainMatrix:
    states: np.ndarray
    P: np.ndarray
    pi: np.ndarray
    label: str = "chain"

    @property
    def size(self) -> int:
        return len(self.pi)

    def reversibility_error(self) -> float:
        F = self.pi[:, None] * self.P
        return float(np.abs(F - F.T).max())


def block_matrix(d: ExactDistribution, ell: int, cap: int = MATRIX_CAP) -> ChainMatrix:
    """Heat-bath dynamics resampling a uniformly random block of ``ell`` free vertices."""
    n = d.n
    if not 1 <= ell <= n:
        raise SizeOutOfRange(f"block size {ell} outside [1, {n}]")
    if d.size > cap:
        raise InstanceTooLarge(f"{d.size} states exceeds matrix cap {cap}")
    p = d.probs
    P = np.zeros((d.size, d.size))
    blocks = list(combinations(range(n), ell))
    for S in blocks:
        gid, ng = d.fibers(S)
        mass = np.bincount(gid, weights=p, minlength=ng)
        same = gid[:, None] == gid[None, :]
        P += same * (p[None, :] / mass[gid][:, None])
    P /= len(blocks)
    label = "glauber" if ell == 1 else f"block-{ell}"
    return ChainMatrix(d.configs, P, np.array(p), label)


def glauber_matrix(d: ExactDistribution, cap: int = MATRIX_CAP) -> ChainMatrix:
    """Single-site heat-bath (Glauber) dynamics."""
    return block_matrix(d, 1, cap)


# sampling

def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) so runs are reproducible from the seed."""
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent streams derived from one master seed."""
    return [np.random.Generator(np.random.Philox(s))
            for s in np.random.SeedSequence(seed).spawn(count)]


def local_conditional(s: SpinSystem, g: Graph, state, v: int) -> np.ndarray:
    """Law of ``sigma_v`` given the other spins, from ``v``'s neighbours only."""
    w = np.array(s.h, dtype=float)
    for u in g.adjacency[v]:
        w = w * s.A[:, state[u]]
    tot = w.sum()
    if tot <= 0:
        raise InfeasibleState(f"no spin is allowed at vertex {v}")
    return w / tot


def glauber_step(s: SpinSystem, g: Graph, state, rng: np.random.Generator) -> np.ndarray:
    """One heat-bath update at a uniformly random vertex (returns a new array)."""
    out = np.array(state, dtype=np.int64)
    v = int(rng.integers(g.n))
    p = local_conditional(s, g, out, v)
    out[v] = int(np.searchsorted(np.cumsum(p), rng.random() * 1.0, side="right"))
    out[v] = min(out[v], s.q - 1)
    return out


def is_feasible(s: SpinSystem, g: Graph, state) -> bool:
    return all(s.A[state[u], state[v]] > 0 for u, v in g.edges)


def run_chain(s: SpinSystem, g: Graph, x0, T: int, rng: np.random.Generator) -> np.ndarray:
    """Trajectory ``(T+1, n)`` of Glauber dynamics from ``x0``."""
    x = np.array(x0, dtype=np.int64)
    if not is_feasible(s, g, x):
        raise InfeasibleState("starting configuration has zero weight")
    traj = np.empty((T + 1, g.n), dtype=np.int64)
    traj[0] = x
    for t in range(1, T + 1):
        x = glauber_step(s, g, x, rng)
        traj[t] = x
    return traj


def run_parallel_chains(s: SpinSystem, g: Graph, X0, T: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Advance many independent Glauber chains ``T`` steps at once; returns final states."""
    X = np.array(X0, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != g.n:
        raise InfeasibleState("expected an array of shape (chains, n)")
    B, n, q = X.shape[0], g.n, s.q
    width = max(g.max_degree, 1)
    nbr = np.full((n, width), -1, dtype=np.int64)
    for v in range(n):
        nbr[v, :len(g.adjacency[v])] = g.adjacency[v]
    rows = np.arange(B)
    Apad = np.vstack([s.A.T, np.ones((1, q))])   # row q = padding
    for _ in range(T):
        v = rng.integers(n, size=B)
        nb = nbr[v]
        spins = np.where(nb >= 0, X[rows[:, None], np.maximum(nb, 0)], q)
        w = s.h[None, :] * np.prod(Apad[spins], axis=1)
        tot = w.sum(axis=1)
        if (tot <= 0).any():
            raise InfeasibleState("a chain reached a configuration with no allowed spin")
        c = np.cumsum(w, axis=1) / tot[:, None]
        u = rng.random(B)
        X[rows, v] = np.minimum((u[:, None] >= c).sum(axis=1), q - 1)
    return X


def trajectory_csv(traj) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "state"])
    for t, row in enumerate(traj):
        w.writerow([t, config_string(row)])
    return buf.getvalue()


# exact mixing

@dataclass
class MixingReport:
    epsilon: float
    t_mix: int
    d_t: list[float]
    gap: float
    mlsi_upper_estimate: float | None = None
    entropy_decay_upper_estimate: float | None = None
    bounds: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "t_mix": self.t_mix,
            "d_t": self.d_t,
            "gap": self.gap,
            "mlsi (upper estimate of inf)": self.mlsi_upper_estimate,
            "entropy decay (upper estimate of inf)": self.entropy_decay_upper_estimate,
            "bounds": self.bounds,
        }


def check_ergodic(c: ChainMatrix) -> None:
    k, _ = connected_components(csr_matrix(c.P > 0), directed=True, connection="strong")
    if k != 1:
        raise NotErgodic(f"transition graph has {k} strongly connected components")
    if not (np.diag(c.P) > 0).any():
        # heat-bath chains are lazy; anything else must be aperiodic by other means
        ev = np.linalg.eigvals(c.P)
        if np.sum(np.abs(np.abs(ev) - 1) < 1e-10) > 1:
            raise NotErgodic("chain is periodic")


def worst_tv(Pt: np.ndarray, pi: np.ndarray) -> float:
    return float(0.5 * np.abs(Pt - pi[None, :]).sum(axis=1).max())


def exact_mixing_time(c: ChainMatrix, eps: float = 0.25, max_t: int = 1_000_000,
                      cap: int = MATRIX_CAP) -> MixingReport:
    """Smallest ``t`` with worst-case TV distance to stationarity at most ``eps``."""
    if c.size > cap:
        raise InstanceTooLarge(f"{c.size} states exceeds matrix cap {cap}")
    if not 0 < eps < 1:
        raise ParameterOutOfRange("epsilon must lie in (0, 1)")
    check_ergodic(c)
    Pt = np.eye(c.size)
    d_t = [worst_tv(Pt, c.pi)]
    t = 0
    while d_t[-1] > eps:
        if t >= max_t:
            raise NotErgodic(f"distance still {d_t[-1]} after {max_t} steps")
        Pt = Pt @ c.P
        t += 1
        d_t.append(worst_tv(Pt, c.pi))
    return MixingReport(eps, t, d_t, spectral_gap(c.P, c.pi))


def mixing_bound(kappa: float, pi_min: float, eps: float) -> int:
    """``ceil((1/kappa) (log log (1/pi_min) + log (1/(2 eps^2))))``."""
    if not 0 < kappa <= 1 or not 0 < pi_min < 1 or not 0 < eps < 1:
        raise ParameterOutOfRange("need kappa in (0,1], pi_min in (0,1), eps in (0,1)")
    val = (math.log(math.log(1.0 / pi_min)) + math.log(1.0 / (2.0 * eps * eps))) / kappa
    return max(math.ceil(val - 1e-12), 0)


def mixing_bound_from_certificate(cert, pi_min: float, eps: float, r: int | None = None) -> int:
    """Mixing bound for the down-up walk ``(cert.s, r)``; ``r`` defaults to ``s - 1`` (Glauber)."""
    r = cert.s - 1 if r is None else r
    return mixing_bound(cert.kappa(r), pi_min, eps)


def tensorization_mixing_bound(C1: float, n: int, mu_min: float, eps: float) -> int:
    """``ceil(C1 n (log log (1/mu_min) + log (1/(2 eps^2))))``."""
    return mixing_bound(1.0 / (C1 * n), mu_min, eps)


# Dirichlet forms and functional inequalities

def dirichlet_form(c: ChainMatrix, f, g) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    K = c.pi[:, None] * c.P
    df = f[:, None] - f[None, :]
    dg = g[:, None] - g[None, :]
    return 0.5 * float((K * df * dg).sum())


def _laplacian(c: ChainMatrix) -> np.ndarray:
    K = c.pi[:, None] * c.P
    K = 0.5 * (K + K.T)
    return np.diag(K.sum(axis=1)) - K


@dataclass(frozen=True)
class InfimumEstimate:
    """Numerical minimum of a ratio; an upper estimate of the true infimum."""
    value: float
    local_limit: float        # value approached by perturbations of a constant
    searched: float
    witness: np.ndarray


def _ent_and_grad(pi, f):
    m = float(pi @ f)
    val = float(pi @ xlogy(f, f)) - float(xlogy(m, m))
    return val, pi * (np.log(np.maximum(f, 1e-300)) - math.log(m))


def log_sobolev_estimate(c: ChainMatrix, restarts: int = 20, seed: int = 0) -> InfimumEstimate:
    """Standard log-Sobolev constant ``inf E(sqrt f, sqrt f) / Ent(f)``."""
    L = _laplacian(c)
    pi = c.pi
    gap = spectral_gap(c.P, pi)

    def fun(u):
        f = u * u
        ent, dent = _ent_and_grad(pi, f)
        if ent < 1e-13:
            return 1e6, np.zeros_like(u)
        e = float(u @ L @ u)
        de = 2 * L @ u
        dent_u = dent * 2 * u
        return e / ent, (de * ent - e * dent_u) / ent ** 2

    rng = np.random.default_rng(seed)
    starts = [1.0 + x for x in random_starts(rng, c.size, restarts, scales=(0.2, 0.6, 1.5))]
    val, x, _ = multistart_minimize(fun, starts)
    return InfimumEstimate(min(val, gap / 2), gap / 2, val, x * x)


def mlsi_estimate(c: ChainMatrix, restarts: int = 20, seed: int = 0) -> InfimumEstimate:
    """Modified log-Sobolev constant ``inf E(f, log f) / Ent(f)`` (f = exp(g))."""
    L = _laplacian(c)
    pi = c.pi
    gap = spectral_gap(c.P, pi)

    def fun(g):
        g = np.clip(g, -30, 30)
        f = np.exp(g - g.max())
        gg = g - g.max()
        ent, dent = _ent_and_grad(pi, f)
        if ent < 1e-13:
            return 1e6, np.zeros_like(g)
        e = float(f @ L @ gg)
        de = f * (L @ gg) + L @ f
        return e / ent, (de * ent - e * dent * f) / ent ** 2

    rng = np.random.default_rng(seed)
    val, x, _ = multistart_minimize(fun, random_starts(rng, c.size, restarts))
    return InfimumEstimate(min(val, 2 * gap), 2 * gap, val, np.exp(x - x.max()))


def entropy_decay_rate(c: ChainMatrix, restarts: int = 20, seed: int = 0) -> InfimumEstimate:
    """``inf_nu 1 - KL(nu P || mu) / KL(nu || mu)`` with ``nu = mu * f``."""
    pi, P = c.pi, c.P
    if c.size < 2:
        raise DegenerateKL("a one-state chain has no non-stationary start")
    ev = reversible_eigenvalues(P, pi)
    limit = 1.0 - float(np.max(np.abs(ev[1:]))) ** 2

    def fun(g):
        g = np.clip(g, -30, 30)
        f = np.exp(g - g.max())
        den, dden = _ent_and_grad(pi, f)
        if den < 1e-13:
            return 1e6, np.zeros_like(g)
        num, dnum_pf = _ent_and_grad(pi, P @ f)
        # P is self-adjoint in L2(pi): d/df Ent(Pf) = P^T (dnum_pf)
        dnum = P.T @ dnum_pf
        val = 1.0 - num / den
        return val, -(dnum * den - num * dden) / den ** 2 * f

    rng = np.random.default_rng(seed)
    val, x, _ = multistart_minimize(fun, random_starts(rng, c.size, restarts))
    return InfimumEstimate(min(val, limit), limit, val, np.exp(x - x.max()))
