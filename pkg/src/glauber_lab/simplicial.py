"""Weighted simplicial complex of a distribution.

A face at level ``k`` is a pair ``(U, tau)``: a ``k``-set of free columns and
a feasible boundary on it, with mass ``pi_k(U, tau) = mu(sigma_U = tau) / C(n, k)``.
This module builds the levels, the up and down operators between them, the
down-up and up-down walks, the local walks of links, and the contraction
certificates derived from per-level marginal bounds and local expansion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import xlogy

from ._numerics import multistart_minimize, random_starts, reversible_eigenvalues, spectral_gap
from .errors import (
    DegenerateEntropy,
    InfeasibleFace,
    InstanceTooLarge,
    LevelTooHigh,
    ParameterOutOfRange,
)
from .exact_dist import ExactDistribution, _group_rows, entropy, pair_statistics

FACE_CAP = 200_000


@dataclass(frozen=True)
class Level:
    k: int
    faces: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    probs: np.ndarray
    index: dict = field(compare=False, repr=False)

    def __len__(self):
        return len(self.faces)


@dataclass(eq=False)
class Complex:
    dist: ExactDistribution
    levels: list[Level]
    _ops: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.dist.n

    def up(self, k: int) -> np.ndarray:
        """``P_k^up``: rows indexed by level ``k``, columns by level ``k+1``."""
        key = ("up", k)
        if key not in self._ops:
            lo, hi = self.levels[k], self.levels[k + 1]
            P = np.zeros((len(lo), len(hi)))
            for j, (U, tau) in enumerate(hi.faces):
                for drop in range(k + 1):
                    sub = (U[:drop] + U[drop + 1:], tau[:drop] + tau[drop + 1:])
                    i = lo.index[sub]
                    P[i, j] = hi.probs[j] / ((k + 1) * lo.probs[i])
            self._ops[key] = P
        return self._ops[key]

    def down(self, k: int) -> np.ndarray:
        """``P_k^down``: rows indexed by level ``k``, columns by level ``k-1``."""
        key = ("down", k)
        if key not in self._ops:
            self._ops[key] = (self.up(k - 1) > 0).T / k
        return self._ops[key]

    def up_chain(self, r: int, s: int) -> np.ndarray:
        """``P_r^up ... P_{s-1}^up`` (identity when ``r == s``)."""
        key = ("upchain", r, s)
        if key not in self._ops:
            M = np.eye(len(self.levels[r]))
            for k in range(r, s):
                M = M @ self.up(k)
            self._ops[key] = M
        return self._ops[key]

    def down_chain(self, s: int, r: int) -> np.ndarray:
        """``P_s^down ... P_{r+1}^down``."""
        M = np.eye(len(self.levels[s]))
        for k in range(s, r, -1):
            M = M @ self.down(k)
        return M

    def down_up(self, s: int, r: int) -> np.ndarray:
        """Order-``(s, r)`` down-up walk on level ``s``."""
        return self.down_chain(s, r) @ self.up_chain(r, s)

    def up_down(self, r: int, s: int) -> np.ndarray:
        """Order-``(r, s)`` up-down walk on level ``r``."""
        return self.up_chain(r, s) @ self.down_chain(s, r)

    def project(self, f, s: int, r: int) -> np.ndarray:
        """``f^{(r)}`` from a function ``f`` on level ``s``."""
        return self.up_chain(r, s) @ np.asarray(f, dtype=float)


def build_levels(d: ExactDistribution, cap: int = FACE_CAP) -> Complex:
    """All levels ``0..n`` of the complex; level ``n`` follows the support order."""
    n = d.n
    total = sum(math.comb(n, k) * min(d.size, d.q ** k) for k in range(n + 1))
    if total > cap:
        raise InstanceTooLarge(f"complex may have {total} faces, cap {cap}")
    levels = []
    for k in range(n + 1):
        faces, probs = [], []
        if k == n:
            U = tuple(range(n))
            faces = [(U, tuple(int(x) for x in row)) for row in d.configs]
            probs = list(d.probs)
        else:
            scale = math.comb(n, k)
            for U in combinations(range(n), k):
                gid, ng = _group_rows(d.configs, U, d.q)
                mass = np.bincount(gid, weights=d.probs, minlength=ng)
                first = np.zeros(ng, dtype=np.int64)
                first[gid[::-1]] = np.arange(len(gid))[::-1]
                for g in range(ng):
                    tau = tuple(int(x) for x in d.configs[first[g], list(U)])
                    faces.append((U, tau))
                    probs.append(mass[g] / scale)
        p = np.array(probs, dtype=float)
        levels.append(Level(k, tuple(faces), p, {f: i for i, f in enumerate(faces)}))
    return Complex(d, levels)


def _link_rows(cx: Complex, k: int, face_id: int) -> np.ndarray:
    U, tau = cx.levels[k].faces[face_id]
    cfg = cx.dist.configs
    mask = np.ones(len(cfg), dtype=bool)
    for c, s in zip(U, tau):
        mask &= cfg[:, c] == s
    return np.flatnonzero(mask)


@dataclass(frozen=True)
class LocalWalk:
    face: tuple
    index: tuple[tuple[int, int], ...]     # (column, spin) of each state
    P: np.ndarray
    pi: np.ndarray

    @property
    def lambda2(self) -> float:
        ev = reversible_eigenvalues(self.P, self.pi)
        return float(ev[1]) if len(ev) > 1 else -1.0


def _local_walk_from_rows(cx: Complex, k: int, face, rows) -> LocalWalk:
    n, q = cx.n, cx.dist.q
    U = face[0]
    rest = [c for c in range(n) if c not in U]
    sub = cx.dist.configs[np.ix_(rows, rest)]
    p = cx.dist.probs[rows]
    p = p / p.sum()
    m, J = pair_statistics(sub, p, q)
    feas = np.flatnonzero(m > 0)
    vert = feas // q
    mf = m[feas]
    P = J[np.ix_(feas, feas)] / mf[:, None] / (n - k - 1)
    P[vert[:, None] == vert[None, :]] = 0.0
    index = tuple((rest[a // q], int(a % q)) for a in feas)
    return LocalWalk(face, index, P, mf / (n - k))


def local_walk(cx: Complex, face: tuple) -> LocalWalk:
    """Local walk on the level-1 faces of the link of ``face = (U, tau)``."""
    U, tau = tuple(face[0]), tuple(face[1])
    k = len(U)
    if k > cx.n - 2:
        raise LevelTooHigh(f"local walk needs |U| <= n - 2, got {k}")
    idx = cx.levels[k].index.get((U, tau))
    if idx is None:
        raise InfeasibleFace(f"face {face} is not in the complex")
    return _local_walk_from_rows(cx, k, (U, tau), _link_rows(cx, k, idx))


@dataclass(frozen=True)
class LocalProfile:
    zeta: np.ndarray          # zeta_k for k = 0..n-2
    b: np.ndarray             # smallest link marginal pi_{tau,1}(i) at each level k = 0..n-1
    argmax: tuple


def local_expansion(cx: Complex) -> LocalProfile:
    """Worst second eigenvalue of the local walks and smallest link marginal per level."""
    n = cx.n
    zeta = np.full(max(n - 1, 0), -np.inf)
    b = np.ones(n)
    arg = [None] * max(n - 1, 0)
    for k in range(n):
        level = cx.levels[k]
        up = cx.up(k)
        for i, face in enumerate(level.faces):
            row = up[i]
            b[k] = min(b[k], float(row[row > 0].min()))
            if k <= n - 2:
                lw = _local_walk_from_rows(cx, k, face, _link_rows(cx, k, i))
                l2 = lw.lambda2
                if l2 > zeta[k]:
                    zeta[k], arg[k] = l2, face
    return LocalProfile(zeta, b, tuple(arg))


# certificates

@dataclass(frozen=True)
class ComplexCertificate:
    n: int
    s: int
    b_k: tuple[float, ...]
    zeta_k: tuple[float, ...]
    alpha_k: tuple[float, ...]
    Gamma_k: tuple[float, ...]
    source: str

    def kappa(self, r: int) -> float:
        """Contraction rate for the pair ``(r, s)``."""
        if not 0 <= r < self.s:
            raise ParameterOutOfRange(f"need 0 <= r < s = {self.s}")
        G = self.Gamma_k
        return math.fsum(G[r:self.s]) / math.fsum(G[:self.s])

    def kappa_table(self) -> dict[str, float]:
        return {f"{r},{self.s}": self.kappa(r) for r in range(self.s)}

    def C_block(self, ell: int) -> float:
        """Block-factorization constant ``(ell/n) / kappa(n - ell, n)`` (needs ``s == n``)."""
        if self.s != self.n:
            raise ParameterOutOfRange("block constants need the top level s = n")
        kap = self.kappa(self.n - ell)
        return math.inf if kap == 0 else (ell / self.n) / kap

    def to_json(self, ell: int | None = None) -> dict:
        out = {
            "source": self.source,
            "n": self.n,
            "s": self.s,
            "b_k": list(self.b_k),
            "zeta_k": list(self.zeta_k),
            "alpha_k": list(self.alpha_k),
            "Gamma_k": list(self.Gamma_k),
            "kappa": self.kappa_table(),
        }
        if self.s == self.n:
            out["C_block"] = {str(l): _finite(self.C_block(l)) for l in range(1, self.n + 1)}
            out["C1_at"] = _finite(self.C_block(1))
        return out


def _finite(x: float):
    return x if math.isfinite(x) else None


def entropy_alpha(b_k, zeta_k, s: int) -> list[float]:
    """Local entropy contraction rates for ``k = 0..s-2``.

    Negative local expansion is replaced by 0, which is still a valid upper bound.
    """
    out = []
    for k in range(s - 1):
        z = max(float(zeta_k[k]), 0.0)
        bk, bk1 = float(b_k[k]), float(b_k[k + 1])
        first = 1.0 - 4.0 * z / (bk ** 2 * (s - k) ** 2)
        second = (1.0 - z) / (4.0 + 2.0 * math.log(1.0 / (2.0 * bk * bk1)))
        out.append(max(first, second, 0.0))
    return out


def _gammas(alpha) -> list[float]:
    G = [1.0]
    for a in alpha:
        G.append(G[-1] * a)
    return G


def certificate_from_levels(b_k, zeta_k, n: int, s: int, source: str) -> ComplexCertificate:
    if not 1 <= s <= n:
        raise ParameterOutOfRange(f"need 1 <= s <= n, got s={s}, n={n}")
    alpha = entropy_alpha(b_k, zeta_k, s)
    return ComplexCertificate(n, s, tuple(float(x) for x in b_k[:s]),
                              tuple(float(x) for x in zeta_k[:max(s - 1, 0)]),
                              tuple(alpha), tuple(_gammas(alpha)), source)


def certificate(b: float, eta: float, n: int, s: int | None = None) -> ComplexCertificate:
    """Certificate from a global marginal bound ``b`` and spectral independence ``eta``,
    using ``b_k = b/(n-k)`` and ``zeta_k = eta/(n-k-1)``."""
    s = n if s is None else s
    if not 0 < b <= 1 or eta < 0:
        raise ParameterOutOfRange("need 0 < b <= 1 and eta >= 0")
    b_k = [b / (n - k) for k in range(n)]
    zeta_k = [eta / (n - k - 1) for k in range(n - 1)]
    return certificate_from_levels(b_k, zeta_k, n, s, "marginal-bound-and-eta")


def measured_certificate(cx: Complex, s: int | None = None,
                         profile: LocalProfile | None = None) -> ComplexCertificate:
    """Certificate from the exact per-level link marginals and local expansion."""
    s = cx.n if s is None else s
    prof = profile or local_expansion(cx)
    return certificate_from_levels(prof.b, prof.zeta, cx.n, s, "measured-local-expansion")


@dataclass(frozen=True)
class ClosedFormBound:
    R: int
    Gamma_hat: tuple[float, ...]
    kappa_hat: float           # from the Gamma_hat sums
    kappa_product: float       # ell (ell-1) ... (ell-R) / (n (n-1) ... (n-R))
    C_from_kappa: float        # (ell/n) / kappa_product
    C_closed: float            # (2/theta)^(4 eta/b^2 + 1)
    n_threshold_met: bool


def closed_form_block_bound(b: float, eta: float, n: int, ell: int) -> ClosedFormBound:
    """Closed-form block-factorization bound with ``R = ceil(4 eta / b^2)`` and
    ``alpha_hat_k = max(1 - R/(n-k-1), 0)``."""
    if not 1 <= ell <= n or not 0 < b <= 1 or eta < 0:
        raise ParameterOutOfRange("need 1 <= ell <= n, 0 < b <= 1, eta >= 0")
    x = 4.0 * eta / b ** 2
    R = math.ceil(x - 1e-12)
    alpha = [max(1.0 - R / (n - k - 1), 0.0) for k in range(n - 1)]
    G = _gammas(alpha)
    kap = math.fsum(G[n - ell:n]) / math.fsum(G[:n])
    prod = 1.0
    for j in range(R + 1):
        prod *= max(ell - j, 0) / (n - j) if n - j > 0 else 0.0
    theta = ell / n
    C_from = math.inf if prod == 0 else theta / prod
    return ClosedFormBound(R, tuple(G), kap, prod, C_from, (2.0 / theta) ** (x + 1),
                           n >= (2.0 / theta) * (x + 1))


# measured contraction

def _ent_grad(pi, f):
    m = float(pi @ f)
    val = float(pi @ xlogy(f, f)) - float(xlogy(m, m))
    grad = pi * (np.log(np.maximum(f, 1e-300)) - math.log(m))
    return val, grad


@dataclass(frozen=True)
class ContractionResult:
    r: int
    s: int
    ratio: float              # smallest observed 1 - Ent_r / Ent_s
    random_ratios: tuple[float, ...]
    witness: np.ndarray


def contraction_ratio(cx: Complex, r: int, s: int, f) -> float:
    f = np.asarray(f, dtype=float)
    den = entropy(cx.levels[s].probs, f)
    if den <= 0:
        raise DegenerateEntropy("f is constant on the support of pi_s")
    return 1.0 - entropy(cx.levels[r].probs, cx.project(f, s, r)) / den


def measured_entropy_contraction(cx: Complex, r: int, s: int, trials: int = 50,
                                 restarts: int = 20, seed: int = 0) -> ContractionResult:
    """Smallest ratio ``1 - Ent(f^(r))/Ent(f^(s))`` over random and adversarial ``f``.

    Random trials use ``f = exp(g)`` with Gaussian ``g``; the adversarial search
    minimises the ratio over ``g`` with L-BFGS from ``restarts`` starts.
    """
    if not 0 <= r < s <= cx.n:
        raise ParameterOutOfRange("need 0 <= r < s <= n")
    rng = np.random.default_rng(seed)
    pis, pir = cx.levels[s].probs, cx.levels[r].probs
    U = cx.up_chain(r, s)
    dim = len(pis)

    def fun(g):
        f = np.exp(np.clip(g, -30, 30))
        f = f / f.max()
        den, dden = _ent_grad(pis, f)
        if den < 1e-13:
            return 1.0, np.zeros_like(g)
        num, dnum_r = _ent_grad(pir, U @ f)
        dnum = U.T @ dnum_r
        val = 1.0 - num / den
        grad = -(dnum * den - num * dden) / den ** 2 * f
        return val, grad

    randoms = []
    best, witness = np.inf, None
    for g in random_starts(rng, dim, trials, scales=(0.5, 1.5, 4.0)):
        v, _ = fun(g)
        randoms.append(v)
        if v < best:
            best, witness = v, np.exp(g)
    if restarts:
        val, x, _ = multistart_minimize(fun, random_starts(rng, dim, restarts), maxiter=300)
        if val < best:
            best, witness = val, np.exp(np.clip(x, -30, 30))
    return ContractionResult(r, s, float(best), tuple(randoms), witness)


# variance analogue

@dataclass(frozen=True)
class VarianceCertificate:
    r: int
    s: int
    gap: float
    bound: float
    bound_al: float | None     # product form, only for r = s - 1
    alpha_k: tuple[float, ...]

    @property
    def holds(self) -> bool:
        ok = self.gap >= self.bound - 1e-10
        if self.bound_al is not None:
            ok = ok and self.gap >= self.bound_al - 1e-10
        return ok


def walk_gap(cx: Complex, s: int, r: int) -> float:
    """Exact spectral gap of the order-``(s, r)`` down-up walk."""
    return spectral_gap(cx.down_up(s, r), cx.levels[s].probs)


def variance_certificate(cx: Complex, s: int, r: int,
                         profile: LocalProfile | None = None) -> VarianceCertificate:
    if not 0 <= r < s <= cx.n:
        raise ParameterOutOfRange("need 0 <= r < s <= n")
    prof = profile or local_expansion(cx)
    alpha = []
    for k in range(s - 1):
        z = max(float(prof.zeta[k]), -1.0 + 1e-12)
        alpha.append((1.0 - z) / (1.0 + z))
    G = _gammas(alpha)
    bound = math.fsum(G[r:s]) / math.fsum(G[:s])
    al = None
    if r == s - 1:
        al = 1.0 / s
        for k in range(s - 1):
            al *= 1.0 - float(prof.zeta[k])
    return VarianceCertificate(r, s, walk_gap(cx, s, r), bound, al, tuple(alpha))


# link functions

def link_functions(cx: Complex, k: int, face_id: int, f_top):
    """For a global function on level n, the link data of face ``face_id`` at level ``k``:
    ``(pi_{tau,1}, f_tau^(1), pi_{tau,2}, f_tau^(2), P_up)`` restricted to the link
    (``P_up`` maps the link's level-2 functions to level 1)."""
    f1 = cx.project(f_top, cx.n, k + 1)
    f2 = cx.project(f_top, cx.n, k + 2)
    row1 = cx.up(k)[face_id]
    row2 = cx.up_chain(k, k + 2)[face_id]
    i1 = np.flatnonzero(row1 > 0)
    i2 = np.flatnonzero(row2 > 0)
    up_link = cx.up(k + 1)[np.ix_(i1, i2)]
    return row1[i1], f1[i1], row2[i2], f2[i2], up_link
