import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glauber_lab.dynamics import ChainMatrix, glauber_matrix, log_sobolev_estimate
from glauber_lab.errors import InfeasibleFace, LevelTooHigh, ParameterOutOfRange
from glauber_lab.exact_dist import (
    average_block_entropy,
    condition,
    entropy,
    enumerate_gibbs,
    iter_pinned,
    marginal_bound,
    mean,
    spectral_independence,
    variance,
)
from glauber_lab.graph_core import complete_graph, cycle_graph, empty_graph, path_graph, star_graph
from glauber_lab.simplicial import (
    build_levels,
    certificate,
    closed_form_block_bound,
    contraction_ratio,
    entropy_alpha,
    link_functions,
    local_expansion,
    local_walk,
    measured_certificate,
    measured_entropy_contraction,
    variance_certificate,
    walk_gap,
)
from glauber_lab.spin_models import colorings, hardcore, ising

INSTANCES = [
    (hardcore(1.0), complete_graph(2)),
    (hardcore(1.0), path_graph(4)),
    (hardcore(2.0), star_graph(3)),
    (ising(0.5), cycle_graph(4)),
    (ising(2.0, 0.7), complete_graph(4)),
    (colorings(3), path_graph(3)),
    (hardcore(0.5), empty_graph(3)),
]
IDS = [f"{s.name}-{g.n}-{g.m}" for s, g in INSTANCES]


@pytest.fixture(scope="module", params=range(len(INSTANCES)), ids=IDS)
def cx(request):
    s, g = INSTANCES[request.param]
    return build_levels(enumerate_gibbs(s, g))


def test_levels_k2_example():
    cx = build_levels(enumerate_gibbs(hardcore(1), complete_graph(2)))
    lvl = cx.levels[1]
    assert lvl.probs[lvl.index[((0,), (1,))]] == pytest.approx(1 / 6)
    assert lvl.probs[lvl.index[((0,), (0,))]] == pytest.approx(1 / 3)
    assert cx.levels[0].faces == (((), ()),) and cx.levels[0].probs[0] == 1
    assert np.allclose(cx.levels[2].probs, cx.dist.probs)


def test_level_consistency(cx):
    for k in range(cx.n):
        inc = cx.up(k) > 0
        lhs = cx.levels[k].probs
        rhs = inc @ cx.levels[k + 1].probs / (k + 1)
        assert np.allclose(lhs, rhs, atol=1e-12, rtol=0)
        assert cx.levels[k].probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_walks_are_stochastic_and_reversible(cx):
    for s in range(1, cx.n + 1):
        for r in range(s):
            P = cx.down_up(s, r)
            pi = cx.levels[s].probs
            assert np.allclose(P.sum(axis=1), 1)
            F = pi[:, None] * P
            assert np.abs(F - F.T).max() <= 1e-12
            assert np.allclose(pi @ P, pi)


def test_entropy_decomposition_across_levels(cx):
    rng = np.random.default_rng(0)
    n = cx.n
    for _ in range(3):
        f = np.exp(rng.normal(0, 1.5, len(cx.levels[n].probs)))
        for k in range(n + 1):
            fk = cx.project(f, n, k)
            for j in range(k):
                fj = cx.project(fk, k, j)
                U = cx.up_chain(j, k)
                links = math.fsum(cx.levels[j].probs[t] * entropy(U[t], fk)
                                  for t in range(len(cx.levels[j])))
                lhs = entropy(cx.levels[k].probs, fk)
                assert lhs == pytest.approx(entropy(cx.levels[j].probs, fj) + links, abs=1e-10)


def test_block_average_equals_level_difference(cx):
    rng = np.random.default_rng(1)
    n = cx.n
    for _ in range(5):
        f = np.exp(rng.normal(0, 1.5, cx.dist.size))
        for ell in range(1, n + 1):
            lhs = average_block_entropy(cx.dist, ell, f)
            rhs = entropy(cx.levels[n].probs, f) - entropy(cx.levels[n - ell].probs,
                                                           cx.project(f, n, n - ell))
            assert lhs == pytest.approx(rhs, abs=1e-10)


def test_local_walk_examples():
    cx = build_levels(enumerate_gibbs(hardcore(1), complete_graph(2)))
    lw = local_walk(cx, ((), ()))
    a = lw.index.index((0, 1))
    b = lw.index.index((1, 0))
    assert lw.P[a, b] == pytest.approx(1.0)
    with pytest.raises(LevelTooHigh):
        local_walk(cx, ((0,), (0,)))
    cx4 = build_levels(enumerate_gibbs(hardcore(1), path_graph(4)))
    with pytest.raises(InfeasibleFace):
        local_walk(cx4, ((0, 1), (1, 1)))
    prod = build_levels(enumerate_gibbs(ising(0.7, 2.0), empty_graph(3)))
    lw = local_walk(prod, ((), ()))
    for i, (v, _) in enumerate(lw.index):
        for j, (w, _) in enumerate(lw.index):
            if v == w:
                assert lw.P[i, j] == 0
    # rows agree on every target at another vertex
    assert np.allclose(lw.P[0, 2:], lw.P[1, 2:])
    assert lw.lambda2 <= 1e-10


def test_local_walks_partite(cx):
    for k in range(cx.n - 1):
        for face in cx.levels[k].faces:
            lw = local_walk(cx, face)
            verts = np.array([v for v, _ in lw.index])
            assert (lw.P[verts[:, None] == verts[None, :]] == 0).all()
            assert np.allclose(lw.P.sum(axis=1), 1)


def test_local_expansion_examples():
    prof = local_expansion(build_levels(enumerate_gibbs(hardcore(1), complete_graph(2))))
    assert prof.zeta[0] == pytest.approx(0.5, abs=1e-12)
    prof = local_expansion(build_levels(enumerate_gibbs(hardcore(3), empty_graph(4))))
    assert (prof.zeta <= 1e-10).all()


def test_link_bounds_from_global_quantities(cx):
    d = cx.dist
    if d.n < 2:
        return
    b = marginal_bound(d)
    eta = spectral_independence(d)
    prof = local_expansion(cx)
    n = d.n
    for k in range(n):
        assert prof.b[k] >= b / (n - k) - 1e-12
    for k in range(n - 1):
        assert prof.zeta[k] <= eta / (n - k - 1) + 1e-10


def test_link_entropy_inequality(cx):
    rng = np.random.default_rng(2)
    n = cx.n
    for _ in range(3):
        f = np.exp(rng.normal(0, 1.5, cx.dist.size))
        for k in range(n - 1):
            for fid, face in enumerate(cx.levels[k].faces):
                pi1, f1, pi2, f2, _ = link_functions(cx, k, fid, f)
                l2 = local_walk(cx, face).lambda2
                lhs = entropy(pi2, f2) - 2 * entropy(pi1, f1)
                assert lhs >= -l2 * variance(pi1, f1) / mean(pi1, f1) - 1e-10


def test_link_ratio_bound(cx):
    rng = np.random.default_rng(3)
    n = cx.n
    prof = local_expansion(cx)
    for _ in range(3):
        f = np.exp(rng.normal(0, 2, cx.dist.size))
        f /= cx.levels[n].probs @ f
        for k in range(n):
            for fid in range(len(cx.levels[k])):
                row = cx.up(k)[fid]
                keep = row > 0
                f1 = cx.project(f, n, k + 1)[keep]
                ratio = f1 / (row[keep] @ f1)
                assert ratio.max() <= 1 / (prof.b[k] * (n - k)) + 1e-9


def test_two_level_decay():
    s, g = ising(0.5, 1.3), cycle_graph(4)
    d = enumerate_gibbs(s, g)
    rng = np.random.default_rng(4)
    for view in iter_pinned(d, min_free=2):
        if len(view.free) != 2:
            continue
        c = condition(d, dict(zip(view.pinned, view.spins)))
        sub = build_levels(c)
        pi = sub.levels[2].probs
        rho = log_sobolev_estimate(ChainMatrix(None, sub.down_up(2, 1), pi), restarts=10).value
        for _ in range(10):
            f = np.exp(rng.normal(0, 2, len(pi)))
            e1 = entropy(sub.levels[1].probs, sub.project(f, 2, 1))
            assert e1 <= (1 - rho) * entropy(pi, f) + 1e-7


def test_log_sobolev_versus_gap_on_walks(cx):
    for s in range(2, cx.n + 1):
        pi = cx.levels[s].probs
        c = ChainMatrix(None, cx.down_up(s, s - 1), pi)
        rho = log_sobolev_estimate(c, restarts=4).value
        gap = walk_gap(cx, s, s - 1)
        assert rho >= gap / (2 + math.log(1 / pi.min())) - 1e-12


def test_product_certificate():
    cert = certificate(0.5, 0.0, 5)
    assert all(a == pytest.approx(1.0) for a in cert.alpha_k)
    assert all(gm == pytest.approx(1.0) for gm in cert.Gamma_k)
    for r in range(5):
        assert cert.kappa(r) == pytest.approx((5 - r) / 5)
    assert cert.C_block(1) == pytest.approx(1.0)
    assert cert.kappa(0) == 1
    with pytest.raises(ParameterOutOfRange):
        cert.kappa(5)


def test_negative_local_expansion_clamped():
    assert entropy_alpha([0.3, 0.3], [-0.4], 2) == entropy_alpha([0.3, 0.3], [0.0], 2)


def test_closed_form_dominates_certificate():
    b, eta, n, ell = 0.5, 0.125, 10, 5
    cf = closed_form_block_bound(b, eta, n, ell)
    assert cf.R == 2
    exact = certificate(b, eta, n).C_block(ell)
    assert cf.C_closed == pytest.approx(64.0)
    assert cf.C_closed >= exact
    assert cf.C_from_kappa <= cf.C_closed


def test_measured_certificate_rates(cx):
    cert = measured_certificate(cx)
    kap = [cert.kappa(r) for r in range(cx.n)]
    assert kap[0] == 1
    assert all(a >= b - 1e-15 for a, b in zip(kap, kap[1:]))


def test_contraction_product_instance():
    cx = build_levels(enumerate_gibbs(hardcore(0.7), empty_graph(3)))
    res = measured_entropy_contraction(cx, 2, 3, trials=20, restarts=5, seed=0)
    assert min(res.random_ratios) >= 1 / 3 - 1e-12
    assert res.ratio >= 1 / 3 - 1e-9


def test_contraction_indicator(cx):
    cert = measured_certificate(cx)
    n = cx.n
    for i in range(min(cx.dist.size, 4)):
        f = np.where(np.arange(cx.dist.size) == i, 1.0, 0.0)
        if entropy(cx.levels[n].probs, f) <= 0:
            continue
        for r in range(n):
            assert contraction_ratio(cx, r, n, f) >= cert.kappa(r) - 1e-12


def test_contraction_search_respects_certificate(cx):
    cert = measured_certificate(cx)
    n = cx.n
    for r in range(n):
        res = measured_entropy_contraction(cx, r, n, trials=10, restarts=3, seed=r)
        assert res.ratio >= cert.kappa(r) - 1e-9


def test_variance_certificate_examples():
    cx = build_levels(enumerate_gibbs(ising(1.0), empty_graph(2)))
    vc = variance_certificate(cx, 2, 1)
    assert vc.gap == pytest.approx(0.5) and vc.bound == pytest.approx(0.5)
    cx = build_levels(enumerate_gibbs(hardcore(1), complete_graph(2)))
    assert variance_certificate(cx, 2, 1).gap == pytest.approx(0.25, abs=1e-12)
    vc0 = variance_certificate(cx, 2, 0)
    assert vc0.bound == pytest.approx(1.0) and vc0.gap == pytest.approx(1.0)


def test_variance_certificate_holds(cx):
    prof = local_expansion(cx)
    for s in range(1, cx.n + 1):
        for r in range(s):
            assert variance_certificate(cx, s, r, prof).holds


def test_down_up_matches_glauber(cx):
    if cx.dist.size > 400:
        return
    G = glauber_matrix(cx.dist)
    assert np.allclose(cx.down_up(cx.n, cx.n - 1), G.P, atol=1e-12)
