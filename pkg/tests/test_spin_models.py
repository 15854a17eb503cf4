import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glauber_lab.errors import DegreeTooSmall, NonPositiveParameter, NotAntiferromagnetic
from glauber_lab.exact_dist import enumerate_gibbs
from glauber_lab.graph_core import (
    all_graphs,
    build_graph,
    complete_graph,
    cycle_graph,
    empty_graph,
    path_graph,
    star_graph,
)
from glauber_lab.spin_models import (
    SpinSystem,
    TwoSpinParams,
    colorings,
    critical_fugacity,
    dobrushin_check,
    dobrushin_matrix,
    hardcore,
    ising,
    ising_critical,
    monomer_dimer,
    system_from_json,
    tree_map,
    uniqueness_gap,
)

import oracles


def test_constructors():
    s = hardcore(1)
    assert np.array_equal(s.A, [[1, 1], [1, 0]]) and np.array_equal(s.h, [1, 1])
    assert np.array_equal(colorings(3).A, np.ones((3, 3)) - np.eye(3))
    assert np.array_equal(colorings(3).h, np.ones(3))
    s = ising(0.5, 1)
    assert np.array_equal(s.A, [[0.5, 1], [1, 0.5]]) and np.array_equal(s.h, [1, 1])
    assert hardcore(2).hard_pairs == {(1, 1)}


def test_two_spin_layout_matches_hardcore():
    s = TwoSpinParams(beta=0.0, gamma=1.0, lam=2.0).to_system()
    assert np.array_equal(s.A, hardcore(2.0).A) and np.array_equal(s.h, hardcore(2.0).h)


@pytest.mark.parametrize("bad", [
    lambda: hardcore(0),
    lambda: hardcore(-1),
    lambda: ising(0, 1),
    lambda: colorings(1),
    lambda: SpinSystem(2, [[1, 2], [1, 1]], [1, 1]),
    lambda: SpinSystem(2, [[1, 1], [1, 1]], [1, 0]),
    lambda: TwoSpinParams(1, 0, 1),
])
def test_invalid_parameters(bad):
    with pytest.raises(NonPositiveParameter):
        bad()


@pytest.mark.parametrize("s", [hardcore(1.5), ising(0.5, 2.0), colorings(4),
                               TwoSpinParams(0.2, 0.7, 1.3).to_system(),
                               SpinSystem(2, [[2, 1], [1, 3]], [1, 5])])
def test_json_round_trip(s):
    back = system_from_json(json.loads(json.dumps(s.to_json())))
    assert np.array_equal(back.A, s.A) and np.array_equal(back.h, s.h)


@pytest.mark.parametrize("delta,expected", [
    (3, Fraction(4)),
    (4, Fraction(27, 16)),
    (5, Fraction(256, 243)),   # 4^4 / 3^5
])
def test_critical_fugacity(delta, expected):
    assert critical_fugacity(delta) == expected


@pytest.mark.parametrize("delta,expected", [
    (3, (Fraction(1, 3), Fraction(3))),
    (4, (Fraction(1, 2), Fraction(2))),
    (6, (Fraction(2, 3), Fraction(3, 2))),
])
def test_ising_critical(delta, expected):
    assert ising_critical(delta) == expected


def test_thresholds_monotone():
    lc = [critical_fugacity(d) for d in range(3, 40)]
    assert all(a > b for a, b in zip(lc, lc[1:]))
    # (D-2) lambda_c(D) = (1 + 1/(D-2))^(D-1) decreases to e
    scaled = [(d - 2) * critical_fugacity(d) for d in range(3, 40)]
    assert all(a > b > math.e for a, b in zip(scaled, scaled[1:]))
    assert float(1998 * critical_fugacity(2000)) == pytest.approx(math.e, rel=1e-3)
    bc = [ising_critical(d)[0] for d in range(3, 40)]
    assert all(a < b < 1 for a, b in zip(bc, bc[1:]))
    with pytest.raises(DegreeTooSmall):
        critical_fugacity(2)


def test_uniqueness_gap_examples():
    rep = uniqueness_gap(TwoSpinParams(0.0, 1.0, 4.0), 3)
    assert rep.fixed_points[-1] == pytest.approx(1.0, abs=1e-10)
    assert rep.derivatives[-1] == pytest.approx(1.0, abs=1e-9)
    assert abs(rep.gap) < 1e-9
    assert uniqueness_gap(TwoSpinParams(0.0, 1.0, 1.0), 3).gap > 0
    assert uniqueness_gap(TwoSpinParams(0.0, 1.0, 8.0), 3).gap < 0
    with pytest.raises(NotAntiferromagnetic):
        uniqueness_gap(TwoSpinParams(2.0, 1.0, 1.0), 3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 0.9), st.floats(0.1, 3), st.floats(0.05, 10), st.integers(2, 8))
def test_fixed_points_are_fixed(beta, gamma, lam, delta):
    p = TwoSpinParams(beta, gamma, lam)
    if not p.antiferromagnetic:
        return
    rep = uniqueness_gap(p, delta)
    for d, R in enumerate(rep.fixed_points, start=1):
        assert abs(tree_map(p, d, R) - R) <= 1e-10 * max(1.0, R)


def test_uniqueness_matches_critical_fugacity():
    for delta in (3, 4, 5, 6):
        lc = float(critical_fugacity(delta))
        assert uniqueness_gap(TwoSpinParams(0, 1, 0.98 * lc), delta).gap > 0
        assert uniqueness_gap(TwoSpinParams(0, 1, 1.02 * lc), delta).gap < 0


def test_dobrushin_examples():
    lam = 0.1
    R = dobrushin_matrix(hardcore(lam), complete_graph(2))
    assert R[0, 1] == pytest.approx(lam / (1 + lam), abs=1e-15)
    ok, c = dobrushin_check(hardcore(lam), complete_graph(2))
    assert ok and c == pytest.approx(1 - lam / (1 + lam))
    for s in (hardcore(3), ising(0.1), colorings(3)):
        assert dobrushin_check(s, empty_graph(3)) == (True, 1.0)


def test_dobrushin_small_fugacity():
    graphs = [g for g in all_graphs(6, min_n=2, connected=True) if g.max_degree <= 4]
    for g in graphs:
        ok, c = dobrushin_check(hardcore(1 / (2 * g.max_degree)), g)
        assert ok and c >= 0.5 - 1e-12


@pytest.mark.parametrize("g", [path_graph(3), cycle_graph(4), star_graph(3), complete_graph(4)])
def test_monomer_dimer_matches_matchings(g):
    lam = 1.7
    s, lg, corr = monomer_dimer(g, lam)
    d = enumerate_gibbs(s, lg)
    direct = {M: lam ** len(M) for M in oracles.matchings(g)}
    Z = math.fsum(direct.values())
    assert d.Z == pytest.approx(Z, rel=1e-12)
    for row, p in zip(d.configs, d.probs):
        M = frozenset(i for i, x in enumerate(row) if x == 1)
        assert p == pytest.approx(direct[M] / Z, rel=1e-12)
    assert corr == g.edges
