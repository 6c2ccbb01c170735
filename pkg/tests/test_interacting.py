import functools
import itertools
import json

import numpy as np
import pytest
import sympy as sp

from causet_qft.classical import interacting_bracket_series, local_interaction, pullback_classical
from causet_qft.functionals import FormalSeries, PolyFunctional
from causet_qft.generators import LatticeSpec, diamond_lattice
from causet_qft.interacting import (
    InteractingTheory,
    correlator_json,
    feynman,
    npoint_interacting,
    smatrix,
    smatrix_inverse,
    time_ordered,
)
from causet_qft.quantization import TwoPoint, sj_two_point, wick_rule, wick_star

from conftest import plambda_greens

HBAR, LAM = sp.symbols("hbar lam")


def random_poly(rng, n, degree, terms=3, support=None):
    pool = np.arange(n) if support is None else np.asarray(support)
    out = {}
    for _ in range(terms):
        k = int(rng.integers(1, degree + 1))
        out[tuple(sorted(rng.choice(pool, size=k)))] = rng.normal()
    return PolyFunctional(n, out)


def quartic(gs, rng, scale=0.5):
    inside = np.setdiff1d(np.arange(gs.size), gs.op.boundary)
    g = np.zeros(gs.size)
    g[inside] = scale * rng.uniform(0.5, 1.0, size=len(inside))
    return local_interaction(g, 4, gs)


def cubic(gs, rng, scale=0.5):
    inside = np.setdiff1d(np.arange(gs.size), gs.op.boundary)
    g = np.zeros(gs.size)
    g[inside] = scale * rng.normal(size=len(inside))
    return local_interaction(g, 3, gs)


@functools.lru_cache(maxsize=None)
def _theory(kind="quartic", ohbar=2, olambda=2, convention="retarded"):
    gs = plambda_greens(diamond_lattice(LatticeSpec(2, 3)))
    tp = sj_two_point(gs)
    rng = np.random.default_rng(7)
    V = quartic(gs, rng) if kind == "quartic" else cubic(gs, rng)
    return InteractingTheory(V, tp, feynman(tp, gs, convention), ohbar, olambda), gs


# --- independent symbolic oracle ---------------------------------------------------------

def _symbols(n):
    return sp.symbols(f"x0:{n}"), sp.symbols(f"y0:{n}")


def _to_sympy(F: PolyFunctional, xs):
    return sum(c * sp.Mul(*[xs[i] for i in mono]) for mono, c in F.terms.items())


def sym_star(A, B, M, xs, ys, nmax=8):
    """``sum_n hbar^n/n! (sum_ij M_ij d/dx_i d/dy_j)^n A(x) B(y)`` restricted to y = x."""
    term = sp.expand(A * B.subs(dict(zip(xs, ys)), simultaneous=True))
    total = term
    for k in range(1, nmax + 1):
        term = sp.expand(sum(complex(M[i, j]) * sp.diff(term, xs[i], ys[j])
                             for i, j in itertools.product(range(len(xs)), repeat=2)
                             if M[i, j] != 0) * HBAR / k)
        if term == 0:
            break
        total += term
    return sp.expand(total.subs(dict(zip(ys, xs)), simultaneous=True))


def _coeff(expr, p, q):
    expr = sp.expand(expr * HBAR ** 8)
    return complex(sp.Poly(expr, HBAR, LAM).coeff_monomial(HBAR ** (p + 8) * LAM ** q))


def _max_coeff(expr, xs):
    expr = sp.expand(expr)
    if expr == 0:
        return 0.0
    return max(abs(complex(c)) for c in sp.Poly(expr, *xs).coeffs())


def test_symbolic_oracle_time_ordered_square():
    gs = plambda_greens(diamond_lattice(LatticeSpec(1, 3)))
    tp = sj_two_point(gs)
    fp = feynman(tp, gs)
    V = local_interaction(np.array([0.0, 0.0, 0.7]), 4, gs).V
    xs, ys = _symbols(3)
    v = _to_sympy(V, xs)
    oracle = sym_star(v, v, fp.DF, xs, ys)
    got = time_ordered(V, V, fp)
    for p in range(5):
        expect = sp.Poly(oracle, HBAR).coeff_monomial(HBAR ** p)
        here = _to_sympy(got[(p, 0)], xs) if (p, 0) in got.keys() else 0
        assert _max_coeff(here - expect, xs) <= 1e-12


def test_symbolic_oracle_quartic_two_point():
    gs = plambda_greens(diamond_lattice(LatticeSpec(1, 3)))
    tp = sj_two_point(gs)
    fp = feynman(tp, gs)
    coupling = np.array([0.0, 0.0, 0.7])
    V = local_interaction(coupling, 4, gs).V
    f, g = np.array([0.3, -1.1, 0.8]), np.array([0.9, 0.4, -0.6])

    xs, ys = _symbols(3)
    v = LAM * _to_sympy(V, xs)
    I = sp.I / HBAR
    # S-matrix, its Wick inverse and the quantum Moller map truncated at lambda^2
    S = 1 + I * v + I ** 2 / 2 * sym_star(v, v, fp.DF, xs, ys)
    s1, s2 = sp.expand(I * v), sp.expand(I ** 2 / 2 * sym_star(v, v, fp.DF, xs, ys))
    Sinv = 1 - s1 - s2 + sym_star(s1, s1, tp.W, xs, ys)

    def moller(F):
        inner = sym_star(S, F, fp.DF, xs, ys)
        out = sp.expand(sym_star(Sinv, inner, tp.W, xs, ys))
        return sum(t for t in out.as_ordered_terms() if sp.degree(t, LAM) <= 2)

    Rf = moller(sum(f[i] * xs[i] for i in range(3)))
    Rg = moller(sum(g[i] * xs[i] for i in range(3)))
    two = sym_star(Rf, Rg, tp.W, xs, ys).subs({x: 0 for x in xs})
    two = sum(t for t in sp.expand(two).as_ordered_terms() if sp.degree(t, LAM) <= 2)

    direct, pulled = InteractingTheory(V, tp, fp, 2, 2).npoint([f, g])
    vals = direct.at_zero()
    for p, q in itertools.product(range(3), range(3)):
        assert abs(vals.get((p, q), 0.0) - _coeff(two, p, q)) <= 1e-9
    # one quartic vertex cannot be saturated by two external legs at phi = 0
    assert all(abs(vals.get((p, 1), 0.0)) <= 1e-12 for p in range(3))
    assert abs(vals[(1, 0)] - f @ tp.W @ g) <= 1e-14
    assert direct.max_abs_diff(pulled) <= 1e-10


# --- Feynman propagator and time ordering -------------------------------------------------

def test_feynman_conventions(small_greens, small_two_point):
    W = small_two_point.W
    ret = feynman(small_two_point, small_greens)
    lit = feynman(small_two_point, small_greens, "literal")
    for fp in (ret, lit):
        assert np.array_equal(fp.DF, fp.DF.T)
    assert np.max(np.abs(ret.DF - W + 1j * small_greens.advanced)) <= 1e-14
    assert np.max(np.abs(lit.DF - W - 1j * small_greens.retarded)) <= 1e-14
    with pytest.raises(ValueError):
        feynman(small_two_point, small_greens, "sideways")


def test_feynman_vanishes_with_zero_data(small_greens):
    zero = TwoPoint.from_H(np.zeros((2, 2)), np.zeros((2, 2)))

    class Flat:
        retarded = advanced = np.zeros((2, 2))

    assert not feynman(zero, Flat()).DF.any()


def test_time_ordered_commutative(small_greens, small_two_point, rng):
    fp = feynman(small_two_point, small_greens)
    for _ in range(3):
        F, G = random_poly(rng, small_greens.size, 3), random_poly(rng, small_greens.size, 3)
        FG, GF = time_ordered(F, G, fp), time_ordered(G, F, fp)
        assert FG.max_abs_diff(GF) <= 1e-14
        assert FG[(0, 0)].max_abs_diff(F * G) <= 1e-14


def test_time_ordered_linears(small_greens, small_two_point, rng):
    fp = feynman(small_two_point, small_greens)
    f, g = rng.normal(size=(2, small_greens.size))
    T = time_ordered(PolyFunctional.linear(f), PolyFunctional.linear(g), fp)
    assert T[(0, 0)].max_abs_diff(PolyFunctional.linear(f) * PolyFunctional.linear(g)) == 0.0
    assert np.isclose(T[(1, 0)].const, f @ fp.DF @ g, rtol=1e-14)


# --- S-matrix -------------------------------------------------------------------------------

def test_smatrix_low_orders(small_greens, small_two_point, rng):
    fp = feynman(small_two_point, small_greens)
    V = quartic(small_greens, rng).V
    S = smatrix(V, (4, 2), fp)
    assert S[(0, 0)].max_abs_diff(PolyFunctional.constant(V.size)) == 0.0
    assert S[(-1, 1)].max_abs_diff(V.scale(1j)) == 0.0
    VV = time_ordered(V, V, fp)
    for p in range(5):
        expect = VV[(p, 0)].scale(-0.5) if (p, 0) in VV.keys() else PolyFunctional.zero(V.size)
        assert S[(p - 2, 2)].max_abs_diff(expect) <= 1e-14


def test_smatrix_inverse_two_sided(small_greens, small_two_point, rng):
    fp = feynman(small_two_point, small_greens)
    V = quartic(small_greens, rng).V
    S = smatrix(V, (6, 2), fp)
    Sinv = smatrix_inverse(S, small_two_point)
    unit = FormalSeries.unit(V.size, 6, 2, min_hbar=-2)
    rule = wick_rule(small_two_point)
    for prod in (Sinv.multiply(S, rule), S.multiply(Sinv, rule)):
        # cells that are complete at the retained hbar order
        gap = (prod - unit).with_orders(ohbar=2)
        assert gap.max_abs() <= 1e-12 * max(1.0, S.max_abs())


def test_smatrix_inverse_of_unit(small_two_point):
    unit = FormalSeries.unit(6, 2, 2)
    assert smatrix_inverse(unit, small_two_point).max_abs_diff(unit) == 0.0
    with pytest.raises(ValueError):
        smatrix_inverse(unit.scale(2.0), small_two_point)


# --- quantum Moller map --------------------------------------------------------------------

def test_moller_zeroth_order_is_identity(rng):
    theory, gs = _theory()
    F = random_poly(rng, gs.size, 3)
    R = theory.moller(F)
    assert R.lambda_part(0).max_abs_diff(FormalSeries.from_poly(F, 2, 2)) <= 1e-14


@pytest.mark.parametrize("kind", ["quartic", "cubic"])
def test_moller_classical_limit(rng, kind):
    theory, gs = _theory(kind)
    for _ in range(2):
        F = random_poly(rng, gs.size, 2)
        R = theory.moller(F)
        classical = pullback_classical(F, theory.V, gs, 2)
        for q in range(3):
            here = R[(0, q)] if (0, q) in R.keys() else PolyFunctional.zero(gs.size)
            assert here.max_abs_diff(classical[q]) <= 1e-10
        assert R.is_physical()


def test_literal_convention_misses_classical_limit(rng):
    theory, gs = _theory(convention="literal")
    F = PolyFunctional.linear(rng.normal(size=gs.size))
    R = theory.moller(F)
    classical = pullback_classical(F, theory.V, gs, 1)
    assert R[(0, 1)].max_abs_diff(classical[1]) > 1e-3


def test_moller_inverse_round_trip(rng):
    theory, gs = _theory()
    F = random_poly(rng, gs.size, 2)
    back = theory.moller_inverse(theory.moller(F))
    assert back.max_abs_diff(FormalSeries.from_poly(F, 2, 2)) <= 1e-10


# --- interacting star product -------------------------------------------------------------------

def test_star_int_zeroth_order(rng):
    theory, gs = _theory()
    F, G = random_poly(rng, gs.size, 2), random_poly(rng, gs.size, 2)
    lead = theory.star_int(F, G).lambda_part(0)
    free = wick_star(F, G, theory.tp).with_orders(ohbar=2, olambda=2)
    assert lead.max_abs_diff(free) <= 1e-12


@pytest.mark.parametrize("kind", ["quartic", "cubic"])
def test_interacting_commutator_classical_limit(rng, kind):
    theory, gs = _theory(kind)
    F, G = random_poly(rng, gs.size, 2), random_poly(rng, gs.size, 2)
    comm = theory.star_int(F, G) - theory.star_int(G, F)
    assert comm.with_orders(ohbar=0).max_abs() <= 1e-10
    bracket = interacting_bracket_series(F, G, theory.V, 2, gs)
    for q in range(3):
        assert comm[(1, q)].scale(-1j).max_abs_diff(bracket[q]) <= 1e-10


def test_star_int_associative_at_truncation(rng):
    # a quartic vertex at lambda^2 pushes the nested products past the degree cap
    theory, gs = _theory("cubic")
    F, G, K = (random_poly(rng, gs.size, 2, terms=2) for _ in range(3))
    left = theory.star_int(theory.star_int(F, G), K)
    right = theory.star_int(F, theory.star_int(G, K))
    assert left.max_abs_diff(right) <= 1e-10 * max(1.0, left.max_abs())


def test_star_int_keeps_unit(rng):
    theory, gs = _theory()
    F = random_poly(rng, gs.size, 2)
    one = PolyFunctional.constant(gs.size)
    assert theory.star_int(one, F).max_abs_diff(FormalSeries.from_poly(F, 2, 2)) <= 1e-12


# --- correlators -------------------------------------------------------------------------------

def test_two_point_free_part(rng):
    theory, gs = _theory()
    f, g = rng.normal(size=(2, gs.size))
    direct, pulled = theory.npoint([f, g])
    vals = direct.at_zero()
    assert abs(vals[(1, 0)] - f @ theory.tp.W @ g) <= 1e-13
    assert vals.get((0, 0), 0.0) == 0.0
    assert direct.max_abs_diff(pulled) <= 1e-10
    assert direct.is_physical()


def test_four_point_composition_orders_agree(rng):
    theory, gs = _theory(olambda=1)
    fs = rng.normal(size=(4, gs.size))
    direct, pulled = theory.npoint(fs)
    assert direct.max_abs_diff(pulled) <= 1e-10 * max(1.0, direct.max_abs())


def test_npoint_interacting_wrapper(small_greens, small_two_point, rng):
    fp = feynman(small_two_point, small_greens)
    V = quartic(small_greens, rng)
    f, g = rng.normal(size=(2, small_greens.size))
    out = npoint_interacting([f, g], V, (2, 1), small_two_point, fp)
    data = correlator_json(out)
    assert data["physical"] is True
    assert data["truncation"]["ohbar"] == 2 and data["truncation"]["olambda"] == 1
    assert set(data["orders"]) <= {f"h{p}_l{q}" for p in range(3) for q in range(2)}
    re, im = data["orders"]["h1_l0"]
    assert np.isclose(complex(re, im), f @ small_two_point.W @ g)
    json.dumps(data)
