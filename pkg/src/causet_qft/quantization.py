"""Free deformation quantization: Moyal and Wick products, SJ two-point function, quasifree states."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .functionals import ExpRule, FormalSeries, PolyFunctional, self_contract
from .operators import GreenSet

EIG_REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TwoPoint:
    """Hadamard two-point function ``W = (i/2) E + H``."""

    W: np.ndarray
    H: np.ndarray
    E: np.ndarray

    @classmethod
    def from_H(cls, E, H) -> "TwoPoint":
        E = np.asarray(E, dtype=float)
        H = np.asarray(H, dtype=float)
        return cls(0.5j * E + H, H, E)

    def axiom_residuals(self) -> dict:
        """Relative residuals of the SJ axioms and positivity."""
        W = self.W
        norm = max(np.linalg.norm(W, 2), np.finfo(float).tiny)
        ev = np.linalg.eigvalsh(W) if W.size else np.zeros(1)
        top = max(np.max(np.abs(ev)), np.finfo(float).tiny)
        return {
            "sj1": float(np.max(np.abs(W - W.conj() - 1j * self.E), initial=0.0)),
            "min_eig_rel": float(ev.min() / top) if W.size else 0.0,
            "sj3_rel": float(np.linalg.norm(W.conj() @ W, 2) / norm ** 2) if W.size else 0.0,
            "hermitian": float(np.max(np.abs(W - W.conj().T), initial=0.0)),
        }


def _commutator(source) -> np.ndarray:
    return source.commutator if isinstance(source, GreenSet) else np.asarray(source, dtype=float)


def sj_two_point(source, tol: float = EIG_REL_TOL) -> TwoPoint:
    """Positive spectral part of ``iE``.

    ``H`` is half the absolute value of ``iE`` (real part, symmetrized), so the
    imaginary part of ``W`` is ``E/2`` to the last bit. Eigenvalues with
    ``|mu| <= tol * max|mu|`` are treated as kernel.
    """
    E = _commutator(source)
    n = E.shape[0]
    if n == 0 or not np.any(E):
        return TwoPoint.from_H(E, np.zeros((n, n)))
    mu, U = np.linalg.eigh(1j * E)
    cut = tol * np.max(np.abs(mu))
    absmu = np.where(np.abs(mu) <= cut, 0.0, np.abs(mu))
    H = 0.5 * ((U * absmu) @ U.conj().T).real
    return TwoPoint.from_H(E, 0.5 * (H + H.T))


def abs_commutator_schur(E) -> np.ndarray:
    """``sqrt(-E^2)`` from the real Schur form of ``E`` (independent of the Hermitian solver)."""
    E = np.asarray(E, dtype=float)
    n = E.shape[0]
    T, Z = schur(E, output="real")
    D = np.zeros((n, n))
    k = 0
    while k < n:
        if k + 1 < n and T[k + 1, k] != 0.0:
            b = math.sqrt(abs(T[k, k + 1] * T[k + 1, k]))
            D[k, k] = D[k + 1, k + 1] = b
            k += 2
        else:
            D[k, k] = abs(T[k, k])
            k += 1
    return Z @ D @ Z.T


# --- products ----------------------------------------------------------------

def moyal_rule(source) -> ExpRule:
    return ExpRule(_commutator(source), 0.5j)


def wick_rule(tp: TwoPoint) -> ExpRule:
    return ExpRule(tp.W, 1.0)


def moyal_star(F: PolyFunctional, G: PolyFunctional, source) -> FormalSeries:
    """``sum_n (hbar^n / n!) (i/2)^n contract(F, G, E, n)``."""
    return moyal_rule(source).product(F, G)


def wick_star(F: PolyFunctional, G: PolyFunctional, tp: TwoPoint) -> FormalSeries:
    return wick_rule(tp).product(F, G)


def star(S1: FormalSeries, S2: FormalSeries, rule: ExpRule) -> FormalSeries:
    return S1.multiply(S2, rule)


def alpha_H(F, H, direction: str = "forward", ohbar: int | None = None) -> FormalSeries:
    """``exp(+-(hbar/2) D_H) F`` with ``D_H F = H^ij F_,ij``.

    Accepts a PolyFunctional or a FormalSeries; ``inverse`` is normal ordering.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError("direction must be 'forward' or 'inverse'")
    sign = 1.0 if direction == "forward" else -1.0
    if isinstance(F, PolyFunctional):
        top = F.degree // 2 if ohbar is None else ohbar
        S = FormalSeries.from_poly(F, top, 0)
    else:
        S = F
    out = S._like()
    for (p, q), X in S.coeffs.items():
        term = X
        k = 0
        while not term.is_zero() and p + k <= out.ohbar:
            out._put(p + k, q, term.scale((0.5 * sign) ** k / math.factorial(k)))
            term = self_contract(term, H)
            k += 1
        if not term.is_zero():
            out.truncated = True
    return out


def omega0(S) -> dict:
    """Evaluation at the zero configuration, cell by cell."""
    if isinstance(S, PolyFunctional):
        return {(0, 0): S.const}
    return S.at_zero()


def omega0_at(S: FormalSeries, hbar: float = 1.0) -> dict:
    """``{lambda power: value}`` with ``hbar`` set to a number."""
    out: dict = {}
    for (p, q), v in S.at_zero().items():
        out[q] = out.get(q, 0j) + v * hbar ** p
    return out


# --- quasifree correlators ---------------------------------------------------

def perfect_matchings(items):
    """All perfect matchings of ``items`` as lists of ordered pairs ``(s, t)`` with ``s`` first."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for k, partner in enumerate(rest):
        for tail in perfect_matchings(rest[:k] + rest[k + 1:]):
            yield [(first, partner)] + tail


def quasifree_npoint(vectors, tp: TwoPoint) -> complex:
    """``sum_matchings prod W(f_s, f_t)`` with ``s < t``, at ``hbar = 1``."""
    vectors = [np.asarray(v) for v in vectors]
    if len(vectors) % 2:
        raise ValueError("odd number of smearing vectors")
    gram = np.array([[a @ tp.W @ b for b in vectors] for a in vectors])
    total = 0j
    for match in perfect_matchings(range(len(vectors))):
        total += np.prod([gram[s, t] for s, t in match])
    return complex(total)


def star_chain(polys, rule: ExpRule, ohbar: int | None = None) -> FormalSeries:
    """Left-nested product ``((F1 * F2) * F3) ...`` as a lambda-free series."""
    if ohbar is None:
        ohbar = sum(F.degree for F in polys) // 2
    acc = FormalSeries.from_poly(polys[0], ohbar, 0)
    for F in polys[1:]:
        acc = acc.multiply(FormalSeries.from_poly(F, ohbar, 0), rule)
    return acc


# --- Weyl functionals --------------------------------------------------------

def weyl_series(g, order: int, ohbar: int | None = None) -> FormalSeries:
    """``exp(i t Phi_g)`` as a series in the scaling variable ``t``, stored in the lambda slot."""
    g = np.asarray(g, dtype=float)
    n = len(g)
    ohbar = order if ohbar is None else ohbar
    lin = PolyFunctional.linear(g)
    out = FormalSeries(n, None, ohbar, order, 0)
    term = PolyFunctional.constant(n, 1.0)
    for k in range(order + 1):
        out._put(0, k, term.scale(1j ** k / math.factorial(k)))
        term = term * lin
    return out


def weyl_check(g, g_tilde, source, order: int) -> float:
    """Max coefficient discrepancy of the Weyl relation, expanded to total order ``order``."""
    E = _commutator(source)
    g = np.asarray(g, dtype=float)
    gt = np.asarray(g_tilde, dtype=float)
    n = len(g)
    lhs = weyl_series(g, order).multiply(weyl_series(gt, order), moyal_rule(E))
    sigma = float(g @ E @ gt)
    phase = FormalSeries(n, None, order, order, 0)
    for j in range(order // 2 + 1):
        phase._put(j, 2 * j, PolyFunctional.constant(n, (-0.5j * sigma) ** j / math.factorial(j)))
    rhs = phase.multiply(weyl_series(g + gt, order))
    return lhs.max_abs_diff(rhs)


def covariance_check(g, H, order: int) -> float:
    """Discrepancy between ``alpha_H(W(g))(0)`` and ``exp(-(hbar/2) g.Hg)`` up to ``order``."""
    g = np.asarray(g, dtype=float)
    n = len(g)
    lhs = alpha_H(weyl_series(g, order), H)
    gHg = float(g @ np.asarray(H) @ g)
    worst = 0.0
    for (p, q), v in lhs.at_zero().items():
        expect = 0.0
        if q == 2 * p:
            expect = (-0.5 * gHg) ** p / math.factorial(p)
        worst = max(worst, abs(v - expect))
    for p in range(order // 2 + 1):
        if (p, 2 * p) not in lhs.coeffs:
            worst = max(worst, abs((-0.5 * gHg) ** p / math.factorial(p)))
    return worst
