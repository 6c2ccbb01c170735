"""Peierls brackets, classical Moller maps and interacting Green functions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .functionals import PolyFunctional, contract, compose
from .operators import GreenSet, PreconditionError


class PicardDivergenceError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class Interaction:
    """Real polynomial interaction supported away from the past infinity."""

    V: PolyFunctional
    boundary: tuple = ()

    def __post_init__(self):
        if not self.V.is_real():
            raise ValueError("interaction coefficients must be real")
        bad = sorted(self.V.support() & set(int(b) for b in self.boundary))
        if bad:
            raise PreconditionError("interaction is supported on the past infinity", bad)

    @classmethod
    def for_greens(cls, V: PolyFunctional, gs: GreenSet) -> "Interaction":
        return cls(V, tuple(int(b) for b in gs.op.boundary))

    @property
    def size(self):
        return self.V.size

    def first(self, phi):
        return self.V.derivative(1, phi).real

    def second(self, phi):
        return self.V.derivative(2, phi).real

    def third(self, phi):
        return self.V.derivative(3, phi).real


def local_interaction(coupling, power: int, gs: GreenSet | None = None) -> Interaction:
    """``V = sum_i coupling_i phi_i**power``."""
    V = PolyFunctional.hadamard_monomial(np.asarray(coupling, dtype=float), power)
    return Interaction.for_greens(V, gs) if gs is not None else Interaction(V)


def _as_V(V):
    return V if isinstance(V, Interaction) else Interaction(V)


# --- free bracket and responses ---------------------------------------------

def peierls(F: PolyFunctional, G: PolyFunctional, gs: GreenSet) -> PolyFunctional:
    """``{F, G} = F_,i E^ij G_,j`` as an exact polynomial."""
    return contract(F, G, gs.commutator, 1)


def _check_source(g, gs):
    g = np.asarray(g, dtype=float)
    bad = [int(b) for b in gs.op.boundary if g[b] != 0]
    if bad:
        raise PreconditionError("perturbation does not vanish on the past infinity", bad)
    return g


def retarded_response(g_pert, h_obs, gs: GreenSet, f=None, data=None, step: float = 1.0) -> float:
    """``h . E+ g`` from two solves of ``P phi = K (f + lam g) + data``.

    The background ``(f, data)`` defaults to zero; the answer does not depend on it.
    """
    g = _check_source(g_pert, gs)
    n = gs.size
    f = np.zeros(n) if f is None else np.asarray(f, dtype=float)
    data = np.zeros(n) if data is None else np.asarray(data, dtype=float)
    P, K = gs.op.P, gs.op.K
    sols = [solve_triangular(P, K @ (f + lam * g) + data, lower=True) for lam in (0.0, step)]
    return float(np.asarray(h_obs) @ (sols[1] - sols[0]) / step)


def advanced_response(g_pert, h_obs, gs: GreenSet, step: float = 1.0) -> float:
    """``h . E- g`` from two solves of the transposed (advanced) problem."""
    g = np.asarray(g_pert, dtype=float)
    P, K = gs.op.P, gs.op.K
    sols = [K.T @ solve_triangular(P.T, lam * g, lower=False) for lam in (0.0, step)]
    return float(np.asarray(h_obs) @ (sols[1] - sols[0]) / step)


@dataclass(frozen=True)
class KernelReport:
    eigenvalues: np.ndarray
    magnitudes: np.ndarray
    kernel_basis: np.ndarray
    kernel_dimension: int
    tolerance: float


def kernel_diagnostics(source, tol: float = 1e-10) -> KernelReport:
    """Spectrum of ``iE`` and the numerical kernel ``|mu| <= tol * max|mu|``.

    ``source`` is a GreenSet or an antisymmetric matrix ``E``.
    """
    E = source.commutator if isinstance(source, GreenSet) else np.asarray(source, dtype=float)
    mu, U = np.linalg.eigh(1j * E)
    scale = np.max(np.abs(mu), initial=0.0)
    cut = tol * scale
    ker = np.abs(mu) <= cut
    return KernelReport(mu, np.sort(np.abs(mu)), U[:, ker], int(ker.sum()), float(cut))


# --- classical Moller maps ---------------------------------------------------

def moller_classical(V, lam: float, gs: GreenSet, phi, mode: str = "picard", order: int = 2,
                     max_iter: int = 200, tol: float = 1e-12) -> np.ndarray:
    """Solve ``r = phi + lam E+ V'(r)``.

    ``picard`` iterates without damping; ``lambda-order`` sums the series in
    ``lam`` up to ``order``.
    """
    V = _as_V(V)
    phi = np.asarray(phi, dtype=float)
    Eret = gs.retarded
    if mode == "lambda-order":
        coeffs = moller_coefficients(V, gs, phi, order)
        return sum(lam ** k * c for k, c in enumerate(coeffs))
    if mode != "picard":
        raise ValueError(f"unknown mode {mode!r}")
    r = phi.copy()
    # overflow is how divergence shows up; it is caught by the finiteness check
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            nxt = phi + lam * Eret @ V.first(r)
            if not np.all(np.isfinite(nxt)):
                break
            if np.max(np.abs(nxt - r), initial=0.0) <= tol * max(1.0, np.max(np.abs(nxt), initial=0.0)):
                return nxt
            r = nxt
    raise PicardDivergenceError(f"Picard iteration did not converge in {max_iter} steps; "
                                "use mode='lambda-order'")


def moller_inverse(V, lam: float, gs: GreenSet, phi) -> np.ndarray:
    """``phi - lam E+ V'(phi)``."""
    V = _as_V(V)
    phi = np.asarray(phi, dtype=float)
    return phi - lam * gs.retarded @ V.first(phi)


def _series_eval(F: PolyFunctional, coeffs: np.ndarray) -> np.ndarray:
    """Lambda-coefficients of ``F(sum_k lam^k coeffs[k])`` truncated at ``len(coeffs) - 1``."""
    m = coeffs.shape[0]
    out = np.zeros(m, dtype=np.complex128)
    for mono, c in F.terms.items():
        term = np.zeros(m, dtype=np.complex128)
        term[0] = c
        for i in mono:
            term = np.convolve(term, coeffs[:, i])[:m]
        out += term
    return out


def moller_coefficients(V, gs: GreenSet, phi, order: int) -> np.ndarray:
    """``r_k`` with ``r(phi) = sum_k lam^k r_k`` for ``k <= order``; shape (order+1, N)."""
    V = _as_V(V)
    phi = np.asarray(phi, dtype=float)
    grad = V.V.gradient()
    coeffs = np.zeros((order + 1, len(phi)))
    coeffs[0] = phi
    for k in range(1, order + 1):
        vk = np.array([_series_eval(g, coeffs[:k])[k - 1].real for g in grad])
        coeffs[k] = gs.retarded @ vk
    return coeffs


# --- interacting Green functions and bracket ---------------------------------

def interacting_green(V, m: int, gs: GreenSet, phi) -> list:
    """``[E+ (V'' E+)^n for n <= m]`` with ``V''`` evaluated at ``phi``."""
    V = _as_V(V)
    V2 = V.second(phi)
    out = [gs.retarded.copy()]
    for _ in range(m):
        out.append(out[-1] @ V2 @ gs.retarded)
    return out


def interacting_commutator(V, m: int, gs: GreenSet, phi) -> list:
    return [G.T - G for G in interacting_green(V, m, gs, phi)]


def neumann_residuals(V, m: int, gs: GreenSet, phi) -> list:
    """Per-order max-norm of ``(P - lam K V'') E+_lamV - K`` for orders ``0..m``."""
    V = _as_V(V)
    G = interacting_green(V, m, gs, phi)
    P, K = gs.op.P, gs.op.K
    KV2 = K @ V.second(phi)
    res = []
    for n in range(m + 1):
        term = P @ G[n] - (KV2 @ G[n - 1] if n else 0.0) - (K if n == 0 else 0.0)
        res.append(float(np.max(np.abs(term))))
    return res


def interacting_bracket(F, G, V, m: int, gs: GreenSet, phi) -> np.ndarray:
    """Lambda-coefficients of ``{F, G}_lamV`` at ``phi`` with ``E_lamV`` frozen at ``phi``."""
    dF, dG = F.derivative(1, phi), G.derivative(1, phi)
    return np.array([dF @ E @ dG for E in interacting_commutator(V, m, gs, phi)])


def _commutator_gradient(V, m, gs, phi):
    """``d_l E_n`` as arrays of shape (N, N, N) (first axis ``l``), orders ``0..m``."""
    V = _as_V(V)
    G = interacting_green(V, m, gs, phi)
    V3 = V.third(phi)
    n = gs.size
    out = []
    for order in range(m + 1):
        dG = np.zeros((n, n, n))
        for a in range(order):
            b = order - 1 - a
            dG += np.einsum("ij,ljk,km->lim", G[a], V3, G[b])
        out.append(np.transpose(dG, (0, 2, 1)) - dG)
    return out


def jacobi_residuals(F, G, H, V, m: int, gs: GreenSet, phi) -> np.ndarray:
    """Per-order absolute residual of the Jacobi identity of ``{.,.}_lamV`` at ``phi``.

    The bracket ``{G, H}`` is differentiated with the variation rule
    ``d_l E+_lamV = lam E+_lamV V'''_l E+_lamV``.
    """
    phi = np.asarray(phi, dtype=float)
    E = interacting_commutator(V, m, gs, phi)
    dE = _commutator_gradient(V, m, gs, phi)
    d1 = {k: X.derivative(1, phi) for k, X in zip("FGH", (F, G, H))}
    d2 = {k: X.derivative(2, phi) for k, X in zip("FGH", (F, G, H))}

    def grad_bracket(a, b, order):
        return (d2[a] @ E[order] @ d1[b] + np.einsum("i,lij,j->l", d1[a], dE[order], d1[b])
                + d2[b] @ E[order].T @ d1[a])

    res = np.zeros(m + 1)
    for order in range(m + 1):
        total = 0j
        for x, y, z in (("F", "G", "H"), ("G", "H", "F"), ("H", "F", "G")):
            for a in range(order + 1):
                total += d1[x] @ E[a] @ grad_bracket(y, z, order - a)
        res[order] = abs(total)
    return res


# --- exact polynomial versions (small N) -------------------------------------

def _matvec(A, comps, size):
    """``sum_j A_ij comps[j]`` for a numeric matrix and a list of PolyFunctionals."""
    out = []
    for i in range(A.shape[0]):
        acc: dict = {}
        for j in np.flatnonzero(A[i]):
            a = complex(A[i, j])
            for mono, c in comps[j].terms.items():
                acc[mono] = acc.get(mono, 0j) + a * c
        out.append(PolyFunctional._raw(size, acc))
    return out


def _poly_matvec(Vrows, comps, size):
    """``sum_l V_kl comps[l]`` for a matrix of PolyFunctionals."""
    out = []
    for row in Vrows:
        acc = PolyFunctional.zero(size)
        for l, entry in row:
            acc = acc + entry * comps[l]
        out.append(acc)
    return out


def _hessian_polys(V: PolyFunctional):
    grads = V.gradient()
    rows = []
    for gk in grads:
        row = []
        for l, hkl in enumerate(gk.gradient()):
            if not hkl.is_zero():
                row.append((l, hkl))
        rows.append(row)
    return rows


def interacting_bracket_series(F, G, V, m: int, gs: GreenSet) -> list:
    """Exact lambda-coefficients of ``{F, G}_lamV`` as polynomials in ``phi``."""
    V = _as_V(V)
    n = F.size
    hess = _hessian_polys(V.V)
    gradF, gradG = F.gradient(), G.gradient()

    def chains(w):
        # E+ (V'' E+)^k w for k = 0..m
        x = _matvec(gs.retarded, w, n)
        out = [x]
        for _ in range(m):
            x = _matvec(gs.retarded, _poly_matvec(hess, x, n), n)
            out.append(x)
        return out

    def dot(a, b):
        acc = PolyFunctional.zero(n)
        for ai, bi in zip(a, b):
            if not ai.is_zero() and not bi.is_zero():
                acc = acc + ai * bi
        return acc

    cg, cf = chains(gradG), chains(gradF)
    # F_i (G_n^T - G_n)_ij G_j = (G_n F')_j G_j - F_i (G_n G')_i
    return [dot(cf[k], gradG) - dot(gradF, cg[k]) for k in range(m + 1)]


def _identity_components(n):
    return [PolyFunctional.linear(np.eye(n)[i]) for i in range(n)]


def compose_series(F: PolyFunctional, comp_series: list, order: int) -> list:
    """Lambda-coefficients of ``F(sum_k lam^k X_k)``; ``comp_series[k]`` is a list of N polys."""
    n = comp_series[0][0].size
    zero = PolyFunctional.zero(n)
    powers: dict = {}

    def mul(a, b):
        out = [zero] * (order + 1)
        for i, x in enumerate(a):
            if x.is_zero():
                continue
            for j in range(order + 1 - i):
                if not b[j].is_zero():
                    out[i + j] = out[i + j] + x * b[j]
        return out

    def var(i):
        return [comp_series[k][i] if k < len(comp_series) else zero for k in range(order + 1)]

    def power(i, k):
        if (i, k) not in powers:
            powers[(i, k)] = var(i) if k == 1 else mul(power(i, k - 1), var(i))
        return powers[(i, k)]

    out = [zero] * (order + 1)
    for mono, c in F.terms.items():
        term = [PolyFunctional.constant(n, c)] + [zero] * order
        counts: dict = {}
        for i in mono:
            counts[i] = counts.get(i, 0) + 1
        for i, k in counts.items():
            term = mul(term, power(i, k))
        out = [o + t for o, t in zip(out, term)]
    return out


def moller_series(V, gs: GreenSet, order: int) -> list:
    """Components of ``r(phi)`` per lambda order as exact polynomials."""
    V = _as_V(V)
    n = gs.size
    series = [_identity_components(n)]
    grad = V.V.gradient()
    for k in range(1, order + 1):
        vk = [compose_series(g, series, k - 1)[k - 1] for g in grad]
        series.append(_matvec(gs.retarded, vk, n))
    return series


def moller_inverse_series(V, gs: GreenSet) -> list:
    V = _as_V(V)
    n = gs.size
    return [_identity_components(n), [X.scale(-1.0) for X in _matvec(gs.retarded, V.V.gradient(), n)]]


def pullback_classical(F: PolyFunctional, V, gs: GreenSet, order: int) -> list:
    """Lambda-coefficients of ``F o r``."""
    return compose_series(F, moller_series(V, gs, order), order)


def pullback_inverse(Fs: list, V, gs: GreenSet, order: int) -> list:
    """Lambda-coefficients of ``X o r^-1`` for a lambda-series ``Fs`` of polynomials."""
    inv = moller_inverse_series(V, gs)
    n = gs.size
    out = [PolyFunctional.zero(n)] * (order + 1)
    for q, X in enumerate(Fs[: order + 1]):
        part = compose_series(X, inv, order - q)
        for k, Y in enumerate(part):
            out[q + k] = out[q + k] + Y
    return out


def intertwined_bracket_series(F, G, V, gs: GreenSet, order: int) -> list:
    """Lambda-coefficients of ``r^-1 {r F, r G}`` (free bracket in the middle)."""
    rF, rG = pullback_classical(F, V, gs, order), pullback_classical(G, V, gs, order)
    n = gs.size
    mid = [PolyFunctional.zero(n)] * (order + 1)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            mid[a + b] = mid[a + b] + peierls(rF[a], rG[b], gs)
    return pullback_inverse(mid, V, gs, order)
