"""Time-ordered products, the formal S-matrix, quantum Moller maps and interacting correlators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical import Interaction
from .functionals import PHYSICAL_TOL, ExpRule, FormalSeries, PolyFunctional
from .operators import GreenSet
from .quantization import TwoPoint, wick_rule

FEYNMAN_CONVENTIONS = ("retarded", "literal")


class PhysicalityError(ArithmeticError):
    """Negative powers of hbar survived in a result that must be a formal power series."""


@dataclass(frozen=True, eq=False)
class FeynmanPropagator:
    DF: np.ndarray
    convention: str = "retarded"

    def rule(self) -> ExpRule:
        return ExpRule(self.DF, 1.0)


def feynman(tp: TwoPoint, gs: GreenSet, convention: str = "retarded") -> FeynmanPropagator:
    """Feynman propagator of the two-point function ``tp``.

    ``retarded`` (default) is ``H - (i/2)(E+ + E-)``, for which
    ``DF - W = -i E-`` and the quantum Moller map reduces to the retarded
    classical one at hbar^0. ``literal`` is ``H + (i/2)(E+ + E-)``
    (``DF - W = i E+``); it is kept for comparison.
    """
    if convention not in FEYNMAN_CONVENTIONS:
        raise ValueError(f"convention must be one of {FEYNMAN_CONVENTIONS}")
    sign = -1.0 if convention == "retarded" else 1.0
    DF = sign * 0.5j * (gs.retarded + gs.advanced) + tp.H
    return FeynmanPropagator(DF, convention)


def time_ordered(F: PolyFunctional, G: PolyFunctional, fp: FeynmanPropagator) -> FormalSeries:
    """``sum_n (hbar^n / n!) contract(F, G, DF, n)``."""
    return fp.rule().product(F, G)


def _V(V):
    return V.V if isinstance(V, Interaction) else V


def smatrix(V, orders, fp: FeynmanPropagator) -> FormalSeries:
    """``sum_n lambda^n i^n / (hbar^n n!) V.T ... .T V`` truncated at ``orders = (O_hbar, O_lambda)``."""
    ohbar, olambda = orders
    V = _V(V)
    n = V.size
    rule = fp.rule()
    step = FormalSeries(n, {(-1, 1): V.scale(1j)}, ohbar, olambda)
    out = FormalSeries.unit(n, ohbar, olambda)
    power = FormalSeries.unit(n, ohbar, olambda)
    for k in range(1, olambda + 1):
        power = power.multiply(step, rule).scale(1.0 / k)
        out = out + power
    return out


def smatrix_inverse(S: FormalSeries, tp: TwoPoint) -> FormalSeries:
    """Order-by-order inverse for the Wick product: ``t_n = -s_n - sum_{j<n} t_j * s_{n-j}``."""
    rule = wick_rule(tp)
    lead = S.lambda_part(0)
    unit = FormalSeries.unit(S.size, S.ohbar, 0)
    if lead.max_abs_diff(unit) > 1e-14:
        raise ValueError("lambda^0 part of the S-matrix is not the unit")
    parts = [S.lambda_part(q).with_orders(olambda=S.olambda, min_hbar=S.min_hbar).shift(dq=q)
             for q in range(S.olambda + 1)]
    inv = [None] * (S.olambda + 1)
    inv[0] = parts[0]
    for k in range(1, S.olambda + 1):
        acc = -parts[k]
        for j in range(1, k):
            acc = acc - inv[j].multiply(parts[k - j], rule)
        inv[k] = acc
    out = inv[0]
    for k in range(1, S.olambda + 1):
        out = out + inv[k]
    return out


class InteractingTheory:
    """Perturbative interacting theory for a fixed interaction and truncation.

    Intermediate products keep hbar powers up to ``ohbar + olambda`` so that
    the cancellation of negative powers is complete at the retained orders.
    """

    def __init__(self, V, tp: TwoPoint, fp: FeynmanPropagator, ohbar: int = 2, olambda: int = 2,
                 tol: float = PHYSICAL_TOL):
        self.V = _V(V)
        self.size = self.V.size
        self.tp, self.fp = tp, fp
        self.ohbar, self.olambda = ohbar, olambda
        self.work = ohbar + olambda
        self.tol = tol
        self.wick = wick_rule(tp)
        self.tord = fp.rule()
        self.S = smatrix(self.V, (self.work, olambda), fp)
        self.Sinv = smatrix_inverse(self.S, tp)
        self._moller_cache: dict = {}

    def _series(self, F, ohbar=None):
        if isinstance(F, PolyFunctional):
            return FormalSeries.from_poly(F, self.ohbar if ohbar is None else ohbar, self.olambda)
        return F

    def _physical(self, X: FormalSeries) -> FormalSeries:
        out = X.with_orders(ohbar=self.ohbar).drop_negative_hbar()
        if out.negative_residual > self.tol * max(1.0, X.max_abs()):
            raise PhysicalityError(f"negative hbar coefficients of size {out.negative_residual:.3e}")
        return out

    def _truncated_pair(self, olambda):
        if olambda not in self._moller_cache:
            self._moller_cache[olambda] = (self.S.with_orders(olambda=olambda),
                                           self.Sinv.with_orders(olambda=olambda))
        return self._moller_cache[olambda]

    def moller(self, F, olambda: int | None = None) -> FormalSeries:
        """``S^-1 *_H (S .T F)``; F is a PolyFunctional or a series in (hbar, lambda).

        ``olambda`` lowers the lambda truncation for this call only.
        """
        m = self.olambda if olambda is None else olambda
        S, Sinv = self._truncated_pair(m)
        G = self._series(F).with_orders(ohbar=self.work, olambda=m, min_hbar=-m)
        inner = S.multiply(G, self.tord)
        out = self._physical(Sinv.multiply(inner, self.wick))
        return out.with_orders(olambda=self.olambda)

    def moller_inverse(self, G: FormalSeries) -> FormalSeries:
        """Inverse Moller map by recursion in lambda (``R = id + O(lambda)``)."""
        G = self._series(G)
        xs, moved = [], []
        for n in range(self.olambda + 1):
            X = G.lambda_part(n)
            for k in range(1, n + 1):
                X = X - moved[n - k].lambda_part(k)
            xs.append(X)
            if n < self.olambda:
                moved.append(self.moller(X, olambda=self.olambda - n))
        out = FormalSeries(self.size, None, self.ohbar, self.olambda, 0)
        for n, X in enumerate(xs):
            out = out + X.with_orders(olambda=self.olambda, min_hbar=0).shift(dq=n)
        return out

    def star_free(self, A, B) -> FormalSeries:
        return self._series(A).multiply(self._series(B), self.wick)

    def star_int(self, F, G) -> FormalSeries:
        """``R^-1(R F *_H R G)``."""
        return self.moller_inverse(self.star_free(self.moller(F), self.moller(G)))

    def state(self, F) -> dict:
        """``omega_int(F) = omega_0(R F)`` cell by cell."""
        return self.moller(F).at_zero()

    def npoint(self, vectors) -> tuple:
        """Interacting n-point function computed two ways.

        Returns
        -------
        direct : FormalSeries
            ``omega_0(R Phi_1 *_H ... *_H R Phi_n)`` as constants.
        pulled : FormalSeries
            ``omega_0 o R`` of ``Phi_1 *_int ... *_int Phi_n``.
        """
        fields = [PolyFunctional.linear(np.asarray(v, dtype=float)) for v in vectors]
        acc = self.moller(fields[0])
        for F in fields[1:]:
            acc = self.star_free(acc, self.moller(F))
        direct = _constants(acc)
        acc = self._series(fields[0])
        for F in fields[1:]:
            acc = self.star_int(acc, F)
        pulled = _constants(self.moller(acc))
        return direct, pulled


def _constants(S: FormalSeries) -> FormalSeries:
    out = FormalSeries(S.size, None, S.ohbar, S.olambda, S.min_hbar, S.truncated)
    for (p, q), F in S.coeffs.items():
        if F.const != 0:
            out._put(p, q, PolyFunctional.constant(S.size, F.const))
    return out


def moller_quantum(F, V, orders, tp: TwoPoint, fp: FeynmanPropagator) -> FormalSeries:
    ohbar, olambda = orders
    return InteractingTheory(V, tp, fp, ohbar, olambda).moller(F)


def star_int(F, G, V, orders, tp: TwoPoint, fp: FeynmanPropagator) -> FormalSeries:
    ohbar, olambda = orders
    return InteractingTheory(V, tp, fp, ohbar, olambda).star_int(F, G)


def npoint_interacting(vectors, V, orders, tp: TwoPoint, fp: FeynmanPropagator, tol: float = 1e-10):
    """Interacting correlator; raises if the two composition orders disagree beyond ``tol``."""
    ohbar, olambda = orders
    direct, pulled = InteractingTheory(V, tp, fp, ohbar, olambda).npoint(vectors)
    gap = direct.max_abs_diff(pulled)
    if gap > tol * max(1.0, direct.max_abs()):
        raise ArithmeticError(f"composition orders disagree by {gap:.3e}")
    return direct


def correlator_json(S: FormalSeries) -> dict:
    orders = {f"h{p}_l{q}": [v.real, v.imag] for (p, q), v in sorted(S.at_zero().items())}
    return {
        "orders": orders,
        "truncation": {"ohbar": S.ohbar, "olambda": S.olambda, "truncated": S.truncated},
        "physical": bool(S.is_physical()),
    }
