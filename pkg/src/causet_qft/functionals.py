"""Polynomial observables on R^N, the contraction engine, and formal series in hbar and lambda."""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from typing import Callable, Iterable

import numpy as np

from . import _backend

DEGREE_CAP = 12
PHYSICAL_TOL = 1e-10


class DegreeCapError(ValueError):
    pass


class SeriesBoundError(ValueError):
    """A term fell below the minimal allowed power of hbar."""


def _as_nested(M, n):
    M = np.asarray(M, dtype=np.complex128)
    if M.shape != (n, n):
        raise ValueError(f"kernel has shape {M.shape}, expected {(n, n)}")
    return M


class PolyFunctional:
    """Complex polynomial on R^N stored as sorted multi-index -> coefficient.

    The empty multi-index holds the constant term. Instances are treated as
    immutable.
    """

    __slots__ = ("size", "terms", "_groups")

    def __init__(self, size: int, terms=None, *, cap: int | None = DEGREE_CAP):
        self.size = int(size)
        self._groups = None
        acc: dict = {}
        items = terms.items() if isinstance(terms, dict) else (terms or ())
        for idx, c in items:
            key = tuple(sorted(int(i) for i in idx))
            if key and (key[0] < 0 or key[-1] >= self.size):
                raise IndexError(f"multi-index {key} outside [0, {self.size})")
            acc[key] = acc.get(key, 0j) + complex(c)
        self.terms = {k: v for k, v in acc.items() if v != 0}
        if cap is not None and self.degree > cap:
            raise DegreeCapError(f"degree {self.degree} exceeds cap {cap}")

    @classmethod
    def _raw(cls, size, terms, cap=DEGREE_CAP):
        obj = cls.__new__(cls)
        obj.size = size
        obj._groups = None
        obj.terms = {k: v for k, v in terms.items() if v != 0}
        if cap is not None and obj.degree > cap:
            raise DegreeCapError(f"degree {obj.degree} exceeds cap {cap}")
        return obj

    # --- constructors ---------------------------------------------------
    @classmethod
    def zero(cls, size):
        return cls._raw(size, {})

    @classmethod
    def constant(cls, size, value=1.0):
        return cls._raw(size, {(): complex(value)})

    @classmethod
    def linear(cls, g):
        """``Phi_g(phi) = g . phi``."""
        g = np.asarray(g)
        return cls._raw(len(g), {(i,): complex(c) for i, c in enumerate(g)})

    @classmethod
    def quadratic(cls, A):
        """``phi^T A phi``."""
        A = np.asarray(A)
        n = A.shape[0]
        terms = {}
        for i in range(n):
            for j in range(n):
                if A[i, j] != 0:
                    key = (i, j) if i <= j else (j, i)
                    terms[key] = terms.get(key, 0j) + complex(A[i, j])
        return cls._raw(n, terms)

    @classmethod
    def hadamard_monomial(cls, g, m: int):
        """Local monomial ``sum_i g_i phi_i**m``."""
        if m < 1:
            raise ValueError("power must be >= 1")
        g = np.asarray(g)
        return cls._raw(len(g), {(i,) * m: complex(c) for i, c in enumerate(g)})

    @classmethod
    def monomial(cls, size, idx, c=1.0):
        return cls(size, {tuple(idx): c})

    # --- basic queries --------------------------------------------------
    @property
    def degree(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    @property
    def const(self) -> complex:
        return self.terms.get((), 0j)

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def support(self) -> set:
        """Indices the functional depends on."""
        return {i for k in self.terms for i in k}

    def is_real(self, tol: float = 0.0) -> bool:
        return all(abs(c.imag) <= tol for c in self.terms.values())

    def homogeneous(self, k: int) -> "PolyFunctional":
        return PolyFunctional._raw(self.size, {m: c for m, c in self.terms.items() if len(m) == k})

    def chop(self, tol: float) -> "PolyFunctional":
        return PolyFunctional._raw(self.size, {m: c for m, c in self.terms.items() if abs(c) > tol})

    def __repr__(self):
        return f"PolyFunctional(size={self.size}, degree={self.degree}, terms={len(self.terms)})"

    # --- evaluation -----------------------------------------------------
    def _grouped(self):
        if self._groups is None:
            by_deg = defaultdict(list)
            for m, c in self.terms.items():
                by_deg[len(m)].append((m, c))
            groups = []
            for k, items in by_deg.items():
                idx = np.array([m for m, _ in items], dtype=np.int64).reshape(len(items), k)
                groups.append((idx, np.array([c for _, c in items], dtype=np.complex128)))
            self._groups = groups
        return self._groups

    def evaluate(self, phi) -> complex:
        phi = np.asarray(phi)
        total = 0j
        for idx, coef in self._grouped():
            total += complex(coef @ np.prod(phi[idx], axis=1))
        return total

    __call__ = evaluate

    def derivative(self, order: int, phi) -> np.ndarray:
        """Symmetric tensor of ``order``-th derivatives at ``phi``."""
        if order < 1:
            raise ValueError("order must be >= 1")
        phi = np.asarray(phi)
        out = np.zeros((self.size,) * order, dtype=np.complex128)
        for mono, c in self.terms.items():
            if len(mono) < order:
                continue
            counts = _counts(mono)
            for beta in itertools.combinations_with_replacement(sorted(counts), order):
                bc = _counts(beta)
                if any(bc[i] > counts[i] for i in bc):
                    continue
                factor = 1
                rest = 1.0 + 0j
                for i, a in counts.items():
                    b = bc.get(i, 0)
                    factor *= math.perm(a, b)
                    rest *= phi[i] ** (a - b)
                val = c * factor * rest
                for perm in set(itertools.permutations(beta)):
                    out[perm] += val
        return out

    def gradient_at(self, phi) -> np.ndarray:
        return self.derivative(1, phi)

    def partial(self, i: int) -> "PolyFunctional":
        out = {}
        for mono, c in self.terms.items():
            for j, mult, rest in _backend.kernels.removals(mono):
                if j == i:
                    out[rest] = out.get(rest, 0j) + c * mult
        return PolyFunctional._raw(self.size, out)

    def gradient(self) -> list:
        parts = [dict() for _ in range(self.size)]
        for mono, c in self.terms.items():
            for j, mult, rest in _backend.kernels.removals(mono):
                parts[j][rest] = parts[j].get(rest, 0j) + c * mult
        return [PolyFunctional._raw(self.size, p) for p in parts]

    # --- algebra --------------------------------------------------------
    def _check(self, other):
        if self.size != other.size:
            raise ValueError(f"size mismatch {self.size} vs {other.size}")

    def __add__(self, other):
        if not isinstance(other, PolyFunctional):
            other = PolyFunctional.constant(self.size, other)
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0j) + c
        return PolyFunctional._raw(self.size, out)

    __radd__ = __add__

    def __neg__(self):
        return PolyFunctional._raw(self.size, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, s) -> "PolyFunctional":
        s = complex(s)
        if s == 0:
            return PolyFunctional.zero(self.size)
        return PolyFunctional._raw(self.size, {m: c * s for m, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, PolyFunctional):
            return pointwise_product(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def conj(self) -> "PolyFunctional":
        return PolyFunctional._raw(self.size, {m: c.conjugate() for m, c in self.terms.items()})

    def max_abs_diff(self, other) -> float:
        return (self - other).max_abs()

    def pullback(self, A) -> "PolyFunctional":
        """``phi -> F(A phi)`` for a square matrix ``A``."""
        A = np.asarray(A)
        rows = [PolyFunctional.linear(A[i]) for i in range(A.shape[0])]
        return compose(self, rows)

    # --- JSON -----------------------------------------------------------
    def to_dict(self) -> dict:
        c0 = self.const
        terms = [{"idx": list(m), "c": [c.real, c.imag]} for m, c in sorted(self.terms.items()) if m]
        return {"size": self.size, "constant": [c0.real, c0.imag], "terms": terms}

    @classmethod
    def from_dict(cls, data, size=None):
        n = int(data.get("size", size if size is not None else 0))
        c0 = data.get("constant", [0.0, 0.0])
        items = [((), complex(c0[0], c0[1]))]
        items += [(t["idx"], complex(t["c"][0], t["c"][1])) for t in data.get("terms", [])]
        return cls(n, items)


def _counts(mono) -> dict:
    out: dict = {}
    for i in mono:
        out[i] = out.get(i, 0) + 1
    return out


def pointwise_product(F: PolyFunctional, G: PolyFunctional) -> PolyFunctional:
    F._check(G)
    return PolyFunctional._raw(F.size, _backend.kernels.bilinear(F.terms, G.terms, [[0j]], 0)[0])


def contract_orders(F: PolyFunctional, G: PolyFunctional, M, nmax: int) -> list:
    """``[m o D_M^n (F x G) for n in 0..nmax]`` with ``D_M = sum_ij M_ij d_i x d_j``."""
    F._check(G)
    nmax = max(0, min(nmax, F.degree, G.degree))
    M = _as_nested(M, F.size)
    raw = _backend.kernels.bilinear(F.terms, G.terms, M, nmax)
    return [PolyFunctional._raw(F.size, r) for r in raw]


def contract(F: PolyFunctional, G: PolyFunctional, M, n: int) -> PolyFunctional:
    if n < 0:
        raise ValueError("order must be >= 0")
    if n > min(F.degree, G.degree):
        return PolyFunctional.zero(F.size)
    return contract_orders(F, G, M, n)[n]


def self_contract(F: PolyFunctional, H) -> PolyFunctional:
    """``sum_ij H_ij d_i d_j F``."""
    H = _as_nested(H, F.size)
    return PolyFunctional._raw(F.size, _backend.kernels.self_contract(F.terms, H))


def compose(F: PolyFunctional, components) -> PolyFunctional:
    """Substitute ``phi_i -> components[i]`` (a list of PolyFunctionals) into F."""
    if len(components) != F.size:
        raise ValueError("need one component per variable")
    n = components[0].size if components else F.size
    cache = {}

    def power(i, k):
        key = (i, k)
        if key not in cache:
            cache[key] = components[i] if k == 1 else power(i, k - 1) * components[i]
        return cache[key]

    out = PolyFunctional.zero(n)
    for mono, c in F.terms.items():
        term = PolyFunctional.constant(n, c)
        for i, k in _counts(mono).items():
            term = term * power(i, k)
        out = out + term
    return out


# --- formal series ---------------------------------------------------------

class FormalSeries:
    """Truncated series ``sum hbar^p lambda^q F_pq``.

    Parameters
    ----------
    size : int
        Number of field variables.
    coeffs : dict
        ``(p, q) -> PolyFunctional``.
    ohbar, olambda : int
        Highest retained powers.
    min_hbar : int, optional
        Lowest allowed power of hbar; defaults to ``-olambda``.
    """

    __slots__ = ("size", "coeffs", "ohbar", "olambda", "min_hbar", "truncated", "negative_residual")

    def __init__(self, size, coeffs=None, ohbar=2, olambda=0, min_hbar=None, truncated=False):
        self.size = int(size)
        self.ohbar = int(ohbar)
        self.olambda = int(olambda)
        self.min_hbar = -self.olambda if min_hbar is None else int(min_hbar)
        self.truncated = bool(truncated)
        self.negative_residual = 0.0
        self.coeffs = {}
        for (p, q), F in (coeffs or {}).items():
            self._put(int(p), int(q), F)

    def _put(self, p, q, F):
        if F.is_zero():
            return
        if p < self.min_hbar:
            raise SeriesBoundError(f"hbar power {p} below the minimum {self.min_hbar}")
        if q < 0:
            raise SeriesBoundError("negative lambda power")
        if p > self.ohbar or q > self.olambda:
            self.truncated = True
            return
        key = (p, q)
        self.coeffs[key] = self.coeffs[key] + F if key in self.coeffs else F

    def _like(self, coeffs=None, truncated=None):
        out = FormalSeries(self.size, None, self.ohbar, self.olambda, self.min_hbar,
                           self.truncated if truncated is None else truncated)
        for key, F in (coeffs or {}).items():
            out._put(*key, F)
        return out

    @classmethod
    def from_poly(cls, F: PolyFunctional, ohbar=2, olambda=0, p=0, q=0, min_hbar=None):
        return cls(F.size, {(p, q): F}, ohbar, olambda, min_hbar)

    @classmethod
    def unit(cls, size, ohbar=2, olambda=0, min_hbar=None):
        return cls.from_poly(PolyFunctional.constant(size, 1.0), ohbar, olambda, min_hbar=min_hbar)

    def __repr__(self):
        keys = sorted(self.coeffs)
        return f"FormalSeries(size={self.size}, orders=(h{self.ohbar}, l{self.olambda}), cells={keys})"

    def __getitem__(self, key) -> PolyFunctional:
        return self.coeffs.get(tuple(key), PolyFunctional.zero(self.size))

    def keys(self):
        return sorted(self.coeffs)

    def lambda_part(self, q: int) -> "FormalSeries":
        """The coefficient of ``lambda^q`` as a lambda-free series."""
        out = FormalSeries(self.size, None, self.ohbar, 0, self.min_hbar, self.truncated)
        for (p, r), F in self.coeffs.items():
            if r == q:
                out._put(p, 0, F)
        return out

    def with_orders(self, ohbar=None, olambda=None, min_hbar=None) -> "FormalSeries":
        """Copy with new truncation orders; terms beyond them are dropped."""
        out = FormalSeries(self.size, None, self.ohbar if ohbar is None else ohbar,
                           self.olambda if olambda is None else olambda,
                           self.min_hbar if min_hbar is None else min_hbar, self.truncated)
        for (p, q), F in self.coeffs.items():
            out._put(p, q, F)
        return out

    def shift(self, dp: int = 0, dq: int = 0) -> "FormalSeries":
        """Multiply by ``hbar^dp lambda^dq``."""
        out = self._like()
        for (p, q), F in self.coeffs.items():
            out._put(p + dp, q + dq, F)
        return out

    def __add__(self, other):
        if isinstance(other, PolyFunctional):
            other = FormalSeries.from_poly(other, self.ohbar, self.olambda, min_hbar=self.min_hbar)
        out = self._like(self.coeffs, truncated=self.truncated or other.truncated)
        for (p, q), F in other.coeffs.items():
            out._put(p, q, F)
        return out

    def __neg__(self):
        return self._like({k: -F for k, F in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s) -> "FormalSeries":
        return self._like({k: F.scale(s) for k, F in self.coeffs.items()})

    def __mul__(self, s):
        if isinstance(s, (FormalSeries, PolyFunctional)):
            raise TypeError("use multiply(...) with an explicit product rule")
        return self.scale(s)

    __rmul__ = __mul__

    def conj(self) -> "FormalSeries":
        return self._like({k: F.conj() for k, F in self.coeffs.items()})

    def map(self, fn: Callable[[PolyFunctional], PolyFunctional]) -> "FormalSeries":
        return self._like({k: fn(F) for k, F in self.coeffs.items()})

    def multiply(self, other: "FormalSeries", rule=None) -> "FormalSeries":
        """Graded product; ``rule(F, G, nmax)`` returns the hbar-coefficients of F*G.

        Without a rule the pointwise product is used.
        """
        if self.size != other.size:
            raise ValueError("size mismatch")
        out = FormalSeries(self.size, None, self.ohbar, self.olambda, min(self.min_hbar, other.min_hbar),
                           self.truncated or other.truncated)
        acc: dict = {}
        for (p1, q1), F in self.coeffs.items():
            for (p2, q2), G in other.coeffs.items():
                q = q1 + q2
                if q > self.olambda:
                    out.truncated = True
                    continue
                room = self.ohbar - p1 - p2
                if room < 0:
                    out.truncated = True
                    continue
                if rule is None:
                    parts = [pointwise_product(F, G)]
                else:
                    parts = rule(F, G, room)
                    if room < min(F.degree, G.degree):
                        out.truncated = True
                for s, X in enumerate(parts):
                    if X.is_zero():
                        continue
                    key = (p1 + p2 + s, q)
                    acc.setdefault(key, []).append(X)
        for (p, q), parts in acc.items():
            total = parts[0]
            for X in parts[1:]:
                total = total + X
            out._put(p, q, total)
        return out

    def evaluate(self, phi) -> dict:
        """``{(p, q): complex}`` for every stored cell."""
        return {k: F.evaluate(phi) for k, F in sorted(self.coeffs.items())}

    def at_zero(self) -> dict:
        return {k: F.const for k, F in sorted(self.coeffs.items())}

    def substitute_hbar(self, hbar: float) -> dict:
        """``{q: PolyFunctional}`` after setting hbar to a number."""
        out: dict = {}
        for (p, q), F in self.coeffs.items():
            X = F.scale(hbar ** p)
            out[q] = out[q] + X if q in out else X
        return out

    def max_abs(self) -> float:
        return max((F.max_abs() for F in self.coeffs.values()), default=0.0)

    def max_abs_diff(self, other: "FormalSeries") -> float:
        keys = set(self.coeffs) | set(other.coeffs)
        return max((self[k].max_abs_diff(other[k]) for k in keys), default=0.0)

    def negative_hbar_norm(self) -> float:
        return max((F.max_abs() for (p, _), F in self.coeffs.items() if p < 0), default=0.0)

    def is_physical(self, tol: float = PHYSICAL_TOL) -> bool:
        return self.negative_hbar_norm() <= tol

    def drop_negative_hbar(self) -> "FormalSeries":
        out = FormalSeries(self.size, None, self.ohbar, self.olambda, 0, self.truncated)
        for (p, q), F in self.coeffs.items():
            if p >= 0:
                out._put(p, q, F)
        out.negative_residual = self.negative_hbar_norm()
        return out

    def chop(self, tol: float) -> "FormalSeries":
        return self._like({k: F.chop(tol) for k, F in self.coeffs.items()})

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "truncation": {"ohbar": self.ohbar, "olambda": self.olambda, "min_hbar": self.min_hbar,
                           "truncated": self.truncated},
            "coefficients": {f"h{p}_l{q}": F.to_dict() for (p, q), F in sorted(self.coeffs.items())},
        }

    @classmethod
    def from_dict(cls, data) -> "FormalSeries":
        tr = data["truncation"]
        out = cls(data["size"], None, tr["ohbar"], tr["olambda"], tr.get("min_hbar"), tr.get("truncated", False))
        for key, F in data["coefficients"].items():
            p, q = parse_cell(key)
            out._put(p, q, PolyFunctional.from_dict(F, data["size"]))
        return out


def parse_cell(key: str) -> tuple:
    h, l = key.split("_")
    return int(h[1:]), int(l[1:])


def cell_name(p: int, q: int) -> str:
    return f"h{p}_l{q}"


class ExpRule:
    """Product rule ``m o exp(hbar * scale * D_M)`` returning its hbar-coefficients."""

    def __init__(self, M, scale=1.0):
        self.M = np.asarray(M, dtype=np.complex128)
        self.scale = complex(scale)

    def __call__(self, F, G, nmax):
        parts = contract_orders(F, G, self.M, nmax)
        return [X.scale(self.scale ** n / math.factorial(n)) if n else X for n, X in enumerate(parts)]

    def product(self, F, G, ohbar=None) -> FormalSeries:
        """Product of two polynomials as a lambda-free series (all orders if ``ohbar`` is None)."""
        nmax = min(F.degree, G.degree) if ohbar is None else ohbar
        return FormalSeries.from_poly(F, nmax, 0).multiply(FormalSeries.from_poly(G, nmax, 0), self)


def as_series(x, like: FormalSeries) -> FormalSeries:
    if isinstance(x, FormalSeries):
        return x
    return FormalSeries.from_poly(x, like.ohbar, like.olambda, min_hbar=like.min_hbar)


def series_sum(items: Iterable[FormalSeries], like: FormalSeries) -> FormalSeries:
    out = like._like()
    for s in items:
        out = out + s
    return out
