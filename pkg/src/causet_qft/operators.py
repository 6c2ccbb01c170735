"""Discrete wave operators, Green operators, the Cauchy problem and relative Cauchy evolution."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .causet import PAST, FUTURE, CausalSet, PreferredPast


class SingularOperatorError(ArithmeticError):
    pass


class PreconditionError(ValueError):
    def __init__(self, message, indices=()):
        self.indices = [int(i) for i in indices]
        super().__init__(f"{message}: {self.indices}" if self.indices else message)


@dataclass(frozen=True, eq=False)
class WaveOperator:
    """Retarded pair ``(P, K)`` with boundary depth ``k``.

    ``boundary`` lists the k-layer past infinity on which ``P`` has identity rows.
    """

    P: np.ndarray
    K: np.ndarray
    k: int
    kind: str
    causet: CausalSet = field(repr=False)
    boundary: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.boundary is None:
            object.__setattr__(self, "boundary", self.causet.infinity(self.k, PAST)[0])

    @property
    def size(self) -> int:
        return self.P.shape[0]

    def check(self, tol: float = 0.0) -> None:
        """Assert retardedness and the boundary-row structure."""
        allowed = self.causet.causal | np.eye(self.size, dtype=bool)
        if np.any(np.abs(self.P[~allowed]) > tol) or np.any(np.abs(self.K[~allowed]) > tol):
            raise AssertionError("operator is not retarded")
        if np.any(np.diag(self.P) == 0):
            raise AssertionError("P has a vanishing diagonal entry")
        eye = np.eye(self.size)
        for p in self.boundary:
            if not np.array_equal(self.P[p], eye[p]) or not np.array_equal(self.K[p], eye[p]):
                raise AssertionError(f"row {p} on the boundary is not an identity row")


def _boundary_mask(cs: CausalSet, k: int) -> np.ndarray:
    mask = np.zeros(cs.size, dtype=bool)
    mask[cs.infinity(k, PAST)[0]] = True
    return mask


def _half_identity(mask):
    return np.diag(np.where(mask, 1.0, 0.5))


def build_sorkin(cs: CausalSet, k: int = 3) -> WaveOperator:
    """Two-dimensional layer operator with weights 1, -2, 4, -2 on layers 0..3."""
    nm = cs.proximity_matrix
    coef = np.array([0.0, -2.0, 4.0, -2.0])
    P = np.where((nm >= 1) & (nm <= 3), coef[np.clip(nm, 0, 3)], 0.0) + np.eye(cs.size)
    mask = _boundary_mask(cs, k)
    P[mask] = np.eye(cs.size)[mask]
    return WaveOperator(P, _half_identity(mask), k, "sorkin", cs)


def build_plambda(cs: CausalSet, pp: PreferredPast) -> WaveOperator:
    """``P = 1 + Lambda - 2 M_W Omega`` with source matrix 1/2 off the boundary and 1 on it."""
    if pp.causet is not cs and not pp.causet.equals(cs):
        raise ValueError("preferred past was built for a different causal set")
    P = np.eye(cs.size) + pp.lam - 2.0 * pp.mean_weight @ pp.omega
    mask = _boundary_mask(cs, 2)
    return WaveOperator(P, _half_identity(mask), 2, "preferred-past", cs)


K_VARIANTS = ("half", "dsx", "trap")


def build_k_variant(cs: CausalSet, pp: PreferredPast, variant: str = "half") -> np.ndarray:
    """Source matrix for the preferred-past operator.

    ``half`` is 1/2 on the diagonal, ``dsx`` is (L - Lambda)/2 and ``trap`` is
    (1 + L + Lambda)/8. Rows on the 2-layer past infinity are identity rows.
    """
    aliases = {"half-identity": "half", "trapezium": "trap"}
    variant = aliases.get(variant, variant)
    n = cs.size
    eye = np.eye(n)
    if variant == "half":
        K = 0.5 * eye
    elif variant == "dsx":
        K = 0.5 * (cs.link.astype(float) - pp.lam)
    elif variant == "trap":
        K = 0.125 * (eye + cs.link + pp.lam)
    else:
        raise ValueError(f"unknown K variant {variant!r}; choose from {K_VARIANTS}")
    mask = _boundary_mask(cs, 2)
    K[mask] = eye[mask]
    return K


def with_source(op: WaveOperator, K: np.ndarray) -> WaveOperator:
    return WaveOperator(op.P, np.asarray(K, dtype=float), op.k, op.kind, op.causet, op.boundary)


@dataclass(frozen=True, eq=False)
class GreenSet:
    """Retarded, advanced and commutator Green operators of a wave operator."""

    retarded: np.ndarray
    advanced: np.ndarray
    commutator: np.ndarray
    op: WaveOperator = field(repr=False)

    @property
    def size(self) -> int:
        return self.retarded.shape[0]

    def residual(self) -> float:
        return float(np.max(np.abs(self.op.P @ self.retarded - self.op.K), initial=0.0))


def greens(op: WaveOperator) -> GreenSet:
    """Solve ``P E+ = K`` by forward substitution; ``E- = (E+)^T``, ``E = E- - E+``."""
    zero = np.flatnonzero(np.diag(op.P) == 0)
    if zero.size:
        raise SingularOperatorError(f"P has zero diagonal entries at {zero.tolist()}")
    if op.size == 0:
        empty = np.zeros((0, 0))
        return GreenSet(empty, empty, empty, op)
    ret = solve_triangular(op.P, op.K, lower=True, check_finite=True)
    adv = ret.T.copy()
    return GreenSet(ret, adv, adv - ret, op)


def solve_cauchy(op: WaveOperator, gs: GreenSet, f, data) -> np.ndarray:
    """Solution ``E+ f + E+ data`` of the inhomogeneous Cauchy problem."""
    f = np.asarray(f, dtype=float)
    data = np.asarray(data, dtype=float)
    inside = np.zeros(op.size, dtype=bool)
    inside[op.boundary] = True
    bad = np.flatnonzero(inside & (f != 0))
    if bad.size:
        raise PreconditionError("source does not vanish on the past infinity", bad)
    bad = np.flatnonzero(~inside & (data != 0))
    if bad.size:
        raise PreconditionError("Cauchy data is nonzero off the past infinity", bad)
    return gs.retarded @ (f + data)


@dataclass(frozen=True)
class CauchyEvolution:
    """Matrix of the map from data on the past infinity to data on the future infinity."""

    matrix: np.ndarray
    past: np.ndarray
    future: np.ndarray
    rank: int
    condition: float
    invertible: bool


def cauchy_evolution(op: WaveOperator, gs: GreenSet) -> CauchyEvolution:
    past = np.asarray(op.boundary)
    future = op.causet.infinity(op.k, FUTURE)[0]
    mat = gs.retarded[np.ix_(future, past)]
    rank = int(np.linalg.matrix_rank(mat)) if mat.size else 0
    square = mat.shape[0] == mat.shape[1]
    cond = float(np.linalg.cond(mat)) if square and mat.size else float("inf")
    return CauchyEvolution(mat, past, future, rank, cond, bool(square and rank == mat.shape[0]))


@dataclass(frozen=True, eq=False)
class RelativeCauchyEvolution:
    """Relative Cauchy evolution on the solution space of the reference set.

    ``matrix`` is the N x N operator; ``data_map`` is its action in the basis
    ``E+ e_x`` with ``x`` on the past infinity.
    """

    matrix: np.ndarray
    data_map: np.ndarray
    evolution: CauchyEvolution
    evolution_perturbed: CauchyEvolution

    def apply(self, phi) -> np.ndarray:
        return self.matrix @ np.asarray(phi)

    def observable(self, F):
        """The pulled-back observable ``phi -> F(rce(phi))``."""
        return F.pullback(self.matrix)

    def deviation(self) -> float:
        """Spectral-norm distance of the data map from the identity."""
        return float(np.linalg.norm(self.data_map - np.eye(self.data_map.shape[0]), 2))


def _index_map(mapping, src, dst, cs, cs2, side):
    src = list(map(int, src))
    dst_pos = {int(v): k for k, v in enumerate(dst)}
    if isinstance(mapping, dict):
        image = [int(mapping[x]) for x in src]
    else:
        image = [int(v) for v in mapping]
    if len(image) != len(src) or sorted(image) != sorted(dst_pos):
        raise ValueError(f"{side} map is not a bijection between the infinity regions")
    for a in range(len(src)):
        for b in range(len(src)):
            if cs.causal[src[a], src[b]] != cs2.causal[image[a], image[b]]:
                raise ValueError(f"{side} map does not preserve the order")
    perm = np.zeros((len(dst), len(src)))
    for a, y in enumerate(image):
        perm[dst_pos[y], a] = 1.0
    return perm


def rce(cs: CausalSet, cs2: CausalSet, iota_minus, iota_plus, op: WaveOperator, op2: WaveOperator,
        gs: GreenSet, gs2: GreenSet) -> RelativeCauchyEvolution:
    """Relative Cauchy evolution ``E+ (i-)^-1 (a~+)^-1 i+ S+``.

    Parameters
    ----------
    iota_minus, iota_plus : dict
        Order-preserving bijections from the past (future) infinity of ``cs``
        onto that of ``cs2``, as ``{label: label}``.
    """
    ev, ev2 = cauchy_evolution(op, gs), cauchy_evolution(op2, gs2)
    if not ev.invertible:
        raise SingularOperatorError("Cauchy evolution of the reference set is not invertible")
    if not ev2.invertible:
        raise SingularOperatorError("Cauchy evolution of the perturbed set is not invertible")
    i_minus = _index_map(iota_minus, ev.past, ev2.past, cs, cs2, "past")
    i_plus = _index_map(iota_plus, ev.future, ev2.future, cs, cs2, "future")
    # data on C- -> data on C+ -> transported -> solved back on the perturbed set -> pulled back
    back = i_minus.T @ np.linalg.solve(ev2.matrix, i_plus)
    n = cs.size
    select = np.zeros((len(ev.future), n))
    select[np.arange(len(ev.future)), ev.future] = 1.0
    matrix = gs.retarded[:, ev.past] @ back @ select
    return RelativeCauchyEvolution(matrix, back @ ev.matrix, ev, ev2)


@dataclass(frozen=True)
class LevelResidual:
    ell: float
    delta: float
    interior_points: int
    max_residual: float


def lattice_interior(cs: CausalSet) -> np.ndarray:
    """Points whose light-cone coordinates both exceed the minimum (full unit cell below)."""
    c = cs.coords
    return np.flatnonzero((c[:, 0] > c[:, 0].min() + 1e-12) & (c[:, 1] > c[:, 1].min() + 1e-12))


def continuum_residual(levels, f, f_uv, d: int = 0, operator: str = "plambda"):
    """Interior residual of ``ell^(d-2) P phi`` against ``(1/2) box f = 2 f_uv`` per level.

    Parameters
    ----------
    levels : sequence of CausalSet
        Lattices with ``uv`` coordinates and length scales.
    f, f_uv : callable
        Field and its mixed light-cone derivative, both of ``(u, v)``.
    """
    from .causet import choose_preferred_past
    from .generators import pullback_field

    out = []
    for cs in levels:
        if operator == "plambda":
            op = build_plambda(cs, choose_preferred_past(cs))
        elif operator == "sorkin":
            op = build_sorkin(cs)
        else:
            raise ValueError(f"unknown operator {operator!r}")
        ell = cs.length_scale
        phi = pullback_field(cs, f, d)
        inner = lattice_interior(cs)
        inner = inner[~np.isin(inner, op.boundary)]
        lhs = ell ** (d - 2) * (op.P[inner] @ phi)
        u, v = cs.coords[inner, 0], cs.coords[inner, 1]
        rhs = 2.0 * np.broadcast_to(np.asarray(f_uv(u, v), dtype=float), inner.shape)
        res = float(np.max(np.abs(lhs - rhs))) if inner.size else 0.0
        out.append(LevelResidual(ell, ell * np.sqrt(2.0), int(inner.size), res))
    return out


def match_coordinates(cs: CausalSet, cs2: CausalSet, labels, labels2, atol: float = 1e-9) -> dict:
    """Bijection between two label sets pairing elements at the same coordinates."""
    out = {}
    for x in labels:
        d = np.max(np.abs(cs2.coords[labels2] - cs.coords[x]), axis=1)
        hit = np.flatnonzero(d <= atol)
        if hit.size != 1:
            raise ValueError(f"element {x} has no unique coordinate match")
        out[int(x)] = int(np.asarray(labels2)[hit[0]])
    return out
