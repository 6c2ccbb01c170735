"""Finite causal sets: order data, layers, ranks, infinities and preferred pasts."""
from __future__ import annotations

import graphlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _backend

PAST = "past"
FUTURE = "future"


class CausetError(ValueError):
    """Invalid causal-set input."""


class CycleError(CausetError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__(f"relation contains a cycle: {' -> '.join(map(str, self.cycle))}")


class UndefinedRelationError(CausetError):
    """Raised when a query needs ``y < x`` but the pair is not related that way."""


class InconsistentPreferredPastError(RuntimeError):
    """An element outside the 2-layer past infinity without a rank-2 predecessor."""


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _bool_matmul(a, b):
    # exact for N < 2**24
    return (a.astype(np.float32) @ b.astype(np.float32)) > 0.5


def transitive_reduction(causal: np.ndarray) -> np.ndarray:
    """Link matrix of a transitively closed relation."""
    return causal & ~_bool_matmul(causal, causal)


def transitive_closure(relation: np.ndarray) -> np.ndarray:
    """Closure by repeated squaring; ``relation[x, y]`` means ``y`` below ``x``."""
    c = relation.astype(bool).copy()
    while True:
        nxt = c | _bool_matmul(c, c)
        if np.array_equal(nxt, c):
            return c
        c = nxt


@dataclass(frozen=True, eq=False)
class CausalSet:
    """A finite causal set in natural labelling.

    ``causal[x, y]`` is true iff ``y`` precedes ``x``; ``link[x, y]`` iff the
    relation is a link. ``coords`` holds one coordinate pair per element in the
    system named by ``coord_system`` ("uv" light-cone or "tx" Cartesian).
    ``original_index[k]`` is the input index of element ``k``.
    """

    causal: np.ndarray
    link: np.ndarray
    coords: np.ndarray | None = None
    length_scale: float | None = None
    coord_system: str | None = None
    original_index: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "causal", _readonly(np.asarray(self.causal, dtype=bool)))
        object.__setattr__(self, "link", _readonly(np.asarray(self.link, dtype=bool)))
        if self.coords is not None:
            object.__setattr__(self, "coords", _readonly(np.asarray(self.coords, dtype=float).reshape(-1, 2)))
        if self.original_index is None:
            object.__setattr__(self, "original_index", np.arange(self.size))
        object.__setattr__(self, "original_index", _readonly(self.original_index))

    @property
    def size(self) -> int:
        return self.causal.shape[0]

    def __len__(self):
        return self.size

    def equals(self, other: "CausalSet") -> bool:
        """Semantic equality of the order (same labels, same relation)."""
        return self.size == other.size and np.array_equal(self.causal, other.causal)

    def precedes(self, y: int, x: int) -> bool:
        """True iff ``y`` strictly precedes ``x``."""
        return bool(self.causal[x, y])

    @cached_property
    def proximity_matrix(self) -> np.ndarray:
        """``n(x, y) = |I(y, x)| - 1`` for ``y < x``, zero elsewhere."""
        c = self.causal.astype(np.float64)
        between = np.rint(c @ c).astype(np.int64)
        return np.where(self.causal, between + 1, 0)

    def interval(self, x: int, y: int) -> frozenset:
        """Elements ``z`` with ``y <= z <= x``."""
        if x == y:
            return frozenset([x])
        if not self.causal[x, y]:
            return frozenset()
        inside = np.flatnonzero(self.causal[x] & self.causal[:, y])
        return frozenset([x, y, *inside.tolist()])

    def proximity(self, x: int, y: int) -> int:
        if not self.causal[x, y]:
            raise UndefinedRelationError(f"element {y} does not precede {x}")
        return int(self.proximity_matrix[x, y])

    def layer(self, x: int, i: int, direction: str = PAST) -> frozenset:
        """The ``i``-th layer below (past) or above (future) ``x``."""
        if i < 1:
            raise ValueError("layer index must be >= 1")
        nm = self.proximity_matrix
        if direction == PAST:
            sel = nm[x] == i
        elif direction == FUTURE:
            sel = nm[:, x] == i
        else:
            raise ValueError(f"direction must be {PAST!r} or {FUTURE!r}")
        return frozenset(np.flatnonzero(sel).tolist())

    @cached_property
    def _rank_raw(self) -> np.ndarray:
        pred = [np.flatnonzero(row).tolist() for row in self.link]
        return _backend.kernels.link_ranks(pred, self.size)

    def rank_matrix(self) -> np.ma.MaskedArray:
        """Minimal link-path lengths; masked entries mean no path (infinite rank)."""
        raw = self._rank_raw
        return np.ma.masked_array(raw, mask=raw < 0, fill_value=-1)

    def rank(self, x: int, y: int) -> float:
        r = int(self._rank_raw[x, y])
        return float("inf") if r < 0 else r

    def infinity(self, n: int, direction: str = PAST):
        """The n-layer past or future infinity and its diagonal projector.

        Returns
        -------
        members : ndarray of int
            Sorted element labels.
        projector : ndarray
            N x N boolean diagonal matrix.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        nm = self.proximity_matrix
        if direction == PAST:
            mask = ~(nm >= n).any(axis=1)
        elif direction == FUTURE:
            mask = ~(nm >= n).any(axis=0)
        else:
            raise ValueError(f"direction must be {PAST!r} or {FUTURE!r}")
        return np.flatnonzero(mask), np.diag(mask)

    def rank_infinity(self, n: int) -> np.ndarray:
        """Elements with no predecessor of rank ``>= n`` (the rank-based past set)."""
        raw = self._rank_raw
        deep = (raw >= n) & self.causal
        return np.flatnonzero(~deep.any(axis=1))

    # --- serialization -------------------------------------------------
    def covers(self) -> list[list[int]]:
        xs, ys = np.nonzero(self.link)
        pairs = sorted(zip(ys.tolist(), xs.tolist()))
        return [list(p) for p in pairs]

    def checksum(self) -> str:
        return causal_checksum(self.causal)

    def to_dict(self) -> dict:
        out = {"n": self.size, "covers": self.covers()}
        if self.coords is not None:
            out["coords"] = self.coords.tolist()
        if self.length_scale is not None:
            out["length_scale"] = float(self.length_scale)
        if self.coord_system is not None:
            out["coord_system"] = self.coord_system
        out["c_checksum"] = self.checksum()
        return out

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def causal_checksum(causal: np.ndarray) -> str:
    """FNV-1a (64 bit) of the row-major bits of C, packed MSB-first into bytes."""
    packed = np.packbits(np.asarray(causal, dtype=bool).ravel())
    return f"{_backend.kernels.fnv1a64(packed.tobytes()):016x}"


def natural_order(causal: np.ndarray) -> np.ndarray:
    """Stable natural labelling keyed by (longest chain from a minimal element, index).

    ``causal`` must be transitively closed and acyclic.
    """
    n = causal.shape[0]
    npred = causal.sum(axis=1)
    topo = np.argsort(npred, kind="stable")
    depth = np.zeros(n, dtype=np.int64)
    for x in topo:
        below = causal[x]
        if below.any():
            depth[x] = depth[below].max() + 1
    return np.lexsort((np.arange(n), depth))


def _relabel(causal, coords, perm):
    c = causal[np.ix_(perm, perm)]
    return c, (None if coords is None else np.asarray(coords, dtype=float)[perm])


def from_causal_matrix(causal, coords=None, length_scale=None, coord_system=None, *, check=True) -> CausalSet:
    """Build a causal set from a closed relation, relabelling it naturally."""
    causal = np.asarray(causal, dtype=bool)
    n = causal.shape[0]
    if check and n:
        if causal.diagonal().any() or (causal & causal.T).any():
            raise CausetError("relation is not acyclic")
        if (_bool_matmul(causal, causal) & ~causal).any():
            raise CausetError("relation is not transitive")
    perm = natural_order(causal)
    c, co = _relabel(causal, coords, perm)
    return CausalSet(c, transitive_reduction(c), co, length_scale, coord_system, perm)


def _find_cycle(n, covers):
    ts = graphlib.TopologicalSorter({v: set() for v in range(n)})
    for a, b in covers:
        ts.add(b, a)
    try:
        tuple(ts.static_order())
    except graphlib.CycleError as exc:
        cyc = exc.args[1]
        return list(reversed(cyc))
    return None


def from_relations(n: int, covers, coords=None, length_scale=None, coord_system=None) -> CausalSet:
    """Causal set generated by ``covers`` (pairs ``(a, b)`` meaning ``a < b``)."""
    covers = [tuple(int(v) for v in pair) for pair in covers]
    for a, b in covers:
        if not (0 <= a < n and 0 <= b < n):
            raise CausetError(f"cover ({a}, {b}) references an index outside [0, {n})")
        if a == b:
            raise CycleError([a, a])
    cyc = _find_cycle(n, covers)
    if cyc is not None:
        raise CycleError(cyc)
    rel = np.zeros((n, n), dtype=bool)
    for a, b in covers:
        rel[b, a] = True
    causal = transitive_closure(rel)
    return from_causal_matrix(causal, coords, length_scale, coord_system, check=False)


def from_dict(data: dict) -> CausalSet:
    n = int(data["n"])
    cs = from_relations(n, data.get("covers", []), data.get("coords"), data.get("length_scale"),
                        data.get("coord_system"))
    want = data.get("c_checksum")
    if want is not None and want != cs.checksum():
        raise CausetError(f"closure checksum mismatch: file says {want}, recomputed {cs.checksum()}")
    return cs


def load(path: str | Path) -> CausalSet:
    return from_dict(json.loads(Path(path).read_text()))


# --- preferred past --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PreferredPast:
    """A preferred rank-2 predecessor for each element outside the 2-layer past infinity.

    ``mapping[p]`` is the chosen predecessor, ``admissible[p]`` the number of
    rank-2 predecessors that were available. ``lam``, ``omega`` and
    ``mean_weight`` are the matrices of the wave operator construction.
    """

    causet: CausalSet
    mapping: dict
    admissible: dict
    lam: np.ndarray
    omega: np.ndarray
    mean_weight: np.ndarray
    rule: str


def rank_two_predecessors(cs: CausalSet) -> np.ndarray:
    """Boolean matrix ``R2[p, q]``: ``q`` is reachable from ``p`` in exactly two links and no fewer."""
    return _bool_matmul(cs.link, cs.link) & ~cs.link


def choose_preferred_past(cs: CausalSet, rule: str = "max-layer", seed: int | None = None) -> PreferredPast:
    """Select a preferred past for every element outside the 2-layer past infinity.

    Parameters
    ----------
    rule : {"max-layer", "seeded-random"}
        ``max-layer`` takes the rank-2 predecessor with largest proximity,
        ties going to the lowest label; ``seeded-random`` picks uniformly.
    seed : int, optional
        Seed for ``seeded-random``.
    """
    if rule not in ("max-layer", "seeded-random"):
        raise ValueError(f"unknown rule {rule!r}")
    n = cs.size
    boundary, _ = cs.infinity(2, PAST)
    in_boundary = np.zeros(n, dtype=bool)
    in_boundary[boundary] = True
    r2 = rank_two_predecessors(cs)
    nm = cs.proximity_matrix
    rng = np.random.Generator(np.random.Philox(seed)) if rule == "seeded-random" else None
    mapping, admissible = {}, {}
    lam = np.zeros((n, n), dtype=bool)
    omega = np.zeros((n, n), dtype=bool)
    weight = np.zeros(n)
    for p in range(n):
        if in_boundary[p]:
            continue
        cand = np.flatnonzero(r2[p])
        if cand.size == 0:
            raise InconsistentPreferredPastError(f"element {p} lies outside C2- but has no rank-2 predecessor")
        if rng is None:
            layer = nm[p, cand]
            q = int(cand[np.flatnonzero(layer == layer.max())[0]])
        else:
            q = int(cand[rng.integers(cand.size)])
        mapping[p] = q
        admissible[p] = int(cand.size)
        lam[p, q] = True
        omega[p] = cs.causal[p] & cs.causal[:, q]
        weight[p] = 1.0 / omega[p].sum()
    return PreferredPast(cs, mapping, admissible, _readonly(lam), _readonly(omega),
                         _readonly(np.diag(weight)), rule)
