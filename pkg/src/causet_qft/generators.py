"""Benchmark causal sets: diamond lattices and Poisson sprinklings in 1+1 Minkowski space."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .causet import CausalSet, from_causal_matrix


@dataclass(frozen=True)
class LatticeSpec:
    """Diamond lattice with ``rows`` steps in ``u`` and ``cols`` steps in ``v``.

    With ``complete_past=True`` the ``rows x cols`` block sits on top of a
    lattice region cut off below along the spacelike line ``i + j = -2`` (in
    step units), so every block point has a complete lattice past and the
    region's 2-layer past infinity is the two lowest antichains.
    """

    rows: int
    cols: int
    ell: float = 1.0
    complete_past: bool = False

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if not self.ell > 0:
            raise ValueError("ell must be positive")

    @property
    def delta(self) -> float:
        return self.ell * math.sqrt(2.0)


def lattice_steps(spec: LatticeSpec) -> np.ndarray:
    """Integer lattice positions ``(i, j)`` in generation order."""
    if spec.complete_past:
        lo_i, lo_j = -(spec.cols + 1), -(spec.rows + 1)
        pts = [(i, j) for i in range(lo_i, spec.rows) for j in range(lo_j, spec.cols) if i + j >= -2]
    else:
        pts = [(i, j) for i in range(spec.rows) for j in range(spec.cols)]
    return np.array(pts, dtype=np.int64).reshape(-1, 2)


def diamond_lattice(spec: LatticeSpec) -> CausalSet:
    """Causal set of lattice points ``(i delta, j delta)`` in light-cone coordinates."""
    steps = lattice_steps(spec)
    i, j = steps[:, 0], steps[:, 1]
    below = (i[None, :] <= i[:, None]) & (j[None, :] <= j[:, None])
    np.fill_diagonal(below, False)
    return from_causal_matrix(below, steps * spec.delta, spec.ell, "uv", check=False)


def lattice_block(cs: CausalSet, spec: LatticeSpec) -> np.ndarray:
    """Labels of the ``rows x cols`` block (points with both coordinates >= 0)."""
    steps = np.rint(np.asarray(cs.coords) / spec.delta).astype(np.int64)
    return np.flatnonzero((steps[:, 0] >= 0) & (steps[:, 1] >= 0))


@dataclass(frozen=True)
class SprinklingSpec:
    """Poisson sprinkling into a region of 1+1 Minkowski space.

    ``region`` is ``("rect", t0, t1, x0, x1)`` or
    ``("diamond", t_p, x_p, t_q, x_q)`` for the causal diamond between ``p``
    and a point ``q`` in its causal future.
    """

    region: tuple
    density: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "region", tuple(self.region))
        if not self.density > 0:
            raise ValueError("density must be positive")
        if not self.volume > 0:
            raise ValueError("region volume must be positive")

    @property
    def volume(self) -> float:
        kind, *v = self.region
        if kind == "rect":
            t0, t1, x0, x1 = map(float, v)
            return max(t1 - t0, 0.0) * max(x1 - x0, 0.0)
        if kind == "diamond":
            du, dv = _diamond_extent(*map(float, v))
            return 0.5 * du * dv
        raise ValueError(f"unknown region kind {kind!r}")


def _diamond_extent(tp, xp, tq, xq):
    du, dv = (tq - xq) - (tp - xp), (tq + xq) - (tp + xp)
    if du < 0 or dv < 0:
        raise ValueError("diamond corners are not causally ordered")
    return du, dv


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based 64-bit generator (Philox 4x64) used for every random draw."""
    return np.random.Generator(np.random.Philox(int(seed)))


def poisson_count(rng: np.random.Generator, mean: float) -> int:
    """Poisson draw from uniform deviates only: inversion up to mean 50, normal approximation above."""
    if mean <= 50.0:
        u = rng.random()
        k = 0
        p = math.exp(-mean)
        cdf = p
        while u > cdf and p > 0.0:
            k += 1
            p *= mean / k
            cdf += p
        return k
    while True:
        u1, u2 = rng.random(), rng.random()
        z = math.sqrt(-2.0 * math.log1p(-u1)) * math.cos(2.0 * math.pi * u2)
        k = int(math.floor(mean + math.sqrt(mean) * z + 0.5))
        if k >= 0:
            return k


def sprinkle_points(spec: SprinklingSpec) -> np.ndarray:
    """Sprinkled ``(t, x)`` coordinates, in draw order."""
    rng = make_rng(spec.seed)
    count = poisson_count(rng, spec.density * spec.volume)
    uni = rng.random((count, 2))
    kind, *v = spec.region
    if kind == "rect":
        t0, t1, x0, x1 = map(float, v)
        return np.column_stack([t0 + (t1 - t0) * uni[:, 0], x0 + (x1 - x0) * uni[:, 1]])
    tp, xp, tq, xq = map(float, v)
    du, dv = _diamond_extent(tp, xp, tq, xq)
    u = (tp - xp) + du * uni[:, 0]
    w = (tp + xp) + dv * uni[:, 1]
    return np.column_stack([(u + w) / 2.0, (w - u) / 2.0])


def metric_order(points: np.ndarray) -> np.ndarray:
    """``C[a, b]`` true iff ``b`` lies in the closed causal past of ``a`` (and ``a != b``)."""
    t, x = points[:, 0], points[:, 1]
    dt = t[:, None] - t[None, :]
    dx = np.abs(x[:, None] - x[None, :])
    rel = (dt >= dx) & (dt >= 0)
    np.fill_diagonal(rel, False)
    return rel


def sprinkle(spec: SprinklingSpec) -> CausalSet:
    pts = sprinkle_points(spec)
    return from_causal_matrix(metric_order(pts), pts, spec.density ** -0.5, "tx", check=False)


def pullback_field(cs: CausalSet, f, d: int = 0) -> np.ndarray:
    """Field values ``ell**(-d) * f(c1, c2)`` at every element."""
    if cs.coords is None or cs.length_scale is None:
        raise ValueError("causal set has no coordinates or length scale")
    c = cs.coords
    vals = np.broadcast_to(np.asarray(f(c[:, 0], c[:, 1]), dtype=float), (cs.size,))
    return cs.length_scale ** (-d) * vals


def subdivided_lattice(spec: LatticeSpec, cell: tuple[int, int]) -> CausalSet:
    """Square lattice section with one extra point at the centre of the unit cell above ``cell``."""
    steps = lattice_steps(spec).astype(float)
    extra = np.array([[cell[0] + 0.5, cell[1] + 0.5]])
    pts = np.vstack([steps, extra])
    i, j = pts[:, 0], pts[:, 1]
    below = (i[None, :] <= i[:, None]) & (j[None, :] <= j[:, None])
    np.fill_diagonal(below, False)
    return from_causal_matrix(below, pts * spec.delta, spec.ell, "uv", check=False)
