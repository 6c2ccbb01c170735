import numpy as np
import pytest

from causet_qft.causet import choose_preferred_past
from causet_qft.generators import (
    LatticeSpec,
    SprinklingSpec,
    diamond_lattice,
    lattice_block,
    make_rng,
    metric_order,
    poisson_count,
    pullback_field,
    sprinkle,
    sprinkle_points,
    subdivided_lattice,
)


def test_unit_diamond():
    cs = diamond_lattice(LatticeSpec(2, 2))
    assert cs.size == 4
    assert cs.link.sum() == 4
    bottom, top = 0, 3
    assert cs.causal[1:3, bottom].all() and cs.causal[top, 1:3].all()
    assert not cs.causal[1, 2] and not cs.causal[2, 1]


def test_interior_point_has_two_links_below():
    cs = diamond_lattice(LatticeSpec(3, 3))
    steps = np.rint(cs.coords / LatticeSpec(3, 3).delta).astype(int)
    centre = int(np.flatnonzero((steps == [1, 1]).all(axis=1))[0])
    assert cs.link[centre].sum() == 2


def test_lattice_links_are_unit_steps():
    spec = LatticeSpec(4, 5, ell=0.5)
    cs = diamond_lattice(spec)
    xs, ys = np.nonzero(cs.link)
    diff = (cs.coords[xs] - cs.coords[ys]) / spec.delta
    assert np.allclose(np.sort(np.abs(diff), axis=1), [[0.0, 1.0]] * len(xs))
    assert np.isclose(spec.delta, 0.5 * np.sqrt(2.0))


def test_lattice_spec_validation():
    with pytest.raises(ValueError):
        LatticeSpec(0, 3)
    with pytest.raises(ValueError):
        LatticeSpec(3, 3, ell=0.0)


def test_complete_past_lattice_contains_block():
    spec = LatticeSpec(4, 4, complete_past=True)
    cs = diamond_lattice(spec)
    block = lattice_block(cs, spec)
    assert len(block) == 16
    # each block point keeps its full lattice past down to the cut
    boundary = set(cs.infinity(2)[0].tolist())
    assert not boundary & set(block.tolist())


@pytest.mark.parametrize("rows,cols", [(3, 3), (4, 6), (6, 4)])
def test_lattice_omega_equals_links(rows, cols):
    spec = LatticeSpec(rows, cols, complete_past=True)
    cs = diamond_lattice(spec)
    pp = choose_preferred_past(cs)
    inside = sorted(pp.mapping)
    assert np.array_equal(pp.omega[inside], cs.link[inside])
    assert np.allclose(np.diag(pp.mean_weight)[inside], 0.5)


def test_bare_lattice_edge_uses_straight_preferred_past():
    # on an edge the only rank-2 predecessor lies two steps down the edge
    spec = LatticeSpec(4, 4)
    cs = diamond_lattice(spec)
    pp = choose_preferred_past(cs)
    steps = np.rint(cs.coords / spec.delta).astype(int)
    p = int(np.flatnonzero((steps == [3, 0]).all(axis=1))[0])
    q = int(np.flatnonzero((steps == [1, 0]).all(axis=1))[0])
    assert pp.mapping[p] == q
    assert pp.mean_weight[p, p] == 1.0


def test_sprinkle_is_deterministic():
    spec = SprinklingSpec(("rect", 0.0, 1.0, 0.0, 2.0), 10.0, seed=42)
    a, b = sprinkle(spec), sprinkle(spec)
    assert a.equals(b)
    assert np.array_equal(a.coords, b.coords)
    assert a.to_json() == b.to_json()
    c = sprinkle(SprinklingSpec(("rect", 0.0, 1.0, 0.0, 2.0), 10.0, seed=43))
    assert c.to_json() != a.to_json()


def test_sprinkle_points_inside_region():
    pts = sprinkle_points(SprinklingSpec(("diamond", 0.0, 0.0, 2.0, 0.0), 30.0, seed=1))
    u, v = pts[:, 0] - pts[:, 1], pts[:, 0] + pts[:, 1]
    assert np.all((u >= 0) & (u <= 2) & (v >= 0) & (v <= 2))
    pts = sprinkle_points(SprinklingSpec(("rect", 1.0, 2.0, -1.0, 0.0), 30.0, seed=1))
    assert np.all((pts[:, 0] >= 1) & (pts[:, 0] <= 2) & (pts[:, 1] >= -1) & (pts[:, 1] <= 0))


def test_region_volume():
    assert SprinklingSpec(("rect", 0, 2, 0, 3), 1.0).volume == 6.0
    # diamond between (0,0) and (2,0): light-cone extents 2 and 2, area 2
    assert SprinklingSpec(("diamond", 0, 0, 2, 0), 1.0).volume == pytest.approx(2.0)
    with pytest.raises(ValueError):
        SprinklingSpec(("diamond", 0, 0, 0, 2), 1.0)
    with pytest.raises(ValueError):
        SprinklingSpec(("rect", 0, 1, 0, 1), -1.0)


def test_sprinkling_order_is_metric():
    cs = sprinkle(SprinklingSpec(("rect", 0.0, 3.0, 0.0, 3.0), 8.0, seed=9))
    t, x = cs.coords[:, 0], cs.coords[:, 1]
    dt = t[:, None] - t[None, :]
    dx = np.abs(x[:, None] - x[None, :])
    timelike = (dt >= dx) & ~np.eye(cs.size, dtype=bool)
    assert np.array_equal(cs.causal, timelike)


def test_closed_cone_boundary_tie():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, -0.5]])
    C = metric_order(pts)
    assert C[1, 0] and C[2, 0] and not C[2, 1]


def test_poisson_mean_and_large_mean():
    rng = make_rng(3)
    draws = [poisson_count(rng, 20.0) for _ in range(2000)]
    assert abs(np.mean(draws) - 20.0) < 3 * np.sqrt(20.0 / 2000)
    big = [poisson_count(rng, 400.0) for _ in range(500)]
    assert abs(np.mean(big) - 400.0) < 3 * np.sqrt(400.0 / 500)
    assert min(big) >= 0


def test_pullback_field():
    cs = diamond_lattice(LatticeSpec(3, 3, ell=2.0))
    assert np.allclose(pullback_field(cs, lambda u, v: u + v), cs.coords.sum(axis=1))
    assert np.allclose(pullback_field(cs, lambda u, v: 1.0, d=-2), 4.0)
    fine = diamond_lattice(LatticeSpec(5, 5, ell=1.0))
    f = lambda u, v: np.cos(u) * v  # noqa: E731
    coarse_vals = pullback_field(cs, f, -2)
    fine_vals = pullback_field(fine, f, -2)
    for k, c in enumerate(cs.coords):
        j = int(np.flatnonzero(np.all(np.isclose(fine.coords, c), axis=1))[0])
        assert np.isclose(fine_vals[j], coarse_vals[k] / 4.0)


def test_subdivided_lattice_adds_one_point():
    spec = LatticeSpec(4, 4)
    cs = diamond_lattice(spec)
    sub = subdivided_lattice(spec, (1, 1))
    assert sub.size == cs.size + 1
    extra = int(np.flatnonzero(np.isclose(sub.coords, [1.5 * spec.delta] * 2).all(axis=1))[0])
    assert sub.link[extra].sum() == 1
    assert sub.link[:, extra].sum() == 1
