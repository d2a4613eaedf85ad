"""Invariant bundle directions, leaf growth, conditional densities, holonomy."""

import numpy as np
import pytest

from anosov3.errors import (
    DirectionNotConverged,
    HolonomyEscape,
    TruncationBoundExceeded,
)
from anosov3.foliation import (
    direction_at,
    dynamical_density,
    dynamical_density_batch,
    grow_leaf,
    leaf_jacobian,
    leaf_pair_batch,
    uu_holonomy_to_plane,
)
from anosov3.maps import torus_distance, wrap01, wrap_half

BUNDLE_AXES = {"s": 0, "wu": 1, "uu": 2}


def _unit_rows(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def test_directions_linear_are_eigenvectors(flin, sp):
    pts = np.random.default_rng(0).random((12, 3))
    for bundle, axis in BUNDLE_AXES.items():
        e = sp.frame[:, axis]
        v = direction_at(flin, sp, pts, bundle)
        sign = np.sign(v @ e)[:, None]
        assert np.max(np.linalg.norm(v - sign * e, axis=-1)) < 1e-10


def test_directions_match_pushforward_of_eigenframe(fconj, phi2, sp):
    # ground truth: the bundle direction of the conjugated map at phi(x) is
    # the normalized image of the eigenvector under D phi(x)
    rng = np.random.default_rng(1)
    x = rng.random((20, 3))
    px = wrap01(phi2.evaluate(x))
    dphi = phi2.differential(x)
    for bundle, axis in BUNDLE_AXES.items():
        want = _unit_rows(np.einsum("nij,j->ni", dphi, sp.frame[:, axis]))
        got = direction_at(fconj, sp, px, bundle)
        sign = np.sign(np.sum(got * want, axis=-1))[:, None]
        assert np.max(np.linalg.norm(got - sign * want, axis=-1)) < 1e-9


def test_directions_equivariant(fconj, sp):
    rng = np.random.default_rng(2)
    x = rng.random((10, 3))
    fx = wrap01(fconj.evaluate(x))
    D = fconj.differential(x)
    for bundle in BUNDLE_AXES:
        v = direction_at(fconj, sp, x, bundle)
        w = direction_at(fconj, sp, fx, bundle)
        push = _unit_rows(np.einsum("nij,nj->ni", D, v))
        sign = np.sign(np.sum(push * w, axis=-1))[:, None]
        assert np.max(np.linalg.norm(push - sign * w, axis=-1)) < 1e-8


def test_uu_direction_tilt_is_order_epsilon(fconj, sp):
    pts = np.random.default_rng(3).random((64, 3))
    v = direction_at(fconj, sp, pts, "uu")
    e = sp.e_uu
    ang = np.arccos(np.clip(np.abs(v @ e), 0.0, 1.0))
    assert 1e-4 < np.max(ang) < 0.1


def test_direction_depth_guard(fconj, sp):
    with pytest.raises(DirectionNotConverged):
        direction_at(fconj, sp, np.array([0.21, 0.43, 0.65]), "uu", tol=1e-14, depth=2)


def test_frame_interpolation_accuracy(fconj, sp, frame32):
    pts = np.random.default_rng(4).random((30, 3))
    for bundle in BUNDLE_AXES:
        vf = _unit_rows(frame32.sample_direction(bundle, pts))
        ve = direction_at(fconj, sp, pts, bundle)
        sign = np.sign(np.sum(vf * ve, axis=-1))[:, None]
        assert np.max(np.linalg.norm(vf - sign * ve, axis=-1)) < 1e-5


def test_leaf_jacobian_linear(flin, sp):
    x = np.array([0.2, 0.6, 0.9])
    assert abs(leaf_jacobian(flin, sp, x, "uu") - sp.lam3) < 1e-12
    assert abs(leaf_jacobian(flin, sp, x, "wu") - sp.lam2) < 1e-12


def test_grow_leaf_linear_is_straight(flin, sp):
    x0 = np.array([0.2, 0.5, 0.33])
    leaf = grow_leaf(flin, sp, x0, "uu", 0.4)
    rel = leaf.points - x0
    rel -= np.rint(rel)
    t = rel @ sp.e_uu
    perp = rel - t[:, None] * sp.e_uu
    assert np.max(np.linalg.norm(perp, axis=-1)) < 1e-12
    assert abs(leaf.arclengths[0] + 0.4) < 1e-6
    assert abs(leaf.arclengths[-1] - 0.4) < 1e-6
    assert np.max(np.abs(np.linalg.norm(leaf.tangents, axis=-1) - 1.0)) < 1e-9


def test_leaf_point_lookup(flin, sp):
    leaf = grow_leaf(flin, sp, np.array([0.1, 0.4, 0.8]), "wu", 0.3)
    k = len(leaf.points) // 3
    assert np.linalg.norm(leaf.point_at(leaf.arclengths[k]) - leaf.points[k]) < 1e-10
    probe = leaf.points[k] + 1e-3 * sp.e_s
    s, dist, point = leaf.nearest(probe)
    assert abs(s - leaf.arclengths[k]) < 5e-3
    assert dist < 2e-3


def test_leaf_is_map_invariant(fconj, phi2, sp):
    base = wrap01(phi2.evaluate(np.array([0.41, 0.13, 0.77])))
    leaf = grow_leaf(fconj, sp, base, "uu", 0.4)
    image_leaf = grow_leaf(fconj, sp, wrap01(fconj.evaluate(base)), "uu", 1.6)
    image = wrap01(fconj.evaluate(leaf.points))
    worst = max(image_leaf.nearest(p)[1] for p in image[::4])
    assert worst < 1e-8


def test_leaf_points_contract_backward_at_uu_rate(fconj, phi2, sp):
    leaf = grow_leaf(fconj, sp, wrap01(phi2.evaluate(np.array([0.15, 0.6, 0.35]))), "uu", 0.35)
    a = leaf.point_at(0.0).copy()
    b = leaf.point_at(0.3).copy()
    dists = []
    for _ in range(6):
        dists.append(float(torus_distance(a, b)))
        a = fconj.inverse_evaluate(a)
        b = fconj.inverse_evaluate(b)
    rates = np.array(dists[1:]) / np.array(dists[:-1])
    assert np.max(np.abs(rates - 1.0 / sp.lam3) * sp.lam3) < 0.10


def test_leaf_pairs_land_on_leaf(fconj, sp):
    rng = np.random.default_rng(5)
    xs = rng.random((8, 3))
    offs = rng.uniform(0.05, 0.3, 8) * rng.choice([-1.0, 1.0], 8)
    for bundle in ("uu", "wu", "s"):
        ys, ox, oy = leaf_pair_batch(fconj, sp, bundle, xs, offs)
        sep = torus_distance(xs, ys)
        assert np.all(sep > 0.2 * np.abs(offs))
        assert np.all(sep < 5.0 * np.abs(offs))
        rho, tails = dynamical_density_batch(fconj, sp, bundle, xs, ys,
                                             orbit_x=ox, orbit_y=oy)
        assert np.max(tails) < 1e-10  # pair construction keeps orbits coherent


def test_density_linear_is_one(flin, sp):
    rng = np.random.default_rng(6)
    xs = rng.random((8, 3))
    for bundle in ("uu", "wu", "s"):
        ys, ox, oy = leaf_pair_batch(flin, sp, bundle, xs, np.full(8, 0.2))
        rho, tails = dynamical_density_batch(flin, sp, bundle, xs, ys,
                                             orbit_x=ox, orbit_y=oy)
        assert np.all(rho == 1.0)
        assert np.all(tails == 0.0)


def test_density_properties_perturbed(fconj, sp):
    rng = np.random.default_rng(7)
    xs = rng.random((8, 3))
    offs = rng.uniform(0.05, 0.3, 8) * rng.choice([-1.0, 1.0], 8)
    for bundle in ("uu", "wu"):
        ys, ox, oy = leaf_pair_batch(fconj, sp, bundle, xs, offs)
        rho, _ = dynamical_density_batch(fconj, sp, bundle, xs, ys, orbit_x=ox, orbit_y=oy)
        assert np.all((rho > 0.9) & (rho < 1.1))
        assert np.max(np.abs(rho - 1.0)) > 1e-3  # genuinely nonconstant
        rho_xx, _ = dynamical_density_batch(fconj, sp, bundle, xs, xs, orbit_x=ox, orbit_y=ox)
        assert np.all(rho_xx == 1.0)
        rho_sw, _ = dynamical_density_batch(fconj, sp, bundle, ys, xs, orbit_x=oy, orbit_y=ox)
        assert np.max(np.abs(rho * rho_sw - 1.0)) < 1e-12


def test_density_cocycle_uu_wu(fconj, sp):
    rng = np.random.default_rng(8)
    xs = rng.random((8, 3))
    offs = rng.uniform(0.05, 0.3, 8) * rng.choice([-1.0, 1.0], 8)
    for bundle in ("uu", "wu"):
        ys, ox, oy = leaf_pair_batch(fconj, sp, bundle, xs, offs)
        rho, _ = dynamical_density_batch(fconj, sp, bundle, xs, ys, orbit_x=ox, orbit_y=oy)
        fxs = wrap01(fconj.evaluate(xs))
        fys = wrap01(fconj.evaluate(ys))
        rho_f, _ = dynamical_density_batch(fconj, sp, bundle, fxs, fys,
                                           orbit_x=[fxs] + ox[:-1], orbit_y=[fys] + oy[:-1])
        vx = direction_at(fconj, sp, xs, bundle)
        vy = direction_at(fconj, sp, ys, bundle)
        Dx = np.linalg.norm(np.einsum("nij,nj->ni", fconj.differential(xs), vx), axis=-1)
        Dy = np.linalg.norm(np.einsum("nij,nj->ni", fconj.differential(ys), vy), axis=-1)
        assert np.max(np.abs(rho_f * Dy - Dx * rho)) < 1e-8


def test_density_cocycle_stable(fconj, sp):
    # for the contracting bundle the expanding map of the cocycle is the
    # inverse, whose leaf stretch is read off the differential at preimages
    rng = np.random.default_rng(9)
    xs = rng.random((8, 3))
    offs = rng.uniform(0.05, 0.3, 8) * rng.choice([-1.0, 1.0], 8)
    ys, ox, oy = leaf_pair_batch(fconj, sp, "s", xs, offs)
    rho, _ = dynamical_density_batch(fconj, sp, "s", xs, ys, orbit_x=ox, orbit_y=oy)
    gxs = fconj.inverse_evaluate(xs)
    gys = fconj.inverse_evaluate(ys)
    rho_g, _ = dynamical_density_batch(fconj, sp, "s", wrap01(gxs), wrap01(gys),
                                       orbit_x=[gxs] + ox[:-1], orbit_y=[gys] + oy[:-1])
    vx = direction_at(fconj, sp, xs, "s")
    vy = direction_at(fconj, sp, ys, "s")
    Dx = np.linalg.norm(np.linalg.solve(fconj.differential(gxs), vx[..., None])[..., 0], axis=-1)
    Dy = np.linalg.norm(np.linalg.solve(fconj.differential(gys), vy[..., None])[..., 0], axis=-1)
    assert np.max(np.abs(rho_g * Dy - Dx * rho)) < 1e-10


def test_density_single_pair_wrapper(fconj, sp):
    xs = np.array([[0.22, 0.51, 0.83]])
    ys, ox, oy = leaf_pair_batch(fconj, sp, "uu", xs, np.array([0.2]))
    batch, _ = dynamical_density_batch(fconj, sp, "uu", xs, ys, orbit_x=ox, orbit_y=oy)
    single = dynamical_density(fconj, sp, "uu", xs[0], ys[0])
    assert abs(single.value - batch[0]) < 1e-10
    assert single.tail_bound < 1e-8
    assert single.depth > 10


def test_density_rejects_off_leaf_pairs(fconj, sp):
    rng = np.random.default_rng(10)
    xs = rng.random((4, 3))
    ys = wrap01(xs + 0.3 * sp.e_s)
    with pytest.raises(TruncationBoundExceeded):
        dynamical_density_batch(fconj, sp, "uu", xs, ys)


def test_holonomy_fixes_the_plane(flin, sp):
    y = np.array([0.3, 0.8, 0.0])
    assert np.max(np.abs(uu_holonomy_to_plane(flin, sp, y) - y)) < 1e-12


def test_holonomy_linear_closed_form(flin, sp):
    rng = np.random.default_rng(11)
    ys = rng.random((6, 3))
    got = np.array([uu_holonomy_to_plane(flin, sp, y) for y in ys])
    slide = np.array([sp.beta[0], sp.beta[1], 1.0])
    want = wrap01(ys - wrap_half(ys[:, 2])[:, None] * slide)
    assert np.max(np.abs(wrap_half(got - want))) < 1e-9
    assert np.max(np.abs(got[:, 2])) == 0.0


def test_holonomy_idempotent(fconj, sp):
    h1 = uu_holonomy_to_plane(fconj, sp, np.array([0.2, 0.4, 0.3]))
    h2 = uu_holonomy_to_plane(fconj, sp, h1)
    assert float(torus_distance(h1, h2)) < 1e-9


def test_holonomy_window_guard(fconj, sp):
    with pytest.raises(HolonomyEscape):
        uu_holonomy_to_plane(fconj, sp, np.array([0.2, 0.4, 0.5]), window=0.01)
