"""Invariant foliations of a perturbed automorphism, computed dynamically.

Directions of the fine splitting E^s + E^wu + E^uu are obtained by power
iteration along orbits: strong unstable by pushing forward along a backward
orbit, stable by pulling back along a forward orbit, weak unstable by
backward iteration restricted to the unstable plane (whose normals ride a
cofactor sweep).  Leaves are integral curves of these fields; densities of
conditional measures come from the standard infinite product, truncated
with an explicit tail bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DirectionNotConverged,
    HolonomyEscape,
    StepCollapse,
    TruncationBoundExceeded,
)
from .grids import GridFunction, grid_points
from .lattice import Splitting
from .maps import wrap01, wrap_half

_CHUNK = 16384


def _depth_for(rate: float, tol: float, pad: int = 4) -> int:
    return int(np.ceil(np.log(tol) / np.log(rate))) + pad


def _cof(mats):
    """Cofactor matrices: (A u) x (A v) = cof(A) (u x v)."""
    return np.linalg.det(mats)[..., None, None] * np.swapaxes(
        np.linalg.inv(mats), -1, -2
    )


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _orient(v, ref):
    sign = np.sign(np.sum(v * ref, axis=-1, keepdims=True))
    sign[sign == 0] = 1.0
    return v * sign


def _movement(v, w):
    return np.linalg.norm(v - w, axis=-1)


def _uu_directions(f, split, pts, depth, tol):
    """Strong unstable directions: forward push along the backward orbit."""
    orbit = [pts]
    for _ in range(depth):
        orbit.append(f.inverse_evaluate(orbit[-1]))
    seed = np.broadcast_to(split.e_uu, pts.shape).copy()
    v = seed.copy()
    w = seed.copy()
    for k in range(depth, 0, -1):
        D = f.differential(orbit[k])
        v = _unit(np.einsum("...ab,...b->...a", D, v))
        if k <= depth - 1:
            w = _unit(np.einsum("...ab,...b->...a", D, w))
    v = _orient(v, split.e_uu)
    w = _orient(w, split.e_uu)
    return v, _movement(v, w)


def _s_directions(f, split, pts, depth, tol):
    """Stable directions: pull back along the forward orbit."""
    orbit = [pts]
    for _ in range(depth):
        orbit.append(f.evaluate(orbit[-1]))
    seed = np.broadcast_to(split.e_s, pts.shape).copy()
    v = seed.copy()
    w = seed.copy()
    for k in range(depth, 0, -1):
        D = f.differential(orbit[k - 1])
        v = _unit(np.linalg.solve(D, v[..., None])[..., 0])
        if k <= depth - 1:
            w = _unit(np.linalg.solve(D, w[..., None])[..., 0])
    v = _orient(v, split.e_s)
    w = _orient(w, split.e_s)
    return v, _movement(v, w)


def _normal_seed(split):
    n = np.cross(split.e_wu, split.e_uu)
    return n / np.linalg.norm(n)


def _plane_normals_on_chain(f, split, chain, warm_orbit):
    """Unstable-plane normals at every chain point via a cofactor sweep.

    warm_orbit: backward orbit [chain[0], f^-1(chain[0]), ..., depth M]
    used only to converge the normal before it enters the chain.
    Returns normals aligned with the linear plane normal, one per chain point.
    """
    n_ref = _normal_seed(split)
    n = np.broadcast_to(n_ref, warm_orbit[-1].shape).copy()
    for k in range(len(warm_orbit) - 1, 0, -1):
        C = _cof(f.differential(warm_orbit[k]))
        n = _unit(np.einsum("...ab,...b->...a", C, n))
    normals = [n]
    for j in range(len(chain) - 1):
        C = _cof(f.differential(chain[j]))
        n = _unit(np.einsum("...ab,...b->...a", C, n))
        normals.append(n)
    return [_orient(m, n_ref) for m in normals]


def _wu_directions(f, split, pts, depth, warm, tol):
    """Weak unstable: backward push along the forward orbit, kept in-plane."""
    chain = [pts]
    for _ in range(depth):
        chain.append(f.evaluate(chain[-1]))
    warm_orbit = [pts]
    for _ in range(warm):
        warm_orbit.append(f.inverse_evaluate(warm_orbit[-1]))
    normals = _plane_normals_on_chain(f, split, chain, warm_orbit)

    def project(vec, n):
        vec = vec - np.sum(vec * n, axis=-1, keepdims=True) * n
        return _unit(vec)

    seed = project(np.broadcast_to(split.e_wu, pts.shape).copy(), normals[depth])
    v = seed.copy()
    w = seed.copy()
    for j in range(depth, 0, -1):
        D = f.differential(chain[j - 1])
        v = project(np.linalg.solve(D, v[..., None])[..., 0], normals[j - 1])
        if j <= depth - 1:
            w = project(np.linalg.solve(D, w[..., None])[..., 0], normals[j - 1])
    v = _orient(v, split.e_wu)
    w = _orient(w, split.e_wu)
    return v, _movement(v, w)


def direction_at(f, split: Splitting, x, bundle: str, tol: float = 1e-10, depth=None):
    """Unit vector(s) spanning the requested invariant bundle at x.

    bundle in {'uu', 's', 'wu', 'n'} ('n' = unstable plane normal).  Input
    (..., 3), output the same shape; computed in chunks to bound memory.
    DirectionNotConverged fires when one extra orbit step still moves the
    direction by more than tol.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts_all = np.atleast_2d(x).reshape(-1, 3)
    lam1, lam2, lam3 = split.lam1, split.lam2, split.lam3

    if bundle == "uu":
        base = depth or _depth_for(lam2 / lam3, tol)
        routine = lambda p, d: _uu_directions(f, split, p, d, tol)
    elif bundle == "s":
        base = depth or _depth_for(lam1 / lam2, tol)
        routine = lambda p, d: _s_directions(f, split, p, d, tol)
    elif bundle == "wu":
        base = depth or _depth_for(lam2 / lam3, tol)
        warm = _depth_for(lam1 / lam2, tol)
        routine = lambda p, d: _wu_directions(f, split, p, d, warm, tol)
    elif bundle == "n":
        warm = depth or _depth_for(lam1 / lam2, tol)

        def routine(p, d):
            orbit = [p]
            for _ in range(d):
                orbit.append(f.inverse_evaluate(orbit[-1]))
            res = _plane_normals_on_chain(f, split, [p], orbit)[0]
            return res, np.zeros(len(p))

        base = warm
    else:
        raise ValueError("bundle must be one of 'uu', 's', 'wu', 'n'")

    out = np.empty_like(pts_all)
    for lo in range(0, len(pts_all), _CHUNK):
        pts = wrap01(pts_all[lo:lo + _CHUNK])
        res, moved = routine(pts, base)
        # local stretch fluctuations along unlucky orbits inflate the
        # contamination prefactor; deepen just those points until they settle
        d = base
        for _ in range(3):
            bad = moved > tol
            if not np.any(bad):
                break
            d += 18
            res_bad, moved_bad = routine(pts[bad], d)
            res[bad] = res_bad
            moved[bad] = moved_bad
        if np.any(moved > tol):
            j = int(np.argmax(moved))
            raise DirectionNotConverged(
                "%s direction still moved %.3e after depth %d (tol %.1e) at %s"
                % (bundle, float(np.max(moved)), d, tol, pts[j])
            )
        out[lo:lo + _CHUNK] = res
    out = out.reshape(np.atleast_2d(x).shape)
    return out[0] if single else out.reshape(x.shape)


class FoliationFrame:
    """Direction fields of the fine splitting cached on a periodic grid.

    Sampling interpolates componentwise and renormalizes, which is safe
    because every field is globally oriented against its linear reference.
    """

    def __init__(self, f, split, fields, resolution):
        self.f = f
        self.split = split
        self.fields = fields
        self.resolution = resolution

    def sample_direction(self, bundle: str, x):
        v = self.fields[bundle].sample(wrap01(np.asarray(x, dtype=np.float64)))
        return _unit(v)


def build_frame(f, split: Splitting, resolution: int = 48, order: int = 3,
                tol: float = 1e-9) -> FoliationFrame:
    """Compute uu/s/wu direction fields and plane normals on a grid."""
    pts = grid_points(resolution, 3).reshape(-1, 3)
    fields = {}
    for bundle in ("uu", "s", "wu", "n"):
        vals = direction_at(f, split, pts, bundle, tol=tol)
        fields[bundle] = GridFunction(
            vals.reshape(resolution, resolution, resolution, 3), dim=3, order=order
        )
    return FoliationFrame(f, split, fields, resolution)


@dataclass
class LeafCurve:
    """Polyline (with tangents) along a leaf, in lift coordinates.

    points[base_index] is the basepoint; arclengths are signed from it.
    """

    bundle: str
    points: np.ndarray
    tangents: np.ndarray
    arclengths: np.ndarray
    base_index: int

    def point_at(self, s):
        """Cubic Hermite interpolation at arclength(s); s scalar or array."""
        scalar = np.ndim(s) == 0
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        idx = np.clip(np.searchsorted(self.arclengths, s) - 1, 0,
                      len(self.arclengths) - 2)
        s0 = self.arclengths[idx]
        s1 = self.arclengths[idx + 1]
        h = (s1 - s0)[:, None]
        u = ((s - s0) / (s1 - s0))[:, None]
        p0, p1 = self.points[idx], self.points[idx + 1]
        t0, t1 = self.tangents[idx], self.tangents[idx + 1]
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        out = h00 * p0 + h10 * h * t0 + h01 * p1 + h11 * h * t1
        return out[0] if scalar else out

    def nearest(self, p):
        """(arclength, torus distance, lift point) of the closest curve point."""
        p = np.asarray(p, dtype=np.float64)
        d = np.linalg.norm(wrap_half(self.points - p), axis=1)
        i = int(np.argmin(d))
        lo = max(i - 1, 0)
        hi = min(i + 1, len(self.points) - 1)
        a, b = self.arclengths[lo], self.arclengths[hi]
        # golden-section refinement on the bracketing pair of segments
        for _ in range(60):
            m1 = a + 0.382 * (b - a)
            m2 = a + 0.618 * (b - a)
            d1 = np.linalg.norm(wrap_half(self.point_at(m1) - p))
            d2 = np.linalg.norm(wrap_half(self.point_at(m2) - p))
            if d1 < d2:
                b = m2
            else:
                a = m1
            if b - a < 1e-14:
                break
        s = 0.5 * (a + b)
        q = self.point_at(s)
        return float(s), float(np.linalg.norm(wrap_half(q - p))), np.asarray(q)


def grow_leaf(
    f,
    split: Splitting,
    x,
    bundle: str,
    radius: float,
    frame: FoliationFrame | None = None,
    ds: float | None = None,
    max_turn: float = 0.05,
    min_step: float = 1e-6,
) -> LeafCurve:
    """Trace the leaf of a bundle through x out to +-radius of arclength.

    Integrates the unit direction field with RK4 and adaptive steps; the
    tangent is re-aligned with the previous one at every stage, so the
    curve never doubles back.  Exact directions (frame=None) are slow but
    transversally accurate, so they default to a larger step (RK4 keeps
    the curve error near 1e-9 anyway); both halves advance in lockstep to
    share the direction sweeps.
    """
    x = np.asarray(x, dtype=np.float64)
    if ds is None:
        ds = 2e-3 if frame is not None else 1e-2

    if frame is not None:
        field = lambda P: frame.sample_direction(bundle, P)
    else:
        field = lambda P: direction_at(f, split, P, bundle)

    t0v = field(x[None])[0]
    P = np.stack([x, x])
    T = np.stack([t0v, -t0v])
    S = np.zeros(2)
    H = np.full(2, float(ds))
    done = np.zeros(2, dtype=bool)
    hist = [
        ([x.copy()], [T[0].copy()], [0.0]),
        ([x.copy()], [T[1].copy()], [0.0]),
    ]
    cap = 64 + int(40 * radius / min(ds, 1e-3) )
    for _ in range(cap):
        if np.all(done):
            break
        act = np.flatnonzero(~done)
        h_eff = np.minimum(H[act], radius - S[act] + 1e-12)
        p = P[act]
        t_prev = T[act]

        def d(q):
            v = field(wrap01(q))
            sgn = np.sign(np.sum(v * t_prev, axis=1, keepdims=True))
            sgn[sgn == 0] = 1.0
            return v * sgn

        k1 = d(p)
        k2 = d(p + 0.5 * h_eff[:, None] * k1)
        k3 = d(p + 0.5 * h_eff[:, None] * k2)
        k4 = d(p + h_eff[:, None] * k3)
        p_new = p + (h_eff[:, None] / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t_new = d(p_new)
        turn = np.linalg.norm(t_new - t_prev, axis=1)
        for row, j in enumerate(act):
            if turn[row] > max_turn and h_eff[row] > min_step:
                H[j] = h_eff[row] / 2.0
                if H[j] < min_step:
                    raise StepCollapse(
                        "leaf step fell below %.1e at arclength %.4f"
                        % (min_step, S[j])
                    )
                continue
            P[j] = p_new[row]
            T[j] = t_new[row]
            S[j] += h_eff[row]
            hist[j][0].append(P[j].copy())
            hist[j][1].append(T[j].copy())
            hist[j][2].append(float(S[j]))
            if turn[row] < 0.2 * max_turn:
                H[j] = min(H[j] * 1.5, ds)
            if S[j] >= radius - 1e-12:
                done[j] = True
    else:
        raise StepCollapse(
            "leaf tracing did not cover radius %.3f within %d steps"
            % (radius, cap)
        )

    fw_pts, fw_tans, fw_arcs = hist[0]
    bw_pts, bw_tans, bw_arcs = hist[1]
    points = np.array(bw_pts[::-1] + fw_pts[1:])
    tangents = np.array([-t for t in bw_tans[::-1]] + fw_tans[1:])
    arclengths = np.array([-a for a in bw_arcs[::-1]] + fw_arcs[1:])
    return LeafCurve(
        bundle=bundle,
        points=points,
        tangents=tangents,
        arclengths=arclengths,
        base_index=len(bw_pts) - 1,
    )


@dataclass
class DensityValue:
    value: float
    depth: int
    tail_bound: float


def _jacobian_sweep_uu(f, split, pts, depth, extra, tol, orbit=None):
    """log D_uu f along the backward orbit of pts, k = 1..depth.

    Returns (terms, orbit): terms[k-1][i] = log |Df restricted to uu| at
    f^{-k}(pts[i]).  Directions come from a single forward push seeded
    `extra` levels below the deepest term, so every term is converged.
    An explicit orbit (orbit[n] = f^{-n}(pts)) overrides the internal
    backward iteration for the levels it covers; the seeding levels past
    its end are extended here, which is safe because direction transport
    converges at every torus point, on or off a leaf.
    """
    total = depth + extra
    orbit = [pts] if orbit is None else list(orbit[: total + 1])
    while len(orbit) < total + 1:
        orbit.append(f.inverse_evaluate(orbit[-1]))
    v = np.broadcast_to(split.e_uu, pts.shape).copy()
    terms = [None] * depth
    for k in range(total, 0, -1):
        D = f.differential(orbit[k])
        w = np.einsum("...ab,...b->...a", D, v)
        norm = np.linalg.norm(w, axis=-1)
        v = w / norm[..., None]
        if k <= depth:
            terms[k - 1] = np.log(norm)
    return terms, orbit


def _jacobian_sweep_wu(f, split, pts, depth, extra, tol, orbit=None):
    """log of the weak unstable stretch at f^{-k}(pts), k = 1..depth.

    The wu direction rides a backward push from f^{extra}(pts) down the
    chain f^{extra}(pts), ..., pts, ..., f^{-depth}(pts); the backward
    stretch of step k is the reciprocal of the forward one, so terms are
    collected as -log of the pullback norm.  An explicit orbit
    (orbit[n] = f^{-n}(pts)) replaces the internal backward iteration.
    """
    chain = [None] * (depth + extra + 1)
    back = [pts] if orbit is None else list(orbit[: depth + 1])
    while len(back) < depth + 1:
        back.append(f.inverse_evaluate(back[-1]))
    chain[extra:] = back
    for j in range(extra, 0, -1):
        chain[j - 1] = f.evaluate(chain[j])     # chain[0] = f^extra(pts)
    warm_depth = _depth_for(split.lam1 / split.lam2, tol)
    warm = [chain[-1]]
    for _ in range(warm_depth):
        warm.append(f.inverse_evaluate(warm[-1]))
    # normals along the chain, deepest first
    n_ref = _normal_seed(split)
    n = np.broadcast_to(n_ref, pts.shape).copy()
    for k in range(len(warm) - 1, 0, -1):
        C = _cof(f.differential(warm[k]))
        n = _unit(np.einsum("...ab,...b->...a", C, n))
    normals = [None] * len(chain)
    normals[-1] = _orient(n, n_ref)
    for j in range(len(chain) - 1, 0, -1):
        C = _cof(f.differential(chain[j]))
        n = _unit(np.einsum("...ab,...b->...a", C, n))
        normals[j - 1] = _orient(n, n_ref)

    v = np.broadcast_to(split.e_wu, pts.shape).copy()
    v = v - np.sum(v * normals[0], axis=-1, keepdims=True) * normals[0]
    v = _unit(v)
    terms = [None] * depth
    for j in range(0, len(chain) - 1):
        D = f.differential(chain[j + 1])
        w = np.linalg.solve(D, v[..., None])[..., 0]
        n_here = normals[j + 1]
        w = w - np.sum(w * n_here, axis=-1, keepdims=True) * n_here
        norm = np.linalg.norm(w, axis=-1)
        v = w / norm[..., None]
        k = j + 1 - extra          # chain index extra+k holds f^{-k}(pts)
        if 1 <= k <= depth:
            terms[k - 1] = -np.log(norm)
    return terms, chain[extra:]


def _jacobian_sweep_s(f, split, pts, depth, extra, tol, orbit=None):
    """log of the stable stretch of f^{-1} at f^{k}(pts), k = 1..depth.

    An explicit orbit (orbit[n] = f^{n}(pts)) overrides the internal
    forward iteration for the levels it covers.
    """
    total = depth + extra
    orbit = [pts] if orbit is None else list(orbit[: total + 1])
    while len(orbit) < total + 1:
        orbit.append(f.evaluate(orbit[-1]))
    v = np.broadcast_to(split.e_s, pts.shape).copy()
    terms = [None] * depth
    for k in range(total, 0, -1):
        D = f.differential(orbit[k - 1])
        w = np.linalg.solve(D, v[..., None])[..., 0]
        norm = np.linalg.norm(w, axis=-1)
        v = w / norm[..., None]
        if k <= depth:
            terms[k - 1] = np.log(norm)
    return terms, orbit


_SWEEPS = {"uu": _jacobian_sweep_uu, "wu": _jacobian_sweep_wu, "s": _jacobian_sweep_s}


def _density_rate(split: Splitting, bundle: str) -> float:
    rates = {
        "uu": 1.0 / split.lam3,
        "wu": 1.0 / split.lam2,
        "s": split.lam1,
    }
    if bundle not in rates:
        raise ValueError("bundle must be 'uu', 'wu' or 's'")
    return rates[bundle]


def leaf_pair_batch(
    f,
    split: Splitting,
    bundle: str,
    xs,
    offsets,
    depth: int | None = None,
    dir_tol: float = 1e-10,
):
    """Generate partner points on the invariant leaf through each x.

    A point sampled from a traced leaf sits off the true leaf by the
    tracing error, and backward orbits amplify that transverse error
    geometrically (for uu/wu the stable component grows by 1/lam1 per
    step), so deep density products over traced pairs cannot reach tight
    tolerances.  This factory avoids tracing altogether: it walks x down
    to the deep end of the product window, steps off along the exact
    bundle direction there, and maps the offset point back up.  Both the
    partner y and its whole orbit then track the leaf of x to machine
    precision at every level that matters.

    Returns (ys, orbit_x, orbit_y) with orbit_*[n] = g^{-n}(point) for
    n = 0..depth, where g = f for uu/wu and g = f^{-1} for s; hand the
    orbits to dynamical_density_batch.  offsets (scalar or per-point,
    signed) sets the approximate leaf separation at n = 0; the realised
    separation varies with the stretch fluctuations along the orbit.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    rate = _density_rate(split, bundle)
    if depth is None:
        depth = _depth_for(rate, 1e-12, pad=2)
    offsets = np.broadcast_to(
        np.asarray(offsets, dtype=np.float64), xs.shape[:1]
    ).astype(np.float64)
    step_down = f.inverse_evaluate if bundle != "s" else f.evaluate
    step_up = f.evaluate if bundle != "s" else f.inverse_evaluate
    orbit_x = [xs]
    for _ in range(depth):
        orbit_x.append(step_down(orbit_x[-1]))
    deep = orbit_x[-1]
    v = direction_at(f, split, deep, bundle, tol=dir_tol)
    w = deep + (offsets * rate**depth)[:, None] * v
    orbit_y = [None] * (depth + 1)
    orbit_y[depth] = w
    for n in range(depth, 0, -1):
        orbit_y[n - 1] = step_up(orbit_y[n])
    return orbit_y[0], orbit_x, orbit_y


def dynamical_density_batch(
    f,
    split: Splitting,
    bundle: str,
    xs,
    ys,
    depth: int | None = None,
    tol: float = 1e-8,
    dir_tol: float = 1e-10,
    orbit_x=None,
    orbit_y=None,
):
    """Conditional-measure densities rho_x(y) for batches of leaf pairs.

    rho_x(y) = prod_{k>=1} D(g^{-k} x) / D(g^{-k} y) with g the map that
    expands the bundle (f itself for uu/wu, f^{-1} for s) and D the leaf
    Jacobian of g.  The product is truncated at `depth` with a measured
    tail bound; bounds above tol raise TruncationBoundExceeded.

    Pairs sampled from traced leaf curves carry a small transverse error
    that backward iteration amplifies, so they only certify loose
    tolerances; for tight ones build the pairs with leaf_pair_batch and
    pass its orbits through orbit_x/orbit_y (orbit[n] = g^{-n}(points)).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    rate = _density_rate(split, bundle)
    if depth is None:
        depth = _depth_for(rate, 1e-12, pad=2)
    extra = _depth_for(split.lam2 / split.lam3 if bundle != "s"
                       else split.lam1 / split.lam2, dir_tol)
    sweep = _SWEEPS[bundle]
    terms_x, orbit_x = sweep(f, split, xs, depth, extra, dir_tol, orbit=orbit_x)
    terms_y, orbit_y = sweep(f, split, ys, depth, extra, dir_tol, orbit=orbit_y)
    log_rho = np.zeros(len(xs))
    dists = []
    deltas = []
    for k in range(depth):
        diff = terms_x[k] - terms_y[k]
        log_rho += diff
        dists.append(
            np.linalg.norm(wrap_half(orbit_x[k + 1] - orbit_y[k + 1]), axis=-1)
        )
        deltas.append(np.abs(diff))
    dists = np.array(dists)
    deltas = np.array(deltas)
    # effective Lipschitz constant of the log-Jacobian along the leaf
    mask = dists > 1e-13
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(mask, deltas / np.where(mask, dists, 1.0), 0.0)
    C = np.max(ratios, axis=0)
    d_last = dists[-1]
    tail = C * d_last * rate / (1.0 - rate)
    if np.any(tail > tol):
        j = int(np.argmax(tail))
        raise TruncationBoundExceeded(
            "density tail bound %.3e exceeds %.1e at pair %d (depth %d)"
            % (float(tail[j]), tol, j, depth)
        )
    return np.exp(log_rho), tail


def dynamical_density(f, split, bundle, x, y, depth=None, tol: float = 1e-8) -> DensityValue:
    """Density of the conditional measure along one leaf pair; see the batch form."""
    values, tails = dynamical_density_batch(
        f, split, bundle, np.atleast_2d(x), np.atleast_2d(y), depth=depth, tol=tol
    )
    eff_depth = depth if depth is not None else _depth_for(
        _density_rate(split, bundle), 1e-12, pad=2
    )
    return DensityValue(value=float(values[0]), depth=eff_depth, tail_bound=float(tails[0]))


def leaf_jacobian(f, split: Splitting, x, bundle: str = "uu", frame=None):
    """|Df v| for the unit bundle direction v at x (the leaf stretch of f)."""
    x = np.asarray(x, dtype=np.float64)
    v = (frame.sample_direction(bundle, x) if frame is not None
         else direction_at(f, split, x, bundle))
    w = np.einsum("...ab,...b->...a", f.differential(x), v)
    return np.linalg.norm(w, axis=-1)


def uu_holonomy_to_plane(
    f,
    split: Splitting,
    y,
    frame: FoliationFrame | None = None,
    window: float = 2.0,
    ds: float = 5e-3,
    tol: float = 1e-12,
):
    """Slide y along its strong unstable leaf to the nearest copy of T^2 = {z=0}.

    Batched; returns points with third coordinate exactly 0.  Local leaves
    are traced at most `window` units of arclength (2 by default) before
    raising HolonomyEscape; points already on the plane are returned
    unchanged.
    """
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    pts = wrap01(np.atleast_2d(y).copy())
    m = len(pts)

    def field(p):
        v = (frame.sample_direction("uu", p) if frame is not None
             else direction_at(f, split, p, "uu"))
        return v

    # signed height above the nearest plane copy; v3 > 0 by orientation
    dz = wrap_half(pts[:, 2])
    lift = pts.copy()
    lift[:, 2] = dz                  # work relative to the target copy at z = 0
    arclen = np.zeros(m)
    active = np.abs(dz) > tol
    for _ in range(int(np.ceil(window / ds)) + 8):
        if not np.any(active):
            break
        p = lift[active]
        v = field(wrap01(p))
        sign = -np.sign(p[:, 2])
        # never step past the plane: limit by remaining height
        v3 = np.maximum(np.abs(v[:, 2]), 1e-6)
        h = np.minimum(ds, 0.9 * np.abs(p[:, 2]) / v3 + 1e-14)

        def d(q, s):
            vv = field(wrap01(q))
            return vv * s[:, None]

        k1 = d(p, sign)
        k2 = d(p + 0.5 * h[:, None] * k1, sign)
        k3 = d(p + 0.5 * h[:, None] * k2, sign)
        k4 = d(p + h[:, None] * k3, sign)
        p = p + (h[:, None] / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        lift[active] = p
        arclen[active] += h
        if np.any(arclen > window):
            j = int(np.argmax(arclen))
            raise HolonomyEscape(
                "holonomy arclength exceeded %.2f before reaching the plane "
                "from %s" % (window, wrap01(y.reshape(-1, 3)[j]))
            )
        still = np.abs(lift[:, 2]) > ds * 0.05
        active = active & still

    # Newton polish: move along the leaf by -z / v3
    for _ in range(12):
        z = lift[:, 2]
        if np.max(np.abs(z)) < tol:
            break
        v = field(wrap01(lift))
        step = -z / v[:, 2]
        lift = lift + step[:, None] * v
    settled = np.abs(lift[:, 2]) < 1e-9
    if not np.all(settled):
        j = int(np.argmax(np.abs(lift[:, 2])))
        raise HolonomyEscape(
            "leaf failed to settle on the plane (height %.3e) from %s"
            % (float(lift[j, 2]), wrap01(np.atleast_2d(y))[j])
        )
    lift[:, 2] = 0.0
    out = wrap01(lift)
    out[:, 2] = 0.0
    return out[0] if single else out.reshape(y.shape)
