"""Return dynamics on the slice T^2 = {z = 0} and the graph reconstruction.

The strong unstable flow first-returns T^2 to itself; pulled back through
the conjugacy this return is the rigid translation T y = y + beta.  The
travel budget A, its leafwise derivative a, and the cohomological solution
phi reconstruct weak unstable leaves as graphs over the curve
W = T^2 ∩ (unstable leaf), which is the quantitative content of the
rigidity mechanism this package exercises.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohomology import FourierSeries, solve_translation_cohomology
from .errors import (
    HolonomyEscape,
    InverseConjugacyAccuracy,
    NonzeroMean,
    StencilOffLeaf,
)
from .foliation import FoliationFrame, grow_leaf
from .grids import grid_points
from .lattice import Splitting
from .maps import wrap01


def return_map_T(split: Splitting):
    """Translation vector of the pulled-back return map on T^2."""
    return split.beta.copy()


def plane_tangent_reference(split: Splitting):
    """Unit tangent of W for the linear model: normal x e_z, fixed orientation."""
    n = np.cross(split.e_wu, split.e_uu)
    t = np.array([n[1], -n[0], 0.0])
    norm = np.linalg.norm(t)
    if norm < 0.2:
        raise StencilOffLeaf(
            "unstable plane nearly contains the z-axis; W is degenerate"
        )
    return t / norm


def _plane_tangents(frame: FoliationFrame, pts, ref):
    """Unit tangents of W at plane points: cross(normal, e_z), oriented."""
    n = frame.sample_direction("n", pts)
    t = np.stack([n[..., 1], -n[..., 0], np.zeros(n.shape[:-1])], axis=-1)
    norms = np.linalg.norm(t, axis=-1, keepdims=True)
    if float(np.min(norms)) < 0.2:
        raise StencilOffLeaf("plane field turned nearly vertical along W")
    t = t / norms
    sign = np.sign(np.sum(t * ref, axis=-1, keepdims=True))
    sign[sign == 0] = 1.0
    return t * sign


def trace_plane_curve(split: Splitting, x2, taus, frame: FoliationFrame, ds: float = 2e-3):
    """March along W from plane points x2 to each flat arclength in taus.

    x2: (m, 2) plane coordinates; taus: shared offsets, any signs.
    Returns lift points of shape (len(taus), m, 3) with zero third
    coordinate; marching is lockstep, so taus are hit exactly.
    """
    x2 = np.atleast_2d(np.asarray(x2, dtype=np.float64))
    taus = np.asarray(taus, dtype=np.float64)
    ref = plane_tangent_reference(split)
    start = np.concatenate([x2, np.zeros((len(x2), 1))], axis=1)
    out = np.empty((len(taus), len(x2), 3))

    def march(targets, direction):
        # targets ascending in |tau|, all same sign
        p = start.copy()
        s = 0.0
        for tau, slot in targets:
            goal = abs(tau)
            while s < goal - 1e-15:
                h = min(ds, goal - s)

                def d(q):
                    return direction * _plane_tangents(frame, wrap01(q), ref)

                k1 = d(p)
                k2 = d(p + 0.5 * h * k1)
                k3 = d(p + 0.5 * h * k2)
                k4 = d(p + h * k3)
                p = p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                s += h
            out[slot] = p

    pos = sorted(
        [(t, i) for i, t in enumerate(taus) if t > 0], key=lambda ti: ti[0]
    )
    neg = sorted(
        [(t, i) for i, t in enumerate(taus) if t < 0], key=lambda ti: -ti[0]
    )
    for t, i in [(t, i) for i, t in enumerate(taus) if t == 0.0]:
        out[i] = start
    march(pos, 1.0)
    march(neg, -1.0)
    return out


@dataclass
class ReturnData:
    start: np.ndarray          # (m, 2)
    end: np.ndarray            # (m, 2), wrapped
    end_lift: np.ndarray       # (m, 3), third coordinate exactly 1
    arclength: np.ndarray
    displacement: np.ndarray | None   # A(x), needs a conjugacy
    collinearity: np.ndarray | None


def return_map_R(
    f,
    split: Splitting,
    x2,
    frame: FoliationFrame,
    conj=None,
    ds: float = 0.015,
    col_tol: float = 1e-4,
    max_arclength: float = 8.0,
) -> ReturnData:
    """First return of plane points to {z = 1} along strong unstable leaves.

    The third coordinate grows monotonically (the uu field has positive
    vertical component), so the crossing is polished by Newton steps along
    the leaf.  With a conjugacy, the pullback displacement A(x) =
    <h^{-1}(R x) - h^{-1}(x), e_uu> is returned; pullback increments that
    fail to align with e_uu within col_tol raise InverseConjugacyAccuracy.
    """
    x2 = np.atleast_2d(np.asarray(x2, dtype=np.float64))
    m = len(x2)
    p = np.concatenate([x2, np.zeros((m, 1))], axis=1)
    arclen = np.zeros(m)
    active = np.ones(m, dtype=bool)

    def field(q):
        return frame.sample_direction("uu", wrap01(q))

    for _ in range(int(np.ceil(max_arclength / ds)) + 16):
        if not np.any(active):
            break
        q = p[active]
        v = field(q)
        v3 = np.maximum(v[:, 2], 1e-3)
        h = np.minimum(ds, 0.95 * (1.0 - q[:, 2]) / v3 + 1e-14)
        k1 = v
        k2 = field(q + 0.5 * h[:, None] * k1)
        k3 = field(q + 0.5 * h[:, None] * k2)
        k4 = field(q + h[:, None] * k3)
        q = q + (h[:, None] / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        p[active] = q
        arclen[active] += h
        idx = np.flatnonzero(active)
        active[idx[q[:, 2] > 1.0 - 1e-4]] = False
        if float(np.max(arclen)) > max_arclength:
            raise HolonomyEscape(
                "return trace exceeded %.1f arclength without crossing" % max_arclength
            )
    for _ in range(10):
        miss = 1.0 - p[:, 2]
        if np.max(np.abs(miss)) < 1e-13:
            break
        v = field(p)
        p = p + (miss / v[:, 2])[:, None] * v
    p[:, 2] = 1.0

    displacement = None
    collinearity = None
    if conj is not None:
        start3 = np.concatenate([x2, np.zeros((m, 1))], axis=1)
        a1 = conj.apply_inverse_lift(start3)
        a2 = conj.apply_inverse_lift(p)
        r = a2 - a1
        along = r @ split.e_uu
        residual = r - along[:, None] * split.e_uu
        collinearity = np.linalg.norm(residual, axis=1) / np.linalg.norm(r, axis=1)
        worst = float(np.max(collinearity))
        if worst > col_tol:
            j = int(np.argmax(collinearity))
            raise InverseConjugacyAccuracy(
                "pullback return increment off the e_uu axis by %.3e at %s"
                % (worst, x2[j])
            )
        displacement = along
    return ReturnData(
        start=x2,
        end=wrap01(p[:, :2]),
        end_lift=p,
        arclength=arclen,
        displacement=displacement,
        collinearity=collinearity,
    )


def _pullback_lift_2d(hbar_inv, pts_lift):
    """Lift of the plane conjugacy inverse: x + v(x mod 1), xy components."""
    xy = pts_lift[..., :2]
    return xy + hbar_inv.sample(wrap01(xy))


def compute_a(
    f,
    split: Splitting,
    conj,
    hbar_inv,
    x2,
    frame: FoliationFrame,
    h_flat: float = 0.02,
    ds_leaf: float = 0.015,
) -> tuple:
    """Leafwise derivative a = dA/ds of the return displacement along W.

    s is pullback arclength.  A central Richardson stencil at flat
    arclengths +-h, +-h/2 gives dA/dtau to O(h^4); the chain factor
    ds/dtau comes from differencing the pullback lift along the same
    stencil.  Returns (a values, diagnostics dict).
    """
    x2 = np.atleast_2d(np.asarray(x2, dtype=np.float64))
    m = len(x2)
    taus = np.array([-h_flat, -0.5 * h_flat, 0.5 * h_flat, h_flat])
    stencil = trace_plane_curve(split, x2, taus, frame)     # (4, m, 3)
    flat = stencil.reshape(-1, 3)
    ret = return_map_R(f, split, wrap01(flat)[:, :2], frame, conj=conj, ds=ds_leaf)
    # the stencil never wraps (h_flat is tiny), so lifts stay coherent
    A = ret.displacement.reshape(4, m)
    D_h = (A[3] - A[0]) / (2.0 * h_flat)
    D_half = (A[2] - A[1]) / h_flat
    dA_dtau = (4.0 * D_half - D_h) / 3.0

    pull = _pullback_lift_2d(hbar_inv, stencil)
    J_h = np.linalg.norm(pull[3] - pull[0], axis=-1) / (2.0 * h_flat)
    J_half = np.linalg.norm(pull[2] - pull[1], axis=-1) / h_flat
    J = (4.0 * J_half - J_h) / 3.0

    diagnostics = {
        "richardson_defect": float(np.max(np.abs(D_half - D_h))),
        "collinearity": float(np.max(ret.collinearity)),
        "pullback_speed_range": (float(np.min(J)), float(np.max(J))),
    }
    return dA_dtau / J, diagnostics


@dataclass
class EquidistanceCheck:
    residual: float            # after removing the fitted constant
    fitted_constant: float
    predicted_constant: float  # -A(x0); the identity pins the constant
    coplanarity: float         # worst least-squares defect of the graph solves
    values: np.ndarray


def _graph_heights(split, anchor_lift, pts_lift):
    """Solve x + t e_uu = anchor + s e_wu for each point; returns (t, defect)."""
    M = np.column_stack([split.e_uu, -split.e_wu])
    sol, _, _, _ = np.linalg.lstsq(M, (anchor_lift - pts_lift).T, rcond=None)
    t = sol[0]
    defect = np.linalg.norm(M @ sol - (anchor_lift - pts_lift).T, axis=0)
    return t, float(np.max(defect))


def check_equidistance(
    f,
    split: Splitting,
    conj,
    frame: FoliationFrame,
    x0,
    t0: float = 0.3,
    span: float = 0.05,
    n_stencil: int = 7,
) -> EquidistanceCheck:
    """Test that graph heights over W drop by exactly the travel budget A.

    Anchors sit t0 above the pullbacks of x0 and of its return R(x0); for
    stencil points x along W the quantity Phi(x) - Phi'(R x) - A(x) must be
    the constant -A(x0).  The residual reported is about the fitted
    constant; the fitted and predicted constants are both exposed.
    """
    x0 = np.asarray(x0, dtype=np.float64)[:2]
    taus = np.linspace(-span, span, n_stencil)
    pts = trace_plane_curve(split, x0[None, :], taus, frame)[:, 0, :]  # (n, 3)
    ret = return_map_R(f, split, wrap01(pts)[:, :2], frame, conj=conj)
    # each return march starts from a wrapped representative; undo those
    # per-point lattice shifts (R commutes with deck translations) so the
    # whole family of end lifts is coherent with the unwrapped stencil
    end_lift = ret.end_lift + (pts - wrap01(pts))
    xbar = conj.apply_inverse_lift(pts)
    xbar_r = conj.apply_inverse_lift(end_lift)
    c = n_stencil // 2
    anchor = xbar[c] + t0 * split.e_uu
    anchor_r = xbar_r[c] + t0 * split.e_uu
    phi_x, defect_a = _graph_heights(split, anchor, xbar)
    phi_rx, defect_b = _graph_heights(split, anchor_r, xbar_r)
    A = ret.displacement
    g = phi_x - phi_rx - A
    fitted = float(np.mean(g))
    residual = float(np.max(np.abs(g - fitted)))
    return EquidistanceCheck(
        residual=residual,
        fitted_constant=fitted,
        predicted_constant=float(-A[c]),
        coplanarity=max(defect_a, defect_b),
        values=g,
    )


def point_to_polyline(queries, poly):
    """Distance from each query to a polyline (both in common lift coords)."""
    queries = np.atleast_2d(queries)
    a = poly[:-1]
    b = poly[1:]
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    diff = queries[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("qsd,sd->qs", diff, ab) / denom, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = np.linalg.norm(queries[:, None, :] - proj, axis=-1)
    return np.min(d, axis=1)


def hausdorff_distance(poly_a, poly_b):
    """Symmetric polyline Hausdorff distance in shared lift coordinates."""
    d_ab = float(np.max(point_to_polyline(poly_a, poly_b)))
    d_ba = float(np.max(point_to_polyline(poly_b, poly_a)))
    return max(d_ab, d_ba)


@dataclass
class PhiReconstruction:
    phibar: FourierSeries
    divisor_profile: object
    mean_slope: float              # constant recovered from direct geometry
    anchor_height: float
    base_point: np.ndarray
    profile: dict                  # tau, pullback arclength, phi, Phi, A-free data
    rebuilt_points: np.ndarray     # graph leaf in lift coordinates
    direct_leaf: object            # LeafCurve grown independently
    hausdorff: float
    eq_residual: float             # held-out phi(x) - phi(Rx) - a(x)
    abar_mean: float
    diagnostics: dict


def reconstruct_phi(
    f,
    split: Splitting,
    conj,
    hbar,
    hbar_inv,
    frame: FoliationFrame,
    band: int = 32,
    grid_m: int = 96,
    x0=(0.13, 0.41),
    t0: float = 0.25,
    window: float = 1.3,
    h_flat: float = 0.02,
    mean_cap: float = 1e-3,
    compare_radius: float = 1.0,
    seed: int = 7,
    n_holdout: int = 16,
) -> PhiReconstruction:
    """Rebuild a weak unstable leaf from the small-divisor solution phi.

    Pipeline: sample abar = a o hbar on a uniform T^2 grid, solve the
    translation cohomology for phibar, transport back with hbar^{-1},
    recover the lost mean slope from direct graph geometry at one anchor,
    integrate along W to the graph Phi, and compare the rebuilt leaf with
    an independently grown one.
    """
    beta = split.beta
    # 1/2: abar on the uniform grid of the translation coordinates
    ybar = grid_points(grid_m, 2).reshape(-1, 2)
    x_pts = wrap01(ybar + hbar.sample(ybar))
    a_vals, diag = compute_a(f, split, conj, hbar_inv, x_pts, frame, h_flat=h_flat)
    abar_mean = float(np.mean(a_vals))
    if abs(abar_mean) > mean_cap:
        raise NonzeroMean(
            "abar mean %.3e exceeds %.1e; upstream bias in a or hbar"
            % (abar_mean, mean_cap)
        )
    abar = FourierSeries.from_grid(
        (a_vals - abar_mean).reshape(grid_m, grid_m), band=band
    )
    # the leafwise identity is phi - phi o T = abar; the solver's convention
    # is phi o T - phi = rhs, so hand it the negated series
    phibar, profile = solve_translation_cohomology(
        abar.with_zero_mean().scaled(-1.0), beta
    )

    def phi_solved(plane_pts_lift):
        yb = _pullback_lift_2d(hbar_inv, plane_pts_lift)
        return phibar.evaluate(yb)

    # dense trace of W through x0 and pullback arclength along it
    x0 = np.asarray(x0, dtype=np.float64)[:2]
    margin = 2.5 * h_flat
    n_dense = int(np.ceil(2 * (window + margin) / 2e-3)) + 1
    taus = np.linspace(-(window + margin), window + margin, n_dense)
    dense = trace_plane_curve(split, x0[None, :], taus, frame)[:, 0, :]
    pull = _pullback_lift_2d(hbar_inv, dense)
    seg = np.linalg.norm(np.diff(pull, axis=0), axis=1)
    s_pull = np.concatenate([[0.0], np.cumsum(seg)])
    s_pull -= np.interp(0.0, taus, s_pull)          # s = 0 at x0

    # direct anchor: the graph height of the wu leaf through ybar0 is t0 at x0;
    # its slope at x0 calibrates the mean of phi
    c = int(np.argmin(np.abs(taus)))
    xbar_dense = conj.apply_inverse_lift(dense)
    anchor = xbar_dense[c] + t0 * split.e_uu
    k = int(round(h_flat / (taus[1] - taus[0])))
    sl = slice(c - 2 * k, c + 2 * k + 1, k)         # 5 points at +-h, +-h/2
    phi_direct, defect = _graph_heights(split, anchor, xbar_dense[sl])
    s_sten = s_pull[sl]
    # Richardson derivative of the direct graph in pullback arclength
    Dh = (phi_direct[4] - phi_direct[0]) / (s_sten[4] - s_sten[0])
    Dhalf = (phi_direct[3] - phi_direct[1]) / (s_sten[3] - s_sten[1])
    slope_direct = (4.0 * Dhalf - Dh) / 3.0
    phi0_solved = float(phi_solved(dense[c][None, :])[0])
    C = float(slope_direct - phi0_solved)

    # integrate phi + C along W in pullback arclength
    phi_dense = phi_solved(dense) + C
    Phi = np.concatenate(
        [[0.0], np.cumsum(0.5 * (phi_dense[1:] + phi_dense[:-1]) * np.diff(s_pull))]
    )
    Phi += t0 - np.interp(0.0, taus, Phi)

    # rebuilt leaf: push the graph back through h
    ybar_lift = xbar_dense + Phi[:, None] * split.e_uu
    rebuilt = ybar_lift + conj.displacement.sample(wrap01(ybar_lift))

    # independent leaf through the anchor point
    y0_lift = ybar_lift[c] + conj.displacement.sample(wrap01(ybar_lift[c]))
    direct = grow_leaf(
        f, split, wrap01(y0_lift), "wu",
        radius=compare_radius + 0.1, frame=frame, ds=2e-3,
    )
    # align the direct leaf's lift with the rebuilt one at the basepoint
    shift = y0_lift - direct.points[direct.base_index]
    direct_pts = direct.points + np.rint(shift)
    keep_d = np.abs(direct.arclengths) <= compare_radius
    arc_rebuilt = np.concatenate(
        [[0.0], np.cumsum(np.linalg.norm(np.diff(rebuilt, axis=0), axis=1))]
    )
    arc_rebuilt -= arc_rebuilt[c]
    keep_r = np.abs(arc_rebuilt) <= compare_radius
    hd = max(
        float(np.max(point_to_polyline(direct_pts[keep_d], rebuilt))),
        float(np.max(point_to_polyline(rebuilt[keep_r], direct_pts))),
    )

    # held-out cohomology residual phi(x) - phi(R x) - a(x) at fresh points
    rng = np.random.default_rng(seed)
    fresh_tau = rng.uniform(-window, window, n_holdout)
    fresh = trace_plane_curve(split, x0[None, :], fresh_tau, frame)[:, 0, :]
    fresh2 = wrap01(fresh)[:, :2]
    a_fresh, _ = compute_a(f, split, conj, hbar_inv, fresh2, frame, h_flat=h_flat)
    ret = return_map_R(f, split, fresh2, frame, conj=conj)
    phi_here = phi_solved(fresh)
    phi_there = phibar.evaluate(
        _pullback_lift_2d(hbar_inv, ret.end_lift)
    )
    eq_res = float(np.max(np.abs(phi_here - phi_there - (a_fresh - abar_mean))))

    return PhiReconstruction(
        phibar=phibar,
        divisor_profile=profile,
        mean_slope=C,
        anchor_height=t0,
        base_point=x0,
        profile={
            "tau": taus,
            "arclength": s_pull,
            "phi": phi_dense,
            "Phi": Phi,
            "graph_defect": defect,
        },
        rebuilt_points=rebuilt,
        direct_leaf=direct,
        hausdorff=hd,
        eq_residual=eq_res,
        abar_mean=abar_mean,
        diagnostics=diag,
    )
