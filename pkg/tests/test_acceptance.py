"""Acceptance gates: eight end-to-end experiments with hard tolerances.

Each test prints one PASS/FAIL scoreboard line carrying the measured
numbers, then asserts, so a verbose run doubles as the summary report.
"""

import numpy as np

from anosov3.cohomology import (
    FourierSeries,
    periodic_obstruction_sums,
    solve_translation_cohomology,
    translation_residual,
)
from anosov3.conjugacy import (
    LeafRestrictedConjugacy,
    conjugacy_residual,
    regularity_probe,
)
from anosov3.foliation import direction_at, dynamical_density_batch, leaf_pair_batch
from anosov3.lattice import diophantine_constant
from anosov3.maps import torus_distance, wrap01
from anosov3.periodic import (
    enumerate_linear_periodic,
    linear_periodic_count,
    obstruction_report,
    orbit_representatives,
    refine_periodic_point,
)
from anosov3.returnmap import check_equidistance, return_map_R

PERIODIC_COUNTS = {1: 3, 2: 51, 3: 513, 4: 4539, 5: 38553, 6: 322677}
DIO_C = 0.0793605132112063


def _verdict(tag, ok, detail):
    print("%s %s  %s" % (tag, "PASS" if ok else "FAIL", detail))
    assert ok, "%s failed: %s" % (tag, detail)


def test_a1_conjugacy_recovery(L, sp, single_pair, conj_single):
    f, phi = single_pair
    rng = np.random.default_rng(41)
    pts = rng.random((4000, 3))
    sup = float(np.max(torus_distance(conj_single.apply(pts),
                                      wrap01(phi.evaluate(pts)))))
    off = conjugacy_residual(conj_single, L, f)
    grid = conj_single.residual
    ok = grid < 1e-6 and off < 1e-6 and sup < 1e-4
    _verdict("A1", ok,
             "node residual %.2e, off-node %.2e (< 1e-6), sup|h-phi| %.2e (< 1e-4)"
             % (grid, off, sup))


def test_a2_translation_cohomology_exact(sp):
    rng = np.random.default_rng(11)
    coef = {}
    for p1 in range(-64, 65):
        for p2 in range(0, 65):
            if p1 * p1 + p2 * p2 == 0 or p1 * p1 + p2 * p2 > 64 * 64:
                continue
            if p2 == 0 and p1 < 0:
                continue
            c = (rng.standard_normal() + 1j * rng.standard_normal()) \
                / (1.0 + np.hypot(p1, p2))
            coef[(p1, p2)] = c
            coef[(-p1, -p2)] = np.conj(c)
    a = FourierSeries(coef, 2)
    phi, _ = solve_translation_cohomology(a, sp.beta)
    beta = np.asarray(sp.beta)
    worst = 0.0
    for p, cp in a.coefficients.items():
        val = float(np.dot(beta, p))
        frac = val - np.rint(val)
        divisor = np.exp(2j * np.pi * frac) - 1.0
        worst = max(worst, abs(phi.amplitude(p) * divisor - cp))
    grid = translation_residual(phi, a, sp.beta, sample_n=64)
    one = FourierSeries({(1, 0): 0.5, (-1, 0): 0.5}, 2)
    phi1, _ = solve_translation_cohomology(one, sp.beta)
    val = float(np.dot(beta, (1, 0)))
    want = 0.5 / (np.exp(2j * np.pi * (val - np.rint(val))) - 1.0)
    closed = abs(phi1.amplitude((1, 0)) - want)
    ok = worst < 1e-12 and grid < 1e-9 and closed < 1e-14
    _verdict("A2", ok,
             "%d modes: coefficient residual %.2e (< 1e-12), grid %.2e (< 1e-9), "
             "closed form %.2e" % (len(coef), worst, grid, closed))


def test_a3_diophantine_certificate(sp):
    certs = [diophantine_constant(sp.beta, r) for r in (25, 50, 100, 200)]
    consts = [c.constant for c in certs]
    ok = all(c > 0.0 for c in consts)
    ok = ok and all(consts[i + 1] <= consts[i] + 1e-15 for i in range(3))
    ok = ok and abs(consts[-1] - DIO_C) < 1e-10
    ok = ok and tuple(certs[-1].minimizer) == (-6, 7)
    _verdict("A3", ok,
             "constants at radius 25/50/100/200: %s, minimizer %s"
             % (", ".join("%.8f" % c for c in consts), tuple(certs[-1].minimizer)))


def test_a4_periodic_counts(L, L_raw):
    sizes = []
    ok = True
    for n in range(1, 7):
        want = PERIODIC_COUNTS[n]
        ok = ok and linear_periodic_count(L, n) == want
        pts = enumerate_linear_periodic(L, n)
        sizes.append(len(pts))
        ok = ok and len(pts) == want
    raw_count = linear_periodic_count(L_raw, 1)
    ok = ok and raw_count == 1 and len(enumerate_linear_periodic(L_raw, 1)) == 1
    _verdict("A4", ok,
             "enumeration sizes n=1..6 %s == determinant counts, raw fixed points %d"
             % (sizes, raw_count))


def test_a5_density_identities(flin, fconj, sp):
    rng = np.random.default_rng(55)
    xs = rng.random((10, 3))
    linear_exact = True
    for bundle in ("s", "wu", "uu"):
        ys, ox, oy = leaf_pair_batch(flin, sp, bundle, xs, np.full(10, 0.2))
        rho, _ = dynamical_density_batch(flin, sp, bundle, xs, ys,
                                         orbit_x=ox, orbit_y=oy)
        linear_exact = linear_exact and bool(np.all(rho == 1.0))
    worst_norm = 0.0
    worst_law = 0.0
    for bundle in ("uu", "wu"):
        xs = rng.random((50, 3))
        offs = rng.uniform(0.05, 0.3, 50) * rng.choice([-1.0, 1.0], 50)
        ys, ox, oy = leaf_pair_batch(fconj, sp, bundle, xs, offs)
        rho, _ = dynamical_density_batch(fconj, sp, bundle, xs, ys,
                                         orbit_x=ox, orbit_y=oy)
        rho_xx, _ = dynamical_density_batch(fconj, sp, bundle, xs, xs,
                                            orbit_x=ox, orbit_y=ox)
        worst_norm = max(worst_norm, float(np.max(np.abs(rho_xx - 1.0))))
        fxs = wrap01(fconj.evaluate(xs))
        fys = wrap01(fconj.evaluate(ys))
        rho_f, _ = dynamical_density_batch(fconj, sp, bundle, fxs, fys,
                                           orbit_x=[fxs] + ox[:-1],
                                           orbit_y=[fys] + oy[:-1])
        vx = direction_at(fconj, sp, xs, bundle)
        vy = direction_at(fconj, sp, ys, bundle)
        Dx = np.linalg.norm(np.einsum("nij,nj->ni", fconj.differential(xs), vx),
                            axis=-1)
        Dy = np.linalg.norm(np.einsum("nij,nj->ni", fconj.differential(ys), vy),
                            axis=-1)
        worst_law = max(worst_law, float(np.max(np.abs(rho_f * Dy - Dx * rho))))
    ok = linear_exact and worst_norm < 1e-8 and worst_law < 1e-8
    _verdict("A5", ok,
             "linear exact %s; 100 pairs: normalization dev %.1e, "
             "transformation residual %.2e (< 1e-8)"
             % (linear_exact, worst_norm, worst_law))


def test_a6_weak_unstable_reconstruction(recon, fconj, sp, conj64, frame32,
                                         hbar_pair):
    hbar, _ = hbar_pair
    rng = np.random.default_rng(66)
    pts2 = rng.random((24, 2))
    hx = wrap01(pts2 + hbar.sample(pts2))
    Tx = wrap01(pts2 + np.asarray(sp.beta))
    lhs = wrap01(Tx + hbar.sample(Tx))
    ret = return_map_R(fconj, sp, hx, frame32, conj=conj64)
    d = np.abs(lhs - ret.end)
    d = np.minimum(d, 1.0 - d)
    intertwine = float(np.max(np.linalg.norm(d, axis=-1)))
    eq = check_equidistance(fconj, sp, conj64, frame32, np.array([0.61, 0.33]))
    ok = (recon.hausdorff < 1e-3 and intertwine < 1e-3
          and eq.residual < 1e-3 and recon.eq_residual < 1e-3)
    _verdict("A6", ok,
             "hausdorff %.2e, plane intertwining %.2e, graph equidistance %.2e, "
             "held-out leafwise translation %.2e (all < 1e-3)"
             % (recon.hausdorff, intertwine, eq.residual, recon.eq_residual))


def test_a7_rigidity_contrast(fconj, conj64, fdet, conj_det, obs_det, sp):
    probe_wu = LeafRestrictedConjugacy(fconj, sp, conj64, "wu", t0=0.08)
    fit_wu = regularity_probe(probe_wu, probe_wu.fixed_point, probe_wu.direction,
                              probe_wu.probe_scales(10))
    probe_s = LeafRestrictedConjugacy(fdet, sp, conj_det, "s", t0=0.08)
    fit_s = regularity_probe(probe_s, probe_s.fixed_point, probe_s.direction,
                             probe_s.probe_scales(6))
    ok = (fit_wu.exponent >= 0.95
          and obs_det.verdict is False
          and obs_det.max_deviation >= 1e-3
          and fit_s.exponent <= 0.9)
    _verdict("A7", ok,
             "matched wu exponent %.4f (>= 0.95); detuned verdict %s with "
             "deviation %.2e, s exponent %.4f (<= 0.9)"
             % (fit_wu.exponent, obs_det.verdict, obs_det.max_deviation,
                fit_s.exponent))


def test_a8_orbit_sums_match_verdict(L, sp, fconj, phi2, fdet):
    def orbit_sums(f, seed_fn):
        orbits = []
        for n in (1, 2):
            for x0, min_per in orbit_representatives(L, n):
                if min_per != n:
                    continue
                orbits.append(refine_periodic_point(f, seed_fn(x0), n))
        sums = periodic_obstruction_sums(f, sp, orbits)
        periods = np.array([o.period for o in orbits])
        return np.abs(sums) / periods

    rep_m = obstruction_report(fconj, L, n_max=2)
    ratios_m = orbit_sums(fconj, lambda x: wrap01(phi2.lift_evaluate(x)))
    small_m = bool(np.all(ratios_m < 1e-6))
    rep_d = obstruction_report(fdet, L, n_max=2)
    ratios_d = orbit_sums(fdet, lambda x: x)
    small_d = bool(np.all(ratios_d < 1e-6))
    ok = (small_m == rep_m.verdict) and (small_d == rep_d.verdict)
    ok = ok and rep_m.verdict and not rep_d.verdict
    _verdict("A8", ok,
             "matched: verdict %s, max|sum|/n %.2e; detuned: verdict %s, "
             "min|sum|/n %.2e (threshold 1e-6)"
             % (rep_m.verdict, float(np.max(ratios_m)),
                rep_d.verdict, float(np.min(ratios_d))))
