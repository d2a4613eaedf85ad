"""Command line front end.

Every pipeline stage is exposed as a subcommand with a JSON config plus
scalar flag overrides.  Outputs are UTF-8 CSV/JSON written under an
output root resolved as --out, then $ANOSOV3_OUTPUT_ROOT, then ./runs.
Exit codes: 0 success, 1 usage or config problem, and one fixed code per
pipeline stage tag for domain errors (see `anosov3.pipeline.EXIT_CODES`).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import cohomology as coh
from . import conjugacy as cj
from . import errors as err
from . import foliation as fol
from . import lattice as lat
from . import maps as mp
from . import periodic as per
from . import returnmap as rm
from .pipeline import (
    EXIT_CODES,
    ExperimentConfig,
    build_map,
    emit_plot_data,
    run_pipeline_with_bundle,
)

# Which stage each domain error belongs to, for exit codes of the
# single-stage subcommands.  pipeline run uses the report's own stage tags.
ERROR_STAGE = {
    err.NotHyperbolic: "normalize",
    err.NotUnimodular: "normalize",
    err.NoRealNormalization: "normalize",
    err.DegenerateSpectrum: "normalize",
    err.RationalResonance: "normalize",
    err.ConeViolation: "perturb",
    err.NotInvertible: "perturb",
    err.NoConvergence: "conjugacy",
    err.ResolutionTooCoarse: "conjugacy",
    err.NoDecay: "conjugacy",
    err.InverseConjugacyAccuracy: "conjugacy",
    err.NewtonDiverged: "periodic",
    err.SingularJacobian: "periodic",
    err.DirectionNotConverged: "foliation",
    err.StepCollapse: "foliation",
    err.HolonomyEscape: "foliation",
    err.TruncationBoundExceeded: "foliation",
    err.StencilOffLeaf: "returns",
    err.DegenerateFit: "returns",
    err.NonzeroMean: "cohomology",
    err.SmallDivisorFloor: "cohomology",
}


def _exit_code_for(exc) -> int:
    stage = ERROR_STAGE.get(type(exc))
    return EXIT_CODES.get(stage, 1) if stage else 1


def _fail(msg, code=1):
    print("error: %s" % msg, file=sys.stderr)
    return code


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json_file(args.config)
    elif getattr(args, "matrix", None):
        cfg = ExperimentConfig.from_dict({"matrix": json.loads(args.matrix)})
    else:
        raise ValueError("provide --config FILE (or --matrix for spectrum)")
    cfg.apply_overrides(getattr(args, "set", None) or [])
    return cfg


def _out_dir(args, cfg, sub) -> Path:
    if getattr(args, "out", None):
        root = Path(args.out)
    elif getattr(cfg, "output_dir", ""):
        root = Path(cfg.output_dir)
    else:
        root = Path(os.environ.get("ANOSOV3_OUTPUT_ROOT", "runs"))
    out = root / cfg.name / sub
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _json_safe(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def _parse_point(text, dim):
    vals = [float(t) for t in text.split(",")]
    if len(vals) != dim:
        raise ValueError("expected %d comma-separated coordinates" % dim)
    return np.array(vals)


def cmd_spectrum(args):
    cfg = _load_config(args)
    L = lat.LatticeAutomorphism(cfg.matrix)
    rep = lat.spectrum(L)
    Ln, k = lat.normalize_spectrum(L)
    split = lat.splitting(Ln)
    cert = lat.diophantine_constant(split.beta, args.radius)
    reg = lat.critical_regularity(split.lam2, split.lam3)
    out = {
        "matrix": L.entries.tolist(),
        "eigenvalues": [{"re": z.real, "im": z.imag} for z in rep.eigenvalues],
        "unit_circle_gap": rep.unit_circle_gap,
        "charpoly_residual": rep.charpoly_residual,
        "power": k,
        "normalized_matrix": Ln.entries.tolist(),
        "lams": list(split.lams),
        "beta": list(split.beta),
        "diophantine": cert.as_dict(),
        "kappa": reg.kappa,
        "log_ratio": reg.ratio,
        "integer_ratio": reg.integer_ratio,
    }
    _dump(_json_safe(out), args.json_out)
    if args.json_out:
        print("spectrum written to %s" % args.json_out)
    return 0


def cmd_perturb_check(args):
    cfg = _load_config(args)
    L, _ = lat.normalize_spectrum(lat.LatticeAutomorphism(cfg.matrix))
    split = lat.splitting(L)
    f, _ = build_map(cfg, L)
    cone = mp.verify_fine_splitting(f, split)
    out = {
        "c1_distance": mp.c1_distance(f),
        "cone_aperture": cone.aperture,
        "grid": cone.grid_n,
        "factors": cone.factors,
        "containment": cone.containment,
        "plane_factor": cone.plane_factor,
        "anosov_lambda": cone.anosov_lambda,
        "anosov_constant": cone.anosov_constant,
    }
    _dump(_json_safe(out), args.json_out)
    print("cone check passed: lambda=%.4f" % cone.anosov_lambda)
    return 0


def cmd_conjugacy_solve(args):
    cfg = _load_config(args)
    out_dir = _out_dir(args, cfg, "conjugacy")
    L, _ = lat.normalize_spectrum(lat.LatticeAutomorphism(cfg.matrix))
    split = lat.splitting(L)
    f, _ = build_map(cfg, L)
    conj = cj.solve_conjugacy(
        L, f, split, resolution=cfg.resolution, tol=cfg.tol
    )
    off_node = cj.conjugacy_residual(conj, L, f)
    np.save(out_dir / "h_displacement.npy", conj.displacement.values)
    np.save(out_dir / "h_inverse_displacement.npy",
            conj.inverse_displacement.values)
    meta = {
        "resolution": conj.resolution,
        "tol": cfg.tol,
        "residual": conj.residual,
        "off_node_residual": off_node,
        "iterations": conj.iterations,
        "matrix": L.entries.tolist(),
        "perturbation": cfg.perturbation,
    }
    _dump(_json_safe(meta), out_dir / "conjugacy.json")
    print(
        "conjugacy solved on %d^3 in %d sweeps: node residual %.3e, "
        "off-node %.3e (grids in %s)"
        % (conj.resolution, conj.iterations, conj.residual, off_node, out_dir)
    )
    return 0


def cmd_periodic_report(args):
    cfg = _load_config(args)
    out_dir = _out_dir(args, cfg, "periodic")
    L, _ = lat.normalize_spectrum(lat.LatticeAutomorphism(cfg.matrix))
    f, _ = build_map(cfg, L)
    rep = per.obstruction_report(
        f, L, n_max=cfg.n_max, rel_tol=cfg.obstruction_rel_tol
    )
    rows = []
    for e in rep.entries:
        rows.append(
            [e.period]
            + ["%.12f" % c for c in e.point]
            + ["%.12e" % abs(m) for m in e.multipliers]
            + ["%.6e" % e.deviation]
        )
    import csv

    with open(out_dir / "periodic.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["period", "x", "y", "z", "mu1_abs", "mu2_abs", "mu3_abs", "deviation"]
        )
        w.writerows(rows)
    summary = {
        "verdict": rep.verdict,
        "max_deviation": rep.max_deviation,
        "counts": {str(k): v for k, v in rep.counts.items()},
        "orbits": len(rep.entries),
        "skipped_periods": rep.skipped_periods,
        "tolerance": rep.tolerance,
    }
    _dump(_json_safe(summary), out_dir / "summary.json")
    print(
        "periodic data %s: max deviation %.3e over %d orbits (report in %s)"
        % (
            "MATCHES" if rep.verdict else "DOES NOT MATCH",
            rep.max_deviation,
            len(rep.entries),
            out_dir,
        )
    )
    return 0


def cmd_cohomology_solve(args):
    text = args.series.strip()
    if text.startswith("{"):
        series = coh.FourierSeries.from_dict(json.loads(text))
    else:
        with open(args.series) as fh:
            series = coh.FourierSeries.from_dict(json.load(fh))
    if args.beta:
        beta = _parse_point(args.beta, 2)
    else:
        cfg = _load_config(args)
        L, _ = lat.normalize_spectrum(lat.LatticeAutomorphism(cfg.matrix))
        beta = lat.splitting(L).beta
    phi, profile = coh.solve_translation_cohomology(
        series, beta, divisor_floor=args.floor
    )
    residual = coh.translation_residual(phi, series, beta)
    out = {
        "beta": list(beta),
        "residual": residual,
        "min_divisor": profile.min_divisor,
        "max_amplification": profile.max_amplification,
        "solution": phi.as_dict(),
    }
    _dump(_json_safe(out), args.json_out)
    print("solved: residual %.3e, min divisor %.3e" % (residual, profile.min_divisor))
    return 0


def cmd_foliation_trace(args):
    cfg = _load_config(args)
    out_dir = _out_dir(args, cfg, "foliation")
    L, _ = lat.normalize_spectrum(lat.LatticeAutomorphism(cfg.matrix))
    split = lat.splitting(L)
    f, _ = build_map(cfg, L)
    x = _parse_point(args.point, 3)
    frame = None
    if args.frame_resolution > 0:
        frame = fol.build_frame(f, split, resolution=args.frame_resolution)
    leaf = fol.grow_leaf(f, split, x, args.bundle, radius=args.radius, frame=frame)
    import csv

    name = "leaf_%s.csv" % args.bundle
    with open(out_dir / name, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arclength", "x", "y", "z"])
        for s, p in zip(leaf.arclengths, leaf.points):
            w.writerow(["%.6f" % s, "%.9f" % p[0], "%.9f" % p[1], "%.9f" % p[2]])
    print(
        "%s leaf through (%s): %d points over [%.3f, %.3f] -> %s"
        % (
            args.bundle,
            args.point,
            len(leaf.points),
            leaf.arclengths[0],
            leaf.arclengths[-1],
            out_dir / name,
        )
    )
    return 0


def cmd_foliation_rebuild(args):
    cfg = _load_config(args)
    out_dir = _out_dir(args, cfg, "rebuild-wu")
    L, _ = lat.normalize_spectrum(lat.LatticeAutomorphism(cfg.matrix))
    split = lat.splitting(L)
    f, _ = build_map(cfg, L)
    conj = cj.solve_conjugacy(L, f, split, resolution=cfg.resolution, tol=cfg.tol)
    frame = fol.build_frame(f, split, resolution=cfg.frame_resolution)
    hbar = cj.quotient_conjugacy(
        conj, f, split, resolution=cfg.resolution, frame=frame
    )
    hbar_inv = cj.invert_plane_displacement(hbar)
    rng = np.random.default_rng(cfg.seed)
    x0 = rng.uniform(0.1, 0.9, 2)
    recon = rm.reconstruct_phi(
        f, split, conj, hbar, hbar_inv, frame,
        band=cfg.fourier_band, grid_m=cfg.abar_grid,
        x0=x0, seed=cfg.seed + 1,
    )

    import csv

    with open(out_dir / "profiles.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "arclength", "phi", "Phi"])
        prof = recon.profile
        for row in zip(prof["tau"], prof["arclength"], prof["phi"], prof["Phi"]):
            w.writerow(["%.6f" % row[0], "%.9f" % row[1],
                        "%.9e" % row[2], "%.9e" % row[3]])
    with open(out_dir / "rebuilt_leaf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"])
        for p in recon.rebuilt_points:
            w.writerow(["%.9f" % p[0], "%.9f" % p[1], "%.9f" % p[2]])
    with open(out_dir / "direct_leaf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"])
        for p in recon.direct_leaf.points:
            w.writerow(["%.9f" % p[0], "%.9f" % p[1], "%.9f" % p[2]])

    # return-map samples along the traced window
    taus = np.linspace(-0.3, 0.3, 7)
    base = rm.trace_plane_curve(split, x0, taus, frame)[:, 0, :]
    ret = rm.return_map_R(f, split, base[:, :2], frame, conj=conj)
    tvec = rm.return_map_T(split)
    a_vals, _ = rm.compute_a(f, split, conj, hbar_inv, base[:, :2], frame)
    with open(out_dir / "returns.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "R1", "R2", "T1", "T2", "A", "a"])
        Tx = mp.wrap01(base[:, :2] + tvec)
        for i in range(len(base)):
            w.writerow(
                ["%.9f" % base[i, 0], "%.9f" % base[i, 1],
                 "%.9f" % ret.end[i, 0], "%.9f" % ret.end[i, 1],
                 "%.9f" % Tx[i, 0], "%.9f" % Tx[i, 1],
                 "%.9e" % ret.displacement[i], "%.9e" % a_vals[i]]
            )
    _dump(_json_safe(recon.phibar.as_dict()), out_dir / "phibar.json")
    summary = {
        "hausdorff": recon.hausdorff,
        "eq_residual": recon.eq_residual,
        "abar_mean": recon.abar_mean,
        "mean_slope": recon.mean_slope,
        "min_divisor": recon.divisor_profile.min_divisor,
        "max_amplification": recon.divisor_profile.max_amplification,
        "diagnostics": recon.diagnostics,
    }
    _dump(_json_safe(summary), out_dir / "summary.json")
    print(
        "wu graph rebuilt: Hausdorff %.3e, translation residual %.3e (%s)"
        % (recon.hausdorff, recon.eq_residual, out_dir)
    )
    return 0


def cmd_pipeline_run(args):
    cfg = _load_config(args)
    out_dir = _out_dir(args, cfg, "pipeline")
    report, bundle = run_pipeline_with_bundle(cfg)
    emit_plot_data(report, bundle, out_dir)
    for s in report.stages:
        mark = {"ok": "ok  ", "failed": "FAIL", "skipped": "skip"}[s.status]
        extra = ""
        if s.status == "failed":
            extra = "  %s: %s" % (s.error, s.message)
        print("%-16s %s (%.2fs)%s" % (s.name, mark, s.seconds, extra))
    print("artifacts in %s" % out_dir)
    return report.exit_code()


def build_parser():
    p = argparse.ArgumentParser(
        prog="anosov3",
        description="rigidity experiments for hyperbolic automorphisms of T^3",
    )
    p.add_argument("--threads", type=int, default=0,
                   help="cap BLAS worker threads (0 keeps library default)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(q, matrix_ok=False):
        q.add_argument("--config", help="JSON experiment config")
        q.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scalar config field")
        q.add_argument("--out", help="output root (overrides config and env)")
        if matrix_ok:
            q.add_argument("--matrix", help="integer matrix as JSON rows")

    q = sub.add_parser("spectrum", help="eigenvalues, normalization, Diophantine data")
    common(q, matrix_ok=True)
    q.add_argument("--radius", type=int, default=64,
                   help="frequency radius for the Diophantine scan")
    q.add_argument("--json-out", help="write the JSON report here instead of stdout")
    q.set_defaults(fn=cmd_spectrum)

    q = sub.add_parser("perturb", help="perturbed-map checks")
    qs = q.add_subparsers(dest="subcommand", required=True)
    qc = qs.add_parser("check", help="C1 size and invariant-cone verification")
    common(qc, matrix_ok=True)
    qc.add_argument("--json-out", help="write the JSON report here instead of stdout")
    qc.set_defaults(fn=cmd_perturb_check)

    q = sub.add_parser("conjugacy", help="conjugacy solver")
    qs = q.add_subparsers(dest="subcommand", required=True)
    qc = qs.add_parser("solve", help="solve h o L = f o h on the grid")
    common(qc)
    qc.set_defaults(fn=cmd_conjugacy_solve)

    q = sub.add_parser("periodic", help="periodic data")
    qs = q.add_subparsers(dest="subcommand", required=True)
    qc = qs.add_parser("report", help="multiplier obstruction report")
    common(qc)
    qc.set_defaults(fn=cmd_periodic_report)

    q = sub.add_parser("cohomology", help="translation cohomological equation")
    qs = q.add_subparsers(dest="subcommand", required=True)
    qc = qs.add_parser("solve", help="solve phi o T - phi = a for given a")
    common(qc, matrix_ok=True)
    qc.add_argument("--series", required=True,
                    help="JSON FourierSeries file for the right-hand side")
    qc.add_argument("--beta", help="translation vector b1,b2 (else from matrix)")
    qc.add_argument("--floor", type=float, default=1e-12,
                    help="small-divisor floor")
    qc.add_argument("--json-out", help="write the JSON report here instead of stdout")
    qc.set_defaults(fn=cmd_cohomology_solve)

    q = sub.add_parser("foliation", help="invariant foliation tools")
    qs = q.add_subparsers(dest="subcommand", required=True)
    qt = qs.add_parser("trace", help="trace one leaf through a point")
    common(qt)
    qt.add_argument("--point", required=True, help="x,y,z on the torus")
    qt.add_argument("--bundle", choices=("uu", "wu", "s"), default="uu")
    qt.add_argument("--radius", type=float, default=0.5)
    qt.add_argument("--frame-resolution", type=int, default=0,
                    help="grid for cached directions; 0 uses exact directions")
    qt.set_defaults(fn=cmd_foliation_trace)
    qr = qs.add_parser("rebuild-wu",
                       help="reconstruct the weak unstable graph from the "
                            "cohomological solve and compare with tracing")
    common(qr)
    qr.set_defaults(fn=cmd_foliation_rebuild)

    q = sub.add_parser("pipeline", help="full experiment pipeline")
    qs = q.add_subparsers(dest="subcommand", required=True)
    qc = qs.add_parser("run", help="run all stages and emit plot data")
    common(qc)
    qc.set_defaults(fn=cmd_pipeline_run)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads and args.threads > 0:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
        try:
            import threadpoolctl

            threadpoolctl.threadpool_limits(args.threads)
        except ImportError:
            print("threadpoolctl not installed; --threads applies to "
                  "subprocesses only", file=sys.stderr)
    try:
        return args.fn(args)
    except err.Anosov3Error as exc:
        print("%s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return _exit_code_for(exc)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
