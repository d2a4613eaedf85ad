"""End-to-end experiment driver: normalize, perturb, conjugate, verify.

A pipeline run walks the stages in dependency order and stops recording
results (but not the report) at the first domain error; downstream stages
are marked skipped rather than faked.  All random choices flow from the
single config seed, so reruns are reproducible.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import cohomology as coh
from . import conjugacy as cj
from . import foliation as fol
from . import lattice as lat
from . import maps as mp
from . import periodic as per
from . import returnmap as rm
from .errors import Anosov3Error

STAGES = (
    "normalize",
    "perturb",
    "conjugacy",
    "periodic",
    "foliation",
    "returns",
    "cohomology",
    "reconstruction",
    "probe",
)

EXIT_CODES = {name: i + 2 for i, name in enumerate(STAGES)}


@dataclass
class ExperimentConfig:
    matrix: list
    perturbation: dict = field(default_factory=lambda: {"kind": "none"})
    resolution: int = 64
    tol: float = 1e-8
    n_max: int = 3
    fourier_band: int = 32
    abar_grid: int = 96
    frame_resolution: int = 48
    diophantine_radius: int = 64
    obstruction_rel_tol: float = 1e-6
    seed: int = 0
    run_reconstruction: bool = True
    run_probe: bool = True
    name: str = "experiment"
    output_dir: str = ""

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise ValueError("unknown config keys: %s" % sorted(bad))
        if "matrix" not in d:
            raise ValueError("config needs a 'matrix' entry")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)

    def apply_overrides(self, pairs):
        """Apply key=value strings; values are coerced to the field's type."""
        for pair in pairs:
            if "=" not in pair:
                raise ValueError("override %r is not key=value" % pair)
            key, _, raw = pair.partition("=")
            if key not in self.__dataclass_fields__:
                raise ValueError("unknown config key %r" % key)
            current = getattr(self, key)
            if isinstance(current, bool):
                value = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            elif isinstance(current, str):
                value = raw
            else:
                value = json.loads(raw)
            setattr(self, key, value)
        return self


@dataclass
class StageResult:
    name: str
    status: str                # ok | failed | skipped
    seconds: float = 0.0
    data: dict = field(default_factory=dict)
    error: str = ""
    message: str = ""


@dataclass
class PipelineReport:
    config: dict
    stages: list

    @property
    def ok(self):
        return all(s.status == "ok" for s in self.stages)

    def first_failure(self):
        for s in self.stages:
            if s.status == "failed":
                return s
        return None

    def exit_code(self):
        bad = self.first_failure()
        return EXIT_CODES[bad.name] if bad else 0

    def stage(self, name):
        for s in self.stages:
            if s.name == name:
                return s
        return None

    def to_dict(self):
        return {
            "config": self.config,
            "ok": self.ok,
            "stages": [asdict(s) for s in self.stages],
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


@dataclass
class PipelineBundle:
    """In-memory objects produced by a run, for plotting and tests."""

    L_raw: object = None
    L: object = None
    split: object = None
    f: object = None
    conj: object = None
    frame: object = None
    hbar: object = None
    hbar_inv: object = None
    obstruction: object = None
    recon: object = None
    probe_fit: object = None
    leaves: list = field(default_factory=list)
    abar_series: object = None


def build_map(config: ExperimentConfig, L: lat.LatticeAutomorphism):
    spec = config.perturbation or {"kind": "none"}
    kind = spec.get("kind", "none")
    modes = spec.get("modes", [])
    scale = float(spec.get("scale", 1.0))
    fld = mp.TrigPolynomialField(modes).scaled(scale)
    if "epsilon" in spec and fld.c0_bound() > 0.0:
        # epsilon names the target C0 size; rescale the mode list to it
        fld = fld.scaled(float(spec["epsilon"]) / fld.c0_bound())
    if kind == "none":
        return mp.PerturbedMap(L, mp.TrigPolynomialField([])), None
    if kind == "additive":
        return mp.PerturbedMap(L, fld), None
    if kind == "conjugacy":
        f, phi = mp.make_conjugated_perturbation(L, fld)
        return f, phi
    raise ValueError("perturbation kind must be none, additive or conjugacy")


def _json_safe(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def run_pipeline(config: ExperimentConfig, out_dir=None) -> PipelineReport:
    report, bundle = run_pipeline_with_bundle(config)
    if out_dir is not None:
        emit_plot_data(report, bundle, out_dir)
    return report


def run_pipeline_with_bundle(config: ExperimentConfig):
    rng = np.random.default_rng(config.seed)
    stages = []
    bundle = PipelineBundle()
    failed = False

    def run_stage(name, fn):
        nonlocal failed
        if failed:
            stages.append(StageResult(name=name, status="skipped"))
            return
        t0 = time.perf_counter()
        try:
            data = fn()
            stages.append(
                StageResult(
                    name=name,
                    status="ok",
                    seconds=round(time.perf_counter() - t0, 3),
                    data=_json_safe(data or {}),
                )
            )
        except Anosov3Error as exc:
            failed = True
            stages.append(
                StageResult(
                    name=name,
                    status="failed",
                    seconds=round(time.perf_counter() - t0, 3),
                    error=type(exc).__name__,
                    message=str(exc),
                )
            )

    def stage_normalize():
        bundle.L_raw = lat.LatticeAutomorphism(config.matrix)
        raw_spec = lat.spectrum(bundle.L_raw)
        bundle.L, power = lat.normalize_spectrum(bundle.L_raw)
        bundle.split = lat.splitting(bundle.L)
        s = bundle.split
        cert = lat.diophantine_constant(s.beta, config.diophantine_radius)
        reg = lat.critical_regularity(s.lam2, s.lam3)
        return {
            "raw_eigenvalues": [
                {"re": z.real, "im": z.imag} for z in raw_spec.eigenvalues
            ],
            "power": power,
            "normalized_matrix": bundle.L.entries,
            "lams": [s.lam1, s.lam2, s.lam3],
            "beta": s.beta,
            "diophantine": cert.as_dict(),
            "kappa": reg.kappa,
            "log_ratio": reg.ratio,
            "integer_ratio": reg.integer_ratio,
        }

    def stage_perturb():
        bundle.f, _ = build_map(config, bundle.L)
        cone = mp.verify_fine_splitting(bundle.f, bundle.split)
        return {
            "c1_distance": mp.c1_distance(bundle.f),
            "cone_factors": cone.factors,
            "cone_containment": cone.containment,
            "anosov_lambda": cone.anosov_lambda,
            "anosov_constant": cone.anosov_constant,
        }

    def stage_conjugacy():
        bundle.conj = cj.solve_conjugacy(
            bundle.L,
            bundle.f,
            bundle.split,
            resolution=config.resolution,
            tol=config.tol,
        )
        off_node = cj.conjugacy_residual(bundle.conj, bundle.L, bundle.f)
        x = rng.uniform(0.0, 1.0, 3)
        decay_s = cj.verify_foliation_preservation(
            bundle.conj, bundle.f, bundle.split, x, "s"
        )
        decay_uu = cj.verify_foliation_preservation(
            bundle.conj, bundle.f, bundle.split, x, "uu"
        )
        disp = bundle.conj.displacement.values
        return {
            "residual": bundle.conj.residual,
            "iterations": bundle.conj.iterations,
            "off_node_residual": off_node,
            "displacement_sup": float(np.max(np.linalg.norm(disp, axis=-1))),
            "decay_rate_s": decay_s.rate,
            "decay_rate_s_reference": decay_s.reference,
            "decay_rate_uu": decay_uu.rate,
            "decay_rate_uu_reference": decay_uu.reference,
        }

    def stage_periodic():
        bundle.obstruction = per.obstruction_report(
            bundle.f,
            bundle.L,
            n_max=config.n_max,
            rel_tol=config.obstruction_rel_tol,
        )
        rep = bundle.obstruction
        return {
            "verdict": rep.verdict,
            "max_deviation": rep.max_deviation,
            "counts": rep.counts,
            "orbits": len(rep.entries),
            "skipped_periods": rep.skipped_periods,
        }

    def stage_foliation():
        bundle.frame = fol.build_frame(
            bundle.f, bundle.split, resolution=config.frame_resolution
        )
        bundle.hbar = cj.quotient_conjugacy(
            bundle.conj, bundle.f, bundle.split,
            resolution=config.resolution, frame=bundle.frame,
        )
        bundle.hbar_inv = cj.invert_plane_displacement(bundle.hbar)
        # smoke-test the density product on a few uu-leaf pairs
        base = rng.uniform(0.0, 1.0, (3, 3))
        offs = rng.uniform(0.05, 0.2, 3) * rng.choice([-1.0, 1.0], 3)
        ys, orb_x, orb_y = fol.leaf_pair_batch(
            bundle.f, bundle.split, "uu", base, offs
        )
        dens, tails = fol.dynamical_density_batch(
            bundle.f, bundle.split, "uu", base, ys,
            orbit_x=orb_x, orbit_y=orb_y,
        )
        x0 = rng.uniform(0.0, 1.0, 2)
        bundle.leaves = [
            ("uu", fol.grow_leaf(bundle.f, bundle.split,
                                 np.concatenate([x0, [0.0]]), "uu",
                                 radius=1.0, frame=bundle.frame)),
            ("wu", fol.grow_leaf(bundle.f, bundle.split,
                                 np.concatenate([x0, [0.0]]), "wu",
                                 radius=1.0, frame=bundle.frame)),
            ("s", fol.grow_leaf(bundle.f, bundle.split,
                                np.concatenate([x0, [0.0]]), "s",
                                radius=1.0, frame=bundle.frame)),
        ]
        return {
            "frame_resolution": config.frame_resolution,
            "hbar_sup": float(np.max(np.abs(bundle.hbar.values))),
            "density_samples": dens,
            "density_tail_bounds": tails,
        }

    def stage_returns():
        x0 = rng.uniform(0.0, 1.0, 2)
        ret = rm.return_map_R(
            bundle.f, bundle.split, x0[None, :], bundle.frame, conj=bundle.conj
        )
        eq = rm.check_equidistance(
            bundle.f, bundle.split, bundle.conj, bundle.frame, x0
        )
        return {
            "translation": rm.return_map_T(bundle.split),
            "sample_point": x0,
            "A_sample": float(ret.displacement[0]),
            "collinearity": float(ret.collinearity[0]),
            "equidistance_residual": eq.residual,
            "fitted_constant": eq.fitted_constant,
            "predicted_constant": eq.predicted_constant,
            "coplanarity": eq.coplanarity,
        }

    def stage_cohomology():
        pts = rng.uniform(0.0, 1.0, (24, 3))
        check = coh.verify_anosov_coboundary(
            bundle.f, bundle.split, bundle.conj, pts, frame=None
        )
        reps = [e for e in bundle.obstruction.entries if e.period <= 2]
        orbs = [
            per.PeriodicOrbit(
                point=e.point, period=e.period, multipliers=e.multipliers,
                newton_steps=0, residual=0.0,
            )
            for e in reps
        ]
        sums = coh.periodic_obstruction_sums(bundle.f, bundle.split, orbs)
        return {
            "coboundary_residual": check.max_residual,
            "orbit_sums_max": float(np.max(np.abs(sums))) if len(sums) else 0.0,
            "orbit_count": len(orbs),
        }

    def stage_reconstruction():
        if not config.run_reconstruction:
            return {"skipped_by_config": True}
        x0 = rng.uniform(0.1, 0.9, 2)
        bundle.recon = rm.reconstruct_phi(
            bundle.f, bundle.split, bundle.conj, bundle.hbar, bundle.hbar_inv,
            bundle.frame, band=config.fourier_band, grid_m=config.abar_grid,
            x0=x0, seed=config.seed + 1,
        )
        r = bundle.recon
        return {
            "hausdorff": r.hausdorff,
            "eq_residual": r.eq_residual,
            "abar_mean": r.abar_mean,
            "mean_slope": r.mean_slope,
            "min_divisor": r.divisor_profile.min_divisor,
            "max_amplification": r.divisor_profile.max_amplification,
            "diagnostics": r.diagnostics,
        }

    def stage_probe():
        if not config.run_probe:
            return {"skipped_by_config": True}
        matched = bundle.obstruction.verdict
        bundle_name = "wu" if matched else "s"
        probe = cj.LeafRestrictedConjugacy(
            bundle.f, bundle.split, bundle.conj, bundle_name, t0=0.08
        )
        # the fit insists on three decades of scales: 10 backward steps for
        # wu (ratio lam2^10 ~ 5e3), 6 forward steps for s (lam1^-6 ~ 3e5)
        scales = probe.probe_scales(10 if bundle_name == "wu" else 6)
        fit = cj.regularity_probe(probe, probe.fixed_point, probe.direction, scales)
        bundle.probe_fit = fit
        return {
            "bundle": bundle_name,
            "exponent": fit.exponent,
            "scales": fit.scales,
            "increments": fit.increments,
        }

    run_stage("normalize", stage_normalize)
    run_stage("perturb", stage_perturb)
    run_stage("conjugacy", stage_conjugacy)
    run_stage("periodic", stage_periodic)
    run_stage("foliation", stage_foliation)
    run_stage("returns", stage_returns)
    run_stage("cohomology", stage_cohomology)
    run_stage("reconstruction", stage_reconstruction)
    run_stage("probe", stage_probe)

    report = PipelineReport(config=config.to_dict(), stages=stages)
    return report, bundle


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def emit_plot_data(report: PipelineReport, bundle: PipelineBundle, out_dir):
    """Write the plot-ready artifacts for a run; missing stages leave
    headers-only files so downstream tooling sees a stable schema."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / "report.json")

    rows = []
    for name, leaf in bundle.leaves or []:
        for s, p in zip(leaf.arclengths, leaf.points):
            rows.append([name, "%.6f" % s, "%.9f" % p[0], "%.9f" % p[1], "%.9f" % p[2]])
    _write_csv(out / "leaves.csv", ["bundle", "arclength", "x", "y", "z"], rows)

    rows = []
    if bundle.recon is not None:
        prof = bundle.recon.profile
        for tau, s, phi, Phi in zip(
            prof["tau"], prof["arclength"], prof["phi"], prof["Phi"]
        ):
            rows.append(["%.6f" % tau, "%.9f" % s, "%.9e" % phi, "%.9e" % Phi])
    _write_csv(out / "profiles.csv", ["tau", "arclength", "phi", "Phi"], rows)

    rows = []
    if bundle.recon is not None:
        phibar = bundle.recon.phibar
        for p in phibar.support():
            if not any(p):
                continue
            rows.append(
                [p[0], p[1], "%.6e" % np.linalg.norm(p), "%.9e" % abs(phibar.amplitude(p))]
            )
    _write_csv(out / "fourier.csv", ["p1", "p2", "abs_p", "amplitude"], rows)

    rows = []
    if bundle.probe_fit is not None:
        for t, d in zip(bundle.probe_fit.scales, bundle.probe_fit.increments):
            rows.append(["%.9e" % t, "%.9e" % d])
    _write_csv(out / "holder.csv", ["scale", "increment"], rows)

    if bundle.conj is not None:
        np.save(out / "h_displacement.npy", bundle.conj.displacement.values)
        np.save(out / "h_inverse_displacement.npy",
                bundle.conj.inverse_displacement.values)

    rows = []
    if bundle.obstruction is not None:
        for e in bundle.obstruction.entries:
            rows.append(
                [e.period]
                + ["%.12f" % c for c in e.point]
                + ["%.9e" % abs(m) for m in e.multipliers]
                + ["%.3e" % e.deviation]
            )
    _write_csv(
        out / "periodic.csv",
        ["period", "x", "y", "z", "mu1_abs", "mu2_abs", "mu3_abs", "deviation"],
        rows,
    )
