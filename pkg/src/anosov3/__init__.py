"""Numerical laboratory for rigidity of hyperbolic automorphisms of T^3.

The package covers the full constructive chain: integer matrix spectral
analysis and normalization, trig-polynomial perturbations, grid solution
of the conjugacy equation h o L = f o h, periodic-data obstruction tests,
invariant direction fields and leaf geometry, densities along leaves,
plane return maps, the small-divisor translation cohomology solve, and
reconstruction of the weak unstable graph from that solve.
"""

from .errors import (
    Anosov3Error,
    ConeViolation,
    DegenerateFit,
    DegenerateSpectrum,
    DirectionNotConverged,
    HolonomyEscape,
    InverseConjugacyAccuracy,
    NewtonDiverged,
    NoConvergence,
    NoDecay,
    NonzeroMean,
    NoRealNormalization,
    NotHyperbolic,
    NotInvertible,
    NotUnimodular,
    RationalResonance,
    ResolutionTooCoarse,
    SingularJacobian,
    SmallDivisorFloor,
    StencilOffLeaf,
    StepCollapse,
    TruncationBoundExceeded,
)
from .lattice import (
    LatticeAutomorphism,
    critical_regularity,
    diophantine_constant,
    normalize_spectrum,
    spectrum,
    splitting,
)
from .grids import GridFunction, grid_points
from .maps import (
    ComposedMap,
    NearIdentityDiffeo,
    PerturbedMap,
    TrigMode,
    TrigPolynomialField,
    c1_distance,
    make_conjugated_perturbation,
    torus_distance,
    verify_fine_splitting,
    wrap01,
    wrap_half,
)
from .conjugacy import (
    ConjugacyResult,
    LeafRestrictedConjugacy,
    conjugacy_residual,
    invert_plane_displacement,
    quotient_conjugacy,
    regularity_probe,
    solve_conjugacy,
    verify_foliation_preservation,
)
from .periodic import (
    ObstructionReport,
    PeriodicOrbit,
    enumerate_linear_periodic,
    linear_periodic_count,
    obstruction_report,
    orbit_representatives,
    refine_periodic_batch,
    refine_periodic_point,
    smith_normal_form,
)
from .cohomology import (
    FourierSeries,
    periodic_obstruction_sums,
    regularity_loss_estimate,
    solve_translation_cohomology,
    translation_residual,
    uu_jacobian,
    verify_anosov_coboundary,
)
from .foliation import (
    FoliationFrame,
    LeafCurve,
    build_frame,
    direction_at,
    dynamical_density,
    dynamical_density_batch,
    grow_leaf,
    leaf_pair_batch,
    leaf_jacobian,
    uu_holonomy_to_plane,
)
from .returnmap import (
    check_equidistance,
    compute_a,
    hausdorff_distance,
    reconstruct_phi,
    return_map_R,
    return_map_T,
    trace_plane_curve,
)
from .pipeline import (
    ExperimentConfig,
    PipelineReport,
    emit_plot_data,
    run_pipeline,
    run_pipeline_with_bundle,
)

__version__ = "0.1.0"
