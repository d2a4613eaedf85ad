"""Perturbations of toral automorphisms and cone-field verification.

Two map flavors share one interface (evaluate / lift_evaluate /
differential / inverse_evaluate):

  * PerturbedMap      f(x) = L x + u(x)  with u a trigonometric polynomial
  * ComposedMap       f = phi o L o phi^{-1}  for a near-identity phi

Points are row vectors; all entry points accept batched arrays (..., 3)
and differentials come back as (..., 3, 3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConeViolation, NotInvertible, NoConvergence
from .lattice import LatticeAutomorphism, Splitting

TWO_PI = 2.0 * np.pi


def wrap01(x):
    return np.asarray(x, dtype=np.float64) % 1.0


def wrap_half(x):
    """Componentwise representative in [-1/2, 1/2)."""
    return (np.asarray(x, dtype=np.float64) + 0.5) % 1.0 - 0.5


def torus_distance(x, y):
    """Euclidean distance on the torus, batched over leading axes."""
    return np.linalg.norm(wrap_half(np.asarray(x) - np.asarray(y)), axis=-1)


@dataclass
class TrigMode:
    frequency: tuple          # integer 3-vector k
    coefficient: np.ndarray   # real 3-vector c
    phase: float = 0.0

    def as_dict(self):
        return {
            "frequency": [int(k) for k in self.frequency],
            "coefficient": [float(c) for c in self.coefficient],
            "phase": float(self.phase),
        }


class TrigPolynomialField:
    """u(x) = sum_j c_j sin(2 pi <k_j, x> + phase_j), a Z^3-periodic vector field."""

    def __init__(self, modes):
        self.modes = [
            TrigMode(
                frequency=tuple(int(k) for k in m.frequency),
                coefficient=np.asarray(m.coefficient, dtype=np.float64),
                phase=float(m.phase),
            )
            if isinstance(m, TrigMode)
            else TrigMode(
                frequency=tuple(int(k) for k in m["frequency"]),
                coefficient=np.asarray(m["coefficient"], dtype=np.float64),
                phase=float(m.get("phase", 0.0)),
            )
            for m in modes
        ]
        self._freq = np.array([m.frequency for m in self.modes], dtype=np.float64)
        self._coef = np.array([m.coefficient for m in self.modes], dtype=np.float64)
        self._phase = np.array([m.phase for m in self.modes], dtype=np.float64)

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        if not self.modes:
            return np.zeros_like(x)
        args = TWO_PI * (x @ self._freq.T) + self._phase
        return np.sin(args) @ self._coef

    def differential(self, x):
        x = np.asarray(x, dtype=np.float64)
        shape = x.shape[:-1]
        if not self.modes:
            return np.zeros(shape + (3, 3))
        args = TWO_PI * (x @ self._freq.T) + self._phase
        cos = np.cos(args)
        # Du = sum_j cos(arg_j) c_j (2 pi k_j)^T
        return np.einsum("...j,ja,jb->...ab", cos, self._coef, TWO_PI * self._freq)

    def c0_bound(self):
        if not self.modes:
            return 0.0
        return float(np.sum(np.linalg.norm(self._coef, axis=1)))

    def c1_bound(self):
        if not self.modes:
            return 0.0
        knorm = np.linalg.norm(self._freq, axis=1)
        return float(np.sum(TWO_PI * knorm * np.linalg.norm(self._coef, axis=1)))

    def scaled(self, factor):
        return TrigPolynomialField(
            [
                TrigMode(m.frequency, factor * m.coefficient, m.phase)
                for m in self.modes
            ]
        )

    def as_dict(self):
        return {"modes": [m.as_dict() for m in self.modes]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["modes"])


class PerturbedMap:
    """f(x) = L x + u(x) mod Z^3 for a trigonometric perturbation u."""

    def __init__(self, base: LatticeAutomorphism, field: TrigPolynomialField):
        self.base = base
        self.field = field
        self.matrix = base.matrix
        self._base_inv = base.inverse()

    def lift_evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x @ self.matrix.T + self.field.evaluate(x)

    def evaluate(self, x):
        return wrap01(self.lift_evaluate(x))

    def differential(self, x):
        return self.matrix + self.field.differential(x)

    def displacement(self, x):
        """f(x) - L x, the periodic part."""
        return self.field.evaluate(x)

    def inverse_evaluate(self, y, tol=1e-13, max_iter=60):
        """Unique preimage on the torus, by Newton with wrapped residuals."""
        y = wrap01(y)
        x = wrap01(y @ self._base_inv.matrix.T)
        for _ in range(max_iter):
            res = wrap_half(self.lift_evaluate(x) - y)
            if np.max(np.abs(res)) < tol:
                return wrap01(x)
            step = np.linalg.solve(self.differential(x), res[..., None])[..., 0]
            x = x - step
        raise NoConvergence(
            "inverse iteration stalled at residual %.3e"
            % float(np.max(np.abs(wrap_half(self.lift_evaluate(x) - y))))
        )

    def c1_distance_bound(self):
        """max of the coefficient bounds for |u|_C0 and |Du|_op."""
        return max(self.field.c0_bound(), self.field.c1_bound())


class NearIdentityDiffeo:
    """phi(x) = x + v(x) with v periodic and |Dv| < 1, inverted by fixed point."""

    def __init__(self, field: TrigPolynomialField, tol=1e-13, max_iter=200):
        if field.c1_bound() >= 1.0:
            raise NotInvertible(
                "displacement C1 bound %.3f >= 1; phi may fail to be a diffeomorphism"
                % field.c1_bound()
            )
        self.field = field
        self.tol = tol
        self.max_iter = max_iter

    def lift_evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x + self.field.evaluate(x)

    def evaluate(self, x):
        return wrap01(self.lift_evaluate(x))

    def differential(self, x):
        return np.eye(3) + self.field.differential(x)

    def inverse_lift(self, y, guess=None):
        """Solve x + v(x) = y in the lift (periodicity makes this global)."""
        y = np.asarray(y, dtype=np.float64)
        x = y.copy() if guess is None else np.asarray(guess, dtype=np.float64).copy()
        for _ in range(self.max_iter):
            x_next = y - self.field.evaluate(x)
            if np.max(np.abs(x_next - x)) < self.tol:
                return x_next
            x = x_next
        raise NoConvergence("phi inverse fixed point did not reach tolerance")

    def inverse_evaluate(self, y):
        return wrap01(self.inverse_lift(y))


class ComposedMap:
    """f = phi o L o phi^{-1}; exactly conjugated to L by construction."""

    def __init__(self, base: LatticeAutomorphism, phi: NearIdentityDiffeo):
        self.base = base
        self.phi = phi
        self.matrix = base.matrix
        self._base_inv = base.inverse()

    def lift_evaluate(self, x):
        z = self.phi.inverse_lift(np.asarray(x, dtype=np.float64))
        return self.phi.lift_evaluate(z @ self.matrix.T)

    def evaluate(self, x):
        return wrap01(self.lift_evaluate(x))

    def differential(self, x):
        z = self.phi.inverse_lift(np.asarray(x, dtype=np.float64))
        dz = self.phi.differential(z)
        dlz = self.phi.differential(z @ self.matrix.T)
        return dlz @ self.matrix @ np.linalg.inv(dz)

    def displacement(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.lift_evaluate(x) - x @ self.matrix.T

    def inverse_evaluate(self, y):
        z = self.phi.inverse_lift(np.asarray(y, dtype=np.float64))
        return wrap01(self.phi.lift_evaluate(z @ self._base_inv.matrix.T))


def c1_distance(f, sample_n: int = 24):
    """C1 distance from f to its linear part.

    PerturbedMap: exact coefficient bounds.  Anything else: measured on a
    sample grid (max displacement norm and max operator norm of Df - L).
    """
    if isinstance(f, PerturbedMap):
        return f.c1_distance_bound()
    from .grids import grid_points

    pts = grid_points(sample_n, 3).reshape(-1, 3)
    disp = f.displacement(pts)
    c0 = float(np.max(np.linalg.norm(disp, axis=-1)))
    dd = f.differential(pts) - f.matrix
    c1 = float(np.max(np.linalg.svd(dd, compute_uv=False)[..., 0]))
    return max(c0, c1)


def make_conjugated_perturbation(base: LatticeAutomorphism, field: TrigPolynomialField):
    """Build f = phi o L o phi^{-1} from a displacement field; returns (f, phi)."""
    phi = NearIdentityDiffeo(field)
    return ComposedMap(base, phi), phi


@dataclass
class ConeReport:
    aperture: float
    grid_n: int
    factors: dict            # bundle -> measured per-step factor
    containment: dict        # bundle -> worst containment ratio (< 1 means strict)
    plane_factor: float      # area expansion of the unstable plane field
    anosov_lambda: float     # uniform contraction rate for the Anosov estimates
    anosov_constant: float   # frame-conditioning constant


def _cone_samples(aperture, n_angles=16):
    th = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    # rows: transverse offsets (a, b) with |(a,b)| = aperture, plus the axis
    offs = np.concatenate(
        [np.stack([np.cos(th), np.sin(th)], axis=1) * aperture, [[0.0, 0.0]]]
    )
    return offs


def _bundle_stats(w_axis, w_trans, aperture):
    """Containment ratio and worst axis factor for transformed cone vectors."""
    trans = np.linalg.norm(w_trans, axis=-1)
    axis = np.abs(w_axis)
    ratio = float(np.max(trans / (aperture * axis)))
    return ratio, float(np.min(axis)), float(np.max(axis))


def verify_fine_splitting(
    f,
    split: Splitting,
    grid_n: int = 32,
    aperture: float = 1.0,
    margin: float = 1.0,
):
    """Check that Df maps the three eigen-coordinate cones strictly inside.

    Cones live in the eigenbasis of the linear part: around e_uu (forward),
    e_s (backward), e_wu (backward, restricted to the unstable plane), plus
    the plane cone transported by the cofactor matrix.  For u = 0 the
    reported factors are exactly (lam1, lam2, lam3).
    """
    from .grids import grid_points

    B = split.frame
    Binv = split.frame_inv
    pts = grid_points(grid_n, 3).reshape(-1, 3)
    Df = f.differential(pts)
    M = np.einsum("ab,nbc,cd->nad", Binv, Df, B)
    Minv = np.linalg.inv(M)
    offs = _cone_samples(aperture)

    def cone_vectors(axis_idx, trans_idx):
        v = np.zeros((len(offs), 3))
        v[:, axis_idx] = 1.0
        v[:, trans_idx[0]] = offs[:, 0]
        v[:, trans_idx[1]] = offs[:, 1]
        return v

    factors = {}
    containment = {}

    # strong unstable: forward images of the cone around e_uu
    v = cone_vectors(2, (0, 1))
    w = np.einsum("nab,sb->nsa", M, v)
    ratio, wmin, _ = _bundle_stats(w[..., 2], w[..., (0, 1)], aperture)
    containment["uu"] = ratio
    factors["uu"] = wmin
    if ratio >= margin:
        j = int(np.argmax(np.max(np.linalg.norm(w[..., (0, 1)], axis=-1)
                                 / (aperture * np.abs(w[..., 2])), axis=1)))
        raise ConeViolation(
            "uu cone not preserved (ratio %.3f) at x = %s" % (ratio, pts[j]),
            point=pts[j],
            bundle="uu",
        )

    # stable: backward images of the cone around e_s
    v = cone_vectors(0, (1, 2))
    w = np.einsum("nab,sb->nsa", Minv, v)
    ratio, wmin, _ = _bundle_stats(w[..., 0], w[..., (1, 2)], aperture)
    containment["s"] = ratio
    factors["s"] = 1.0 / wmin
    if ratio >= margin:
        j = int(np.argmax(np.max(np.linalg.norm(w[..., (1, 2)], axis=-1)
                                 / (aperture * np.abs(w[..., 0])), axis=1)))
        raise ConeViolation(
            "stable cone not preserved backward (ratio %.3f) at x = %s"
            % (ratio, pts[j]),
            point=pts[j],
            bundle="s",
        )

    # weak unstable inside the unstable plane: backward, 1-d transverse slack
    slack = np.concatenate([np.linspace(-aperture, aperture, 9), [0.0]])
    v = np.zeros((len(slack), 3))
    v[:, 1] = 1.0
    v[:, 2] = slack
    w = np.einsum("nab,sb->nsa", Minv, v)
    ratio = float(np.max(np.abs(w[..., 2]) / (aperture * np.abs(w[..., 1]))))
    containment["wu"] = ratio
    factors["wu"] = 1.0 / float(np.min(np.abs(w[..., 1])))
    if ratio >= margin:
        j = int(np.argmax(np.max(np.abs(w[..., 2]) / (aperture * np.abs(w[..., 1])), axis=1)))
        raise ConeViolation(
            "wu cone not preserved inside the unstable plane (ratio %.3f) at x = %s"
            % (ratio, pts[j]),
            point=pts[j],
            bundle="wu",
        )

    # unstable plane, transported by the cofactor matrix of M
    cof = np.linalg.det(M)[:, None, None] * np.swapaxes(Minv, -1, -2)
    v = cone_vectors(0, (1, 2))  # normals cluster around the s-axis in eigen coords
    w = np.einsum("nab,sb->nsa", cof, v)
    ratio, wmin, _ = _bundle_stats(w[..., 0], w[..., (1, 2)], aperture)
    if ratio >= margin:
        j = int(np.argmax(np.max(np.linalg.norm(w[..., (1, 2)], axis=-1)
                                 / (aperture * np.abs(w[..., 0])), axis=1)))
        raise ConeViolation(
            "unstable plane cone not preserved (ratio %.3f) at x = %s" % (ratio, pts[j]),
            point=pts[j],
            bundle="plane",
        )
    containment["plane"] = ratio
    plane_factor = wmin

    lam = max(factors["s"], 1.0 / factors["wu"])
    cond = float(np.linalg.cond(B))
    return ConeReport(
        aperture=aperture,
        grid_n=grid_n,
        factors=factors,
        containment=containment,
        plane_factor=plane_factor,
        anosov_lambda=lam,
        anosov_constant=cond * np.sqrt(1.0 + aperture**2),
    )
