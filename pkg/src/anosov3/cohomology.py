"""Cohomological equations: the translation equation on T^2 and the
multiplicative coboundary along the strong unstable bundle.

The translation equation phi(y) - phi(T y) = a(y) for T y = y + beta is
solved mode by mode; the divisors e^{2 pi i <beta, p>} - 1 are computed
from the distance of <beta, p> to the nearest integer, so their size is
exact to machine precision even at large |p|.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit, NonzeroMean, SmallDivisorFloor

TWO_PI = 2.0 * np.pi


class FourierSeries:
    """Finite Fourier series sum_p c_p e^{2 pi i <p, x>} on T^d.

    Coefficients live in a dict keyed by integer tuples.  Real-valued
    series keep the conjugate symmetry c_{-p} = conj(c_p); `evaluate`
    returns the real part, which is exact for symmetric data.
    """

    def __init__(self, coefficients, dimension: int):
        self.dimension = int(dimension)
        self.coefficients = {
            tuple(int(k) for k in p): complex(c) for p, c in coefficients.items()
        }

    @property
    def mean(self):
        return self.coefficients.get((0,) * self.dimension, 0.0 + 0.0j)

    def support(self):
        return sorted(self.coefficients.keys())

    def amplitude(self, p):
        return self.coefficients.get(tuple(p), 0.0 + 0.0j)

    def evaluate(self, points):
        pts = np.asarray(points, dtype=np.float64)
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, self.dimension)
        out = np.zeros(len(flat), dtype=np.complex128)
        if self.coefficients:
            ps = np.array(list(self.coefficients.keys()), dtype=np.float64)
            cs = np.array(list(self.coefficients.values()))
            out = np.exp(TWO_PI * 1j * (flat @ ps.T)) @ cs
        return out.real.reshape(shape)

    def conjugate_symmetry_defect(self):
        worst = 0.0
        for p, c in self.coefficients.items():
            cm = self.coefficients.get(tuple(-k for k in p), 0.0 + 0.0j)
            worst = max(worst, abs(c - np.conj(cm)))
        return worst

    def with_zero_mean(self):
        coeffs = dict(self.coefficients)
        coeffs[(0,) * self.dimension] = 0.0 + 0.0j
        return FourierSeries(coeffs, self.dimension)

    def scaled(self, factor):
        return FourierSeries(
            {p: factor * c for p, c in self.coefficients.items()}, self.dimension
        )

    def as_dict(self):
        return {
            "dimension": self.dimension,
            "modes": [
                {"frequency": list(p), "re": c.real, "im": c.imag}
                for p, c in sorted(self.coefficients.items())
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            {
                tuple(m["frequency"]): complex(m["re"], m.get("im", 0.0))
                for m in d["modes"]
            },
            dimension=d["dimension"],
        )

    @classmethod
    def from_grid(cls, values, band: int):
        """Trigonometric interpolation of grid samples, truncated to |p| <= band.

        values: samples on the uniform (N,)*d grid with N > 2*band.
        """
        values = np.asarray(values, dtype=np.float64)
        d = values.ndim
        n = values.shape[0]
        if n <= 2 * band:
            raise ValueError("grid size %d too small for band %d" % (n, band))
        spec = np.fft.fftn(values) / values.size
        coeffs = {}
        for p in itertools.product(range(-band, band + 1), repeat=d):
            if sum(k * k for k in p) > band * band:
                continue
            coeffs[p] = complex(spec[tuple(k % n for k in p)])
        return cls(coeffs, dimension=d)


@dataclass
class DivisorProfile:
    frequencies: list
    distances: np.ndarray     # dist(<beta, p>, Z) per frequency
    divisors: np.ndarray      # |e^{2 pi i <beta, p>} - 1|
    amplifications: np.ndarray
    floor: float

    @property
    def min_divisor(self):
        return float(np.min(self.divisors)) if len(self.divisors) else np.inf

    @property
    def max_amplification(self):
        return float(np.max(self.amplifications)) if len(self.amplifications) else 0.0


def solve_translation_cohomology(
    a: FourierSeries,
    beta,
    divisor_floor: float = 1e-12,
    mean_tol: float = 1e-10,
):
    """Zero-mean solution of phi(T y) - phi(y) = a(y), T y = y + beta.

    Mode by mode: phi_p = a_p / (e^{2 pi i <beta, p>} - 1) hits a small
    divisor whenever <beta, p> is nearly integer; below `divisor_floor`
    the mode is refused (SmallDivisorFloor).  A mean above `mean_tol`
    raises NonzeroMean since the equation forces mean zero.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if abs(a.mean) > mean_tol:
        raise NonzeroMean(
            "input mean %.3e exceeds tolerance %.1e" % (abs(a.mean), mean_tol)
        )
    phi = {}
    freqs = []
    dists = []
    divisors = []
    amps = []
    for p, c in a.coefficients.items():
        if all(k == 0 for k in p):
            continue
        val = float(np.dot(beta, p))
        frac = val - np.rint(val)
        divisor_c = np.exp(TWO_PI * 1j * frac) - 1.0
        divisor = abs(divisor_c)   # = 2 |sin(pi frac)|
        if divisor < divisor_floor:
            raise SmallDivisorFloor(
                "divisor %.3e below floor %.1e at frequency %s" % (divisor, divisor_floor, p),
                frequency=p,
                divisor=divisor,
            )
        phi[p] = c / divisor_c
        freqs.append(p)
        dists.append(abs(frac))
        divisors.append(divisor)
        amps.append(1.0 / divisor)
    phi[(0,) * a.dimension] = 0.0 + 0.0j
    profile = DivisorProfile(
        frequencies=freqs,
        distances=np.array(dists),
        divisors=np.array(divisors),
        amplifications=np.array(amps),
        floor=divisor_floor,
    )
    return FourierSeries(phi, a.dimension), profile


def translation_residual(phi: FourierSeries, a: FourierSeries, beta, sample_n: int = 64):
    """sup |phi(y + beta) - phi(y) - a(y)| on a sample grid."""
    from .grids import grid_points

    pts = grid_points(sample_n, a.dimension).reshape(-1, a.dimension)
    res = phi.evaluate(pts + np.asarray(beta)) - phi.evaluate(pts) - a.evaluate(pts)
    return float(np.max(np.abs(res)))


@dataclass
class RegularityLossEstimate:
    input_decay: float        # fitted s in |a_p| ~ |p|^{-s}
    output_decay: float
    loss: float
    shells: np.ndarray        # shell centers used for both fits


def _envelope_decay(series: FourierSeries):
    """Dyadic-shell envelope fit of coefficient decay; returns (s, centers)."""
    ps = np.array([p for p in series.coefficients if any(p)], dtype=np.float64)
    if len(ps) == 0:
        raise DegenerateFit("series has no nonzero frequencies")
    mags = np.array(
        [abs(series.coefficients[tuple(int(k) for k in p)]) for p in ps]
    )
    norms = np.linalg.norm(ps, axis=1)
    edges = 2.0 ** np.arange(0, int(np.ceil(np.log2(np.max(norms)))) + 1)
    centers = []
    peaks = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        inside = (norms >= lo) & (norms < hi)
        if np.any(inside) and np.max(mags[inside]) > 0:
            centers.append(np.sqrt(lo * hi))
            peaks.append(np.max(mags[inside]))
    if len(centers) < 3:
        raise DegenerateFit(
            "only %d dyadic shells populated; need at least 3" % len(centers)
        )
    slope = np.polyfit(np.log(centers), np.log(peaks), 1)[0]
    return -float(slope), np.array(centers)


def regularity_loss_estimate(a: FourierSeries, phi: FourierSeries) -> RegularityLossEstimate:
    """Decay-exponent drop from a to phi, fitted on dyadic frequency shells."""
    s_a, shells = _envelope_decay(a)
    s_phi, _ = _envelope_decay(phi)
    return RegularityLossEstimate(
        input_decay=s_a,
        output_decay=s_phi,
        loss=s_a - s_phi,
        shells=shells,
    )


def uu_jacobian(f, split, x, frame=None, depth=None):
    """log of the expansion of Df along the strong unstable direction at x."""
    from .foliation import direction_at

    x = np.asarray(x, dtype=np.float64)
    if frame is not None:
        v = frame.sample_direction("uu", x)
    else:
        v = direction_at(f, split, x, "uu", depth=depth)
    img = np.einsum("...ab,...b->...a", f.differential(x), v)
    return np.log(np.linalg.norm(img, axis=-1))


def periodic_obstruction_sums(f, split, orbits, frame=None):
    """Birkhoff sums of b = log |Df restricted to uu| - log lam3 over orbits.

    orbits: iterable of PeriodicOrbit.  Every orbit point is visited, with
    the strong unstable direction recomputed exactly at each point.  The
    sums vanish identically when the periodic data of f matches the linear
    model.
    """
    log_lam3 = np.log(split.lam3)
    sums = []
    for orb in orbits:
        pts = [np.asarray(orb.point, dtype=np.float64)]
        for _ in range(orb.period - 1):
            pts.append(f.evaluate(pts[-1]))
        pts = np.array(pts)
        total = float(np.sum(uu_jacobian(f, split, pts, frame=frame))) \
            - orb.period * log_lam3
        sums.append(total)
    return np.array(sums)


@dataclass
class CoboundaryCheck:
    residuals: np.ndarray
    max_residual: float
    samples: np.ndarray


def verify_anosov_coboundary(
    f,
    split,
    conj,
    points,
    leaf_step: float = 2e-3,
    frame=None,
) -> CoboundaryCheck:
    """Check log xi(f y) - log xi(y) = -b(y) along the strong unstable bundle.

    xi(y) is the local stretch of h^{-1} along the strong unstable leaf at
    y, measured by a symmetric difference of h^{-1} at +-leaf_step along
    the exact leaf direction, and b = log |Df|_uu - log lam3.  When the
    conjugacy transports the uu-Jacobian of f to the constant lam3, the
    residual vanishes to discretization order.
    """
    from .foliation import direction_at

    y = np.atleast_2d(np.asarray(points, dtype=np.float64))

    def log_xi(pts):
        v = direction_at(f, split, pts, "uu") if frame is None \
            else frame.sample_direction("uu", pts)
        hp = conj.apply_inverse_lift(pts + leaf_step * v)
        hm = conj.apply_inverse_lift(pts - leaf_step * v)
        return np.log(np.linalg.norm(hp - hm, axis=-1) / (2.0 * leaf_step))

    v_y = direction_at(f, split, y, "uu") if frame is None \
        else frame.sample_direction("uu", y)
    img = np.einsum("...ab,...b->...a", f.differential(y), v_y)
    b = np.log(np.linalg.norm(img, axis=-1)) - np.log(split.lam3)
    fy = f.evaluate(y)
    res = np.abs(log_xi(fy) - log_xi(y) + b)
    return CoboundaryCheck(
        residuals=res,
        max_residual=float(np.max(res)),
        samples=y,
    )
