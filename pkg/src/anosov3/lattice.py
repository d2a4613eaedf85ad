"""Integer 3x3 matrices acting on the 3-torus and their spectral data.

Everything downstream keys off the normalized ordering

    0 < lam1 < 1 < lam2 < lam3,

obtained from a hyperbolic unimodular integer matrix by passing to a power
L^k with k in {1, -1, 2, -2}.  Eigenvalues are polished against the exact
integer characteristic polynomial, so spectral quantities are good to
machine precision rather than to whatever LAPACK returns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSpectrum,
    NoRealNormalization,
    NotHyperbolic,
    NotUnimodular,
    RationalResonance,
)

UNIT_CIRCLE_GAP_TOL = 1e-8
CHARPOLY_RESIDUAL_TOL = 1e-10
FRAME_DET_TOL = 1e-6
EIGENVALUE_SPACING_TOL = 1e-6


def _as_int_matrix(entries):
    m = np.asarray(entries)
    mi = np.rint(m).astype(np.int64)
    if not np.allclose(m, mi, atol=1e-9):
        raise ValueError("matrix entries must be integers")
    if mi.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix, got shape %s" % (mi.shape,))
    return mi


def _int_det(m) -> int:
    a = [[int(x) for x in row] for row in m]
    return (
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    )


def _int_adjugate(m):
    a = [[int(x) for x in row] for row in m]
    c = [[0] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != i]
            s = [k for k in range(3) if k != j]
            minor = a[r[0]][s[0]] * a[r[1]][s[1]] - a[r[0]][s[1]] * a[r[1]][s[0]]
            c[j][i] = (-1) ** (i + j) * minor
    return np.array(c, dtype=np.int64)


class LatticeAutomorphism:
    """Integer 3x3 matrix with |det| = 1, i.e. an automorphism of T^3 = R^3/Z^3."""

    def __init__(self, entries):
        self.entries = _as_int_matrix(entries)
        self.det = _int_det(self.entries)
        if abs(self.det) != 1:
            raise NotUnimodular(
                "determinant is %d, need |det| = 1" % self.det
            )
        self.matrix = self.entries.astype(np.float64)

    def inverse(self) -> "LatticeAutomorphism":
        # adjugate / det is exact for |det| = 1
        return LatticeAutomorphism(self.det * _int_adjugate(self.entries))

    def power(self, k: int) -> "LatticeAutomorphism":
        if k == 0:
            return LatticeAutomorphism(np.eye(3, dtype=np.int64))
        base = self if k > 0 else self.inverse()
        out = base
        for _ in range(abs(k) - 1):
            out = out @ base
        return out

    def __matmul__(self, other):
        if isinstance(other, LatticeAutomorphism):
            return LatticeAutomorphism(self.entries @ other.entries)
        return self.entries @ other

    def charpoly_coefficients(self):
        """Integer coefficients (c2, c1, c0) of x^3 - c2 x^2 + c1 x - c0."""
        a = self.entries
        c2 = int(a[0, 0] + a[1, 1] + a[2, 2])
        c1 = (
            int(a[0, 0]) * int(a[1, 1]) - int(a[0, 1]) * int(a[1, 0])
            + int(a[0, 0]) * int(a[2, 2]) - int(a[0, 2]) * int(a[2, 0])
            + int(a[1, 1]) * int(a[2, 2]) - int(a[1, 2]) * int(a[2, 1])
        )
        c0 = self.det
        return c2, c1, c0

    def charpoly_eval(self, x):
        c2, c1, c0 = self.charpoly_coefficients()
        return ((x - c2) * x + c1) * x - c0

    def __repr__(self):
        return "LatticeAutomorphism(%s)" % self.entries.tolist()

    def __eq__(self, other):
        return isinstance(other, LatticeAutomorphism) and np.array_equal(
            self.entries, other.entries
        )


def _polished_eigenvalues(L: LatticeAutomorphism):
    """Eigenvalues of L, Newton-polished on the exact characteristic polynomial."""
    c2, c1, c0 = L.charpoly_coefficients()
    roots = np.linalg.eigvals(L.matrix).astype(np.complex128)
    for _ in range(60):
        p = ((roots - c2) * roots + c1) * roots - c0
        dp = (3.0 * roots - 2.0 * c2) * roots + c1
        safe = np.abs(dp) > 1e-12
        step = np.zeros_like(roots)
        step[safe] = p[safe] / dp[safe]
        roots = roots - step
        if np.max(np.abs(step)) < 1e-15:
            break
    # collapse numerically-real roots
    real_mask = np.abs(roots.imag) < 1e-9
    roots[real_mask] = roots[real_mask].real
    order = np.argsort(np.abs(roots), kind="stable")
    return roots[order]


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray          # ascending modulus
    real_spectrum: bool
    satisfies_ordering: bool         # 0 < lam1 < 1 < lam2 < lam3, all distinct
    unit_circle_gap: float
    charpoly_residual: float

    def real_values(self):
        if not self.real_spectrum:
            raise DegenerateSpectrum("spectrum is not real")
        return self.eigenvalues.real.copy()


def spectrum(L: LatticeAutomorphism, gap_tol: float = UNIT_CIRCLE_GAP_TOL) -> SpectrumReport:
    """Eigenvalue report; raises NotHyperbolic on (near-)unit-modulus spectrum."""
    eig = _polished_eigenvalues(L)
    residual = float(np.max(np.abs(L.charpoly_eval(eig))))
    gap = float(np.min(np.abs(np.abs(eig) - 1.0)))
    if gap < gap_tol:
        raise NotHyperbolic(
            "eigenvalue modulus within %.1e of the unit circle (gap %.3e)"
            % (gap_tol, gap)
        )
    real = bool(np.all(np.abs(eig.imag) == 0.0))
    ordering = False
    if real:
        lam = np.sort(eig.real)
        spacing = float(np.min(np.diff(lam))) if len(lam) > 1 else np.inf
        ordering = bool(
            0.0 < lam[0] < 1.0 < lam[1] < lam[2]
            and spacing > EIGENVALUE_SPACING_TOL
        )
    return SpectrumReport(
        eigenvalues=eig,
        real_spectrum=real,
        satisfies_ordering=ordering,
        unit_circle_gap=gap,
        charpoly_residual=residual,
    )


def normalize_spectrum(L: LatticeAutomorphism):
    """Return (L^k, k) with positive real spectrum 0 < lam1 < 1 < lam2 < lam3.

    Tries k in (1, -1, 2, -2) in that order.  Raises NoRealNormalization
    when no such power exists (complex pair, or a power with coincident
    eigenvalues).
    """
    spectrum(L)  # hyperbolicity gate; raises NotHyperbolic / NotUnimodular
    for k in (1, -1, 2, -2):
        Lk = L.power(k)
        rep = spectrum(Lk)
        if rep.satisfies_ordering:
            return Lk, k
    raise NoRealNormalization(
        "no power k in {1,-1,2,-2} of %r has ordered positive real spectrum" % L
    )


def _eigenvector(L: LatticeAutomorphism, lam: float):
    """Unit kernel vector of (L - lam I) via SVD, first nonzero coordinate > 0."""
    A = L.matrix - lam * np.eye(3)
    _, _, vt = np.linalg.svd(A)
    v = vt[-1]
    for c in v:
        if abs(c) > 1e-12:
            if c < 0:
                v = -v
            break
    return v / np.linalg.norm(v)


@dataclass
class Splitting:
    """Ordered eigendata of a normalized automorphism.

    Columns of `frame` are (e_s, e_wu, e_uu); `frame_inv` maps ambient
    coordinates to eigen-coordinates.
    """

    lam1: float
    lam2: float
    lam3: float
    e_s: np.ndarray
    e_wu: np.ndarray
    e_uu: np.ndarray
    frame: np.ndarray = field(init=False)
    frame_inv: np.ndarray = field(init=False)

    def __post_init__(self):
        self.frame = np.column_stack([self.e_s, self.e_wu, self.e_uu])
        det = float(np.linalg.det(self.frame))
        if abs(det) < FRAME_DET_TOL:
            raise DegenerateSpectrum(
                "eigenvector frame nearly singular (det %.3e)" % det
            )
        self.frame_inv = np.linalg.inv(self.frame)

    @property
    def lams(self):
        return np.array([self.lam1, self.lam2, self.lam3])

    @property
    def beta(self):
        """Slope vector of the strong-unstable direction over the (x, y) plane."""
        if abs(self.e_uu[2]) < 1e-12:
            raise DegenerateSpectrum("e_uu has no third component")
        return np.array([self.e_uu[0] / self.e_uu[2], self.e_uu[1] / self.e_uu[2]])

    def to_eigen(self, v):
        return np.asarray(v) @ self.frame_inv.T

    def from_eigen(self, w):
        return np.asarray(w) @ self.frame.T


def splitting(L: LatticeAutomorphism, spacing_tol: float = EIGENVALUE_SPACING_TOL) -> Splitting:
    """Eigenvalues and unit eigenvectors of a normalized automorphism."""
    rep = spectrum(L)
    if not rep.satisfies_ordering:
        raise NoRealNormalization(
            "splitting expects the normalized ordering; run normalize_spectrum first"
        )
    lam = np.sort(rep.eigenvalues.real)
    if np.min(np.diff(lam)) < spacing_tol:
        raise DegenerateSpectrum(
            "eigenvalue spacing below %.1e: %s" % (spacing_tol, lam)
        )
    vecs = [_eigenvector(L, x) for x in lam]
    for lam_i, v in zip(lam, vecs):
        err = float(np.linalg.norm(L.matrix @ v - lam_i * v))
        if err > 1e-9:
            raise DegenerateSpectrum(
                "eigenvector residual %.3e at eigenvalue %.6f" % (err, lam_i)
            )
    return Splitting(
        lam1=float(lam[0]),
        lam2=float(lam[1]),
        lam3=float(lam[2]),
        e_s=vecs[0],
        e_wu=vecs[1],
        e_uu=vecs[2],
    )


@dataclass
class DiophantineCertificate:
    beta: np.ndarray
    exponent: int
    constant: float
    radius: int
    minimizer: tuple
    minimizer_distance: float

    def as_dict(self):
        return {
            "beta": [float(b) for b in self.beta],
            "exponent": self.exponent,
            "constant": self.constant,
            "radius": self.radius,
            "minimizer": [int(p) for p in self.minimizer],
            "minimizer_distance": self.minimizer_distance,
        }


def diophantine_constant(beta, radius: int, exponent: int = 2) -> DiophantineCertificate:
    """Exhaustive witness for |<beta, p> - q| >= c / |p|^m over 0 < |p| <= radius.

    `c` is the exact minimum of |p|^m * dist(<beta, p>, Z) over the scan,
    so the bound holds with equality at the minimizer.  Raises
    RationalResonance if some <beta, p> lands exactly on an integer.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (2,):
        raise ValueError("beta must be a 2-vector")
    rng = np.arange(-radius, radius + 1)
    p1, p2 = np.meshgrid(rng, rng, indexing="ij")
    p1 = p1.ravel()
    p2 = p2.ravel()
    norm_sq = p1 * p1 + p2 * p2
    keep = (norm_sq > 0) & (norm_sq <= radius * radius)
    p1, p2, norm_sq = p1[keep], p2[keep], norm_sq[keep]
    val = beta[0] * p1 + beta[1] * p2
    dist = np.abs(val - np.rint(val))
    if np.any(dist == 0.0):
        j = int(np.argmin(dist))
        raise RationalResonance(
            "<beta, p> is an exact integer at p = (%d, %d)" % (p1[j], p2[j])
        )
    weighted = norm_sq ** (exponent / 2.0) * dist
    j = int(np.argmin(weighted))
    return DiophantineCertificate(
        beta=beta,
        exponent=exponent,
        constant=float(weighted[j]),
        radius=radius,
        minimizer=(int(p1[j]), int(p2[j])),
        minimizer_distance=float(dist[j]),
    )


@dataclass
class CriticalRegularity:
    kappa: int
    ratio: float
    integer_ratio: bool


def critical_regularity(lam2: float, lam3: float, integer_tol: float = 1e-9) -> CriticalRegularity:
    """kappa = floor(log lam3 / log lam2); flags ratios within tol of an integer."""
    if not (1.0 < lam2 < lam3):
        raise ValueError("need 1 < lam2 < lam3, got %r, %r" % (lam2, lam3))
    ratio = float(np.log(lam3) / np.log(lam2))
    near = abs(ratio - round(ratio)) < integer_tol
    kappa = int(round(ratio)) if near else int(np.floor(ratio))
    return CriticalRegularity(kappa=kappa, ratio=ratio, integer_ratio=bool(near))
