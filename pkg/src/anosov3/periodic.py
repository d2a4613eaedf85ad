"""Periodic points, their multipliers, and the matching obstruction.

Period-n points of the linear model are the solutions of (L^n - I)x = 0
mod Z^3, enumerated exactly through a hand-rolled integer Smith normal
form; there are |det(L^n - I)| of them.  Nearby maps get their periodic
points by Newton continuation, and matching multiplier spectra against
the linear model is the first obstruction to smooth conjugacy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NewtonDiverged, SingularJacobian
from .lattice import LatticeAutomorphism
from .maps import wrap01, wrap_half


def smith_normal_form(matrix):
    """U M V = D with U, V unimodular integer and D diagonal, d_i | d_{i+1}.

    Exact Python-int arithmetic; matrix is any square integer array.
    """
    A = [[int(x) for x in row] for row in np.asarray(matrix)]
    n = len(A)
    U = [[int(i == j) for j in range(n)] for i in range(n)]
    V = [[int(i == j) for j in range(n)] for i in range(n)]

    def row_op(i, j, q):  # row_i -= q * row_j
        for k in range(n):
            A[i][k] -= q * A[j][k]
            U[i][k] -= q * U[j][k]

    def col_op(i, j, q):  # col_i -= q * col_j
        for k in range(n):
            A[k][i] -= q * A[k][j]
            V[k][i] -= q * V[k][j]

    def swap_rows(i, j):
        A[i], A[j] = A[j], A[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for k in range(n):
            A[k][i], A[k][j] = A[k][j], A[k][i]
            V[k][i], V[k][j] = V[k][j], V[k][i]

    t = 0
    while t < n:
        piv = None
        for i in range(t, n):
            for j in range(t, n):
                if A[i][j] != 0 and (piv is None or abs(A[i][j]) < abs(A[piv[0]][piv[1]])):
                    piv = (i, j)
        if piv is None:
            break
        swap_rows(t, piv[0])
        swap_cols(t, piv[1])
        while True:
            progress = False
            for i in range(t + 1, n):
                if A[i][t] != 0:
                    row_op(i, t, A[i][t] // A[t][t])
                    if A[i][t] != 0:  # remainder smaller than pivot: promote it
                        swap_rows(t, i)
                    progress = True
            for j in range(t + 1, n):
                if A[t][j] != 0:
                    col_op(j, t, A[t][j] // A[t][t])
                    if A[t][j] != 0:
                        swap_cols(t, j)
                    progress = True
            if not progress:
                break
        # divisibility: fold a non-multiple row into the pivot row and redo
        fixed = True
        for i in range(t + 1, n):
            if any(A[i][j] % A[t][t] != 0 for j in range(t + 1, n)):
                for k in range(n):
                    A[t][k] += A[i][k]
                    U[t][k] += U[i][k]
                fixed = False
                break
        if fixed:
            t += 1
    for t in range(n):
        if A[t][t] < 0:
            for k in range(n):
                A[t][k] = -A[t][k]
                U[t][k] = -U[t][k]
    return (
        np.array(U, dtype=object),
        np.array(A, dtype=object),
        np.array(V, dtype=object),
    )


def linear_periodic_count(L: LatticeAutomorphism, n: int) -> int:
    """|det(L^n - I)|, the number of period-n points of the linear model."""
    Ln = L.power(n).entries
    M = [[int(Ln[i][j]) - int(i == j) for j in range(3)] for i in range(3)]
    det = (
        M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
        - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
        + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0])
    )
    return abs(det)


def enumerate_linear_periodic(L: LatticeAutomorphism, n: int):
    """All period-n points of L as exact rationals, returned as floats in [0,1)^3.

    Solves (L^n - I) x = 0 mod Z^3 through the Smith form U M V = D:
    solutions are x = V (k1/d1, k2/d2, k3/d3) mod 1.  Count is prod d_i.
    """
    Ln = L.power(n).entries
    M = np.array(
        [[int(Ln[i][j]) - int(i == j) for j in range(3)] for i in range(3)],
        dtype=object,
    )
    U, D, V = smith_normal_form(M)
    d = [int(D[i][i]) for i in range(3)]
    if any(x == 0 for x in d):
        raise SingularJacobian(
            "L^%d - I is singular; eigenvalue 1 present (not hyperbolic?)" % n
        )
    # exact rational solutions via Fractions, reduced mod 1
    pts = np.empty((d[0] * d[1] * d[2], 3), dtype=np.float64)
    idx = 0
    Vc = [[int(V[i][j]) for j in range(3)] for i in range(3)]
    for k0 in range(d[0]):
        for k1 in range(d[1]):
            for k2 in range(d[2]):
                ks = (Fraction(k0, d[0]), Fraction(k1, d[1]), Fraction(k2, d[2]))
                for i in range(3):
                    c = Vc[i][0] * ks[0] + Vc[i][1] * ks[1] + Vc[i][2] * ks[2]
                    c = c - (c.numerator // c.denominator)  # mod 1, exact
                    pts[idx, i] = float(c)
                idx += 1
    return pts


def orbit_representatives(L: LatticeAutomorphism, n: int):
    """Partition the period-n set of L into orbits; one representative each.

    Returns a list of (point, minimal_period).  Points whose minimal period
    properly divides n are still period-n points and are included.
    """
    Ln = L.power(n).entries
    M = np.array(
        [[int(Ln[i][j]) - int(i == j) for j in range(3)] for i in range(3)],
        dtype=object,
    )
    U, D, V = smith_normal_form(M)
    d = [int(D[i][i]) for i in range(3)]
    if any(x == 0 for x in d):
        raise SingularJacobian("L^%d - I singular" % n)
    denom = d[0] * d[1] * d[2]
    # represent points as integer vectors a with x = a / denom (exact)
    Vc = np.array([[int(V[i][j]) for j in range(3)] for i in range(3)], dtype=object)
    scale = [denom // d[i] for i in range(3)]
    pts = {}
    for k0 in range(d[0]):
        for k1 in range(d[1]):
            for k2 in range(d[2]):
                a = tuple(
                    int(
                        Vc[i][0] * k0 * scale[0]
                        + Vc[i][1] * k1 * scale[1]
                        + Vc[i][2] * k2 * scale[2]
                    )
                    % denom
                    for i in range(3)
                )
                pts[a] = None
    Lint = np.array([[int(x) for x in row] for row in L.entries], dtype=object)
    reps = []
    seen = set()
    for a in pts:
        if a in seen:
            continue
        orbit = []
        b = a
        while b not in seen:
            seen.add(b)
            orbit.append(b)
            b = tuple(
                int(Lint[i][0] * b[0] + Lint[i][1] * b[1] + Lint[i][2] * b[2]) % denom
                for i in range(3)
            )
        reps.append(
            (np.array(a, dtype=np.float64) / denom, len(orbit))
        )
    return reps


@dataclass
class PeriodicOrbit:
    point: np.ndarray
    period: int
    multipliers: np.ndarray   # complex, sorted by (modulus, real part)
    newton_steps: int
    residual: float


def _orbit_multipliers(f, x, n):
    """Eigenvalues of D(f^n) along the orbit of x, sorted by modulus."""
    P = np.eye(3)
    p = np.asarray(x, dtype=np.float64)
    for _ in range(n):
        P = f.differential(p) @ P
        p = f.evaluate(p)
    mu = np.linalg.eigvals(P)
    order = np.lexsort((mu.real, np.abs(mu)))
    return mu[order]


def refine_periodic_point(
    f,
    point,
    n: int,
    tol: float = 1e-12,
    max_steps: int = 40,
    guard: float = 0.25,
) -> PeriodicOrbit:
    """Newton refinement of f^n(x) = x from a linear-model periodic point.

    The residual is wrapped to the torus, so no lattice word bookkeeping is
    needed.  Steps larger than `guard` raise NewtonDiverged (the point left
    the basin it was seeded in); a singular D(f^n) - I raises
    SingularJacobian.
    """
    x = wrap01(np.asarray(point, dtype=np.float64))
    for step_count in range(1, max_steps + 1):
        P = np.eye(3)
        p = x.copy()
        for _ in range(n):
            P = f.differential(p) @ P
            p = f.evaluate(p)
        res = wrap_half(p - x)
        rnorm = float(np.linalg.norm(res))
        if rnorm < tol:
            return PeriodicOrbit(
                point=x,
                period=n,
                multipliers=_orbit_multipliers(f, x, n),
                newton_steps=step_count - 1,
                residual=rnorm,
            )
        J = P - np.eye(3)
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] < 1e-10:
            raise SingularJacobian(
                "D(f^%d) - I nearly singular (sigma_min %.3e) at %s" % (n, sv[-1], x)
            )
        delta = np.linalg.solve(J, res)
        if np.linalg.norm(delta) > guard:
            raise NewtonDiverged(
                "Newton step %.3f exceeds guard %.3f at period %d" % (
                    float(np.linalg.norm(delta)), guard, n
                )
            )
        x = wrap01(x - delta)
    raise NewtonDiverged(
        "no convergence after %d Newton steps at period %d (residual %.3e)"
        % (max_steps, n, rnorm)
    )


def refine_periodic_batch(f, points, n, tol=1e-12, max_steps=40, guard=0.25):
    """Vectorized Newton for many period-n seeds at once; returns refined points."""
    x = wrap01(np.asarray(points, dtype=np.float64))
    m = len(x)
    active = np.ones(m, dtype=bool)
    for _ in range(max_steps):
        if not np.any(active):
            break
        xa = x[active]
        P = np.broadcast_to(np.eye(3), (len(xa), 3, 3)).copy()
        p = xa.copy()
        for _ in range(n):
            P = f.differential(p) @ P
            p = f.evaluate(p)
        res = wrap_half(p - xa)
        rnorm = np.linalg.norm(res, axis=1)
        done = rnorm < tol
        J = P - np.eye(3)
        delta = np.linalg.solve(J, res[..., None])[..., 0]
        if np.any(np.linalg.norm(delta, axis=1) > guard):
            raise NewtonDiverged("a Newton step exceeded the guard radius")
        xa[~done] = wrap01(xa[~done] - delta[~done])
        x[active] = xa
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    if np.any(active):
        raise NewtonDiverged(
            "%d of %d seeds failed to converge at period %d"
            % (int(np.sum(active)), m, n)
        )
    return x


@dataclass
class ObstructionEntry:
    period: int
    point: np.ndarray
    multipliers: np.ndarray
    linear_multipliers: np.ndarray
    deviation: float          # max relative multiplier mismatch


@dataclass
class ObstructionReport:
    entries: list
    n_max: int
    tolerance: float
    max_deviation: float
    verdict: bool             # True when all multiplier spectra match
    skipped_periods: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    def worst(self):
        return max(self.entries, key=lambda e: e.deviation, default=None)


def obstruction_report(
    f,
    L: LatticeAutomorphism,
    n_max: int = 4,
    rel_tol: float = 1e-6,
    count_cap: int = 100_000,
) -> ObstructionReport:
    """Compare multiplier spectra of f against L over all orbits up to n_max.

    Every orbit of every period n <= n_max is refined (one representative
    per orbit) and its multipliers are matched against the eigenvalues of
    L^n as multisets sorted by modulus.  Periods whose point count exceeds
    count_cap are skipped and recorded.
    """
    lam = np.linalg.eigvals(L.matrix)
    lam = lam[np.lexsort((lam.real, np.abs(lam)))]
    entries = []
    skipped = []
    counts = {}
    for n in range(1, n_max + 1):
        cnt = linear_periodic_count(L, n)
        counts[n] = cnt
        if cnt > count_cap:
            skipped.append(n)
            continue
        reps = orbit_representatives(L, n)
        seeds = np.array([p for p, _ in reps])
        refined = refine_periodic_batch(f, seeds, n)
        lam_n = lam**n
        lam_order = np.lexsort((lam_n.real, np.abs(lam_n)))
        lam_n = lam_n[lam_order]
        floor = 1e-12
        for x in refined:
            mu = _orbit_multipliers(f, x, n)
            dev = float(
                np.max(np.abs(mu - lam_n) / np.maximum(np.abs(lam_n), floor))
            )
            entries.append(
                ObstructionEntry(
                    period=n,
                    point=x,
                    multipliers=mu,
                    linear_multipliers=lam_n,
                    deviation=dev,
                )
            )
    max_dev = max((e.deviation for e in entries), default=0.0)
    return ObstructionReport(
        entries=entries,
        n_max=n_max,
        tolerance=rel_tol,
        max_deviation=max_dev,
        verdict=bool(max_dev <= rel_tol and not skipped),
        skipped_periods=skipped,
        counts=counts,
    )
