"""Shared fixtures built around the companion-matrix example.

Everything expensive (conjugacy solves, foliation frames, the leaf
reconstruction) is session scoped so the acceptance tests and the module
tests share one copy.
"""

import numpy as np
import pytest

from anosov3.conjugacy import (
    invert_plane_displacement,
    quotient_conjugacy,
    solve_conjugacy,
)
from anosov3.foliation import build_frame
from anosov3.lattice import LatticeAutomorphism, normalize_spectrum, splitting
from anosov3.maps import (
    PerturbedMap,
    TrigPolynomialField,
    make_conjugated_perturbation,
)
from anosov3.periodic import obstruction_report
from anosov3.returnmap import reconstruct_phi

M_RAW = [[0, 0, -1], [1, 0, 0], [0, 1, 3]]

EPS = 0.01

# two-mode coordinate change used by most perturbed fixtures
CONJ_MODES = [
    {"frequency": (1, 0, 0), "coefficient": (0.3, -0.2, 0.1)},
    {"frequency": (0, 1, 1), "coefficient": (-0.1, 0.25, 0.2), "phase": 0.37},
]


def two_mode_field():
    fld = TrigPolynomialField(CONJ_MODES)
    return fld.scaled(EPS / fld.c0_bound())


@pytest.fixture(scope="session")
def L_raw():
    return LatticeAutomorphism(M_RAW)


@pytest.fixture(scope="session")
def L(L_raw):
    out, power = normalize_spectrum(L_raw)
    assert power == -2
    return out


@pytest.fixture(scope="session")
def sp(L):
    return splitting(L)


@pytest.fixture(scope="session")
def flin(L):
    # the unperturbed automorphism wrapped in the map interface
    return PerturbedMap(L, TrigPolynomialField([]))


@pytest.fixture(scope="session")
def conjugated_pair(L):
    """(f, phi) with f = phi o L o phi^{-1} and ||phi - id||_C0 = 0.01."""
    return make_conjugated_perturbation(L, two_mode_field())


@pytest.fixture(scope="session")
def fconj(conjugated_pair):
    return conjugated_pair[0]


@pytest.fixture(scope="session")
def phi2(conjugated_pair):
    return conjugated_pair[1]


@pytest.fixture(scope="session")
def conj64(L, fconj, sp):
    return solve_conjugacy(L, fconj, sp, resolution=64, tol=1e-8)


@pytest.fixture(scope="session")
def frame32(fconj, sp):
    return build_frame(fconj, sp, resolution=32)


@pytest.fixture(scope="session")
def hbar_pair(conj64, fconj, sp, frame32):
    hbar = quotient_conjugacy(conj64, fconj, sp, resolution=64, frame=frame32)
    return hbar, invert_plane_displacement(hbar)


@pytest.fixture(scope="session")
def recon(fconj, sp, conj64, hbar_pair, frame32):
    hbar, hbar_inv = hbar_pair
    return reconstruct_phi(fconj, sp, conj64, hbar, hbar_inv, frame32,
                           band=32, grid_m=96)


@pytest.fixture(scope="session")
def single_pair(L, sp):
    """Conjugated map whose displacement points along the strong unstable
    eigendirection, so the quotient conjugacy on the section is the identity."""
    e_hat = sp.e_uu / np.linalg.norm(sp.e_uu)
    fld = TrigPolynomialField(
        [{"frequency": (1, 0, 0), "coefficient": tuple(EPS * e_hat)}]
    )
    return make_conjugated_perturbation(L, fld)


@pytest.fixture(scope="session")
def conj_single(L, single_pair, sp):
    return solve_conjugacy(L, single_pair[0], sp, resolution=64, tol=1e-8)


@pytest.fixture(scope="session")
def fdet(L, sp):
    # rank-one detunings of the s and uu multipliers at the fixed point 0:
    # Df(0) has eigenvalues lam1 + 0.04, lam2, lam3 + 0.02
    evals, vecs = np.linalg.eig(L.matrix)
    order = np.argsort(evals.real)
    evals = evals.real[order]
    vecs = vecs.real[:, order]
    assert np.allclose(evals, sp.lams)
    dual = np.linalg.inv(vecs)
    gain = 0.04 * np.outer(vecs[:, 0], dual[0]) + 0.02 * np.outer(vecs[:, 2], dual[2])
    modes = [
        {
            "frequency": tuple(int(v) for v in np.eye(3, dtype=int)[axis]),
            "coefficient": tuple(gain[:, axis] / (2 * np.pi)),
        }
        for axis in range(3)
    ]
    return PerturbedMap(L, TrigPolynomialField(modes))


@pytest.fixture(scope="session")
def conj_det(L, fdet, sp):
    return solve_conjugacy(L, fdet, sp, resolution=64, tol=1e-8)


@pytest.fixture(scope="session")
def obs_det(fdet, L):
    return obstruction_report(fdet, L, n_max=1)
