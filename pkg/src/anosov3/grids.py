"""Periodic grid functions on the unit torus.

A GridFunction stores node values on the uniform lattice {j/N} in d
dimensions (d = 1, 2, 3) and evaluates anywhere by wrapped spline
interpolation.  Order 3 with a grid-wrap prefilter reproduces node values
exactly, which the conjugacy solver relies on.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


class GridFunction:
    """Scalar- or vector-valued function sampled on a uniform periodic grid.

    values: array of shape (N,)*dim for scalars or (N,)*dim + (vdim,) for
    vector fields.  Evaluation wraps coordinates, so any real input works.
    """

    def __init__(self, values, dim: int, order: int = 3):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == dim:
            self.vdim = 0
        elif values.ndim == dim + 1:
            self.vdim = values.shape[-1]
        else:
            raise ValueError(
                "values ndim %d incompatible with dim %d" % (values.ndim, dim)
            )
        n = values.shape[0]
        if values.shape[:dim] != (n,) * dim:
            raise ValueError("grid must be cubical, got shape %s" % (values.shape,))
        if order not in (1, 3):
            raise ValueError("order must be 1 or 3")
        self.values = values
        self.dim = dim
        self.n = n
        self.order = order
        self._coeffs = self._prefilter()

    def _components(self):
        if self.vdim == 0:
            return [self.values]
        return [self.values[..., k] for k in range(self.vdim)]

    def _prefilter(self):
        if self.order == 1:
            return self._components()
        return [
            ndimage.spline_filter(c, order=self.order, mode="grid-wrap")
            for c in self._components()
        ]

    @classmethod
    def from_callable(cls, fn, n: int, dim: int, order: int = 3):
        pts = grid_points(n, dim)
        vals = fn(pts)
        vals = np.asarray(vals, dtype=np.float64)
        if vals.shape[: dim] != (n,) * dim:
            vals = vals.reshape((n,) * dim + vals.shape[len(pts.shape) - 1:])
        return cls(vals, dim=dim, order=order)

    def sample(self, points):
        """Evaluate at points of shape (..., dim); returns (...,) or (..., vdim)."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.shape[-1] != self.dim:
            raise ValueError(
                "points last axis %d, expected %d" % (pts.shape[-1], self.dim)
            )
        shape = pts.shape[:-1]
        coords = (pts.reshape(-1, self.dim).T * self.n) % self.n
        outs = [
            ndimage.map_coordinates(
                c, coords, order=self.order, mode="grid-wrap", prefilter=False
            )
            for c in self._coeffs
        ]
        if self.vdim == 0:
            return outs[0].reshape(shape)
        return np.stack(outs, axis=-1).reshape(shape + (self.vdim,))

    def __call__(self, points):
        return self.sample(points)


def grid_points(n: int, dim: int):
    """Nodes j/N as an array of shape (n,)*dim + (dim,)."""
    axes = [np.arange(n) / n] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def grid_indices(n: int, dim: int):
    """Integer index tuples of shape (n**dim, dim), row-major."""
    axes = [np.arange(n)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, dim)
