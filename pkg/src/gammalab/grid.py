"""Uniform box grids, grid-sampled fields and discrete (anisotropic) gradients.

Nodes sit at ``lo + index * spacing`` for ``index = 0 .. res`` on every axis,
so a grid with ``res`` cells per axis carries ``res + 1`` nodes per axis.
Quadrature is the cell rule: every cell is represented by its lower corner,
i.e. nodes whose indices are all ``< res`` get weight ``prod(spacing)`` and the
top layer gets weight zero.  Forward differences live on the same cells, which
keeps every energy assembled here a weighted sum of squares.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ContractError

ZERO_DIRICHLET = "zero_dirichlet"
FREE = "free"
_MODES = (ZERO_DIRICHLET, FREE)


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on the box ``[lo, hi]``."""

    lo: tuple
    hi: tuple
    res: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        res = np.atleast_1d(self.res)
        if res.size == 1 and len(lo) > 1:
            res = np.repeat(res, len(lo))
        res = tuple(int(r) for r in res)
        if not (len(lo) == len(hi) == len(res)) or not 1 <= len(lo) <= 3:
            raise ContractError(f"grid needs 1-3 axes with matching lo/hi/res, got {lo}, {hi}, {res}")
        if any(r < 4 for r in res):
            raise ContractError(f"grid needs at least 4 cells per axis, got {res}")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ContractError(f"empty box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "res", res)

    @property
    def ndim(self):
        return len(self.res)

    @property
    def spacing(self):
        return tuple((b - a) / r for a, b, r in zip(self.lo, self.hi, self.res))

    @property
    def max_spacing(self):
        return max(self.spacing)

    @property
    def shape(self):
        return tuple(r + 1 for r in self.res)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axis(self, i):
        """Node coordinates along axis ``i``."""
        return self.lo[i] + np.arange(self.res[i] + 1) * self.spacing[i]

    @cached_property
    def coords(self):
        """Tuple of ``ndim`` arrays of node coordinates, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*(self.axis(i) for i in range(self.ndim)), indexing="ij"))

    @cached_property
    def points(self):
        """Node coordinates as an ``(size, ndim)`` array in C order."""
        return np.stack([c.ravel() for c in self.coords], axis=-1)

    @cached_property
    def weights(self):
        """Quadrature weights on the node array (zero on the top layer of each axis)."""
        w = np.full(self.shape, self.cell_volume)
        for ax in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[ax] = -1
            w[tuple(idx)] = 0.0
        return w

    @cached_property
    def boundary_mask(self):
        """True on nodes that lie on the boundary of the box."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.ndim):
            for end in (0, -1):
                idx = [slice(None)] * self.ndim
                idx[ax] = end
                mask[tuple(idx)] = True
        return mask

    @cached_property
    def interior_mask(self):
        return ~self.boundary_mask

    def distance_to_boundary(self):
        """Euclidean distance of every node to the boundary of the box."""
        d = np.full(self.shape, np.inf)
        for i, c in enumerate(self.coords):
            d = np.minimum(d, np.minimum(c - self.lo[i], self.hi[i] - c))
        return np.maximum(d, 0.0)

    def refined(self, factor=2):
        return Grid(self.lo, self.hi, tuple(r * factor for r in self.res))

    # convenience constructors for fields on this grid

    def scalar(self, fn_or_values, boundary_mode=FREE):
        if callable(fn_or_values):
            values = fn_or_values(*self.coords)
            values = np.broadcast_to(np.asarray(values, dtype=float), self.shape)
        else:
            values = fn_or_values
        return ScalarField(self, values, boundary_mode)

    def zeros(self, boundary_mode=FREE):
        return ScalarField(self, np.zeros(self.shape), boundary_mode)


def _frozen(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


class ScalarField:
    """One real value per node of ``grid``."""

    __slots__ = ("grid", "values", "boundary_mode")

    def __init__(self, grid, values, boundary_mode=FREE):
        if boundary_mode not in _MODES:
            raise ContractError(f"boundary_mode must be one of {_MODES}, got {boundary_mode!r}")
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            if values.size != grid.size:
                raise ContractError(f"expected {grid.size} node values, got {values.size}")
            values = values.reshape(grid.shape)
        self.grid = grid
        self.values = _frozen(values)
        self.boundary_mode = boundary_mode

    def with_values(self, values, boundary_mode=None):
        return ScalarField(self.grid, values, boundary_mode or self.boundary_mode)

    def as_mode(self, boundary_mode):
        return ScalarField(self.grid, self.values, boundary_mode)

    def _combine(self, other, op):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, op(self.values, other.values), self.boundary_mode)
        return ScalarField(self.grid, op(self.values, float(other)), self.boundary_mode)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._combine(other, np.divide)

    def __neg__(self):
        return ScalarField(self.grid, -self.values, self.boundary_mode)

    def __repr__(self):
        return f"ScalarField(grid={self.grid}, mode={self.boundary_mode})"


class VecField:
    """``m`` values per node; ``comps`` has shape ``grid.shape + (m,)``."""

    __slots__ = ("grid", "comps")

    def __init__(self, grid, comps):
        comps = np.asarray(comps, dtype=float)
        if comps.shape[:-1] != grid.shape:
            raise ContractError(f"components must have shape {grid.shape} + (m,), got {comps.shape}")
        self.grid = grid
        self.comps = _frozen(comps)

    @property
    def m(self):
        return self.comps.shape[-1]

    def component(self, j):
        return ScalarField(self.grid, self.comps[..., j])

    def __add__(self, other):
        _same_grid(self, other)
        return VecField(self.grid, self.comps + other.comps)

    def __sub__(self, other):
        _same_grid(self, other)
        return VecField(self.grid, self.comps - other.comps)

    def __mul__(self, c):
        return VecField(self.grid, self.comps * float(c))

    __rmul__ = __mul__

    def __repr__(self):
        return f"VecField(grid={self.grid}, m={self.m})"


def _same_grid(a, b):
    if a.grid != b.grid:
        raise ContractError("fields live on different grids")


def forward_diff(values, grid, axis, boundary_mode):
    """Forward difference of a node array along ``axis``.

    The ghost node beyond the top layer is 0 under ``zero_dirichlet`` and a copy
    of the top layer under ``free``.
    """
    h = grid.spacing[axis]
    out = np.empty_like(values)
    n = values.shape[axis]
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    out[tuple(lo)] = (values[tuple(hi)] - values[tuple(lo)]) / h
    last = [slice(None)] * values.ndim
    last[axis] = n - 1
    last = tuple(last)
    if boundary_mode == ZERO_DIRICHLET:
        out[last] = -values[last] / h
    else:
        out[last] = 0.0
    return out


def _grad_array(u):
    g = u.grid
    return np.stack([forward_diff(u.values, g, ax, u.boundary_mode) for ax in range(g.ndim)], axis=-1)


def gradient(u):
    """Euclidean forward-difference gradient, a VecField with ``n`` components."""
    return VecField(u.grid, _grad_array(u))


def x_gradient(u, C):
    """Anisotropic gradient ``C(x) Du(x)`` evaluated node-wise (``m`` components)."""
    if C.dim_n != u.grid.ndim:
        raise ContractError(f"coefficient field acts on R^{C.dim_n}, grid is {u.grid.ndim}-dimensional")
    mats = C.on_grid(u.grid)
    return VecField(u.grid, np.einsum("...ij,...j->...i", mats, _grad_array(u)))


def apply_matrix_field(C, grid, vecs):
    """Node-wise ``C(x) @ vecs(x)`` for an ``(…, n)`` array ``vecs`` (e.g. ``C Phi``)."""
    return np.einsum("...ij,...j->...i", C.on_grid(grid), vecs)


def pointwise_abs(v):
    """``|v|`` per node: absolute value for scalars, Euclidean length for vectors."""
    if isinstance(v, VecField):
        return np.sqrt(np.einsum("...i,...i->...", v.comps, v.comps))
    return np.abs(v.values)


def lp_norm(v, p):
    """Discrete ``L^p`` norm with cell-rule quadrature (``1 < p < inf``)."""
    p = float(p)
    if not np.isfinite(p) or p < 1.0:
        raise ContractError(f"p must be finite and >= 1, got {p}")
    a = pointwise_abs(v)
    return float(np.sum(a**p * v.grid.weights)) ** (1.0 / p)


def inner(u, w):
    """Discrete ``L^2`` pairing ``sum u w dV``."""
    _same_grid(u, w)
    return float(np.sum(u.values * w.values * u.grid.weights))


# serialization

_MAGIC = b"GLF1"


def write_binary(path, field):
    """Write a field as: magic, int64 ndim, int64 ncomp, int64 res[ndim],
    float64 lo[ndim], float64 hi[ndim], then node values in C order (all little-endian)."""
    g = field.grid
    data = field.comps if isinstance(field, VecField) else field.values
    ncomp = field.m if isinstance(field, VecField) else 1
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qq", g.ndim, ncomp))
        fh.write(struct.pack(f"<{g.ndim}q", *g.res))
        fh.write(struct.pack(f"<{g.ndim}d", *g.lo))
        fh.write(struct.pack(f"<{g.ndim}d", *g.hi))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_binary(path, boundary_mode=FREE):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ContractError(f"{path}: not a gammalab field file")
        ndim, ncomp = struct.unpack("<qq", fh.read(16))
        res = struct.unpack(f"<{ndim}q", fh.read(8 * ndim))
        lo = struct.unpack(f"<{ndim}d", fh.read(8 * ndim))
        hi = struct.unpack(f"<{ndim}d", fh.read(8 * ndim))
        grid = Grid(lo, hi, res)
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if ncomp == 1:
        return ScalarField(grid, raw.reshape(grid.shape), boundary_mode)
    return VecField(grid, raw.reshape(grid.shape + (ncomp,)))


def write_csv(path, field):
    """One row per node: coordinates ``x1..xn`` followed by the value(s)."""
    g = field.grid
    if isinstance(field, VecField):
        vals = field.comps.reshape(g.size, field.m)
        names = [f"v{j + 1}" for j in range(field.m)]
    else:
        vals = field.values.reshape(g.size, 1)
        names = ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(g.ndim)] + names)
        for pt, row in zip(g.points, vals):
            writer.writerow([format(x, ".17g") for x in (*pt, *row)])
