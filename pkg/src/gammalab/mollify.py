"""Bump mollifiers, the rate-coupled family ``J_sigma(h)`` and direct convolution.

Convolution extends fields by zero outside the node set and uses discrete
weights renormalized to unit mass on the working grid, so constants are
reproduced exactly away from the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .anisotropy import sigma as modulus
from .errors import ResolutionError
from .grid import ScalarField, lp_norm, x_gradient, gradient

RESOLVE_FACTOR = 3.0
REFERENCE_RES = 64


def bump_profile(r):
    """``exp(-1/(1 - r^2))`` for ``r < 1``, zero otherwise."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def bump_profile_derivative(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = -2.0 * ri / (1.0 - ri**2) ** 2 * np.exp(-1.0 / (1.0 - ri**2))
    return out


@dataclass(frozen=True)
class Mollifier:
    """Radial kernel ``x -> normalization * scale^-n * bump(|x| / scale)``; radius equals ``scale``."""

    dim: int
    scale: float
    normalization: float

    @property
    def radius(self):
        return self.scale

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=-1) / self.scale
        return self.normalization * self.scale ** (-self.dim) * bump_profile(r)

    def gradient(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        dist = np.linalg.norm(x, axis=-1)
        r = dist / self.scale
        radial = self.normalization * self.scale ** (-self.dim - 1) * bump_profile_derivative(r)
        unit = np.divide(x, dist[:, None], out=np.zeros_like(x), where=dist[:, None] > 0)
        return radial[:, None] * unit


def _lattice(dim, spacing, radius):
    """Integer offsets (C order) whose points lie strictly inside the ball of ``radius``."""
    half = [int(np.floor(radius / s)) for s in spacing]
    axes = [np.arange(-k, k + 1) for k in half]
    ks = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=-1)
    pts = ks * np.asarray(spacing)
    inside = np.linalg.norm(pts, axis=-1) < radius
    return ks[inside], pts[inside], half


@lru_cache(maxsize=None)
def bump_kernel(n):
    """Unit-radius bump in ``R^n`` normalized to unit discrete mass on a ``64``-per-radius lattice."""
    if n not in (1, 2, 3):
        raise ValueError(f"n must be 1, 2 or 3, got {n}")
    spacing = (1.0 / REFERENCE_RES,) * n
    _, pts, _ = _lattice(n, spacing, 1.0)
    mass = float(np.sum(bump_profile(np.linalg.norm(pts, axis=-1)))) * float(np.prod(spacing))
    return Mollifier(n, 1.0, 1.0 / mass)


def scaled_kernel(J, sigma):
    """``sigma^-n J(x / sigma)``: radius ``sigma * J.radius``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return Mollifier(J.dim, J.scale * float(sigma), J.normalization)


def discrete_mass(J, spacing):
    """Unnormalized discrete mass ``sum J(k dx) prod(dx)`` on a lattice."""
    _, pts, _ = _lattice(J.dim, spacing, J.radius)
    return float(np.sum(J.value(pts))) * float(np.prod(spacing))


@lru_cache(maxsize=64)
def grid_weights(J, spacing):
    """Tap offsets and weights (renormalized to unit mass, times the cell volume)."""
    ks, pts, half = _lattice(J.dim, spacing, J.radius)
    w = J.value(pts)
    w = w / np.sum(w)
    return ks, w, half


def gradient_constant(J):
    """``sup |DJ|`` for the reference kernel; ``|DJ_sigma| <= C / sigma^(n+1)``."""
    res = minimize_scalar(lambda r: bump_profile_derivative(np.array([r]))[0], bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-12})
    return J.normalization * J.scale ** (-J.dim - 1) * abs(float(res.fun))


def max_gradient_on_lattice(J, spacing):
    _, pts, _ = _lattice(J.dim, spacing, J.radius)
    return float(np.max(np.linalg.norm(J.gradient(pts), axis=-1)))


def check_resolvable(J, grid):
    need = RESOLVE_FACTOR * grid.max_spacing
    if J.radius < need:
        raise ResolutionError(
            f"mollifier radius {J.radius:.6g} is under-resolved: need radius >= {need:.6g} "
            f"({RESOLVE_FACTOR:g} x max spacing)",
            required_radius=need,
        )


def convolve(u, J):
    """Direct-summation ``J * u`` with zero extension outside the grid."""
    grid = u.grid
    if J.dim != grid.ndim:
        raise ValueError(f"kernel is {J.dim}-dimensional, grid is {grid.ndim}-dimensional")
    check_resolvable(J, grid)
    ks, w, half = grid_weights(J, grid.spacing)
    padded = np.pad(u.values, [(k, k) for k in half])
    pshape = padded.shape
    strides = np.array([int(np.prod(pshape[a + 1:])) for a in range(grid.ndim)], dtype=np.int64)
    offsets = np.ascontiguousarray(ks @ strides, dtype=np.int64)
    # kernel is even, so correlation and convolution coincide
    idx = np.meshgrid(*(np.arange(s) + k for s, k in zip(grid.shape, half)), indexing="ij")
    out_index = np.ascontiguousarray(sum(i.ravel() * st for i, st in zip(idx, strides)), dtype=np.int64)
    out = _kernels.convolve_flat(np.ascontiguousarray(padded.ravel()), out_index, offsets,
                                 np.ascontiguousarray(w))
    return ScalarField(grid, out.reshape(grid.shape), u.boundary_mode)


def family_kernel(family, h, grid):
    return scaled_kernel(bump_kernel(grid.ndim), modulus(family, h, grid))


def meyers_serrin_step(u, family, h, grid=None):
    """Recovery candidate ``J_sigma(h) * u``."""
    grid = grid or u.grid
    return convolve(u, family_kernel(family, h, grid))


def smooth_step(t):
    """``C^inf`` transition from 0 (``t <= 0``) to 1 (``t >= 1``) built from the bump primitive."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    s = 1.0 - t
    b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


def cutoff(grid, margin):
    """0 within ``margin`` of the boundary, 1 beyond ``2 * margin``."""
    d = grid.distance_to_boundary()
    return smooth_step((d - margin) / margin)


def affine_approx_step(u, phi, family, h, cutoff_margin):
    """Compactly supported approximant ``J_sigma(h) * (psi (u - phi))`` of ``u - phi``."""
    grid = u.grid
    J = family_kernel(family, h, grid)
    need = J.radius + 2.0 * grid.max_spacing
    if cutoff_margin < need:
        raise ResolutionError(f"cutoff margin {cutoff_margin:.6g} too small: need >= {need:.6g}",
                              required_radius=need)
    w = (u - phi).values * cutoff(grid, cutoff_margin)
    return convolve(ScalarField(grid, w, "zero_dirichlet"), J)


def commutator_norm(u, family, h, p):
    """``|X^h (J_h * u) - X (J_h * u)|_p``."""
    uh = meyers_serrin_step(u, family, h)
    diff = x_gradient(uh, family.at(h)) - x_gradient(uh, family.limit)
    return lp_norm(diff, p)


def commutator_bound(u, family, h, p):
    """Right side ``sigma(h)^(n+2) |D(J_h * u)|_p`` that dominates :func:`commutator_norm`."""
    s = modulus(family, h, u.grid)
    uh = meyers_serrin_step(u, family, h)
    return s ** (u.grid.ndim + 2) * lp_norm(gradient(uh), p)
