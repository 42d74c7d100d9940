"""Integrands, quadratic forms, perturbed energies, momenta and the perturbation ``G``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ContractError
from .grid import ScalarField, VecField, apply_matrix_field, inner, lp_norm, x_gradient

GROWTH_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class QuadraticIntegrand:
    """``eta -> <A(x) eta, eta>`` with ellipticity bounds ``lam <= A <= Lam``.

    ``A`` is vectorized: points ``(N, n) -> (N, m, m)``.
    """

    A: Callable[[np.ndarray], np.ndarray]
    m: int
    lam: float
    Lam: float
    name: str = "quadratic"
    p: float = 2.0

    @property
    def d1(self):
        return self.lam

    @property
    def d2(self):
        return self.Lam

    def matrices(self, grid):
        mats = np.asarray(self.A(grid.points), dtype=float)
        return np.broadcast_to(mats, (grid.size, self.m, self.m)).reshape(grid.shape + (self.m, self.m))

    def density(self, grid, eta):
        """``f(x, eta)`` node-wise for an ``(…, m)`` array ``eta``."""
        return np.einsum("...i,...ij,...j->...", eta, self.matrices(grid), eta)

    def a_integral(self, grid):
        return 0.0


@dataclass(frozen=True, eq=False)
class GeneralIntegrand:
    """``f(x, eta)`` with growth ``d1 |eta|^p <= f <= a(x) + d2 |eta|^p`` on the range of ``C``.

    ``f`` is vectorized: ``(points (N, n), eta (N, m)) -> (N,)``.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    p: float
    d1: float
    d2: float
    a: Optional[ScalarField] = None
    name: str = "general"

    def density(self, grid, eta):
        flat = eta.reshape(grid.size, eta.shape[-1])
        return np.asarray(self.f(grid.points, flat), dtype=float).reshape(grid.shape)

    def a_integral(self, grid):
        if self.a is None:
            return 0.0
        return float(np.sum(self.a.values * grid.weights))


def identity_integrand(m):
    eye = np.eye(m)
    return QuadraticIntegrand(lambda pts: np.broadcast_to(eye, (pts.shape[0], m, m)), m, 1.0, 1.0, "identity")


def constant_integrand(matrix):
    mat = np.asarray(matrix, dtype=float)
    if not np.allclose(mat, mat.T, atol=1e-12):
        raise ContractError("quadratic integrand matrix must be symmetric")
    ev = np.linalg.eigvalsh(mat)
    if ev[0] <= 0:
        raise ContractError("quadratic integrand matrix must be positive definite")
    m = mat.shape[0]
    return QuadraticIntegrand(lambda pts: np.broadcast_to(mat, (pts.shape[0], m, m)), m, float(ev[0]),
                              float(ev[-1]), "constant")


def diagonal_integrand(base, amplitude=0.5, axis=0, freq=1.0):
    """``A(x) = diag(base) * (1 + amplitude sin(2 pi freq x_axis))``."""
    base = np.asarray(base, dtype=float)
    if not 0 <= amplitude < 1 or np.any(base <= 0):
        raise ContractError("diagonal integrand needs positive base and 0 <= amplitude < 1")
    m = base.size

    def A(pts):
        s = 1.0 + amplitude * np.sin(2.0 * np.pi * freq * pts[:, axis])
        out = np.zeros((pts.shape[0], m, m))
        out[:, np.arange(m), np.arange(m)] = s[:, None] * base
        return out

    return QuadraticIntegrand(A, m, float(base.min() * (1 - amplitude)), float(base.max() * (1 + amplitude)),
                              "diagonal")


def rotation_integrand(eigenvalues, turns=1.0, axis=0):
    """Fixed spectrum rotated in the plane of the first two components by ``2 pi turns x_axis``."""
    ev = np.asarray(eigenvalues, dtype=float)
    if np.any(ev <= 0) or ev.size < 2:
        raise ContractError("rotation integrand needs at least two positive eigenvalues")
    m = ev.size

    def A(pts):
        th = 2.0 * np.pi * turns * pts[:, axis]
        c, s = np.cos(th), np.sin(th)
        R = np.zeros((pts.shape[0], m, m))
        R[:, np.arange(m), np.arange(m)] = 1.0
        R[:, 0, 0], R[:, 0, 1], R[:, 1, 0], R[:, 1, 1] = c, -s, s, c
        return np.einsum("nij,j,nkj->nik", R, ev, R)

    return QuadraticIntegrand(A, m, float(ev.min()), float(ev.max()), "rotation")


def power_integrand(p, scale=1.0, d1=None, d2=None):
    """``f(x, eta) = scale |eta|^p``; declared growth constants default to ``scale``."""
    p = float(p)
    fn = lambda pts, eta: scale * np.linalg.norm(eta, axis=-1) ** p
    return GeneralIntegrand(fn, p, scale if d1 is None else d1, scale if d2 is None else d2, None, "power")


def evaluate(F, u, C):
    """``int f(x, Xu(x)) dx`` with cell-rule quadrature."""
    xu = x_gradient(u, C)
    if isinstance(F, QuadraticIntegrand) and F.m != xu.m:
        raise ContractError(f"integrand acts on R^{F.m}, X-gradient has {xu.m} components")
    return float(np.sum(F.density(u.grid, xu.comps) * u.grid.weights))


def growth_check(F, u, C, slack=GROWTH_SLACK):
    """``d1 |Xu|_p^p <= F(u) <= int a + d2 |Xu|_p^p`` up to ``slack``."""
    val = evaluate(F, u, C)
    norm_p = lp_norm(x_gradient(u, C), F.p) ** F.p
    lower = F.d1 * norm_p
    upper = F.a_integral(u.grid) + F.d2 * norm_p
    return bool(lower <= val + slack and val <= upper + slack)


def _phi_comps(Phi, grid, n):
    comps = Phi.comps if isinstance(Phi, VecField) else np.asarray(Phi, dtype=float)
    if comps.shape != grid.shape + (n,):
        raise ContractError(f"Phi must have {n} components on the grid, got shape {comps.shape}")
    return comps


def perturbed_energy(F, u, Phi, C):
    """``int <A (Xu + C Phi), Xu + C Phi>``."""
    grid = u.grid
    eta = x_gradient(u, C).comps + apply_matrix_field(C, grid, _phi_comps(Phi, grid, C.dim_n))
    return float(np.sum(F.density(grid, eta) * grid.weights))


def momentum(F, u, Phi, C):
    """``int <A Xu, C Phi>``."""
    grid = u.grid
    xu = x_gradient(u, C).comps
    cphi = apply_matrix_field(C, grid, _phi_comps(Phi, grid, C.dim_n))
    dens = np.einsum("...i,...ij,...j->...", xu, F.matrices(grid), cphi)
    return float(np.sum(dens * grid.weights))


def phi_energy(F, Phi, C, grid):
    """``int <A C Phi, C Phi>``."""
    cphi = apply_matrix_field(C, grid, _phi_comps(Phi, grid, C.dim_n))
    return float(np.sum(F.density(grid, cphi) * grid.weights))


@dataclass(frozen=True)
class Perturbation:
    """``G(u) = mu/p int |u|^p - int g u``."""

    mu: float
    g: ScalarField
    p: float = 2.0

    def __post_init__(self):
        if self.mu < 0:
            raise ContractError(f"mu must be nonnegative, got {self.mu}")


def perturbation_value(G, u):
    return G.mu / G.p * lp_norm(u, G.p) ** G.p - inner(G.g, u)


def young_deltas(G, eps):
    """Constants ``(delta1, delta2, delta3)`` with
    ``-delta1 - eps |u|_p^p <= G(u) <= delta2 + delta3 |u|_p^p``.

    From Young's inequality ``|g u| <= eps |u|^p + c(eps) |g|^q`` with
    ``c(eps) = (eps p)^(-q/p) / q`` and ``q`` the conjugate exponent.
    """
    p = float(G.p)
    q = p / (p - 1.0)
    gq = lp_norm(G.g, q) ** q

    def c(e):
        return (e * p) ** (-q / p) / q

    return c(eps) * gq, c(1.0) * gq, G.mu / p + 1.0
