"""Discrete Dirichlet problems ``mu u + L u = g``, Rayleigh quotients and Poincare checks.

The operator is applied matrix-free as ``mu v + D^T (w C^T A C D v)``, the exact
adjoint of the forward-difference energy, restricted to interior nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ContractError, IterationError
from .functionals import (
    Perturbation,
    QuadraticIntegrand,
    evaluate,
    identity_integrand,
    perturbation_value,
)
from .grid import ZERO_DIRICHLET, ScalarField, inner, lp_norm, x_gradient

CG_TOL = 1e-10
EIG_TOL = 1e-8
DESCENT_TOL = 1e-6
POINCARE_SLACK = 1e-10


@dataclass(eq=False)
class DirichletProblem:
    """``mu u + L u = g`` in the box, ``u = phi`` on its boundary.

    ``rayleigh_lower_bound`` certifies coercivity when ``mu == 0``.
    """

    C: object
    A: QuadraticIntegrand
    mu: float
    g: ScalarField
    phi: Optional[ScalarField] = None
    p: float = 2.0
    rayleigh_lower_bound: Optional[float] = None
    _op: Optional["_Operator"] = field(default=None, repr=False)

    def __post_init__(self):
        if self.mu < 0:
            raise ContractError(f"mu must be nonnegative, got {self.mu}")
        if self.phi is None:
            self.phi = self.g.grid.zeros()
        if self.phi.grid != self.g.grid:
            raise ContractError("boundary datum and source live on different grids")
        if self.C.dim_n != self.grid.ndim:
            raise ContractError("coefficient field and grid dimensions differ")
        if self.A.m != self.C.dim_m:
            raise ContractError(f"integrand acts on R^{self.A.m}, coefficient field has {self.C.dim_m} rows")

    @property
    def grid(self):
        return self.g.grid

    @property
    def operator(self):
        if self._op is None:
            self._op = _Operator(self.grid, self.C, self.A, self.mu)
        return self._op


class _Operator:
    def __init__(self, grid, C, A, mu):
        mats = C.on_grid(grid)
        amats = A.matrices(grid)
        K = np.einsum("...ki,...kl,...lj->...ij", mats, amats, mats)
        n = grid.ndim
        self.grid = grid
        self.K = np.ascontiguousarray(K.reshape(grid.size, n, n))
        self.mu = float(mu)
        self.shape = grid.shape
        self.inv_h = np.array([1.0 / s for s in grid.spacing])
        self.active = np.ascontiguousarray((grid.weights > 0).ravel())
        self.interior = grid.interior_mask.ravel()

    def stiffness(self, v):
        return _kernels.stiffness_apply(v, self.K, self.shape, self.inv_h, self.active)

    def __call__(self, v):
        out = self.stiffness(v)
        if self.mu:
            out += self.mu * v
        out[~self.interior] = 0.0
        return out


@dataclass(frozen=True)
class SolveReport:
    solution: ScalarField
    iterations: int
    residual: float
    energy: float


def apply_operator(prob, v):
    """``v -> mu v + L v`` for a zero-boundary field, zero on boundary nodes."""
    vals = np.where(prob.grid.interior_mask, v.values, 0.0).ravel()
    return ScalarField(prob.grid, prob.operator(vals).reshape(prob.grid.shape), ZERO_DIRICHLET)


def conjugate_gradient(op, b, x0=None, tol=CG_TOL, max_iter=None):
    """Plain CG for a symmetric positive definite ``op``; returns ``(x, iterations, rel_residual)``."""
    max_iter = max_iter or 10 * b.size
    bnorm = float(np.sqrt(b @ b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - op(x) if x0 is not None else b.copy()
    d = r.copy()
    rr = float(r @ r)
    it = 0
    while np.sqrt(rr) > tol * bnorm:
        if it >= max_iter:
            raise IterationError(
                f"conjugate gradients did not converge in {max_iter} iterations "
                f"(relative residual {np.sqrt(rr) / bnorm:.3e})",
                residual=np.sqrt(rr) / bnorm,
                iterations=it,
            )
        q = op(d)
        dq = float(d @ q)
        if dq <= 0.0:
            raise IterationError("operator is not positive definite on the search direction",
                                 residual=np.sqrt(rr) / bnorm, iterations=it)
        alpha = rr / dq
        x += alpha * d
        r -= alpha * q
        rr_new = float(r @ r)
        d = r + (rr_new / rr) * d
        rr = rr_new
        it += 1
    return x, it, float(np.sqrt(rr) / bnorm)


def dirichlet_energy(prob, u):
    """``mu/2 |u|^2 + 1/2 int <A Xu, Xu> - int g u``."""
    return 0.5 * prob.mu * lp_norm(u, 2) ** 2 + 0.5 * evaluate(prob.A, u, prob.C) - inner(prob.g, u)


def solve_dirichlet(prob, tol=CG_TOL, max_iter=None):
    """Solve ``u = phi + v`` with ``v`` zero on the boundary by conjugate gradients."""
    if prob.p != 2:
        raise ContractError("only p = 2 Dirichlet problems are solved")
    if prob.mu == 0 and not (prob.rayleigh_lower_bound and prob.rayleigh_lower_bound > 0):
        raise ContractError("mu = 0 requires a positive Rayleigh lower bound certificate")
    op = prob.operator
    phi = prob.phi.values.ravel()
    b = prob.g.values.ravel() - op.stiffness(phi) - prob.mu * phi
    b[~op.interior] = 0.0
    v, it, res = conjugate_gradient(op, b, tol=tol, max_iter=max_iter)
    u_vals = (phi + np.where(op.interior, v, 0.0)).reshape(prob.grid.shape)
    u = ScalarField(prob.grid, u_vals, prob.phi.boundary_mode)
    return SolveReport(u, it, res, dirichlet_energy(prob, u))


def scaled_integrand(A, factor):
    return QuadraticIntegrand(lambda pts: factor * np.asarray(A.A(pts)), A.m, factor * A.lam, factor * A.Lam,
                              f"{factor:g}*{A.name}")


def total_objective(prob, G, u):
    """``int <A Xu, Xu> + G(u)`` plus the problem's own ``mu/2 |u|^2 - int g u`` terms."""
    return (evaluate(prob.A, u, prob.C) + perturbation_value(G, u)
            + 0.5 * prob.mu * lp_norm(u, 2) ** 2 - inner(prob.g, u))


def minimize_total(prob, G, tol=CG_TOL, max_iter=None):
    """Minimize ``F^phi + G`` over ``u = phi + v``; returns ``(SolveReport, minimum)``."""
    if prob.p != 2 or G.p != 2:
        raise ContractError("minimize_total handles p = 2 only")
    combined = DirichletProblem(prob.C, scaled_integrand(prob.A, 2.0), prob.mu + G.mu, prob.g + G.g, prob.phi,
                                2.0, prob.rayleigh_lower_bound)
    rep = solve_dirichlet(combined, tol=tol, max_iter=max_iter)
    return rep, total_objective(prob, G, rep.solution)


def sine_start(grid):
    """Deterministic start ``prod_i sin(pi (x_i - lo_i) / (hi_i - lo_i))``."""
    u = np.ones(grid.shape)
    for i, c in enumerate(grid.coords):
        u = u * np.sin(np.pi * (c - grid.lo[i]) / (grid.hi[i] - grid.lo[i]))
    return np.where(grid.interior_mask, u, 0.0)


@dataclass(frozen=True)
class RayleighResult:
    value: float
    eigenvector: ScalarField
    iterations: int
    upper_bound: bool


def _rayleigh_p2(C, grid, tol, max_iter, cg_tol):
    prob = DirichletProblem(C, identity_integrand(C.dim_m), 0.0, grid.zeros(), rayleigh_lower_bound=1.0)
    op = prob.operator
    vol = grid.cell_volume
    u = sine_start(grid).ravel()
    u /= np.sqrt(u @ u * vol)
    lam = float(u @ op(u)) / float(u @ u)
    for it in range(1, max_iter + 1):
        w, _, _ = conjugate_gradient(op, u, x0=u / lam, tol=cg_tol)
        u = w / np.sqrt(w @ w * vol)
        new = float(u @ op(u)) / float(u @ u)
        if abs(new - lam) <= tol * abs(new):
            return RayleighResult(new, ScalarField(grid, u.reshape(grid.shape), ZERO_DIRICHLET), it, False)
        lam = new
    raise IterationError(f"inverse power iteration did not converge in {max_iter} steps", iterations=max_iter)


def _adjoint_gradient(grid, Y):
    """``D^T Y`` for an ``grid.shape + (n,)`` array ``Y`` (zero-Dirichlet forward differences)."""
    out = np.zeros(grid.shape)
    n = grid.ndim
    for a in range(n):
        ya = Y[..., a] / grid.spacing[a]
        out -= ya
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[a] = slice(0, grid.shape[a] - 1)
        hi[a] = slice(1, grid.shape[a])
        out[tuple(hi)] += ya[tuple(lo)]
    return out


def _rayleigh_descent(C, grid, p, tol, max_iter):
    mats = C.on_grid(grid)
    w = grid.weights
    interior = grid.interior_mask

    def parts(vals):
        u = ScalarField(grid, vals, ZERO_DIRICHLET)
        eta = x_gradient(u, C).comps
        aeta = np.sqrt(np.einsum("...i,...i->...", eta, eta))
        num = float(np.sum(aeta**p * w))
        den = float(np.sum(np.abs(vals) ** p * w))
        return num, den, eta, aeta

    def quotient_and_grad(vals):
        num, den, eta, aeta = parts(vals)
        q = num / den
        scale = np.zeros_like(aeta)
        np.power(aeta, p - 2.0, out=scale, where=aeta > 0)
        y = np.einsum("...ki,...k->...i", mats, scale[..., None] * eta) * w[..., None]
        gnum = p * _adjoint_gradient(grid, y)
        gden = p * np.sign(vals) * np.abs(vals) ** (p - 1.0) * w
        g = (gnum - q * gden) / den
        return q, np.where(interior, g, 0.0)

    def normalize(vals):
        return vals / float(np.sum(np.abs(vals) ** p * w)) ** (1.0 / p)

    u = normalize(sine_start(grid))
    q, g = quotient_and_grad(u)
    gnorm = float(np.max(np.abs(g)))
    if gnorm == 0.0:
        return RayleighResult(q, ScalarField(grid, u, ZERO_DIRICHLET), 0, True)
    t = 0.05 * float(np.max(np.abs(u))) / gnorm
    for it in range(1, max_iter + 1):
        gg = float(np.sum(g * g))
        while True:
            trial = normalize(u - t * g)
            num, den, _, _ = parts(trial)
            q_trial = num / den
            if q_trial <= q - 1e-4 * t * gg:
                break
            t *= 0.5
            if t * float(np.max(np.abs(g))) < 1e-14 * float(np.max(np.abs(u))):
                return RayleighResult(q, ScalarField(grid, u, ZERO_DIRICHLET), it, True)
        change = abs(q - q_trial) / abs(q_trial)
        step = trial - u
        u = trial
        g_old = g
        q, g = quotient_and_grad(u)
        if change < tol:
            return RayleighResult(q, ScalarField(grid, u, ZERO_DIRICHLET), it, True)
        # Barzilai-Borwein trial step for the next line search
        sy = float(np.sum(step * (g - g_old)))
        t = float(np.sum(step * step)) / sy if sy > 0 else 2.0 * t
    raise IterationError(f"projected descent did not converge in {max_iter} steps", iterations=max_iter)


def rayleigh_eigenpair(C, grid, p=2.0, tol=None, max_iter=None, cg_tol=CG_TOL):
    """Rayleigh quotient of ``C`` on zero-boundary fields with the minimizing field.

    ``p = 2``: inverse power iteration (exact discrete minimum).
    ``p != 2``: projected gradient descent; the value is an upper bound.
    """
    p = float(p)
    if p <= 1:
        raise ContractError(f"p must exceed 1, got {p}")
    if p == 2.0:
        return _rayleigh_p2(C, grid, tol or EIG_TOL, max_iter or 5000, cg_tol)
    return _rayleigh_descent(C, grid, p, tol or DESCENT_TOL, max_iter or 20000)


def rayleigh_quotient(C, grid, p=2.0, **opts):
    return rayleigh_eigenpair(C, grid, p, **opts).value


def poincare_check(u, C, p, R, slack=POINCARE_SLACK):
    """``|u|_p^p <= (2/R) |Xu|_p^p`` for a zero-boundary field."""
    if R <= 0:
        raise ContractError("R must be positive")
    return bool(lp_norm(u, p) ** p <= 2.0 / R * lp_norm(x_gradient(u, C), p) ** p + slack)


def poincare_affine_check(u, phi, C, p, R, slack=POINCARE_SLACK):
    """Poincare bound for ``u`` with boundary datum ``phi``:
    ``|u|^p <= 2^(2p-1)/R (|Xu|^p + |X phi|^p) + 2^(p-1) |phi|^p``."""
    if R <= 0:
        raise ContractError("R must be positive")
    c = 2.0 ** (2 * p - 1) / R
    rhs = (c * lp_norm(x_gradient(u, C), p) ** p + c * lp_norm(x_gradient(phi, C), p) ** p
           + 2.0 ** (p - 1) * lp_norm(phi, p) ** p)
    return bool(lp_norm(u, p) ** p <= rhs + slack)
