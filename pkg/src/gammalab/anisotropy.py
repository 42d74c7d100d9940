"""Coefficient-matrix vector fields and moving families ``h -> C^h``.

A family of vector fields ``X_j = sum_i c_ji d/dx_i`` is stored through its
``m x n`` coefficient matrix ``C(x)``; the anisotropic gradient of ``u`` is
``C(x) Du(x)``.  A :class:`MovingFamily` bundles a limit field with a
generator ``h -> C^h`` that converges to it uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError, DomainError

S1 = "S1"
S2 = "S2"

_DOMAIN_TOL = 1e-12
PINV_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Map ``x -> C(x)`` in ``M(m, n)``.

    ``fn`` is vectorized: it receives points of shape ``(N, n)`` and returns
    matrices of shape ``(N, m, n)``.  ``domain`` is an optional closed box
    ``(lo, hi)``; when set, evaluation outside it raises :class:`DomainError`.
    """

    dim_n: int
    dim_m: int
    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz_hint: Optional[float] = None
    domain: Optional[tuple] = None
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim_n:
            raise DomainError(f"points must have {self.dim_n} coordinates, got shape {pts.shape}")
        if self.domain is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.domain)
            scale = _DOMAIN_TOL * max(1.0, float(np.max(np.abs(np.concatenate([lo, hi])))))
            if np.any(pts < lo - scale) or np.any(pts > hi + scale):
                raise DomainError(f"point outside the closed box [{lo.tolist()}, {hi.tolist()}]")
        out = np.asarray(self.fn(pts), dtype=float)
        return np.broadcast_to(out, (pts.shape[0], self.dim_m, self.dim_n))

    def __call__(self, x):
        return eval_coeff(self, x)

    def on_grid(self, grid):
        """Matrices at every node, shape ``grid.shape + (m, n)`` (cached per grid)."""
        mats = self._cache.get(grid)
        if mats is None:
            mats = np.ascontiguousarray(self.evaluate(grid.points).reshape(grid.shape + (self.dim_m, self.dim_n)))
            mats.flags.writeable = False
            self._cache[grid] = mats
        return mats


def eval_coeff(field, x):
    """``C(x)`` as an ``m x n`` array for a single point ``x``."""
    return np.array(field.evaluate(np.asarray(x, dtype=float).reshape(1, -1))[0])


@dataclass(frozen=True, eq=False)
class MovingFamily:
    name: str
    limit: CoefficientField
    generator: Callable[[int], CoefficientField]
    class_tags: frozenset = frozenset()
    sigma_override: Optional[Callable[[float], float]] = None
    static: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def at(self, h):
        if self.static:
            return self.limit
        cf = self._cache.get(h)
        if cf is None:
            cf = self._cache[h] = self.generator(h)
        return cf


def _const_fn(mat):
    mat = np.asarray(mat, dtype=float)

    def fn(pts):
        return np.broadcast_to(mat, (pts.shape[0],) + mat.shape)

    return fn


def _matrix_fn(entries, m, n):
    """Build a vectorized fn from ``entries(pts) -> dict[(j, i)] = array``."""

    def fn(pts):
        out = np.zeros((pts.shape[0], m, n))
        for (j, i), val in entries(pts).items():
            out[:, j, i] = val
        return out

    return fn


def constant_field(matrix, name="constant_matrix", domain=None):
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    return CoefficientField(mat.shape[1], mat.shape[0], _const_fn(mat), 0.0, domain, name)


def euclidean(n=2, domain=None):
    return constant_field(np.eye(n), "euclidean", domain)


def grushin(domain=None):
    """Rows ``(1, 0)`` and ``(0, x1)``."""
    fn = _matrix_fn(lambda p: {(0, 0): 1.0, (1, 1): p[:, 0]}, 2, 2)
    return CoefficientField(2, 2, fn, 1.0, domain, "grushin")


def heisenberg(domain=None):
    """Rows ``(1, 0, x2)`` and ``(0, 1, -x1)``."""
    fn = _matrix_fn(lambda p: {(0, 0): 1.0, (0, 2): p[:, 1], (1, 1): 1.0, (1, 2): -p[:, 0]}, 2, 3)
    return CoefficientField(3, 2, fn, 1.0, domain, "heisenberg")


def _pad_rows(cf, extra_rows):
    """Same field with ``extra_rows`` zero rows appended."""
    m = cf.dim_m + extra_rows

    def fn(pts):
        out = np.zeros((pts.shape[0], m, cf.dim_n))
        out[:, : cf.dim_m] = cf.evaluate(pts)
        return out

    return CoefficientField(cf.dim_n, m, fn, cf.lipschitz_hint, cf.domain, cf.name + "_padded")


def _lift(base, h, axis, domain, name):
    """Stack ``base`` above the row ``(1/h) e_axis``."""
    n, m = base.dim_n, base.dim_m + 1

    def fn(pts):
        out = np.zeros((pts.shape[0], m, n))
        out[:, : base.dim_m] = base.evaluate(pts)
        out[:, -1, axis] = 1.0 / h
        return out

    return CoefficientField(n, m, fn, base.lipschitz_hint, domain, f"{name}[h={h}]")


def _s1_not_s2_profile(x2, h):
    """Odd piecewise-linear profile: slope ``h`` on ``|x2| < 1/h^2``, ``+-1/h`` outside."""
    return np.clip(h * x2, -1.0 / h, 1.0 / h)


def builtin_family(name, params=None, domain=None):
    """Construct one of the built-in moving families.

    Parameters
    ----------
    name : str
        One of ``euclidean, grushin, heisenberg, heisenberg_lift, grushin_lift,
        degenerate_2d, s1_not_s2, constant_matrix``.
    params : dict, optional
        ``n`` for ``euclidean``, ``matrix`` for ``constant_matrix``,
        ``sigma_power`` to override the modulus with ``sigma(h) = h**sigma_power``.
    domain : (lo, hi), optional
        Closed box on which the fields may be evaluated.
    """
    params = dict(params or {})
    sigma_override = None
    if "sigma_power" in params:
        power = float(params.pop("sigma_power"))
        sigma_override = lambda h, _p=power: float(h) ** _p
    both = frozenset({S1, S2})

    if name in ("euclidean", "grushin", "heisenberg", "constant_matrix"):
        if name == "euclidean":
            lim = euclidean(int(params.get("n", 2)), domain)
        elif name == "grushin":
            lim = grushin(domain)
        elif name == "heisenberg":
            lim = heisenberg(domain)
        else:
            if "matrix" not in params:
                raise ConfigurationError("constant_matrix needs a 'matrix' parameter")
            lim = constant_field(params["matrix"], domain=domain)
        return MovingFamily(name, lim, lambda h: lim, both, sigma_override, static=True)

    if name == "degenerate_2d":
        lim = constant_field([[1.0, 0.0], [0.0, 0.0]], "degenerate_2d_limit", domain)
        gen = lambda h: constant_field([[1.0, 0.0], [0.0, 1.0 / h]], f"degenerate_2d[h={h}]", domain)
        return MovingFamily(name, lim, gen, both, sigma_override)

    if name == "grushin_lift":
        base = grushin(domain)
        lim = _pad_rows(base, 1)
        gen = lambda h: _lift(base, h, 1, domain, "grushin_lift")
        return MovingFamily(name, lim, gen, frozenset({S1}), sigma_override)

    if name == "heisenberg_lift":
        base = heisenberg(domain)
        lim = _pad_rows(base, 1)
        gen = lambda h: _lift(base, h, 2, domain, "heisenberg_lift")
        return MovingFamily(name, lim, gen, frozenset({S1}), sigma_override)

    if name == "s1_not_s2":
        lim = constant_field([[1.0, 0.0], [0.0, 0.0]], "s1_not_s2_limit", domain)

        def gen(h):
            fn = _matrix_fn(lambda p: {(0, 0): 1.0, (1, 1): _s1_not_s2_profile(p[:, 1], h)}, 2, 2)
            return CoefficientField(2, 2, fn, float(h), domain, f"s1_not_s2[h={h}]")

        return MovingFamily(name, lim, gen, frozenset({S1}), sigma_override)

    raise ConfigurationError(f"unknown family {name!r}")


FAMILY_NAMES = (
    "euclidean",
    "grushin",
    "heisenberg",
    "heisenberg_lift",
    "grushin_lift",
    "degenerate_2d",
    "s1_not_s2",
    "constant_matrix",
)


def largest_eig_sym(G):
    """Largest eigenvalue of stacked symmetric ``k x k`` matrices, ``k <= 3``, in closed form."""
    G = np.asarray(G, dtype=float)
    k = G.shape[-1]
    if k == 1:
        return G[..., 0, 0].copy()
    if k == 2:
        a, b, d = G[..., 0, 0], G[..., 0, 1], G[..., 1, 1]
        return 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + b * b)
    if k != 3:
        raise ValueError(f"closed form only for k <= 3, got {k}")
    # trigonometric solution of the characteristic cubic
    a11, a22, a33 = G[..., 0, 0], G[..., 1, 1], G[..., 2, 2]
    a12, a13, a23 = G[..., 0, 1], G[..., 0, 2], G[..., 1, 2]
    off = a12 * a12 + a13 * a13 + a23 * a23
    q = (a11 + a22 + a33) / 3.0
    p2 = (a11 - q) ** 2 + (a22 - q) ** 2 + (a33 - q) ** 2 + 2.0 * off
    p = np.sqrt(p2 / 6.0)
    safe_p = np.where(p > 0, p, 1.0)
    b11, b22, b33 = (a11 - q) / safe_p, (a22 - q) / safe_p, (a33 - q) / safe_p
    b12, b13, b23 = a12 / safe_p, a13 / safe_p, a23 / safe_p
    det = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13) + b13 * (b12 * b23 - b22 * b13)
    r = np.clip(det / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    top = q + 2.0 * p * np.cos(phi)
    return np.where(p > 0, top, q)


def opnorm(M):
    """Spectral norm of stacked small matrices via the Gram matrix ``M^T M`` (or ``M M^T``)."""
    M = np.asarray(M, dtype=float)
    if M.shape[-1] <= M.shape[-2]:
        G = np.einsum("...ki,...kj->...ij", M, M)
    else:
        G = np.einsum("...ik,...jk->...ij", M, M)
    return np.sqrt(np.maximum(largest_eig_sym(G), 0.0))


def sup_opnorm_diff(family, h, grid):
    """``max_x |C^h(x) - C(x)|_op`` over the nodes of ``grid``."""
    if family.static:
        return 0.0
    diff = family.at(h).on_grid(grid) - family.limit.on_grid(grid)
    return float(np.max(opnorm(diff)))


def sigma(family, h, grid):
    """Mollification modulus with ``sup |C^h - C|_op <= sigma(h)^(n+2)``.

    Uses the family's override when present, otherwise the saturating choice
    ``sup^(1/(n+2))`` and ``1/h`` when the two fields coincide.
    """
    if family.sigma_override is not None:
        return float(family.sigma_override(h))
    sup = sup_opnorm_diff(family, h, grid)
    if sup == 0.0:
        return 1.0 / float(h)
    return sup ** (1.0 / (family.limit.dim_n + 2))


def pseudoinverse(M):
    """Moore-Penrose pseudoinverse via SVD; singular values below ``1e-12 * s_max`` count as zero.

    Raises
    ------
    DomainError
        If an entry of the result is not representable in float64.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    scale = float(np.max(np.abs(M), initial=0.0))
    if scale == 0.0:
        return np.zeros(M.T.shape)
    with np.errstate(over="ignore"):
        P = _unit_pinv(M / scale) / scale
    if not np.all(np.isfinite(P)):
        raise DomainError("pseudoinverse overflows float64; the smallest kept singular value is too small")
    return P


def _unit_pinv(M):
    # M has max-abs entry 1, so 1/s cannot overflow before the cutoff
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > PINV_RCOND * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def decompose(xi, C):
    """Split ``xi`` into its parts in the row space of ``C`` and in ``ker C``.

    Returns ``(xi_V, xi_N)`` with ``xi_V = C^+ C xi`` and ``xi_N = xi - xi_V``.
    """
    xi = np.asarray(xi, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    scale = float(np.max(np.abs(C), initial=0.0))
    if scale == 0.0:
        return np.zeros_like(xi), xi.copy()
    Cn = C / scale  # the projection C^+ C is scale free
    xi_v = _unit_pinv(Cn) @ (Cn @ xi)
    return xi_v, xi - xi_v


def lipschitz_estimate(cf, grid):
    """Largest adjacent-node difference quotient over all entries and axes.

    A lower bound for the true per-entry Lipschitz constant.
    """
    vals = cf.on_grid(grid)
    best = 0.0
    for ax, dx in enumerate(grid.spacing):
        if vals.shape[ax] > 1:
            best = max(best, float(np.max(np.abs(np.diff(vals, axis=ax)))) / dx)
    return best


class Classification(NamedTuple):
    s1_shape: bool
    s2_lip_bound: float


def classify(family, grid, h_probe, tol=1e-12):
    """Check the stacked-rows shape and report the largest probed Lipschitz estimate."""
    h_probe = list(h_probe)
    if not h_probe:
        raise ValueError("h_probe must not be empty")
    lim = family.limit.on_grid(grid)
    row_zero = np.all(np.abs(lim) <= tol, axis=tuple(range(grid.ndim)) + (grid.ndim + 1,))
    k = lim.shape[-2]
    while k > 0 and row_zero[k - 1]:
        k -= 1
    s1 = True
    lip = 0.0
    for h in h_probe:
        ch = family.at(h)
        vals = ch.on_grid(grid)
        if vals.shape != lim.shape or np.max(np.abs(vals[..., :k, :] - lim[..., :k, :]), initial=0.0) > tol:
            s1 = False
        lip = max(lip, lipschitz_estimate(ch, grid))
    return Classification(s1, lip)
