"""Experiment drivers E1-E6; each returns a :class:`ConvergenceReport` ordered by h."""

from __future__ import annotations

import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import __version__
from .._accel import backend, thread_cap
from ..errors import DataError, GammalabError
from ..grid import inner, lp_norm, x_gradient
from ..mollify import commutator_bound, commutator_norm, meyers_serrin_step
from ..anisotropy import sigma as modulus
from ..functionals import momentum, young_deltas
from ..solve import CG_TOL, DirichletProblem, minimize_total, rayleigh_eigenpair, rayleigh_quotient, solve_dirichlet
from .config import EXPERIMENTS, ExperimentConfig, integrand_preset, resolved_h_values, scalar_preset, vector_preset
from .report import ConvergenceReport, Row, emit, fit_rate

log = logging.getLogger(__name__)

THEOREM_TAGS = {
    "E1": "rayleigh_quotients_converge",
    "E2": "bounded_sequence_without_strong_limit",
    "E3": "mollified_commutator_vanishes",
    "E4": "minima_and_minimizers_converge",
    "E5": "h_convergence_of_solutions_and_momenta",
    "E6": "recovery_sequence_for_norm_gamma_limit",
}


class _Context:
    def __init__(self, cfg):
        self.cfg = cfg
        self.grid = cfg.build_grid()
        self.family = cfg.build_family()
        self.p = cfg.p
        self.h_values = resolved_h_values(cfg, self.family, self.grid)
        self.meta = {}


# E1


def _e1_setup(ctx):
    res = rayleigh_eigenpair(ctx.family.limit, ctx.grid, ctx.p, tol=ctx.cfg.tol("eig_tol", None))
    ctx.limit = res.value
    ctx.meta["limit_value"] = res.value
    ctx.meta["upper_bound"] = res.upper_bound


def _e1_row(ctx, h):
    res = rayleigh_eigenpair(ctx.family.at(h), ctx.grid, ctx.p, tol=ctx.cfg.tol("eig_tol", None))
    return Row.compare(h, res.value, ctx.limit, iterations=res.iterations, upper_bound=res.upper_bound)


# E2


def _e2_setup(ctx):
    cfg = ctx.cfg
    ctx.field_spec = cfg.field or {"preset": "sin_h", "axis": 1}
    tests = cfg.test_fields or [{"preset": "constant", "value": 1.0}, {"preset": "trig", "k": [1.0] * ctx.grid.ndim}]
    ctx.tests = [scalar_preset(t, ctx.grid) for t in tests]
    g = ctx.grid
    if ctx.field_spec.get("preset") == "sin_h" and ctx.p == 2:
        vol = float(np.prod(np.subtract(g.hi, g.lo)))
        amp = float(ctx.field_spec.get("amplitude", 1.0))
        ctx.reference = abs(amp) * np.sqrt(vol / 2.0)
    else:
        ctx.reference = None


def _e2_row(ctx, h):
    u = scalar_preset(ctx.field_spec, ctx.grid, h=h)
    norm = lp_norm(u, ctx.p)
    xnorm = lp_norm(x_gradient(u, ctx.family.at(h)), ctx.p)
    extras = {"xh_norm": xnorm}
    for i, w in enumerate(ctx.tests):
        extras[f"inner_w{i}"] = abs(inner(u, w))
    ref = ctx.reference if ctx.reference is not None else norm
    return Row.compare(h, norm, ref, **extras)


# E3


def _e3_setup(ctx):
    ctx.u = scalar_preset(ctx.cfg.field or {"preset": "bump"}, ctx.grid)
    n, p = ctx.grid.ndim, ctx.p
    ctx.meta["abscissa"] = "sigma"
    ctx.meta["theory_rate"] = (n * (p - 1) + p) / p


def _e3_row(ctx, h):
    val = commutator_norm(ctx.u, ctx.family, h, ctx.p)
    bound = commutator_bound(ctx.u, ctx.family, h, ctx.p)
    return Row.compare(h, val, 0.0, sigma=modulus(ctx.family, h, ctx.grid), bound=bound)


# E4


def _e4_setup(ctx):
    cfg, g = ctx.cfg, ctx.grid
    ctx.A = integrand_preset(cfg.integrand, ctx.family.limit.dim_m)
    ctx.G = cfg.perturbation_for(g)
    prob = DirichletProblem(ctx.family.limit, ctx.A, 0.0, g.zeros(), cfg.boundary_for(g))
    rep, ctx.limit = minimize_total(prob, ctx.G, tol=cfg.tol("cg_tol", CG_TOL))
    ctx.meta["limit_value"] = ctx.limit
    ctx.meta["limit_iterations"] = rep.iterations


def _e4_row(ctx, h):
    g = ctx.grid
    prob = DirichletProblem(ctx.family.at(h), ctx.A, 0.0, g.zeros(), ctx.cfg.boundary_for(g, h))
    rep, val = minimize_total(prob, ctx.G, tol=ctx.cfg.tol("cg_tol", CG_TOL))
    return Row.compare(h, val, ctx.limit, iterations=rep.iterations, residual=rep.residual)


# E5


def _problem(ctx, C, phi):
    G = ctx.G
    cert = None
    if G.mu == 0:
        cert = rayleigh_quotient(C, ctx.grid)
    return DirichletProblem(C, ctx.A, G.mu, G.g, phi, 2.0, cert)


def _e5_setup(ctx):
    cfg, g = ctx.cfg, ctx.grid
    ctx.A = integrand_preset(cfg.integrand, ctx.family.limit.dim_m)
    ctx.G = cfg.perturbation_for(g)
    ctx.Phi = vector_preset(cfg.phi_field, g)
    rep = solve_dirichlet(_problem(ctx, ctx.family.limit, cfg.boundary_for(g)), tol=cfg.tol("cg_tol", CG_TOL))
    ctx.u_inf = rep.solution
    ctx.norm_inf = lp_norm(ctx.u_inf, 2)
    ctx.mom_inf = momentum(ctx.A, ctx.u_inf, ctx.Phi, ctx.family.limit)
    ctx.meta["limit_momentum"] = ctx.mom_inf
    ctx.meta["limit_norm"] = ctx.norm_inf


def _e5_row(ctx, h):
    g = ctx.grid
    C = ctx.family.at(h)
    rep = solve_dirichlet(_problem(ctx, C, ctx.cfg.boundary_for(g, h)), tol=ctx.cfg.tol("cg_tol", CG_TOL))
    u = rep.solution
    dist = lp_norm(u - ctx.u_inf, 2)
    mom = momentum(ctx.A, u, ctx.Phi, C)
    mom_err = abs(mom - ctx.mom_inf)
    return Row.compare(h, lp_norm(u, 2), ctx.norm_inf, abs_error=dist, momentum=mom, momentum_abs_error=mom_err,
                       momentum_rel_error=mom_err / abs(ctx.mom_inf) if ctx.mom_inf else mom_err,
                       iterations=rep.iterations, residual=rep.residual)


# E6


def _e6_setup(ctx):
    ctx.u = scalar_preset(ctx.cfg.field or {"preset": "bump"}, ctx.grid)
    ctx.limit = lp_norm(x_gradient(ctx.u, ctx.family.limit), ctx.p) ** ctx.p
    ctx.meta["limit_value"] = ctx.limit
    ctx.meta["abscissa"] = "sigma"


def _e6_row(ctx, h):
    uh = meyers_serrin_step(ctx.u, ctx.family, h)
    val = lp_norm(x_gradient(uh, ctx.family.at(h)), ctx.p) ** ctx.p
    return Row.compare(h, val, ctx.limit, lp_distance=lp_norm(uh - ctx.u, ctx.p),
                       sigma=modulus(ctx.family, h, ctx.grid))


_DRIVERS = {
    "E1": (_e1_setup, _e1_row),
    "E2": (_e2_setup, _e2_row),
    "E3": (_e3_setup, _e3_row),
    "E4": (_e4_setup, _e4_row),
    "E5": (_e5_setup, _e5_row),
    "E6": (_e6_setup, _e6_row),
}


def run(config, out_dir=None, fmt=None):
    """Run one experiment from an :class:`ExperimentConfig` (or a plain dict).

    When ``out_dir`` (or ``config.output["dir"]``) is set the report is also written.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    start = time.perf_counter()
    code = cfg.experiment
    try:
        ctx = _Context(cfg)
        setup, row_fn = _DRIVERS[code]
        ctx.meta.setdefault("abscissa", "h")
        setup(ctx)
        workers = min(thread_cap(), len(ctx.h_values))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(lambda h: row_fn(ctx, h), ctx.h_values))
        else:
            rows = [row_fn(ctx, h) for h in ctx.h_values]
    except GammalabError as exc:
        raise type(exc)(f"{code} ({EXPERIMENTS[code]}): {exc}") from exc
    report = ConvergenceReport(code, rows)
    metadata = {
        "experiment": code,
        "name": EXPERIMENTS[code],
        "theorem": THEOREM_TAGS[code],
        "family": ctx.family.name,
        "class_tags": sorted(ctx.family.class_tags),
        "h_values": list(ctx.h_values),
        "p": ctx.p,
    }
    metadata.update(ctx.meta)
    if code in ("E4", "E5"):
        d1, d2, d3 = young_deltas(ctx.G, 0.5)
        metadata["young_deltas_eps_0.5"] = {"delta1": d1, "delta2": d2, "delta3": d3}
    report.metadata = metadata
    try:
        report.fitted_rate = fit_rate(report)
    except DataError:
        report.fitted_rate = None
    metadata["wall_time_s"] = time.perf_counter() - start
    metadata["versions"] = {"gammalab": __version__, "numpy": np.__version__, "python": platform.python_version(),
                            "backend": backend()}
    metadata["config"] = cfg.raw
    report.metadata = metadata
    out_dir = out_dir or (cfg.output or {}).get("dir")
    if out_dir:
        emit(report, fmt or (cfg.output or {}).get("format", "csv"), out_dir)
    log.info("%s finished in %.2fs", code, metadata["wall_time_s"])
    return report
