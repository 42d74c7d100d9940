"""Experiment configuration: JSON parsing, presets and the resolvability dry run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Any

import numpy as np

from ..anisotropy import builtin_family, classify, sigma
from ..errors import ConfigurationError
from ..functionals import (
    Perturbation,
    constant_integrand,
    diagonal_integrand,
    identity_integrand,
    rotation_integrand,
)
from ..grid import Grid, ScalarField, VecField
from ..mollify import RESOLVE_FACTOR, bump_profile

EXPERIMENTS = {
    "E1": "rayleigh_convergence",
    "E2": "noncompactness",
    "E3": "mollification_rate",
    "E4": "minima_convergence",
    "E5": "h_convergence",
    "E6": "recovery_sequence",
}
_BY_NAME = {v: k for k, v in EXPERIMENTS.items()}
MOLLIFYING = ("E3", "E6")
DEFAULT_H = [1, 2, 4, 8, 16, 32]


def experiment_code(name):
    key = str(name)
    if key.upper() in EXPERIMENTS:
        return key.upper()
    if key in _BY_NAME:
        return _BY_NAME[key]
    raise ConfigurationError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")


# field presets


def scalar_preset(spec, grid, h=None, boundary_mode="free"):
    """Build a ScalarField from a preset description such as ``{"preset": "trig", "k": [1, 1]}``."""
    if spec is None:
        spec = {"preset": "zero"}
    if isinstance(spec, (int, float)):
        spec = {"preset": "constant", "value": spec}
    spec = dict(spec)
    kind = spec.pop("preset", None)
    X = grid.coords
    n = grid.ndim
    lo, hi = np.asarray(grid.lo), np.asarray(grid.hi)
    amp = float(spec.get("amplitude", 1.0))
    if kind == "zero":
        vals = np.zeros(grid.shape)
    elif kind == "constant":
        vals = np.full(grid.shape, float(spec.get("value", 1.0)))
    elif kind == "linear":
        coeffs = spec.get("coeffs", [1.0] * n)
        vals = float(spec.get("offset", 0.0)) + sum(float(c) * x for c, x in zip(coeffs, X))
    elif kind == "sine_product":
        freq = float(spec.get("freq", 1.0))
        vals = amp * np.prod([np.sin(freq * np.pi * (x - lo[i]) / (hi[i] - lo[i])) for i, x in enumerate(X)], axis=0)
    elif kind == "manufactured":
        # source whose mu = 1 Euclidean solution is the unit sine product
        base = np.prod([np.sin(np.pi * (x - lo[i]) / (hi[i] - lo[i])) for i, x in enumerate(X)], axis=0)
        lap = sum((np.pi / (hi[i] - lo[i])) ** 2 for i in range(n))
        vals = amp * (float(spec.get("mu", 1.0)) + lap) * base
    elif kind == "trig":
        k = spec.get("k", [1.0] * n)
        phase = spec.get("phase", [0.0] * n)
        vals = amp * np.prod([np.sin(float(k[i]) * X[i] + float(phase[i])) for i in range(n)], axis=0)
    elif kind == "bump":
        center = np.asarray(spec.get("center", 0.5 * (lo + hi)), dtype=float)
        radius = float(spec.get("radius", 0.5 * float(np.min(hi - lo)) * 0.8))
        r = np.sqrt(sum((x - c) ** 2 for x, c in zip(X, center))) / radius
        vals = amp * bump_profile(r)
    elif kind == "sin_h":
        if h is None:
            raise ConfigurationError("preset sin_h needs an h value")
        axis = int(spec.get("axis", 1))
        vals = amp * np.sin(float(h) * X[axis])
    else:
        raise ConfigurationError(f"unknown field preset {kind!r}")
    return ScalarField(grid, np.broadcast_to(vals, grid.shape), boundary_mode)


def vector_preset(spec, grid):
    if spec is None:
        spec = {"components": [{"preset": "constant", "value": 1.0}] * grid.ndim}
    comps = spec.get("components")
    if not comps or len(comps) != grid.ndim:
        raise ConfigurationError(f"vector preset needs {grid.ndim} components")
    return VecField(grid, np.stack([scalar_preset(c, grid).values for c in comps], axis=-1))


def integrand_preset(spec, m):
    spec = dict(spec or {"preset": "identity"})
    kind = spec.get("preset", "identity")
    if kind == "identity":
        return identity_integrand(m)
    if kind == "constant":
        A = constant_integrand(spec["matrix"])
    elif kind == "diagonal":
        A = diagonal_integrand(spec.get("base", [1.0] * m), float(spec.get("amplitude", 0.5)),
                               int(spec.get("axis", 0)), float(spec.get("freq", 1.0)))
    elif kind == "rotation":
        A = rotation_integrand(spec.get("eigenvalues", [1.0] + [2.0] * (m - 1)), float(spec.get("turns", 1.0)),
                               int(spec.get("axis", 0)))
    else:
        raise ConfigurationError(f"unknown integrand preset {kind!r}")
    if A.m != m:
        raise ConfigurationError(f"integrand acts on R^{A.m} but the family has {m} fields")
    return A


@dataclass
class ExperimentConfig:
    experiment: str
    family: dict
    grid: dict
    h_values: list = None
    p: float = 2.0
    integrand: dict = None
    perturbation: dict = None
    boundary_data: dict = None
    phi_field: dict = None
    field: dict = None
    test_fields: list = None
    tolerances: dict = dc_field(default_factory=dict)
    output: dict = dc_field(default_factory=dict)
    raw: dict = dc_field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data):
        data = json.loads(json.dumps(data))  # deep copy, JSON-clean
        if "experiment" not in data:
            raise ConfigurationError("config needs an 'experiment' entry")
        if "family" not in data or "grid" not in data:
            raise ConfigurationError("config needs 'family' and 'grid' entries")
        known = set(cls.__dataclass_fields__) - {"raw"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**{k: v for k, v in data.items() if k in known}, raw=data)
        cfg.experiment = experiment_code(cfg.experiment)
        if isinstance(cfg.family, str):
            cfg.family = {"name": cfg.family}
        cfg.p = float(cfg.p)
        if cfg.h_values is not None:
            hs = [int(h) for h in cfg.h_values]
            if not hs or any(h < 1 for h in hs) or any(b <= a for a, b in zip(hs, hs[1:])):
                raise ConfigurationError(f"h_values must be positive and strictly increasing, got {cfg.h_values}")
            cfg.h_values = hs
        return cfg

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def build_grid(self):
        g = self.grid
        try:
            return Grid(tuple(g["lo"]), tuple(g["hi"]), tuple(np.atleast_1d(g["res"])))
        except KeyError as exc:
            raise ConfigurationError(f"grid entry needs lo, hi and res (missing {exc})") from None

    def build_family(self):
        fam = self.family
        grid = self.grid
        domain = (tuple(grid["lo"]), tuple(grid["hi"]))
        return builtin_family(fam["name"], fam.get("params"), domain=domain)

    def tol(self, key, default):
        return self.tolerances.get(key, default)

    def perturbation_for(self, grid):
        spec = self.perturbation or {}
        return Perturbation(float(spec.get("mu", 0.0)), scalar_preset(spec.get("g"), grid), self.p)

    def boundary_for(self, grid, h=None):
        """``phi`` (``h=None``) or the preset boundary sequence ``phi_h``."""
        spec = self.boundary_data or {}
        phi = scalar_preset(spec.get("phi"), grid)
        if h is None:
            return phi
        seq = spec.get("sequence", "scaled")
        if seq == "scaled":
            return phi * (1.0 + 1.0 / h)
        if seq == "fixed":
            return phi
        raise ConfigurationError(f"unknown boundary sequence {seq!r}")


def resolved_h_values(cfg, family=None, grid=None):
    """h schedule: explicit values must all be resolvable; the default schedule is truncated."""
    grid = grid or cfg.build_grid()
    family = family or cfg.build_family()
    explicit = cfg.h_values is not None
    hs = cfg.h_values if explicit else list(DEFAULT_H)
    if cfg.experiment not in MOLLIFYING:
        return hs
    need = RESOLVE_FACTOR * grid.max_spacing
    ok = [h for h in hs if sigma(family, h, grid) >= need]
    if explicit and len(ok) != len(hs):
        bad = [h for h in hs if h not in ok]
        raise ConfigurationError(f"sigma(h) below {need:.4g} (3 x max spacing) for h in {bad}; "
                                 "refine the grid or drop these h values")
    if not explicit:
        ok = hs[: next((i for i, h in enumerate(hs) if h not in ok), len(hs))]
    if not ok:
        raise ConfigurationError("no resolvable h value in the schedule")
    return ok


def validate(cfg):
    """Dry run: resolvability per h and class tags; raises on invalid configs."""
    grid = cfg.build_grid()
    family = cfg.build_family()
    hs = cfg.h_values if cfg.h_values is not None else list(DEFAULT_H)
    need = RESOLVE_FACTOR * grid.max_spacing
    sig = {h: sigma(family, h, grid) for h in hs}
    cls = classify(family, grid, hs)
    usable = resolved_h_values(cfg, family, grid)
    return {
        "experiment": cfg.experiment,
        "name": EXPERIMENTS[cfg.experiment],
        "family": family.name,
        "class_tags": sorted(family.class_tags),
        "s1_shape": cls.s1_shape,
        "s2_lip_bound": cls.s2_lip_bound,
        "h_values": usable,
        "sigma": {str(h): sig[h] for h in hs},
        "resolvable": {str(h): sig[h] >= need for h in hs},
        "required_radius": need,
    }
