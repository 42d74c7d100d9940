import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammalab.anisotropy import builtin_family
from gammalab.errors import ResolutionError
from gammalab.grid import ZERO_DIRICHLET, Grid, ScalarField, gradient, lp_norm, x_gradient
from gammalab.mollify import (
    affine_approx_step,
    bump_kernel,
    bump_profile,
    commutator_bound,
    commutator_norm,
    convolve,
    cutoff,
    discrete_mass,
    gradient_constant,
    grid_weights,
    max_gradient_on_lattice,
    meyers_serrin_step,
    scaled_kernel,
)
from gammalab.anisotropy import sigma as modulus

BOX = ((-1.0, -1.0), (1.0, 1.0))


def bump_field(grid, radius=0.5):
    r = np.sqrt(grid.coords[0] ** 2 + grid.coords[1] ** 2) / radius
    return grid.scalar(bump_profile(r))


def direct_convolution(values, grid, J):
    """Reference: loop over every node pair within the kernel radius."""
    ks, w, _ = grid_weights(J, grid.spacing)
    out = np.zeros(grid.shape)
    for idx in itertools.product(*(range(s) for s in grid.shape)):
        acc = 0.0
        for k, wk in zip(ks, w):
            j = tuple(int(a + b) for a, b in zip(idx, k))
            if all(0 <= jj < s for jj, s in zip(j, grid.shape)):
                acc += wk * values[j]
        out[idx] = acc
    return out


def test_bump_kernel_center_and_support():
    J = bump_kernel(2)
    assert J.value([0.0, 0.0])[0] == pytest.approx(np.exp(-1.0) * J.normalization, rel=1e-15)
    assert J.value([1.0, 0.0])[0] == 0.0
    assert J.value([0.8, 0.8])[0] == 0.0
    with pytest.raises(ValueError):
        bump_kernel(4)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_reference_mass_is_one(n):
    J = bump_kernel(n)
    assert discrete_mass(J, (1.0 / 64,) * n) == pytest.approx(1.0, abs=1e-12)


def test_scaled_kernel():
    J = bump_kernel(2)
    assert scaled_kernel(J, 1.0) == J
    half = scaled_kernel(J, 0.5)
    assert half.radius == 0.5
    assert half.value([0.0, 0.0])[0] == pytest.approx(4.0 * J.value([0.0, 0.0])[0], rel=1e-15)
    with pytest.raises(ValueError):
        scaled_kernel(J, 0.0)


def test_gradient_bound_scaling():
    J = bump_kernel(2)
    C = gradient_constant(J)
    assert max_gradient_on_lattice(J, (1e-3, 1e-3)) <= C * (1 + 1e-9)
    for s in (0.5, 0.25):
        Js = scaled_kernel(J, s)
        assert max_gradient_on_lattice(Js, (s / 200, s / 200)) <= C / s ** 3 * (1 + 1e-9)


@pytest.mark.parametrize("sigma", [0.1, 0.2, 0.35])
def test_working_grid_weights_unit_mass(sigma):
    _, w, _ = grid_weights(scaled_kernel(bump_kernel(2), sigma), (2 / 64, 2 / 64))
    assert np.sum(w) == pytest.approx(1.0, abs=1e-12)
    assert np.all(w >= 0)


def test_convolve_constant_interior():
    g = Grid(*BOX, 64)
    J = scaled_kernel(bump_kernel(2), 0.2)
    out = convolve(g.scalar(lambda x, y: 1.0 + 0 * x), J).values
    deep = g.distance_to_boundary() > 0.2 + 1e-9
    assert np.max(np.abs(out[deep] - 1.0)) <= 1e-12


def test_convolve_zero_and_linear():
    g = Grid(*BOX, 64)
    J = scaled_kernel(bump_kernel(2), 0.2)
    assert np.array_equal(convolve(g.zeros(), J).values, np.zeros(g.shape))
    x = g.scalar(lambda x, y: x)
    out = convolve(x, J).values
    deep = g.distance_to_boundary() > 0.2 + 1e-9
    assert np.max(np.abs(out[deep] - g.coords[0][deep])) <= 1e-10


def test_convolve_matches_direct_summation(rng, each_backend):
    g = Grid((0.0, 0.0), (1.0, 1.0), 12)
    J = scaled_kernel(bump_kernel(2), 0.3)
    vals = rng.standard_normal(g.shape)
    ref = direct_convolution(vals, g, J)
    assert np.allclose(convolve(g.scalar(vals), J).values, ref, rtol=0, atol=1e-13)


def test_convolve_1d_and_3d(rng):
    g1 = Grid((0.0,), (1.0,), 32)
    J1 = scaled_kernel(bump_kernel(1), 0.2)
    v1 = rng.standard_normal(g1.shape)
    assert np.allclose(convolve(g1.scalar(v1), J1).values, direct_convolution(v1, g1, J1), atol=1e-13)
    g3 = Grid((0.0,) * 3, (1.0,) * 3, 6)
    J3 = scaled_kernel(bump_kernel(3), 0.5)
    v3 = rng.standard_normal(g3.shape)
    assert np.allclose(convolve(g3.scalar(v3), J3).values, direct_convolution(v3, g3, J3), atol=1e-13)


def test_under_resolved_kernel_rejected():
    g = Grid(*BOX, 64)
    with pytest.raises(ResolutionError) as info:
        convolve(g.zeros(), scaled_kernel(bump_kernel(2), 0.05))
    assert info.value.required_radius == pytest.approx(3 * 2 / 64)
    assert "0.09375" in str(info.value)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_convolution_linear(seed, a, b):
    g = Grid((0.0, 0.0), (1.0, 1.0), 16)
    J = scaled_kernel(bump_kernel(2), 0.25)
    r = np.random.default_rng(seed)
    u, v = g.scalar(r.standard_normal(g.shape)), g.scalar(r.standard_normal(g.shape))
    lhs = convolve(a * u + b * v, J).values
    rhs = a * convolve(u, J).values + b * convolve(v, J).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_meyers_serrin_gate():
    g = Grid(*BOX, 64)
    fam = builtin_family("degenerate_2d", domain=BOX)
    u = bump_field(g)
    meyers_serrin_step(u, fam, 16)  # sigma = 0.5
    with pytest.raises(ResolutionError):
        meyers_serrin_step(u, fam, 20000)  # sigma ~ 0.084 < 3 dx


def test_meyers_serrin_approximation_improves():
    fam = builtin_family("degenerate_2d", {"sigma_power": -0.5}, domain=((-2, -2), (2, 2)))
    for res in (64, 128):
        g = Grid((-2.0, -2.0), (2.0, 2.0), res)
        u = bump_field(g, 1.0)
        errs = [lp_norm(meyers_serrin_step(u, fam, h) - u, 2) for h in (4, 8, 16, 25)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
    # the same run at doubled resolution agrees to the discretization level
    g1, g2 = Grid((-2, -2), (2, 2), 64), Grid((-2, -2), (2, 2), 128)
    e1 = lp_norm(meyers_serrin_step(bump_field(g1, 1.0), fam, 8) - bump_field(g1, 1.0), 2)
    e2 = lp_norm(meyers_serrin_step(bump_field(g2, 1.0), fam, 8) - bump_field(g2, 1.0), 2)
    assert e1 == pytest.approx(e2, rel=0.05)


def test_static_family_commutator_zero():
    g = Grid(*BOX, 32)
    fam = builtin_family("grushin", domain=BOX)
    u = bump_field(g)
    uh = meyers_serrin_step(u, fam, 4)
    assert np.array_equal(x_gradient(uh, fam.at(4)).comps, x_gradient(uh, fam.limit).comps)
    assert commutator_norm(u, fam, 4, 2.0) == 0.0


def test_affine_step_identity_and_support():
    g = Grid(*BOX, 64)
    fam = builtin_family("degenerate_2d", {"sigma_power": -0.5}, domain=BOX)
    u = bump_field(g, 0.6) + g.scalar(lambda x, y: 1 + 0.5 * x)
    phi = g.scalar(lambda x, y: 1 + 0.5 * x)
    h = 25  # sigma 0.2
    margin = 0.2 + 2 * g.max_spacing + 0.01
    assert np.array_equal(affine_approx_step(phi, phi, fam, h, margin).values, np.zeros(g.shape))
    v = affine_approx_step(u, phi, fam, h, margin)
    assert v.boundary_mode == ZERO_DIRICHLET
    collar = g.distance_to_boundary() < margin - 0.2
    assert np.all(v.values[collar] == 0.0)
    with pytest.raises(ResolutionError):
        affine_approx_step(u, phi, fam, h, 0.2)


def test_affine_step_converges():
    box = ((-2.0, -2.0), (2.0, 2.0))
    fam = builtin_family("degenerate_2d", {"sigma_power": -0.5}, domain=box)
    # u - phi is supported where the cutoff equals one, so v_h -> u - phi
    for res in (64, 128):
        g = Grid(*box, res)
        phi = g.scalar(lambda x, y: 0.3 * y)
        u = bump_field(g, 0.8) + phi
        errs = [lp_norm(affine_approx_step(u, phi, fam, h, 0.45) - (u - phi), 2) for h in (12, 16, 25)]
        assert all(b < a for a, b in zip(errs, errs[1:]))


def test_cutoff_shape():
    g = Grid(*BOX, 64)
    psi = cutoff(g, 0.2)
    d = g.distance_to_boundary()
    assert np.all(psi[d <= 0.2] == 0.0)
    assert np.all(psi[d >= 0.4] == 1.0)
    assert np.all((psi >= 0) & (psi <= 1))


@pytest.mark.parametrize("h", [2, 4, 8, 16])
def test_commutator_bounded_by_chain(h):
    g = Grid((-3.0, -3.0), (3.0, 3.0), 96)
    fam = builtin_family("degenerate_2d", domain=((-3, -3), (3, 3)))
    u = bump_field(g, 2.0)
    assert commutator_norm(u, fam, h, 2.0) <= commutator_bound(u, fam, h, 2.0) * (1 + 1e-12)


def _rate(fam, g, u, p, hs):
    s = np.array([modulus(fam, h, g) for h in hs])
    c = np.array([commutator_norm(u, fam, h, p) for h in hs])
    return np.polyfit(np.log(s), np.log(c), 1)[0]


@pytest.mark.parametrize("name", ["degenerate_2d", "grushin_lift"])
@pytest.mark.parametrize("p", [1.5, 2.0])
def test_commutator_rate(name, p):
    box = ((-4.0, -4.0), (4.0, 4.0))
    g = Grid(*box, 96)
    fam = builtin_family(name, domain=box)
    u = bump_field(g, 2.5)
    theory = (2 * (p - 1) + p) / p
    assert _rate(fam, g, u, p, [2, 4, 8, 16]) >= theory - 0.2


def test_commutator_fitted_constant():
    box = ((-4.0, -4.0), (4.0, 4.0))
    g = Grid(*box, 96)
    fam = builtin_family("degenerate_2d", domain=box)
    u = bump_field(g, 2.5)
    hs = [2, 4, 8, 16]
    s = np.array([modulus(fam, h, g) for h in hs])
    c = np.array([commutator_norm(u, fam, h, 2.0) for h in hs])
    K = np.max(c / s**2)
    assert np.all(c <= K * s**2 * (1 + 1e-12))
    assert K < 10.0


def test_recovery_gap_decreases():
    box = ((-4.0, -4.0), (4.0, 4.0))
    g = Grid(*box, 128)
    fam = builtin_family("grushin_lift", domain=box)
    u = bump_field(g, 3.0)
    target = lp_norm(x_gradient(u, fam.limit), 2) ** 2
    gaps = [abs(lp_norm(x_gradient(meyers_serrin_step(u, fam, h), fam.at(h)), 2) ** 2 - target)
            for h in (4, 16, 64, 256)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
