import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammalab.anisotropy import builtin_family, constant_field, euclidean, grushin
from gammalab.errors import ContractError
from gammalab.grid import (
    FREE,
    ZERO_DIRICHLET,
    Grid,
    ScalarField,
    VecField,
    gradient,
    inner,
    lp_norm,
    read_binary,
    write_binary,
    write_csv,
    x_gradient,
)

PI = np.pi
SQUARE = Grid((-PI, -PI), (PI, PI), 256)


def naive_lp(values, grid, p):
    """Reference quadrature by explicit node loop (cell rule: indices < res)."""
    total = 0.0
    vol = 1.0
    for s in grid.spacing:
        vol *= s
    for idx in itertools.product(*(range(r) for r in grid.res)):
        v = values[idx]
        mag = np.sqrt(np.sum(np.asarray(v) ** 2))
        total += mag**p * vol
    return total ** (1.0 / p)


def test_grid_validation():
    with pytest.raises(ContractError):
        Grid((0.0,), (1.0,), 3)
    with pytest.raises(ContractError):
        Grid((0.0, 0.0), (1.0, 0.0), 8)
    with pytest.raises(ContractError):
        Grid((0, 0, 0, 0), (1, 1, 1, 1), 4)


def test_node_coordinates_bit_exact():
    g = Grid((-1.0, 0.5), (2.0, 1.5), (6, 10))
    for i in range(2):
        expected = np.array([g.lo[i] + k * g.spacing[i] for k in range(g.res[i] + 1)])
        assert np.array_equal(g.axis(i), expected)
    assert g.shape == (7, 11)


def test_constant_gradient_zero(unit2):
    u = unit2.scalar(lambda x, y: 3.0 + 0 * x)
    assert np.array_equal(gradient(u).comps, np.zeros(unit2.shape + (2,)))


def test_linear_gradient_exact(unit2):
    u = unit2.scalar(lambda x, y: x)
    d = gradient(u).comps[1:-1, 1:-1]
    assert np.allclose(d[..., 0], 1.0, atol=1e-12)
    assert np.allclose(d[..., 1], 0.0, atol=1e-12)


def test_zero_dirichlet_ghost():
    g = Grid((0.0,), (1.0,), 8)
    u = ScalarField(g, np.ones(g.shape), ZERO_DIRICHLET)
    d = gradient(u).comps[..., 0]
    assert d[-1] == pytest.approx(-8.0)
    assert np.all(d[:-1] == 0)
    assert gradient(u.as_mode(FREE)).comps[-1, 0] == 0.0


def test_gradient_first_order_richardson():
    errs = []
    for res in (64, 128):
        g = Grid((0.0,), (1.0,), res)
        u = g.scalar(lambda x: np.sin(PI * x))
        d = gradient(u).comps[:-1, 0]
        x = g.axis(0)[:-1]
        errs.append(np.max(np.abs(d - PI * np.cos(PI * x))))
    # forward differences are first order at nodes: halving dx halves the error
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)


def test_x_gradient_zero_matrix(unit2, rng):
    u = unit2.scalar(rng.standard_normal(unit2.shape))
    assert np.array_equal(x_gradient(u, constant_field(np.zeros((3, 2)))).comps, np.zeros(unit2.shape + (3,)))


def test_x_gradient_grushin(unit2):
    u = unit2.scalar(lambda x, y: y)
    xu = x_gradient(u, grushin()).comps[1:-1, 1:-1]
    assert np.allclose(xu[..., 0], 0.0, atol=1e-12)
    assert np.allclose(xu[..., 1], unit2.coords[0][1:-1, 1:-1], atol=1e-12)


def test_x_gradient_euclidean_is_gradient(unit2, rng):
    u = unit2.scalar(rng.standard_normal(unit2.shape))
    assert np.array_equal(x_gradient(u, euclidean(2)).comps, gradient(u).comps)


def test_x_gradient_dimension_mismatch(unit2):
    with pytest.raises(ContractError):
        x_gradient(unit2.zeros(), euclidean(3))


def test_lp_norm_unit_constant(unit2):
    for p in (1.5, 2.0, 3.0):
        assert lp_norm(unit2.scalar(lambda x, y: 1.0 + 0 * x), p) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("h", range(1, 9))
def test_noncompact_sequence_norm(h):
    u = SQUARE.scalar(lambda x, y: np.sin(h * y))
    assert lp_norm(u, 2) == pytest.approx(PI * np.sqrt(2), rel=0.01)


def test_lp_norm_matches_naive_loop(rng):
    g = Grid((0.0, -1.0), (1.0, 2.0), (12, 9))
    vals = rng.standard_normal(g.shape)
    for p in (1.5, 2.0, 3.0):
        assert lp_norm(g.scalar(vals), p) == pytest.approx(naive_lp(vals, g, p), rel=1e-13)
    vec = rng.standard_normal(g.shape + (3,))
    assert lp_norm(VecField(g, vec), 2.0) == pytest.approx(naive_lp(vec, g, 2.0), rel=1e-13)


def test_inner_basics(unit2, rng):
    u = unit2.scalar(rng.standard_normal(unit2.shape))
    assert inner(u, unit2.zeros()) == 0.0
    assert inner(u, u) == pytest.approx(lp_norm(u, 2) ** 2, rel=1e-13)


@pytest.mark.parametrize("h", [1, 2, 5, 8])
def test_inner_sin_h_with_one_vanishes(h):
    u = SQUARE.scalar(lambda x, y: np.sin(h * y))
    assert abs(inner(u, SQUARE.scalar(lambda x, y: 1.0 + 0 * x))) <= 1e-10


def test_inner_grid_mismatch(unit2):
    with pytest.raises(ContractError):
        inner(unit2.zeros(), Grid((0.0, 0.0), (1.0, 1.0), 16).zeros())


def test_fields_are_immutable(unit2):
    u = unit2.zeros()
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0


def test_s1_block_structure(unit2, rng):
    fam = builtin_family("grushin_lift", domain=((0, 0), (1, 1)))
    u = unit2.scalar(rng.standard_normal(unit2.shape))
    lim = x_gradient(u, fam.limit).comps
    for h in (1, 4, 9):
        xh = x_gradient(u, fam.at(h)).comps
        assert np.max(np.abs(xh[..., :2] - lim[..., :2])) <= 1e-12


def test_binary_round_trip(tmp_path, rng):
    g = Grid((0.0, -1.0, 2.0), (1.0, 1.0, 3.0), (4, 5, 6))
    u = g.scalar(rng.standard_normal(g.shape))
    write_binary(tmp_path / "u.glf", u)
    v = read_binary(tmp_path / "u.glf")
    assert v.grid == g and np.array_equal(v.values, u.values)
    w = VecField(g, rng.standard_normal(g.shape + (2,)))
    write_binary(tmp_path / "w.glf", w)
    assert np.array_equal(read_binary(tmp_path / "w.glf").comps, w.comps)


def test_binary_rejects_garbage(tmp_path):
    p = tmp_path / "bad.glf"
    p.write_bytes(b"nope" + bytes(40))
    with pytest.raises(ContractError):
        read_binary(p)


def test_csv_dump(tmp_path, unit2):
    write_csv(tmp_path / "u.csv", unit2.scalar(lambda x, y: x + y))
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0].split(",") == ["x1", "x2", "value"]
    assert len(lines) == 1 + unit2.size


# properties

_vals = st.integers(0, 2**31 - 1)


@settings(max_examples=40, deadline=None)
@given(seed=_vals, c=st.floats(-1e3, 1e3, allow_nan=False), p=st.sampled_from([1.5, 2.0, 3.0]))
def test_homogeneity(seed, c, p):
    g = Grid((0.0, 0.0), (1.0, 1.0), 8)
    u = g.scalar(np.random.default_rng(seed).standard_normal(g.shape))
    assert abs(lp_norm(c * u, p) - abs(c) * lp_norm(u, p)) <= 1e-12 * max(1.0, abs(c) * lp_norm(u, p))


@settings(max_examples=40, deadline=None)
@given(seed=_vals, p=st.sampled_from([1.5, 2.0, 3.0]))
def test_triangle(seed, p):
    g = Grid((0.0, 0.0), (1.0, 1.0), 8)
    r = np.random.default_rng(seed)
    u, v = g.scalar(r.standard_normal(g.shape)), g.scalar(r.standard_normal(g.shape))
    assert lp_norm(u + v, p) <= lp_norm(u, p) + lp_norm(v, p) + 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=_vals, a=st.floats(-10, 10), b=st.floats(-10, 10))
def test_x_gradient_linear(seed, a, b):
    g = Grid((0.0, 0.0), (1.0, 1.0), 8)
    r = np.random.default_rng(seed)
    u, v = g.scalar(r.standard_normal(g.shape)), g.scalar(r.standard_normal(g.shape))
    C = grushin()
    lhs = x_gradient(a * u + b * v, C).comps
    rhs = a * x_gradient(u, C).comps + b * x_gradient(v, C).comps
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-100, 100, allow_nan=False))
def test_constants_have_zero_x_gradient(c):
    g = Grid((0.0, 0.0), (1.0, 1.0), 8)
    u = g.scalar(lambda x, y: c + 0 * x)
    assert np.array_equal(x_gradient(u, grushin()).comps[1:-1, 1:-1], np.zeros((7, 7, 2)))
