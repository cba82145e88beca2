import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import crandn
from robust_precoding.embed import embed_row, unembed_row
from robust_precoding.metrics import Design, mse
from robust_precoding.uncertainty import (Ellipsoid, OracleBudget, RegionError, UncertaintyRegion,
                                          make_ellipsoid, make_interval, make_spherical, scaled,
                                          worst_case_channel, worst_case_mse)


def test_sphere_zero_radius_is_point(rng):
    reg = make_spherical([1.0, 0.0], 0.0)
    assert reg.is_point
    assert reg.contains([1.0, 0.0])
    assert reg.contains([1.0, 1e-9])  # within the 1e-12 slack on w^T Q w
    assert not reg.contains([1.0, 1e-5])
    assert np.array_equal(reg.sample(5, rng), np.tile([1.0, 0.0], (5, 1)))


def test_sphere_boundary_arithmetic():
    reg = make_spherical([1.0, 0.0], 0.05)
    assert reg.contains([1.05, 0.0])
    assert not reg.contains([1.06, 0.0])


def test_sphere_contains_edges():
    reg = make_spherical(np.zeros(4), 1.0)
    e = np.array([0.6, 0.0, 0.8, 0.0])
    assert reg.contains(np.zeros(4))
    assert reg.contains(e)
    assert not reg.contains(e * (1 + 1e-6))


def test_sphere_structure():
    reg = make_spherical(np.zeros(4), 0.3)
    (s,) = reg.sets
    assert np.array_equal(s.basis, np.eye(4)) and np.array_equal(s.shape, np.eye(4))
    assert s.radius == 0.3


def test_interval_box_membership():
    reg = make_interval([0.0, 0.0], [1.0, 2.0])
    assert len(reg) == 2
    assert reg.contains([1.0, 2.0])
    assert not reg.contains([1.01, 0.0])
    assert not reg.contains([0.0, -2.01])


def test_interval_zero_halfwidths_is_point():
    reg = make_interval([0.5, -0.5, 1.0, 2.0], np.zeros(4))
    assert reg.is_point
    assert reg.contains([0.5, -0.5, 1.0, 2.0])


def test_interval_matches_coordinatewise(rng):
    c = rng.standard_normal(6)
    hw = rng.uniform(0.0, 1.0, 6)
    hw[2] = 0.0
    reg = make_interval(c, hw)
    pts = c + rng.uniform(-1.2, 1.2, (10_000, 6)) * np.where(hw > 0, hw, 0.0)
    pts[::7, 2] += 1e-3
    inside = np.all(np.abs(pts - c) <= hw, axis=1)
    assert np.array_equal(reg.contains(pts), inside)


def test_offsets_outside_basis_not_contained(rng):
    reg = make_ellipsoid(np.zeros(2), [[1.0, 0.0]], [[1.0]], 1.0)
    assert reg.geometry.dim == 1
    assert reg.contains([0.5, 0.0])
    assert not reg.contains([0.5, 1e-3])
    assert np.all(reg.sample(100, rng)[:, 1] == 0.0)


def test_singular_shape_unbounded_rejected():
    with pytest.raises(RegionError):
        make_ellipsoid(np.zeros(2), np.eye(2), np.diag([1.0, 0.0]), 1.0)


@pytest.mark.parametrize("kw", [
    dict(center=[1.0], basis=[[1.0]], shape=[[1.0]], radius=1.0),
    dict(center=[0.0, 0.0], basis=np.eye(2), shape=-np.eye(2), radius=1.0),
    dict(center=[0.0, 0.0], basis=np.eye(2), shape=[[1.0, 0.5], [0.0, 1.0]], radius=1.0),
    dict(center=[0.0, 0.0], basis=[[1.0, 0.0], [2.0, 0.0]], shape=np.eye(2), radius=1.0),
    dict(center=[0.0, 0.0], basis=np.eye(2), shape=np.eye(2), radius=-1.0),
])
def test_invalid_ellipsoids(kw):
    with pytest.raises(RegionError):
        Ellipsoid(**kw)


def test_members_share_center():
    a = make_spherical([0.0, 0.0], 1.0).sets[0]
    b = make_spherical([0.0, 1.0], 1.0).sets[0]
    with pytest.raises(RegionError):
        UncertaintyRegion((a, b))


def test_scaled_region():
    reg = make_interval(np.zeros(2), [0.1, 0.2])
    big = scaled(reg, 0.4)
    assert big.contains([0.2, 0.4]) and not big.contains([0.21, 0.0])


# -- sampling ----------------------------------------------------------------------

def random_region(rng, kind, nt=2):
    c = rng.standard_normal(2 * nt)
    if kind == "sphere":
        return make_spherical(c, rng.uniform(0.05, 1.0))
    if kind == "interval":
        return make_interval(c, rng.uniform(0.05, 1.0, 2 * nt))
    A = rng.standard_normal((2 * nt, 2 * nt))
    Q = A @ A.T + 0.1 * np.eye(2 * nt)
    basis = np.linalg.qr(rng.standard_normal((2 * nt, 2 * nt)))[0][: 2 * nt - 1]
    Q = Q[: 2 * nt - 1, : 2 * nt - 1]
    return make_ellipsoid(c, basis, Q, rng.uniform(0.1, 1.0))


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["sphere", "interval", "ellipsoid"]),
       st.floats(0, 1))
def test_samples_are_contained(seed, kind, frac):
    rng = np.random.default_rng(seed)
    reg = random_region(rng, kind)
    pts = reg.sample(200, rng, frac)
    assert np.all(reg.contains(pts))


def test_boundary_samples_reach_unit_sphere(rng):
    reg = make_spherical(np.zeros(4), 1.0)
    pts = reg.sample(10_000, rng, 0.9)
    norms = np.linalg.norm(pts, axis=1)
    assert abs(norms.max() - 1.0) <= 1e-3
    assert np.mean(np.isclose(norms, 1.0, atol=1e-12)) == pytest.approx(0.9, abs=1e-3)


def test_sample_argument_checks(rng):
    reg = make_spherical(np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        reg.sample(0, rng)
    with pytest.raises(ValueError):
        reg.sample(5, rng, 1.5)


# -- worst-case oracle ----------------------------------------------------------------

def scalar_design():
    return Design([[1.0]], [[0.0]], [1.0])


def test_oracle_zero_radius_equals_center(rng):
    d = Design(crandn(rng, 3, 2), [[0, 0], [0.3 + 0.1j, 0]], [0.7, 1.1])
    h = crandn(rng, 3)
    reg = make_spherical(embed_row(h), 0.0)
    for k in range(2):
        assert worst_case_mse(d, k, reg, 0.4, rng) == mse(d, k, h, 0.4)


@pytest.mark.parametrize("delta", [0.01, 0.3, 1.0])
def test_oracle_scalar_boundary(delta, rng):
    reg = make_spherical([1.0, 0.0], delta)
    assert worst_case_mse(scalar_design(), 0, reg, 0.0, rng) == pytest.approx(delta**2, rel=1e-9)


def grid_max(design, k, center, sigma, inside, lim, n=1000):
    # dense 10^6-point grid over the bounding box, restricted to the region
    xs = np.linspace(-lim, lim, n)
    X, Y = np.meshgrid(xs, xs)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[inside(pts)]
    h = (center[0] + pts[:, 0]) + 1j * (center[1] + pts[:, 1])
    g, P, B = design.g[k], design.P, design.B
    row = g * h[:, None] * P[0][None, :] - B[k][None, :]
    row[:, k] -= 1
    vals = np.sum(np.abs(row) ** 2, axis=1) + (g * sigma) ** 2
    return vals.max()


@pytest.mark.parametrize("shape_kind", ["sphere", "ellipse", "box"])
def test_oracle_matches_dense_grid(shape_kind, rng):
    d = Design([[0.8 - 0.3j, 0.4 + 0.9j]], [[0, 0], [0.2 - 0.5j, 0]], [0.9, 0.6])
    c = np.array([0.7, -0.4])
    if shape_kind == "sphere":
        reg = make_spherical(c, 0.5)
        inside = lambda p: np.sum(p**2, axis=1) <= 0.25
    elif shape_kind == "ellipse":
        Q = np.array([[2.0, 0.6], [0.6, 0.5]])
        reg = make_ellipsoid(c, np.eye(2), Q, 0.4)
        inside = lambda p: np.einsum("ni,ij,nj->n", p, Q, p) <= 0.16
    else:
        reg = make_interval(c, [0.3, 0.6])
        inside = lambda p: (np.abs(p[:, 0]) <= 0.3) & (np.abs(p[:, 1]) <= 0.6)
    for k in range(2):
        ref = grid_max(d, k, c, 0.3, inside, 1.0)
        got = worst_case_mse(d, k, reg, 0.3, rng)
        assert got >= ref * (1 - 1e-3)
        assert got <= ref * (1 + 1e-3)


def test_worst_channel_is_admissible(rng):
    d = Design(crandn(rng, 3, 3), np.tril(crandn(rng, 3, 3), -1), [0.5, 0.6, 0.7])
    reg = make_interval(embed_row(crandn(rng, 3)), rng.uniform(0.05, 0.2, 6))
    val, h = worst_case_channel(d, 1, reg, 0.2, rng)
    assert reg.contains(embed_row(h))
    assert mse(d, 1, h, 0.2) == val


@given(st.integers(0, 2 ** 32 - 1))
def test_oracle_invariants(seed):
    rng = np.random.default_rng(seed)
    d = Design(crandn(rng, 2, 2), np.tril(crandn(rng, 2, 2), -1), rng.uniform(0.2, 1.0, 2))
    h = crandn(rng, 2)
    c = embed_row(h)
    budget = OracleBudget(n_samples=2000)
    prev = mse(d, 0, h, 0.3)
    for delta in (0.0, 0.05, 0.1, 0.2, 0.4):
        reg = make_spherical(c, delta)
        r = np.random.default_rng(seed)
        val = worst_case_mse(d, 0, reg, 0.3, r, budget)
        samples = reg.sample(budget.n_samples, np.random.default_rng(seed), budget.boundary_fraction)
        best_sample = max(mse(d, 0, unembed_row(s), 0.3) for s in samples)
        assert val >= mse(d, 0, h, 0.3)
        assert val >= best_sample - 1e-12
        assert val >= prev - 1e-9 * max(1.0, prev)
        prev = val
