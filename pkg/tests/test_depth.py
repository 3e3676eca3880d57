import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import unit_cube
from sphereproj.depth import (
    GridConfig, LatStripConfig, SphericalDepthMap, VertStripConfig, cast_inward, dir_to_sph, grid_angles,
    grid_direction, grid_directions, interpolate, latitude_strip, mean_pool, project_depth, sph_to_dir,
    vertical_base_angles, vertical_strips,
)
from sphereproj.mesh import SHAPE_KINDS, ProjectionSphere, TriangleMesh, generate_shape, measure, rotate_about_up


def const_map(c, grid=GridConfig()):
    return SphericalDepthMap(grid, np.full((grid.m, grid.n), c), ProjectionSphere(np.zeros(3), 10.0))


def random_map(rng, grid=GridConfig()):
    return SphericalDepthMap(grid, rng.uniform(0, 20, (grid.m, grid.n)), ProjectionSphere(np.zeros(3), 10.0))


@pytest.fixture(scope="module")
def sphere_map():
    from sphereproj.mesh import icosphere
    v, t = icosphere(4)
    mesh = TriangleMesh(v, t)
    return project_depth(mesh), mesh


# --- grid ----------------------------------------------------------------------

def test_equator_rows():
    theta, _ = grid_angles(GridConfig())
    assert theta[44] == pytest.approx(89.0, abs=1e-12)
    assert theta[45] == pytest.approx(91.0, abs=1e-12)
    assert grid_direction(GridConfig(), 0, 0)[2] > 0.999  # row 0 next to the north pole


def test_column_zero_in_xz_half_plane():
    d = grid_direction(GridConfig(), np.arange(90), 0)
    assert np.all(d[:, 1] == 0) and np.all(d[:, 0] >= 0)


def test_unit_norm():
    d = grid_directions(GridConfig())
    assert np.abs(np.linalg.norm(d, axis=-1) - 1).max() <= 1e-15


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridConfig(1, 180)
    with pytest.raises(IndexError):
        grid_direction(GridConfig(), 90, 0)


@given(st.floats(0.01, 179.99), st.floats(0, 359.99))
def test_sph_dir_roundtrip(theta, phi):
    t, p = dir_to_sph(sph_to_dir(theta, phi))
    assert t == pytest.approx(theta, abs=1e-9)
    assert min(abs(p - phi), 360 - abs(p - phi)) < 1e-9


# --- projection ----------------------------------------------------------------

def test_icosphere_depth(sphere_map):
    dmap, _ = sphere_map
    r = dmap.sphere.radius
    assert np.abs(dmap.values - (r - 1)).max() <= 0.005


def test_misses_are_zero():
    # a small triangle off the sphere center: only a few inward rays meet it
    tri = TriangleMesh([[0.5, -0.05, -0.05], [0.5, 0.05, -0.05], [0.5, 0, 0.05]], [[0, 1, 2]])
    sphere = ProjectionSphere(np.zeros(3), 6.0)
    v = project_depth(tri, GridConfig(), sphere).values
    hits = v > 0
    assert 0 < hits.sum() < 50
    assert np.all(v[~hits] == 0.0)
    assert np.all(v[hits] > 5.0)


def test_cube_face_hit():
    cube = unit_cube()
    cube = TriangleMesh(cube.vertices - 0.5, cube.triangles)
    sphere = measure(cube).sphere
    t = cast_inward(cube, np.array([[1.0, 0, 0]]), sphere)[0]
    assert abs(t - (sphere.radius - 0.5)) <= 1e-9


@pytest.mark.parametrize("kind", SHAPE_KINDS)
def test_depth_bound(kind):
    mesh = generate_shape(kind, None, 3)
    dmap = project_depth(mesh)
    assert dmap.values.min() >= 0 and dmap.values.max() <= 2 * dmap.sphere.radius


@given(st.sampled_from(SHAPE_KINDS), st.integers(0, 2**32), st.integers(1, 179))
@settings(max_examples=12)
def test_rotation_shift_equivariance(kind, seed, t):
    # turning by t columns worth of azimuth shifts the map by t columns
    g = GridConfig()
    mesh = generate_shape(kind, None, seed)
    sphere = measure(mesh).sphere
    a = project_depth(mesh, g, sphere).values
    b = project_depth(rotate_about_up(mesh, t * g.d_phi), g, sphere).values
    bad = np.abs(np.roll(a, t, axis=1) - b) > 1e-6 * sphere.radius
    assert bad.mean() <= 0.01, f"{bad.sum()} grazing cells"


# --- interpolation -------------------------------------------------------------

def test_interpolation_exact_at_nodes(rng):
    dmap = random_map(rng)
    theta, phi = grid_angles(dmap.grid)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    assert np.array_equal(interpolate(dmap, tt, pp), dmap.values)


def test_bilinear_midpoint():
    g = GridConfig(4, 8)
    v = np.zeros((4, 8))
    v[1, 2], v[1, 3], v[2, 2], v[2, 3] = 0, 1, 2, 3
    dmap = SphericalDepthMap(g, v, ProjectionSphere(np.zeros(3), 1.0))
    theta, phi = grid_angles(g)
    assert interpolate(dmap, (theta[1] + theta[2]) / 2, (phi[2] + phi[3]) / 2) == pytest.approx(1.5, abs=1e-15)


def test_azimuth_wraps():
    g = GridConfig()
    v = np.zeros((90, 180))
    v[:, 179], v[:, 0] = 2.0, 4.0
    dmap = SphericalDepthMap(g, v, ProjectionSphere(np.zeros(3), 1.0))
    assert interpolate(dmap, 91.0, 359.5) == pytest.approx(3.5, abs=1e-12)


def test_colatitude_clamps():
    g = GridConfig()
    v = np.tile(np.arange(90.0)[:, None], (1, 180))
    dmap = SphericalDepthMap(g, v, ProjectionSphere(np.zeros(3), 1.0))
    assert interpolate(dmap, 0.0, 10.0) == 0.0
    assert interpolate(dmap, 180.0, 10.0) == 89.0


@given(st.integers(0, 2**32), st.floats(0, 180), st.floats(0, 359.999))
def test_interpolation_within_corner_range(seed, theta, phi):
    dmap = random_map(np.random.default_rng(seed), GridConfig(10, 20))
    g = dmap.grid
    r = min(max(theta / g.d_theta - 0.5, 0), g.m - 1)
    c = phi / g.d_phi
    i0, j0 = min(int(r), g.m - 2), int(c) % g.n
    corners = dmap.values[[i0, i0, i0 + 1, i0 + 1], [j0, (j0 + 1) % g.n, j0, (j0 + 1) % g.n]]
    d = interpolate(dmap, theta, phi)
    assert corners.min() - 1e-12 <= d <= corners.max() + 1e-12


@given(st.integers(0, 2**32), st.integers(0, 9), st.integers(0, 19), st.floats(0, 1), st.floats(0, 1))
def test_linear_along_grid_lines(seed, i, j, s, w):
    dmap = random_map(np.random.default_rng(seed), GridConfig(10, 20))
    g = dmap.grid
    theta, phi = grid_angles(g)
    # along a row: linear in azimuth between neighbouring nodes
    a, b = dmap.values[i, j], dmap.values[i, (j + 1) % g.n]
    assert interpolate(dmap, theta[i], phi[j] + s * g.d_phi) == pytest.approx((1 - s) * a + s * b, abs=1e-12)
    if i < g.m - 1:
        a, b = dmap.values[i, j], dmap.values[i + 1, j]
        assert interpolate(dmap, theta[i] + w * g.d_theta, phi[j]) == pytest.approx((1 - w) * a + w * b, abs=1e-12)


# --- latitude strip ------------------------------------------------------------

def test_latitude_strip_layout():
    s = latitude_strip(const_map(1.0))
    assert s.values.shape == (240, 360)
    assert s.theta[0, 0] == pytest.approx(30.25, abs=1e-12)
    assert np.allclose(np.diff(s.phi[0]), 1.0, atol=1e-12)


def test_constant_map_strips_constant():
    dmap = const_map(3.25)
    assert np.all(latitude_strip(dmap).values == 3.25)
    assert all(np.all(s.values == 3.25) for s in vertical_strips(dmap))


def test_latitude_strip_of_sphere(sphere_map):
    dmap, mesh = sphere_map
    r = dmap.sphere.radius
    assert np.abs(latitude_strip(dmap).values - (r - 1)).max() <= 0.005
    direct = latitude_strip(dmap, LatStripConfig(24, 36), mesh=mesh).values
    assert np.abs(direct - (r - 1)).max() <= 0.005


@given(st.integers(0, 2**32), st.integers(-200, 200), st.sampled_from([180, 360, 540]))
@settings(max_examples=30)
def test_latitude_strip_commutes_with_shift(seed, t, n_h):
    dmap = random_map(np.random.default_rng(seed))
    cfg = LatStripConfig(60, n_h)
    shifted = SphericalDepthMap(dmap.grid, np.roll(dmap.values, t, axis=1), dmap.sphere)
    k = n_h // dmap.grid.n
    assert np.array_equal(latitude_strip(shifted, cfg).values, np.roll(latitude_strip(dmap, cfg).values, t * k, axis=1))


def test_band_validation():
    with pytest.raises(ValueError):
        LatStripConfig(band=(0.0, 150.0))


def test_elevation_band_configurable():
    s = latitude_strip(const_map(1.0), LatStripConfig(40, 360, (60.0, 120.0)))
    assert s.theta[0, 0] == pytest.approx(60.75) and s.theta[-1, 0] == pytest.approx(119.25)


# --- vertical strips -----------------------------------------------------------

def test_vertical_strip_center_sample():
    theta, phi = vertical_base_angles(VertStripConfig(n_v=3, m_v=3, l_v=12, half_width=15))
    assert theta[1, 1] == pytest.approx(90.0, abs=1e-12)
    assert phi[1, 1] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(sph_to_dir(theta[1, 1], phi[1, 1]), [1, 0, 0], atol=1e-15)


def test_vertical_strip_shapes():
    strips = vertical_strips(const_map(1.0))
    assert len(strips) == 12 and all(s.values.shape == (180, 60) for s in strips)
    assert [s.index for s in strips] == list(range(12))


def test_strips_constant_width():
    # geodesic distance from the meridian plane is the same at every row
    theta, phi = vertical_base_angles(VertStripConfig())
    d = sph_to_dir(theta, phi)
    assert np.allclose(np.degrees(np.arcsin(d[..., 1]))[0], np.degrees(np.arcsin(d[..., 1]))[90], atol=1e-9)


@pytest.mark.parametrize("k", [1, 4, 7])
def test_strip_k_matches_rotated_strip_0(k):
    mesh = generate_shape("l_bracket", None, 11)
    sphere = measure(mesh).sphere
    cfg = VertStripConfig()
    a = vertical_strips(project_depth(mesh, sphere=sphere), cfg)[k].values
    rot = rotate_about_up(mesh, -k * cfg.spacing)
    b = vertical_strips(project_depth(rot, sphere=sphere), cfg)[0].values
    assert np.mean(np.abs(a - b) <= 1e-6 * sphere.radius) >= 0.99


def test_vertical_strip_ring_equivariance():
    mesh = generate_shape("pyramid", None, 4)
    sphere = measure(mesh).sphere
    a = vertical_strips(project_depth(mesh, sphere=sphere))
    b = vertical_strips(project_depth(rotate_about_up(mesh, 30.0), sphere=sphere))
    for k in range(12):
        assert np.mean(np.abs(a[k].values - b[(k + 1) % 12].values) <= 1e-6 * sphere.radius) >= 0.99


def test_direct_vertical_strips_close_to_interpolated(sphere_map):
    dmap, mesh = sphere_map
    cfg = VertStripConfig(30, 10, 12)
    direct = vertical_strips(dmap, cfg, mesh=mesh)
    interp = vertical_strips(dmap, cfg)
    assert max(np.abs(d.values - i.values).max() for d, i in zip(direct, interp)) <= 0.005


def test_mean_pool():
    x = np.arange(16.0).reshape(4, 4)
    assert np.array_equal(mean_pool(x, 2), [[2.5, 4.5], [10.5, 12.5]])
