import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from implicit_sdf.geometry import Aabb, nearest_distances
from implicit_sdf.levelset import (
    GridField, GridSpec, Mesh, evaluate_grid, marching_cubes, marching_squares, read_contour_csv,
    read_obj, sample_mesh, sample_polyline, sdf_relative_error, write_contour_csv, write_contour_svg,
    write_obj,
)
from implicit_sdf.network import Network, NetworkSpec, geometric_init


def linear_net(w):
    w = np.asarray(w, dtype=np.float64)
    spec = NetworkSpec(w.size, (2,))
    return Network(spec, [np.vstack([w, -w]), np.array([[1.0, -1.0]])], [np.zeros(2), np.zeros(1)])


def square_grid(res, dim=2, half=1.0):
    return GridSpec(Aabb.cube(half, dim), res)


def sphere_field(res=64, radius=0.5):
    return GridField.from_function(square_grid(res, 3), lambda p: np.linalg.norm(p, axis=1) - radius)


def test_evaluate_grid_linear_values():
    field = evaluate_grid(linear_net([1.0, 0.0]), None, square_grid(3))
    assert np.allclose(field.values, [[-1, -1, -1], [0, 0, 0], [1, 1, 1]], atol=1e-15)


def test_evaluate_grid_two_nodes_are_corners():
    net = geometric_init(NetworkSpec.profile(3, 3, 16), 0.5, 0)
    field = evaluate_grid(net, None, square_grid(2, 3))
    corners = np.array(np.meshgrid([-1, 1], [-1, 1], [-1, 1], indexing="ij")).reshape(3, -1).T
    assert field.values.size == 8
    assert np.allclose(field.values.ravel(), net(corners), rtol=0, atol=1e-14)


def test_evaluate_grid_of_init_net_is_radial():
    net = geometric_init(NetworkSpec.profile(3, 4, 64), 0.5, 0)
    spec = square_grid(17, 3)
    field = evaluate_grid(net, None, spec)
    idx = np.array(np.unravel_index(np.argmin(field.values), field.values.shape))
    assert np.all(np.abs(idx - 8) <= 2)


def test_marching_squares_linear_field_is_a_vertical_line():
    field = GridField.from_function(square_grid(9), lambda p: p[:, 0])
    contour = marching_squares(field)
    assert len(contour.segments) == 8
    assert np.max(np.abs(contour.vertices[:, 0])) <= 1e-12
    assert len(contour.chains) == 1 and not contour.closed[0]


def test_marching_squares_circle():
    spec = square_grid(64)
    field = GridField.from_function(spec, lambda p: (p ** 2).sum(axis=1) - 0.25)
    contour = marching_squares(field)
    assert len(contour.loops()) == 1 and all(contour.closed)
    diag = float(np.linalg.norm(spec.cell_size))
    assert np.max(np.abs(np.linalg.norm(contour.vertices, axis=1) - 0.5)) < diag


def test_marching_squares_constant_field_is_empty():
    field = GridField.from_function(square_grid(8), lambda p: np.ones(len(p)))
    assert len(marching_squares(field).segments) == 0


def test_marching_squares_orientation_keeps_inside_on_the_left():
    field = GridField.from_function(square_grid(32), lambda p: np.linalg.norm(p, axis=1) - 0.5)
    seg = marching_squares(field).segment_points
    mid = seg.mean(axis=1)
    tangent = seg[:, 1] - seg[:, 0]
    # counter-clockwise around the inside: cross(mid, tangent) > 0
    assert np.all(mid[:, 0] * tangent[:, 1] - mid[:, 1] * tangent[:, 0] > 0)


def test_marching_cubes_plane():
    field = GridField.from_function(square_grid(9, 3), lambda p: p[:, 0])
    mesh = marching_cubes(field)
    assert len(mesh.triangles) > 0
    assert np.max(np.abs(mesh.vertices[:, 0])) <= 1e-12


def test_marching_cubes_sphere():
    field = sphere_field()
    mesh = marching_cubes(field)
    assert mesh.is_closed()
    assert mesh.euler_characteristic() == 2
    cell = float(field.spec.cell_size.max())
    assert np.max(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 0.5)) < 2 * cell


def test_marching_cubes_normals_point_outward():
    mesh = marching_cubes(sphere_field(24))
    tri = mesh.vertices[mesh.triangles]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    assert np.all(np.einsum("ij,ij->i", normal, tri.mean(axis=1)) > 0)


def test_marching_cubes_torus_genus_one():
    def torus(p):
        q = np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2) - 0.5
        return np.sqrt(q ** 2 + p[:, 2] ** 2) - 0.2

    mesh = marching_cubes(GridField.from_function(square_grid(48, 3), torus))
    assert mesh.is_closed() and mesh.euler_characteristic() == 0


def test_marching_cubes_constant_field_is_empty():
    field = GridField.from_function(square_grid(6, 3), lambda p: -np.ones(len(p)))
    assert len(marching_cubes(field).triangles) == 0


def test_marching_cubes_refinement_shrinks_error():
    errs = []
    for res in (16, 32, 64):
        mesh = marching_cubes(sphere_field(res))
        errs.append(np.max(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 0.5)))
    assert errs[0] > errs[1] > errs[2]


def test_sign_flip_keeps_the_surface():
    field = sphere_field(20)
    a = marching_cubes(field)
    b = marching_cubes(GridField(field.spec, -field.values))
    assert np.allclose(np.sort(a.vertices, axis=0), np.sort(b.vertices, axis=0), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_marching_cubes_random_fields_are_closed(seed):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((6, 6, 6))
    values[[0, -1], :, :] = values[:, [0, -1], :] = 1.0
    values[:, :, [0, -1]] = 1.0
    mesh = marching_cubes(GridField(square_grid(6, 3), values))
    if len(mesh.triangles):
        assert mesh.is_closed()


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_marching_squares_random_fields_close_up(seed):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((8, 8))
    values[[0, -1], :] = 1.0
    values[:, [0, -1]] = 1.0
    contour = marching_squares(GridField(square_grid(8), values))
    assert all(contour.closed)
    counts = np.bincount(contour.segments.ravel(), minlength=len(contour.vertices))
    assert np.all(counts[np.unique(contour.segments)] == 2)


def test_obj_round_trip(tmp_path):
    mesh = marching_cubes(sphere_field(12))
    write_obj(tmp_path / "s.obj", mesh)
    back = read_obj(tmp_path / "s.obj")
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)


def test_contour_csv_round_trip_and_svg(tmp_path):
    field = GridField.from_function(square_grid(16), lambda p: np.linalg.norm(p, axis=1) - 0.5)
    contour = marching_squares(field)
    write_contour_csv(tmp_path / "c.csv", contour)
    assert np.array_equal(read_contour_csv(tmp_path / "c.csv"), contour.segment_points)
    write_contour_svg(tmp_path / "c.svg", contour, field.spec.box, np.zeros((1, 2)))
    text = (tmp_path / "c.svg").read_text()
    assert text.startswith("<svg") and "<polygon" in text and "<circle" in text


def test_surface_samples_lie_on_the_mesh():
    mesh = marching_cubes(sphere_field(32))
    pts = sample_mesh(mesh, 500, seed=1)
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 0.5)) < 0.02
    contour = marching_squares(GridField.from_function(square_grid(32), lambda p: np.linalg.norm(p, axis=1) - 0.5))
    pts2 = sample_polyline(contour, 300, seed=1)
    assert np.max(nearest_distances(pts2, contour.vertices)) < 0.05


def test_sdf_relative_error_exact_and_scaled():
    w = np.array([0.0, 0.0, 1.0])
    box = Aabb.cube(1.0, 3)

    def gt(p):
        return p @ w

    mean, std = sdf_relative_error(linear_net(w), gt, box, n=5000)
    assert mean < 1e-15 and std < 1e-15
    mean, std = sdf_relative_error(linear_net(1.1 * w), gt, box, n=5000)
    assert abs(mean - 0.1) < 1e-12 and std < 1e-12


def test_sdf_relative_error_rejects_tight_box():
    w = np.array([0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        sdf_relative_error(linear_net(w), lambda p: p @ w, Aabb.cube(0.12, 3), n=1000)


def test_mesh_rejects_bad_indices():
    with pytest.raises(ValueError):
        Mesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))
