import numpy as np
import pytest

from gpsg_mapping import geometry, meshio
from gpsg_mapping.geometry import (MeshError, Ray, RigidPose, SampleSet,
                                   SurfaceSample, TriangleMesh)

def test_cube_topology(unit_cube):
    assert len(unit_cube.vertices) == 8
    assert len(unit_cube.faces) == 12
    assert unit_cube.is_watertight
    assert unit_cube.euler_characteristic == 2

def test_icosphere_is_closed():
    sphere = meshio.icosphere(1.0, subdivisions=3)
    assert len(sphere.vertices) == 642
    assert sphere.euler_characteristic == 2
    assert sphere.is_watertight

def test_mesh_rejects_bad_indices():
    with pytest.raises(ValueError):
        TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])
    with pytest.raises(ValueError):
        TriangleMesh(np.eye(3), [[0, 1, 2]], attribute=[1.0, 2.0])

def test_mesh_arrays_are_read_only(unit_cube):
    with pytest.raises(ValueError):
        unit_cube.vertices[0, 0] = 3.0

def test_keep_vertices_compacts(unit_cube):
    keep = np.ones(8, dtype=bool)
    keep[0] = False
    reduced = unit_cube.keep_vertices(keep)
    assert len(reduced.vertices) == 7
    assert reduced.faces.max() < 7
    assert len(reduced.faces) == 12 - np.any(unit_cube.faces == 0, axis=1).sum()

def test_pose_checks_orthonormality():
    with pytest.raises(ValueError):
        RigidPose(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        RigidPose(np.eye(3) * 1.01)

def test_pose_round_trips():
    pose = RigidPose.from_z_axis([0.1, 0.2, 0.3], [1.0, 2.0, -0.5], roll=0.7)
    points = np.random.default_rng(1).normal(size=(10, 3))
    back = pose.inverse().transform_points(pose.transform_points(points))
    assert np.allclose(back, points, atol=1e-12)
    again = RigidPose.from_row_major(pose.row_major())
    assert np.array_equal(again.matrix, pose.matrix)
    assert np.allclose(pose.z_axis, np.array([1.0, 2.0, -0.5]) /
                       np.linalg.norm([1.0, 2.0, -0.5]))

def test_from_z_axis_near_x():
    pose = RigidPose.from_z_axis(np.zeros(3), [1.0, 0.0, 0.0])
    assert np.allclose(pose.z_axis, [1, 0, 0])
    assert np.isclose(np.linalg.det(pose.rotation), 1.0)

def test_perturbed_pose_stays_valid():
    pose = RigidPose.from_z_axis(np.zeros(3), [0, 0, 1.0])
    noisy = pose.perturbed(np.random.default_rng(3), 1e-3, 1e-2)
    assert not np.allclose(noisy.translation, pose.translation)
    assert np.isclose(np.linalg.det(noisy.rotation), 1.0)
    assert pose.perturbed(np.random.default_rng(3), 0, 0) is pose

def test_ray_needs_unit_direction():
    with pytest.raises(ValueError):
        Ray([0, 0, 0], [0, 0, 2.0])
    ray = Ray.towards([0, 0, 5.0], [0, 0, 0])
    assert np.allclose(ray.direction, [0, 0, -1])

def test_samples_validate():
    with pytest.raises(ValueError):
        SurfaceSample([0, 0, 0], [0, 0, 2.0], 1e-3)
    with pytest.raises(ValueError):
        SurfaceSample([0, 0, 0], [0, 0, 1.0], 0.0)
    samples = SampleSet([[0, 0, 0], [1, 0, 0]], [[0, 0, 1], [1, 0, 0]], 1e-3)
    assert len(samples) == 2
    assert isinstance(samples[1], SurfaceSample)
    assert len(samples[np.array([True, False])]) == 1
    rebuilt = SampleSet.from_samples(list(samples))
    assert np.array_equal(rebuilt.positions, samples.positions)

def test_raycast_cube_front_face(unit_cube):
    hit = geometry.raycast(unit_cube, Ray([0, 0, 5.0], [0, 0, -1.0]))
    assert hit.distance == pytest.approx(4.5)
    assert np.allclose(hit.point, [0, 0, 0.5])
    assert np.allclose(hit.face_normal, [0, 0, 1])

def test_raycast_miss(unit_cube):
    assert geometry.raycast(unit_cube, Ray([0, 0, 5.0], [0, 0, 1.0])) is None

def test_raycast_sphere(unit_sphere):
    hit = geometry.raycast(unit_sphere, Ray([0, 0, 3.0], [0, 0, -1.0]))
    assert 1.99 <= hit.distance <= 2.01

def test_hit_lies_on_ray_and_plane(unit_sphere):
    rng = np.random.default_rng(5)
    for _ in range(50):
        origin = rng.normal(size=3) * 3
        ray = Ray.towards(origin, rng.normal(size=3) * 0.3)
        hit = geometry.raycast(unit_sphere, ray)
        if hit is None:
            continue
        offset = hit.point - ray.origin
        assert np.linalg.norm(np.cross(offset, ray.direction)) < 1e-9
        v0 = unit_sphere.triangles[hit.face][0]
        assert abs(np.dot(hit.point - v0, hit.face_normal)) < 1e-9
        assert np.dot(hit.face_normal, ray.direction) <= 0

def test_signed_distance_cube(unit_cube):
    assert geometry.signed_distance(unit_cube, [0, 0, 0]) == \
        pytest.approx(-0.5)
    assert geometry.signed_distance(unit_cube, [0, 0, 1.5]) == \
        pytest.approx(1.0)

def test_signed_distance_sphere(unit_sphere):
    assert geometry.signed_distance(unit_sphere, [0.5, 0, 0]) == \
        pytest.approx(-0.5, abs=0.01)

def test_signed_distance_flips_across_surface(unit_sphere):
    radii = np.linspace(0.5, 1.5, 101)
    direction = np.array([0.3, -0.5, 0.81])
    direction /= np.linalg.norm(direction)
    d = geometry.signed_distance(unit_sphere, radii[:, None] * direction)
    signs = np.sign(d)
    assert np.count_nonzero(np.diff(signs)) == 1
    crossing = radii[np.argmax(signs > 0)]
    assert 0.98 <= crossing <= 1.02

def test_signed_distance_needs_watertight(unit_cube):
    open_box = TriangleMesh(unit_cube.vertices, unit_cube.faces[:-1])
    with pytest.raises(MeshError):
        geometry.signed_distance(open_box, [0, 0, 0])

def test_chamfer_basics():
    a = np.random.default_rng(0).normal(size=(50, 3))
    assert geometry.chamfer_distance(a, a) == 0.0
    b = a + 0.01
    assert geometry.chamfer_distance(a, b) == \
        pytest.approx(geometry.chamfer_distance(b, a))
    assert geometry.chamfer_distance(a, b) >= 0

def test_chamfer_one_millimetre():
    cd = geometry.chamfer_distance([[0, 0, 0]], [[0, 0, 1e-3]])
    assert cd * 1e6 == pytest.approx(2.0)

def test_chamfer_rejects_empty():
    with pytest.raises(ValueError):
        geometry.chamfer_distance(np.zeros((0, 3)), [[0, 0, 0]])

def test_chamfer_between_spheres():
    inner = meshio.icosphere(1.0, subdivisions=5)
    a, _ = geometry.sample_surface(inner, 10000, seed=1)
    # the same samples on the concentric radius 1.01 icosphere
    b = 1.01 * a
    cd = geometry.chamfer_distance(a, b) * 1e6
    assert 180 <= cd <= 220

def test_sample_surface_is_seeded(unit_cube):
    a, fa = geometry.sample_surface(unit_cube, 100, seed=4)
    b, fb = geometry.sample_surface(unit_cube, 100, seed=4)
    assert np.array_equal(a, b) and np.array_equal(fa, fb)
    assert np.allclose(np.abs(a).max(axis=1), 0.5)
