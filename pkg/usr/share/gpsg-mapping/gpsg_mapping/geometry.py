# Copyright (c) 2026 The gpsg-mapping developers.
# All rights reserved.
#
# This file is part of gpsg-mapping.
#
#    gpsg-mapping is free software: you can redistribute it and/or
#    modify it under the terms of the GNU General Public License as
#    published by the Free Software Foundation, either version 3 of the
#    License, or (at your option) any later version.
#
#    gpsg-mapping is distributed in the hope that it will be useful,
#    but WITHOUT ANY WARRANTY; without even the implied warranty of
#    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#    GNU General Public License for more details.
#
#    You should have received a copy of the GNU General Public License
#    along with gpsg-mapping.  If not, see
#    <http://www.gnu.org/licenses/>.


import collections

import numpy as np
import trimesh
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

degenerate_area = 1e-12
rotation_tolerance = 1e-9
direction_tolerance = 1e-9
normal_tolerance = 1e-6

# fixed, slightly skewed directions so parity rays avoid mesh edges
_parity_directions = np.array([[0.5773, 0.5774, 0.5775],
                               [-0.4826, 0.6134, 0.6253],
                               [0.3517, -0.7211, 0.5973]])
_parity_directions /= np.linalg.norm(_parity_directions, axis=1)[:, None]

class MeshError(Exception):
    def __init__(self, value):
        self.value = value

    def __str__(self):
        return "Error Reading Mesh - %s" % self.value

def _frozen(array):
    array.flags.writeable = False
    return array

class TriangleMesh(object):
    """Indexed triangle mesh in meters.

    Arrays are read only once the mesh is built; the ray-casting hierarchy
    is built on first use and reused afterwards.
    """

    def __init__(self, vertices, faces, normals=None, attribute=None):
        vertices = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValueError("face index out of range")
        if normals is not None:
            normals = np.array(normals, dtype=np.float64).reshape(-1, 3)
            if len(normals) != len(vertices):
                raise ValueError("normal count differs from vertex count")
        if attribute is not None:
            attribute = np.array(attribute, dtype=np.float64).reshape(-1)
            if len(attribute) != len(vertices):
                raise ValueError("attribute length differs from vertex count")
        self.vertices = _frozen(vertices)
        self.faces = _frozen(faces)
        self.normals = normals if normals is None else _frozen(normals)
        self.attribute = attribute if attribute is None else _frozen(attribute)
        self._bvh = None

    def __len__(self):
        return len(self.faces)

    def __repr__(self):
        return "TriangleMesh(%d vertices, %d faces)" % (len(self.vertices),
                                                        len(self.faces))

    @property
    def is_empty(self):
        return len(self.faces) == 0

    @property
    def triangles(self):
        return self.vertices[self.faces]

    def _cross(self):
        tri = self.triangles
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    @property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self._cross(), axis=1)

    @property
    def face_normals(self):
        cross = self._cross()
        length = np.linalg.norm(cross, axis=1)
        length[length == 0] = 1.0
        return cross / length[:, None]

    @property
    def bbox(self):
        if len(self.vertices) == 0:
            raise MeshError("empty mesh has no bounding box")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def bvh(self):
        if self._bvh is None:
            from .bvh import BoundingVolumeHierarchy
            self._bvh = BoundingVolumeHierarchy(self.triangles)
        return self._bvh

    def degenerate_faces(self, tolerance=degenerate_area):
        return np.flatnonzero(self.face_areas <= tolerance)

    def edge_counts(self):
        edges = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2),
                        axis=1)
        return np.unique(edges, axis=0, return_counts=True)

    @property
    def is_watertight(self):
        if self.is_empty:
            return False
        _, counts = self.edge_counts()
        return bool(np.all(counts == 2))

    @property
    def euler_characteristic(self):
        edges, _ = self.edge_counts()
        used = len(np.unique(self.faces))
        return used - len(edges) + len(self.faces)

    def with_attribute(self, attribute):
        return TriangleMesh(self.vertices, self.faces, self.normals, attribute)

    def keep_vertices(self, keep):
        """Drops unkept vertices and every face touching one, compacting
        indices."""
        keep = np.asarray(keep, dtype=bool)
        faces = self.faces[np.all(keep[self.faces], axis=1)]
        remap = np.full(len(self.vertices), -1, dtype=np.int64)
        remap[keep] = np.arange(keep.sum())
        pick = lambda a: None if a is None else a[keep]
        return TriangleMesh(self.vertices[keep], remap[faces],
                            pick(self.normals), pick(self.attribute))

    def to_trimesh(self):
        return trimesh.Trimesh(vertices=np.array(self.vertices),
                               faces=np.array(self.faces), process=False)

class RigidPose(object):
    """Maps points from a local frame into the world frame."""

    def __init__(self, rotation=None, translation=None):
        rotation = np.eye(3) if rotation is None else \
                   np.array(rotation, dtype=np.float64)
        translation = np.zeros(3) if translation is None else \
                      np.array(translation, dtype=np.float64)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise ValueError("pose needs a 3x3 rotation and a 3-vector")
        if np.abs(rotation.dot(rotation.T) - np.eye(3)).max() > \
                rotation_tolerance or \
                abs(np.linalg.det(rotation) - 1.0) > rotation_tolerance:
            raise ValueError("rotation is not a proper orthonormal matrix")
        self.rotation = _frozen(rotation)
        self.translation = _frozen(translation)

    def __repr__(self):
        return "RigidPose(%r, %r)" % (self.rotation.tolist(),
                                      self.translation.tolist())

    def __mul__(self, other):
        return RigidPose(self.rotation.dot(other.rotation),
                         self.rotation.dot(other.translation) +
                         self.translation)

    @classmethod
    def from_matrix(cls, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix[:3, :3], matrix[:3, 3])

    @classmethod
    def from_row_major(cls, values):
        return cls.from_matrix(np.asarray(values, dtype=np.float64).
                               reshape(3, 4))

    @classmethod
    def from_z_axis(cls, origin, z_axis, roll=0.0):
        """Pose at origin whose local z-axis is z_axis, rolled about it."""
        z = np.asarray(z_axis, dtype=np.float64)
        z = z / np.linalg.norm(z)
        helper = np.array([1.0, 0, 0]) if abs(z[0]) < 0.9 else \
                 np.array([0, 1.0, 0])
        x = helper - helper.dot(z) * z
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        c, s = np.cos(roll), np.sin(roll)
        x, y = c * x + s * y, -s * x + c * y
        return cls(np.column_stack([x, y, z]), origin)

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def z_axis(self):
        return self.rotation[:, 2].copy()

    def row_major(self):
        return self.matrix[:3].reshape(-1)

    def inverse(self):
        return RigidPose(self.rotation.T, -self.rotation.T.dot(self.translation))

    def transform_points(self, points):
        return np.asarray(points).dot(self.rotation.T) + self.translation

    def transform_vectors(self, vectors):
        return np.asarray(vectors).dot(self.rotation.T)

    def perturbed(self, rng, sigma_translation, sigma_rotation):
        """Copy with zero-mean Gaussian noise on translation and on the
        rotation vector."""
        if sigma_translation <= 0 and sigma_rotation <= 0:
            return self
        delta = Rotation.from_rotvec(rng.normal(0.0, sigma_rotation, 3)) \
            if sigma_rotation > 0 else Rotation.identity()
        rotation = delta.as_matrix().dot(self.rotation)
        # re-orthonormalize so the pose check holds after the product
        u, _, vt = np.linalg.svd(rotation)
        translation = self.translation + (rng.normal(0.0, sigma_translation, 3)
                                          if sigma_translation > 0 else 0.0)
        return RigidPose(u.dot(vt), translation)

class Ray(object):
    def __init__(self, origin, direction):
        self.origin = _frozen(np.array(origin, dtype=np.float64))
        self.direction = _frozen(np.array(direction, dtype=np.float64))
        if abs(np.linalg.norm(self.direction) - 1.0) > direction_tolerance:
            raise ValueError("ray direction must be a unit vector")

    @classmethod
    def towards(cls, origin, target):
        direction = np.asarray(target, dtype=np.float64) - origin
        return cls(origin, direction / np.linalg.norm(direction))

RayHit = collections.namedtuple("RayHit", "distance point face_normal face")

class SurfaceSample(collections.namedtuple("SurfaceSample",
                                           "position normal noise_sigma")):
    __slots__ = ()

    def __new__(cls, position, normal, noise_sigma):
        position = np.array(position, dtype=np.float64)
        normal = np.array(normal, dtype=np.float64)
        if abs(np.linalg.norm(normal) - 1.0) > normal_tolerance:
            raise ValueError("sample normal must be a unit vector")
        if not noise_sigma > 0:
            raise ValueError("sample noise must be positive")
        return super(SurfaceSample, cls).__new__(cls, position, normal,
                                                 float(noise_sigma))

class SampleSet(object):
    """A batch of surface samples from one source, stored as arrays."""

    sources = ('depth', 'tactile', 'base')

    def __init__(self, positions, normals, sigmas, source='tactile'):
        positions = np.array(positions, dtype=np.float64).reshape(-1, 3)
        normals = np.array(normals, dtype=np.float64).reshape(-1, 3)
        sigmas = np.broadcast_to(np.asarray(sigmas, dtype=np.float64),
                                 (len(positions),)).copy()
        if len(normals) != len(positions):
            raise ValueError("sample positions and normals differ in count")
        if len(normals) and np.abs(np.linalg.norm(normals, axis=1) - 1.0).\
                max() > normal_tolerance:
            raise ValueError("sample normals must be unit vectors")
        if np.any(sigmas <= 0):
            raise ValueError("sample noise must be positive")
        if source not in self.sources:
            raise ValueError("unknown sample source %r" % source)
        self.positions = _frozen(positions)
        self.normals = _frozen(normals)
        self.sigmas = _frozen(sigmas)
        self.source = source

    def __len__(self):
        return len(self.positions)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, index):
        if isinstance(index, (int, np.integer)):
            return SurfaceSample(self.positions[index], self.normals[index],
                                 self.sigmas[index])
        return SampleSet(self.positions[index], self.normals[index],
                         self.sigmas[index], self.source)

    def __repr__(self):
        return "SampleSet(%d %s samples)" % (len(self), self.source)

    @classmethod
    def from_samples(cls, samples, source='tactile'):
        samples = list(samples)
        return cls([s.position for s in samples], [s.normal for s in samples],
                   [s.noise_sigma for s in samples], source)

    @classmethod
    def empty(cls, source='tactile'):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), source)

def raycast(mesh, ray):
    """Nearest hit along the ray, or None on a miss."""
    t, face = mesh.bvh.intersect(ray.origin[None], ray.direction[None])
    if face[0] < 0:
        return None
    normal = mesh.face_normals[face[0]]
    if normal.dot(ray.direction) > 0:
        normal = -normal
    return RayHit(float(t[0]), ray.origin + t[0] * ray.direction, normal,
                  int(face[0]))

def closest_points(mesh, points, chunk=4096):
    """Closest point on the mesh for every query point.

    Candidate faces are those whose centroid is no farther than the nearest
    centroid plus the largest circumradius.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangles
    centroids = tri.mean(axis=1)
    reach = np.linalg.norm(tri - centroids[:, None], axis=2).max()
    tree = cKDTree(centroids)
    closest = np.empty_like(points)
    distance = np.empty(len(points))
    face = np.empty(len(points), dtype=np.int64)
    for start in range(0, len(points), chunk):
        block = points[start:start + chunk]
        nearest, _ = tree.query(block)
        groups = tree.query_ball_point(block, nearest + 2 * reach + 1e-12)
        sizes = np.array([len(g) for g in groups])
        owner = np.repeat(np.arange(len(block)), sizes)
        faces = np.concatenate([np.asarray(g, dtype=np.int64) for g in groups])
        found = trimesh.triangles.closest_point(tri[faces], block[owner])
        d = np.linalg.norm(found - block[owner], axis=1)
        order = np.lexsort((faces, d, owner))
        first = order[np.r_[0, np.flatnonzero(np.diff(owner[order])) + 1]]
        closest[start:start + chunk] = found[first]
        distance[start:start + chunk] = d[first]
        face[start:start + chunk] = faces[first]
    return distance, closest, face

def inside_by_parity(mesh, points):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    votes = np.zeros(len(points), dtype=np.int64)
    for direction in _parity_directions:
        directions = np.broadcast_to(direction, points.shape)
        votes += mesh.bvh.count_crossings(points, directions) % 2
    return votes >= 2

def signed_distance(mesh, points):
    """Distance to the surface, negative inside; scalar for a single point."""
    if not mesh.is_watertight:
        raise MeshError("signed distance needs a watertight mesh")
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    distance, _, _ = closest_points(mesh, points)
    distance[inside_by_parity(mesh, points)] *= -1
    return float(distance[0]) if single else distance

def sample_surface(mesh, count, seed=0):
    """Uniform area-weighted surface samples and their face indices."""
    points, faces = trimesh.sample.sample_surface(mesh.to_trimesh(), count,
                                                  seed=seed)
    return np.asarray(points), np.asarray(faces)

def chamfer_distance(a, b):
    """Sum of the mean squared nearest-neighbour distances both ways, in m^2."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs two non-empty point sets")
    to_b, _ = cKDTree(b).query(a)
    to_a, _ = cKDTree(a).query(b)
    return float(np.mean(to_b ** 2) + np.mean(to_a ** 2))
