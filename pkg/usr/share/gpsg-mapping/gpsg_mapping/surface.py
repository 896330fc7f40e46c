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


import mcubes
import numpy as np
from scipy.ndimage import map_coordinates
from scipy.spatial import cKDTree

from .geometry import TriangleMesh
from .gpsg import SdfField

def empty_mesh():
    return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64),
                        attribute=np.zeros(0))

def analytic_field(spec, sdf, variance=0.0):
    """Fills the lattice from a callable SDF; every node counts as touched."""
    shape = (spec.size,) * 3
    values = np.asarray(sdf(spec.node_positions()), dtype=np.float64)
    return SdfField(spec, values.reshape(shape), np.full(shape, variance),
                    np.ones(shape, dtype=bool))

def _edge_support(index_coords, touched):
    """True where both lattice nodes of a vertex's generating edge are
    touched."""
    last = np.array(touched.shape) - 1
    lower = np.clip(np.floor(index_coords + 1e-9).astype(np.int64), 0, last)
    upper = np.clip(np.ceil(index_coords - 1e-9).astype(np.int64), 0, last)
    return touched[tuple(lower.T)] & touched[tuple(upper.T)]

def _sample(volume, index_coords):
    return map_coordinates(volume, index_coords.T, order=1, mode='nearest')

def marching_cubes(field, iso=0.0, touched_only=False):
    """Zero level set of the posterior mean with per-vertex sigma_phi.

    Faces are wound so normals point toward increasing phi. With
    touched_only, vertices on edges reaching an untouched node are dropped.
    """
    volume = np.asarray(field.mean, dtype=np.float64)
    vertices, faces = mcubes.marching_cubes(volume, iso)
    if len(faces) == 0:
        return empty_mesh()
    vertices, inverse = np.unique(np.round(vertices, 12), axis=0,
                                  return_inverse=True)
    faces = inverse.reshape(-1)[np.asarray(faces, dtype=np.int64)]
    faces = faces[(faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) &
                  (faces[:, 2] != faces[:, 0])]
    if touched_only:
        supported = _edge_support(vertices, np.asarray(field.touched))
        faces = faces[np.all(supported[faces], axis=1)]
    spec = field.spec
    tri = (spec.lo + vertices * spec.spacing)[faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    keep = np.linalg.norm(normals, axis=1) > 0
    faces, normals = faces[keep], normals[keep]
    if len(faces) == 0:
        return empty_mesh()
    used = np.zeros(len(vertices), dtype=bool)
    used[faces] = True
    remap = np.cumsum(used) - 1
    centroids = vertices[faces].mean(axis=1)
    vertices, faces = vertices[used], remap[faces]
    gradient = np.stack([_sample(g, centroids) for g in
                         np.gradient(volume, *spec.spacing)], axis=1)
    alignment = np.einsum('ij,ij->i', normals, gradient)
    if np.sum(alignment < 0) > np.sum(alignment > 0):
        faces = faces[:, [0, 2, 1]]
    sigma = np.sqrt(np.maximum(_sample(np.asarray(field.variance), vertices),
                               0.0))
    return TriangleMesh(spec.lo + vertices * spec.spacing, faces,
                        attribute=sigma)

def prune_unsupported(mesh, measurements, r):
    """Keeps vertices within r of some measurement and the faces they close."""
    positions = getattr(measurements, 'positions', measurements)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(positions) == 0:
        return empty_mesh()
    if len(mesh.vertices) == 0:
        return mesh
    distance, _ = cKDTree(positions).query(mesh.vertices)
    return mesh.keep_vertices(distance <= r)
