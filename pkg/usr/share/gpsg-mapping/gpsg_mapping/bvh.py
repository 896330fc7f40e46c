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


import numpy as np

hit_epsilon = 1e-12
box_padding = 1e-9
chunk_size = 65536

def intersect_pairs(origins, directions, triangles):
    """Moller-Trumbore on matched (ray, triangle) pairs.

    Returns the hit distance per pair, inf where the ray misses.
    """
    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0
    p = np.cross(directions, e2)
    det = np.einsum('ij,ij->i', e1, p)
    with np.errstate(divide='ignore', invalid='ignore'):
        inv = 1.0 / det
        s = origins - v0
        u = np.einsum('ij,ij->i', s, p) * inv
        q = np.cross(s, e1)
        v = np.einsum('ij,ij->i', directions, q) * inv
        t = np.einsum('ij,ij->i', e2, q) * inv
    hit = (np.abs(det) > 1e-300) & (u >= 0) & (v >= 0) & (u + v <= 1) & \
          (t > hit_epsilon)
    return np.where(hit, t, np.inf)

def _keep_nearest(best_t, best_face, rays, t, faces):
    """Folds candidate hits into the running nearest, smaller face on ties."""
    live = np.isfinite(t) & (t <= best_t[rays])
    rays, t, faces = rays[live], t[live], faces[live]
    if len(rays) == 0:
        return
    order = np.lexsort((faces, t, rays))
    rays, t, faces = rays[order], t[order], faces[order]
    first = np.r_[True, rays[1:] != rays[:-1]]
    rays, t, faces = rays[first], t[first], faces[first]
    current = best_face[rays]
    better = (t < best_t[rays]) | (current < 0) | (faces < current)
    best_t[rays[better]] = t[better]
    best_face[rays[better]] = faces[better]

def brute_force_intersect(triangles, origins, directions, max_distance=np.inf):
    """Every ray against every triangle; the reference for the hierarchy."""
    triangles = np.asarray(triangles, dtype=np.float64)
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    best_t = np.full(len(origins), float(max_distance))
    best_face = np.full(len(origins), -1, dtype=np.int64)
    faces = np.arange(len(triangles))
    for i in range(len(origins)):
        t = intersect_pairs(np.broadcast_to(origins[i], (len(faces), 3)),
                            np.broadcast_to(directions[i], (len(faces), 3)),
                            triangles)
        _keep_nearest(best_t, best_face, np.full(len(faces), i), t, faces)
    best_t[best_face < 0] = np.inf
    return best_t, best_face

class BoundingVolumeHierarchy(object):
    """Axis-aligned box tree over a triangle soup, stored as flat arrays.

    Nodes split at the median centroid along the axis of largest centroid
    extent. Queries walk the tree breadth first for a whole batch of rays.
    """

    leaf_size = 4

    def __init__(self, triangles):
        triangles = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
        self.face_count = len(triangles)
        order = np.arange(self.face_count)
        centroids = triangles.mean(axis=1)
        tri_lo = triangles.min(axis=1)
        tri_hi = triangles.max(axis=1)
        lo, hi, left, right, start, count = [], [], [], [], [], []

        def new_node():
            for column in (lo, hi):
                column.append(np.zeros(3))
            for column in (left, right, start, count):
                column.append(-1)
            return len(left) - 1

        stack = [(new_node(), 0, self.face_count)]
        while stack:
            node, first, last = stack.pop()
            members = order[first:last]
            if len(members):
                lo[node] = tri_lo[members].min(axis=0) - box_padding
                hi[node] = tri_hi[members].max(axis=0) + box_padding
            if last - first <= self.leaf_size:
                start[node], count[node] = first, last - first
                continue
            c = centroids[members]
            axis = np.argmax(c.max(axis=0) - c.min(axis=0))
            order[first:last] = members[np.argsort(c[:, axis], kind='stable')]
            middle = (first + last) // 2
            left[node], right[node] = new_node(), new_node()
            stack.append((right[node], middle, last))
            stack.append((left[node], first, middle))
        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.order = order
        self.triangles = triangles[order]

    def __len__(self):
        return len(self.left)

    def _candidates(self, origins, inverse, best_t=None):
        """Yields (ray, sorted-face-position) pairs reaching each leaf level.

        When best_t is given, boxes beyond the current nearest hit are
        skipped; the caller updates best_t between yields.
        """
        rays = np.arange(len(origins))
        nodes = np.zeros(len(origins), dtype=np.int64)
        if self.face_count == 0:
            return
        while len(rays):
            t1 = (self.lo[nodes] - origins[rays]) * inverse[rays]
            t2 = (self.hi[nodes] - origins[rays]) * inverse[rays]
            t_near = np.minimum(t1, t2).max(axis=1)
            t_far = np.maximum(t1, t2).min(axis=1)
            keep = t_far >= np.maximum(t_near, 0.0)
            if best_t is not None:
                keep &= t_near <= best_t[rays]
            rays, nodes = rays[keep], nodes[keep]
            leaf = self.left[nodes] < 0
            if np.any(leaf):
                counts = self.count[nodes[leaf]]
                offsets = np.cumsum(counts) - counts
                total = counts.sum()
                positions = np.repeat(self.start[nodes[leaf]], counts) + \
                    np.arange(total) - np.repeat(offsets, counts)
                yield np.repeat(rays[leaf], counts), positions
            inner = ~leaf
            rays = np.concatenate([rays[inner], rays[inner]])
            nodes = np.concatenate([self.left[nodes[inner]],
                                    self.right[nodes[inner]]])

    @staticmethod
    def _prepare(origins, directions):
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        directions = np.array(directions, dtype=np.float64).reshape(-1, 3)
        safe = directions.copy()
        tiny = np.abs(safe) < 1e-12
        safe[tiny] = np.where(np.signbit(safe[tiny]), -1e-12, 1e-12)
        return origins, directions, 1.0 / safe

    def intersect(self, origins, directions, max_distance=np.inf):
        """Nearest hit per ray: (distance, face), inf and -1 on a miss."""
        origins, directions, inverse = self._prepare(origins, directions)
        best_t = np.full(len(origins), float(max_distance))
        best_face = np.full(len(origins), -1, dtype=np.int64)
        for first in range(0, len(origins), chunk_size):
            part = slice(first, first + chunk_size)
            o, d, inv = origins[part], directions[part], inverse[part]
            t_part, face_part = best_t[part], best_face[part]
            for rays, positions in self._candidates(o, inv, t_part):
                t = intersect_pairs(o[rays], d[rays], self.triangles[positions])
                _keep_nearest(t_part, face_part, rays, t, self.order[positions])
        best_t[best_face < 0] = np.inf
        return best_t, best_face

    def count_crossings(self, origins, directions):
        """Number of triangles each ray passes through."""
        origins, directions, inverse = self._prepare(origins, directions)
        crossings = np.zeros(len(origins), dtype=np.int64)
        for first in range(0, len(origins), chunk_size):
            part = slice(first, first + chunk_size)
            o, d, inv = origins[part], directions[part], inverse[part]
            found = crossings[part]
            for rays, positions in self._candidates(o, inv):
                t = intersect_pairs(o[rays], d[rays], self.triangles[positions])
                np.add.at(found, rays[np.isfinite(t)], 1)
        return crossings
