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


import warnings

import numpy as np
from scipy.ndimage import binary_erosion
from scipy.spatial import cKDTree

from .bvh import BoundingVolumeHierarchy
from .geometry import Ray, RigidPose, SampleSet, raycast, sample_surface

class SensorError(Exception):
    def __init__(self, value):
        self.value = value

    def __str__(self):
        return "Error Rendering Touch - %s" % self.value

class ContactMiss(SensorError):
    def __str__(self):
        return "No Contact - %s" % self.value

class SensorSpec(object):
    """Gel patch in the sensor's xy plane; z points into the object."""

    def __init__(self, width_px=640, height_px=480, patch_width=0.01883,
                 patch_height=0.01412, max_depth=0.001, press_depth=0.0005,
                 contact_threshold=1e-5, pixel_noise=5e-5):
        if width_px < 2 or height_px < 2:
            raise ValueError("sensor needs at least 2 pixels per side")
        if min(patch_width, patch_height, max_depth, press_depth,
               contact_threshold) <= 0:
            raise ValueError("sensor dimensions must be positive")
        self.width_px, self.height_px = int(width_px), int(height_px)
        self.patch_width, self.patch_height = patch_width, patch_height
        self.max_depth = max_depth
        self.press_depth = press_depth
        self.contact_threshold = contact_threshold
        self.pixel_noise = pixel_noise

    @property
    def pixel_size(self):
        return (self.patch_width / self.width_px,
                self.patch_height / self.height_px)

    @property
    def ray_offset(self):
        return 5 * self.max_depth

    def pixel_grid(self):
        """Sensor-frame x and y of every pixel centre, shaped (rows, cols)."""
        x = ((np.arange(self.width_px) + 0.5) / self.width_px - 0.5) * \
            self.patch_width
        y = ((np.arange(self.height_px) + 0.5) / self.height_px - 0.5) * \
            self.patch_height
        return np.meshgrid(x, y)

class TactileObservation(object):
    def __init__(self, pose, heightmap, contact_mask, timestep):
        heightmap = np.asarray(heightmap, dtype=np.float32)
        contact_mask = np.asarray(contact_mask, dtype=bool)
        if heightmap.shape != contact_mask.shape or heightmap.ndim != 2:
            raise ValueError("height-map and contact mask differ in shape")
        if not np.all(np.isfinite(heightmap)) or heightmap.min() < 0:
            raise ValueError("height-map must be finite and non-negative")
        self.pose = pose
        self.heightmap = heightmap
        self.contact_mask = contact_mask
        self.timestep = int(timestep)

    def __repr__(self):
        return "TactileObservation(t=%d, %d contacts)" % (
            self.timestep, self.contact_mask.sum())

class ExplorationPolicy(object):
    modes = ('uniform', 'ring')

    def __init__(self, mode='uniform', touch_count=60, seed=0, ring_angles=8,
                 ring_heights=5):
        if mode not in self.modes:
            raise ValueError("unknown exploration mode %r" % mode)
        if touch_count < 0:
            raise ValueError("touch count must not be negative")
        if ring_angles < 1 or ring_heights < 1:
            raise ValueError("rings need at least one angle and one height")
        self.mode = mode
        self.touch_count = int(touch_count)
        self.seed = seed
        self.ring_angles = int(ring_angles)
        self.ring_heights = int(ring_heights)

    def ring_levels(self, lo, hi):
        """Ring heights spanning the object with a 10% margin, bottom up."""
        margin = 0.1 * (hi[2] - lo[2])
        if self.ring_heights == 1:
            return np.array([0.5 * (lo[2] + hi[2])])
        return np.linspace(lo[2] + margin, hi[2] - margin, self.ring_heights)

def farthest_points(points, count, start):
    chosen = [start]
    distance = np.linalg.norm(points - points[start], axis=1)
    for _ in range(1, min(count, len(points))):
        chosen.append(int(np.argmax(distance)))
        distance = np.minimum(distance,
                              np.linalg.norm(points - points[chosen[-1]],
                                             axis=1))
    return np.array(chosen)

def _uniform_poses(mesh, policy, press_depth, rng):
    count = policy.touch_count
    candidates, faces = sample_surface(mesh, max(20 * count, 500),
                                       seed=policy.seed)
    picks = farthest_points(candidates, count,
                            int(rng.integers(len(candidates))))
    normals = mesh.face_normals[faces[picks]]
    poses = []
    for point, normal in zip(candidates[picks], normals):
        roll = rng.uniform(0, 2 * np.pi)
        hit = raycast(mesh, Ray(point + 1e-3 * normal, -normal))
        if hit is None or hit.distance > 2e-3:
            warnings.warn("skipped a pose at %s with no surface below it" %
                          np.round(point, 4).tolist())
            continue
        poses.append(RigidPose.from_z_axis(point - press_depth * normal,
                                           -normal, roll))
    return poses

def _ring_poses(mesh, policy, press_depth):
    lo, hi = mesh.bbox
    center = 0.5 * (lo + hi)
    reach = np.linalg.norm(hi[:2] - lo[:2])
    poses = []
    for height in policy.ring_levels(lo, hi):
        for k in range(policy.ring_angles):
            angle = 2 * np.pi * k / policy.ring_angles
            inward = -np.array([np.cos(angle), np.sin(angle), 0.0])
            start = np.array([center[0], center[1], height]) - reach * inward
            hit = raycast(mesh, Ray(start, inward))
            if hit is None:
                warnings.warn("skipped ring pose at angle %.3f height %.4f" %
                              (angle, height))
                continue
            poses.append(RigidPose.from_z_axis(hit.point +
                                               press_depth * inward, inward))
    return poses

def sample_sensor_poses(mesh, policy, press_depth=5e-4):
    """Touch poses with z along the inward normal, pressed into the surface."""
    if policy.touch_count == 0:
        return []
    rng = np.random.default_rng(policy.seed)
    if policy.mode == 'ring':
        return _ring_poses(mesh, policy, press_depth)[:policy.touch_count]
    return _uniform_poses(mesh, policy, press_depth, rng)

def _patch_hierarchy(mesh, pose, spec):
    """Hierarchy over the triangles that can reach the patch's ray prism."""
    local = pose.inverse().transform_points(mesh.vertices)[mesh.faces]
    half = np.array([spec.patch_width, spec.patch_height]) / 2
    lo, hi = local.min(axis=1), local.max(axis=1)
    near = np.all((hi[:, :2] >= -half) & (lo[:, :2] <= half), axis=1) & \
        (hi[:, 2] >= -spec.ray_offset) & (lo[:, 2] <= spec.max_depth)
    return BoundingVolumeHierarchy(local[near]), local[near]

def render_tactile(mesh, pose, spec, timestep=0, rng=None, reported_pose=None):
    """Penetration height-map and contact mask for a pressed sensor.

    Each pixel casts a ray along sensor z from behind the gel plane; a hit
    on a back face means the ray started inside and saturates the pixel.
    """
    hierarchy, local = _patch_hierarchy(mesh, pose, spec)
    x, y = spec.pixel_grid()
    offset = spec.ray_offset
    origins = np.stack([x.ravel(), y.ravel(),
                        np.full(x.size, -offset)], axis=1)
    directions = np.broadcast_to([0.0, 0.0, 1.0], origins.shape)
    t, face = hierarchy.intersect(origins, directions, max_distance=offset)
    height = np.zeros(x.size)
    hit = face >= 0
    if np.any(hit):
        tri = local[face[hit]]
        facing = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])[:, 2]
        depth = np.clip(offset - t[hit], 0.0, spec.max_depth)
        height[hit] = np.where(facing > 0, spec.max_depth, depth)
    contact = height > spec.contact_threshold
    if not np.any(contact):
        raise ContactMiss("sensor at %s touches nothing" %
                          np.round(pose.translation, 4).tolist())
    if rng is not None and spec.pixel_noise > 0:
        height[contact] += rng.normal(0.0, spec.pixel_noise, contact.sum())
        height = np.clip(height, 0.0, spec.max_depth)
    height = height.astype(np.float32).reshape(x.shape)
    mask = height > spec.contact_threshold
    return TactileObservation(reported_pose or pose, height, mask, timestep)

def voxel_decimate(points, normals, budget):
    """Thins points to at most budget, one per voxel, spaced a voxel apart.

    Each occupied voxel keeps the member nearest its mean and the
    renormalized mean normal. Returns points, normals and the voxel size.
    """
    points = np.asarray(points, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    extent = float(np.ptp(points, axis=0).max()) if len(points) else 0.0
    if len(points) <= 1 or extent == 0.0:
        return points[:1], normals[:1], 0.0
    voxel = extent / np.sqrt(budget)
    while True:
        keys = np.floor((points - points.min(axis=0)) / voxel).astype(np.int64)
        _, owner = np.unique(keys, axis=0, return_inverse=True)
        owner = owner.reshape(-1)
        if owner.max() + 1 <= budget:
            break
        voxel *= 1.2
    cells = owner.max() + 1
    counts = np.bincount(owner, minlength=cells)[:, None]
    mean_point = np.zeros((cells, 3))
    np.add.at(mean_point, owner, points)
    mean_point /= counts
    mean_normal = np.zeros((cells, 3))
    np.add.at(mean_normal, owner, normals)
    gap = np.linalg.norm(points - mean_point[owner], axis=1)
    order = np.lexsort((np.arange(len(points)), gap, owner))
    first = order[np.r_[True, owner[order][1:] != owner[order][:-1]]]
    kept_points = points[first]
    length = np.linalg.norm(mean_normal, axis=1)
    kept_normals = np.where(length[:, None] > 0,
                            mean_normal / np.where(length > 0, length,
                                                   1.0)[:, None],
                            normals[first])
    removed = np.zeros(len(first), dtype=bool)
    for i, j in sorted(cKDTree(kept_points).query_pairs(voxel)):
        if not removed[i]:
            removed[j] = True
    return kept_points[~removed], kept_normals[~removed], voxel

def tactile_to_samples(obs, spec, budget=60, sigma=5e-4, point_noise=0.0,
                       rng=None):
    """Surface samples from the contact patch, in world coordinates."""
    mask = obs.contact_mask
    if not mask.any():
        raise SensorError("touch %d has an empty contact mask" % obs.timestep)
    interior = binary_erosion(mask)
    if not interior.any():
        interior = mask
    dx, dy = spec.pixel_size
    height = obs.heightmap.astype(np.float64)
    grad_y, grad_x = np.gradient(height, dy, dx)
    x, y = spec.pixel_grid()
    local = np.stack([x[interior], y[interior], -height[interior]], axis=1)
    local_normals = -np.stack([grad_x[interior], grad_y[interior],
                               np.ones(interior.sum())], axis=1)
    local_normals /= np.linalg.norm(local_normals, axis=1)[:, None]
    points, normals, _ = voxel_decimate(
        obs.pose.transform_points(local),
        obs.pose.transform_vectors(local_normals), budget)
    if point_noise > 0 and rng is not None:
        points = points + rng.normal(0.0, point_noise, points.shape)
    return SampleSet(points, normals, sigma, 'tactile')

def hallucinate_base(bbox, poses, sigma):
    """Samples on the bottom plane below the given touch poses."""
    if not poses:
        return SampleSet.empty('base')
    lo = np.asarray(bbox[0], dtype=np.float64)
    positions = np.array([[p.translation[0], p.translation[1], lo[2]]
                          for p in poses])
    normals = np.tile([0.0, 0.0, -1.0], (len(poses), 1))
    return SampleSet(positions, normals, sigma, 'base')

def lowest_ring(poses, tolerance):
    """Poses whose height is within tolerance of the lowest one."""
    if not poses:
        return []
    lowest = min(p.translation[2] for p in poses)
    return [p for p in poses if p.translation[2] <= lowest + tolerance]
