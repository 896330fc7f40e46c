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
from scipy.ndimage import gaussian_filter

from .geometry import RigidPose, SampleSet
from .tactile import voxel_decimate

depth_unit = 1e-3

class DepthError(Exception):
    def __init__(self, value):
        self.value = value

    def __str__(self):
        return "Error Converting Depth Map - %s" % self.value

class CameraIntrinsics(object):
    """Pinhole camera; pixel (u, v) looks along ((u - cx) / fx,
    (v - cy) / fy, 1) in the camera frame (x right, y down, z forward)."""

    def __init__(self, fx, fy, cx, cy, width, height):
        if fx <= 0 or fy <= 0 or width < 1 or height < 1:
            raise ValueError("bad camera intrinsics")
        self.fx, self.fy, self.cx, self.cy = (float(v) for v in
                                              (fx, fy, cx, cy))
        self.width, self.height = int(width), int(height)

    @classmethod
    def centered(cls, width, height, focal):
        return cls(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0,
                   width, height)

    def __eq__(self, other):
        return isinstance(other, CameraIntrinsics) and \
            self.as_tuple() == other.as_tuple()

    def as_tuple(self):
        return (self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    def pixel_rays(self):
        """Camera-frame directions (rows, cols, 3) with unit z."""
        u, v = np.meshgrid(np.arange(self.width), np.arange(self.height))
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy,
                         np.ones(u.shape)], axis=-1)

class DepthMap(object):
    def __init__(self, pose, intrinsics, depth):
        depth = np.array(depth, dtype=np.float64)
        if depth.shape != (intrinsics.height, intrinsics.width):
            raise ValueError("depth grid does not match the intrinsics")
        if not np.all(np.isfinite(depth)) or depth.min(initial=0) < 0:
            raise ValueError("depths must be finite and non-negative")
        self.pose = pose
        self.intrinsics = intrinsics
        self.depth = depth

    @property
    def valid(self):
        return self.depth > 0

    def quantized(self, unit=depth_unit):
        return DepthMap(self.pose, self.intrinsics,
                        np.round(self.depth / unit) * unit)

    def points(self, depth=None):
        """Camera-frame back-projection of every pixel."""
        depth = self.depth if depth is None else depth
        return self.intrinsics.pixel_rays() * depth[..., None]

def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Camera pose at eye with z toward target and y pointing down."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    if np.linalg.norm(np.cross(z, up)) < 1e-6:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidPose(np.column_stack([x, y, z]), eye)

def overlooking_camera(lo, hi, distance=1.0, elevation=35.0, azimuth=0.0):
    """Camera on a sphere around the box centre, looking at the centre;
    angles in degrees."""
    center = 0.5 * (np.asarray(lo) + np.asarray(hi))
    el, az = np.radians(elevation), np.radians(azimuth)
    eye = center + distance * np.array([np.cos(el) * np.cos(az),
                                        np.cos(el) * np.sin(az), np.sin(el)])
    return look_at(eye, center)

def render_depthmap(mesh, pose, intrinsics, noise_sigma=0.0, rng=None):
    """z-depth per pixel, 0 where the ray misses."""
    rays = intrinsics.pixel_rays().reshape(-1, 3)
    length = np.linalg.norm(rays, axis=1)
    directions = pose.transform_vectors(rays / length[:, None])
    origins = np.broadcast_to(pose.translation, directions.shape)
    t, face = mesh.bvh.intersect(origins, directions)
    depth = np.zeros(len(rays))
    hit = face >= 0
    depth[hit] = t[hit] / length[hit]
    if noise_sigma > 0 and rng is not None:
        depth[hit] += rng.normal(0.0, noise_sigma, hit.sum())
        depth = np.maximum(depth, 0.0)
    return DepthMap(pose, intrinsics,
                    depth.reshape(intrinsics.height, intrinsics.width))

def _shift(a, du, dv, fill):
    """out[v, u] = a[v + dv, u + du], fill outside the grid."""
    out = np.full_like(a, fill)
    h, w = a.shape[:2]
    src_v = slice(max(dv, 0), h + min(dv, 0))
    dst_v = slice(max(-dv, 0), h + min(-dv, 0))
    src_u = slice(max(du, 0), w + min(du, 0))
    dst_u = slice(max(-du, 0), w + min(-du, 0))
    out[dst_v, dst_u] = a[src_v, src_u]
    return out

def depthmap_to_samples(dmap, budget=500, sigma=5e-3, normal_step=3,
                        smoothing=2.0, max_jump=0.02):
    """World samples with camera-facing normals from a depth map.

    Normals come from neighbours normal_step pixels away on a smoothed copy;
    pixels lacking valid neighbours on all four sides are rejected.
    """
    valid = dmap.valid
    if not valid.any():
        raise DepthError("depth map has no valid pixels")
    if smoothing > 0:
        weight = gaussian_filter(valid.astype(np.float64), smoothing)
        total = gaussian_filter(np.where(valid, dmap.depth, 0.0), smoothing)
        smooth = np.where(valid, total / np.where(weight > 0, weight, 1.0),
                          0.0)
    else:
        smooth = dmap.depth
    s = normal_step
    ok = valid.copy()
    for du, dv in ((s, 0), (-s, 0), (0, s), (0, -s)):
        neighbour = _shift(smooth, du, dv, 0.0)
        ok &= (neighbour > 0) & (np.abs(neighbour - smooth) < max_jump)
    if not ok.any():
        raise DepthError("no depth pixel has valid neighbours")
    cloud = dmap.points(smooth)
    along_u = _shift(cloud, s, 0, 0.0) - _shift(cloud, -s, 0, 0.0)
    along_v = _shift(cloud, 0, s, 0.0) - _shift(cloud, 0, -s, 0.0)
    normals = np.cross(along_u, along_v)[ok]
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    points = dmap.points()[ok]
    # face the camera, which sits at the camera-frame origin
    away = np.einsum('ij,ij->i', normals, points) > 0
    normals[away] *= -1
    points, normals, _ = voxel_decimate(dmap.pose.transform_points(points),
                                        dmap.pose.transform_vectors(normals),
                                        budget)
    return SampleSet(points, normals, sigma, 'depth')
