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
import csv
import logging
import os
import warnings

import numpy as np

from . import depth, geometry, gpsg, kernel, meshio, records, surface, tactile
from .config import ConfigError
from .constants import mm2_per_m2, ms_per_s

logger = logging.getLogger(__name__)

convergence_tolerance = 0.02
convergence_window = 5
timing_percentile = 95
metrics_columns = ('timestep', 'cd_mm2', 'factors', 'touches', 'solves')
timing_columns = ('timestep', 'update_ms', 'query_ms')
touch_file = 'touches.rec'
depth_file = 'depth.png'

class StepError(Exception):
    def __init__(self, step, error):
        self.step = step
        self.value = error

    def __str__(self):
        return "Error During Step %s - %s" % (self.step, self.value)

MeasurementStream = collections.namedtuple("MeasurementStream",
                                           "depthmap touches")
ReconstructionFrame = collections.namedtuple(
    "ReconstructionFrame", "timestep mesh cd_mm2 factors update_ms query_ms "
    "touches solves")
RunSummary = collections.namedtuple("RunSummary", "final_cd_mm2 "
                                    "convergence_touch median_factors "
                                    "update_time_ratio frames")

class Step(object):
    """Relabels any failure inside the block as a StepError."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, error, traceback):
        if error is None or isinstance(error, StepError):
            return False
        if isinstance(error, Exception) and not isinstance(error, ConfigError):
            raise StepError(self.name, error) from error
        return False

def step_rng(seed, timestep, stream=0):
    """Generator for one timestep. Rendering noise draws from stream 0,
    mapping from stream 1 and reported-pose noise from stream 2."""
    return np.random.default_rng([seed, timestep, stream])

def step_seed(seed, timestep):
    return int(np.random.SeedSequence([seed, timestep]).generate_state(1)[0])

def sensor_spec(config):
    return tactile.SensorSpec(config['sensor_width_px'],
                              config['sensor_height_px'],
                              config['patch_width'], config['patch_height'],
                              config['max_depth'], config['press_depth'],
                              config['contact_threshold'],
                              config['pixel_noise'])

def exploration_policy(config):
    return tactile.ExplorationPolicy(config['exploration'], config['touches'],
                                     config['seed'], config['ring_angles'],
                                     config['ring_heights'])

def camera(config, mesh):
    lo, hi = mesh.bbox
    pose = depth.overlooking_camera(lo, hi, config['camera_distance'],
                                    config['camera_elevation'],
                                    config['camera_azimuth'])
    return pose, depth.CameraIntrinsics.centered(config['camera_width'],
                                                 config['camera_height'],
                                                 config['camera_focal'])

def build_graph(config, mesh, keep_factors=False):
    lo, hi = mesh.bbox
    spec = gpsg.GridSpec.around(lo, hi, config['grid_size'],
                                config['radius_fraction'],
                                config['bbox_padding'])
    R = config['kernel_scale'] or spec.diagonal
    prior = gpsg.PriorSpec.default(R, config['prior_sdf'],
                                   config['prior_scale'])
    params = kernel.KernelParams(R, config['sigma_tactile'])
    return gpsg.init_graph(spec, prior, params, keep_factors)

def simulate_stream(config, mesh):
    """Renders the depth map and every touch before any mapping happens."""
    seed = config['seed']
    pose, intrinsics = camera(config, mesh)
    dmap = depth.render_depthmap(mesh, pose, intrinsics, config['sigma_depth'],
                                 step_rng(seed, 0)).quantized()
    spec = sensor_spec(config)
    poses = tactile.sample_sensor_poses(mesh, exploration_policy(config),
                                        config['press_depth'])
    touches = []
    for pose in poses:
        timestep = len(touches) + 1
        rng = step_rng(seed, timestep)
        reported = pose.perturbed(step_rng(seed, timestep, 2),
                                  config['pose_noise_translation'],
                                  config['pose_noise_rotation'])
        try:
            touches.append(tactile.render_tactile(mesh, pose, spec, timestep,
                                                  rng, reported))
        except tactile.ContactMiss as e:
            warnings.warn("%s; moving to the next pose" % e)
    return MeasurementStream(dmap, touches)

def record_stream(stream, folder):
    if not os.path.isdir(folder):
        os.makedirs(folder)
    filename = os.path.join(folder, touch_file)
    if os.path.exists(filename):
        os.remove(filename)
    records.write_touches(filename, stream.touches)
    records.write_depthmap(stream.depthmap, os.path.join(folder, depth_file))

def load_stream(folder):
    return MeasurementStream(
        records.read_depthmap(os.path.join(folder, depth_file)),
        records.read_touches(os.path.join(folder, touch_file)))

def base_samples(config, mesh, stream):
    """Bottom-plane samples below the lowest ring of touches."""
    if not config['hallucinate_base']:
        return geometry.SampleSet.empty('base')
    lo, hi = mesh.bbox
    levels = exploration_policy(config).ring_levels(lo, hi)
    tolerance = 0.5 * (levels[1] - levels[0]) if len(levels) > 1 else \
        np.inf
    poses = tactile.lowest_ring([t.pose for t in stream.touches], tolerance)
    return tactile.hallucinate_base((lo, hi), poses, 2 * config['sigma_depth'])

def reconstruct(graph, support_filter=True):
    field = graph.sdf_field()
    mesh = surface.marching_cubes(field, touched_only=support_filter)
    return surface.prune_unsupported(mesh, graph.measurement_positions(),
                                     graph.radius)

def frame_chamfer(mesh, reference, config, timestep):
    if mesh.is_empty or mesh.face_areas.sum() <= 0:
        warnings.warn("empty reconstruction at timestep %d" % timestep)
        return float('nan')
    points, _ = geometry.sample_surface(mesh, config['chamfer_samples'],
                                        step_seed(config['seed'], timestep))
    return geometry.chamfer_distance(points, reference) * mm2_per_m2

def map_stream(config, mesh, stream, graph=None, observer=None):
    """Fuses the depth map then each touch, emitting one frame per step.

    observer, when given, is called with each frame and the graph right
    after that frame is built.
    """
    if graph is None:
        graph = build_graph(config, mesh)
    spec = sensor_spec(config)
    with Step('ground-truth'):
        reference, _ = geometry.sample_surface(mesh, config['chamfer_samples'],
                                               config['seed'])
    frames = []
    with Step('depth'):
        samples = depth.depthmap_to_samples(stream.depthmap,
                                            config['depth_budget'],
                                            config['sigma_depth'],
                                            config['normal_step'],
                                            config['depth_smoothing'])
        steps = [samples]
        base = base_samples(config, mesh, stream)
        if len(base):
            steps.append(base)
    frames.append(_fuse(config, graph, steps, 0, 0, reference))
    if observer is not None:
        observer(frames[-1], graph)
    for touches, obs in enumerate(stream.touches, 1):
        with Step('touch %d' % obs.timestep):
            samples = tactile.tactile_to_samples(
                obs, spec, config['tactile_budget'], config['sigma_tactile'],
                config.point_noise, step_rng(config['seed'], obs.timestep, 1))
        frames.append(_fuse(config, graph, [samples], obs.timestep, touches,
                            reference))
        if observer is not None:
            observer(frames[-1], graph)
    return frames, graph

def _fuse(config, graph, sample_sets, timestep, touches, reference):
    with Step('update %d' % timestep):
        reports = [graph.add_measurements(s, timestep) for s in sample_sets]
        result = graph.query()
    with Step('extract %d' % timestep):
        mesh = reconstruct(graph, config['support_filter'])
        cd = frame_chamfer(mesh, reference, config, timestep)
    frame = ReconstructionFrame(
        timestep, mesh, cd, sum(r.factors_added for r in reports),
        sum(r.wall_time for r in reports) * ms_per_s,
        result.wall_time * ms_per_s, touches, result.solves)
    logger.info("t=%d cd=%.3f mm2 factors=%d update=%.1f ms query=%.1f ms",
                frame.timestep, frame.cd_mm2, frame.factors, frame.update_ms,
                frame.query_ms)
    return frame

def convergence_touch(cds, tolerance=convergence_tolerance,
                      window=convergence_window):
    """First index after which the next window relative changes all stay
    under tolerance, or None."""
    cds = np.asarray(cds, dtype=np.float64)
    for t in range(len(cds) - window):
        before, after = cds[t:t + window], cds[t + 1:t + window + 1]
        with np.errstate(divide='ignore', invalid='ignore'):
            change = np.abs(after - before) / before
        if np.all(np.isfinite(change)) and np.all(change < tolerance):
            return t
    return None

def summarize(frames):
    """Run-level figures; the update time ratio is the 95th over the 5th
    percentile of per-touch update times."""
    if not frames:
        return RunSummary(float('nan'), None, 0.0, float('nan'), 0)
    touch_frames = [f for f in frames if f.touches > 0]
    factors = [f.factors for f in touch_frames]
    updates = [f.update_ms for f in touch_frames]
    converged = convergence_touch([f.cd_mm2 for f in frames])
    ratio = float('nan')
    if updates and min(updates) > 0:
        slow, fast = np.percentile(updates, [timing_percentile,
                                             100 - timing_percentile])
        ratio = float(slow / fast)
    return RunSummary(frames[-1].cd_mm2,
                      None if converged is None else frames[converged].touches,
                      float(np.median(factors)) if factors else 0.0, ratio,
                      len(frames))

def run_experiment(config, observer=None):
    """Simulates or replays a stream and maps it; returns frames, summary
    and the final graph."""
    with Step('load-mesh'):
        mesh = meshio.load_object(config.require_mesh(), config['mesh_scale'])
    if config['mode'] == 'replay':
        with Step('replay'):
            stream = load_stream(config['records'])
    else:
        with Step('simulate'):
            stream = simulate_stream(config, mesh)
        if config['record_stream']:
            with Step('record'):
                record_stream(stream, os.path.join(
                    config.output_folder(meshio.object_name(config['mesh'])),
                    'records'))
    frames, graph = map_stream(config, mesh, stream, observer=observer)
    summary = summarize(frames)
    logger.info("final cd %.3f mm2 after %d touches, converged at %s",
                summary.final_cd_mm2, len(stream.touches),
                summary.convergence_touch)
    return frames, summary, graph

def _write_csv(filename, columns, rows):
    with open(filename, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        writer.writerows(rows)

def emit_outputs(frames, folder, snapshot_interval=30, summary=None):
    """metrics.csv, timings.csv, numbered PLY snapshots and summary.txt."""
    with Step('emit'):
        if not os.path.isdir(folder):
            os.makedirs(folder)
        _write_csv(os.path.join(folder, 'metrics.csv'), metrics_columns,
                   [(f.timestep, repr(f.cd_mm2), f.factors, f.touches,
                     f.solves) for f in frames])
        _write_csv(os.path.join(folder, 'timings.csv'), timing_columns,
                   [(f.timestep, "%.3f" % f.update_ms, "%.3f" % f.query_ms)
                    for f in frames])
        written = []
        for f in frames:
            if f.touches % snapshot_interval == 0:
                filename = os.path.join(folder, "frame_%04d.ply" % f.touches)
                meshio.save_ply(f.mesh, filename)
                written.append(filename)
        summary = summary or summarize(frames)
        with open(os.path.join(folder, 'summary.txt'), 'w') as out:
            out.write("frames = %d\n" % summary.frames)
            out.write("final_cd_mm2 = %r\n" % summary.final_cd_mm2)
            out.write("convergence_touch = %s\n" %
                      ('none' if summary.convergence_touch is None else
                       summary.convergence_touch))
            out.write("median_factors = %r\n" % summary.median_factors)
            out.write("update_time_ratio = %r\n" % summary.update_time_ratio)
    return written

def compare_gp(config):
    """Fuses GT surface samples into a fresh graph and diffs it against the
    exact GP."""
    with Step('load-mesh'):
        mesh = meshio.load_object(config.require_mesh(), config['mesh_scale'])
    with Step('compare-gp'):
        points, faces = geometry.sample_surface(mesh,
                                                config['compare_samples'],
                                                config['seed'])
        samples = geometry.SampleSet(points, mesh.face_normals[faces],
                                     config['sigma_tactile'])
        graph = build_graph(config, mesh)
        graph.add_measurements(samples, 0)
        return gpsg.compare_to_full_gp(graph, samples,
                                       cap=config['full_gp_cap'])
