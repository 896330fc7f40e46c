import math
import os

import numpy as np
import pytest
from scipy.spatial import cKDTree

from gpsg_mapping import gpsg_mapping, runner
from gpsg_mapping.config import ConfigError, ExperimentConfig
from gpsg_mapping.geometry import TriangleMesh
from gpsg_mapping.runner import ReconstructionFrame, Step, StepError

small_run = """
[object]
mesh = sphere:0.05
[grid]
grid_size = 12
[noise]
sigma_depth = 0.002
[sensor]
sensor_width_px = 80
sensor_height_px = 60
[exploration]
touches = 6
[camera]
camera_width = 64
camera_height = 48
camera_focal = 200
camera_distance = 0.4
[decimation]
depth_budget = 200
[evaluation]
chamfer_samples = 2000
compare_samples = 100
[output]
snapshot_interval = 3
seed = 4
"""

def write_run(tmp_path, text=small_run, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)

def small_config(tmp_path, **overrides):
    overrides.setdefault('output_dir', str(tmp_path / "out"))
    return ExperimentConfig([write_run(tmp_path)], overrides,
                            user_defaults=False)

@pytest.fixture(scope="module")
def small_experiment(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("run")
    config = small_config(tmp_path)
    frames, summary, graph = runner.run_experiment(config)
    return config, frames, summary, graph

def test_frames_per_step(small_experiment):
    config, frames, summary, graph = small_experiment
    assert len(frames) == config['touches'] + 1
    assert [f.touches for f in frames] == list(range(len(frames)))
    assert frames[0].timestep == 0
    assert all(f.factors > 0 and f.solves > 0 for f in frames)
    assert all(math.isfinite(f.cd_mm2) for f in frames)
    assert summary.frames == len(frames)
    assert summary.final_cd_mm2 == frames[-1].cd_mm2

def test_touches_improve_the_map(small_experiment):
    _, frames, _, graph = small_experiment
    assert frames[-1].cd_mm2 < frames[0].cd_mm2
    sources = [report.source for report in graph.history]
    assert sources[0] == 'depth'
    assert sources.count('tactile') == 6

def test_frames_carry_uncertainty(small_experiment):
    _, frames, _, _ = small_experiment
    mesh = frames[-1].mesh
    assert not mesh.is_empty
    assert len(mesh.attribute) == len(mesh.vertices)
    assert np.all(mesh.attribute >= 0)

def test_stream_is_recorded(small_experiment):
    config, _, _, _ = small_experiment
    folder = os.path.join(config['output_dir'], 'records')
    stream = runner.load_stream(folder)
    assert len(stream.touches) == config['touches']
    assert stream.depthmap.valid.any()

def test_replay_matches_the_simulated_run(tmp_path):
    config = small_config(tmp_path, output_dir=str(tmp_path / "sim"))
    frames, summary, _ = runner.run_experiment(config)
    runner.emit_outputs(frames, config['output_dir'], 3, summary)
    replay = small_config(tmp_path, output_dir=str(tmp_path / "replay"),
                          mode='replay', record_stream=False,
                          records=str(tmp_path / "sim" / "records"))
    frames, summary, _ = runner.run_experiment(replay)
    runner.emit_outputs(frames, replay['output_dir'], 3, summary)
    read = lambda folder: open(os.path.join(folder, "metrics.csv"),
                               'rb').read()
    assert read(config['output_dir']) == read(replay['output_dir'])
    assert not os.path.exists(os.path.join(replay['output_dir'], 'records'))

def test_simulation_is_seeded(tmp_path):
    config = small_config(tmp_path)
    mesh = runner.meshio.load_object(config['mesh'])
    a = runner.simulate_stream(config, mesh)
    b = runner.simulate_stream(config, mesh)
    assert np.array_equal(a.depthmap.depth, b.depthmap.depth)
    assert all(np.array_equal(x.heightmap, y.heightmap)
               for x, y in zip(a.touches, b.touches))
    config.set('seed', 5)
    c = runner.simulate_stream(config, mesh)
    assert not np.array_equal(a.depthmap.depth, c.depthmap.depth)

def test_reported_poses_are_perturbed(tmp_path):
    config = small_config(tmp_path, pose_noise_translation=1e-3, touches=2)
    mesh = runner.meshio.load_object(config['mesh'])
    noisy = runner.simulate_stream(config, mesh)
    config.set('pose_noise_translation', 0.0)
    clean = runner.simulate_stream(config, mesh)
    for a, b in zip(noisy.touches, clean.touches):
        assert np.array_equal(a.heightmap, b.heightmap)
        shift = np.linalg.norm(a.pose.translation - b.pose.translation)
        assert 0 < shift < 1e-2

def test_step_rng_streams():
    a = runner.step_rng(3, 7).normal(size=4)
    assert np.array_equal(a, runner.step_rng(3, 7).normal(size=4))
    assert not np.array_equal(a, runner.step_rng(3, 7, 1).normal(size=4))
    assert not np.array_equal(a, runner.step_rng(3, 8).normal(size=4))
    assert runner.step_seed(3, 7) == runner.step_seed(3, 7)

def frame(touches, cd, factors=100, update_ms=2.0):
    mesh = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3)),
                        attribute=np.zeros(0))
    return ReconstructionFrame(touches, mesh, cd, factors, update_ms, 1.0,
                               touches, 10)

def test_emit_outputs(tmp_path):
    frames = [frame(t, 100.0 / (t + 1)) for t in range(61)]
    written = runner.emit_outputs(frames, str(tmp_path), 30)
    assert [os.path.basename(f) for f in written] == \
        ["frame_0000.ply", "frame_0030.ply", "frame_0060.ply"]
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "timestep,cd_mm2,factors,touches,solves"
    assert lines[1] == "0,100.0,100,0,10"
    assert len(lines) == 62
    timings = (tmp_path / "timings.csv").read_text().splitlines()
    assert timings[0] == "timestep,update_ms,query_ms"
    assert timings[1] == "0,2.000,1.000"
    summary = (tmp_path / "summary.txt").read_text()
    assert "frames = 61" in summary

def test_emit_nothing(tmp_path):
    assert runner.emit_outputs([], str(tmp_path)) == []
    assert (tmp_path / "metrics.csv").read_text() == \
        "timestep,cd_mm2,factors,touches,solves\n"
    assert "convergence_touch = none" in \
        (tmp_path / "summary.txt").read_text()

def test_convergence_touch():
    cds = [100, 50, 30, 20, 20, 20, 20, 20, 20]
    assert runner.convergence_touch(cds) == 3
    assert runner.convergence_touch([100.0 * 0.9 ** t for t in range(30)]) \
        is None
    assert runner.convergence_touch([float('nan')] * 10) is None
    assert runner.convergence_touch([5.0] * 3) is None

def test_summarize():
    frames = [frame(0, 100.0, 400, 5.0)] + \
        [frame(t, 10.0, 1000 + t, 2.0 + t) for t in range(1, 11)]
    summary = runner.summarize(frames)
    assert summary.final_cd_mm2 == 10.0
    assert summary.convergence_touch == 1
    assert summary.median_factors == 1005.5
    assert summary.update_time_ratio == pytest.approx(11.55 / 3.45)
    stalled = frames[:-1] + [frame(10, 10.0, 1010, 500.0)]
    assert runner.summarize(stalled).update_time_ratio < 500.0 / 3.0
    empty = runner.summarize([])
    assert empty.frames == 0 and empty.convergence_touch is None

def test_step_relabels_errors():
    with pytest.raises(StepError) as info:
        with Step('touch 4'):
            raise ValueError("broken")
    assert info.value.step == 'touch 4'
    assert "touch 4" in str(info.value)
    with pytest.raises(ConfigError):
        with Step('load'):
            raise ConfigError("bad")

def test_compare_gp(tmp_path):
    report = runner.compare_gp(small_config(tmp_path))
    assert report.observations == 100
    assert report.nodes > 0
    assert np.isfinite(report.max_abs)

def test_cli_usage_errors(tmp_path, capsys):
    assert gpsg_mapping.main([]) == 2
    assert gpsg_mapping.main(["walk", "--config", "x.ini"]) == 2
    assert gpsg_mapping.main(["run"]) == 2
    assert gpsg_mapping.main(["replay", "--config", "x.ini"]) == 2
    bad = write_run(tmp_path, "[grid]\nsize = 3\n", "bad.ini")
    assert gpsg_mapping.main(["run", "-q", "--config", bad]) == 2
    assert "unknown option" in capsys.readouterr().err

def test_cli_step_failure(tmp_path, capsys):
    (tmp_path / "flat.obj").write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\n"
                                       "f 1 2 3\n")
    conf = write_run(tmp_path, "[object]\nmesh = flat.obj\n", "flat.ini")
    assert gpsg_mapping.main(["run", "-q", "--config", conf, "--out",
                              str(tmp_path / "out")]) == 1
    assert "load-mesh" in capsys.readouterr().err

def test_cli_run_and_checkpoint(tmp_path, capsys):
    conf = write_run(tmp_path)
    out = str(tmp_path / "cli")
    checkpoint = str(tmp_path / "graph.bin")
    assert gpsg_mapping.main(["run", "-q", "--config", conf, "--out", out,
                              "--seed", "1", "--checkpoint",
                              checkpoint]) == 0
    assert sorted(os.listdir(out)) == ["frame_0000.ply", "frame_0003.ply",
                                       "frame_0006.ply", "metrics.csv",
                                       "records", "summary.txt",
                                       "timings.csv"]
    assert runner.gpsg.load_graph(checkpoint).touched.any()
    assert gpsg_mapping.main(["compare-gp", "-q", "--config", conf]) == 0
    assert "max |phi difference|" in capsys.readouterr().out

def acceptance_config(tmp_path, mesh, seed):
    text = "[object]\nmesh = %s\n[output]\nseed = %d\n" % (mesh, seed)
    return ExperimentConfig([write_run(tmp_path, text)],
                            {'output_dir': str(tmp_path / "out"),
                             'record_stream': False}, user_defaults=False)

class TraceWatch(object):
    """Counts nodes whose covariance trace grew between frames."""

    def __init__(self):
        self.previous = None
        self.violations = 0
        self.frames = 0

    def __call__(self, frame, graph):
        trace = np.trace(graph.query().covs, axis1=1, axis2=2)
        if self.previous is not None:
            slack = 1e-9 * np.abs(self.previous).max()
            self.violations += int(np.sum(trace > self.previous + slack))
        self.previous = trace
        self.frames += 1

class SupportWatch(object):
    """Largest distance from any frame vertex to the fused measurements."""

    def __init__(self):
        self.worst = 0.0
        self.radius = None
        self.vertices = 0

    def __call__(self, frame, graph):
        self.radius = graph.radius
        if len(frame.mesh.vertices) == 0:
            return
        tree = cKDTree(graph.measurement_positions())
        distance, _ = tree.query(frame.mesh.vertices)
        self.worst = max(self.worst, float(distance.max()))
        self.vertices += len(frame.mesh.vertices)

def upper_half_run(config, observer):
    mesh = runner.meshio.load_object(config['mesh'])
    stream = runner.simulate_stream(config, mesh)
    upper = [t for t in stream.touches if t.pose.translation[2] > 0]
    assert upper
    stream = runner.MeasurementStream(stream.depthmap, upper)
    return runner.map_stream(config, mesh, stream, observer=observer)

def metrics_of(config):
    frames, summary, _ = runner.run_experiment(config)
    runner.emit_outputs(frames, config['output_dir'],
                        config['snapshot_interval'], summary)
    with open(os.path.join(config['output_dir'], "metrics.csv"), 'rb') as f:
        return f.read()

def test_zero_touches_give_the_depth_frame(tmp_path):
    config = small_config(tmp_path, touches=0, record_stream=False)
    frames, summary, graph = runner.run_experiment(config)
    assert len(frames) == 1
    assert frames[0].touches == 0 and frames[0].factors > 0
    assert [report.source for report in graph.history] == ['depth']
    assert summary.frames == 1 and summary.convergence_touch is None

def test_uncertainty_never_grows_during_a_run(tmp_path):
    watch = TraceWatch()
    frames, _, _ = runner.run_experiment(small_config(tmp_path),
                                         observer=watch)
    assert watch.frames == len(frames) == 7
    assert watch.violations == 0

def test_upper_half_surface_stays_near_measurements(tmp_path):
    watch = SupportWatch()
    upper_half_run(small_config(tmp_path), watch)
    assert watch.vertices > 0
    assert watch.worst <= watch.radius * (1 + 1e-12)

def test_default_kernel_scale_is_the_workspace_diagonal(tmp_path):
    config = small_config(tmp_path)
    mesh = runner.meshio.load_object(config['mesh'])
    graph = runner.build_graph(config, mesh)
    lo, hi = mesh.bbox
    assert graph.params.R == graph.spec.diagonal
    assert graph.params.R > np.linalg.norm(hi - lo)
    config.set('kernel_scale', 0.5)
    assert runner.build_graph(config, mesh).params.R == 0.5

def test_simulated_runs_are_byte_identical(tmp_path):
    first = small_config(tmp_path, output_dir=str(tmp_path / "first"),
                         record_stream=False)
    second = small_config(tmp_path, output_dir=str(tmp_path / "second"),
                          record_stream=False)
    assert metrics_of(first) == metrics_of(second)

def acceptance_config(tmp_path, mesh, seed):
    text = "[object]\nmesh = %s\n[output]\nseed = %d\n" % (mesh, seed)
    return ExperimentConfig([write_run(tmp_path, text)],
                            {'output_dir': str(tmp_path / "out"),
                             'record_stream': False}, user_defaults=False)

@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("mesh", ["sphere:0.05", "box:0.06,0.06,0.12"])
def test_full_exploration_converges(tmp_path, mesh, seed):
    watch = TraceWatch()
    frames, summary, _ = runner.run_experiment(
        acceptance_config(tmp_path, mesh, seed), observer=watch)
    assert frames[-1].touches == 60
    assert frames[-1].cd_mm2 <= 0.3 * frames[0].cd_mm2
    assert summary.convergence_touch is not None
    assert summary.convergence_touch <= 45
    assert 300 <= summary.median_factors <= 3000
    assert summary.update_time_ratio < 3
    assert watch.violations == 0

@pytest.mark.slow
def test_full_upper_half_surface_stays_near_measurements(tmp_path):
    watch = SupportWatch()
    frames, _ = upper_half_run(acceptance_config(tmp_path, "sphere:0.05", 0),
                               watch)
    assert len(frames) > 1 and watch.vertices > 0
    assert watch.worst <= watch.radius * (1 + 1e-12)

@pytest.mark.slow
@pytest.mark.parametrize("mesh", ["sphere:0.05", "box:0.06,0.06,0.12"])
def test_full_runs_are_byte_identical(tmp_path, mesh):
    first = acceptance_config(tmp_path, mesh, 0)
    first.set('output_dir', str(tmp_path / "first"))
    second = acceptance_config(tmp_path, mesh, 0)
    second.set('output_dir', str(tmp_path / "second"))
    assert metrics_of(first) == metrics_of(second)

def test_single_sample_agrees_with_full_gp(tmp_path):
    config = acceptance_config(tmp_path, "sphere:0.05", 0)
    config.set('compare_samples', 1)
    config.set('prior_scale', 1e6)
    report = runner.compare_gp(config)
    assert report.nodes > 0
    assert report.max_abs < 1e-6
