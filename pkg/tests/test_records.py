import numpy as np
import pytest

from gpsg_mapping import depth, records
from gpsg_mapping.depth import CameraIntrinsics, DepthMap
from gpsg_mapping.geometry import RigidPose
from gpsg_mapping.records import RecordError
from gpsg_mapping.tactile import TactileObservation

def touch(timestep, seed):
    rng = np.random.default_rng(seed)
    height = rng.uniform(0, 1e-3, (5, 7)).astype(np.float32)
    pose = RigidPose.from_z_axis(rng.normal(size=3) * 0.05,
                                 rng.normal(size=3), roll=rng.uniform(0, 6))
    return TactileObservation(pose, height, height > 2e-4, timestep)

def test_touch_round_trip(tmp_path):
    path = str(tmp_path / "touches.rec")
    written = [touch(t, t) for t in range(1, 4)]
    records.write_touches(path, written[:2])
    with records.TouchRecordWriter(path) as writer:
        writer.write(written[2])
    read = records.read_touches(path)
    assert [o.timestep for o in read] == [1, 2, 3]
    for a, b in zip(written, read):
        assert np.array_equal(a.heightmap, b.heightmap)
        assert np.array_equal(a.contact_mask, b.contact_mask)
        assert np.array_equal(a.pose.matrix, b.pose.matrix)
    with open(path, 'rb') as f:
        assert f.read(len(records.touch_magic)) == records.touch_magic

def test_truncated_touch_file(tmp_path):
    path = tmp_path / "touches.rec"
    records.write_touches(str(path), [touch(1, 1), touch(2, 2)])
    path.write_bytes(path.read_bytes()[:-3])
    touches = records.iter_touches(str(path))
    assert next(touches).timestep == 1
    with pytest.raises(RecordError):
        next(touches)

def test_not_a_touch_file(tmp_path):
    path = tmp_path / "touches.rec"
    path.write_bytes(b"something else entirely")
    with pytest.raises(RecordError):
        records.read_touches(str(path))
    with pytest.raises(RecordError):
        records.read_touches(str(tmp_path / "missing.rec"))

def test_depth_round_trip(tmp_path):
    intrinsics = CameraIntrinsics(420.5, 421.25, 31.5, 23.75, 64, 48)
    pose = depth.look_at([0.3, -0.4, 0.5], [0, 0, 0.05])
    values = np.random.default_rng(0).uniform(0.4, 1.2, (48, 64))
    values[:4] = 0.0
    dmap = DepthMap(pose, intrinsics, values).quantized()
    path = str(tmp_path / "depth.png")
    records.write_depthmap(dmap, path)
    read = records.read_depthmap(path)
    assert read.intrinsics == intrinsics
    assert np.array_equal(read.pose.matrix, pose.matrix)
    assert np.allclose(read.depth, dmap.depth, rtol=0, atol=1e-12)
    assert not read.valid[:4].any()
    assert records.sidecar_name(path).endswith("depth.txt")

def test_depth_out_of_range(tmp_path):
    intrinsics = CameraIntrinsics.centered(4, 3, 10.0)
    dmap = DepthMap(RigidPose(), intrinsics, np.full((3, 4), 70.0))
    with pytest.raises(RecordError):
        records.write_depthmap(dmap, str(tmp_path / "far.png"))

def test_missing_sidecar(tmp_path):
    intrinsics = CameraIntrinsics.centered(4, 3, 10.0)
    path = tmp_path / "depth.png"
    records.write_depthmap(DepthMap(RigidPose(), intrinsics,
                                    np.ones((3, 4))), str(path))
    (tmp_path / "depth.txt").write_text("fx = 10.0\n")
    with pytest.raises(RecordError):
        records.read_depthmap(str(path))
    with pytest.raises(RecordError):
        records.read_depthmap(str(tmp_path / "none.png"))
