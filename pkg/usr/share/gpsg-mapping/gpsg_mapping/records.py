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

#
# Touch records: a magic header, then per touch
#   int32 timestep | 12 float64 pose, row major | uint32 rows, cols |
#   float32 height-map | packed contact bits
# all little endian. Depth maps: 16-bit millimetre PNG plus a key=value
# sidecar with the camera.

import os
import struct

import cv2
import numpy as np

from .depth import CameraIntrinsics, DepthMap, depth_unit
from .geometry import RigidPose
from .tactile import TactileObservation

touch_magic = b"GPSGTOUCH1\n"
sidecar_keys = ('fx', 'fy', 'cx', 'cy', 'width', 'height', 'pose',
                'depth_unit')

class RecordError(Exception):
    def __init__(self, value):
        self.value = value

    def __str__(self):
        return "Error Reading Records - %s" % self.value

class TouchRecordWriter(object):
    """Appends touches to a record file, writing the header once."""

    def __init__(self, filename):
        self.filename = filename
        self._file = open(filename, 'ab')
        if self._file.tell() == 0:
            self._file.write(touch_magic)

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    def write(self, obs):
        rows, cols = obs.heightmap.shape
        self._file.write(struct.pack('<i', obs.timestep))
        self._file.write(obs.pose.row_major().astype('<f8').tobytes())
        self._file.write(struct.pack('<II', rows, cols))
        self._file.write(obs.heightmap.astype('<f4').tobytes())
        self._file.write(np.packbits(obs.contact_mask.ravel()).tobytes())

    def close(self):
        self._file.close()

def write_touches(filename, observations):
    with TouchRecordWriter(filename) as writer:
        for obs in observations:
            writer.write(obs)

def _take(f, count, filename):
    data = f.read(count)
    if len(data) != count:
        raise RecordError("%s ends inside a record" % filename)
    return data

def iter_touches(filename):
    if not os.path.isfile(filename):
        raise RecordError("no such record file: %s" % filename)
    with open(filename, 'rb') as f:
        if f.read(len(touch_magic)) != touch_magic:
            raise RecordError("%s is not a touch record file" % filename)
        while True:
            head = f.read(4)
            if not head:
                return
            if len(head) != 4:
                raise RecordError("%s ends inside a record" % filename)
            timestep, = struct.unpack('<i', head)
            pose = np.frombuffer(_take(f, 96, filename), '<f8')
            rows, cols = struct.unpack('<II', _take(f, 8, filename))
            cells = rows * cols
            height = np.frombuffer(_take(f, 4 * cells, filename), '<f4')
            bits = np.frombuffer(_take(f, (cells + 7) // 8, filename), 'u1')
            mask = np.unpackbits(bits)[:cells].astype(bool)
            try:
                yield TactileObservation(RigidPose.from_row_major(pose),
                                         height.reshape(rows, cols),
                                         mask.reshape(rows, cols), timestep)
            except ValueError as e:
                raise RecordError("bad touch %d in %s: %s" %
                                  (timestep, filename, e))

def read_touches(filename):
    return list(iter_touches(filename))

def sidecar_name(png_filename):
    return os.path.splitext(png_filename)[0] + ".txt"

def write_depthmap(dmap, png_filename):
    """Whole millimetres in a 16-bit PNG; the camera goes in the sidecar."""
    millimetres = np.round(dmap.depth / depth_unit)
    if millimetres.max(initial=0) > np.iinfo(np.uint16).max:
        raise RecordError("depths beyond %d mm do not fit a 16-bit PNG" %
                          np.iinfo(np.uint16).max)
    if not cv2.imwrite(png_filename, millimetres.astype(np.uint16)):
        raise RecordError("could not write %s" % png_filename)
    k = dmap.intrinsics
    values = {'fx': repr(k.fx), 'fy': repr(k.fy), 'cx': repr(k.cx),
              'cy': repr(k.cy), 'width': str(k.width),
              'height': str(k.height),
              'pose': " ".join(repr(float(x)) for x in dmap.pose.row_major()),
              'depth_unit': repr(depth_unit)}
    with open(sidecar_name(png_filename), 'w') as f:
        for key in sidecar_keys:
            f.write("%s = %s\n" % (key, values[key]))

def read_depthmap(png_filename):
    image = cv2.imread(png_filename, cv2.IMREAD_UNCHANGED)
    if image is None:
        raise RecordError("could not read depth image %s" % png_filename)
    if image.dtype != np.uint16 or image.ndim != 2:
        raise RecordError("%s is not a 16-bit single channel image" %
                          png_filename)
    values = {}
    try:
        with open(sidecar_name(png_filename)) as f:
            for line in f:
                if line.strip():
                    key, _, value = line.partition('=')
                    values[key.strip()] = value.strip()
    except IOError as e:
        raise RecordError("missing camera sidecar: %s" % e)
    missing = [key for key in sidecar_keys if key not in values]
    if missing:
        raise RecordError("sidecar lacks %s" % ", ".join(missing))
    try:
        intrinsics = CameraIntrinsics(float(values['fx']), float(values['fy']),
                                      float(values['cx']), float(values['cy']),
                                      int(values['width']),
                                      int(values['height']))
        pose = RigidPose.from_row_major([float(x) for x in
                                         values['pose'].split()])
        unit = float(values['depth_unit'])
        return DepthMap(pose, intrinsics, image.astype(np.float64) * unit)
    except ValueError as e:
        raise RecordError("bad camera sidecar for %s: %s" % (png_filename, e))
