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


import os

import numpy as np
import trimesh

from .geometry import MeshError, TriangleMesh

primitive_info = {'sphere': 1, 'box': 3, 'cylinder': 2}
mesh_formats = ('.obj', '.ply')

def check_obj(filename):
    """Rejects vertex and face records trimesh would silently reshape or
    drop, naming the line."""
    with open(filename) as f:
        for number, line in enumerate(f, 1):
            fields = line.split()
            if not fields or fields[0] not in ('v', 'f'):
                continue
            try:
                if fields[0] == 'v':
                    values = [float(x) for x in fields[1:]]
                else:
                    values = [int(x.split('/')[0]) for x in fields[1:]]
            except ValueError:
                values = []
            if len(values) < 3 or (fields[0] == 'f' and 0 in values):
                raise MeshError("%s line %d: %r" % (filename, number,
                                                    line.strip()))

def load_mesh(filename, scale=1.0):
    """Reads an OBJ or PLY file, scaling coordinates into meters."""
    if not os.path.isfile(filename):
        raise MeshError("no such file: %s" % filename)
    extension = os.path.splitext(filename)[1].lower()
    if extension not in mesh_formats:
        raise MeshError("unsupported mesh format: %s" % filename)
    if extension == '.obj':
        check_obj(filename)
    try:
        loaded = trimesh.load(filename, file_type=extension[1:],
                              force='mesh', process=False)
        vertices = np.asarray(loaded.vertices, dtype=np.float64)
        faces = np.asarray(loaded.faces, dtype=np.int64)
    except Exception as e:
        raise MeshError("%s: %s" % (filename, e))
    if len(vertices) == 0 or len(faces) == 0:
        raise MeshError("empty mesh: %s" % filename)
    try:
        mesh = TriangleMesh(vertices * scale, faces)
    except ValueError as e:
        raise MeshError("%s: %s" % (filename, e))
    degenerate = mesh.degenerate_faces()
    if len(degenerate):
        raise MeshError("%s: %d degenerate faces, first is face %d" %
                        (filename, len(degenerate), degenerate[0]))
    return mesh

def save_ply(mesh, filename, binary=True):
    """Writes vertices, faces and the per-vertex "uncertainty" attribute."""
    exported = trimesh.Trimesh(mesh.vertices, mesh.faces, process=False)
    if mesh.attribute is not None:
        exported.vertex_attributes['uncertainty'] = \
            np.asarray(mesh.attribute, dtype=np.float32)
    data = trimesh.exchange.ply.export_ply(
        exported, encoding='binary' if binary else 'ascii',
        vertex_normal=False, include_attributes=True)
    with open(filename, 'wb') as f:
        f.write(data)

def _from_trimesh(created):
    return TriangleMesh(created.vertices, created.faces)

def icosphere(radius, subdivisions=3, center=(0, 0, 0)):
    return _from_trimesh(trimesh.creation.icosphere(subdivisions=subdivisions,
                                                    radius=radius).
                         apply_translation(center))

def box(extents, center=(0, 0, 0)):
    return _from_trimesh(trimesh.creation.box(extents=extents).
                         apply_translation(center))

def cylinder(radius, height, sections=64, center=(0, 0, 0)):
    return _from_trimesh(trimesh.creation.cylinder(radius=radius,
                                                   height=height,
                                                   sections=sections).
                         apply_translation(center))

def parse_primitive(description):
    """'sphere:R', 'box:X,Y,Z' or 'cylinder:R,H' to (kind, sizes), or None."""
    kind, _, sizes = description.partition(':')
    if kind not in primitive_info or not sizes:
        return None
    try:
        sizes = [float(x) for x in sizes.split(',')]
    except ValueError:
        raise MeshError("bad primitive sizes: %s" % description)
    if len(sizes) != primitive_info[kind] or min(sizes) <= 0:
        raise MeshError("%s needs %d positive sizes" % (kind,
                                                        primitive_info[kind]))
    return kind, sizes

def load_object(description, scale=1.0):
    """Builds a primitive from its description or loads a mesh file."""
    primitive = parse_primitive(description)
    if primitive is None:
        return load_mesh(description, scale)
    kind, sizes = primitive
    sizes = [x * scale for x in sizes]
    if kind == 'sphere':
        return icosphere(sizes[0], subdivisions=4)
    elif kind == 'box':
        return box(sizes)
    return cylinder(*sizes)

def object_name(description):
    primitive = parse_primitive(description)
    if primitive is None:
        return os.path.splitext(os.path.basename(description))[0]
    return primitive[0]
