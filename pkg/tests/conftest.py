import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)),
                                os.pardir, "usr", "share", "gpsg-mapping"))

from gpsg_mapping import meshio
from gpsg_mapping.geometry import TriangleMesh

@pytest.fixture
def unit_cube():
    return meshio.box((1.0, 1.0, 1.0))

@pytest.fixture(scope="session")
def unit_sphere():
    return meshio.icosphere(1.0, subdivisions=3)

@pytest.fixture(scope="session")
def small_sphere():
    return meshio.icosphere(0.05, subdivisions=4)

@pytest.fixture(scope="session")
def cylinder():
    return meshio.cylinder(0.04, 0.12, sections=64)

@pytest.fixture
def random_soup():
    rng = np.random.default_rng(7)
    centres = rng.uniform(-1, 1, (500, 1, 3))
    return TriangleMesh((centres + rng.normal(0, 0.15, (500, 3, 3))).
                        reshape(-1, 3), np.arange(1500).reshape(-1, 3))

def write_obj(path, vertices, faces):
    with open(path, 'w') as f:
        for v in vertices:
            f.write("v %.17g %.17g %.17g\n" % tuple(v))
        for face in faces:
            f.write("f %d %d %d\n" % tuple(i + 1 for i in face))
    return str(path)
