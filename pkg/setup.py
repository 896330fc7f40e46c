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


import glob
import os

from setuptools import setup
from setuptools.command.install import install

class LinuxInstall(install):
    """Installs the package under /usr/share/gpsg-mapping and the launcher
    under /usr/bin, the way the launcher expects to find them."""

    def finalize_options(self):
        install.finalize_options(self)
        root = self.root or '/'
        self.install_lib = os.path.join(root, "usr", "share", "gpsg-mapping")
        self.install_scripts = os.path.join(root, "usr", "bin")
        self.install_data = root

classifiers = ["Development Status :: 4 - Beta",
               "Environment :: Console",
               "Intended Audience :: Science/Research",
               "License :: OSI Approved :: GNU General Public License v3 "
               "(GPLv3)",
               "Natural Language :: English",
               "Operating System :: POSIX :: Linux",
               "Programming Language :: Python :: 3",
               "Topic :: Scientific/Engineering"]

setup(name="gpsg-mapping",
      version="0.3",
      description="Incremental tactile and depth shape mapping with a "
                  "Gaussian-process spatial graph",
      packages=["gpsg_mapping"],
      package_dir={"": os.path.join("usr", "share", "gpsg-mapping")},
      scripts=["usr/bin/gpsg-mapping"],
      keywords=["Gaussian process", "implicit surface", "tactile sensing",
                "signed distance field", "marching cubes"],
      classifiers=classifiers,
      data_files=[("etc/xdg/gpsg-mapping",
                   glob.glob("etc/xdg/gpsg-mapping/*.ini"))],
      python_requires=">=3.8",
      install_requires=["numpy", "scipy", "trimesh", "PyMCubes",
                        "opencv-python-headless", "pyxdg"],
      extras_require={"test": ["pytest"]},
      cmdclass={'install': LinuxInstall})
