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
import platform

version = "0.3"
app_name = "gpsg-mapping"

# internal units are meters; these convert on the way out
mm2_per_m2 = 1e6
ms_per_s = 1e3

if platform.system() == 'Windows':
    config_folder = os.path.join(os.getenv("APPDATA", os.curdir), app_name)
    cache_folder = config_folder
    default_config_folder = os.path.join(os.curdir, "etc", "xdg", app_name)
else:
    import xdg.BaseDirectory
    config_folder = os.path.join(xdg.BaseDirectory.xdg_config_home, app_name)
    default_config_folder = os.path.join(os.curdir, xdg.BaseDirectory.\
                xdg_config_dirs[-1].lstrip(os.path.sep), app_name)
    cache_folder = os.path.join(xdg.BaseDirectory.xdg_cache_home, app_name)

runs_folder = os.path.join(cache_folder, "runs")
