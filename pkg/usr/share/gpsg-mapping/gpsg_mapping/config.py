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


import configparser
import os

from .constants import config_folder, default_config_folder, runs_folder

class ConfigError(Exception):
    def __init__(self, value):
        self.value = value

    def __str__(self):
        return "Error Reading Configuration - %s" % self.value

def yes_no(value):
    if isinstance(value, bool):
        return value
    lowered = str(value).strip().lower()
    if lowered in ('yes', 'true', 'on', '1'):
        return True
    if lowered in ('no', 'false', 'off', '0'):
        return False
    raise ValueError("expected yes or no, got %r" % value)

# key: (section, type, default, help)
option_info = {
    'mesh': ('object', str, '', "mesh file, or sphere:R, box:X,Y,Z, "
             "cylinder:R,H"),
    'mesh_scale': ('object', float, 1.0, "factor taking mesh units to m"),
    'grid_size': ('grid', int, 16, "query nodes per axis"),
    'radius_fraction': ('grid', float, 0.15, "association radius as a "
                        "fraction of the object side"),
    'bbox_padding': ('grid', float, 0.1, "workspace margin as a fraction of "
                     "the object extent"),
    'kernel_scale': ('kernel', float, 0.0, "thin-plate R in m, 0 for the "
                     "workspace diagonal"),
    'prior_sdf': ('prior', float, 0.0, "prior SDF in m, 0 for R"),
    'prior_scale': ('prior', float, 1.0, "multiplier on the prior "
                    "covariance"),
    'sigma_tactile': ('noise', float, 5e-4, "tactile sample noise in m"),
    'sigma_depth': ('noise', float, 5e-3, "depth sample and render noise "
                    "in m"),
    'pixel_noise': ('noise', float, 5e-5, "height-map pixel noise in m"),
    'tactile_point_noise': ('noise', float, -1.0, "tactile point noise in m, "
                            "negative for sigma_tactile"),
    'pose_noise_translation': ('noise', float, 0.0, "reported sensor pose "
                               "noise in m"),
    'pose_noise_rotation': ('noise', float, 0.0, "reported sensor pose "
                            "noise in rad"),
    'sensor_width_px': ('sensor', int, 640, "height-map columns"),
    'sensor_height_px': ('sensor', int, 480, "height-map rows"),
    'patch_width': ('sensor', float, 0.01883, "gel patch width in m"),
    'patch_height': ('sensor', float, 0.01412, "gel patch height in m"),
    'max_depth': ('sensor', float, 0.001, "gel penetration cap in m"),
    'press_depth': ('sensor', float, 0.0005, "press into the surface in m"),
    'contact_threshold': ('sensor', float, 1e-5, "contact mask threshold "
                          "in m"),
    'exploration': ('exploration', str, 'uniform', "uniform or ring"),
    'touches': ('exploration', int, 60, "touch count"),
    'ring_angles': ('exploration', int, 8, "ring approach angles"),
    'ring_heights': ('exploration', int, 5, "ring heights"),
    'hallucinate_base': ('exploration', yes_no, False, "add samples on the "
                         "bottom plane below the lowest ring"),
    'camera_width': ('camera', int, 640, "depth image columns"),
    'camera_height': ('camera', int, 480, "depth image rows"),
    'camera_focal': ('camera', float, 525.0, "focal length in px"),
    'camera_distance': ('camera', float, 1.0, "distance to the object "
                        "centre in m"),
    'camera_elevation': ('camera', float, 35.0, "degrees above the "
                         "horizon"),
    'camera_azimuth': ('camera', float, 0.0, "degrees about z"),
    'depth_smoothing': ('camera', float, 2.0, "smoothing for depth normals "
                        "in px"),
    'normal_step': ('camera', int, 3, "neighbour offset for depth normals "
                    "in px"),
    'tactile_budget': ('decimation', int, 60, "samples per touch"),
    'depth_budget': ('decimation', int, 500, "samples from the depth map"),
    'support_filter': ('evaluation', yes_no, True, "drop surface on edges "
                       "reaching untouched nodes"),
    'chamfer_samples': ('evaluation', int, 10000, "surface samples per "
                        "mesh"),
    'full_gp_cap': ('evaluation', int, 2000, "observation cap for the full "
                    "GP"),
    'compare_samples': ('evaluation', int, 200, "samples fused by "
                        "compare-gp"),
    'snapshot_interval': ('output', int, 30, "touches between mesh "
                          "snapshots"),
    'output_dir': ('output', str, '', "output folder, empty for the cache"),
    'seed': ('output', int, 0, "random seed"),
    'mode': ('output', str, 'sim', "sim or replay"),
    'records': ('output', str, '', "recorded stream folder for replay"),
    'record_stream': ('output', yes_no, True, "write the simulated stream"),
}

option_choices = {'exploration': ('uniform', 'ring'),
                  'mode': ('sim', 'replay')}

positive_options = ('grid_size', 'mesh_scale', 'sensor_width_px',
                    'sensor_height_px', 'patch_width', 'patch_height',
                    'max_depth', 'press_depth', 'contact_threshold',
                    'sigma_tactile', 'sigma_depth', 'ring_angles',
                    'ring_heights', 'camera_width', 'camera_height',
                    'camera_focal', 'camera_distance', 'normal_step',
                    'tactile_budget', 'depth_budget', 'chamfer_samples',
                    'full_gp_cap', 'compare_samples', 'snapshot_interval')

class ExperimentConfig(dict):
    """Every option from option_info, typed.

    Later sources override earlier ones: defaults, the user config file,
    the given files, then explicit overrides.
    """

    filename = 'config.ini'

    def __init__(self, filenames=(), overrides=None, user_defaults=True):
        super(ExperimentConfig, self).__init__(
            (key, info[2]) for key, info in option_info.items())
        if user_defaults:
            for folder in (config_folder, default_config_folder):
                defaults = os.path.join(folder, self.filename)
                if os.path.isfile(defaults):
                    self.load(defaults)
                    break
        for filename in filenames:
            self.load(filename)
        for key, value in (overrides or {}).items():
            if value is not None:
                self.set(key, value)
        self.validate()

    def set(self, key, value):
        if key not in option_info:
            raise ConfigError("unknown option %r" % key)
        try:
            self[key] = option_info[key][1](value)
        except ValueError as e:
            raise ConfigError("bad value for %s: %s" % (key, e))

    def load(self, filename):
        if not os.path.isfile(filename):
            raise ConfigError("no such config file: %s" % filename)
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(filename)
        except configparser.Error as e:
            raise ConfigError("%s: %s" % (filename, e))
        for section in parser.sections():
            for key, value in parser.items(section):
                if key in option_info and option_info[key][0] != section:
                    raise ConfigError("%s belongs in [%s], not [%s]" %
                                      (key, option_info[key][0], section))
                self.set(key, value)
        base = os.path.dirname(os.path.abspath(filename))
        for key in ('mesh', 'records'):
            if parser.has_option(option_info[key][0], key):
                self[key] = self._resolve(self[key], base)

    @staticmethod
    def _resolve(value, base):
        if not value or ':' in value or os.path.isabs(value):
            return value
        return os.path.join(base, value)

    def validate(self):
        for key, choices in option_choices.items():
            if self[key] not in choices:
                raise ConfigError("%s must be one of %s" %
                                  (key, ", ".join(choices)))
        for key in positive_options:
            if not self[key] > 0:
                raise ConfigError("%s must be positive" % key)
        if not 0 < self['radius_fraction'] < 1:
            raise ConfigError("radius_fraction must lie in (0, 1)")
        if self['seed'] < 0:
            raise ConfigError("seed must not be negative")
        if self['touches'] < 0:
            raise ConfigError("touches must not be negative")
        if self['grid_size'] < 2:
            raise ConfigError("grid_size must be at least 2")
        if self['mode'] == 'replay' and not self['records']:
            raise ConfigError("replay needs a records folder")
        if self['records'] and self['mode'] == 'replay' and \
                not os.path.isdir(self['records']):
            raise ConfigError("no such records folder: %s" % self['records'])
        mesh = self['mesh']
        if mesh and ':' not in mesh and not os.path.isfile(mesh):
            raise ConfigError("no such mesh file: %s" % mesh)

    def require_mesh(self):
        if not self['mesh']:
            raise ConfigError("no mesh configured")
        return self['mesh']

    @property
    def point_noise(self):
        noise = self['tactile_point_noise']
        return self['sigma_tactile'] if noise < 0 else noise

    def output_folder(self, name):
        if self['output_dir']:
            return self['output_dir']
        return os.path.join(runs_folder, "%s-seed%d" % (name, self['seed']))

    def save(self, filename):
        parser = configparser.ConfigParser(interpolation=None)
        for key in sorted(option_info, key=lambda k: option_info[k][0]):
            section = option_info[key][0]
            if not parser.has_section(section):
                parser.add_section(section)
            value = self[key]
            if isinstance(value, bool):
                value = 'yes' if value else 'no'
            parser.set(section, key, str(value))
        with open(filename, 'w') as f:
            parser.write(f)
