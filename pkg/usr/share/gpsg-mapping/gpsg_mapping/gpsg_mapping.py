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


import logging
import optparse
import os
import sys

from . import config, meshio, runner
from .constants import version

commands = ('run', 'replay', 'compare-gp')
usage = """usage: %prog run --config FILE [--seed N] [--snapshots K] [--out DIR]
       %prog replay --records DIR --config FILE
       %prog compare-gp --config FILE"""

def parse_options(argv):
    parser = optparse.OptionParser(usage=usage, version="%prog " + version)
    parser.add_option("--config", dest="config", metavar="FILE",
                      help="experiment configuration")
    parser.add_option("--seed", dest="seed", type="int", metavar="N",
                      help="random seed")
    parser.add_option("--snapshots", dest="snapshot_interval", type="int",
                      metavar="K", help="touches between mesh snapshots")
    parser.add_option("--out", dest="output_dir", metavar="DIR",
                      help="output folder")
    parser.add_option("--records", dest="records", metavar="DIR",
                      help="recorded stream to replay")
    parser.add_option("--checkpoint", dest="checkpoint", metavar="FILE",
                      help="write the final graph to FILE")
    parser.add_option("-q", dest="verbose", action="store_false",
                      default=True, help="only log warnings")
    options, args = parser.parse_args(argv)
    if len(args) != 1 or args[0] not in commands:
        parser.error("expected one command out of %s" % ", ".join(commands))
    if options.config is None:
        parser.error("%s needs --config" % args[0])
    if args[0] == 'replay' and options.records is None:
        parser.error("replay needs --records")
    return args[0], options

def load_config(command, options):
    overrides = {'seed': options.seed,
                 'snapshot_interval': options.snapshot_interval,
                 'output_dir': options.output_dir}
    if command == 'replay':
        overrides.update(mode='replay', records=options.records,
                         record_stream=False)
    return config.ExperimentConfig([options.config], overrides)

def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, options = parse_options(argv)
    except SystemExit as e:
        return e.code
    logging.basicConfig(level=logging.INFO if options.verbose else
                        logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s "
                               "%(message)s")
    logging.captureWarnings(True)
    try:
        conf = load_config(command, options)
        if command == 'compare-gp':
            report = runner.compare_gp(conf)
            print("observations: %d" % report.observations)
            print("nodes compared: %d" % report.nodes)
            print("max |phi difference|: %.6g m" % report.max_abs)
            print("mean |phi difference|: %.6g m" % report.mean_abs)
            return 0
        frames, summary, graph = runner.run_experiment(conf)
        folder = conf.output_folder(meshio.object_name(conf['mesh']))
        runner.emit_outputs(frames, folder, conf['snapshot_interval'],
                            summary)
        if options.checkpoint:
            with runner.Step('checkpoint'):
                graph.save(options.checkpoint)
        print("wrote %d frames to %s" % (len(frames), os.path.abspath(folder)))
    except config.ConfigError as e:
        sys.stderr.write("gpsg-mapping: %s\n" % e)
        return 2
    except runner.StepError as e:
        sys.stderr.write("gpsg-mapping: step '%s' failed: %s\n" %
                         (e.step, e.value))
        return 1
    return 0
