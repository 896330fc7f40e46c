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
import logging
import struct
import time
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .kernel import (KernelParams, full_gp_posterior, observation_arrays,
                     paired_blocks)

logger = logging.getLogger(__name__)

eigen_floor = 1e-10
checkpoint_magic = b"GPSGRAPH"
checkpoint_version = 2

class GraphError(Exception):
    def __init__(self, value):
        self.value = value

    def __str__(self):
        return "Error In Spatial Graph - %s" % self.value

class GridSpec(object):
    """S nodes per axis spanning bbox.

    r is radius_fraction of the side, raised to min_radius when that is
    larger.
    """

    def __init__(self, size=16, bbox=((-0.1,) * 3, (0.1,) * 3),
                 radius_fraction=0.15, side_length=None, min_radius=0.0):
        lo, hi = (np.array(b, dtype=np.float64) for b in bbox)
        if size < 2:
            raise ValueError("grid needs at least 2 nodes per axis")
        if np.any(hi <= lo):
            raise ValueError("grid bounding box is degenerate")
        if not 0 < radius_fraction < 1:
            raise ValueError("radius fraction must lie in (0, 1)")
        if min_radius < 0:
            raise ValueError("minimum radius must not be negative")
        self.size = int(size)
        self.lo, self.hi = lo, hi
        self.radius_fraction = float(radius_fraction)
        self.side_length = float(side_length if side_length is not None else
                                 max(hi[0] - lo[0], hi[1] - lo[1]))
        self.min_radius = float(min_radius)

    @classmethod
    def around(cls, lo, hi, size=16, radius_fraction=0.15, padding=0.1):
        """Workspace box padded around an object box; the side is the larger
        horizontal extent of the object.

        r never falls below one cell diagonal, so every sample reaches all
        eight corners of the cell it lies in.
        """
        lo, hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, np.float64)
        extent = hi - lo
        margin = padding * np.maximum(extent, extent.max() * 1e-3)
        lo, hi = lo - margin, hi + margin
        cell = float(np.linalg.norm((hi - lo) / max(size - 1, 1)))
        return cls(size, (lo, hi), radius_fraction,
                   max(extent[0], extent[1]), cell)

    def __repr__(self):
        return "GridSpec(%d, (%r, %r), %r, %r, %r)" % (
            self.size, self.lo.tolist(), self.hi.tolist(),
            self.radius_fraction, self.side_length, self.min_radius)

    @property
    def node_count(self):
        return self.size ** 3

    @property
    def radius(self):
        return max(self.radius_fraction * self.side_length, self.min_radius)

    @property
    def spacing(self):
        return (self.hi - self.lo) / (self.size - 1)

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def node_positions(self):
        """Node i, j, k sits at flat index (i * S + j) * S + k."""
        axes = [np.linspace(self.lo[a], self.hi[a], self.size)
                for a in range(3)]
        grid = np.meshgrid(*axes, indexing='ij')
        return np.stack(grid, axis=-1).reshape(-1, 3)

    def contains(self, points):
        points = np.asarray(points).reshape(-1, 3)
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)

class PriorSpec(object):
    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=np.float64).reshape(4)
        cov = np.array(cov, dtype=np.float64).reshape(4, 4)
        if not mean[0] > 0:
            raise ValueError("prior SDF must be positive (empty space)")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("prior covariance must be positive definite")
        self.mean, self.cov = mean, cov
        self.information_matrix = np.linalg.inv(cov)
        self.information_vector = self.information_matrix.dot(mean)

    @classmethod
    def default(cls, R, sdf=None, scale=1.0):
        """b = (sdf or R, 0, 0, 0) with the kernel's own prior covariance."""
        return cls([R if not sdf else sdf, 0, 0, 0],
                   scale * KernelParams(R).prior_block)

GaussianFactor = collections.namedtuple("GaussianFactor",
                                        "node mean cov source timestep")
UpdateReport = collections.namedtuple("UpdateReport", "timestep source "
                                      "samples dropped factors_added "
                                      "nodes_dirtied wall_time")
QueryResult = collections.namedtuple("QueryResult",
                                     "indices means covs solves wall_time")
DivergenceReport = collections.namedtuple("DivergenceReport",
                                          "observations nodes max_abs "
                                          "mean_abs differences indices "
                                          "reference")
SdfField = collections.namedtuple("SdfField", "spec mean variance touched")

def factor_moments(positions, normals, sigmas, node_positions, R):
    """Per-pair conditional of a node's [phi, grad] on one surface sample.

    All arguments are matched row by row; returns means (p, 4) and
    floored covariances (p, 4, 4) with their inverses.
    """
    cross = paired_blocks(node_positions, positions, R)
    prior = np.array([R ** 3, 6 * R, 6 * R, 6 * R])
    # k_ii + sigma^2 I is diagonal, so its inverse scales columns
    scaled = cross / (prior + np.asarray(sigmas)[:, None] ** 2)[:, None, :]
    targets = np.hstack([np.zeros((len(cross), 1)),
                         np.asarray(normals).reshape(-1, 3)])
    means = np.einsum('pij,pj->pi', scaled, targets)
    covs = np.diag(prior) - np.einsum('pij,pkj->pik', scaled, cross)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    w, v = np.linalg.eigh(covs)
    w = np.maximum(w, eigen_floor)
    covs = np.einsum('pij,pj,pkj->pik', v, w, v)
    information = np.einsum('pij,pj,pkj->pik', v, 1.0 / w, v)
    return means, covs, information

def make_factor(sample, node_position, params, node=-1, source='tactile',
                timestep=0):
    means, covs, _ = factor_moments(sample.position, sample.normal[None],
                                    [sample.noise_sigma], node_position,
                                    params.R)
    return GaussianFactor(node, means[0], covs[0], source, timestep)

class GpsgGraph(object):
    """Fixed lattice of SDF nodes, each fused from unary factors.

    Nodes share no factors, so every node's MAP is its own information-form
    product; query re-solves only nodes touched since the last query.
    """

    def __init__(self, spec, prior, params=None, keep_factors=False):
        self.spec = spec
        self.prior = prior
        self.params = params or KernelParams(spec.diagonal)
        self.positions = spec.node_positions()
        self.tree = cKDTree(self.positions)
        n = spec.node_count
        self.eta = np.tile(prior.information_vector, (n, 1))
        self.lam = np.tile(prior.information_matrix, (n, 1, 1))
        self.factor_count = np.zeros(n, dtype=np.int64)
        self.touched = np.zeros(n, dtype=bool)
        self.dirty = np.zeros(n, dtype=bool)
        self._means = np.tile(prior.mean, (n, 1))
        self._covs = np.tile(prior.cov, (n, 1, 1))
        self.measurements = []
        self.history = []
        self.total_solves = 0
        self.keep_factors = keep_factors
        self.factors = []

    def __len__(self):
        return len(self.positions)

    @property
    def radius(self):
        return self.spec.radius

    def measurement_positions(self):
        if not self.measurements:
            return np.zeros((0, 3))
        return np.vstack([s.positions for _, s in self.measurements])

    def measurement_set(self):
        """Every fused sample as one set, tagged with the first source."""
        from .geometry import SampleSet
        if not self.measurements:
            return SampleSet.empty()
        sets = [s for _, s in self.measurements]
        return SampleSet(np.vstack([s.positions for s in sets]),
                         np.vstack([s.normals for s in sets]),
                         np.concatenate([s.sigmas for s in sets]),
                         sets[0].source)

    def associate(self, positions):
        """(sample, node) pairs closer than r, sorted by sample then node."""
        groups = self.tree.query_ball_point(positions, self.radius)
        sizes = np.array([len(g) for g in groups], dtype=np.int64)
        owners = np.repeat(np.arange(len(groups)), sizes)
        if sizes.sum() == 0:
            return owners, np.zeros(0, dtype=np.int64)
        nodes = np.concatenate([np.asarray(g, dtype=np.int64)
                                for g in groups if len(g)])
        order = np.lexsort((nodes, owners))
        return owners[order], nodes[order]

    def add_measurements(self, samples, timestep):
        started = time.perf_counter()
        inside = self.spec.contains(samples.positions)
        dropped = int(len(samples) - inside.sum())
        if dropped:
            warnings.warn("dropped %d %s samples outside the workspace at "
                          "timestep %d" % (dropped, samples.source, timestep))
            samples = samples[inside]
        owners, nodes = self.associate(samples.positions)
        if len(nodes):
            means, covs, information = factor_moments(
                samples.positions[owners], samples.normals[owners],
                samples.sigmas[owners], self.positions[nodes], self.params.R)
            np.add.at(self.eta, nodes, np.einsum('pij,pj->pi', information,
                                                 means))
            np.add.at(self.lam, nodes, information)
            np.add.at(self.factor_count, nodes, 1)
            self.touched[nodes] = True
            self.dirty[nodes] = True
            if self.keep_factors:
                self.factors.extend(GaussianFactor(j, m, c, samples.source,
                                                   timestep)
                                    for j, m, c in zip(nodes, means, covs))
        self.measurements.append((timestep, samples))
        report = UpdateReport(timestep, samples.source, len(samples), dropped,
                              len(nodes), len(np.unique(nodes)),
                              time.perf_counter() - started)
        self.history.append(report)
        logger.debug("fused %d %s samples into %d factors at timestep %d",
                     len(samples), samples.source, len(nodes), timestep)
        return report

    def query(self, selection='all'):
        """Re-solves dirty nodes and returns the selected nodes' posterior."""
        if selection not in ('all', 'dirty'):
            raise GraphError("unknown node selection %r" % selection)
        started = time.perf_counter()
        dirty = np.flatnonzero(self.dirty)
        if len(dirty):
            try:
                chol = np.linalg.cholesky(self.lam[dirty])
            except np.linalg.LinAlgError:
                raise GraphError("information matrix lost positive "
                                 "definiteness")
            inv_chol = np.linalg.inv(chol)
            covs = np.einsum('pki,pkj->pij', inv_chol, inv_chol)
            self._covs[dirty] = 0.5 * (covs + covs.transpose(0, 2, 1))
            self._means[dirty] = np.einsum('pij,pj->pi', self._covs[dirty],
                                           self.eta[dirty])
            self.dirty[dirty] = False
            self.total_solves += len(dirty)
        indices = np.arange(len(self)) if selection == 'all' else dirty
        return QueryResult(indices, self._means[indices].copy(),
                           self._covs[indices].copy(), len(dirty),
                           time.perf_counter() - started)

    def sdf_field(self):
        if self.dirty.any():
            self.query()
        shape = (self.spec.size,) * 3
        return SdfField(self.spec, self._means[:, 0].reshape(shape).copy(),
                        self._covs[:, 0, 0].reshape(shape).copy(),
                        self.touched.reshape(shape).copy())

    def save(self, filename):
        spec, prior = self.spec, self.prior
        with open(filename, 'wb') as f:
            f.write(checkpoint_magic)
            f.write(struct.pack('<HI', checkpoint_version, spec.size))
            f.write(struct.pack('<9d', *(list(spec.lo) + list(spec.hi) +
                                        [spec.radius_fraction,
                                         spec.side_length, spec.min_radius])))
            f.write(struct.pack('<2d', self.params.R,
                                self.params.sigma_n_default))
            f.write(prior.mean.astype('<f8').tobytes())
            f.write(prior.cov.astype('<f8').tobytes())
            f.write(self.eta.astype('<f8').tobytes())
            f.write(self.lam.astype('<f8').tobytes())
            f.write(self.factor_count.astype('<i8').tobytes())
            f.write(self.touched.astype('u1').tobytes())

def init_graph(spec, prior, params=None, keep_factors=False):
    return GpsgGraph(spec, prior, params, keep_factors)

def _read(f, count, filename):
    data = f.read(count)
    if len(data) != count:
        raise GraphError("%s is truncated" % filename)
    return data

def load_graph(filename):
    """Restores a checkpoint; the measurement log is not part of it."""
    with open(filename, 'rb') as f:
        if _read(f, len(checkpoint_magic), filename) != checkpoint_magic:
            raise GraphError("%s is not a graph checkpoint" % filename)
        version, size = struct.unpack('<HI', _read(f, 6, filename))
        if version != checkpoint_version:
            raise GraphError("unsupported checkpoint version %d" % version)
        values = struct.unpack('<9d', _read(f, 72, filename))
        R, sigma = struct.unpack('<2d', _read(f, 16, filename))
        spec = GridSpec(size, (values[0:3], values[3:6]), *values[6:9])
        array = lambda dtype, count: np.frombuffer(
            _read(f, count * np.dtype(dtype).itemsize, filename), dtype)
        prior = PriorSpec(array('<f8', 4), array('<f8', 16).reshape(4, 4))
        graph = GpsgGraph(spec, prior, KernelParams(R, sigma))
        n = spec.node_count
        graph.eta[:] = array('<f8', 4 * n).reshape(n, 4)
        graph.lam[:] = array('<f8', 16 * n).reshape(n, 4, 4)
        graph.factor_count[:] = array('<i8', n)
        graph.touched[:] = array('u1', n).astype(bool)
    graph.dirty[:] = graph.touched
    return graph

def compare_to_full_gp(graph, observations=None, queries=None, cap=None):
    """Largest and mean |phi| gap between graph nodes and the exact GP.

    queries are node indices; by default only nodes within r of an
    observation are compared, since the rest hold the prior by construction.
    """
    if observations is None:
        observations = graph.measurement_set()
    positions, _, _ = observation_arrays(observations)
    none = np.zeros(0, dtype=np.int64)
    if len(positions) == 0:
        return DivergenceReport(0, 0, 0.0, 0.0, np.zeros(0), none,
                                np.zeros(0))
    if queries is None:
        _, nodes = graph.associate(positions)
        nodes = np.unique(nodes)
    else:
        nodes = np.unique(np.asarray(queries, dtype=np.int64))
    if len(nodes) == 0:
        return DivergenceReport(len(positions), 0, 0.0, 0.0, np.zeros(0),
                                none, np.zeros(0))
    kwargs = {} if cap is None else {'cap': cap}
    means, _ = full_gp_posterior(observations, graph.positions[nodes],
                                 graph.params, **kwargs)
    result = graph.query()
    differences = np.abs(result.means[nodes, 0] - means[:, 0])
    return DivergenceReport(len(positions), len(nodes),
                            float(differences.max()),
                            float(differences.mean()), differences, nodes,
                            means[:, 0])
