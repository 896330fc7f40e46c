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
# Thin-plate covariance over [phi, d/dx, d/dy, d/dz] and the exact GP
# posterior it defines.

import numpy as np
import scipy.linalg

default_cap = 2000

class GpError(Exception):
    def __init__(self, value):
        self.value = value

    def __str__(self):
        return "Error Solving GP - %s" % self.value

class KernelParams(object):
    def __init__(self, R, sigma_n_default=5e-4):
        if not R > 0 or not sigma_n_default > 0:
            raise ValueError("kernel scale and default noise must be positive")
        self.R = float(R)
        self.sigma_n_default = float(sigma_n_default)

    def __repr__(self):
        return "KernelParams(R=%r, sigma_n_default=%r)" % (self.R,
                                                          self.sigma_n_default)

    @property
    def prior_block(self):
        R = self.R
        return np.diag([R ** 3, 6 * R, 6 * R, 6 * R])

class GpObservation(object):
    """A surface point: phi target 0 and the unit outward normal."""

    def __init__(self, position, normal, sigma_n):
        normal = np.asarray(normal, dtype=np.float64)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-6:
            raise ValueError("observation normal must be a unit vector")
        if sigma_n < 0:
            raise ValueError("observation noise must not be negative")
        self.position = np.asarray(position, dtype=np.float64)
        self.target = np.r_[0.0, normal]
        self.sigma_n = float(sigma_n)

def observation_arrays(observations):
    """Positions, targets and noise from observations or a sample set."""
    if hasattr(observations, 'positions'):
        positions = np.asarray(observations.positions).reshape(-1, 3)
        targets = np.hstack([np.zeros((len(positions), 1)),
                             np.asarray(observations.normals).reshape(-1, 3)])
        return positions, targets, np.asarray(observations.sigmas)
    observations = list(observations)
    if not observations:
        return np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0)
    return (np.array([o.position for o in observations]),
            np.array([o.target for o in observations]),
            np.array([o.sigma_n for o in observations]))

def thin_plate(d, R):
    return 2 * d ** 3 - 3 * R * d ** 2 + R ** 3

def kernel_blocks(xa, xb, R):
    """Covariance blocks between every point of xa and every point of xb.

    Returns an (n, m, 4, 4) array; block [a, b] is cov([phi, grad phi](xa),
    [phi, grad phi](xb)).
    """
    xa = np.asarray(xa, dtype=np.float64).reshape(-1, 3)
    xb = np.asarray(xb, dtype=np.float64).reshape(-1, 3)
    return _blocks(xa[:, None, :] - xb[None, :, :], R)

def paired_blocks(xa, xb, R):
    """Blocks for matched rows of xa and xb, shape (n, 4, 4)."""
    xa = np.asarray(xa, dtype=np.float64).reshape(-1, 3)
    xb = np.asarray(xb, dtype=np.float64).reshape(-1, 3)
    return _blocks(xa - xb, R)

def _blocks(r, R):
    d = np.linalg.norm(r, axis=-1)
    g = 6 * (d - R)
    blocks = np.empty(d.shape + (4, 4))
    blocks[..., 0, 0] = thin_plate(d, R)
    blocks[..., 0, 1:] = -g[..., None] * r
    blocks[..., 1:, 0] = g[..., None] * r
    safe = np.where(d > 0, d, 1.0)
    outer = r[..., :, None] * r[..., None, :] / safe[..., None, None]
    blocks[..., 1:, 1:] = -6 * outer - g[..., None, None] * np.eye(3)
    return blocks

def kernel_block(xi, xj, params):
    return kernel_blocks(xi, xj, params.R)[0, 0]

def _as_matrix(blocks):
    n, m = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(4 * n, 4 * m)

def full_gp_posterior(observations, queries, params, cap=default_cap):
    """Zero-mean GP posterior mean (q, 4) and covariance (q, 4, 4)."""
    positions, targets, sigmas = observation_arrays(observations)
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    prior = params.prior_block
    if len(positions) == 0:
        return np.zeros((len(queries), 4)), np.tile(prior, (len(queries), 1, 1))
    if cap is not None and len(positions) > cap:
        raise GpError("%d observations exceed the cap of %d" %
                      (len(positions), cap))
    K = _as_matrix(kernel_blocks(positions, positions, params.R))
    K[np.diag_indices_from(K)] += np.repeat(sigmas ** 2, 4)
    try:
        factor = scipy.linalg.cho_factor(K, lower=True)
    except np.linalg.LinAlgError as e:
        raise GpError("covariance is not positive definite (%s)" % e)
    cross = kernel_blocks(queries, positions, params.R)
    cross = cross.transpose(0, 2, 1, 3).reshape(len(queries), 4, -1)
    alpha = scipy.linalg.cho_solve(factor, targets.reshape(-1))
    means = cross.dot(alpha)
    solved = scipy.linalg.cho_solve(factor, cross.reshape(-1, K.shape[0]).T)
    solved = solved.T.reshape(cross.shape)
    covs = prior - np.einsum('qaj,qbj->qab', cross, solved)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    return means, covs
