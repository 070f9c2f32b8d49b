"""Monte-Carlo localization: particle set, likelihood field, systematic resampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .world import FREE, OCCUPIED, OccupancyGrid, Pose2D, wrap_angles
from .robot import Scan

# below this total weight the filter has lost the posterior entirely
_RESET_TOTAL = 1e-300


@dataclass
class MclParams:
    n_particles: int = 500
    sigma_hit: float = 0.15
    z_hit: float = 0.95
    z_rand: float = 0.05
    beam_step: int = 10
    sigma_v: float = 0.08
    sigma_w: float = 0.12
    sigma_init_xy: float = 0.3
    sigma_init_theta: float = 0.2


@dataclass
class Particle:
    pose: Pose2D
    weight: float


@dataclass
class LikelihoodField:
    """Per-cell Euclidean distance to the nearest occupied cell, in meters."""

    grid: OccupancyGrid
    dist: np.ndarray

    def lookup(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Distance values at world points; out-of-bounds points read as inf."""
        res = self.grid.resolution
        ix = np.floor((xs - self.grid.origin_x) / res).astype(np.int64)
        iy = np.floor((ys - self.grid.origin_y) / res).astype(np.int64)
        inside = ((ix >= 0) & (ix < self.grid.width)
                  & (iy >= 0) & (iy < self.grid.height))
        out = np.full(np.shape(xs), np.inf)
        out[inside] = self.dist[iy[inside], ix[inside]]
        return out


def build_likelihood_field(grid: OccupancyGrid) -> LikelihoodField:
    """Exact Euclidean distance transform of the occupied cells.

    Distances are between cell centers, so occupied cells read exactly 0.
    Raises on a grid without any occupied cell: the measurement model would
    be uninformative everywhere.
    """
    occupied = grid.cells == OCCUPIED
    if not occupied.any():
        raise ValueError("grid has no occupied cells; likelihood field undefined")
    dist = ndimage.distance_transform_edt(~occupied) * grid.resolution
    return LikelihoodField(grid=grid, dist=dist)


@dataclass
class ParticleSet:
    """Fixed-size particle cloud stored as arrays: poses (n, 3), weights (n,)."""

    poses: np.ndarray
    weights: np.ndarray
    rng: np.random.Generator

    @property
    def n(self) -> int:
        return self.poses.shape[0]

    def particle(self, i: int) -> Particle:
        x, y, theta = self.poses[i]
        return Particle(Pose2D(float(x), float(y), float(theta)),
                        float(self.weights[i]))

    def normalize(self) -> None:
        total = self.weights.sum()
        if total <= 0:
            raise ValueError("cannot normalize all-zero weights")
        self.weights = self.weights / total


def init_gaussian(pose: Pose2D, n: int, rng: np.random.Generator,
                  sigma_xy: float, sigma_theta: float) -> ParticleSet:
    """Particles drawn around a known pose."""
    poses = np.empty((n, 3))
    poses[:, 0] = pose.x + rng.normal(0.0, sigma_xy, n)
    poses[:, 1] = pose.y + rng.normal(0.0, sigma_xy, n)
    poses[:, 2] = wrap_angles(pose.theta + rng.normal(0.0, sigma_theta, n))
    return ParticleSet(poses, np.full(n, 1.0 / n), rng)


def init_uniform(grid: OccupancyGrid, n: int, rng: np.random.Generator) -> ParticleSet:
    """Particles uniform over free space with uniform heading."""
    centers = grid.free_cell_centers()
    if centers.shape[0] == 0:
        raise ValueError("grid has no free cells")
    picks = rng.integers(0, centers.shape[0], size=n)
    jitter = rng.uniform(-0.5, 0.5, size=(n, 2)) * grid.resolution
    poses = np.empty((n, 3))
    poses[:, :2] = centers[picks] + jitter
    poses[:, 2] = rng.uniform(-math.pi, math.pi, size=n)
    return ParticleSet(poses, np.full(n, 1.0 / n), rng)


def _step_poses(poses: np.ndarray, v: np.ndarray, w: np.ndarray,
                dt: float) -> np.ndarray:
    """Vectorized exact-arc unicycle step for an (n, 3) pose array."""
    theta0 = poses[:, 2]
    theta1 = theta0 + w * dt
    straight = np.abs(w) < 1e-10
    safe_w = np.where(straight, 1.0, w)
    radius = v / safe_w
    dx = np.where(straight, v * dt * np.cos(theta0),
                  radius * (np.sin(theta1) - np.sin(theta0)))
    dy = np.where(straight, v * dt * np.sin(theta0),
                  -radius * (np.cos(theta1) - np.cos(theta0)))
    out = np.empty_like(poses)
    out[:, 0] = poses[:, 0] + dx
    out[:, 1] = poses[:, 1] + dy
    out[:, 2] = wrap_angles(theta1)
    return out


def motion_update(pset: ParticleSet, odom: tuple[float, float, float],
                  params: MclParams) -> None:
    """Propagate every particle through the odometry twist with per-particle
    Gaussian perturbations on (v, w).  Weights are unchanged."""
    v0, w0, dt = odom
    if dt == 0.0:
        return
    if params.sigma_v > 0:
        v = v0 + pset.rng.normal(0.0, params.sigma_v, pset.n)
    else:
        v = np.full(pset.n, v0)
    if params.sigma_w > 0:
        w = w0 + pset.rng.normal(0.0, params.sigma_w, pset.n)
    else:
        w = np.full(pset.n, w0)
    pset.poses = _step_poses(pset.poses, v, w, dt)


def measurement_update(pset: ParticleSet, scan: Scan, lfield: LikelihoodField,
                       params: MclParams) -> bool:
    """Reweight particles against the likelihood field.

    Per subsampled beam the factor is
        z_hit * Gauss(dist(endpoint); 0, sigma_hit) + z_rand / max_range
    multiplied into the prior weight.  Max-range beams carry no information
    and are skipped.  If the total weight underflows (< 1e-300) the filter
    reinitializes uniformly over free space; returns True in that case.
    """
    idx = np.arange(0, scan.angles.shape[0], params.beam_step)
    returned = scan.ranges[idx] < scan.max_range - 1e-9
    idx = idx[returned]
    if idx.size > 0:
        angles = scan.angles[idx]
        ranges = scan.ranges[idx]
        theta = pset.poses[:, 2:3] + angles[None, :]
        ex = pset.poses[:, 0:1] + ranges[None, :] * np.cos(theta)
        ey = pset.poses[:, 1:2] + ranges[None, :] * np.sin(theta)
        d = lfield.lookup(ex, ey)
        norm = 1.0 / (params.sigma_hit * math.sqrt(2.0 * math.pi))
        hit = np.zeros_like(d)
        finite = np.isfinite(d)
        hit[finite] = norm * np.exp(-0.5 * (d[finite] / params.sigma_hit) ** 2)
        factors = params.z_hit * hit + params.z_rand / scan.max_range
        with np.errstate(divide="ignore"):
            log_w = np.sum(np.log(factors), axis=1)
        pset.weights = pset.weights * np.exp(log_w)
    total = pset.weights.sum()
    if total < _RESET_TOTAL:
        fresh = init_uniform(lfield.grid, pset.n, pset.rng)
        pset.poses = fresh.poses
        pset.weights = fresh.weights
        return True
    pset.weights = pset.weights / total
    return False


def neff(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) for normalized weights."""
    return float(1.0 / np.sum(np.square(weights)))


def systematic_resample(weights: np.ndarray, n: int, offset: float) -> np.ndarray:
    """Systematic (low-variance) resampling: indices selected by n evenly
    spaced pointers (offset + k) / n over the cumulative weights."""
    if not 0.0 <= offset < 1.0:
        raise ValueError("offset must be in [0, 1)")
    positions = (offset + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard against rounding at the top end
    return np.searchsorted(cumulative, positions, side="right")


def resample(pset: ParticleSet) -> bool:
    """Resample in place when N_eff drops below n/2; returns True if it ran."""
    if neff(pset.weights) >= pset.n / 2.0:
        return False
    offset = float(pset.rng.random())
    idx = systematic_resample(pset.weights, pset.n, offset)
    pset.poses = pset.poses[idx].copy()
    pset.weights = np.full(pset.n, 1.0 / pset.n)
    return True


def estimate(pset: ParticleSet) -> tuple[Pose2D, np.ndarray]:
    """Weighted mean pose (circular mean for heading) and 3x3 covariance.

    Heading residuals are wrapped, so the covariance stays meaningful near
    the +/-pi seam.
    """
    w = pset.weights
    mx = float(np.dot(w, pset.poses[:, 0]))
    my = float(np.dot(w, pset.poses[:, 1]))
    sin_t = float(np.dot(w, np.sin(pset.poses[:, 2])))
    cos_t = float(np.dot(w, np.cos(pset.poses[:, 2])))
    mtheta = math.atan2(sin_t, cos_t)
    res = np.empty_like(pset.poses)
    res[:, 0] = pset.poses[:, 0] - mx
    res[:, 1] = pset.poses[:, 1] - my
    res[:, 2] = wrap_angles(pset.poses[:, 2] - mtheta)
    cov = (res * w[:, None]).T @ res
    return Pose2D(mx, my, mtheta), cov
