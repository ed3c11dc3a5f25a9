"""Ground-truth scene generation and measurement simulation.

Scenes are drawn from a hard-core repulsion process via sequential
inhibition; measurements per sensor state are target-originated Poisson
detections (two-stage noise: extent scatter, then sensor noise evaluated at
the scattered point) plus uniform Poisson clutter.  Points falling outside
the domain are discarded and counted.
"""

from __future__ import annotations

import logging

import numpy as np

from .model import Domain, ExtentPrior, MeasurementSet, TargetState, extent_to_covariance, sample_extent_prior
from .sensors import SensorState, detection_probability, noise_covariance_batch, resolution

__all__ = ["sample_hardcore_scene", "measurement_rate", "simulate_measurements"]

log = logging.getLogger(__name__)


def sample_hardcore_scene(
    rng: np.random.Generator,
    domain: Domain,
    intensity: float,
    radius: float,
    extent_prior: ExtentPrior,
    budget_factor: float = 100.0,
) -> list[TargetState]:
    """Draw a scene of targets whose centers are pairwise >= radius apart.

    The requested count is Poisson(intensity * |D|); centers are proposed
    uniformly and rejected within ``radius`` of an accepted center
    (sequential inhibition), with a proposal budget of
    ``budget_factor * intensity * |D|``.  If packing saturates first, the
    achieved count is reported and the partial scene returned.  Extents are
    i.i.d. draws from the prior.
    """
    if radius <= 0:
        raise ValueError("hard-core radius must be positive")
    mean_count = intensity * domain.volume
    requested = int(rng.poisson(mean_count))
    budget = max(int(np.ceil(budget_factor * mean_count)), requested)
    centers: list[np.ndarray] = []
    proposals = 0
    while len(centers) < requested and proposals < budget:
        proposals += 1
        cand = domain.sample_uniform(rng, 1)[0]
        if centers and np.min(np.linalg.norm(np.asarray(centers) - cand, axis=1)) < radius:
            continue
        centers.append(cand)
    if len(centers) < requested:
        log.warning(
            "hard-core packing saturated: placed %d of %d targets within %d proposals",
            len(centers), requested, budget,
        )
    return [TargetState(c, sample_extent_prior(rng, extent_prior)) for c in centers]


def measurement_rate(sensor: SensorState, target: TargetState) -> float:
    """Expected detection count for one target and one sensor state:
    detection probability times max(1, resolution * det(E))."""
    prob = detection_probability(sensor, target.center)
    res = resolution(sensor, target.center)
    return float(prob * max(1.0, res * target.extent.determinant()))


def _draw_target_points(
    rng: np.random.Generator, sensor: SensorState, target: TargetState, count: int
) -> np.ndarray:
    if count == 0:
        return np.zeros((0, 3))
    ext_cov = extent_to_covariance(target.extent)
    scatter = rng.multivariate_normal(np.zeros(3), ext_cov, size=count)
    impinge = target.center + scatter
    covs = noise_covariance_batch(sensor, impinge)
    if sensor.fading_sigma > 0.0:
        # Simulator-side covariance mismatch; inference keeps the clean map.
        covs = covs * np.exp(sensor.fading_sigma * rng.standard_normal(count))[:, None, None]
    chol = np.linalg.cholesky(covs)
    noise = np.einsum("nij,nj->ni", chol, rng.standard_normal((count, 3)))
    return impinge + noise


def simulate_measurements(
    rng: np.random.Generator,
    targets: list[TargetState],
    sensors: list[SensorState],
    clutter_intensity: float,
    domain: Domain,
) -> list[MeasurementSet]:
    """Simulate one scan of every sensor state over a fixed scene.

    Per sensor and target the detection count is Poisson with the target's
    measurement rate; each detection is the target center plus extent
    scatter plus sensor noise evaluated at the scattered point.  Clutter
    counts are Poisson(clutter_intensity * |D|) with uniform locations.
    Out-of-domain detections are dropped and tallied in ``n_dropped``;
    ``origins`` tags every kept point with its target index (-1 = clutter).
    """
    out = []
    for k, sensor in enumerate(sensors):
        points = []
        origins = []
        for l, target in enumerate(targets):
            count = int(rng.poisson(measurement_rate(sensor, target)))
            pts = _draw_target_points(rng, sensor, target, count)
            points.append(pts)
            origins.append(np.full(len(pts), l))
        n_clutter = int(rng.poisson(clutter_intensity * domain.volume))
        points.append(domain.sample_uniform(rng, n_clutter))
        origins.append(np.full(n_clutter, -1))
        pts = np.concatenate(points) if points else np.zeros((0, 3))
        orig = np.concatenate(origins) if origins else np.zeros(0, dtype=int)
        keep = domain.contains(pts) if len(pts) else np.zeros(0, dtype=bool)
        dropped = int(len(pts) - keep.sum())
        out.append(MeasurementSet(k, pts[keep], origins=orig[keep], n_dropped=dropped))
    return out
