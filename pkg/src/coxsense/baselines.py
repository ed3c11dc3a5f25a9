"""Baseline estimators: density-based clustering with a posterior-maximizing
grid search, and an oracle maximum-likelihood estimator with perfect data
association."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .model import Domain, Extent, ExtentPrior, MeasurementSet, ModelParams, TargetState, extent_from_covariance
from .posterior import log_likelihood, log_posterior
from .sensors import SensorState, noise_covariance
from .simulate import measurement_rate

__all__ = [
    "dbscan",
    "clusters_to_states",
    "dbscan_grid_search",
    "GridSearchResult",
    "oracle_estimate",
    "NOISE_LABEL",
]

NOISE_LABEL = -1


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density-based clustering; returns one label per point, -1 for noise.

    A core point has at least ``min_pts`` neighbors within ``eps``, counting
    itself; clusters are connected components of core points under the eps
    relation, border points attach to the first cluster that reaches them.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    labels = np.full(n, NOISE_LABEL, dtype=int)
    if n == 0:
        return labels
    tree = cKDTree(pts)
    neighborhoods = tree.query_ball_point(pts, r=eps)
    core = np.array([len(nb) >= min_pts for nb in neighborhoods])
    cluster = 0
    for start in range(n):
        if labels[start] != NOISE_LABEL or not core[start]:
            continue
        labels[start] = cluster
        frontier = [start]
        while frontier:
            i = frontier.pop()
            if not core[i]:
                continue
            for j in neighborhoods[i]:
                if labels[j] == NOISE_LABEL:
                    labels[j] = cluster
                    frontier.append(j)
        cluster += 1
    return labels


def clusters_to_states(
    points: np.ndarray,
    sensor_indices: np.ndarray,
    labels: np.ndarray,
    sensors: list[SensorState],
    floor: float = 1e-4,
) -> list[TargetState]:
    """Turn clusters into target states by moment matching.

    Center is the cluster mean; extent covariance is the sample covariance
    minus the mean sensor covariance at the center (averaged over the
    cluster's points), projected to SPD by flooring eigenvalues at
    ``floor``; extent parameters come from the Cholesky factor.
    """
    states = []
    for label in sorted(set(labels) - {NOISE_LABEL}):
        members = labels == label
        cluster = points[members]
        center = cluster.mean(axis=0)
        centered = cluster - center
        sample_cov = centered.T @ centered / len(cluster)
        sensor_cov = np.zeros((3, 3))
        for k in sensor_indices[members]:
            sensor_cov += noise_covariance(sensors[k], center)
        sensor_cov /= len(cluster)
        ext_cov = _project_spd(sample_cov - sensor_cov, floor)
        states.append(TargetState(center, extent_from_covariance(ext_cov)))
    return states


def _project_spd(mat: np.ndarray, floor: float) -> np.ndarray:
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    return (vecs * np.maximum(vals, floor)) @ vecs.T


@dataclass(frozen=True)
class GridSearchResult:
    eps: float
    min_pts: int
    states: list[TargetState]
    intensity: float
    clutter_intensity: float
    log_posterior: float


def _induced_params(
    states: list[TargetState],
    n_clutter: int,
    m_total: int,
    sensors: list[SensorState],
    domain: Domain,
) -> ModelParams:
    """Intensities for a clustering via the empirical refresh formulas, with
    noise points playing the clutter labels."""
    n_states = len(sensors)
    clutter_intensity = max(n_clutter, 1) / (n_states * domain.volume)
    if states and n_clutter < m_total:
        rate_total = sum(measurement_rate(s, t) for s in sensors for t in states)
        intensity = (m_total - n_clutter) * len(states) / (domain.volume * rate_total)
    else:
        intensity = 1.0 / domain.volume
    return ModelParams(tuple(states), intensity, clutter_intensity)


def _clamped_for_scoring(params: ModelParams, extent_prior: ExtentPrior) -> ModelParams:
    """Clip extents into the prior support for posterior scoring only, so a
    clustering is ranked by fit rather than disqualified by a moment-matched
    extent that falls marginally outside the uniform bounds."""
    clamped = tuple(
        TargetState(t.center, Extent(np.clip(t.extent.params, extent_prior.lows, extent_prior.highs)))
        for t in params.targets
    )
    return ModelParams(clamped, params.intensity, params.clutter_intensity)


def dbscan_grid_search(
    measurement_sets: list[MeasurementSet],
    sensors: list[SensorState],
    domain: Domain,
    hardcore_radius: float,
    extent_prior: ExtentPrior,
    eps_grid: list[float],
    min_pts_grid: list[int],
) -> GridSearchResult:
    """Run clustering over the hyperparameter grid and keep the cell whose
    induced model maximizes the posterior.

    Ties break toward smaller eps, then smaller min_pts.  Cells whose
    posterior is -inf (hard-core violations between cluster centers) are
    ranked by likelihood alone, strictly below every finite-posterior cell.
    """
    if not eps_grid or not min_pts_grid:
        raise ValueError("hyperparameter grids must be non-empty")
    points = np.concatenate([ms.points for ms in measurement_sets])
    sensor_indices = np.concatenate(
        [np.full(len(ms), k, dtype=int) for k, ms in enumerate(measurement_sets)]
    )
    best = None
    for eps in sorted(eps_grid):
        for min_pts in sorted(min_pts_grid):
            labels = dbscan(points, eps, min_pts) if len(points) else np.zeros(0, dtype=int)
            states = clusters_to_states(points, sensor_indices, labels, sensors)
            n_clutter = int(np.sum(labels == NOISE_LABEL))
            params = _induced_params(states, n_clutter, len(points), sensors, domain)
            scoring = _clamped_for_scoring(params, extent_prior)
            log_post = log_posterior(
                scoring, measurement_sets, sensors, domain, hardcore_radius, extent_prior
            )
            if np.isfinite(log_post):
                key = (1, log_post)
            else:
                key = (0, log_likelihood(scoring, measurement_sets, sensors, domain))
            if best is None or key > best[0]:
                best = (key, GridSearchResult(eps, min_pts, states, params.intensity, params.clutter_intensity, log_post))
    return best[1]


def oracle_estimate(
    measurement_sets: list[MeasurementSet],
    true_targets: list[TargetState],
    sensors: list[SensorState],
    extent_floor: float = 1e-4,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> list[TargetState]:
    """Maximum-likelihood estimates under perfect data association.

    Positions: weighted least squares with known per-measurement covariance
    (true extent covariance plus sensor covariance at the true center).
    Extents: moment-matching fixed point, subtracting each measurement's
    sensor covariance from the scatter about the true center and projecting
    to SPD, iterated to relative change below ``tol``.

    ``measurement_sets`` must carry simulation origins; targets with no
    associated measurements keep their true center and a floor extent.
    """
    estimates = []
    for l, truth in enumerate(true_targets):
        obs = []
        covs = []
        true_ext = truth.covariance()
        for ms, sensor in zip(measurement_sets, sensors):
            if ms.origins is None:
                raise ValueError("oracle estimation requires measurement origins")
            mine = ms.points[ms.origins == l]
            for z in mine:
                obs.append(z)
                covs.append(noise_covariance(sensor, truth.center))
        if not obs:
            estimates.append(TargetState(truth.center, extent_from_covariance(np.eye(3) * extent_floor)))
            continue
        obs_arr = np.stack(obs)
        sensor_covs = np.stack(covs)
        # position WLS with known total covariance per measurement
        info = np.zeros((3, 3))
        weighted = np.zeros(3)
        for z, scov in zip(obs_arr, sensor_covs):
            w = np.linalg.inv(true_ext + scov)
            info += w
            weighted += w @ z
        center = np.linalg.solve(info, weighted)
        # extent moment fit about the true center
        centered = obs_arr - truth.center
        scatter = np.einsum("ni,nj->nij", centered, centered)
        ext_cov = np.eye(3)
        for _ in range(max_iter):
            updated = _project_spd((scatter - sensor_covs).mean(axis=0), extent_floor)
            change = np.linalg.norm(updated - ext_cov) / max(np.linalg.norm(ext_cov), 1e-12)
            ext_cov = updated
            if change < tol:
                break
        estimates.append(TargetState(center, extent_from_covariance(ext_cov)))
    return estimates
