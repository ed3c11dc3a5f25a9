"""Cluster-process intensity, observed log-likelihood, log-prior, and an
incremental per-measurement contribution cache.

The measurement set of sensor state k, conditioned on the targets, is
Poisson with intensity

    Z_k(p) = clutter_intensity + sum_l rate_kl * N(p; c_l, S_kl)

where rate_kl is the target's expected detection count for that sensor and
S_kl = extent covariance + sensor noise covariance at the center.  The
cache stores every per-(measurement, target) kernel contribution so that
adding, removing, or moving a single target costs O(total measurements).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .model import Domain, ExtentPrior, MeasurementSet, ModelParams, TargetState, extent_to_covariance, log_extent_prior_density
from .sensors import SensorState, detection_probability, noise_covariance, resolution
from .simulate import measurement_rate

__all__ = [
    "kernel_eval",
    "intensity_at",
    "log_likelihood",
    "log_prior",
    "log_posterior",
    "TargetColumn",
    "ContributionCache",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


def kernel_eval(delta: np.ndarray, cov: np.ndarray) -> np.ndarray | float:
    """Gaussian kernel exp(-0.5 d' C^-1 d) / sqrt((2 pi)^3 det C).

    ``delta`` may be a single 3-vector or an (N, 3) batch; ``cov`` is one
    SPD 3x3 bandwidth shared by the batch.
    """
    d = np.asarray(delta, dtype=float)
    single = d.ndim == 1
    d2 = np.atleast_2d(d)
    chol = np.linalg.cholesky(np.asarray(cov, dtype=float))
    white = solve_triangular(chol, d2.T, lower=True)
    quad = np.sum(white**2, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    log_dens = -0.5 * quad - 0.5 * log_det - 1.5 * _LOG_2PI
    dens = np.exp(log_dens)
    return float(dens[0]) if single else dens


def _target_effective(sensor: SensorState, target: TargetState) -> tuple[float, np.ndarray]:
    """Rate and effective kernel bandwidth of a target for one sensor."""
    rate = measurement_rate(sensor, target)
    cov = extent_to_covariance(target.extent) + noise_covariance(sensor, target.center)
    return rate, cov


def intensity_at(params: ModelParams, sensor: SensorState, p: np.ndarray) -> float:
    """Measurement intensity of one sensor state at position p."""
    total = params.clutter_intensity
    for target in params.targets:
        rate, cov = _target_effective(sensor, target)
        total += rate * kernel_eval(np.asarray(p, dtype=float) - target.center, cov)
    return float(total)


def _pose_key(sensor: SensorState) -> tuple:
    return (
        tuple(sensor.position),
        sensor.sigma_range,
        sensor.sigma_bearing,
        sensor.snr_ref,
        sensor.false_alarm,
        sensor.resolution_scale,
        sensor.min_range,
    )


def _pose_groups(
    measurement_sets: list[MeasurementSet], sensors: list[SensorState]
) -> list[tuple[SensorState, int, np.ndarray]]:
    """Group sensor states sharing a pose: re-scans of a static sensor have
    identical field maps, so their kernels are evaluated on the pooled
    points.  Returns (sensor, state count, pooled points) per group."""
    grouped: dict[tuple, list] = {}
    for ms, sensor in zip(measurement_sets, sensors):
        entry = grouped.setdefault(_pose_key(sensor), [sensor, 0, []])
        entry[1] += 1
        if len(ms):
            entry[2].append(np.asarray(ms.points, dtype=float))
    out = []
    for sensor, count, chunks in grouped.values():
        pts = np.concatenate(chunks) if chunks else np.zeros((0, 3))
        out.append((sensor, count, pts))
    return out


def log_likelihood(
    params: ModelParams,
    measurement_sets: list[MeasurementSet],
    sensors: list[SensorState],
    domain: Domain,
) -> float:
    """Observed log-likelihood of all sensor states' measurement sets.

    Per sensor state: (1 - clutter_intensity) |D| - sum_l rate_kl
    + sum_m log Z_k(p_m).  Direct from-scratch evaluation; the cache
    provides the incremental equivalent.
    """
    if params.clutter_intensity <= 0.0:
        raise ValueError("clutter intensity must be positive")
    if len(measurement_sets) != len(sensors):
        raise ValueError("one measurement set per sensor state required")
    total = 0.0
    for sensor, n_states, pts in _pose_groups(measurement_sets, sensors):
        z_vals = np.full(len(pts), params.clutter_intensity)
        rate_sum = 0.0
        for target in params.targets:
            rate, cov = _target_effective(sensor, target)
            rate_sum += rate
            if len(pts):
                z_vals = z_vals + rate * kernel_eval(pts - target.center, cov)
        total += n_states * ((1.0 - params.clutter_intensity) * domain.volume - rate_sum)
        total += float(np.sum(np.log(z_vals))) if len(pts) else 0.0
    return total


def log_prior(
    params: ModelParams,
    domain: Domain,
    hardcore_radius: float,
    extent_prior: ExtentPrior,
) -> float:
    """Log prior: L log(lambda) + extent prior terms + hard-core and domain
    indicators; -inf for non-positive intensities or any violated indicator."""
    if params.intensity <= 0.0 or params.clutter_intensity <= 0.0:
        return -np.inf
    centers = params.centers()
    if len(centers) and not np.all(domain.contains(centers)):
        return -np.inf
    if len(centers) >= 2:
        diffs = centers[:, None, :] - centers[None, :, :]
        dists = np.linalg.norm(diffs, axis=2)
        iu = np.triu_indices(len(centers), k=1)
        if np.any(dists[iu] <= hardcore_radius):
            return -np.inf
    total = params.cardinality * np.log(params.intensity)
    for target in params.targets:
        dens = log_extent_prior_density(target.extent, extent_prior)
        if not np.isfinite(dens):
            return -np.inf
        total += dens
    return float(total)


def log_posterior(
    params: ModelParams,
    measurement_sets: list[MeasurementSet],
    sensors: list[SensorState],
    domain: Domain,
    hardcore_radius: float,
    extent_prior: ExtentPrior,
) -> float:
    prior = log_prior(params, domain, hardcore_radius, extent_prior)
    if not np.isfinite(prior):
        return -np.inf
    return prior + log_likelihood(params, measurement_sets, sensors, domain)


@dataclass
class TargetColumn:
    """Per-sensor rates and per-measurement kernel contributions of one target."""

    rates: np.ndarray
    etas: list[np.ndarray]

    @property
    def rate_total(self) -> float:
        return float(np.sum(self.rates))

    @property
    def eta_total(self) -> float:
        return float(sum(e.sum() for e in self.etas))


class ContributionCache:
    """Mutable likelihood state with O(M)-cost single-target edits.

    Holds the current target list and intensities together with, per sensor
    state, the (M_k, L) matrix of kernel contributions and the length-M_k
    total-intensity vector Z.  Every edit method comes in an evaluate
    (``*_delta``) and a commit (``apply_*``) flavor so rejected proposals
    never touch the state.
    """

    def __init__(
        self,
        measurement_sets: list[MeasurementSet],
        sensors: list[SensorState],
        domain: Domain,
        intensity: float,
        clutter_intensity: float,
        targets: list[TargetState] | tuple[TargetState, ...] = (),
    ):
        if clutter_intensity <= 0.0:
            raise ValueError("clutter intensity must be positive")
        self.sensors = list(sensors)
        self.domain = domain
        self.points = [np.asarray(ms.points, dtype=float) for ms in measurement_sets]
        self.m_counts = [len(p) for p in self.points]
        self.m_total = int(sum(self.m_counts))
        self.intensity = float(intensity)
        self.clutter_intensity = float(clutter_intensity)
        self.targets: list[TargetState] = []
        self.eta = [np.zeros((m, 0)) for m in self.m_counts]
        self.rates = np.zeros((len(self.sensors), 0))
        self.z_vals = [np.full(m, clutter_intensity) for m in self.m_counts]
        # states sharing a sensor pose are evaluated on pooled points
        grouped: dict[tuple, list[int]] = {}
        for k, sensor in enumerate(self.sensors):
            grouped.setdefault(_pose_key(sensor), []).append(k)
        self._groups = [(self.sensors[ks[0]], ks) for ks in grouped.values()]
        self._loglik = self._base_loglik()
        for target in targets:
            self.apply_add(target, self.candidate_column(target))

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def cardinality(self) -> int:
        return len(self.targets)

    @property
    def log_likelihood(self) -> float:
        return self._loglik

    def params(self) -> ModelParams:
        return ModelParams(tuple(self.targets), self.intensity, self.clutter_intensity)

    def eta_column_totals(self) -> np.ndarray:
        """Per-target sum of kernel contributions over all measurements."""
        if not self.targets:
            return np.zeros(0)
        return np.sum([e.sum(axis=0) for e in self.eta], axis=0)

    def _base_loglik(self) -> float:
        const = self.n_sensors * (1.0 - self.clutter_intensity) * self.domain.volume
        rate_term = float(np.sum(self.rates))
        log_term = float(sum(np.sum(np.log(z)) for z in self.z_vals))
        return const - rate_term + log_term

    def candidate_column(self, target: TargetState) -> TargetColumn:
        """Rates and kernel contributions of a (possibly new) target."""
        ext_cov = extent_to_covariance(target.extent)
        det_e = target.extent.determinant()
        rates = np.zeros(self.n_sensors)
        etas: list[np.ndarray] = [np.zeros(0)] * self.n_sensors
        for sensor, state_indices in self._groups:
            rate, cov = _sensor_rate_cov(sensor, target.center, ext_cov, det_e)
            stacked = [k for k in state_indices if self.m_counts[k]]
            if stacked:
                pooled = np.concatenate([self.points[k] for k in stacked])
                values = rate * kernel_eval(pooled - target.center, cov)
                offset = 0
                for k in stacked:
                    etas[k] = values[offset : offset + self.m_counts[k]]
                    offset += self.m_counts[k]
            for k in state_indices:
                rates[k] = rate
        return TargetColumn(rates, etas)

    # -- single-target edits ------------------------------------------------

    def add_delta(self, column: TargetColumn) -> float:
        delta = -column.rate_total
        for k in range(self.n_sensors):
            if self.m_counts[k]:
                delta += float(np.sum(np.log1p(column.etas[k] / self.z_vals[k])))
        return delta

    def apply_add(self, target: TargetState, column: TargetColumn) -> None:
        self._loglik += self.add_delta(column)
        self.targets.append(target)
        self.rates = np.column_stack([self.rates, column.rates])
        for k in range(self.n_sensors):
            self.eta[k] = np.column_stack([self.eta[k], column.etas[k]])
            self.z_vals[k] = self.z_vals[k] + column.etas[k]

    def remove_delta(self, index: int) -> float:
        self._check_index(index)
        delta = float(np.sum(self.rates[:, index]))
        for k in range(self.n_sensors):
            if self.m_counts[k]:
                delta += float(np.sum(np.log1p(-self.eta[k][:, index] / self.z_vals[k])))
        return delta

    def apply_remove(self, index: int) -> None:
        self._loglik += self.remove_delta(index)
        self.targets.pop(index)
        self.rates = np.delete(self.rates, index, axis=1)
        for k in range(self.n_sensors):
            self.z_vals[k] = self.z_vals[k] - self.eta[k][:, index]
            self.eta[k] = np.delete(self.eta[k], index, axis=1)

    def move_delta(self, index: int, target: TargetState) -> tuple[float, TargetColumn]:
        self._check_index(index)
        column = self.candidate_column(target)
        delta = float(np.sum(self.rates[:, index])) - column.rate_total
        for k in range(self.n_sensors):
            if self.m_counts[k]:
                shift = column.etas[k] - self.eta[k][:, index]
                delta += float(np.sum(np.log1p(shift / self.z_vals[k])))
        return delta, column

    def apply_move(self, index: int, target: TargetState, column: TargetColumn) -> None:
        delta = float(np.sum(self.rates[:, index])) - column.rate_total
        for k in range(self.n_sensors):
            if self.m_counts[k]:
                shift = column.etas[k] - self.eta[k][:, index]
                delta += float(np.sum(np.log1p(shift / self.z_vals[k])))
        self._loglik += delta
        self.targets[index] = target
        self.rates[:, index] = column.rates
        for k in range(self.n_sensors):
            self.z_vals[k] = self.z_vals[k] + (column.etas[k] - self.eta[k][:, index])
            self.eta[k][:, index] = column.etas[k]

    def set_clutter_intensity(self, value: float) -> None:
        """Shift the clutter floor; updates every Z and the cached log-likelihood."""
        if value <= 0.0:
            raise ValueError("clutter intensity must be positive")
        shift = value - self.clutter_intensity
        delta = -self.n_sensors * self.domain.volume * shift
        for k in range(self.n_sensors):
            if self.m_counts[k]:
                delta += float(np.sum(np.log1p(shift / self.z_vals[k])))
            self.z_vals[k] = self.z_vals[k] + shift
        self.clutter_intensity = value
        self._loglik += delta

    def remove_deltas_all(
        self,
        extra: TargetColumn | None = None,
        drop: int | None = None,
    ) -> np.ndarray:
        """Log-likelihood delta of removing each target, optionally in the
        hypothetical state with ``extra`` appended and/or target ``drop``
        taken out.  Ordering: surviving targets in place, then ``extra``.
        """
        keep = [i for i in range(self.cardinality) if i != drop]
        n_out = len(keep) + (1 if extra is not None else 0)
        deltas = np.zeros(n_out)
        deltas[: len(keep)] = np.sum(self.rates[:, keep], axis=0)
        if extra is not None:
            deltas[-1] = extra.rate_total
        for k in range(self.n_sensors):
            if not self.m_counts[k]:
                continue
            z = self.z_vals[k]
            if drop is not None:
                z = z - self.eta[k][:, drop]
            if extra is not None:
                z = z + extra.etas[k]
            cols = self.eta[k][:, keep]
            if extra is not None:
                cols = np.column_stack([cols, extra.etas[k]])
            deltas += np.sum(np.log1p(-cols / z[:, None]), axis=0)
        return deltas

    # -- verification -------------------------------------------------------

    def recompute(self) -> float:
        """From-scratch log-likelihood of the current state (oracle for tests)."""
        return log_likelihood(self.params(), self._measurement_sets(), self.sensors, self.domain)

    def refresh(self) -> None:
        """Rebuild all derived arrays from the target list."""
        targets = list(self.targets)
        self.targets = []
        self.eta = [np.zeros((m, 0)) for m in self.m_counts]
        self.rates = np.zeros((self.n_sensors, 0))
        self.z_vals = [np.full(m, self.clutter_intensity) for m in self.m_counts]
        self._loglik = self._base_loglik()
        for target in targets:
            self.apply_add(target, self.candidate_column(target))

    def _measurement_sets(self) -> list[MeasurementSet]:
        return [MeasurementSet(k, pts) for k, pts in enumerate(self.points)]

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.cardinality:
            raise IndexError(f"no target at index {index} (cardinality {self.cardinality})")


def _sensor_rate_cov(
    sensor: SensorState, center: np.ndarray, ext_cov: np.ndarray, det_e: float
) -> tuple[float, np.ndarray]:
    prob = detection_probability(sensor, center)
    res = resolution(sensor, center)
    rate = float(prob * max(1.0, res * det_e))
    cov = ext_cov + noise_covariance(sensor, center)
    return rate, cov
