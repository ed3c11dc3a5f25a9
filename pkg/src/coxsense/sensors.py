"""Spatially varying sensor field maps.

Each sensor state carries a pose and the parameters of three analytic maps
evaluated at arbitrary positions p:

* noise covariance: range/cross-range anisotropic, growing with distance,
* detection probability: radar-equation SNR decay with a false-alarm floor,
* resolution: inverse-square falloff with a near-range clamp.

The functional forms are configurable surrogates chosen to preserve the
qualitative structure (anisotropy, range decay) the estimator exploits; all
parameters live in configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TargetState, extent_to_covariance

__all__ = [
    "SensorState",
    "noise_covariance",
    "noise_covariance_batch",
    "detection_probability",
    "resolution",
    "peb",
    "effective_covariance",
]


@dataclass(frozen=True)
class SensorState:
    """One sensor-scan: pose plus field-map parameters.

    sigma_range / sigma_bearing are the range (m) and angular (rad) noise
    scales; snr_ref is the SNR at 1 m; false_alarm is the detection floor;
    resolution_scale and min_range parameterize the resolvable-point density;
    fading_sigma is the lognormal scale of simulator-side covariance
    mismatch (inference always uses the unperturbed map).
    """

    position: np.ndarray
    sigma_range: float
    sigma_bearing: float
    snr_ref: float
    false_alarm: float
    resolution_scale: float
    min_range: float = 1.0
    fading_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        if self.sigma_range <= 0 or self.sigma_bearing <= 0:
            raise ValueError("noise scales must be positive")
        if self.snr_ref <= 0 or not (0.0 < self.false_alarm < 1.0):
            raise ValueError("snr_ref must be positive and false_alarm in (0, 1)")
        if self.resolution_scale <= 0 or self.min_range <= 0:
            raise ValueError("resolution parameters must be positive")


def noise_covariance_batch(sensor: SensorState, points: np.ndarray) -> np.ndarray:
    """Noise covariance at each row of ``points``; returns (N, 3, 3).

    The covariance has eigenvalue sigma_range**2 along the line of sight and
    (sigma_bearing * range)**2 on the two cross-range axes:

        Sigma(p) = sr^2 * u u^T + (sb * rho)^2 * (I - u u^T)

    with u the unit line-of-sight vector, which equals the rotated diagonal
    form for any rotation taking the x-axis onto u.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    diff = pts - sensor.position
    rho = np.linalg.norm(diff, axis=1)
    if np.any(rho <= 0.0):
        raise ValueError("noise covariance undefined at zero range")
    u = diff / rho[:, None]
    cross_var = (sensor.sigma_bearing * rho) ** 2
    outer = u[:, :, None] * u[:, None, :]
    eye = np.eye(3)
    cov = (sensor.sigma_range**2 - cross_var)[:, None, None] * outer + cross_var[:, None, None] * eye
    return cov


def noise_covariance(sensor: SensorState, p: np.ndarray) -> np.ndarray:
    """Noise covariance at a single position (3, 3)."""
    return noise_covariance_batch(sensor, np.asarray(p, dtype=float).reshape(1, 3))[0]


def detection_probability(sensor: SensorState, p: np.ndarray) -> np.ndarray | float:
    """Probability of detecting a resolvable point at p.

    Uses false_alarm ** (1 / (1 + SNR)) with SNR = snr_ref / range**4,
    the monostatic radar-equation decay; the value is 1 at zero range and
    tends to the false-alarm floor as SNR vanishes.
    """
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    rho = np.linalg.norm(pts - sensor.position, axis=1)
    with np.errstate(divide="ignore"):
        snr = sensor.snr_ref / rho**4
    prob = sensor.false_alarm ** (1.0 / (1.0 + snr))
    return prob if np.asarray(p).ndim > 1 else float(prob[0])


def resolution(sensor: SensorState, p: np.ndarray) -> np.ndarray | float:
    """Resolvable-point density factor at p: scale / max(range, min_range)**2."""
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    rho = np.linalg.norm(pts - sensor.position, axis=1)
    res = sensor.resolution_scale / np.maximum(rho, sensor.min_range) ** 2
    return res if np.asarray(p).ndim > 1 else float(res[0])


def peb(sensor: SensorState, p: np.ndarray) -> float:
    """Position error bound: sqrt of the noise covariance trace at p."""
    return float(np.sqrt(np.trace(noise_covariance(sensor, p))))


def effective_covariance(sensor: SensorState, target: TargetState) -> np.ndarray:
    """Total spread of one target's detections: extent covariance plus
    sensor noise covariance evaluated at the target center."""
    return extent_to_covariance(target.extent) + noise_covariance(sensor, target.center)
