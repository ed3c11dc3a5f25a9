"""Scenario configuration: schema, YAML loading, and per-epoch sensor states.

The config file is a YAML mapping with explicit keys for every scenario
quantity; see the config reference in the README for the exact names.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .mcmc import ChainConfig
from .model import Domain, ExtentPrior
from .sensors import SensorState

__all__ = ["SensorConfig", "DbscanSearchConfig", "ScenarioConfig", "load_scenario", "scenario_from_dict"]


@dataclass(frozen=True)
class SensorConfig:
    """Static description of one sensor; its pose at epoch t is
    position + velocity * t, producing one sensor state per scan."""

    position: tuple[float, float, float]
    sigma_range: float
    sigma_bearing: float
    snr_ref: float
    false_alarm: float
    resolution_scale: float
    min_range: float = 1.0
    fading_sigma: float = 0.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def state_at(self, epoch: int) -> SensorState:
        pos = np.asarray(self.position, dtype=float) + epoch * np.asarray(self.velocity, dtype=float)
        return SensorState(
            position=pos,
            sigma_range=self.sigma_range,
            sigma_bearing=self.sigma_bearing,
            snr_ref=self.snr_ref,
            false_alarm=self.false_alarm,
            resolution_scale=self.resolution_scale,
            min_range=self.min_range,
            fading_sigma=self.fading_sigma,
        )


@dataclass(frozen=True)
class DbscanSearchConfig:
    eps_grid: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
    min_pts_grid: tuple[int, ...] = (2, 3, 5, 8)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to simulate and estimate one scenario."""

    domain: Domain
    hardcore_radius: float
    extent_prior: ExtentPrior
    intensity: float
    clutter_intensity: float
    sensors: tuple[SensorConfig, ...]
    epochs: int
    seed: int = 0
    chain: ChainConfig = field(default_factory=ChainConfig)
    dbscan: DbscanSearchConfig = field(default_factory=DbscanSearchConfig)

    def __post_init__(self):
        if self.hardcore_radius <= 0:
            raise ValueError("hardcore_radius must be positive")
        if self.intensity <= 0 or self.clutter_intensity <= 0:
            raise ValueError("intensities must be positive")
        if self.epochs <= 0 or not self.sensors:
            raise ValueError("need at least one epoch and one sensor")

    def sensor_states(self, epoch: int) -> list[SensorState]:
        """Sensor states of one scan."""
        return [s.state_at(epoch) for s in self.sensors]

    def sensor_states_through(self, epoch: int) -> list[SensorState]:
        """All sensor states accumulated over scans 0..epoch, scan-major."""
        states = []
        for t in range(epoch + 1):
            states.extend(self.sensor_states(t))
        return states


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed YAML, validating required keys."""
    try:
        domain = Domain(np.asarray(raw["domain"]["lower"]), np.asarray(raw["domain"]["upper"]))
        prior_raw = raw["extent_prior"]
        prior = ExtentPrior(
            diag_low=float(prior_raw["diag"][0]),
            diag_high=float(prior_raw["diag"][1]),
            offdiag_low=float(prior_raw["offdiag"][0]),
            offdiag_high=float(prior_raw["offdiag"][1]),
        )
        sensors = tuple(
            SensorConfig(
                position=tuple(s["position"]),
                sigma_range=float(s["sigma_range"]),
                sigma_bearing=float(s["sigma_bearing"]),
                snr_ref=float(s["snr_ref"]),
                false_alarm=float(s["false_alarm"]),
                resolution_scale=float(s["resolution_scale"]),
                min_range=float(s.get("min_range", 1.0)),
                fading_sigma=float(s.get("fading_sigma", 0.0)),
                velocity=tuple(s.get("velocity", (0.0, 0.0, 0.0))),
            )
            for s in raw["sensors"]
        )
        chain = ChainConfig(**raw.get("chain", {}))
        search_raw = raw.get("dbscan", {})
        search = DbscanSearchConfig(
            eps_grid=tuple(search_raw.get("eps_grid", DbscanSearchConfig.eps_grid)),
            min_pts_grid=tuple(search_raw.get("min_pts_grid", DbscanSearchConfig.min_pts_grid)),
        )
        return ScenarioConfig(
            domain=domain,
            hardcore_radius=float(raw["hardcore_radius"]),
            extent_prior=prior,
            intensity=float(raw["intensity"]),
            clutter_intensity=float(raw["clutter_intensity"]),
            sensors=sensors,
            epochs=int(raw["epochs"]),
            seed=int(raw.get("seed", 0)),
            chain=chain,
            dbscan=search,
        )
    except KeyError as exc:
        raise ValueError(f"scenario config missing required key: {exc}") from exc


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Load a scenario from a YAML file."""
    with open(path) as handle:
        raw = yaml.safe_load(handle)
    if not isinstance(raw, dict):
        raise ValueError(f"scenario config {path} must be a YAML mapping")
    return scenario_from_dict(raw)
