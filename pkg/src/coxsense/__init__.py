"""Multi-sensor extended-target scene simulation and estimation.

Simulates radar-style detection scenes of multiple ellipsoidal targets
observed by spatially inhomogeneous sensors, estimates target positions and
extents with a trans-dimensional MCMC sampler over a cluster-process
posterior, and evaluates against clustering and oracle baselines with the
Gaussian-Wasserstein OSPA metric.
"""

from .config import DbscanSearchConfig, ScenarioConfig, SensorConfig, load_scenario
from .mcmc import ChainConfig, ChainResult, run_chain
from .metrics import gw_distance, ospa
from .model import Domain, Extent, ExtentPrior, MeasurementSet, ModelParams, TargetState
from .posterior import ContributionCache, log_likelihood, log_posterior, log_prior
from .sensors import SensorState
from .simulate import measurement_rate, sample_hardcore_scene, simulate_measurements

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "ChainResult",
    "ContributionCache",
    "DbscanSearchConfig",
    "Domain",
    "Extent",
    "ExtentPrior",
    "MeasurementSet",
    "ModelParams",
    "ScenarioConfig",
    "SensorConfig",
    "SensorState",
    "TargetState",
    "gw_distance",
    "load_scenario",
    "log_likelihood",
    "log_posterior",
    "log_prior",
    "measurement_rate",
    "ospa",
    "run_chain",
    "sample_hardcore_scene",
    "simulate_measurements",
    "__version__",
]
