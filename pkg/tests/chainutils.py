"""Shared fixtures for sampler tests: small instances and a discrete
(capped) configuration space with an exhaustive posterior enumeration."""

from itertools import combinations

import numpy as np

from coxsense.mcmc import BirthProposalGrid, birth_rate
from coxsense.model import Domain, Extent, ExtentPrior, MeasurementSet, ModelParams, TargetState
from coxsense.posterior import ContributionCache, log_posterior
from coxsense.sensors import SensorState

PRIOR = ExtentPrior(1.0, 1.5, -0.5, 0.5)


def make_sensor(position, sigma_range=0.3, sigma_bearing=0.015):
    return SensorState(
        position=np.asarray(position, dtype=float),
        sigma_range=sigma_range,
        sigma_bearing=sigma_bearing,
        snr_ref=1e7,
        false_alarm=0.01,
        resolution_scale=400.0,
        min_range=1.0,
    )


def random_target(rng, domain, margin=1.0):
    center = rng.uniform(domain.lower + margin, domain.upper - margin)
    e = np.concatenate([rng.uniform(1.0, 1.5, 3), rng.uniform(-0.5, 0.5, 3)])
    return TargetState(center, Extent(e))


def random_instance(rng, n_sensors=2, n_targets=2, n_points=12, separation=8.0):
    """Random valid chain state over random measurements; targets respect the
    hard-core radius ``separation``."""
    domain = Domain(np.zeros(3), np.array([40.0, 20.0, 10.0]))
    sensors = [make_sensor(rng.uniform([-4, -4, 0], [44, 24, 12])) for _ in range(n_sensors)]
    targets = []
    while len(targets) < n_targets:
        cand = random_target(rng, domain)
        if all(np.linalg.norm(cand.center - t.center) > separation for t in targets):
            targets.append(cand)
    sets = [
        MeasurementSet(k, rng.uniform(domain.lower, domain.upper, size=(n_points, 3)))
        for k in range(n_sensors)
    ]
    cache = ContributionCache(sets, sensors, domain, 2e-3, 3.5e-3, targets)
    return cache, sets, sensors, domain


class CappedInstance:
    """Finite configuration space: center nodes grouped into mutually
    exclusive islands paired with fixed extent atoms, frozen intensities,
    and a frozen jitter-free birth grid.  Supports exhaustive enumeration of
    the posterior over every hard-core-feasible subset of atoms."""

    def __init__(self, centers, extent_params, sensors, sets, domain, hardcore_radius,
                 intensity, clutter_intensity, max_cardinality=2):
        self.centers = np.asarray(centers, dtype=float)
        self.extent_params = np.asarray(extent_params, dtype=float)
        self.sensors = sensors
        self.sets = sets
        self.domain = domain
        self.hardcore_radius = hardcore_radius
        self.intensity = intensity
        self.clutter_intensity = clutter_intensity
        self.max_cardinality = max_cardinality
        self.cache = ContributionCache(
            sets, sensors, domain, intensity, clutter_intensity, []
        )
        rates = np.zeros((len(self.centers), len(self.extent_params)))
        for i, center in enumerate(self.centers):
            for j, e in enumerate(self.extent_params):
                rates[i, j] = birth_rate(self.cache, TargetState(center, Extent(e)))
        self.grid = BirthProposalGrid(self.centers, self.extent_params, rates, jitter_radius=0.0)

    def atom_target(self, i, j):
        return TargetState(self.centers[i], Extent(self.extent_params[j]))

    def feasible_states(self):
        """All subsets of (center, extent) atoms satisfying the hard-core
        constraint, up to the cardinality cap."""
        atoms = [(i, j) for i in range(len(self.centers)) for j in range(len(self.extent_params))]
        states = [frozenset()]
        for size in range(1, self.max_cardinality + 1):
            for combo in combinations(atoms, size):
                centers = [self.centers[i] for i, _ in combo]
                ok = all(
                    np.linalg.norm(a - b) > self.hardcore_radius
                    for a, b in combinations(centers, 2)
                )
                if ok and len({i for i, _ in combo}) == size:
                    states.append(frozenset(combo))
        return states

    def state_log_posterior(self, state):
        targets = tuple(self.atom_target(i, j) for i, j in sorted(state))
        params = ModelParams(targets, self.intensity, self.clutter_intensity)
        return log_posterior(
            params, self.sets, self.sensors, self.domain, self.hardcore_radius, PRIOR
        )

    def enumerate_posterior(self):
        states = self.feasible_states()
        logs = np.array([self.state_log_posterior(s) for s in states])
        logs -= logs.max()
        probs = np.exp(logs)
        probs /= probs.sum()
        return states, probs

    def identify_state(self, cache):
        """Map the cache's targets back to atom indices (exact matches)."""
        atoms = set()
        for target in cache.targets:
            i = int(np.argmin(np.linalg.norm(self.centers - target.center, axis=1)))
            j = int(
                np.argmin(np.abs(self.extent_params - target.extent.params).max(axis=1))
            )
            assert np.array_equal(self.centers[i], target.center)
            assert np.array_equal(self.extent_params[j], target.extent.params)
            atoms.add((i, j))
        return frozenset(atoms)


def two_island_instance(rng, n_centers_per_island=2, n_atoms=2, separation=6.0):
    """Four center nodes in two mutually exclusive islands, two extent atoms,
    two sensors with two measurements each."""
    domain = Domain(np.zeros(3), np.array([20.0, 10.0, 10.0]))
    centers = np.array(
        [[4.0, 5.0, 5.0], [5.0, 5.0, 5.0], [15.0, 5.0, 5.0], [16.0, 5.0, 5.0]][: 2 * n_centers_per_island]
    )
    extent_params = np.stack(
        [
            np.concatenate([rng.uniform(1.0, 1.5, 3), rng.uniform(-0.5, 0.5, 3)])
            for _ in range(n_atoms)
        ]
    )
    sensors = [make_sensor([-2.0, 5.0, 5.0]), make_sensor([22.0, 5.0, 5.0])]
    sets = [
        MeasurementSet(0, np.array([[4.3, 5.0, 5.0], [15.2, 5.2, 5.0]])),
        MeasurementSet(1, np.array([[4.8, 4.8, 5.0], [15.8, 5.0, 5.1]])),
    ]
    volume = domain.volume
    return CappedInstance(
        centers,
        extent_params,
        sensors,
        sets,
        domain,
        hardcore_radius=separation,
        intensity=2.0 / volume,
        clutter_intensity=4.0 / (2.0 * volume),
    )


def total_variation(p, q):
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))
