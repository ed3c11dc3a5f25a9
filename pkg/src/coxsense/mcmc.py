"""Trans-dimensional Metropolis-Hastings sampler over target configurations.

One iteration updates the target set with a birth/death/move kernel, then
samples clutter labels, then refreshes the two intensities.  Births are
proposed from a measurement-driven grid (thinned measurement points paired
with fresh extent draws, jittered in a small ball); deaths use rates chosen
so that, together with births, the pair satisfies detailed balance:

    d(state + T, T) = b(state, T) * post(state) / post(state + T)

With birth probability B/(B+D) the acceptance probability of a birth
(death) collapses to (B + D(state)) / (B + D(proposed state)), where B is
the grid proposal mass and D the total death rate; all bookkeeping is done
in the log domain through the contribution cache, so every proposal costs
O(total measurements).

Burn-in ends when the best posterior has not improved for ``patience``
iterations; afterwards the move probability is pinned to one (freezing the
cardinality) and the estimate is the componentwise average of centers and
extent parameters over ``averaging_iterations`` further samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import Domain, Extent, ExtentPrior, MeasurementSet, ModelParams, TargetState, extent_to_covariance, log_extent_prior_density
from .posterior import ContributionCache, TargetColumn, log_prior
from .sensors import SensorState, detection_probability, noise_covariance, noise_covariance_batch, resolution

__all__ = [
    "ChainConfig",
    "ClutterLabels",
    "BirthProposalGrid",
    "ChainResult",
    "StepOutcome",
    "birth_rate",
    "build_birth_grid",
    "propose_birth",
    "log_death_rate",
    "step_birth_death",
    "step_move_center",
    "step_move_extent",
    "adapt_step_size",
    "sample_clutter_labels",
    "update_intensities",
    "move_proposal_covariance",
    "run_chain",
]

log = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class ChainConfig:
    """Sampler hyperparameters; every constant is configurable."""

    p_move: float = 0.8
    p_extent_move: float = 0.7
    birth_nodes: int = 100
    extent_nodes: int = 20
    birth_radius: float = 0.2
    patience: int = 200
    averaging_iterations: int = 100
    adapt_window: int = 50
    adapt_low: float = 0.15
    adapt_high: float = 0.4
    adapt_factor: float = 1.5
    initial_center_step: float = 1.0
    initial_extent_step: float = 0.1
    max_iterations: int = 20000

    def __post_init__(self):
        if not (0.0 <= self.p_move <= 1.0 and 0.0 <= self.p_extent_move <= 1.0):
            raise ValueError("move probabilities must lie in [0, 1]")
        for name in ("birth_nodes", "extent_nodes", "patience", "averaging_iterations", "adapt_window", "max_iterations"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be a positive integer")
        if self.birth_radius <= 0:
            raise ValueError("birth_radius must be positive")
        if not (0.0 < self.adapt_low < self.adapt_high < 1.0) or self.adapt_factor <= 1.0:
            raise ValueError("adaptation band must satisfy 0 < low < high < 1 and factor > 1")
        if self.initial_center_step <= 0 or self.initial_extent_step <= 0:
            raise ValueError("initial step sizes must be positive")


@dataclass(frozen=True)
class ClutterLabels:
    """Per-measurement clutter indicators: 0 = clutter, 1 = target-originated."""

    labels: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(np.asarray(a, dtype=int) for a in self.labels))

    @property
    def n_clutter(self) -> int:
        return int(sum(np.sum(a == 0) for a in self.labels))

    @property
    def n_total(self) -> int:
        return int(sum(len(a) for a in self.labels))


class BirthProposalGrid:
    """Discretized birth proposal: center nodes paired with extent atoms.

    Sampling picks a node with probability proportional to its birth rate,
    then jitters the center uniformly in a ball of ``jitter_radius`` and
    keeps the node's extent.  With ``jitter_radius == 0`` nodes are proposed
    exactly (a pure categorical over atoms, used by discrete-space tests).

    ``total_mass`` is the Monte Carlo estimate of the integrated birth rate
    over the proposal support: (sum of node rates) * ball volume / number of
    extent atoms (the plain rate sum when jitter is 0).
    """

    def __init__(self, centers: np.ndarray, extent_params: np.ndarray, rates: np.ndarray, jitter_radius: float):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.extent_params = np.atleast_2d(np.asarray(extent_params, dtype=float))
        self.rates = np.asarray(rates, dtype=float)
        if self.rates.shape != (len(self.centers), len(self.extent_params)):
            raise ValueError("rates must have shape (n_centers, n_extents)")
        if np.any(self.rates < 0.0) or not np.all(np.isfinite(self.rates)):
            raise ValueError("node rates must be finite and non-negative")
        if jitter_radius < 0.0:
            raise ValueError("jitter radius must be non-negative")
        self.jitter_radius = float(jitter_radius)
        self.rate_sum = float(self.rates.sum())
        if self.rate_sum <= 0.0:
            raise ValueError("grid must carry positive total rate")
        if self.jitter_radius > 0.0:
            ball_volume = 4.0 / 3.0 * np.pi * self.jitter_radius**3
            self.total_mass = self.rate_sum * ball_volume / len(self.extent_params)
        else:
            self.total_mass = self.rate_sum
        self.log_total_mass = float(np.log(self.total_mass))
        self._probs = (self.rates / self.rate_sum).ravel()

    @property
    def n_centers(self) -> int:
        return len(self.centers)

    @property
    def n_extents(self) -> int:
        return len(self.extent_params)

    def viability_mask(self, centers: np.ndarray, hardcore_radius: float) -> np.ndarray:
        """Center nodes farther than the hard-core radius from every center
        of the given configuration (all nodes when the configuration is
        empty).  Proposals from non-viable nodes would be rejected by the
        prior, so the chain restricts its birth mass to viable ones."""
        if len(centers) == 0:
            return np.ones(self.n_centers, dtype=bool)
        dists = np.linalg.norm(self.centers[:, None, :] - np.asarray(centers)[None, :, :], axis=2)
        return np.min(dists, axis=1) > hardcore_radius

    def masked_log_mass(self, mask: np.ndarray | None = None) -> float:
        """Log proposal mass restricted to viable center nodes; -inf when no
        node is viable."""
        if mask is None:
            return self.log_total_mass
        masked_sum = float(self.rates[mask].sum())
        if masked_sum <= 0.0:
            return -np.inf
        return self.log_total_mass + np.log(masked_sum / self.rate_sum)

    def sample(self, rng: np.random.Generator, mask: np.ndarray | None = None) -> TargetState:
        if mask is None:
            probs = self._probs
        else:
            rates = np.where(mask[:, None], self.rates, 0.0)
            total = rates.sum()
            if total <= 0.0:
                raise ValueError("no viable birth node to sample")
            probs = (rates / total).ravel()
        idx = int(rng.choice(probs.size, p=probs))
        i, j = divmod(idx, self.n_extents)
        center = self.centers[i]
        if self.jitter_radius > 0.0:
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            radius = self.jitter_radius * rng.uniform() ** (1.0 / 3.0)
            center = center + radius * direction
        return TargetState(center, Extent(self.extent_params[j]))

    def log_mixture_density(self, target: TargetState, atol: float = 1e-12) -> float:
        """Log proposal density of a candidate under the realized grid: a
        rate-weighted mixture of uniform balls around the center nodes whose
        extent atom matches the candidate's extent; -inf off support."""
        match = np.all(np.abs(self.extent_params - target.extent.params) <= atol, axis=1)
        if not np.any(match):
            return -np.inf
        j = int(np.argmax(match))
        dists = np.linalg.norm(self.centers - target.center, axis=1)
        if self.jitter_radius > 0.0:
            ball_volume = 4.0 / 3.0 * np.pi * self.jitter_radius**3
            inside = dists <= self.jitter_radius
            if not np.any(inside):
                return -np.inf
            dens = float(np.sum(self.rates[inside, j])) / (self.rate_sum * ball_volume)
        else:
            exact = dists <= atol
            if not np.any(exact):
                return -np.inf
            dens = float(np.sum(self.rates[exact, j])) / self.rate_sum
        return float(np.log(dens))


def birth_rate(cache: ContributionCache, candidate: TargetState) -> float:
    """Birth rate lambda * (1 + sum of kernel contributions / clutter
    intensity); costs one pass over all measurements."""
    column = cache.candidate_column(candidate)
    return cache.intensity * (1.0 + column.eta_total / cache.clutter_intensity)


_QUAD_CUTOFF = 48.0  # Mahalanobis^2 beyond which kernel terms are dropped as 0


def _grid_node_rates(cache: ContributionCache, centers: np.ndarray, extent_params: np.ndarray) -> np.ndarray:
    """Vectorized birth rates on the (center, extent) node lattice.

    Sensor states sharing a pose (re-scans of a static sensor) are grouped
    so their field maps are evaluated once; per center node, only
    measurements within the Mahalanobis cutoff of the widest bandwidth
    enter the whitened quadratic forms, making node rates exact up to
    kernel tails below exp(-cutoff/2).
    """
    n_c = len(centers)
    n_e = len(extent_params)
    e_mats = np.zeros((n_e, 3, 3))
    e_mats[:, 0, 0] = extent_params[:, 0]
    e_mats[:, 1, 1] = extent_params[:, 1]
    e_mats[:, 2, 2] = extent_params[:, 2]
    e_mats[:, 1, 0] = extent_params[:, 3]
    e_mats[:, 2, 0] = extent_params[:, 4]
    e_mats[:, 2, 1] = extent_params[:, 5]
    ext_covs = np.einsum("nij,nkj->nik", e_mats, e_mats)
    det_e = np.prod(extent_params[:, :3], axis=1)
    ext_lam_max = float(np.max(np.trace(ext_covs, axis1=1, axis2=2)))

    groups: dict[tuple, list[int]] = {}
    for k, sensor in enumerate(cache.sensors):
        if not cache.m_counts[k]:
            continue
        key = (tuple(sensor.position), sensor.sigma_range, sensor.sigma_bearing,
               sensor.snr_ref, sensor.false_alarm, sensor.resolution_scale, sensor.min_range)
        groups.setdefault(key, []).append(k)

    eta_sums = np.zeros((n_c, n_e))
    for indices in groups.values():
        sensor = cache.sensors[indices[0]]
        pts = np.concatenate([cache.points[k] for k in indices])
        scov = noise_covariance_batch(sensor, centers)
        prob = detection_probability(sensor, centers)
        res = resolution(sensor, centers)
        rate = prob[:, None] * np.maximum(1.0, res[:, None] * det_e[None, :])
        cov = scov[:, None, :, :] + ext_covs[None, :, :, :]
        chol = np.linalg.cholesky(cov)
        log_det = 2.0 * np.log(chol[:, :, 0, 0] * chol[:, :, 1, 1] * chol[:, :, 2, 2])
        # lower-triangular inverse, stacked per center for one small GEMM each
        white = np.linalg.inv(chol).reshape(n_c, n_e * 3, 3)
        norm = np.exp(-0.5 * log_det - 1.5 * _LOG_2PI)
        diff_all = pts[None, :, :] - centers[:, None, :]
        dist2 = np.einsum("ima,ima->im", diff_all, diff_all)
        ranges = np.linalg.norm(centers - sensor.position, axis=1)
        lam_bound = ext_lam_max + np.maximum(
            sensor.sigma_range**2, (sensor.sigma_bearing * ranges) ** 2
        )
        keep_radius2 = _QUAD_CUTOFF * lam_bound
        kern_sums = np.zeros((n_c, n_e))
        for i in range(n_c):
            sel = dist2[i] <= keep_radius2[i]
            if not np.any(sel):
                continue
            y = diff_all[i][sel] @ white[i].T
            quad = (y.reshape(-1, n_e, 3) ** 2).sum(axis=2)
            np.clip(quad, None, 2.0 * _QUAD_CUTOFF, out=quad)
            kern_sums[i] = np.exp(-0.5 * quad).sum(axis=0)
        eta_sums += rate * norm * kern_sums
    return cache.intensity * (1.0 + eta_sums / cache.clutter_intensity)


def build_birth_grid(
    rng: np.random.Generator,
    cache: ContributionCache,
    config: ChainConfig,
    extent_prior: ExtentPrior,
    domain: Domain,
) -> BirthProposalGrid:
    """Build the birth proposal grid for the current intensities.

    Center nodes are an independent thinning of the pooled measurements with
    retention min(1, birth_nodes / |measurements|); with no measurements (or
    an empty thinning draw) nodes fall back to uniform draws over the
    domain.  Extent atoms are fresh prior draws.
    """
    if cache.m_total > 0:
        pts = np.concatenate([p for p in cache.points if len(p)])
        retention = min(1.0, config.birth_nodes / cache.m_total)
        mask = rng.uniform(size=cache.m_total) < retention
        centers = pts[mask]
    else:
        centers = np.zeros((0, 3))
    if len(centers) == 0:
        centers = domain.sample_uniform(rng, config.birth_nodes)
    extent_params = rng.uniform(
        extent_prior.lows, extent_prior.highs, size=(config.extent_nodes, 6)
    )
    rates = _grid_node_rates(cache, centers, extent_params)
    return BirthProposalGrid(centers, extent_params, rates, config.birth_radius)


def propose_birth(rng: np.random.Generator, grid: BirthProposalGrid) -> tuple[TargetState, float]:
    """Draw a birth candidate and return it with its grid proposal density."""
    candidate = grid.sample(rng)
    return candidate, float(np.exp(grid.log_mixture_density(candidate)))


# -- death rates -------------------------------------------------------------


def _death_log_rates(
    cache: ContributionCache,
    extent_prior: ExtentPrior,
    extra: tuple[TargetState, TargetColumn] | None = None,
    drop: int | None = None,
) -> np.ndarray:
    """Log death rates of every target in the (possibly hypothetical) state.

    log d = log b(state - target, target) + log post(state - target)
          - log post(state); the lambda factors of the birth rate and the
    cardinality prior cancel analytically.  Assumes the state satisfies the
    hard-core and support constraints (chain invariant).
    """
    lik_deltas = cache.remove_deltas_all(
        extra=extra[1] if extra is not None else None, drop=drop
    )
    survivors = [t for i, t in enumerate(cache.targets) if i != drop]
    totals = list(cache.eta_column_totals()[[i for i in range(cache.cardinality) if i != drop]])
    if extra is not None:
        survivors.append(extra[0])
        totals.append(extra[1].eta_total)
    if not survivors:
        return np.zeros(0)
    log_pe = np.array([log_extent_prior_density(t.extent, extent_prior) for t in survivors])
    return np.log1p(np.asarray(totals) / cache.clutter_intensity) + lik_deltas - log_pe


def log_death_rate(
    cache: ContributionCache,
    index: int,
    domain: Domain,
    hardcore_radius: float,
    extent_prior: ExtentPrior,
) -> float:
    """Log death rate of one current target.

    Returns +inf when the current state violates the hard-core constraint
    and removing this target repairs it (removal is then forced by the
    detailed-balance identity: the including-state posterior is zero).
    """
    cache._check_index(index)
    params = cache.params()
    if not np.isfinite(log_prior(params, domain, hardcore_radius, extent_prior)):
        reduced = ModelParams(
            tuple(t for i, t in enumerate(params.targets) if i != index),
            params.intensity,
            params.clutter_intensity,
        )
        if np.isfinite(log_prior(reduced, domain, hardcore_radius, extent_prior)):
            return np.inf
        raise ValueError("death rate undefined: state invalid even after removal")
    return float(_death_log_rates(cache, extent_prior)[index])


def _log_sum_exp(values: np.ndarray) -> float:
    if values.size == 0:
        return -np.inf
    return float(logsumexp(values))


def _categorical_from_log(rng: np.random.Generator, log_weights: np.ndarray) -> int:
    finite_max = np.max(log_weights)
    if np.isposinf(finite_max):
        forced = np.flatnonzero(np.isposinf(log_weights))
        return int(rng.choice(forced))
    weights = np.exp(log_weights - finite_max)
    return int(rng.choice(len(weights), p=weights / weights.sum()))


# -- proposal kernels ---------------------------------------------------------


@dataclass(frozen=True)
class StepOutcome:
    """What one proposal did: kind, acceptance, and the log acceptance
    probability (None when the proposal was gated out by the prior support);
    ``index`` and ``proposal`` identify the touched target."""

    kind: str
    accepted: bool
    log_alpha: float | None = None
    index: int | None = None
    proposal: TargetState | None = None


def _prior_gate_add(
    cache: ContributionCache,
    candidate: TargetState,
    domain: Domain,
    hardcore_radius: float,
    extent_prior: ExtentPrior,
) -> bool:
    """True when adding the candidate keeps the prior support satisfied."""
    if not domain.contains(candidate.center[None])[0]:
        return False
    if not np.isfinite(log_extent_prior_density(candidate.extent, extent_prior)):
        return False
    if cache.cardinality:
        centers = np.stack([t.center for t in cache.targets])
        if np.min(np.linalg.norm(centers - candidate.center, axis=1)) <= hardcore_radius:
            return False
    return True


def step_birth_death(
    rng: np.random.Generator,
    cache: ContributionCache,
    grid: BirthProposalGrid,
    domain: Domain,
    hardcore_radius: float,
    extent_prior: ExtentPrior,
) -> StepOutcome:
    """One birth/death update; mutates the cache only on acceptance.

    Birth proposal mass is restricted to hard-core-viable center nodes, so
    the grid mass B(state) depends on the configuration; birth is attempted
    with probability B(state) / (B(state) + D(state)) and an empty target
    set forces a birth.  The acceptance probability in either direction is

        (B(current) + D(current)) / (B(proposed) + D(proposed)),

    the Hastings ratio obtained from the detailed-balance death rates and
    the viability-masked grid birth densities.
    """
    centers = np.stack([t.center for t in cache.targets]) if cache.targets else np.zeros((0, 3))
    mask_cur = grid.viability_mask(centers, hardcore_radius)
    log_b_cur = grid.masked_log_mass(mask_cur)
    log_dv = _death_log_rates(cache, extent_prior)
    log_d_cur = _log_sum_exp(log_dv)
    if not np.isfinite(log_b_cur) and not np.isfinite(log_d_cur):
        return StepOutcome("birth", False)
    log_p_birth = log_b_cur - np.logaddexp(log_b_cur, log_d_cur)
    if np.log(rng.uniform()) < log_p_birth:
        candidate = grid.sample(rng, mask_cur)
        if not _prior_gate_add(cache, candidate, domain, hardcore_radius, extent_prior):
            return StepOutcome("birth", False, proposal=candidate)
        column = cache.candidate_column(candidate)
        mask_new = mask_cur & grid.viability_mask(candidate.center[None], hardcore_radius)
        log_b_new = grid.masked_log_mass(mask_new)
        log_dv_new = _death_log_rates(cache, extent_prior, extra=(candidate, column))
        log_alpha = np.logaddexp(log_b_cur, log_d_cur) - np.logaddexp(
            log_b_new, _log_sum_exp(log_dv_new)
        )
        if np.log(rng.uniform()) < log_alpha:
            cache.apply_add(candidate, column)
            return StepOutcome("birth", True, log_alpha, proposal=candidate)
        return StepOutcome("birth", False, log_alpha, proposal=candidate)
    index = _categorical_from_log(rng, log_dv)
    removed = cache.targets[index]
    remaining = np.stack(
        [t.center for i, t in enumerate(cache.targets) if i != index]
    ) if cache.cardinality > 1 else np.zeros((0, 3))
    log_b_minus = grid.masked_log_mass(grid.viability_mask(remaining, hardcore_radius))
    log_dv_minus = _death_log_rates(cache, extent_prior, drop=index)
    log_alpha = np.logaddexp(log_b_cur, log_d_cur) - np.logaddexp(
        log_b_minus, _log_sum_exp(log_dv_minus)
    )
    if np.log(rng.uniform()) < log_alpha:
        cache.apply_remove(index)
        return StepOutcome("death", True, log_alpha, index=index, proposal=removed)
    return StepOutcome("death", False, log_alpha, index=index, proposal=removed)


def move_proposal_covariance(
    sensors: list[SensorState], target: TargetState, step: float
) -> np.ndarray:
    """Center-move proposal covariance: step * (sum_k S_k(target)^-1)^-1."""
    ext_cov = extent_to_covariance(target.extent)
    info = np.zeros((3, 3))
    for sensor in sensors:
        info += np.linalg.inv(ext_cov + noise_covariance(sensor, target.center))
    return step * np.linalg.inv(info)


def _gauss_logpdf(diff: np.ndarray, cov: np.ndarray) -> float:
    chol = np.linalg.cholesky(cov)
    white = np.linalg.solve(chol, diff)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return float(-0.5 * np.dot(white, white) - 0.5 * log_det - 1.5 * _LOG_2PI)


def step_move_center(
    rng: np.random.Generator,
    cache: ContributionCache,
    index: int,
    step: float,
    domain: Domain,
    hardcore_radius: float,
    extent_prior: ExtentPrior,
) -> StepOutcome:
    """Gaussian center move for one target.

    The proposal covariance depends on the current center, so the Hastings
    ratio includes the forward/reverse proposal densities.
    """
    target = cache.targets[index]
    cov_fwd = move_proposal_covariance(cache.sensors, target, step)
    new_center = rng.multivariate_normal(target.center, cov_fwd)
    moved = TargetState(new_center, target.extent)
    if not domain.contains(new_center[None])[0]:
        return StepOutcome("move_center", False, index=index, proposal=moved)
    others = [t.center for i, t in enumerate(cache.targets) if i != index]
    if others and np.min(np.linalg.norm(np.stack(others) - new_center, axis=1)) <= hardcore_radius:
        return StepOutcome("move_center", False, index=index, proposal=moved)
    delta, column = cache.move_delta(index, moved)
    cov_rev = move_proposal_covariance(cache.sensors, moved, step)
    log_alpha = (
        delta
        + _gauss_logpdf(target.center - new_center, cov_rev)
        - _gauss_logpdf(new_center - target.center, cov_fwd)
    )
    if np.log(rng.uniform()) < log_alpha:
        cache.apply_move(index, moved, column)
        return StepOutcome("move_center", True, log_alpha, index=index, proposal=moved)
    return StepOutcome("move_center", False, log_alpha, index=index, proposal=moved)


def _diag_normal_logpdf(diff: np.ndarray, stds: np.ndarray) -> float:
    """Componentwise Gaussian log density; zero-scale components are point
    masses pinned at zero difference and contribute nothing to the ratio."""
    live = stds > 0.0
    if np.any(np.abs(diff[~live]) > 0.0):
        return -np.inf
    d, s = diff[live], stds[live]
    return float(-0.5 * np.sum((d / s) ** 2) - np.sum(np.log(s)) - 0.5 * int(live.sum()) * _LOG_2PI)


def step_move_extent(
    rng: np.random.Generator,
    cache: ContributionCache,
    index: int,
    step: float,
    extent_prior: ExtentPrior,
) -> StepOutcome:
    """Gaussian extent move: componentwise std = step * |e_j|.

    Proposals with a non-positive diagonal or outside the prior support are
    rejected outright; the asymmetric proposal scale enters the ratio.
    """
    target = cache.targets[index]
    e_old = target.extent.params
    stds_fwd = step * np.abs(e_old)
    e_new = e_old + stds_fwd * rng.standard_normal(6)
    if np.any(e_new[:3] <= 0.0):
        return StepOutcome("move_extent", False, index=index)
    moved = TargetState(target.center, Extent(e_new))
    if not np.isfinite(log_extent_prior_density(moved.extent, extent_prior)):
        return StepOutcome("move_extent", False, index=index, proposal=moved)
    delta, column = cache.move_delta(index, moved)
    stds_rev = step * np.abs(e_new)
    log_alpha = (
        delta
        + _diag_normal_logpdf(e_old - e_new, stds_rev)
        - _diag_normal_logpdf(e_new - e_old, stds_fwd)
    )
    if np.log(rng.uniform()) < log_alpha:
        cache.apply_move(index, moved, column)
        return StepOutcome("move_extent", True, log_alpha, index=index, proposal=moved)
    return StepOutcome("move_extent", False, log_alpha, index=index, proposal=moved)


def adapt_step_size(step: float, n_accepted: int, n_proposed: int, config: ChainConfig) -> float:
    """Multiplicative step adjustment after a full adaptation window."""
    rate = n_accepted / n_proposed
    if rate > config.adapt_high:
        return step * config.adapt_factor
    if rate < config.adapt_low:
        return step / config.adapt_factor
    return step


class _StepAdapter:
    """Windowed acceptance tracking for one proposal kind."""

    def __init__(self, step: float, config: ChainConfig):
        self.step = step
        self.config = config
        self.n_proposed = 0
        self.n_accepted = 0
        self.frozen = False

    def record(self, accepted: bool) -> None:
        if self.frozen:
            return
        self.n_proposed += 1
        self.n_accepted += int(accepted)
        if self.n_proposed >= self.config.adapt_window:
            self.step = adapt_step_size(self.step, self.n_accepted, self.n_proposed, self.config)
            self.n_proposed = 0
            self.n_accepted = 0


# -- labelling and intensities -------------------------------------------------


def sample_clutter_labels(rng: np.random.Generator, cache: ContributionCache) -> ClutterLabels:
    """Independent per-measurement labels: clutter with probability
    clutter_intensity / Z(p)."""
    labels = []
    for k in range(cache.n_sensors):
        if cache.m_counts[k]:
            p_clutter = cache.clutter_intensity / cache.z_vals[k]
            labels.append((rng.uniform(size=cache.m_counts[k]) >= p_clutter).astype(int))
        else:
            labels.append(np.zeros(0, dtype=int))
    return ClutterLabels(tuple(labels))


def update_intensities(
    params: ModelParams,
    labels: ClutterLabels,
    rate_total: float,
    domain: Domain,
    n_sensor_states: int,
) -> tuple[float, float]:
    """Empirical intensity refresh from the clutter labelling.

    lambda   = (|measurements| - M_c) * L / (|D| * sum of all rates)
    lambda_c = M_c / (K |D|), floored at 1/(K |D|).

    When no targets exist or every measurement is labelled clutter the
    center intensity is left unchanged (the formula is degenerate there).
    """
    m_clutter = labels.n_clutter
    m_total = labels.n_total
    clutter_intensity = max(m_clutter, 1) / (n_sensor_states * domain.volume)
    if params.cardinality == 0 or m_clutter == m_total:
        intensity = params.intensity
    else:
        intensity = (m_total - m_clutter) * params.cardinality / (domain.volume * rate_total)
    return intensity, clutter_intensity


# -- chain driver ---------------------------------------------------------------


@dataclass
class ChainResult:
    """Post-burn-in estimate and chain diagnostics."""

    targets: list[TargetState]
    intensity: float
    clutter_intensity: float
    burn_in_iterations: int
    total_iterations: int
    trace: list[tuple]
    acceptance: dict[str, tuple[int, int]]
    final_center_step: float
    final_extent_step: float

    def params(self) -> ModelParams:
        return ModelParams(tuple(self.targets), self.intensity, self.clutter_intensity)


def _repair_initial(
    initial: ModelParams,
    domain: Domain,
    hardcore_radius: float,
    extent_prior: ExtentPrior,
) -> list[TargetState]:
    """Make a warm start prior-feasible: clip extents into the prior support
    and drop targets outside the domain or violating the hard-core radius."""
    kept: list[TargetState] = []
    for target in initial.targets:
        if not domain.contains(target.center[None])[0]:
            continue
        clipped = Extent(np.clip(target.extent.params, extent_prior.lows, extent_prior.highs))
        if kept and np.min(
            np.linalg.norm(np.stack([t.center for t in kept]) - target.center, axis=1)
        ) <= hardcore_radius:
            continue
        kept.append(TargetState(target.center, clipped))
    if len(kept) < len(initial.targets):
        log.debug("warm start repaired: %d of %d targets kept", len(kept), len(initial.targets))
    return kept


def run_chain(
    rng: np.random.Generator,
    measurement_sets: list[MeasurementSet],
    sensors: list[SensorState],
    domain: Domain,
    hardcore_radius: float,
    extent_prior: ExtentPrior,
    config: ChainConfig,
    initial: ModelParams | None = None,
) -> ChainResult:
    """Run one chain to an estimate: adaptive burn-in, then fixed-cardinality
    averaging.  ``initial`` warm-starts the target set and intensities; by
    default the chain starts empty (the first update is a forced birth)."""
    n_states = len(sensors)
    if n_states != len(measurement_sets):
        raise ValueError("one measurement set per sensor state required")
    m_total = sum(len(ms) for ms in measurement_sets)
    if initial is not None:
        targets = _repair_initial(initial, domain, hardcore_radius, extent_prior)
        intensity = initial.intensity if initial.intensity > 0 else 1.0 / domain.volume
        clutter = max(initial.clutter_intensity, 1.0 / (n_states * domain.volume))
    else:
        targets = []
        intensity = 1.0 / domain.volume
        clutter = max(m_total, 1) / (n_states * domain.volume)
    cache = ContributionCache(measurement_sets, sensors, domain, intensity, clutter, targets)
    center_adapt = _StepAdapter(config.initial_center_step, config)
    extent_adapt = _StepAdapter(config.initial_extent_step, config)
    counts = {k: [0, 0] for k in ("birth", "death", "move_center", "move_extent")}
    trace: list[tuple] = []

    def one_iteration(iteration: int, p_move: float, allow_jump: bool) -> None:
        kind, accepted = "none", False
        if cache.cardinality > 0 and rng.uniform() < p_move:
            index = int(rng.integers(cache.cardinality))
            if rng.uniform() < config.p_extent_move:
                outcome = step_move_extent(rng, cache, index, extent_adapt.step, extent_prior)
                extent_adapt.record(outcome.accepted)
            else:
                outcome = step_move_center(
                    rng, cache, index, center_adapt.step, domain, hardcore_radius, extent_prior
                )
                center_adapt.record(outcome.accepted)
            kind, accepted = outcome.kind, outcome.accepted
        elif allow_jump:
            grid = build_birth_grid(rng, cache, config, extent_prior, domain)
            outcome = step_birth_death(rng, cache, grid, domain, hardcore_radius, extent_prior)
            kind, accepted = outcome.kind, outcome.accepted
        if kind != "none":
            counts[kind][0] += 1
            counts[kind][1] += int(accepted)
        labels = sample_clutter_labels(rng, cache)
        new_int, new_clutter = update_intensities(
            cache.params(), labels, float(cache.rates.sum()), domain, n_states
        )
        cache.intensity = new_int
        cache.set_clutter_intensity(new_clutter)
        posterior = cache.log_likelihood + log_prior(cache.params(), domain, hardcore_radius, extent_prior)
        trace.append(
            (
                iteration,
                posterior,
                cache.cardinality,
                cache.intensity,
                cache.clutter_intensity,
                kind if accepted else "none",
            )
        )

    best = -np.inf
    stall = 0
    iteration = 0
    while stall < config.patience and iteration < config.max_iterations:
        iteration += 1
        one_iteration(iteration, config.p_move, allow_jump=True)
        posterior = trace[-1][1]
        if posterior > best:
            best = posterior
            stall = 0
        else:
            stall += 1
    burn_in = iteration

    center_adapt.frozen = True
    extent_adapt.frozen = True
    cardinality = cache.cardinality
    center_sum = np.zeros((cardinality, 3))
    extent_sum = np.zeros((cardinality, 6))
    intensity_sum = 0.0
    clutter_sum = 0.0
    for _ in range(config.averaging_iterations):
        iteration += 1
        one_iteration(iteration, 1.0, allow_jump=False)
        for l, target in enumerate(cache.targets):
            center_sum[l] += target.center
            extent_sum[l] += target.extent.params
        intensity_sum += cache.intensity
        clutter_sum += cache.clutter_intensity

    n_avg = config.averaging_iterations
    estimates = [
        TargetState(center_sum[l] / n_avg, Extent(extent_sum[l] / n_avg))
        for l in range(cardinality)
    ]
    acceptance = {k: (v[0], v[1]) for k, v in counts.items()}
    return ChainResult(
        targets=estimates,
        intensity=intensity_sum / n_avg,
        clutter_intensity=clutter_sum / n_avg,
        burn_in_iterations=burn_in,
        total_iterations=iteration,
        trace=trace,
        acceptance=acceptance,
        final_center_step=center_adapt.step,
        final_extent_step=extent_adapt.step,
    )
