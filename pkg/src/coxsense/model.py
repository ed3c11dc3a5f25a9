"""Core value types: extents, targets, domains, measurements, model parameters.

An extended target is an ellipsoid described by a center position and a
lower-triangular shape factor E with positive diagonal, packed into six
parameters.  The shape covariance is E @ E.T and the size proxy used in
measurement rates is det(E) = e1*e2*e3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Extent",
    "ExtentPrior",
    "Domain",
    "TargetState",
    "MeasurementSet",
    "ModelParams",
    "extent_to_covariance",
    "sample_extent_prior",
    "log_extent_prior_density",
    "extent_from_covariance",
]


def _as_vector(x, n, name):
    arr = np.asarray(x, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a length-{n} vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Extent:
    """Six-parameter lower-triangular extent factor.

    params = (e1..e6): e1..e3 are the diagonal of E (must be positive),
    e4..e6 fill the strict lower triangle row by row:

        E = [[e1, 0,  0 ],
             [e4, e2, 0 ],
             [e5, e6, e3]]
    """

    params: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "params", _as_vector(self.params, 6, "extent params"))

    @property
    def diagonal(self) -> np.ndarray:
        return self.params[:3]

    def matrix(self) -> np.ndarray:
        e = self.params
        return np.array(
            [
                [e[0], 0.0, 0.0],
                [e[3], e[1], 0.0],
                [e[4], e[5], e[2]],
            ]
        )

    def determinant(self) -> float:
        return float(self.params[0] * self.params[1] * self.params[2])


def extent_to_covariance(extent: Extent) -> np.ndarray:
    """Shape covariance E @ E.T of an extent.

    Raises ValueError if any diagonal entry of E is not strictly positive,
    which is the condition for the covariance to be positive definite.
    """
    if np.any(extent.diagonal <= 0.0):
        raise ValueError(f"extent diagonal must be positive, got {extent.diagonal}")
    e_mat = extent.matrix()
    return e_mat @ e_mat.T


def extent_from_covariance(cov: np.ndarray) -> Extent:
    """Extent whose E @ E.T equals the given SPD matrix (Cholesky factor)."""
    low = np.linalg.cholesky(cov)
    return Extent(np.array([low[0, 0], low[1, 1], low[2, 2], low[1, 0], low[2, 0], low[2, 1]]))


@dataclass(frozen=True)
class ExtentPrior:
    """Componentwise uniform prior over extent parameters.

    Diagonal entries e1..e3 are Unif(diag_low, diag_high), strict-lower
    entries e4..e6 are Unif(offdiag_low, offdiag_high).
    """

    diag_low: float = 1.0
    diag_high: float = 1.5
    offdiag_low: float = -0.5
    offdiag_high: float = 0.5

    def __post_init__(self):
        if not (self.diag_low <= self.diag_high and self.offdiag_low <= self.offdiag_high):
            raise ValueError("extent prior bounds must be ordered")

    @property
    def lows(self) -> np.ndarray:
        return np.array([self.diag_low] * 3 + [self.offdiag_low] * 3)

    @property
    def highs(self) -> np.ndarray:
        return np.array([self.diag_high] * 3 + [self.offdiag_high] * 3)


def sample_extent_prior(rng: np.random.Generator, prior: ExtentPrior) -> Extent:
    """Draw an extent with independent uniform components within the bounds."""
    return Extent(rng.uniform(prior.lows, prior.highs))


def log_extent_prior_density(extent: Extent, prior: ExtentPrior) -> float:
    """Log density of the uniform extent prior; -inf outside the support."""
    e = extent.params
    if np.any(e < prior.lows) or np.any(e > prior.highs):
        return -np.inf
    widths = prior.highs - prior.lows
    return float(-np.sum(np.log(widths)))


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in 3-D space (meters)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _as_vector(self.lower, 3, "domain lower"))
        object.__setattr__(self, "upper", _as_vector(self.upper, 3, "domain upper"))
        if np.any(self.upper <= self.lower):
            raise ValueError("domain upper must exceed lower componentwise")

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of rows of ``points`` that lie inside the box."""
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, 3))


@dataclass(frozen=True)
class TargetState:
    """One extended target: center position and extent."""

    center: np.ndarray
    extent: Extent

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vector(self.center, 3, "target center"))

    def covariance(self) -> np.ndarray:
        return extent_to_covariance(self.extent)


@dataclass(frozen=True)
class MeasurementSet:
    """Detections of one sensor state: an (M, 3) point array.

    ``origins`` optionally records the simulated source of each point
    (target index, -1 for clutter); inference never reads it.  ``n_dropped``
    counts simulated detections discarded for falling outside the domain.
    """

    sensor_index: int
    points: np.ndarray
    origins: np.ndarray | None = None
    n_dropped: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.origins is not None:
            org = np.asarray(self.origins, dtype=int).reshape(-1)
            if org.shape[0] != pts.shape[0]:
                raise ValueError("origins must have one entry per point")
            object.__setattr__(self, "origins", org)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ModelParams:
    """Full model state: target set plus center and clutter intensities."""

    targets: tuple[TargetState, ...]
    intensity: float
    clutter_intensity: float

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))

    @property
    def cardinality(self) -> int:
        return len(self.targets)

    def centers(self) -> np.ndarray:
        if not self.targets:
            return np.zeros((0, 3))
        return np.stack([t.center for t in self.targets])
