from itertools import permutations

import numpy as np
import pytest

from coxsense.metrics import gw_distance, ospa, spd_sqrt
from coxsense.model import Extent, TargetState, extent_from_covariance


def random_state(rng, scale=5.0):
    center = rng.uniform(-scale, scale, 3)
    e = np.concatenate([rng.uniform(0.5, 2.0, 3), rng.uniform(-0.8, 0.8, 3)])
    return TargetState(center, Extent(e))


def brute_force_ospa(xs, ys, order=2.0, cutoff=10.0):
    """Enumerate every injection of the smaller set into the larger."""
    if len(xs) > len(ys):
        xs, ys = ys, xs
    m, n = len(xs), len(ys)
    if n == 0:
        return 0.0
    if m == 0:
        return cutoff
    best = np.inf
    for assignment in permutations(range(n), m):
        cost = sum(
            min(cutoff, gw_distance(xs[i], ys[j])) ** order for i, j in enumerate(assignment)
        )
        best = min(best, cost)
    return ((best + cutoff**order * (n - m)) / n) ** (1.0 / order)


class TestSpdSqrt:
    def test_square_recovers_matrix(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            a = rng.standard_normal((3, 3))
            mat = a @ a.T + 0.1 * np.eye(3)
            root = spd_sqrt(mat)
            assert np.allclose(root @ root, mat, rtol=1e-9, atol=1e-12)


class TestGwDistance:
    def test_identity(self):
        rng = np.random.default_rng(32)
        state = random_state(rng)
        assert gw_distance(state, state) == 0.0

    def test_point_mass_limit(self):
        eps = 1e-5
        tiny = Extent(np.array([eps, eps, eps, 0, 0, 0]))
        a = TargetState(np.array([0.0, 0, 0]), tiny)
        b = TargetState(np.array([3.0, 4.0, 0]), tiny)
        assert gw_distance(a, b) == pytest.approx(5.0, abs=1e-4)

    def test_commuting_diagonal_closed_form(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            da = rng.uniform(0.3, 3.0, 3)
            db = rng.uniform(0.3, 3.0, 3)
            ca = rng.uniform(-2, 2, 3)
            cb = rng.uniform(-2, 2, 3)
            a = TargetState(ca, extent_from_covariance(np.diag(da)))
            b = TargetState(cb, extent_from_covariance(np.diag(db)))
            expected = np.sqrt(np.sum((ca - cb) ** 2) + np.sum((np.sqrt(da) - np.sqrt(db)) ** 2))
            assert gw_distance(a, b) == pytest.approx(expected, rel=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(34)
        a, b = random_state(rng), random_state(rng)
        assert gw_distance(a, b) == pytest.approx(gw_distance(b, a), rel=1e-12)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(35)
        for _ in range(50):
            a, b, c = (random_state(rng) for _ in range(3))
            assert gw_distance(a, c) <= gw_distance(a, b) + gw_distance(b, c) + 1e-9

    def test_rejects_degenerate_covariance(self):
        degenerate = TargetState(np.zeros(3), Extent(np.array([1e-200, 1, 1, 0, 0, 0])))
        ok = TargetState(np.zeros(3), Extent(np.array([1, 1, 1, 0, 0, 0.0])))
        with pytest.raises(ValueError):
            gw_distance(degenerate, ok)


class TestOspa:
    def test_equal_sets(self):
        rng = np.random.default_rng(36)
        xs = [random_state(rng) for _ in range(4)]
        assert ospa(xs, list(xs)) == pytest.approx(0.0, abs=1e-9)

    def test_empty_vs_one(self):
        rng = np.random.default_rng(37)
        assert ospa([], [random_state(rng)]) == 10.0

    def test_both_empty(self):
        assert ospa([], []) == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(38)
        for _ in range(25):
            xs = [random_state(rng) for _ in range(rng.integers(0, 6))]
            ys = [random_state(rng) for _ in range(rng.integers(0, 6))]
            assert ospa(xs, ys) == pytest.approx(brute_force_ospa(xs, ys), abs=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(39)
        xs = [random_state(rng) for _ in range(3)]
        ys = [random_state(rng) for _ in range(5)]
        assert ospa(xs, ys) == ospa(ys, xs)

    def test_bounded_by_cutoff(self):
        rng = np.random.default_rng(40)
        for _ in range(10):
            xs = [random_state(rng, scale=50.0) for _ in range(rng.integers(0, 4))]
            ys = [random_state(rng, scale=50.0) for _ in range(rng.integers(0, 4))]
            assert ospa(xs, ys) <= 10.0 + 1e-12

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            ospa([], [], order=0.0)
        with pytest.raises(ValueError):
            ospa([], [], cutoff=-1.0)
