import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from airgrid.errors import InvalidInputError, NoContextError
from airgrid.grid import build_grid_graph
from airgrid.interpolate import (generate_ss_labels, haversine, idw,
                                 knn_interpolate)

from test_grid import bbox_km


def brute_force_idw(target, contexts, values, p):
    """Independent per-target oracle: direct evaluation of the weights."""
    ds = [haversine(target, c) for c in contexts]
    for d, v in zip(ds, values):
        if d == 0:
            return v
    ws = [d ** (-p) for d in ds]
    return sum(w * v for w, v in zip(ws, values)) / sum(ws)


class TestHaversine:
    def test_identity(self):
        assert haversine((0.3, 1.2), (0.3, 1.2)) == 0.0

    def test_antipodal(self):
        assert abs(haversine((0, 0), (0, math.pi)) - math.pi * 6371.0) < 1e-3

    def test_one_degree_on_equator(self):
        d = haversine((0, 0), (0, math.pi / 180))
        assert abs(d - 6371.0 * math.pi / 180) < 1e-3

    def test_symmetric_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = (rng.uniform(-1.4, 1.4), rng.uniform(-3, 3))
            b = (rng.uniform(-1.4, 1.4), rng.uniform(-3, 3))
            assert haversine(a, b) >= 0
            assert abs(haversine(a, b) - haversine(b, a)) < 1e-9


class TestIDW:
    def test_single_context(self):
        out = idw(np.array([[0.1, 0.2], [0.3, 0.1]]),
                  np.array([[0.0, 0.0]]), np.array([5.0]))
        assert np.allclose(out, 5.0)

    def test_equidistant_symmetry(self):
        target = np.array([[0.0, 0.0]])
        contexts = np.array([[0.0, 0.01], [0.0, -0.01]])
        for p in (0.5, 1.0, 2.0, 3.7):
            out = idw(target, contexts, np.array([4.0, 8.0]), p=p)
            assert abs(out[0] - 6.0) < 1e-9

    def test_hand_computed_three_contexts(self):
        # distances 1, 2, 4 km east on the equator, values 10, 20, 40, p=2
        km = 1.0 / 6371.0  # radians per km of longitude on the equator
        target = np.array([[0.0, 0.0]])
        contexts = np.array([[0.0, 1 * km], [0.0, 2 * km], [0.0, 4 * km]])
        out = idw(target, contexts, np.array([10.0, 20.0, 40.0]), p=2.0)
        assert abs(out[0] - 17.5 / 1.3125) < 1e-6

    def test_empty_contexts(self):
        with pytest.raises(NoContextError):
            idw(np.zeros((1, 2)), np.zeros((0, 2)), np.zeros(0))

    def test_weights_sum_and_bounds_random(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            m, c = rng.integers(1, 6), rng.integers(1, 8)
            targets = rng.uniform([-0.5, 1.0], [0.5, 1.5], size=(m, 2))
            contexts = rng.uniform([-0.5, 1.0], [0.5, 1.5], size=(c, 2))
            values = rng.uniform(-10, 10, size=c)
            p = rng.uniform(0.5, 4.0)
            out = idw(targets, contexts, values, p=p)
            assert np.all(out >= values.min() - 1e-9)
            assert np.all(out <= values.max() + 1e-9)
            for i in range(m):
                oracle = brute_force_idw(targets[i], contexts, values, p)
                assert abs(out[i] - oracle) <= 1e-12 * max(1, abs(oracle))

    @given(st.integers(0, 2 ** 16))
    @settings(max_examples=25, deadline=None)
    def test_permutation_and_linearity(self, seed):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(2, 6))
        targets = rng.uniform([-0.5, 1.0], [0.5, 1.5], size=(3, 2))
        contexts = rng.uniform([-0.5, 1.0], [0.5, 1.5], size=(c, 2))
        values = rng.uniform(-5, 5, size=c)
        out = idw(targets, contexts, values)
        perm = rng.permutation(c)
        out_p = idw(targets, contexts[perm], values[perm])
        assert np.allclose(out, out_p, atol=1e-12)
        assert np.allclose(idw(targets, contexts, 3.0 * values), 3.0 * out,
                           atol=1e-10)


class TestKNN:
    def setup_method(self):
        km = 1.0 / 6371.0
        self.target = np.array([[0.0, 0.0]])
        self.contexts = np.array([[0.0, 1 * km], [0.0, 2 * km],
                                  [0.0, 3 * km]])
        self.values = np.array([2.0, 4.0, 9.0])

    def test_k_equals_all_is_global_mean(self):
        out = knn_interpolate(self.target, self.contexts, self.values, k=3)
        assert abs(out[0] - 5.0) < 1e-9

    def test_k1_is_nearest(self):
        out = knn_interpolate(self.target, self.contexts, self.values, k=1)
        assert out[0] == 2.0

    def test_k2_mean_of_two_nearest(self):
        out = knn_interpolate(self.target, self.contexts, self.values, k=2)
        assert abs(out[0] - 3.0) < 1e-9

    def test_invalid_k(self):
        with pytest.raises(InvalidInputError):
            knn_interpolate(self.target, self.contexts, self.values, k=4)

    def test_tie_broken_by_smaller_index(self):
        contexts = np.array([[0.0, 0.001], [0.0, -0.001]])
        out = knn_interpolate(self.target, contexts, np.array([1.0, 9.0]),
                              k=1)
        assert out[0] == 1.0


class TestSSLabels:
    def make_grid(self):
        return build_grid_graph(bbox_km(5, 5), 500.0)

    def test_coincident_grid_takes_context_value(self):
        g = self.make_grid()
        coords = np.array([g.cells[7].centroid])
        values = np.array([[3.0, 4.0, 5.0]])
        field = generate_ss_labels(g, coords, values)
        assert np.allclose(field.values[7], [3.0, 4.0, 5.0])

    def test_single_context_constant_field(self):
        g = self.make_grid()
        coords = np.array([g.cells[0].centroid])
        values = np.array([[1.0, 2.0]])
        field = generate_ss_labels(g, coords, values)
        assert np.allclose(field.values, values[0][None, :])

    def test_matches_brute_force_oracle(self):
        g = self.make_grid()
        rng = np.random.default_rng(11)
        ids = rng.choice(g.n_cells, size=5, replace=False)
        coords = g.centroids()[ids]
        values = rng.uniform(0, 50, size=(5, 4))
        field = generate_ss_labels(g, coords, values, p=2.0)
        for gid in range(0, g.n_cells, 7):
            for t in range(4):
                oracle = brute_force_idw(tuple(g.centroids()[gid]),
                                         coords, values[:, t], 2.0)
                assert abs(field.values[gid, t] - oracle) < 1e-10

    def test_empty_interpolation_set(self):
        g = self.make_grid()
        with pytest.raises(NoContextError):
            generate_ss_labels(g, np.zeros((0, 2)), np.zeros((0, 3)))
