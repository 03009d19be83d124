"""Binned-mixture distribution: bin placement, scoring, sampling, head map."""

import numpy as np
import pytest

from conftest import check_grad
from samplefield import tensor as T
from samplefield.distribution import (
    DistParams,
    closest_bin,
    expected_value,
    head_to_params,
    log_likelihood,
    make_bins,
    sample_value,
)
from samplefield.errors import ConfigError, ShapeError
from samplefield.tensor import Tensor


def two_bin_layout():
    # centers land exactly on [-0.5, 0.5]
    return make_bins(2, 1, (-1.0, 1.0))


class TestMakeBins:
    def test_single_bin_at_midpoint(self):
        layout = make_bins(1, 1, (-1.0, 1.0))
        assert layout.centers.shape == (1, 1)
        assert layout.centers[0, 0] == 0.0

    def test_256_bins_follow_uniform_formula(self):
        layout = make_bins(256, 1, (-1.0, 1.0))
        want = -1.0 + 2.0 * (np.arange(256) + 0.5) / 256
        assert np.allclose(layout.centers[:, 0], want, atol=1e-12)

    def test_four_bins_unit_range(self):
        layout = make_bins(4, 1, (0.0, 1.0))
        assert np.allclose(layout.centers[:, 0], [0.125, 0.375, 0.625, 0.875])

    def test_bins_pairwise_distinct_and_in_range(self):
        for b in (1, 2, 7, 33):
            layout = make_bins(b, 1, (-1.0, 1.0))
            flat = layout.centers[:, 0]
            assert len(np.unique(flat)) == b
            assert flat.min() >= -1.0 and flat.max() <= 1.0

    def test_multichannel_lattice_without_training_values(self):
        layout = make_bins(5, 2, (-1.0, 1.0))
        assert layout.centers.shape == (5, 2)
        assert len(np.unique(layout.centers, axis=0)) == 5

    def test_multichannel_kmeans_centers(self):
        rng = np.random.default_rng(0)
        vals = np.concatenate([rng.normal(-0.5, 0.05, (50, 2)), rng.normal(0.5, 0.05, (50, 2))])
        vals = np.clip(vals, -1, 1)
        layout = make_bins(2, 2, (-1.0, 1.0), training_values=vals)
        got = np.sort(layout.centers[:, 0])
        assert abs(got[0] - (-0.5)) < 0.1 and abs(got[1] - 0.5) < 0.1

    def test_bad_bin_count_rejected(self):
        with pytest.raises(ConfigError):
            make_bins(0, 1, (-1.0, 1.0))

    def test_lattice_capacity_rejected(self):
        with pytest.raises(ConfigError):
            make_bins((1 << 20) + 1, 2, (-1.0, 1.0))


class TestClosestBin:
    def test_obvious_assignment(self):
        layout = two_bin_layout()
        assert closest_bin(np.array([0.4]), layout)[0] == 1
        assert closest_bin(np.array([-0.4]), layout)[0] == 0

    def test_tie_takes_lowest_index(self):
        layout = two_bin_layout()  # 0.0 is equidistant from both centers
        assert closest_bin(np.array([0.0]), layout)[0] == 0

    def test_multichannel_uses_euclidean_norm(self):
        layout = make_bins(4, 2, (-1.0, 1.0))
        v = layout.centers[2] + 0.01
        assert closest_bin(v, layout)[0] == 2


class TestLogLikelihood:
    """Hand evaluations of the closest-bin scoring rule."""

    def test_hand_value_off_center(self):
        layout = two_bin_layout()
        params = DistParams(q=np.array([0.25, 0.75]), mu=np.zeros((2, 1)), sigma=np.ones(2))
        ll = log_likelihood(np.array([0.4]), params, layout, alpha=0.1)
        # closest bin center 0.5; log 0.75 - 0.1*(log 1 + 0.1^2/1)
        assert abs(ll.item() - (-0.2886821)) < 1e-6

    def test_hand_value_at_center(self):
        layout = two_bin_layout()
        params = DistParams(q=np.array([0.25, 0.75]), mu=np.zeros((2, 1)), sigma=np.ones(2))
        ll = log_likelihood(np.array([-0.5]), params, layout, alpha=0.1)
        assert abs(ll.item() - (-1.3862944)) < 1e-6

    def test_all_penalties_vanish_at_center(self):
        layout = make_bins(3, 1, (-1.0, 1.0))
        q = np.array([0.2, 0.5, 0.3])
        params = DistParams(q=q, mu=np.zeros((3, 1)), sigma=np.ones(3))
        ll = log_likelihood(layout.centers[1], params, layout)
        assert abs(ll.item() - np.log(0.5)) < 1e-7

    def test_batch_matches_scalar_loop(self):
        rng = np.random.default_rng(1)
        layout = make_bins(5, 1, (-1.0, 1.0))
        with T.using_dtype("float64"):
            q = T.softmax(Tensor(rng.standard_normal((7, 5)))).data
            params = DistParams(
                q=q,
                mu=rng.uniform(-0.2, 0.2, (7, 5, 1)),
                sigma=rng.uniform(0.1, 1.0, (7, 5)),
            )
            vs = rng.uniform(-1, 1, (7, 1))
            batch = log_likelihood(vs, params, layout).data
            singles = [log_likelihood(vs[i], params[i], layout).item() for i in range(7)]
        assert np.allclose(batch, singles, atol=1e-6)

    def test_monotone_in_q_star(self):
        layout = two_bin_layout()
        lls = []
        for q1 in (0.3, 0.5, 0.9):
            params = DistParams(q=np.array([1 - q1, q1]), mu=np.zeros((2, 1)), sigma=np.ones(2))
            lls.append(log_likelihood(np.array([0.5]), params, layout).item())
        assert lls[0] < lls[1] < lls[2]

    def test_maximized_at_center_plus_mu(self):
        layout = two_bin_layout()
        params = DistParams(q=np.array([0.5, 0.5]), mu=np.array([[0.0], [0.1]]), sigma=np.full(2, 0.5))
        best = log_likelihood(np.array([0.6]), params, layout).item()
        for v in (0.45, 0.55, 0.7, 0.8):
            assert log_likelihood(np.array([v]), params, layout).item() <= best + 1e-12

    def test_multichannel_squared_norm(self):
        layout = make_bins(1, 2, (-1.0, 1.0))
        c = layout.centers[0]
        params = DistParams(q=np.array([1.0]), mu=np.zeros((1, 2)), sigma=np.array([0.5]))
        v = c + np.array([0.1, -0.2])
        ll = log_likelihood(v, params, layout, alpha=0.1).item()
        want = 0.0 - 0.1 * (np.log(0.5) + (0.01 + 0.04) / 0.25)
        assert abs(ll - want) < 1e-6

    def test_gradient_through_scoring(self):
        layout = make_bins(3, 1, (-1.0, 1.0))
        rng = np.random.default_rng(2)
        raw = rng.standard_normal((4, 3, 3)) * 0.4
        vs = rng.uniform(-1, 1, (4, 1))

        def build(rt):
            params = head_to_params(rt, layout)
            return T.tsum(log_likelihood(vs, params, layout))

        check_grad(build, [raw])


class TestExpectedValue:
    def test_single_bin_degenerate(self):
        layout = make_bins(1, 1, (-1.0, 1.0))
        params = DistParams(q=np.array([1.0]), mu=np.array([[0.3]]), sigma=np.array([1.0]))
        assert abs(expected_value(params, layout).item() - 0.3) < 1e-7

    def test_hand_value(self):
        layout = two_bin_layout()
        params = DistParams(q=np.array([0.25, 0.75]), mu=np.array([[0.1], [-0.1]]), sigma=np.ones(2))
        got = expected_value(params, layout).item()
        assert abs(got - 0.2) < 1e-6

    def test_uniform_q_zero_mu_gives_mean_of_centers(self):
        layout = make_bins(8, 1, (-1.0, 1.0))
        params = DistParams(q=np.full(8, 1 / 8), mu=np.zeros((8, 1)), sigma=np.ones(8))
        assert abs(expected_value(params, layout).item() - layout.centers.mean()) < 1e-6


class TestSampleValue:
    def test_one_hot_concentrates(self):
        layout = two_bin_layout()
        params = DistParams(q=np.array([0.0, 1.0]), mu=np.array([[0.0], [0.05]]), sigma=np.array([1e-3, 1e-3]))
        draws = np.array([sample_value(params, layout, np.random.default_rng(i))[0] for i in range(200)])
        assert abs(draws.mean() - 0.55) < 1e-3
        assert draws.std() <= 3e-3

    def test_monte_carlo_mean_matches_expected_value(self):
        """10^5 draws in a regime where clamping never fires."""
        layout = make_bins(4, 1, (-1.0, 1.0))
        rng = np.random.default_rng(3)
        q = np.array([0.1, 0.4, 0.3, 0.2])
        params_b = DistParams(
            q=np.tile(q, (100_000, 1)),
            mu=np.tile(np.array([[0.02], [-0.03], [0.01], [0.0]]), (100_000, 1, 1)),
            sigma=np.full((100_000, 4), 0.05),
        )
        draws = sample_value(params_b, layout, rng)
        want = expected_value(DistParams(q=q, mu=params_b.mu.data[0], sigma=params_b.sigma.data[0]), layout).item()
        se = draws.std() / np.sqrt(draws.shape[0])
        assert abs(draws.mean() - want) <= 3 * se
        assert draws.min() > -1.0 and draws.max() < 1.0

    def test_samples_respect_value_range(self):
        layout = make_bins(2, 1, (-1.0, 1.0))
        params = DistParams(q=np.array([0.5, 0.5]), mu=np.array([[0.9], [-0.9]]), sigma=np.ones(2))
        draws = sample_value(
            DistParams(
                q=np.tile(params.q.data, (1000, 1)),
                mu=np.tile(params.mu.data, (1000, 1, 1)),
                sigma=np.tile(params.sigma.data, (1000, 1)),
            ),
            layout,
            np.random.default_rng(4),
        )
        assert draws.min() >= -1.0 and draws.max() <= 1.0

    def test_deterministic_under_fixed_rng(self):
        layout = make_bins(3, 1, (-1.0, 1.0))
        params = DistParams(q=np.array([0.2, 0.5, 0.3]), mu=np.zeros((3, 1)), sigma=np.full(3, 0.2))
        a = sample_value(params, layout, np.random.default_rng(5))
        b = sample_value(params, layout, np.random.default_rng(5))
        assert np.array_equal(a, b)


class TestHeadToParams:
    def test_zero_raw_gives_uniform_unit(self):
        layout = make_bins(4, 1, (-1.0, 1.0))
        params = head_to_params(Tensor.zeros((4, 3)), layout)
        assert np.allclose(params.q.data, 0.25)
        assert np.allclose(params.mu.data, 0.0)
        assert np.allclose(params.sigma.data, 1.0)

    def test_flat_raw_reshaped(self):
        layout = make_bins(2, 1, (-1.0, 1.0))
        params = head_to_params(Tensor.zeros(6), layout)
        assert params.q.shape == (2,)
        assert params.mu.shape == (2, 1)

    def test_sigma_clamped_both_sides(self):
        layout = make_bins(2, 1, (-1.0, 1.0))
        raw = np.zeros((2, 3))
        raw[0, 2] = 5.0  # exp -> 148, clamps to 1
        raw[1, 2] = -20.0  # exp -> 2e-9, clamps to 1e-3
        params = head_to_params(Tensor(raw), layout)
        assert abs(params.sigma.data[0] - 1.0) < 1e-7
        assert abs(params.sigma.data[1] - 1e-3) < 1e-9

    def test_q_normalized_for_random_raw(self):
        rng = np.random.default_rng(6)
        layout = make_bins(5, 1, (-1.0, 1.0))
        for _ in range(20):
            params = head_to_params(Tensor(rng.standard_normal((7, 5, 3))), layout)
            params.validate()
            assert np.allclose(params.q.data.sum(axis=-1), 1.0, atol=1e-6)

    def test_shape_mismatch_rejected(self):
        layout = make_bins(4, 1, (-1.0, 1.0))
        with pytest.raises(ShapeError):
            head_to_params(Tensor.zeros((3, 3)), layout)

    def test_single_bin_reduces_to_gaussian(self):
        """B = 1: q is forced to 1 and scoring is a plain weighted Gaussian."""
        layout = make_bins(1, 1, (-1.0, 1.0))
        rng = np.random.default_rng(7)
        raw = rng.standard_normal((1, 3))
        params = head_to_params(Tensor(raw), layout)
        assert abs(params.q.data[0] - 1.0) < 1e-7
        v = np.array([0.3])
        sigma = float(params.sigma.data[0])
        mu = float(params.mu.data[0, 0])
        want = -0.1 * (np.log(sigma) + (0.3 - mu) ** 2 / sigma**2)
        assert abs(log_likelihood(v, params, layout, alpha=0.1).item() - want) < 1e-6
