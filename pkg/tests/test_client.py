"""Per-example clipping and the noisy normalized client release."""

import math

import numpy as np
import pytest

from fedsofim.client import ClientRelease, clip_gradient, clip_rows, private_release
from fedsofim.core import derive_noise_stream
from fedsofim.task import FeatureDataset, SoftmaxHeadTask, make_synthetic_quadratic


class StubTask:
    """Minimal task double whose per-example gradients are fixed rows.

    Lets a test choose gradient geometry exactly (e.g. antipodal max-norm
    rows) instead of reverse-engineering model parameters that produce it.
    """

    def per_example_gradients(self, theta, dataset):
        return np.array(dataset.rows, dtype=float)


class StubDataset:
    def __init__(self, rows):
        self.rows = [list(map(float, r)) for r in rows]
        self.size = len(self.rows)


def stub_release(rows, c_g, sigma_g=0.0, n=1, stream=None, batch_size=0):
    return private_release(
        StubDataset(rows), np.zeros(2), c_g, sigma_g, n, stream, StubTask(),
        batch_size=batch_size,
    )


class TestClipGradient:
    def test_halves_a_norm_ten_vector_to_radius_five(self):
        np.testing.assert_array_equal(clip_gradient(np.array([6.0, 8.0]), 5.0), [3.0, 4.0])

    def test_vector_inside_the_ball_is_returned_unchanged(self):
        g = np.array([1.0, 0.0])
        np.testing.assert_array_equal(clip_gradient(g, 5.0), g)

    def test_vector_exactly_on_the_boundary_is_unchanged(self):
        g = np.array([3.0, 4.0])
        np.testing.assert_array_equal(clip_gradient(g, 5.0), g)

    def test_zero_vector_maps_to_itself(self):
        np.testing.assert_array_equal(clip_gradient(np.zeros(3), 2.0), np.zeros(3))

    def test_output_norm_and_direction_over_random_sweep(self):
        rng = np.random.default_rng(17)
        for _ in range(500):
            d = int(rng.integers(1, 12))
            g = rng.normal(size=d) * rng.uniform(0.01, 50.0)
            c_g = float(rng.uniform(0.1, 10.0))
            out = clip_gradient(g, c_g)
            expected_norm = min(float(np.linalg.norm(g)), c_g)
            np.testing.assert_allclose(np.linalg.norm(out), expected_norm, rtol=1e-12)
            # out must be a nonnegative scalar multiple of g
            g_norm = np.linalg.norm(g)
            if g_norm > 0:
                cosine = float(out @ g) / (np.linalg.norm(out) * g_norm + 1e-300)
                assert cosine >= 1.0 - 1e-12

    def test_clipped_norm_never_exceeds_the_radius_even_by_one_ulp(self):
        rng = np.random.default_rng(23)
        for _ in range(2000):
            d = int(rng.integers(1, 8))
            g = rng.normal(size=d)
            g *= rng.uniform(1.0, 3.0) / np.linalg.norm(g)
            c_g = float(rng.uniform(0.3, 1.2))
            assert float(np.linalg.norm(clip_gradient(g, c_g))) <= c_g

    def test_rowwise_helper_matches_scalar_path(self):
        # The two paths compute row norms through different reductions, so
        # clipped rows agree only to an ulp; rows inside the ball must come
        # back bit-identical from both.
        rng = np.random.default_rng(29)
        grads = rng.normal(size=(40, 6)) * rng.uniform(0.1, 5.0, size=(40, 1))
        c_g = 1.5
        rows = clip_rows(grads, c_g)
        singles = np.stack([clip_gradient(g, c_g) for g in grads])
        np.testing.assert_allclose(rows, singles, rtol=5e-16, atol=0.0)
        inside = np.linalg.norm(grads, axis=1) <= c_g
        assert inside.any()
        np.testing.assert_array_equal(rows[inside], grads[inside])
        assert np.all(np.linalg.norm(rows, axis=1) <= c_g)

    def test_radius_must_be_positive(self):
        with pytest.raises(ValueError, match="c_g must be positive"):
            clip_gradient(np.ones(2), 0.0)
        with pytest.raises(ValueError, match="c_g must be positive"):
            clip_rows(np.ones((2, 2)), -1.0)


class TestPrivateReleaseNoiseless:
    def test_identical_unclipped_gradients_normalize_back_exactly(self):
        g = [0.75, -0.5]
        for m in (1, 2, 4, 8):
            release = stub_release([g] * m, c_g=5.0)
            np.testing.assert_array_equal(release.vector, g)

    def test_odd_dataset_size_normalizes_to_float_precision(self):
        g = [0.3, 0.7]
        release = stub_release([g] * 3, c_g=5.0)
        np.testing.assert_allclose(release.vector, g, rtol=4e-16)

    def test_single_example_is_clipped_then_normalized_by_one(self):
        release = stub_release([[0.0, 20.0]], c_g=10.0)
        np.testing.assert_array_equal(release.vector, [0.0, 10.0])

    def test_release_is_the_mean_of_clipped_gradients(self):
        rng = np.random.default_rng(31)
        rows = rng.normal(size=(6, 4)) * 3.0
        c_g = 1.0
        release = private_release(
            type("D", (), {"rows": rows.tolist(), "size": 6})(), np.zeros(4),
            c_g, 0.0, 1, None, StubTask(),
        )
        oracle = np.stack([clip_gradient(r, c_g) for r in rows]).sum(axis=0) / 6
        np.testing.assert_allclose(release.vector, oracle, rtol=1e-15)

    def test_noiseless_release_norm_never_exceeds_the_radius(self):
        rng = np.random.default_rng(37)
        for _ in range(200):
            m = int(rng.integers(1, 9))
            rows = rng.normal(size=(m, 3)) * rng.uniform(0.1, 10.0)
            release = stub_release(rows.tolist(), c_g=2.0)
            assert float(np.linalg.norm(release.vector)) <= 2.0

    def test_replace_one_neighbors_differ_by_at_most_two_cg_over_size(self):
        # Adversarial witness: two datasets identical except one record whose
        # clipped gradients are antipodal at full radius.
        c_g, m = 4.0, 5
        shared = [[0.1, 0.2]] * (m - 1)
        a = stub_release(shared + [[100.0, 0.0]], c_g=c_g)
        b = stub_release(shared + [[-100.0, 0.0]], c_g=c_g)
        diff = float(np.linalg.norm(a.vector - b.vector))
        np.testing.assert_allclose(diff, 2.0 * c_g / m, rtol=1e-12)

    def test_random_neighbors_never_exceed_the_sensitivity_bound(self):
        rng = np.random.default_rng(41)
        c_g = 1.5
        for _ in range(200):
            m = int(rng.integers(1, 7))
            rows = (rng.normal(size=(m, 3)) * rng.uniform(0.1, 4.0)).tolist()
            swapped = [list(r) for r in rows]
            swapped[-1] = (rng.normal(size=3) * rng.uniform(0.1, 4.0)).tolist()
            a = stub_release(rows, c_g=c_g)
            b = stub_release(swapped, c_g=c_g)
            assert np.linalg.norm(a.vector - b.vector) <= 2.0 * c_g / m + 1e-12

    def test_sigma_zero_never_touches_the_stream(self):
        class ExplodingStream:
            def normal(self, *a, **k):
                raise AssertionError("stream consulted in the non-private path")

            def choice(self, *a, **k):
                raise AssertionError("stream consulted in the non-private path")

        release = stub_release([[1.0, 2.0]] * 3, c_g=10.0, stream=ExplodingStream())
        np.testing.assert_allclose(release.vector, [1.0, 2.0], rtol=4e-16)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty dataset"):
            stub_release([], c_g=1.0)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError, match="sigma_g must be nonnegative"):
            stub_release([[1.0, 0.0]], c_g=1.0, sigma_g=-1.0)

    def test_release_carries_client_and_round_ids(self):
        release = private_release(
            StubDataset([[1.0, 0.0]]), np.zeros(2), 1.0, 0.0, 1, None, StubTask(),
            client_id=3, round_index=9,
        )
        assert isinstance(release, ClientRelease)
        assert release.client_id == 3
        assert release.round == 9


class TestPrivateReleaseNoise:
    def test_noise_is_one_gaussian_on_the_sum_before_normalization(self):
        # Reconstruct the exact draw from an identically seeded stream: the
        # release must equal (clipped sum + E) / |D| with a single
        # N(0, (c_g sigma_g)^2 / n) vector E.
        c_g, sigma_g, n, m = 2.0, 1.5, 4, 6
        rows = [[0.3, -0.2, 0.1]] * m
        stream = derive_noise_stream(99, 2, 5)
        release = stub_release(rows, c_g=c_g, sigma_g=sigma_g, n=n, stream=stream)

        twin = derive_noise_stream(99, 2, 5)
        noise = twin.normal(0.0, c_g * sigma_g / math.sqrt(n), size=3)
        expected = (np.array(rows).sum(axis=0) + noise) / m
        np.testing.assert_array_equal(release.vector, expected)

    def test_same_stream_seed_reproduces_the_release(self):
        rows = [[1.0, 2.0], [3.0, -1.0]]
        a = stub_release(rows, c_g=1.0, sigma_g=2.0, n=3,
                         stream=derive_noise_stream(7, 0, 0))
        b = stub_release(rows, c_g=1.0, sigma_g=2.0, n=3,
                         stream=derive_noise_stream(7, 0, 0))
        np.testing.assert_array_equal(a.vector, b.vector)

    def test_per_coordinate_noise_variance_matches_the_formula(self):
        # Monte Carlo oracle: var over draws of (release - noiseless release)
        # per coordinate should be (c_g sigma_g)^2 / (n |D|^2) = 1.0 here.
        c_g, sigma_g, n, m, d = 10.0, 2.0, 4, 10, 2
        rows = [[0.05] * d] * m
        noiseless = stub_release(rows, c_g=c_g).vector
        draws = 100_000
        acc = np.zeros(d)
        acc_sq = np.zeros(d)
        for k in range(draws):
            stream = derive_noise_stream(1234, 0, k)
            vec = stub_release(rows, c_g=c_g, sigma_g=sigma_g, n=n, stream=stream).vector
            delta = vec - noiseless
            acc += delta
            acc_sq += delta * delta
        var = (acc_sq - acc * acc / draws) / (draws - 1)
        target = (c_g * sigma_g) ** 2 / (n * m**2)
        np.testing.assert_allclose(target, 1.0)
        np.testing.assert_allclose(var, target, rtol=0.03)
        # conditional mean-zero: |mean| within 5 standard errors
        stderr = math.sqrt(target / draws)
        assert np.all(np.abs(acc / draws) <= 5 * stderr)

    def test_noise_scale_depends_on_client_count(self):
        rows = [[0.0, 0.0]]
        a = stub_release(rows, c_g=1.0, sigma_g=1.0, n=1,
                         stream=derive_noise_stream(5, 0, 0)).vector
        b = stub_release(rows, c_g=1.0, sigma_g=1.0, n=4,
                         stream=derive_noise_stream(5, 0, 0)).vector
        np.testing.assert_allclose(a, 2.0 * b, rtol=1e-15)


class TestMiniBatchSelection:
    def test_batch_smaller_than_dataset_subsamples_deterministically(self):
        rows = [[float(i), 0.0] for i in range(10)]
        a = stub_release(rows, c_g=100.0, batch_size=4,
                         stream=derive_noise_stream(3, 0, 0))
        b = stub_release(rows, c_g=100.0, batch_size=4,
                         stream=derive_noise_stream(3, 0, 0))
        np.testing.assert_array_equal(a.vector, b.vector)
        # normalized by the batch count, so the mean stays in the convex hull
        assert 0.0 <= a.vector[0] <= 9.0

    def test_batch_at_least_dataset_size_uses_every_example(self):
        rows = [[1.0, 0.0], [3.0, 0.0]]
        full = stub_release(rows, c_g=100.0)
        batched = stub_release(rows, c_g=100.0, batch_size=2)
        np.testing.assert_array_equal(full.vector, batched.vector)
        oversized = stub_release(rows, c_g=100.0, batch_size=5)
        np.testing.assert_array_equal(full.vector, oversized.vector)

    def test_batch_without_stream_rejected(self):
        with pytest.raises(ValueError, match="mini-batch selection requires a stream"):
            stub_release([[1.0, 0.0]] * 3, c_g=1.0, batch_size=2, stream=None)


class TestReleaseOnRealTasks:
    def test_softmax_release_matches_manual_clip_sum_normalize(self):
        rng = np.random.default_rng(43)
        task = SoftmaxHeadTask(num_classes=3, feature_dim=4, l2_lambda=1e-3)
        dataset = FeatureDataset(
            features=rng.normal(size=(7, 4)), labels=rng.integers(0, 3, size=7)
        )
        theta = rng.normal(size=task.dim)
        c_g = 0.8
        release = private_release(dataset, theta, c_g, 0.0, 5, None, task)
        grads = task.per_example_gradients(theta, dataset)
        oracle = clip_rows(grads, c_g).sum(axis=0) / 7
        np.testing.assert_array_equal(release.vector, oracle)

    def test_quadratic_shard_release_matches_manual_path(self):
        task, shards = make_synthetic_quadratic(5, 3, mu=0.5, L=2.0, heterogeneity=1.0, seed=8)
        theta = np.linspace(-1.0, 1.0, 5)
        c_g = 0.5
        release = private_release(shards[1], theta, c_g, 0.0, 3, None, task)
        grads = task.per_example_gradients(theta, shards[1])
        oracle = clip_rows(grads, c_g).sum(axis=0) / shards[1].size
        np.testing.assert_array_equal(release.vector, oracle)
