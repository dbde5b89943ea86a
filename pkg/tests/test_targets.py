import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from steinbandit.targets import (EvalCounter, GaussianMixtureSpec,
                                 TargetDensity, default_anchor_positions,
                                 localization_error, make_diagonal_gaussian,
                                 make_gaussian, make_gaussian_mixture,
                                 make_sensor_posterior, random_mixture_spec,
                                 simulate_sensor_world)


def finite_diff_grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestGaussianMixture:
    def test_single_component_peak_is_zero(self):
        t = make_gaussian(3)
        assert t.logp(np.zeros(3)) == pytest.approx(0.0, abs=1e-14)

    def test_standard_normal_values(self):
        t = make_gaussian(2)
        x = np.array([1.0, -2.0])
        assert t.logp(x) == pytest.approx(-0.5 * 5.0, abs=1e-12)
        assert_allclose(t.grad(x), -x, atol=1e-12)

    def test_hand_computed_two_component_value(self):
        # log p(x) = log( b1 s1^{-d/2} e^{-r1/(2 s1)} + b2 s2^{-d/2} e^{-r2/(2 s2)} )
        spec = GaussianMixtureSpec(betas=(0.7, 0.3),
                                   means=((0.0, 0.0), (2.0, 0.0)),
                                   sigmas=(1.0, 0.25))
        t = make_gaussian_mixture(spec)
        x = np.array([1.0, 1.0])
        term1 = 0.7 * np.exp(-0.5 * 2.0)
        term2 = 0.3 * 0.25 ** -1.0 * np.exp(-(1.0 + 1.0) / (2 * 0.25))
        assert t.logp(x) == pytest.approx(np.log(term1 + term2), abs=1e-12)

    def test_component_masses_proportional_to_betas(self):
        # in 1-D, integral of each component is beta_k * sqrt(2 pi)
        spec = GaussianMixtureSpec(betas=(0.5, 0.3, 0.2),
                                   means=((-5.0,), (0.0,), (5.0,)),
                                   sigmas=(0.5, 1.5, 0.8))
        t = make_gaussian_mixture(spec)
        total, _ = quad(lambda v: np.exp(t._logp_fn(np.array([[v]]))[0]),
                        -np.inf, np.inf)
        assert total == pytest.approx(np.sqrt(2 * np.pi), rel=1e-8)
        # tail mass beyond 2.5 must match the beta-weighted sum of normal tails
        from scipy.stats import norm
        part, _ = quad(lambda v: np.exp(t._logp_fn(np.array([[v]]))[0]), 2.5, np.inf)
        expect = sum(b * norm.sf(2.5, loc=m[0], scale=np.sqrt(s))
                     for b, m, s in zip(spec.betas, spec.means, spec.sigmas))
        assert part / total == pytest.approx(expect, rel=1e-6)

    def test_mean_truth_matches_component_average(self):
        spec = GaussianMixtureSpec(betas=(0.5, 0.3, 0.2),
                                   means=((6.0, 6.0), (-6.0, 6.0), (0.0, -6.0)),
                                   sigmas=(0.9, 0.4, 0.5))
        t = make_gaussian_mixture(spec)
        assert_allclose(t.mean_truth, [1.2, 3.6], atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        spec = GaussianMixtureSpec(betas=(0.5, 0.3, 0.2),
                                   means=((6.0, 6.0), (-6.0, 6.0), (0.0, -6.0)),
                                   sigmas=(0.9, 0.4, 0.5))
        t = make_gaussian_mixture(spec)
        rng = np.random.default_rng(11)
        for _ in range(10):
            x = rng.uniform(-8, 8, size=2)
            fd = finite_diff_grad(t.logp, x)
            assert_allclose(t.grad(x), fd, rtol=1e-5, atol=1e-7)

    def test_validation(self):
        with pytest.raises(ValueError):
            GaussianMixtureSpec(betas=(1.0, -0.1), means=((0.0,), (1.0,)),
                                sigmas=(1.0, 1.0))
        with pytest.raises(ValueError):
            GaussianMixtureSpec(betas=(1.0,), means=((0.0,),), sigmas=(0.0,))
        with pytest.raises(ValueError):
            GaussianMixtureSpec(betas=(1.0, 1.0), means=((0.0,),), sigmas=(1.0, 1.0))

    def test_random_spec_respects_separation(self):
        rng = np.random.default_rng(3)
        spec = random_mixture_spec(5, 2, rng, mode_box=5.0, min_mode_distance=4.0)
        means = np.asarray(spec.means)
        diffs = means[:, None, :] - means[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(-1))
        dist[np.diag_indices(5)] = np.inf
        assert dist.min() >= 4.0
        assert sum(spec.betas) == pytest.approx(1.0)


class TestDiagonalGaussian:
    def test_logp_and_grad(self):
        t = make_diagonal_gaussian([1.0, -1.0], [0.5, 2.0])
        x = np.array([2.0, 0.0])
        assert t.logp(x) == pytest.approx(-(1.0 / (2 * 0.5) + 1.0 / (2 * 2.0)), abs=1e-12)
        fd = finite_diff_grad(t.logp, x)
        assert_allclose(t.grad(x), fd, rtol=1e-6)


class TestEvalCounting:
    def test_counts_by_kind(self):
        t = make_gaussian(2)
        X = np.zeros((7, 2))
        t.logp_batch(X)
        assert t.evals.density_calls == 7 and t.evals.grad_calls == 0
        t.grad_batch(X)
        assert t.evals.grad_calls == 7
        t.logp_grad_batch(X)
        assert t.evals.density_calls == 14 and t.evals.grad_calls == 14
        assert t.evals.total == 28

    def test_counter_strictly_increases(self):
        t = make_gaussian(1)
        seen = [t.evals.total]
        for _ in range(5):
            t.logp(np.zeros(1))
            seen.append(t.evals.total)
        assert all(b > a for a, b in zip(seen, seen[1:]))

    def test_counter_thread_safe(self):
        import threading
        c = EvalCounter()

        def hammer():
            for _ in range(1000):
                c.add(density=1, grad=1)

        threads = [threading.Thread(target=hammer) for _ in range(8)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        assert c.total == 16000

    def test_dimension_mismatch_raises(self):
        t = make_gaussian(3)
        with pytest.raises(ValueError):
            t.logp_batch(np.zeros((2, 2)))


class TestSensorWorld:
    def setup_method(self):
        self.anchors = default_anchor_positions(10.0)
        rng = np.random.default_rng(42)
        self.model = simulate_sensor_world(8, self.anchors, side=10.0,
                                           radius=3.0, noise=0.2, rng=rng)

    def test_world_shape(self):
        m = self.model
        assert m.truth.shape == (8, 2)
        assert np.all(np.abs(m.truth) <= 5.0)
        # pairs: sensor-sensor C(8,2)=28 plus sensor-anchor 8*3=24
        assert len(m.pair_t) == 28 + 24
        assert np.all(m.pair_t < 8)
        assert np.isnan(m.distances[~m.observed]).all()
        assert np.isfinite(m.distances[m.observed]).all()

    def test_all_links_observed_when_radius_huge(self):
        rng = np.random.default_rng(1)
        m = simulate_sensor_world(4, self.anchors, side=10.0, radius=1e9,
                                  noise=0.1, rng=rng)
        assert m.observed.all()

    def test_posterior_support_box(self):
        t = make_sensor_posterior(self.model)
        assert t.dim == 16
        inside = self.model.truth.ravel()
        assert np.isfinite(t.logp(inside))
        outside = inside.copy()
        outside[0] = 7.0
        assert t.logp(outside) == -np.inf
        assert_allclose(t.grad(outside), np.zeros(16))

    def test_posterior_gradient_matches_finite_differences(self):
        t = make_sensor_posterior(self.model)
        rng = np.random.default_rng(9)
        for _ in range(5):
            x = self.model.truth.ravel() + 0.05 * rng.standard_normal(16)
            fd = finite_diff_grad(t.logp, x, h=1e-6)
            assert_allclose(t.grad(x), fd, rtol=2e-4, atol=1e-5)

    def test_logp_value_against_hand_formula(self):
        # tiny world computed longhand: 1 sensor, 1 anchor, observed link
        anchors = np.array([[1.0, 0.0]])
        rng = np.random.default_rng(0)
        m = simulate_sensor_world(1, anchors, side=4.0, radius=1e9, noise=0.5,
                                  rng=rng)
        t = make_sensor_posterior(m)
        x = np.array([0.25, -0.5])
        r = np.hypot(x[0] - 1.0, x[1])
        d = m.distances[0]
        expect = (-0.5 * r ** 2 / 1e18
                  - 0.5 * (d - r) ** 2 / 0.25 - 0.5 * np.log(2 * np.pi * 0.25))
        assert t.logp(x) == pytest.approx(expect, abs=1e-10)

    def test_localization_error_zero_at_truth(self):
        pts = self.model.truth.ravel()[None, :].repeat(3, axis=0)
        err = localization_error(pts, np.ones(3) / 3, self.model.truth)
        assert err == pytest.approx(0.0, abs=1e-12)

    def test_reproducible(self):
        rng1 = np.random.default_rng(7)
        rng2 = np.random.default_rng(7)
        m1 = simulate_sensor_world(5, self.anchors, 10.0, 3.0, 0.2, rng1)
        m2 = simulate_sensor_world(5, self.anchors, 10.0, 3.0, 0.2, rng2)
        assert_allclose(m1.truth, m2.truth)
        assert np.array_equal(m1.observed, m2.observed)


def test_target_box_validation():
    with pytest.raises(ValueError):
        TargetDensity(2, lambda X: np.zeros(len(X)),
                      lambda X: np.zeros_like(X), box=([0, 0], [0, 1]))
