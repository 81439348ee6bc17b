import math

import numpy as np
import pytest

from offloadsim.agents import ActorCriticPool, LearningRates, NumericalInstabilityError, td_error
from offloadsim.agents.policy import softplus_inv, squash_action, unsquash_action
from offloadsim.engine import derive_stream


def small_pool(seed=0, input_dim=12, action_dim=4, hidden=(6, 5), **kw):
    return ActorCriticPool(
        [derive_stream(seed, "agent/m0/init")],
        input_dim=input_dim,
        action_dim=action_dim,
        hidden=hidden,
        **kw,
    )


def flat_grads(net, grads):
    return np.concatenate([grads[k][0].ravel() for k in sorted(net.params)])


def central_difference(f, flat, h=1e-6):
    grad = np.zeros_like(flat)
    for i in range(len(flat)):
        up = flat.copy()
        up[i] += h
        down = flat.copy()
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2 * h)
    return grad


class TestCritic:
    def test_zero_parameters_give_zero_value(self):
        pool = small_pool()
        for k in pool.critic.params:
            pool.critic.params[k][:] = 0.0
        x = derive_stream(3, "x").standard_normal((1, 12))
        v, _ = pool.critic_eval(x)
        assert v[0] == 0.0

    def test_value_is_finite(self):
        pool = small_pool()
        rng = derive_stream(5, "x")
        for _ in range(50):
            v, _ = pool.critic_eval(rng.standard_normal((1, 12)))
            assert np.isfinite(v[0])

    def test_gradient_matches_finite_differences(self):
        pool = small_pool(seed=9)
        rng = derive_stream(7, "x")
        for trial in range(5):
            x = rng.standard_normal((1, 12))
            flat0 = pool.critic.flat_view(0)

            def f(flat):
                pool.critic.load_flat(0, flat)
                v, _ = pool.critic_eval(x)
                return float(v[0])

            fd = central_difference(f, flat0)
            pool.critic.load_flat(0, flat0)
            _, cache = pool.critic_eval(x)
            grads = pool.critic.backward(cache, {"v": np.ones((1, 1))})
            analytic = flat_grads(pool.critic, grads)
            assert np.linalg.norm(analytic - fd) / np.linalg.norm(fd) < 1e-4


class TestActorForward:
    def test_softplus_diagonal_at_zero_raw(self):
        pool = small_pool(init_std=math.log(2.0))
        pool.actor.params["W_lraw"][:] = 0.0  # kill input dependence
        assert pool.actor.params["b_lraw"][0, 0] == pytest.approx(softplus_inv(math.log(2.0)))
        x = derive_stream(3, "x").standard_normal((1, 12))
        _, L, _ = pool.actor_forward(x)
        assert np.allclose(np.diag(L[0]), math.log(2.0))

    def test_off_diagonal_unconstrained(self):
        pool = small_pool()
        pool.actor.params["W_lraw"][:] = 0.0
        off = [i for i, (r, c) in enumerate(zip(pool.tril_rows, pool.tril_cols)) if r != c]
        pool.actor.params["b_lraw"][0, off] = -1.5
        x = derive_stream(3, "x").standard_normal((1, 12))
        _, L, _ = pool.actor_forward(x)
        assert L[0, 1, 0] == -1.5

    def test_covariance_factor_is_positive_definite(self):
        streams = [derive_stream(s, f"agent/m{s}/init") for s in range(200)]
        pool = ActorCriticPool(streams, input_dim=12, action_dim=4, hidden=(6, 5), init_std=0.3)
        rng = derive_stream(11, "x")
        for _ in range(5):
            x = rng.standard_normal((200, 12))
            _, L, _ = pool.actor_forward(x)
            sigma = np.matmul(L, L.transpose(0, 2, 1))
            np.linalg.cholesky(sigma)  # raises if any factor is not PD


class TestSampling:
    def test_zero_noise_returns_mean(self):
        pool = small_pool()
        x = derive_stream(3, "x").standard_normal((1, 12))
        mu, L, _ = pool.actor_forward(x)
        zeta = pool.sample_raw(mu, L, np.zeros((1, 4)))
        assert np.array_equal(zeta, mu)

    def test_identity_factor_covariance(self):
        rng = derive_stream(13, "y")
        mu = np.zeros(4)
        y = rng.standard_normal((100_000, 4))
        samples = mu + y  # L = I
        cov = np.cov(samples.T)
        assert np.max(np.abs(cov - np.eye(4))) < 0.02

    def test_sample_covariance_matches_factor(self):
        rng = derive_stream(17, "y")
        L = np.array(
            [
                [0.8, 0.0, 0.0],
                [0.3, 1.1, 0.0],
                [-0.4, 0.2, 0.6],
            ]
        )
        y = rng.standard_normal((100_000, 3))
        samples = y @ L.T
        cov = np.cov(samples.T)
        assert np.max(np.abs(cov - L @ L.T)) < 0.05


class TestScoreGradients:
    def test_scalar_gaussian_score(self):
        # one action dim: d ln f / d mu must equal (x - mu) / sigma^2
        pool = small_pool(action_dim=1)
        x = derive_stream(3, "x").standard_normal((1, 12))
        mu, L, cache = pool.actor_forward(x)
        zeta = mu + 0.37
        d_mu, _ = pool._density_grads(zeta, mu, L, cache["lraw"])
        sigma2 = float(L[0, 0, 0]) ** 2
        assert d_mu[0, 0] == pytest.approx(0.37 / sigma2)

    def test_log_density_gradient_matches_finite_differences(self):
        rng = derive_stream(7, "x")
        for seed in range(3):
            pool = small_pool(seed=seed + 20)
            x = rng.standard_normal((1, 12))
            mu0, L0, _ = pool.actor_forward(x)
            zeta = pool.sample_raw(mu0, L0, rng.standard_normal((1, 4)))
            flat0 = pool.actor.flat_view(0)

            def f(flat):
                pool.actor.load_flat(0, flat)
                mu, L, _ = pool.actor_forward(x)
                return float(pool.log_density(zeta, mu, L)[0])

            fd = central_difference(f, flat0)
            pool.actor.load_flat(0, flat0)
            mu, L, cache = pool.actor_forward(x)
            d_mu, d_l = pool._density_grads(zeta, mu, L, cache["lraw"])
            grads = pool.actor.backward(cache, {"mu": d_mu, "lraw": d_l})
            analytic = flat_grads(pool.actor, grads)
            assert np.linalg.norm(analytic - fd) / np.linalg.norm(fd) < 1e-4


class TestUpdates:
    def test_zero_td_error_changes_nothing(self):
        pool = small_pool()
        x = derive_stream(3, "x").standard_normal((1, 12))
        v, critic_cache = pool.critic_eval(x)
        mu, L, actor_cache = pool.actor_forward(x)
        zeta = pool.sample_raw(mu, L, np.ones((1, 4)))
        before_actor = pool.actor.flat_view(0)
        before_critic = pool.critic.flat_view(0)
        pool.update(np.zeros(1), zeta, mu, L, actor_cache, critic_cache)
        assert np.array_equal(pool.actor.flat_view(0), before_actor)
        assert np.array_equal(pool.critic.flat_view(0), before_critic)

    def test_nonfinite_delta_raises(self):
        pool = small_pool()
        x = derive_stream(3, "x").standard_normal((1, 12))
        _, critic_cache = pool.critic_eval(x)
        mu, L, actor_cache = pool.actor_forward(x)
        zeta = pool.sample_raw(mu, L, np.ones((1, 4)))
        with pytest.raises(NumericalInstabilityError):
            pool.update(np.array([np.inf]), zeta, mu, L, actor_cache, critic_cache)


class TestTdError:
    def test_balanced_terms_cancel(self):
        assert td_error(2.0, 2.0, 5.0, 5.0) == 0.0

    def test_pure_reward_surprise(self):
        assert td_error(1.0, 0.0, 3.0, 3.0) == 1.0

    def test_average_reward_converges_geometrically(self):
        pool = small_pool(rates=LearningRates(reward_smoothing=0.9))
        c = 4.0
        for n in range(1, 60):
            pool.update_avg_reward(np.array([c]))
            assert abs(pool.avg_reward[0] - c) == pytest.approx(c * 0.9**n, rel=1e-9)


class TestSquashing:
    def test_boxes(self):
        raw = np.array([[-50.0, 50.0, -3.0, 500.0]])
        out = squash_action(raw, 4, np.array([100.0]))
        assert 0.0 <= out[0, 0] < 1e-9
        assert 1.0 - 1e-9 < out[0, 1] <= 1.0
        assert out[0, 2] == 0.0
        assert out[0, 3] == 100.0

    def test_unsquash_inverts_interior_points(self):
        raw = np.array([[-2.0, 1.5, 7.0, 42.0]])
        boxed = squash_action(raw, 4, np.array([100.0]))
        back = unsquash_action(boxed, 4)
        assert np.allclose(back, raw, atol=1e-9)
