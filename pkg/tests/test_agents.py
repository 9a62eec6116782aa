"""Agent-level checks: exploration arithmetic, replay uniformity, action
bounds, loss gradients against finite differences, target statics, and
gradient separation between the two networks."""

import numpy as np
import pytest

from ecodrive.agents import (
    AgentConfig,
    DDPGAgent,
    DQNAgent,
    K_VALUES,
    OUNoise,
    PRLAgent,
    ReplayBuffer,
    build_dqn_actions,
    epsilon_schedule,
    scale_to_bounds,
)
from ecodrive.env.observation import LogicState
from ecodrive.sim import corridor_scenario

SCN = corridor_scenario(coordinated=False)


def tiny_scenario():
    """A narrow perception window keeps the networks small for tests."""
    cfg = corridor_scenario(coordinated=False)
    cfg.l_head = 14.0
    cfg.l_tail = 2.0
    return cfg


def random_obs(cfg, rng):
    grid = (rng.random((cfg.grid_rows, cfg.lane_count)) > 0.2).astype(np.uint8)
    onehot = np.zeros(cfg.lane_count)
    onehot[rng.integers(cfg.lane_count)] = 1.0
    logic = LogicState(onehot, float(rng.uniform(0, 300)), float(rng.uniform(0, 13.89)),
                       float(rng.choice([-1.0, 0.0, 1.0])), float(rng.uniform(0, 45)))
    return grid, logic


class TestExploration:
    def test_epsilon_formula_values(self):
        assert epsilon_schedule(0, 1.0, 0.01, 1000) == pytest.approx(1.0, abs=1e-12)
        assert epsilon_schedule(1000, 1.0, 0.01, 1000) == pytest.approx(0.01, abs=1e-12)
        assert epsilon_schedule(1500, 1.0, 0.01, 1000) == pytest.approx(0.01, abs=1e-12)
        assert epsilon_schedule(500, 1.0, 0.01, 1000) == pytest.approx(0.505, abs=1e-12)

    def test_ou_deterministic_decay(self):
        ou = OUNoise(dim=1, theta=0.15, sigma=0.0)
        ou.reset()
        ou.state[:] = 1.0
        out = ou.step(np.random.default_rng(0))
        assert out[0] == pytest.approx(0.85)
        ou.state[:] = 0.0
        assert ou.step(np.random.default_rng(0))[0] == 0.0

    def test_ou_stationary_std(self):
        theta, sigma = 0.15, 0.2
        ou = OUNoise(dim=1, theta=theta, sigma=sigma)
        ou.reset()
        rng = np.random.default_rng(42)
        xs = np.array([ou.step(rng)[0] for _ in range(100_000)])
        assert np.std(xs[1000:]) == pytest.approx(sigma / np.sqrt(2 * theta), rel=0.10)


class TestReplay:
    def test_ring_overwrite(self):
        buf = ReplayBuffer(4, (3, 2), 2)
        g = np.zeros((3, 2), dtype=np.uint8)
        for i in range(6):
            buf.add(g, [i, i], 0, 0.0, float(i), g, [0, 0], False)
        assert len(buf) == 4
        assert sorted(buf.reward.tolist()) == [2.0, 3.0, 4.0, 5.0]

    def test_sampling_without_replacement(self):
        buf = ReplayBuffer(64, (3, 2), 2)
        g = np.zeros((3, 2), dtype=np.uint8)
        for i in range(64):
            buf.add(g, [0, 0], 0, 0.0, float(i), g, [0, 0], False)
        rng = np.random.default_rng(3)
        for _ in range(50):
            idx = buf.sample_indices(rng, 32)
            assert len(set(idx.tolist())) == 32

    def test_sampling_uniform_chi_square(self):
        n, batch, draws = 50, 10, 4000
        buf = ReplayBuffer(n, (2, 2), 1)
        g = np.zeros((2, 2), dtype=np.uint8)
        for i in range(n):
            buf.add(g, [0], 0, 0.0, 0.0, g, [0], False)
        rng = np.random.default_rng(7)
        counts = np.zeros(n)
        for _ in range(draws):
            counts[buf.sample_indices(rng, batch)] += 1
        expected = draws * batch / n
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        # dof = 49; 3-sigma band around the chi-square mean
        assert chi2 < 49 + 3 * np.sqrt(2 * 49)


class TestActionTable:
    def test_dqn_action_table(self):
        table = build_dqn_actions(-4.0, 3.0)
        assert len(table) == 27
        levels = sorted({a for _, a in table})
        for v in (3.0, 2.25, 1.5, 0.75, 0.0, -1.0, -2.0, -3.0, -4.0):
            assert v in levels
        assert {k for k, _ in table} == {-1, 0, 1}

    def test_affine_bounds_map(self):
        assert scale_to_bounds(0.0, -4.0, 3.0) == pytest.approx(-0.5)
        assert scale_to_bounds(1.0, -4.0, 3.0) == pytest.approx(3.0)
        assert scale_to_bounds(-1.0, -4.0, 3.0) == pytest.approx(-4.0)


class TestPRLAgent:
    def make(self, **kw):
        cfg = tiny_scenario()
        acfg = AgentConfig(batch_size=8, buffer_capacity=512, grad_clip=0.0, **kw)
        return PRLAgent(cfg, acfg, seed=1), cfg

    def test_param_outputs_inside_bounds(self):
        agent, cfg = self.make()
        rng = np.random.default_rng(0)
        for _ in range(100):
            grid, logic = random_obs(cfg, rng)
            gb, lb = agent._features((grid, logic))
            x = agent.param_values(gb, lb)[0]
            assert np.all(x >= cfg.a_min - 1e-12)
            assert np.all(x <= cfg.a_max + 1e-12)

    def test_greedy_action_is_argmax(self):
        agent, cfg = self.make()
        rng = np.random.default_rng(1)
        grid, logic = random_obs(cfg, rng)
        gb, lb = agent._features((grid, logic))
        x = agent.param_values(gb, lb)
        q = agent.q_values(gb, lb, x)[0]
        k, xk = agent.act((grid, logic), explore=False, rng=rng)
        assert k == K_VALUES[int(np.argmax(q))]
        assert xk == pytest.approx(float(x[0, int(np.argmax(q))]))

    def test_argmax_invariant_under_constant_shift(self):
        agent, cfg = self.make()
        rng = np.random.default_rng(2)
        grid, logic = random_obs(cfg, rng)
        k0, _ = agent.act((grid, logic), explore=False, rng=rng)
        agent.q.head.layers[-1].b += 123.45  # shift every Q output equally
        k1, _ = agent.act((grid, logic), explore=False, rng=rng)
        assert k0 == k1

    def test_uniform_exploration_at_eps_one(self):
        agent, cfg = self.make()
        agent.exploration.epsilon = 1.0
        rng = np.random.default_rng(3)
        grid, logic = random_obs(cfg, rng)
        counts = {-1: 0, 0: 0, 1: 0}
        draws = 10_000
        for _ in range(draws):
            k, _ = agent.act((grid, logic), explore=True, rng=rng)
            counts[k] += 1
        for k in counts:
            assert counts[k] / draws == pytest.approx(1 / 3, abs=0.02)

    def test_td_target_terminal_and_bootstrap(self):
        agent, cfg = self.make()
        rng = np.random.default_rng(4)
        for i in range(8):
            grid, logic = random_obs(cfg, rng)
            agent.record((grid, logic), (K_VALUES[i % 3], 0.5), -50.0,
                         (grid, logic), i % 2 == 0)
        batch = agent.buffer.batch(np.arange(8))
        y = agent.td_targets(batch)
        x2 = agent.param_values(batch["next_grid"], batch["next_logic"],
                                net=agent.mu_target)
        q2 = agent.q_values(batch["next_grid"], batch["next_logic"], x2,
                            net=agent.q_target).max(axis=1)
        for i in range(8):
            if batch["done"][i]:
                assert y[i] == pytest.approx(-50.0)
            else:
                assert y[i] == pytest.approx(-50.0 + 0.99 * q2[i])

    def test_td_target_static_without_soft_update(self):
        agent, cfg = self.make()
        rng = np.random.default_rng(5)
        for i in range(8):
            grid, logic = random_obs(cfg, rng)
            agent.record((grid, logic), (0, 0.0), -1.0, (grid, logic), False)
        batch = agent.buffer.batch(np.arange(8))
        y1 = agent.td_targets(batch)
        # mutate the online nets; targets must not move
        for _, w, _ in agent.q.params():
            w += 0.05
        for _, w, _ in agent.mu.params():
            w += 0.05
        y2 = agent.td_targets(batch)
        np.testing.assert_array_equal(y1, y2)

    def test_gradient_separation(self):
        agent, cfg = self.make()
        rng = np.random.default_rng(6)
        for i in range(8):
            grid, logic = random_obs(cfg, rng)
            agent.record((grid, logic), (K_VALUES[i % 3], -1.0), -5.0,
                         (grid, logic), False)
        batch = agent.buffer.batch(np.arange(8))
        rows = np.arange(8)
        k_idx = np.searchsorted(K_VALUES, batch["k"])
        y = agent.td_targets(batch)

        # Q-loss backward touches only theta
        x_fill = agent.param_values(batch["grid"], batch["logic"])
        x_fill[rows, k_idx] = batch["x"]
        q_pred = agent.q.forward(batch["grid"], batch["logic"], x_fill)
        gout = np.zeros_like(q_pred)
        gout[rows, k_idx] = (q_pred[rows, k_idx] - y) / 8
        agent.q.backward(gout, accumulate=True)
        assert any(np.any(g != 0) for _, _, g in agent.q.params())
        assert all(np.all(g == 0) for _, _, g in agent.mu.params())

        # parameter-loss backward touches only omega
        from ecodrive.nn import zero_grads
        zero_grads(agent.q)
        tanh_out = agent.mu.forward(batch["grid"], batch["logic"])
        x_pi = scale_to_bounds(tanh_out, cfg.a_min, cfg.a_max)
        q_pi = agent.q.forward(batch["grid"], batch["logic"], x_pi)
        _, extras = agent.q.backward(np.full_like(q_pi, -1.0 / 8), accumulate=False)
        agent.mu.backward(extras[1] * 3.5, accumulate=True)
        assert all(np.all(g == 0) for _, _, g in agent.q.params())
        assert any(np.any(g != 0) for _, _, g in agent.mu.params())

    def test_q_loss_gradient_matches_finite_difference(self):
        agent, cfg = self.make()
        rng = np.random.default_rng(7)
        for i in range(8):
            grid, logic = random_obs(cfg, rng)
            agent.record((grid, logic), (K_VALUES[i % 3], -1.0 + 0.3 * i), -5.0,
                         (grid, logic), i % 3 == 0)
        batch = agent.buffer.batch(np.arange(8))
        # binary grids tie in the pooling windows, where the max is not
        # differentiable; jitter the inputs so the check probes smooth points
        batch["grid"] += np.random.default_rng(77).normal(0, 0.01, batch["grid"].shape)
        rows = np.arange(8)
        k_idx = np.searchsorted(K_VALUES, batch["k"])
        y = agent.td_targets(batch)
        x_fill = agent.param_values(batch["grid"], batch["logic"])
        x_fill[rows, k_idx] = batch["x"]

        def loss() -> float:
            q = agent.q.forward(batch["grid"], batch["logic"], x_fill,
                                keep_cache=False)
            return 0.5 * float(np.mean((q[rows, k_idx] - y) ** 2))

        q_pred = agent.q.forward(batch["grid"], batch["logic"], x_fill)
        gout = np.zeros_like(q_pred)
        gout[rows, k_idx] = (q_pred[rows, k_idx] - y) / 8
        agent.q.backward(gout, accumulate=True)

        h = 1e-6
        worst = 0.0
        check_rng = np.random.default_rng(8)
        for name, w, g in agent.q.params():
            flat_w, flat_g = w.reshape(-1), g.reshape(-1)
            for i in check_rng.choice(flat_w.size, size=min(10, flat_w.size),
                                      replace=False):
                orig = flat_w[i]
                flat_w[i] = orig + h
                lp = loss()
                flat_w[i] = orig - h
                lm = loss()
                flat_w[i] = orig
                fd = (lp - lm) / (2 * h)
                worst = max(worst, abs(fd - flat_g[i]) / max(abs(fd), abs(flat_g[i]), 1e-6))
        assert worst < 1e-4

    def test_param_loss_gradient_matches_finite_difference(self):
        agent, cfg = self.make()
        rng = np.random.default_rng(9)
        for i in range(8):
            grid, logic = random_obs(cfg, rng)
            agent.record((grid, logic), (0, 0.0), -5.0, (grid, logic), False)
        batch = agent.buffer.batch(np.arange(8))
        batch["grid"] += np.random.default_rng(78).normal(0, 0.01, batch["grid"].shape)
        span = 0.5 * (cfg.a_max - cfg.a_min)

        def loss() -> float:
            t = agent.mu.forward(batch["grid"], batch["logic"], keep_cache=False)
            x = scale_to_bounds(t, cfg.a_min, cfg.a_max)
            q = agent.q.forward(batch["grid"], batch["logic"], x, keep_cache=False)
            return -float(np.mean(q.sum(axis=1)))

        t_out = agent.mu.forward(batch["grid"], batch["logic"])
        x_pi = scale_to_bounds(t_out, cfg.a_min, cfg.a_max)
        q_pi = agent.q.forward(batch["grid"], batch["logic"], x_pi)
        _, extras = agent.q.backward(np.full_like(q_pi, -1.0 / 8), accumulate=False)
        agent.mu.backward(extras[1] * span, accumulate=True)

        h = 1e-6
        worst = 0.0
        check_rng = np.random.default_rng(10)
        for name, w, g in agent.mu.params():
            flat_w, flat_g = w.reshape(-1), g.reshape(-1)
            for i in check_rng.choice(flat_w.size, size=min(10, flat_w.size),
                                      replace=False):
                orig = flat_w[i]
                flat_w[i] = orig + h
                lp = loss()
                flat_w[i] = orig - h
                lm = loss()
                flat_w[i] = orig
                fd = (lp - lm) / (2 * h)
                worst = max(worst, abs(fd - flat_g[i]) / max(abs(fd), abs(flat_g[i]), 1e-6))
        assert worst < 1e-4

    def test_learn_keeps_stored_actions_in_bounds(self):
        agent, cfg = self.make()
        rng = np.random.default_rng(11)
        agent.exploration.epsilon = 0.7
        grid, logic = random_obs(cfg, rng)
        for i in range(40):
            k, x = agent.act((grid, logic), explore=True, rng=rng)
            assert cfg.a_min <= x <= cfg.a_max
            agent.record((grid, logic), (k, x), -1.0, (grid, logic), False)
        assert np.all(agent.buffer.x[:40] >= cfg.a_min)
        assert np.all(agent.buffer.x[:40] <= cfg.a_max)
        out = agent.learn(rng)
        assert out is not None and np.isfinite(out["q_loss"])

    def test_checkpoint_roundtrip(self, tmp_path):
        from ecodrive.nn import load_checkpoint, save_checkpoint
        agent, cfg = self.make()
        rng = np.random.default_rng(12)
        grid, logic = random_obs(cfg, rng)
        k0, x0 = agent.act((grid, logic), explore=False, rng=rng)
        path = tmp_path / "agent.json"
        save_checkpoint(str(path), agent.state_payload())
        fresh = PRLAgent(cfg, AgentConfig(batch_size=8, buffer_capacity=512), seed=99)
        fresh.load_payload(load_checkpoint(str(path)))
        k1, x1 = fresh.act((grid, logic), explore=False, rng=rng)
        assert (k0, x0) == (k1, x1)


class TestBaselineAgents:
    def test_dqn_terminal_target_and_greedy(self):
        cfg = tiny_scenario()
        agent = DQNAgent(cfg, AgentConfig(batch_size=4, buffer_capacity=64,
                                          grad_clip=0.0), seed=2)
        rng = np.random.default_rng(0)
        grid, logic = random_obs(cfg, rng)
        action = agent.act((grid, logic), explore=False, rng=rng)
        gb, lb = agent._features((grid, logic))
        q = agent.q.forward(gb, lb, keep_cache=False)[0]
        assert action == agent.actions[int(np.argmax(q))]
        for i in range(4):
            agent._last_action_index = i
            agent.record((grid, logic), agent.actions[i], -7.0, (grid, logic), True)
        batch = agent.buffer.batch(np.arange(4))
        q2 = agent.q_target.forward(batch["next_grid"], batch["next_logic"],
                                    keep_cache=False)
        y = batch["reward"] + 0.99 * ~batch["done"] * q2.max(axis=1)
        np.testing.assert_allclose(y, -7.0)

    def test_dqn_loss_gradient_matches_finite_difference(self):
        cfg = tiny_scenario()
        agent = DQNAgent(cfg, AgentConfig(batch_size=4, buffer_capacity=64,
                                          grad_clip=0.0), seed=3)
        rng = np.random.default_rng(1)
        grid, logic = random_obs(cfg, rng)
        for i in range(4):
            agent._last_action_index = i * 5
            agent.record((grid, logic), agent.actions[i * 5], -3.0,
                         (grid, logic), i % 2 == 0)
        batch = agent.buffer.batch(np.arange(4))
        batch["grid"] += np.random.default_rng(79).normal(0, 0.01, batch["grid"].shape)
        rows = np.arange(4)
        idx = batch["k"].astype(np.int64)
        q2 = agent.q_target.forward(batch["next_grid"], batch["next_logic"],
                                    keep_cache=False)
        y = batch["reward"] + 0.99 * ~batch["done"] * q2.max(axis=1)

        def loss() -> float:
            q = agent.q.forward(batch["grid"], batch["logic"], keep_cache=False)
            return float(np.mean((q[rows, idx] - y) ** 2))

        q_pred = agent.q.forward(batch["grid"], batch["logic"])
        gout = np.zeros_like(q_pred)
        gout[rows, idx] = 2.0 * (q_pred[rows, idx] - y) / 4
        agent.q.backward(gout, accumulate=True)

        h = 1e-6
        worst = 0.0
        check_rng = np.random.default_rng(2)
        for name, w, g in agent.q.params():
            flat_w, flat_g = w.reshape(-1), g.reshape(-1)
            for i in check_rng.choice(flat_w.size, size=min(8, flat_w.size),
                                      replace=False):
                orig = flat_w[i]
                flat_w[i] = orig + h
                lp = loss()
                flat_w[i] = orig - h
                lm = loss()
                flat_w[i] = orig
                fd = (lp - lm) / (2 * h)
                worst = max(worst, abs(fd - flat_g[i]) / max(abs(fd), abs(flat_g[i]), 1e-6))
        assert worst < 1e-4

    def test_ddpg_actor_map_and_soft_update_blend(self):
        cfg = tiny_scenario()
        agent = DDPGAgent(cfg, AgentConfig(batch_size=4, buffer_capacity=64,
                                           grad_clip=0.0), seed=4)
        # tanh output 0 maps to the bounds midpoint
        for _, w, _ in agent.actor.params():
            w[:] = 0.0
        rng = np.random.default_rng(3)
        grid, logic = random_obs(cfg, rng)
        k, accel = agent.act((grid, logic), explore=False, rng=rng)
        assert accel == pytest.approx((cfg.a_min + cfg.a_max) / 2)
        assert k == 0  # no env handle: rule decision defaults to stay

    def test_ddpg_actor_gradient_matches_finite_difference(self):
        cfg = tiny_scenario()
        agent = DDPGAgent(cfg, AgentConfig(batch_size=4, buffer_capacity=64,
                                           grad_clip=0.0), seed=5)
        rng = np.random.default_rng(4)
        grid, logic = random_obs(cfg, rng)
        for i in range(4):
            agent.record((grid, logic), (0, -1.0), -2.0, (grid, logic), False)
        batch = agent.buffer.batch(np.arange(4))
        batch["grid"] += np.random.default_rng(80).normal(0, 0.01, batch["grid"].shape)
        span = 0.5 * (cfg.a_max - cfg.a_min)

        def loss() -> float:
            t = agent.actor.forward(batch["grid"], batch["logic"], keep_cache=False)
            a = scale_to_bounds(t, cfg.a_min, cfg.a_max)
            q = agent.critic.forward(batch["grid"], batch["logic"], a,
                                     keep_cache=False)
            return -float(np.mean(q[:, 0]))

        t_pi = agent.actor.forward(batch["grid"], batch["logic"])
        a_pi = scale_to_bounds(t_pi, cfg.a_min, cfg.a_max)
        q_pi = agent.critic.forward(batch["grid"], batch["logic"], a_pi)
        _, extras = agent.critic.backward(np.full_like(q_pi, -1.0 / 4),
                                          accumulate=False)
        agent.actor.backward(extras[1] * span, accumulate=True)

        h = 1e-6
        worst = 0.0
        check_rng = np.random.default_rng(5)
        for name, w, g in agent.actor.params():
            flat_w, flat_g = w.reshape(-1), g.reshape(-1)
            for i in check_rng.choice(flat_w.size, size=min(8, flat_w.size),
                                      replace=False):
                orig = flat_w[i]
                flat_w[i] = orig + h
                lp = loss()
                flat_w[i] = orig - h
                lm = loss()
                flat_w[i] = orig
                fd = (lp - lm) / (2 * h)
                worst = max(worst, abs(fd - flat_g[i]) / max(abs(fd), abs(flat_g[i]), 1e-6))
        assert worst < 1e-4
