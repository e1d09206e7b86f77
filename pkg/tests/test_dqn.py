"""Replay buffer, TD loss, and trainer behaviour."""

import numpy as np
import pytest

from croprl.agents import VectorMlpAgent
from croprl.dqn import (
    ReplayBuffer,
    TrainConfig,
    TransitionBatch,
    chain_train_config,
    epsilon_for,
    run_chain_oracle,
    td_loss,
    train,
)
from croprl.errors import ConfigurationError, DivergenceError, UsageError
from croprl.nn import Tensor
from croprl.nn.params import load_checkpoint
from croprl.tabular import ChainEnv


def _item(i):
    obs = np.zeros(4)
    obs[0] = i
    return (obs, i % 2, float(i), obs + 1, False)


# ---------------------------------------------------------------- replay


def test_buffer_evicts_oldest_first():
    buf = ReplayBuffer(capacity=10, rng=np.random.default_rng(0))
    for i in range(25):
        buf.push(_item(i))
    assert len(buf) == 10
    kept = [int(t[0][0]) for t in buf.contents()]
    assert kept == list(range(15, 25))


def test_buffer_sampling_is_roughly_uniform():
    buf = ReplayBuffer(capacity=20, rng=np.random.default_rng(3))
    for i in range(20):
        buf.push(_item(i))
    counts = np.zeros(20)
    draws = 100_000
    for _ in range(draws // 500):
        batch = buf.sample(500)
        for t in batch:
            counts[int(t[0][0])] += 1
    expected = draws / 20
    sigma = np.sqrt(draws * (1 / 20) * (19 / 20))
    assert np.all(np.abs(counts - expected) < 3.5 * sigma)


def test_buffer_sample_larger_than_contents_is_with_replacement():
    buf = ReplayBuffer(capacity=8, rng=np.random.default_rng(1))
    buf.push(_item(0))
    batch = buf.sample(16)
    assert len(batch) == 16


def test_buffer_rejects_bad_capacity():
    with pytest.raises(ConfigurationError):
        ReplayBuffer(capacity=0, rng=np.random.default_rng(0))


# ---------------------------------------------------------------- td loss


class _StubNet:
    """Returns a fixed Q row per observation, keyed by obs[0]."""

    def __init__(self, table, requires_grad=False):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.requires_grad = requires_grad
        self.last_batch = None

    def q_batch(self, obs):
        rows = np.stack([self.table[float(o[0])] for o in obs])
        self.last_batch = rows
        return Tensor(rows, requires_grad=self.requires_grad)


def _batch_of_one(reward=1.0, done=False):
    return TransitionBatch(
        obs=np.array([[0.0]]),
        actions=np.array([0]),
        rewards=np.array([reward]),
        next_obs=np.array([[1.0]]),
        dones=np.array([done]),
    )


def test_td_loss_hand_arithmetic():
    # y = r + gamma * max_a target(s', a) = 1 + 0.99 * 2 = 2.98
    # loss = (1.5 - 2.98)^2 = 2.1904
    online = _StubNet({0.0: [1.5, 0.0], 1.0: [0.0, 0.0]}, requires_grad=True)
    target = _StubNet({0.0: [9.0, 9.0], 1.0: [2.0, 1.0]})
    loss = td_loss(_batch_of_one(), online, target, gamma=0.99)
    assert loss.item() == pytest.approx(2.1904, abs=1e-12)


def test_td_loss_terminal_drops_bootstrap():
    online = _StubNet({0.0: [1.0, 0.0], 1.0: [0.0, 0.0]}, requires_grad=True)
    target = _StubNet({0.0: [9.0, 9.0], 1.0: [50.0, 50.0]})
    loss = td_loss(_batch_of_one(reward=1.0, done=True), online, target, gamma=0.99)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_td_loss_double_dqn_uses_online_argmax():
    # online prefers action 1 at s'; target values it at 3, so y = 1 + 0.9*3
    online = _StubNet({0.0: [0.0, 0.0], 1.0: [0.0, 10.0]}, requires_grad=True)
    target = _StubNet({0.0: [0.0, 0.0], 1.0: [7.0, 3.0]})
    loss = td_loss(_batch_of_one(), online, target, gamma=0.9, double_dqn=True)
    assert loss.item() == pytest.approx((0.0 - (1 + 0.9 * 3.0)) ** 2, abs=1e-12)


def test_td_loss_mean_is_duplicate_invariant():
    online = _StubNet({0.0: [1.5, 0.0], 1.0: [0.0, 0.0]}, requires_grad=True)
    target = _StubNet({0.0: [9.0, 9.0], 1.0: [2.0, 1.0]})
    single = td_loss(_batch_of_one(), online, target, gamma=0.99).item()
    doubled = TransitionBatch(
        obs=np.array([[0.0], [0.0]]),
        actions=np.array([0, 0]),
        rewards=np.array([1.0, 1.0]),
        next_obs=np.array([[1.0], [1.0]]),
        dones=np.array([False, False]),
    )
    assert td_loss(doubled, online, target, gamma=0.99).item() == pytest.approx(single)


def test_td_loss_empty_batch_rejected():
    online = _StubNet({}, requires_grad=True)
    empty = TransitionBatch(
        obs=np.zeros((0, 1)),
        actions=np.zeros(0, dtype=int),
        rewards=np.zeros(0),
        next_obs=np.zeros((0, 1)),
        dones=np.zeros(0, dtype=bool),
    )
    with pytest.raises(UsageError):
        td_loss(empty, online, online, gamma=0.99)


def test_td_loss_gradients_flow_only_through_online():
    agent = VectorMlpAgent(input_dim=4, n_actions=2, hidden_dims=(8,), seed=0)
    frozen = agent.clone_architecture()
    frozen.params.copy_from(agent.params)
    batch = TransitionBatch(
        obs=np.ones((3, 4)) * 0.2,
        actions=np.array([0, 1, 0]),
        rewards=np.array([1.0, -0.5, 0.0]),
        next_obs=np.ones((3, 4)) * 0.4,
        dones=np.array([False, False, True]),
    )
    loss = td_loss(batch, agent, frozen, gamma=0.9)
    loss.backward()
    online_norms = [np.abs(t.grad).sum() for t in agent.params.tensors()]
    assert any(n > 0 for n in online_norms)
    assert all(t.grad is None for t in frozen.params.tensors())


# ---------------------------------------------------------------- schedule


def test_epsilon_schedule_endpoints_and_floor():
    cfg = TrainConfig(episodes=100, epsilon_decay_episodes=60)
    assert epsilon_for(0, cfg) == pytest.approx(1.0)
    assert epsilon_for(30, cfg) == pytest.approx(0.525)
    assert epsilon_for(60, cfg) == pytest.approx(0.05)
    assert epsilon_for(99, cfg) == pytest.approx(0.05)


def test_epsilon_decay_defaults_to_sixty_percent():
    cfg = TrainConfig(episodes=200)
    assert cfg.decay_episodes() == 120


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=-1).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=10, gamma=1.2).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=10, batch_size=0).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=10, epsilon_start=0.1, epsilon_end=0.5).validate()


# ---------------------------------------------------------------- trainer


def _chain_factory():
    return ChainEnv(8)


def _tiny_agent(seed=0):
    return VectorMlpAgent(input_dim=8, n_actions=2, hidden_dims=(16,), seed=seed)


def test_train_zero_episodes_leaves_agent_untouched():
    agent = _tiny_agent()
    before = [t.data.copy() for t in agent.params.tensors()]
    result = train(_chain_factory, agent, TrainConfig(episodes=0))
    assert result.stats == [] and result.grad_steps == 0
    for t, b in zip(agent.params.tensors(), before):
        np.testing.assert_array_equal(t.data, b)


def test_train_is_deterministic_for_a_seed():
    cfg = TrainConfig(
        episodes=30, gamma=0.9, lr=3e-3, batch_size=16,
        target_sync_interval=50, replay_capacity=2000, seed=11, min_buffer=64,
    )
    runs = []
    for _ in range(2):
        agent = _tiny_agent(seed=5)
        result = train(_chain_factory, agent, cfg)
        runs.append((result.rewards, [t.data.copy() for t in agent.params.tensors()]))
    assert runs[0][0] == runs[1][0]
    for a, b in zip(runs[0][1], runs[1][1]):
        np.testing.assert_array_equal(a, b)


def test_train_different_seeds_differ():
    rewards = []
    for seed in (0, 1):
        agent = _tiny_agent(seed=2)
        cfg = TrainConfig(
            episodes=20, gamma=0.9, lr=3e-3, batch_size=16,
            target_sync_interval=50, replay_capacity=2000, seed=seed, min_buffer=64,
        )
        rewards.append(train(_chain_factory, agent, cfg).rewards)
    assert rewards[0] != rewards[1]


def test_train_learns_the_chain():
    agent = _tiny_agent(seed=7)
    result = train(_chain_factory, agent, chain_train_config(seed=7, episodes=300))
    n = len(result.rewards)
    head = np.mean(result.rewards[: n // 10])
    tail = np.mean(result.rewards[-n // 10 :])
    assert tail > head
    assert tail > 0.9  # near-always reaches the goal once greedy


def test_train_divergence_aborts_with_checkpoint(tmp_path):
    agent = _tiny_agent(seed=3)
    cfg = TrainConfig(
        episodes=50, gamma=0.9, lr=1e200, batch_size=16,
        target_sync_interval=50, replay_capacity=2000, seed=3, min_buffer=32,
    )
    ckpt = tmp_path / "abort.ckpt"
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as err:
            train(_chain_factory, agent, cfg, checkpoint_path=str(ckpt))
    assert "grad step" in str(err.value)
    params, meta, _ = load_checkpoint(str(ckpt))
    assert meta["aborted"] is True
    assert set(params.names()) == set(agent.params.names())


def test_train_writes_final_checkpoint(tmp_path):
    agent = _tiny_agent(seed=1)
    cfg = TrainConfig(
        episodes=10, gamma=0.9, lr=1e-3, batch_size=8,
        target_sync_interval=20, replay_capacity=500, seed=1, min_buffer=16,
    )
    ckpt = tmp_path / "final.ckpt"
    train(_chain_factory, agent, cfg, checkpoint_path=str(ckpt))
    params, meta, extra = load_checkpoint(str(ckpt))
    assert meta["episodes"] == 10 and meta["grad_steps"] > 0
    for name in agent.params.names():
        np.testing.assert_array_equal(params[name].data, agent.params[name].data)
    assert "opt.t" in extra


def test_train_on_episode_callback_sees_every_episode():
    agent = _tiny_agent(seed=4)
    seen = []
    cfg = TrainConfig(
        episodes=12, gamma=0.9, lr=1e-3, batch_size=8,
        target_sync_interval=20, replay_capacity=500, seed=4, min_buffer=16,
    )
    train(_chain_factory, agent, cfg, on_episode=lambda s: seen.append(s.episode))
    assert seen == list(range(12))


# ---------------------------------------------------------------- oracle


def test_chain_oracle_single_seed_smoke():
    result = run_chain_oracle(seeds=(0,), episodes=400)
    assert result.pooled_match_fraction == pytest.approx(1.0)
    assert result.worst_q_error < 0.1
    per = result.per_seed[0]
    assert per.q_table.shape == (8, 2)
    # closed-form optimum at the start state
    assert result.q_star[0, 1] == pytest.approx(0.9**6, abs=1e-9)
