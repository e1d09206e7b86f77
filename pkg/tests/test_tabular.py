"""Value-iteration oracle and chain MDP tests."""

import numpy as np
import pytest

from croprl.errors import ConfigurationError, DivergenceError, ProtocolError
from croprl.tabular import ChainEnv, TabularMDP, chain_mdp, greedy_policy, value_iteration


def _single_state_loop(reward=1.0, terminal=False) -> TabularMDP:
    return TabularMDP(
        n_states=1,
        n_actions=1,
        transitions=((((1.0, 0, reward, terminal),),),),
    )


def test_single_state_geometric_series():
    q = value_iteration(_single_state_loop(), gamma=0.5)
    assert q[0, 0] == pytest.approx(2.0, abs=1e-9)


def test_two_state_chain_with_reward_at_absorbing_goal():
    # goal pays 1 when left (terminal); the step into it pays nothing
    mdp = TabularMDP(
        n_states=2,
        n_actions=2,
        transitions=(
            (((1.0, 0, 0.0, False),), ((1.0, 1, 0.0, False),)),
            (((1.0, 1, 1.0, True),), ((1.0, 1, 1.0, True),)),
        ),
    )
    q = value_iteration(mdp, gamma=0.9)
    assert q[0, 1] == pytest.approx(0.9, abs=1e-9)
    assert q[1, 0] == pytest.approx(1.0, abs=1e-9)


def test_gamma_one_non_episodic_diverges():
    with pytest.raises(DivergenceError):
        value_iteration(_single_state_loop(), gamma=1.0)


def test_gamma_one_episodic_is_fine():
    q = value_iteration(_single_state_loop(terminal=True), gamma=1.0)
    assert q[0, 0] == pytest.approx(1.0)


def test_constant_reward_shift_in_continuing_mdp():
    # in an all-non-terminal MDP, shifting every reward by c moves every
    # Q value by c/(1-gamma) and leaves the greedy policy unchanged
    rng = np.random.default_rng(8)
    gamma = 0.8
    rewards = rng.normal(size=(3, 2))
    def build(shift):
        rows = []
        for s in range(3):
            row = []
            for a in range(2):
                nxt = (s + a + 1) % 3
                row.append(((1.0, nxt, float(rewards[s, a] + shift), False),))
            rows.append(tuple(row))
        return TabularMDP(3, 2, tuple(rows))

    q0 = value_iteration(build(0.0), gamma)
    q5 = value_iteration(build(5.0), gamma)
    np.testing.assert_allclose(q5 - q0, np.full((3, 2), 5.0 / (1 - gamma)), atol=1e-7)
    np.testing.assert_array_equal(greedy_policy(q0), greedy_policy(q5))


def test_validation_catches_bad_mdps():
    with pytest.raises(ConfigurationError):
        TabularMDP(1, 1, ((((0.7, 0, 0.0, False),),),)).validate()  # probs != 1
    with pytest.raises(ConfigurationError):
        TabularMDP(2, 1, ((((1.0, 5, 0.0, False),),),) * 2).validate()  # bad state
    with pytest.raises(ConfigurationError):
        value_iteration(_single_state_loop(), gamma=1.5)
    with pytest.raises(ConfigurationError):
        value_iteration(_single_state_loop(), gamma=0.9, tol=-1.0)


def test_chain_q_star_closed_form():
    gamma = 0.9
    q = value_iteration(chain_mdp(8), gamma)
    for s in range(7):
        assert q[s, 1] == pytest.approx(gamma ** (6 - s), abs=1e-9)
    # optimal policy goes right everywhere it matters
    assert list(greedy_policy(q)[:7]) == [1] * 7
    # left from s bounces to max(s-1, 0) with no reward
    assert q[0, 0] == pytest.approx(gamma * gamma**6, abs=1e-9)
    assert q[7, 0] == 0.0 and q[7, 1] == 0.0


def test_chain_env_episode():
    env = ChainEnv(8)
    obs = env.reset()
    np.testing.assert_array_equal(obs, np.eye(8)[0])
    total = 0.0
    for _ in range(7):
        obs, r, done, _ = env.step(1)
        total += r
    assert done and total == 1.0
    np.testing.assert_array_equal(obs, np.eye(8)[7])
    with pytest.raises(ProtocolError):
        env.step(1)


def test_chain_env_truncates_at_max_steps():
    env = ChainEnv(8, max_steps=5)
    env.reset()
    done = False
    steps = 0
    while not done:
        _, r, done, _ = env.step(0)
        steps += 1
    assert steps == 5 and r == 0.0


def test_chain_env_rejects_bad_action():
    env = ChainEnv(8)
    env.reset()
    with pytest.raises(ConfigurationError):
        env.step(3)
