"""Small tabular MDPs and exact value iteration.

This is the correctness oracle for the DQN trainer: on a finite MDP the
optimal Q-table is computable to arbitrary precision, so a trained
network's greedy policy and Q-values can be compared against ground
truth. The 8-state chain is the standard harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError, ProtocolError

# transitions[s][a] = [(probability, next_state, reward, terminal), ...]
Outcome = tuple[float, int, float, bool]


@dataclass(frozen=True)
class TabularMDP:
    n_states: int
    n_actions: int
    transitions: tuple[tuple[tuple[Outcome, ...], ...], ...]

    def validate(self) -> None:
        if self.n_states < 1 or self.n_actions < 1:
            raise ConfigurationError("MDP needs at least one state and action")
        if len(self.transitions) != self.n_states:
            raise ConfigurationError("transitions must cover every state")
        for s, row in enumerate(self.transitions):
            if len(row) != self.n_actions:
                raise ConfigurationError(f"state {s}: transitions must cover every action")
            for a, outcomes in enumerate(row):
                if not outcomes:
                    raise ConfigurationError(f"state {s} action {a}: no outcomes")
                total = sum(p for p, _, _, _ in outcomes)
                if abs(total - 1.0) > 1e-12:
                    raise ConfigurationError(
                        f"state {s} action {a}: probabilities sum to {total}, not 1"
                    )
                for p, nxt, _, _ in outcomes:
                    if p < 0 or not 0 <= nxt < self.n_states:
                        raise ConfigurationError(
                            f"state {s} action {a}: bad outcome ({p}, {nxt})"
                        )


def value_iteration(
    mdp: TabularMDP,
    gamma: float,
    tol: float = 1e-10,
    max_iters: int = 200_000,
) -> np.ndarray:
    """Compute Q* by fixed-point iteration; returns an (S, A) array.

    Terminal outcomes never bootstrap. Raises DivergenceError when the
    sup-norm residual fails to reach ``tol`` (e.g. gamma = 1 on a
    non-episodic MDP, where the Bellman operator has no contraction).
    """
    mdp.validate()
    if not 0.0 <= gamma <= 1.0:
        raise ConfigurationError(f"gamma must be in [0, 1], got {gamma}")
    if tol <= 0:
        raise ConfigurationError(f"tol must be > 0, got {tol}")

    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iters):
        v = q.max(axis=1)
        fresh = np.zeros_like(q)
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                total = 0.0
                for p, nxt, r, terminal in mdp.transitions[s][a]:
                    bootstrap = 0.0 if terminal else gamma * v[nxt]
                    total += p * (r + bootstrap)
                fresh[s, a] = total
        residual = float(np.max(np.abs(fresh - q)))
        q = fresh
        if not np.all(np.isfinite(q)) or np.max(np.abs(q)) > 1e12:
            raise DivergenceError("value iteration diverged (unbounded returns)")
        if residual < tol:
            return q
    raise DivergenceError(
        f"value iteration failed to contract below {tol} in {max_iters} sweeps"
    )


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """First-maximal action per state."""
    return np.argmax(q, axis=1)


def chain_mdp(n_states: int = 8) -> TabularMDP:
    """Deterministic corridor: move left/right, +1 for entering the last
    state (terminal), 0 elsewhere. Action 0 = left, 1 = right."""
    if n_states < 2:
        raise ConfigurationError("chain needs at least 2 states")
    goal = n_states - 1
    rows = []
    for s in range(n_states):
        if s == goal:
            outcomes_left = ((1.0, goal, 0.0, True),)
            outcomes_right = ((1.0, goal, 0.0, True),)
        else:
            left_state = max(0, s - 1)
            right_state = s + 1
            outcomes_left = ((1.0, left_state, 0.0, False),)
            outcomes_right = (
                (1.0, right_state, 1.0, True)
                if right_state == goal
                else (1.0, right_state, 0.0, False),
            )
        rows.append((outcomes_left, outcomes_right))
    return TabularMDP(n_states=n_states, n_actions=2, transitions=tuple(rows))


class ChainEnv:
    """Episodic reset/step view of the chain MDP with one-hot observations.

    Interface shape matches the crop environment closely enough for the
    shared trainer: reset(seed) -> obs; step(action) -> (obs, reward,
    done, info). Dynamics are deterministic; the seed is accepted for
    interface compatibility and ignored.
    """

    def __init__(self, n_states: int = 8, max_steps: int = 40):
        self.mdp = chain_mdp(n_states)
        self.n_states = n_states
        self.n_actions = 2
        self.max_steps = max_steps
        self._state = 0
        self._steps = 0
        self._done = True

    def _obs(self) -> np.ndarray:
        one_hot = np.zeros(self.n_states)
        one_hot[self._state] = 1.0
        return one_hot

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._state = 0
        self._steps = 0
        self._done = False
        return self._obs()

    def step(self, action: int):
        if self._done:
            raise ProtocolError("step called on a finished episode")
        action = int(action)
        if action not in (0, 1):
            raise ConfigurationError(f"chain action must be 0 or 1, got {action}")
        ((_, nxt, reward, terminal),) = self.mdp.transitions[self._state][action]
        self._state = nxt
        self._steps += 1
        self._done = terminal or self._steps >= self.max_steps
        return self._obs(), reward, self._done, None
