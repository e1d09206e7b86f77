"""Q-network agents: token-transformer and raw-feature MLPs.

Both backends map an observation to 25 action values through the same
fully-connected head (512 then 256 units). The transformer consumes the
27-token serialized observation with learned token and position
embeddings and CLS pooling; the MLPs consume the 25 features min-max
scaled to [0, 1]. A generic vector agent over arbitrary flat inputs backs
the tabular-MDP training oracle.

All agents share one duck-typed surface the trainer relies on:
``n_actions``, ``encode(obs) -> array``, ``q_batch(batch) -> Tensor``,
``params``, ``act_greedy``, ``act_epsilon``, ``kind``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import FEATURE_NAMES, ManagementAction, Observation, decode_action
from .errors import ConfigurationError
from .nn.layers import Embedding, Linear, MlpCore, TransformerEncoderLayer
from .nn.params import ParameterSet
from .nn.tensor import Tensor, add, no_grad, relu, reshape, slice_axis
from .serialization import (
    SEQ_LEN,
    VALUE_TOKEN_MAX,
    VOCAB_SIZE,
    FeatureRange,
    default_ranges,
    tokenize,
    validate_ranges,
)

_INIT_STREAM = 3

AGENT_KINDS = ("mlp3", "mlp5", "transformer")


@dataclass(frozen=True)
class AgentConfig:
    """Architecture description for one Q-network."""

    kind: str = "transformer"
    action_count: int = 25
    encoder_dim: int = 64
    encoder_layers: int = 2
    heads: int = 4
    ff_dim: int = 128
    head_dims: tuple[int, ...] = (512, 256)
    mlp_hidden: int = 256

    def validate(self) -> None:
        if self.kind not in AGENT_KINDS:
            raise ConfigurationError(
                f"unknown agent kind {self.kind!r}; expected one of {AGENT_KINDS}"
            )
        if self.action_count != 25:
            raise ConfigurationError("action_count is fixed at 25 by the action grid")
        if not self.head_dims:
            raise ConfigurationError("head_dims must be non-empty")
        if self.kind == "transformer":
            if self.encoder_dim % self.heads != 0:
                raise ConfigurationError(
                    f"encoder_dim {self.encoder_dim} not divisible by heads {self.heads}"
                )
            if min(self.encoder_dim, self.encoder_layers, self.heads, self.ff_dim) < 1:
                raise ConfigurationError("transformer dimensions must be >= 1")

    def analytic_param_count(self) -> int:
        """Closed-form parameter count for this architecture.

        Written out from the layer shapes, independently of any built
        network, so construction bugs cannot hide in the comparison.
        """
        self.validate()
        a = self.action_count
        if self.kind in ("mlp3", "mlp5"):
            dims = self._mlp_dims()
            return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))
        d, ff = self.encoder_dim, self.ff_dim
        total = VOCAB_SIZE * d + SEQ_LEN * d
        per_layer = (
            4 * (d * d + d)      # q, k, v, out projections
            + 2 * (2 * d)        # two layer norms, gain + bias
            + (d * ff + ff)      # feed-forward in
            + (ff * d + d)       # feed-forward out
        )
        total += self.encoder_layers * per_layer
        widths = (d, *self.head_dims, a)
        total += sum(widths[i] * widths[i + 1] + widths[i + 1] for i in range(len(widths) - 1))
        return total

    def _mlp_dims(self) -> tuple[int, ...]:
        hidden_layers = 2 if self.kind == "mlp3" else 4
        return (len(FEATURE_NAMES), *([self.mlp_hidden] * hidden_layers), self.action_count)


def _init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _INIT_STREAM]))


def _smooth_value_rows(table: np.ndarray) -> None:
    """Start the value-token embedding rows on a smooth curve over id.

    A random table treats ids 17 and 18 as unrelated symbols, so the
    untrained network assigns arbitrarily different Q-values to adjacent
    quantization buckets and greedy rollouts wander off the region the
    replay buffer covers. Interleaved sine/cosine rows with octave-spaced
    wavelengths (the usual positional-encoding ladder, scaled down to
    init magnitude) give numerically close values close starting
    embeddings, which is the ordering the quantizer already implies.
    Training deforms the rows freely afterwards; the special CLS/SEP
    rows keep their random initialization.
    """
    dim = table.shape[1]
    ids = np.arange(VALUE_TOKEN_MAX + 1, dtype=np.float64)[:, None]
    half = (np.arange(dim) // 2).astype(np.float64)
    wavelength = np.power(float(VALUE_TOKEN_MAX), 2.0 * half / dim)[None, :]
    angle = ids / wavelength
    rows = np.where(np.arange(dim) % 2 == 0, np.sin(angle), np.cos(angle))
    table[: VALUE_TOKEN_MAX + 1] = 0.02 * rows


class _AgentBase:
    """Shared action selection on top of a backend's q_forward."""

    n_actions = 25

    def q_forward(self, obs) -> np.ndarray:
        """Q-values for one observation as a length-25 float array."""
        encoded = self.encode(obs)
        with no_grad():
            q = self.q_batch(encoded[np.newaxis, ...])
        return q.data[0].copy()

    def act_greedy(self, obs) -> ManagementAction:
        # np.argmax takes the first maximal entry: documented tie-break
        return decode_action(int(np.argmax(self.q_forward(obs))))

    def act_epsilon(self, obs, epsilon: float, rng: np.random.Generator) -> ManagementAction:
        if not 0.0 <= epsilon <= 1.0:
            raise ConfigurationError(f"epsilon must be in [0, 1], got {epsilon}")
        if rng.random() < epsilon:
            return decode_action(int(rng.integers(self.n_actions)))
        return self.act_greedy(obs)

    def param_count(self) -> int:
        return self.params.num_values()


class TransformerAgent(_AgentBase):
    """Token-sequence encoder agent (the language-model-style backend)."""

    def __init__(
        self,
        config: AgentConfig | None = None,
        ranges: dict[str, FeatureRange] | None = None,
        seed: int = 0,
    ):
        config = config or AgentConfig(kind="transformer")
        config.validate()
        if config.kind != "transformer":
            raise ConfigurationError(f"TransformerAgent got config kind {config.kind!r}")
        self.config = config
        self.kind = "transformer"
        self.ranges = ranges or default_ranges()
        validate_ranges(self.ranges)
        rng = _init_rng(seed)
        self.params = ParameterSet()
        d = config.encoder_dim
        self.tok_emb = Embedding(self.params, "tok_emb", rng, VOCAB_SIZE, d)
        _smooth_value_rows(self.tok_emb.table.data)
        self.pos_emb = Embedding(self.params, "pos_emb", rng, SEQ_LEN, d)
        self.blocks = [
            TransformerEncoderLayer(
                self.params, f"enc{i}", rng, d, config.heads, config.ff_dim
            )
            for i in range(config.encoder_layers)
        ]
        widths = (d, *config.head_dims, config.action_count)
        self.head = [
            Linear(self.params, f"head{i}", rng, widths[i], widths[i + 1])
            for i in range(len(widths) - 1)
        ]

    def clone_architecture(self) -> "TransformerAgent":
        """Fresh same-shape network (independent parameters), e.g. a target net."""
        return TransformerAgent(self.config, self.ranges, seed=0)

    def encode(self, obs: Observation) -> np.ndarray:
        return tokenize(obs, self.ranges).as_array()

    def q_batch(self, tokens: np.ndarray) -> Tensor:
        """Token id batch (B, 27) to Q-value Tensor (B, 25)."""
        tokens = np.asarray(tokens)
        batch = tokens.shape[0]
        positions = np.broadcast_to(np.arange(SEQ_LEN), (batch, SEQ_LEN))
        h = add(self.tok_emb(tokens), self.pos_emb(positions))
        for block in self.blocks:
            h = block(h)
        x = reshape(slice_axis(h, 1, 0, 1), (batch, self.config.encoder_dim))
        for layer in self.head[:-1]:
            x = relu(layer(x))
        return self.head[-1](x)


class MlpAgent(_AgentBase):
    """Raw-feature MLP agent (the traditional baseline backend)."""

    def __init__(
        self,
        config: AgentConfig | None = None,
        ranges: dict[str, FeatureRange] | None = None,
        seed: int = 0,
    ):
        config = config or AgentConfig(kind="mlp3")
        config.validate()
        if config.kind not in ("mlp3", "mlp5"):
            raise ConfigurationError(f"MlpAgent got config kind {config.kind!r}")
        self.config = config
        self.kind = config.kind
        self.ranges = ranges or default_ranges()
        validate_ranges(self.ranges)
        self._lo = np.array([self.ranges[n].vmin for n in FEATURE_NAMES])
        self._width = np.array([self.ranges[n].width for n in FEATURE_NAMES])
        self.params = ParameterSet()
        self.core = MlpCore(self.params, "mlp", _init_rng(seed), config._mlp_dims())

    def clone_architecture(self) -> "MlpAgent":
        return MlpAgent(self.config, self.ranges, seed=0)

    def encode(self, obs: Observation) -> np.ndarray:
        """Min-max scale the 25 features to [0, 1], clamped."""
        scaled = (obs.as_array() - self._lo) / self._width
        return np.clip(scaled, 0.0, 1.0)

    def q_batch(self, features: np.ndarray) -> Tensor:
        return self.core(Tensor(np.asarray(features, dtype=np.float64)))


class VectorMlpAgent(_AgentBase):
    """MLP Q-network over caller-supplied flat vectors.

    Used by the tabular-MDP training oracle, where observations are
    already numeric vectors rather than crop-field snapshots.
    """

    def __init__(
        self,
        input_dim: int,
        n_actions: int,
        hidden_dims: tuple[int, ...] = (64, 64),
        seed: int = 0,
    ):
        if input_dim < 1 or n_actions < 1:
            raise ConfigurationError("input_dim and n_actions must be >= 1")
        self.kind = "vector_mlp"
        self.config = None
        self.n_actions = int(n_actions)
        self.input_dim = int(input_dim)
        self.hidden_dims = tuple(hidden_dims)
        self.params = ParameterSet()
        dims = (self.input_dim, *self.hidden_dims, self.n_actions)
        self.core = MlpCore(self.params, "mlp", _init_rng(seed), dims)

    def clone_architecture(self) -> "VectorMlpAgent":
        return VectorMlpAgent(self.input_dim, self.n_actions, self.hidden_dims, seed=0)

    def encode(self, obs) -> np.ndarray:
        vec = np.asarray(obs, dtype=np.float64)
        if vec.shape != (self.input_dim,):
            raise ConfigurationError(
                f"expected observation of shape ({self.input_dim},), got {vec.shape}"
            )
        return vec

    def q_batch(self, features: np.ndarray) -> Tensor:
        return self.core(Tensor(np.asarray(features, dtype=np.float64)))

    def act_greedy(self, obs) -> int:  # tabular harness wants raw indices
        return int(np.argmax(self.q_forward(obs)))

    def act_epsilon(self, obs, epsilon: float, rng: np.random.Generator) -> int:
        if not 0.0 <= epsilon <= 1.0:
            raise ConfigurationError(f"epsilon must be in [0, 1], got {epsilon}")
        if rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return self.act_greedy(obs)


def build_agent(
    config: AgentConfig,
    ranges: dict[str, FeatureRange] | None = None,
    seed: int = 0,
):
    """Construct the agent named by the config."""
    config.validate()
    if config.kind == "transformer":
        return TransformerAgent(config, ranges, seed)
    return MlpAgent(config, ranges, seed)


# Spec-shaped functional views of the agent API.

def q_forward(agent, obs) -> np.ndarray:
    return agent.q_forward(obs)


def act_greedy(agent, obs):
    return agent.act_greedy(obs)


def act_epsilon(agent, obs, epsilon: float, rng: np.random.Generator):
    return agent.act_epsilon(obs, epsilon, rng)
