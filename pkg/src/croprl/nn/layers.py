"""Neural-network building blocks on top of the tensor ops.

Each layer registers its parameters into a shared ParameterSet under a
dotted name prefix at construction time and keeps references for the
forward pass. Layers hold no other state, so a parameter snapshot fully
determines behavior.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError
from .params import ParameterSet, embedding_init, ones_init, xavier_uniform, zeros_init
from .tensor import (
    Tensor,
    add,
    embedding_lookup,
    gelu,
    layer_norm,
    matmul,
    mul,
    relu,
    reshape,
    scale,
    softmax,
    transpose,
)


class Linear:
    """Affine map on the last axis: y = x W + b."""

    def __init__(self, params: ParameterSet, prefix: str, rng, in_dim: int, out_dim: int):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = params.add(f"{prefix}.w", Tensor(xavier_uniform(rng, in_dim, out_dim)))
        self.b = params.add(f"{prefix}.b", Tensor(zeros_init(out_dim)))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"linear: input {x.shape} incompatible with in_dim {self.in_dim}")
        if x.data.ndim == 2:
            return add(matmul(x, self.w), self.b)
        lead = x.shape[:-1]
        flat = reshape(x, (-1, self.in_dim))
        out = add(matmul(flat, self.w), self.b)
        return reshape(out, (*lead, self.out_dim))


class LayerNorm:
    """Last-axis normalization with learned gain and bias."""

    def __init__(self, params: ParameterSet, prefix: str, dim: int, eps: float = 1e-5):
        self.eps = eps
        self.gain = params.add(f"{prefix}.gain", Tensor(ones_init(dim)))
        self.bias = params.add(f"{prefix}.bias", Tensor(zeros_init(dim)))

    def __call__(self, x: Tensor) -> Tensor:
        return add(mul(layer_norm(x, self.eps), self.gain), self.bias)


class Embedding:
    """Id-to-vector table, N(0, 0.02) initialized."""

    def __init__(self, params: ParameterSet, prefix: str, rng, rows: int, dim: int):
        self.table = params.add(f"{prefix}.table", Tensor(embedding_init(rng, rows, dim)))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return embedding_lookup(self.table, ids)


class MultiHeadAttention:
    """Standard scaled dot-product self-attention with h heads."""

    def __init__(self, params: ParameterSet, prefix: str, rng, dim: int, heads: int):
        if dim % heads != 0:
            raise ShapeError(f"attention dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Linear(params, f"{prefix}.q", rng, dim, dim)
        self.wk = Linear(params, f"{prefix}.k", rng, dim, dim)
        self.wv = Linear(params, f"{prefix}.v", rng, dim, dim)
        self.wo = Linear(params, f"{prefix}.out", rng, dim, dim)

    def _split(self, x: Tensor, batch: int, seq: int) -> Tensor:
        # (B, T, D) -> (B*H, T, D/H)
        x = reshape(x, (batch, seq, self.heads, self.head_dim))
        x = transpose(x, (0, 2, 1, 3))
        return reshape(x, (batch * self.heads, seq, self.head_dim))

    def __call__(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        if q.data.ndim != 3:
            raise ShapeError(f"attention expects (batch, seq, dim), got {q.shape}")
        batch, seq, _ = q.shape
        qh = self._split(self.wq(q), batch, seq)
        kh = self._split(self.wk(k), batch, seq)
        vh = self._split(self.wv(v), batch, seq)

        scores = scale(matmul(qh, transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(self.head_dim))
        mixed = matmul(softmax(scores), vh)  # (B*H, T, D/H)

        mixed = reshape(mixed, (batch, self.heads, seq, self.head_dim))
        mixed = transpose(mixed, (0, 2, 1, 3))
        mixed = reshape(mixed, (batch, seq, self.dim))
        return self.wo(mixed)


class TransformerEncoderLayer:
    """Post-norm encoder block: LN(x + attn(x)), then LN(h + ffn(h))."""

    def __init__(self, params: ParameterSet, prefix: str, rng, dim: int, heads: int, ff_dim: int):
        self.attn = MultiHeadAttention(params, f"{prefix}.attn", rng, dim, heads)
        self.ln1 = LayerNorm(params, f"{prefix}.ln1", dim)
        self.ff1 = Linear(params, f"{prefix}.ff1", rng, dim, ff_dim)
        self.ff2 = Linear(params, f"{prefix}.ff2", rng, ff_dim, dim)
        self.ln2 = LayerNorm(params, f"{prefix}.ln2", dim)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.ln1(add(x, self.attn(x, x, x)))
        return self.ln2(add(h, self.ff2(gelu(self.ff1(h)))))


class MlpCore:
    """Plain ReLU MLP over flat feature vectors."""

    def __init__(self, params: ParameterSet, prefix: str, rng, dims: tuple[int, ...]):
        if len(dims) < 2:
            raise ShapeError("mlp needs at least input and output dims")
        self.layers = [
            Linear(params, f"{prefix}.fc{i}", rng, dims[i], dims[i + 1])
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = relu(layer(x))
        return self.layers[-1](x)
