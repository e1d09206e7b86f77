"""Adam optimizer and global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, UsageError
from .params import ParameterSet


def clip_global_norm(params: ParameterSet, max_norm: float) -> float:
    """Scale every gradient down so the joint L2 norm is at most max_norm.

    Returns the pre-clip norm. Parameters without gradients are skipped.
    """
    if max_norm <= 0:
        raise ConfigurationError(f"max_norm must be > 0, got {max_norm}")
    total = 0.0
    for t in params.tensors():
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        factor = max_norm / norm
        for t in params.tensors():
            if t.grad is not None:
                t.grad *= factor
    return norm


class Adam:
    """Adam with bias correction, one moment pair per parameter.

    State entries are exposed for checkpoints under the ``opt.`` prefix
    (``opt.m.<name>``, ``opt.v.<name>``, and the step count ``opt.t``).
    """

    def __init__(
        self,
        params: ParameterSet,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ConfigurationError(f"learning rate must be > 0, got {lr}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ConfigurationError("betas must be in [0, 1)")
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self) -> None:
        """Apply one update from the current gradients (missing grads = 0)."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def state_entries(self) -> dict[str, np.ndarray]:
        """Optimizer state in checkpoint form."""
        out: dict[str, np.ndarray] = {"opt.t": np.array([float(self.t)])}
        for name in self.params.names():
            out[f"opt.m.{name}"] = self._m[name]
            out[f"opt.v.{name}"] = self._v[name]
        return out

    def load_state(self, entries: dict[str, np.ndarray]) -> None:
        if "opt.t" not in entries:
            raise UsageError("optimizer state lacks the step counter opt.t")
        self.t = int(entries["opt.t"].reshape(())[()])
        for name in self.params.names():
            m_key, v_key = f"opt.m.{name}", f"opt.v.{name}"
            if m_key not in entries or v_key not in entries:
                raise UsageError(f"optimizer state lacks moments for {name!r}")
            if entries[m_key].shape != self._m[name].shape:
                raise UsageError(f"optimizer moment shape mismatch for {name!r}")
            self._m[name] = entries[m_key].copy()
            self._v[name] = entries[v_key].copy()
