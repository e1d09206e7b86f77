"""Named parameter collections, initialization, and checkpoint files.

A checkpoint is a text manifest followed by one raw little-endian float64
blob. The manifest pins the format version, a one-line JSON metadata
record, and one line per tensor (name, dtype, shape, byte offset, byte
count), including any optimizer-state entries. Loading is bit-exact.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, InputError, UsageError
from .tensor import Tensor

_FORMAT_HEADER = "croprl-checkpoint v1"
_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


class ParameterSet:
    """An ordered, uniquely named set of trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if not _NAME_RE.match(name):
            raise UsageError(f"parameter name {name!r} has characters outside [A-Za-z0-9_.-]")
        if name in self._params:
            raise UsageError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def num_values(self) -> int:
        """Total scalar parameter count."""
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def clone(self) -> "ParameterSet":
        other = ParameterSet()
        for name, t in self._params.items():
            other.add(name, Tensor(t.data.copy(), requires_grad=True))
        return other

    def copy_from(self, other: "ParameterSet") -> None:
        """Overwrite values in place from a same-structure set (target sync)."""
        if other.names() != self.names():
            raise UsageError("parameter sets differ in names or order")
        for name, t in self._params.items():
            source = other[name]
            if source.shape != t.shape:
                raise UsageError(
                    f"parameter {name!r} shape mismatch: {t.shape} vs {source.shape}"
                )
            t.data[...] = source.data


def _dims_token(shape: tuple[int, ...]) -> str:
    return "x".join(str(d) for d in shape) if shape else "scalar"


def _parse_dims(token: str) -> tuple[int, ...]:
    if token == "scalar":
        return ()
    return tuple(int(d) for d in token.split("x"))


def save_checkpoint(
    path,
    params: ParameterSet,
    meta: dict | None = None,
    extra: dict[str, np.ndarray] | None = None,
) -> None:
    """Write parameters (plus optional named extra arrays) to ``path``.

    ``extra`` carries optimizer state and similar; its names share the
    manifest namespace with parameters and must not collide.
    """
    entries: list[tuple[str, np.ndarray]] = list(params.items())
    entries = [(name, t.data) for name, t in entries]
    for name, arr in (extra or {}).items():
        if not _NAME_RE.match(name):
            raise UsageError(f"checkpoint entry name {name!r} invalid")
        if name in params:
            raise UsageError(f"extra entry {name!r} collides with a parameter")
        entries.append((name, np.asarray(arr, dtype=np.float64)))

    lines = [_FORMAT_HEADER, "meta " + json.dumps(meta or {}, sort_keys=True)]
    offset = 0
    blobs: list[bytes] = []
    for name, arr in entries:
        arr64 = np.ascontiguousarray(arr, dtype="<f8")
        raw = arr64.tobytes()
        lines.append(f"tensor {name} float64 {_dims_token(arr.shape)} {offset} {len(raw)}")
        blobs.append(raw)
        offset += len(raw)
    lines.append(f"blob {offset}")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> tuple[ParameterSet, dict, dict[str, np.ndarray]]:
    """Read a checkpoint back: (parameters, metadata, extra arrays).

    Entries whose name starts with ``opt.`` are returned in the extra map;
    everything else becomes a parameter, in manifest order.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"checkpoint not found: {path}")
    raw = path.read_bytes()

    header_end = raw.find(b"\nblob ")
    if header_end < 0:
        raise InputError(f"{path}: not a checkpoint (no blob marker)")
    newline_after = raw.find(b"\n", header_end + 1)
    manifest = raw[:newline_after].decode("utf-8").splitlines()
    blob = raw[newline_after + 1 :]

    if not manifest or manifest[0] != _FORMAT_HEADER:
        raise InputError(f"{path}: unsupported checkpoint header")
    if len(manifest) < 2 or not manifest[1].startswith("meta "):
        raise InputError(f"{path}: missing metadata line")
    try:
        meta = json.loads(manifest[1][len("meta "):])
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: bad metadata JSON: {err}") from None

    blob_line = manifest[-1].split()
    if len(blob_line) != 2 or int(blob_line[1]) != len(blob):
        raise InputError(
            f"{path}: blob length mismatch (manifest says {blob_line[-1]}, "
            f"file has {len(blob)})"
        )

    params = ParameterSet()
    extra: dict[str, np.ndarray] = {}
    for line in manifest[2:-1]:
        fields = line.split()
        if len(fields) != 6 or fields[0] != "tensor" or fields[2] != "float64":
            raise InputError(f"{path}: malformed manifest line: {line!r}")
        _, name, _, dims, offset, nbytes = fields
        shape = _parse_dims(dims)
        start, count = int(offset), int(nbytes)
        arr = np.frombuffer(blob[start : start + count], dtype="<f8").reshape(shape)
        arr = arr.astype(np.float64).copy()
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise InputError(f"{path}: size mismatch for entry {name!r}")
        if name.startswith("opt."):
            extra[name] = arr
        else:
            params.add(name, Tensor(arr, requires_grad=True))
    return params, meta, extra


# ---------------------------------------------------------------- initializers

def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def embedding_init(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    return rng.normal(0.0, 0.02, size=(rows, dim))


def zeros_init(*shape: int) -> np.ndarray:
    return np.zeros(shape, dtype=np.float64)


def ones_init(*shape: int) -> np.ndarray:
    return np.ones(shape, dtype=np.float64)
