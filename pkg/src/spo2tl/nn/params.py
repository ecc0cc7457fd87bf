"""Model configuration and named parameter storage."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import CheckpointError, ShapeError

GATES = ("i", "f", "g", "o")
DIRECTIONS = ("fwd", "bwd")
GROUPS = ("bilstm", "attention", "fc")


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    layers: int = 2
    use_attention: bool = True
    input_dim: int = 2
    seq_len: int = 125
    seed: int = 0

    @property
    def width(self) -> int:
        """Feature width of the bidirectional output (2 * hidden)."""
        return 2 * self.hidden

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(**d)
        except TypeError as exc:
            raise CheckpointError(f"bad model config: {exc}") from None

    def structure(self) -> dict:
        """Fields that determine parameter shapes (the seed does not)."""
        d = self.to_dict()
        d.pop("seed")
        return d


def group_of(name: str) -> str:
    head = name.split(".", 1)[0]
    if head.startswith("l") and head[1:].isdigit():
        return "bilstm"
    if head == "attn":
        return "attention"
    if head == "fc":
        return "fc"
    raise KeyError(name)


def parameter_shapes(config: ModelConfig) -> dict:
    """Canonical parameter names mapped to shapes, in checkpoint order."""
    h, H = config.hidden, config.width
    shapes = {}
    for layer in range(1, config.layers + 1):
        d_in = config.input_dim if layer == 1 else H
        for direction in DIRECTIONS:
            prefix = f"l{layer}.{direction}"
            for gate in GATES:
                shapes[f"{prefix}.W{gate}"] = (d_in, h)
            for gate in GATES:
                shapes[f"{prefix}.U{gate}"] = (h, h)
            for gate in GATES:
                shapes[f"{prefix}.b{gate}"] = (h,)
    if config.use_attention:
        for m in ("Wq", "Wk", "Wv"):
            shapes[f"attn.{m}"] = (H, H)
    shapes["fc.W"] = (H, 1)
    shapes["fc.b"] = (1,)
    return shapes


def _xavier(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ModelParams:
    """Named float64 arrays plus per-group trainable flags.

    ``buffers`` hold fixed, never-trained arrays (the per-channel input scale).
    ``version`` increments on every in-place update so stale forward caches can
    be detected.
    """

    def __init__(self, config: ModelConfig, arrays: dict, trainable=None, buffers=None):
        self.config = config
        expected = parameter_shapes(config)
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise ShapeError(f"parameter names mismatch (missing {missing}, extra {extra})")
        self.arrays = {}
        for name, shape in expected.items():
            a = np.array(arrays[name], dtype=np.float64)
            if a.shape != tuple(shape):
                raise ShapeError(f"{name}: shape {a.shape}, expected {shape}")
            self.arrays[name] = a
        self.trainable = {g: True for g in self.groups}
        if trainable:
            for g, flag in trainable.items():
                if g in self.trainable:
                    self.trainable[g] = bool(flag)
        scale = np.ones(config.input_dim)
        if buffers and "norm.x_scale" in buffers:
            scale = np.array(buffers["norm.x_scale"], dtype=np.float64).reshape(config.input_dim)
        self.buffers = {"norm.x_scale": scale}
        self.version = 0

    @classmethod
    def initialize(cls, config: ModelConfig, seed=None) -> "ModelParams":
        """Xavier-uniform matrices, zero biases, forget-gate bias 1."""
        rng = np.random.default_rng(config.seed if seed is None else seed)
        arrays = {}
        for name, shape in parameter_shapes(config).items():
            if len(shape) == 2:
                arrays[name] = _xavier(rng, shape)
            elif name.endswith(".bf"):
                arrays[name] = np.ones(shape)
            else:
                arrays[name] = np.zeros(shape)
        return cls(config, arrays)

    @property
    def groups(self):
        return tuple(g for g in GROUPS if g != "attention" or self.config.use_attention)

    def __getitem__(self, name):
        return self.arrays[name]

    def names(self, group=None):
        return [n for n in self.arrays if group is None or group_of(n) == group]

    def trainable_names(self):
        return [n for n in self.arrays if self.trainable[group_of(n)]]

    def set_trainable(self, **flags) -> None:
        for g, flag in flags.items():
            if g not in self.trainable:
                raise KeyError(f"unknown parameter group {g!r}")
            self.trainable[g] = bool(flag)

    def copy(self) -> "ModelParams":
        out = ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()},
                          dict(self.trainable), {k: v.copy() for k, v in self.buffers.items()})
        return out

    def group_hash(self, group: str) -> str:
        h = hashlib.sha256()
        for name in self.names(group):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.arrays[name]).tobytes())
        return h.hexdigest()

    def bump(self) -> None:
        self.version += 1
