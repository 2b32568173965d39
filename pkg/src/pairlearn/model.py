"""Multilayer perceptron classifier with a softmax head, plus checkpoint I/O."""

from __future__ import annotations

import json
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError, FormatError

CHECKPOINT_FORMAT = "pairlearn-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigError("layer_sizes needs at least an input and an output entry")
        if any(s <= 0 for s in sizes):
            raise ConfigError(f"layer sizes must be positive, got {list(sizes)}")
        if sizes[-1] < 2:
            raise ConfigError("the output layer needs K >= 2 nodes")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def group_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            shapes.append((f"layer{i}.weight", (fan_out, fan_in)))
            shapes.append((f"layer{i}.bias", (fan_out,)))
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.group_shapes())


class ParameterVector(Mapping):
    """Ordered, named parameter groups supporting linear combinations.

    Arithmetic (``+``, ``-``, scalar ``*``) requires identical group names and
    shapes on both sides and returns a new vector with the same structure.
    """

    # numpy scalars on the left defer to __rmul__ instead of broadcasting
    __array_ufunc__ = None

    def __init__(self, groups: Mapping[str, np.ndarray]):
        self._groups = {name: np.array(arr, dtype=np.float64) for name, arr in groups.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._groups[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._groups)

    def __len__(self) -> int:
        return len(self._groups)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}{v.shape}" for k, v in self._groups.items())
        return f"ParameterVector({inner})"

    @property
    def total_len(self) -> int:
        return sum(arr.size for arr in self._groups.values())

    def structure(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        return tuple((name, arr.shape) for name, arr in self._groups.items())

    def check_compatible(self, other: ParameterVector) -> None:
        if self.structure() != other.structure():
            raise ContractError("parameter vectors have different group structure")

    def _combine(self, other, op) -> ParameterVector:
        if isinstance(other, ParameterVector):
            self.check_compatible(other)
            return ParameterVector({k: op(v, other[k]) for k, v in self._groups.items()})
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, ParameterVector):
            return NotImplemented
        return ParameterVector({k: v * float(scalar) for k, v in self._groups.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def copy(self) -> ParameterVector:
        return ParameterVector(self._groups)

    def zeros_like(self) -> ParameterVector:
        return ParameterVector({k: np.zeros_like(v) for k, v in self._groups.items()})

    def flatten(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self._groups.values()])

    def unflatten(self, flat: np.ndarray) -> ParameterVector:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.total_len:
            raise ContractError(f"expected {self.total_len} values, got {flat.size}")
        out, offset = {}, 0
        for name, arr in self._groups.items():
            out[name] = flat[offset : offset + arr.size].reshape(arr.shape).copy()
            offset += arr.size
        return ParameterVector(out)

    def equals(self, other: ParameterVector) -> bool:
        return self.structure() == other.structure() and all(
            np.array_equal(v, other[k]) for k, v in self._groups.items()
        )


@dataclass
class Mlp:
    """Dense relu network ending in softmax over ``spec.n_outputs`` nodes."""

    spec: MlpSpec
    params: ParameterVector = field(repr=False)

    def __post_init__(self):
        expected = tuple((name, shape) for name, shape in self.spec.group_shapes())
        if self.params.structure() != expected:
            raise ContractError("parameters do not match the network spec")

    @property
    def n_layers(self) -> int:
        return len(self.spec.layer_sizes) - 1

    def with_params(self, params: ParameterVector) -> Mlp:
        return Mlp(self.spec, params)

    def copy(self) -> Mlp:
        return Mlp(self.spec, self.params.copy())

    def param_values(self, requires_grad: bool = True) -> dict[str, ad.Value]:
        return {k: ad.Value(v, requires_grad=requires_grad) for k, v in self.params.items()}

    def logits(self, x, values: Mapping[str, ad.Value] | None = None) -> ad.Value:
        x = ad.lift(x)
        if x.data.ndim != 2 or x.shape[1] != self.spec.n_inputs:
            raise ContractError(f"expected features of shape (n, {self.spec.n_inputs}), got {x.shape}")
        if values is None:
            values = self.param_values(requires_grad=False)
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            # output layer accumulates in fixed order: node permutations stay exact
            h = ad.affine(h, values[f"layer{i}.weight"], values[f"layer{i}.bias"], ordered=i == last)
            if i < last:
                h = ad.relu(h)
        return h

    def forward(self, x, values: Mapping[str, ad.Value] | None = None) -> ad.Value:
        return ad.softmax(self.logits(x, values), axis=-1)

    def predict(self, x) -> np.ndarray:
        """Class-probability rows for a feature matrix."""
        return self.forward(np.asarray(x, dtype=np.float64)).data

    def assign(self, x) -> np.ndarray:
        """Index of the most probable output node per row."""
        return np.argmax(self.predict(x), axis=1)


def build(spec: MlpSpec) -> Mlp:
    """Glorot-uniform weights from ``spec.seed``; zero biases."""
    rng = np.random.default_rng(spec.seed)
    groups = {}
    for name, shape in spec.group_shapes():
        if name.endswith(".weight"):
            fan_out, fan_in = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            groups[name] = rng.uniform(-limit, limit, size=shape)
        else:
            groups[name] = np.zeros(shape)
    return Mlp(spec, ParameterVector(groups))


def permute_outputs(model: Mlp, perm) -> Mlp:
    """Reorder the output nodes: new node ``i`` is old node ``perm[i]``."""
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(model.spec.n_outputs)):
        raise ContractError("perm must be a permutation of the output nodes")
    last = model.n_layers - 1
    groups = dict(model.params.items())
    groups[f"layer{last}.weight"] = groups[f"layer{last}.weight"][perm]
    groups[f"layer{last}.bias"] = groups[f"layer{last}.bias"][perm]
    return model.with_params(ParameterVector(groups))


def save_checkpoint(model: Mlp, path) -> None:
    """Length-prefixed JSON header line, then little-endian float64 parameters."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(model.spec.layer_sizes),
        "activation": model.spec.activation,
        "seed": int(model.spec.seed),
    }
    line = (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
    payload = model.params.flatten().astype("<f8").tobytes()
    Path(path).write_bytes(struct.pack("<I", len(line)) + line + payload)


def load_checkpoint(path, layer_sizes=None) -> Mlp:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated checkpoint")
    (n,) = struct.unpack("<I", raw[:4])
    if len(raw) < 4 + n:
        raise FormatError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(raw[4 : 4 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable checkpoint header ({exc})") from None
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
    try:
        spec = MlpSpec(tuple(header["layer_sizes"]), header["activation"], int(header["seed"]))
    except (KeyError, TypeError, ConfigError) as exc:
        raise FormatError(f"{path}: invalid network description in header ({exc})") from None
    if layer_sizes is not None and tuple(int(s) for s in layer_sizes) != spec.layer_sizes:
        raise FormatError(
            f"{path}: checkpoint has layer_sizes {list(spec.layer_sizes)}, expected {list(layer_sizes)}"
        )
    body = raw[4 + n :]
    if len(body) != 8 * spec.n_params():
        raise FormatError(f"{path}: expected {spec.n_params()} parameters, found {len(body) / 8:g}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    template = ParameterVector({name: np.zeros(shape) for name, shape in spec.group_shapes()})
    return Mlp(spec, template.unflatten(flat))
