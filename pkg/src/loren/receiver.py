"""Convolutional neural receiver with per-code-rate low-rank 1x1 adapters.

The base network is ``conv_in -> residual blocks -> conv_out``; each residual
block computes ``x + conv2(act(ln2(conv1(act(ln1(x))))))``. An adapter-carrying
layer adds ``(alpha / rank) * conv1x1(conv1x1(x, A), B)`` to its convolution.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .phy.ldpc import cr_milli
from .tensor import (Parameter, ShapeError, Tensor, add, conv1x1, conv2d, layer_norm, relu, scale,
                     sigmoid)

ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid}


class UnknownCodeRateError(KeyError):
    def __str__(self) -> str:
        return f"unknown code rate: {self.args[0]}"


class WeightFileError(ValueError):
    """Malformed or structurally incompatible weight container."""


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 32
    num_res_blocks: int = 2
    kernel: int = 3
    num_rx: int = 2
    bits_per_symbol: int = 4
    num_symbols: int = 14
    num_subcarriers: int = 128
    # number of adapter layers (the last ones among the residual convs) or explicit ids
    adapter_layers: int | tuple[str, ...] = 2
    rank: int = 4
    alpha: float = 1.0
    activation: str = "relu"

    def __post_init__(self):
        if isinstance(self.adapter_layers, list):
            object.__setattr__(self, "adapter_layers", tuple(self.adapter_layers))
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")
        ids = self.adapter_layer_ids
        if len(ids) not in (1, 2, 4):
            raise ValueError(f"adapter layer count must be 1, 2 or 4, got {len(ids)}")
        unknown = set(ids) - set(self.conv_layer_ids)
        if unknown:
            raise ValueError(f"adapter layers {sorted(unknown)} are not conv layers of this model")

    @property
    def input_channels(self) -> int:
        return 2 * self.num_rx + 1

    @property
    def residual_conv_ids(self) -> list[str]:
        return [f"block{i}/conv{j}" for i in range(self.num_res_blocks) for j in (1, 2)]

    @property
    def conv_layer_ids(self) -> list[str]:
        return ["conv_in", *self.residual_conv_ids, "conv_out"]

    @property
    def adapter_layer_ids(self) -> tuple[str, ...]:
        if isinstance(self.adapter_layers, int):
            convs = self.residual_conv_ids
            n = self.adapter_layers
            if n > len(convs):
                raise ValueError(f"{n} adapter layers requested but the model has {len(convs)} residual convs")
            return tuple(convs[len(convs) - n:])
        return tuple(self.adapter_layers)

    def conv_dims(self, layer_id: str) -> tuple[int, int]:
        """(input channels, output channels) of a conv layer."""
        if layer_id == "conv_in":
            return self.input_channels, self.channels
        if layer_id == "conv_out":
            return self.channels, self.bits_per_symbol
        return self.channels, self.channels


class BaseWeights:
    """Named parameters of the base network (the frozen ``W0`` during adapter training)."""

    def __init__(self, config: ModelConfig, params: dict[str, Parameter]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "BaseWeights":
        k = config.kernel
        grid = (config.num_symbols, config.num_subcarriers, config.channels)
        params: dict[str, Parameter] = {}
        for lid in config.conv_layer_ids:
            cin, cout = config.conv_dims(lid)
            std = np.sqrt(2.0 / (k * k * cin))
            if lid == "conv_out":
                std *= 0.1
            params[f"{lid}/w"] = Parameter(rng.standard_normal((k, k, cin, cout)) * std)
            params[f"{lid}/b"] = Parameter(np.zeros(cout))
        for i in range(config.num_res_blocks):
            for j in (1, 2):
                params[f"block{i}/ln{j}/gamma"] = Parameter(np.ones(grid))
                params[f"block{i}/ln{j}/beta"] = Parameter(np.zeros(grid))
        return cls(config, dict(sorted(params.items())))

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self.params.values())

    def freeze(self) -> None:
        for p in self.params.values():
            p.trainable = False

    def unfreeze(self) -> None:
        for p in self.params.values():
            p.trainable = True

    def count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, p in self.params.items():
            h.update(name.encode())
            h.update(p.data.tobytes())
        return h.hexdigest()

    def copy(self) -> "BaseWeights":
        return BaseWeights(self.config, {n: Parameter(p.data.copy(), p.trainable)
                                         for n, p in self.params.items()})


@dataclass(eq=False)
class LorenAdapter:
    A: Parameter  # [C_in, r]
    B: Parameter  # [r, C_out]
    alpha: float

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def delta(self) -> np.ndarray:
        """The effective channel-mixing update ``(alpha / r) A B``."""
        return self.scaling * (self.A.data @ self.B.data)

    def count(self) -> int:
        return self.A.data.size + self.B.data.size


class AdapterRegistry:
    """Per-code-rate adapters keyed by ``cr_milli``; one code rate is active at a time."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.layer_ids = config.adapter_layer_ids
        self.adapters: dict[int, dict[str, LorenAdapter]] = {}
        self.active_cr: int | None = None

    def register(self, cr: float, rng: np.random.Generator | None = None) -> dict[str, LorenAdapter]:
        """Add adapters for ``cr``: A ~ N(0, 1/C_in), B = 0 (A = 0 too if no rng)."""
        key = cr_milli(cr)
        r, alpha = self.config.rank, self.config.alpha
        layers = {}
        for lid in self.layer_ids:
            cin, cout = self.config.conv_dims(lid)
            A = rng.standard_normal((cin, r)) / np.sqrt(cin) if rng is not None else np.zeros((cin, r))
            layers[lid] = LorenAdapter(Parameter(A), Parameter(np.zeros((r, cout))), alpha)
        self.adapters[key] = layers
        if self.active_cr is None:
            self.active_cr = key
        return layers

    def add(self, cr: float, layers: dict[str, LorenAdapter]) -> None:
        if set(layers) != set(self.layer_ids):
            raise WeightFileError(f"adapter layers {sorted(layers)} do not match the configured "
                                  f"{sorted(self.layer_ids)}")
        for lid, ad in layers.items():
            cin, cout = self.config.conv_dims(lid)
            if ad.A.shape[0] != cin or ad.B.shape[1] != cout or ad.A.shape[1] != ad.B.shape[0]:
                raise WeightFileError(f"adapter {lid} has shapes {ad.A.shape}/{ad.B.shape}, "
                                      f"expected [{cin}, r]/[r, {cout}]")
        self.adapters[cr_milli(cr)] = layers

    def __contains__(self, cr: float) -> bool:
        return cr_milli(cr) in self.adapters

    @property
    def code_rates(self) -> list[float]:
        return [k / 1000 for k in sorted(self.adapters)]

    def switch_cr(self, cr: float) -> None:
        key = cr_milli(cr)
        if key not in self.adapters:
            raise UnknownCodeRateError(float(cr))
        self.active_cr = key

    def active(self) -> dict[str, LorenAdapter]:
        if self.active_cr is None or self.active_cr not in self.adapters:
            raise UnknownCodeRateError(self.active_cr)
        return self.adapters[self.active_cr]

    def parameters(self, cr: float | None = None) -> list[Parameter]:
        keys = sorted(self.adapters) if cr is None else [cr_milli(cr)]
        out = []
        for key in keys:
            for lid in self.layer_ids:
                ad = self.adapters[key][lid]
                out += [ad.A, ad.B]
        return out

    def count_per_cr(self) -> int:
        r = self.config.rank
        return sum(r * sum(self.config.conv_dims(lid)) for lid in self.layer_ids)


def switch_cr(registry: AdapterRegistry, cr: float) -> None:
    registry.switch_cr(cr)


# --------------------------------------------------------------------------
# forward passes

def build_input_features(rx: np.ndarray, n0: float, num_rx: int | None = None) -> Tensor:
    """Stack ``[Re y_a, Im y_a]`` per antenna plus a constant ``log(n0)`` plane."""
    if n0 <= 0:
        raise ValueError("noise variance n0 must be positive")
    rx = np.asarray(rx)
    if num_rx is not None and rx.shape[0] != num_rx:
        raise ShapeError(f"received {rx.shape[0]} antenna grids, model expects {num_rx}")
    A, T, F = rx.shape
    feats = np.empty((T, F, 2 * A + 1))
    feats[..., 0:2 * A:2] = np.moveaxis(rx.real, 0, -1)
    feats[..., 1:2 * A:2] = np.moveaxis(rx.imag, 0, -1)
    feats[..., -1] = np.log(n0)
    return Tensor(feats)


def _conv_layer(x: Tensor, weights: BaseWeights, lid: str, adapters: dict[str, LorenAdapter] | None):
    y = conv2d(x, weights[f"{lid}/w"], weights[f"{lid}/b"])
    if adapters is not None and lid in adapters:
        ad = adapters[lid]
        y = add(y, scale(conv1x1(conv1x1(x, ad.A), ad.B), ad.scaling))
    return y


def _forward(features: Tensor, weights: BaseWeights, adapters) -> Tensor:
    cfg = weights.config
    if features.shape != (cfg.num_symbols, cfg.num_subcarriers, cfg.input_channels):
        raise ShapeError(f"features have shape {features.shape}, model expects "
                         f"{(cfg.num_symbols, cfg.num_subcarriers, cfg.input_channels)}")
    act = ACTIVATIONS[cfg.activation]
    x = _conv_layer(features, weights, "conv_in", adapters)
    for i in range(cfg.num_res_blocks):
        p = f"block{i}"
        z = act(layer_norm(x, weights[f"{p}/ln1/gamma"], weights[f"{p}/ln1/beta"]))
        z = _conv_layer(z, weights, f"{p}/conv1", adapters)
        z = act(layer_norm(z, weights[f"{p}/ln2/gamma"], weights[f"{p}/ln2/beta"]))
        z = _conv_layer(z, weights, f"{p}/conv2", adapters)
        x = add(x, z)
    return _conv_layer(x, weights, "conv_out", adapters)


def forward_base(features: Tensor, weights: BaseWeights) -> Tensor:
    """LLRs ``[T, F, B]`` of the base network (positive means bit 0)."""
    return _forward(features, weights, None)


def forward_loren(features: Tensor, weights: BaseWeights, registry: AdapterRegistry) -> Tensor:
    """LLRs with the active code rate's adapters applied."""
    return _forward(features, weights, registry.active())


def merge_adapter(w0: np.ndarray, adapter: LorenAdapter) -> np.ndarray:
    """Fold the adapter's update into the centre tap of a ``k x k`` kernel."""
    w0 = np.asarray(getattr(w0, "data", w0))
    k, _, cin, cout = w0.shape
    d = adapter.delta()
    if d.shape != (cin, cout):
        raise ShapeError(f"adapter update {d.shape} does not fit kernel {w0.shape}")
    merged = w0.copy()
    merged[k // 2, k // 2] += d
    return merged


def merged_weights(weights: BaseWeights, registry: AdapterRegistry) -> BaseWeights:
    """Base weights with the active adapters merged; usable with :func:`forward_base`."""
    out = weights.copy()
    for lid, ad in registry.active().items():
        out.params[f"{lid}/w"] = Parameter(merge_adapter(weights[f"{lid}/w"].data, ad), trainable=False)
    return out


def parameter_counts(config: ModelConfig) -> dict[str, int]:
    """Analytic parameter counts of the base network and of one code rate's adapters."""
    k = config.kernel
    conv_w = sum(k * k * ci * co for ci, co in map(config.conv_dims, config.conv_layer_ids))
    conv_b = sum(co for _, co in map(config.conv_dims, config.conv_layer_ids))
    ln_one = config.num_symbols * config.num_subcarriers * config.channels
    n_ln = 2 * config.num_res_blocks
    adapter = sum(config.rank * (ci + co) for ci, co in map(config.conv_dims, config.adapter_layer_ids))
    return {
        "conv_weights": conv_w,
        "conv_biases": conv_b,
        "layer_norm_gamma_only": n_ln * ln_one,
        "layer_norm_gamma_beta": 2 * n_ln * ln_one,
        "total_gamma_only": conv_w + conv_b + n_ln * ln_one,
        "total_gamma_beta": conv_w + conv_b + 2 * n_ln * ln_one,
        "adapter_per_cr": adapter,
    }


# --------------------------------------------------------------------------
# weight container

_MAGIC = b"LRNW"
_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4"), 2: np.dtype("<i8")}
_TAGS = {np.dtype(np.float64): 0, np.dtype(np.float32): 1, np.dtype(np.int64): 2}


def write_container(path, tensors: dict[str, np.ndarray]) -> None:
    if len(tensors) > 0xFFFF:
        raise WeightFileError("too many tensors for one container")
    out = [_MAGIC, struct.pack("<HH", _VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _TAGS:
            raise WeightFileError(f"unsupported dtype {arr.dtype} for {name}")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        tag = _TAGS[arr.dtype]
        out.append(struct.pack("<B", tag))
        out.append(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def read_container(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise WeightFileError(f"{path}: bad magic, not a weight container")
    if len(blob) < 8:
        raise WeightFileError(f"{path}: truncated header")
    version, count = struct.unpack_from("<HH", blob, 4)
    if version != _VERSION:
        raise WeightFileError(f"{path}: unsupported container version {version}")
    pos, out = 8, {}

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise WeightFileError(f"{path}: truncated at byte {pos}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        (tag,) = struct.unpack("<B", take(1))
        if tag not in _DTYPES:
            raise WeightFileError(f"{path}: unknown dtype tag {tag} for {name}")
        dt = _DTYPES[tag]
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        out[name] = np.frombuffer(take(size), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    if pos != len(blob):
        raise WeightFileError(f"{path}: {len(blob) - pos} trailing bytes; shape table inconsistent with payload")
    return out


def save_weights(path, weights: BaseWeights | None, registry: AdapterRegistry | None = None,
                 extra: dict[str, np.ndarray] | None = None) -> None:
    tensors: dict[str, np.ndarray] = {}
    if weights is not None:
        tensors.update({f"base/{n}": p.data for n, p in weights.params.items()})
    if registry is not None:
        tensors["adapter/alpha"] = np.asarray(registry.config.alpha, dtype=np.float64)
        for key in sorted(registry.adapters):
            for lid in registry.layer_ids:
                ad = registry.adapters[key][lid]
                tensors[f"adapter/{key}/{lid}/A"] = ad.A.data
                tensors[f"adapter/{key}/{lid}/B"] = ad.B.data
    tensors.update(extra or {})
    write_container(path, tensors)


def infer_model_config(tensors: dict[str, np.ndarray], **overrides) -> ModelConfig:
    """Recover the model dimensions from base tensor shapes."""
    try:
        k, _, cin, c = tensors["base/conv_in/w"].shape
        bits = tensors["base/conv_out/w"].shape[3]
        T, F, _ = tensors["base/block0/ln1/gamma"].shape
    except KeyError as e:
        raise WeightFileError(f"missing base tensor {e.args[0]}") from None
    blocks = len({n.split("/")[1] for n in tensors if n.startswith("base/block")})
    kw = dict(channels=c, num_res_blocks=blocks, kernel=k, num_rx=(cin - 1) // 2, bits_per_symbol=bits,
              num_symbols=T, num_subcarriers=F)
    kw.update(overrides)
    return ModelConfig(**kw)


def load_weights(path, config: ModelConfig | None = None
                 ) -> tuple[BaseWeights | None, AdapterRegistry | None, dict[str, np.ndarray]]:
    """Load (base weights, adapter registry, remaining tensors) from a container.

    With ``config`` given, every tensor shape and adapter layer id is checked
    against it.
    """
    tensors = read_container(path)
    base = {n[5:]: a for n, a in tensors.items() if n.startswith("base/")}
    adapt = {n: a for n, a in tensors.items() if n.startswith("adapter/")}
    extra = {n: a for n, a in tensors.items() if not n.startswith(("base/", "adapter/"))}

    weights = None
    if base:
        if config is None:
            config = infer_model_config(tensors)
        expected = BaseWeights.init(config, np.random.default_rng(0))
        if set(base) != set(expected.params):
            missing = sorted(set(expected.params) - set(base))
            surplus = sorted(set(base) - set(expected.params))
            raise WeightFileError(f"{path}: base tensors do not match model (missing {missing}, extra {surplus})")
        for n, a in base.items():
            if a.shape != expected.params[n].shape:
                raise WeightFileError(f"{path}: {n} has shape {a.shape}, model expects {expected.params[n].shape}")
        weights = BaseWeights(config, {n: Parameter(base[n].copy()) for n in expected.params})

    registry = None
    if adapt:
        alpha = float(adapt.pop("adapter/alpha", np.asarray(1.0)))
        groups: dict[int, dict[str, dict[str, np.ndarray]]] = {}
        for n, a in adapt.items():
            parts = n.split("/")
            if len(parts) < 4 or parts[-1] not in ("A", "B"):
                raise WeightFileError(f"{path}: malformed adapter tensor name {n}")
            groups.setdefault(int(parts[1]), {}).setdefault("/".join(parts[2:-1]), {})[parts[-1]] = a
        layer_ids = sorted({lid for g in groups.values() for lid in g})
        ranks = {m["A"].shape[1] for g in groups.values() for m in g.values() if "A" in m}
        if config is None:
            if weights is None:
                raise WeightFileError(f"{path}: adapters without base weights need a model config")
            config = weights.config
        if len(ranks) != 1:
            raise WeightFileError(f"{path}: inconsistent adapter ranks {sorted(ranks)}")
        if set(layer_ids) != set(config.adapter_layer_ids):
            raise WeightFileError(f"{path}: adapter layers {layer_ids} do not match the model's "
                                  f"{sorted(config.adapter_layer_ids)}")
        acfg = replace(config, rank=ranks.pop(), alpha=alpha)
        registry = AdapterRegistry(acfg)
        for key in sorted(groups):
            layers = {}
            for lid, m in groups[key].items():
                if set(m) != {"A", "B"}:
                    raise WeightFileError(f"{path}: adapter {key}/{lid} lacks A or B")
                layers[lid] = LorenAdapter(Parameter(m["A"].copy()), Parameter(m["B"].copy()), alpha)
            registry.add(key / 1000, layers)
        registry.active_cr = min(registry.adapters)
    return weights, registry, extra
