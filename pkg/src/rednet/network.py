"""RED-Net: a symmetric stack of L convolutions followed by L
deconvolutions, optionally linked by skip connections.

Layers are numbered 1..2L. Layers 1..L are convolutions, L+1..2L are
deconvolutions. Every layer except the last is followed by a ReLU. A skip
edge ``(s, d)`` adds the rectified output of layer ``s`` to the
pre-rectification output of layer ``d``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import layers
from .errors import ConfigError, FormatError, ShapeError
from .layers import ConvSpec
from .tensor import check_4d

SKIP_STYLES = ("none", "mirrored", "sequential")


@dataclass(frozen=True)
class REDNetConfig:
    conv_layers: int
    feature_width: int = 64
    kernel: int = 3
    stride: int = 1
    padding: int | None = None
    skip_style: str = "mirrored"
    skip_step: int = 2
    global_input_skip: bool = False
    in_channels: int = 1

    def __post_init__(self):
        if self.padding is None:
            object.__setattr__(self, "padding", (self.kernel - 1) // 2 if self.stride == 1 else 0)
        if self.conv_layers < 1:
            raise ConfigError(f"conv_layers must be >= 1, got {self.conv_layers}")
        if self.feature_width < 1:
            raise ConfigError(f"feature_width must be >= 1, got {self.feature_width}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise ConfigError("need kernel >= 1, stride >= 1, padding >= 0")
        if self.skip_style not in SKIP_STYLES:
            raise ConfigError(f"skip_style must be one of {SKIP_STYLES}, got {self.skip_style!r}")
        if self.skip_step < 1:
            raise ConfigError(f"skip_step must be >= 1, got {self.skip_step}")
        if self.skip_style == "sequential" and self.stride != 1:
            raise ConfigError("sequential skips need stride 1 (block ends differ in size otherwise)")

    @property
    def depth(self) -> int:
        return 2 * self.conv_layers

    @classmethod
    def from_dict(cls, d: dict) -> "REDNetConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        if "conv_layers" not in d:
            raise ConfigError("model.conv_layers is required")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self) -> dict:
        return asdict(self)


def preset(name: str, **overrides) -> REDNetConfig:
    """The three standard depths: RED10 (no skips), RED20 and RED30."""
    table = {
        "RED10": dict(conv_layers=5, skip_style="none"),
        "RED20": dict(conv_layers=10, skip_style="mirrored", skip_step=2),
        "RED30": dict(conv_layers=15, skip_style="mirrored", skip_step=2),
    }
    try:
        base = table[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(table)}") from None
    return REDNetConfig(**{**base, **overrides})


def skip_edges(config: REDNetConfig) -> list[tuple[int, int]]:
    """Skip wiring as ``(source_layer, dest_layer)`` pairs.

    mirrored, stride 1: conv ``i`` feeds deconv ``2L+1-i`` for
    ``i = L, L-step, ... >= 1``. An edge into layer 2L is dropped because
    that layer emits ``in_channels`` maps, not ``feature_width``.

    mirrored, strided: conv ``i`` feeds deconv ``2L-i`` (the decoder layer
    whose output has the same size) for ``i = L-1, L-1-step, ... >= 1``.

    sequential(b): the output of layer ``s`` feeds layer ``s+b`` for
    ``s = b, 2b, ...`` with ``s+b < 2L``.
    """
    L, step = config.conv_layers, config.skip_step
    last = 2 * L
    if config.skip_style == "none":
        return []
    if config.skip_style == "sequential":
        return [(s, s + step) for s in range(step, last - step, step)]
    if config.stride == 1:
        pairs = [(i, last + 1 - i) for i in range(L, 0, -step)]
    else:
        pairs = [(i, last - i) for i in range(L - 1, 0, -step)]
    return [(s, d) for s, d in pairs if d < last]


def layer_specs(config: REDNetConfig) -> list[ConvSpec]:
    L, w = config.conv_layers, config.feature_width
    geo = dict(kernel=config.kernel, stride=config.stride, padding=config.padding)
    specs = []
    for idx in range(1, 2 * L + 1):
        cin = config.in_channels if idx == 1 else w
        cout = config.in_channels if idx == 2 * L else w
        specs.append(ConvSpec(cin, cout, **geo))
    return specs


def parameter_count(config: REDNetConfig) -> int:
    return sum(s.kernel**2 * s.in_ch * s.out_ch + s.out_ch for s in layer_specs(config))


@dataclass
class Network:
    config: REDNetConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    specs: list[ConvSpec] = field(init=False, repr=False)
    edges: list[tuple[int, int]] = field(init=False)

    def __post_init__(self):
        self.specs = layer_specs(self.config)
        self.edges = skip_edges(self.config)
        if len(self.weights) != len(self.specs) or len(self.biases) != len(self.specs):
            raise ShapeError("parameter list length does not match the layer count")
        for i, (spec, w, b) in enumerate(zip(self.specs, self.weights, self.biases), start=1):
            k = spec.kernel
            want = (spec.out_ch, spec.in_ch, k, k) if self.is_conv(i) else (spec.in_ch, spec.out_ch, k, k)
            if w.shape != want or b.shape != (spec.out_ch,):
                raise ShapeError(f"layer {i}: weight {w.shape}/bias {b.shape}, expected {want}/({spec.out_ch},)")

    @property
    def dtype(self):
        return self.weights[0].dtype

    def is_conv(self, layer: int) -> bool:
        return layer <= self.config.conv_layers

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list: w1, b1, w2, b2, ... (the order gradients use)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def astype(self, dtype) -> "Network":
        return Network(
            self.config,
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
        )

    def _layer_forward(self, layer, x):
        spec = self.specs[layer - 1]
        w, b = self.weights[layer - 1], self.biases[layer - 1]
        fwd = layers.conv2d_forward if self.is_conv(layer) else layers.deconv2d_forward
        return fwd(x, w, b, spec)

    def _layer_backward(self, layer, x, grad):
        spec = self.specs[layer - 1]
        bwd = layers.conv2d_backward if self.is_conv(layer) else layers.deconv2d_backward
        return bwd(x, self.weights[layer - 1], spec, grad)

    def _trace(self, x):
        check_4d(x, "input")
        if x.shape[1] != self.config.in_channels:
            raise ShapeError(f"input has {x.shape[1]} channels, network expects {self.config.in_channels}")
        x = x.astype(self.dtype, copy=False)
        incoming = {}
        for s, d in self.edges:
            incoming.setdefault(d, []).append(s)
        last = len(self.specs)
        acts = [x]
        pre = [None]
        for layer in range(1, last + 1):
            z = self._layer_forward(layer, acts[-1])
            for s in incoming.get(layer, ()):
                z = layers.skip_add_forward(acts[s], z)
            pre.append(z)
            acts.append(layers.relu_forward(z) if layer < last else z)
        out = acts[-1]
        if self.config.global_input_skip:
            out = layers.skip_add_forward(x, out)
        return out, acts, pre

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self._trace(x)[0]

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of ``sum(grad_out * forward(x))``, ordered like :meth:`parameters`."""
        out, cache = self.forward_cached(x)
        return self.backward_cached(cache, grad_out)

    def forward_cached(self, x):
        """Forward pass that also returns the activations backward needs."""
        out, acts, pre = self._trace(x)
        return out, (out.shape, acts, pre)

    def backward_cached(self, cache, grad_out):
        out_shape, acts, pre = cache
        if grad_out.shape != out_shape:
            raise ShapeError(f"grad_out shape {grad_out.shape}, expected {out_shape}")
        last = len(self.specs)
        grad_acts: list = [None] * (last + 1)
        grad_acts[last] = grad_out.astype(self.dtype, copy=False)
        grads: list = [None] * (2 * last)
        sources = {}
        for s, d in self.edges:
            sources.setdefault(d, []).append(s)
        for layer in range(last, 0, -1):
            g = grad_acts[layer]
            if layer < last:
                g = layers.relu_backward(pre[layer], g)
            for s in sources.get(layer, ()):
                _, g_src = layers.skip_add_backward(g)
                grad_acts[s] = g_src.copy() if grad_acts[s] is None else grad_acts[s] + g_src
            lg = self._layer_backward(layer, acts[layer - 1], g)
            grads[2 * layer - 2] = lg.grad_weight
            grads[2 * layer - 1] = lg.grad_bias
            prev = grad_acts[layer - 1]
            grad_acts[layer - 1] = lg.grad_input if prev is None else prev + lg.grad_input
        return grads


INIT_GAIN = {"he": 2.0, "xavier": 1.0, "zero": 0.0}


def build(config: REDNetConfig, seed: int = 0, dtype=np.float32, init: str = "he") -> Network:
    """Allocate parameters: zero biases, weights ~ N(0, 2/(k^2 c_in)).

    ``init="xavier"`` halves the variance to 1/(k^2 c_in), the usual Caffe
    filler; ``init="zero"`` gives an all-zero network, handy as an identity
    restorer when combined with ``global_input_skip``.
    """
    if init not in INIT_GAIN:
        raise ConfigError(f"init must be one of {sorted(INIT_GAIN)}, got {init!r}")
    rng = np.random.default_rng(seed)
    specs = layer_specs(config)
    weights, biases = [], []
    for i, spec in enumerate(specs, start=1):
        k = spec.kernel
        shape = (spec.out_ch, spec.in_ch, k, k) if i <= config.conv_layers else (spec.in_ch, spec.out_ch, k, k)
        std = np.sqrt(INIT_GAIN[init] / (k * k * spec.in_ch))
        weights.append((rng.standard_normal(shape) * std).astype(dtype))
        biases.append(np.zeros(spec.out_ch, dtype=dtype))
    return Network(config, weights, biases)


# checkpoint format ---------------------------------------------------------

MAGIC = b"REDN"
VERSION = 1


def to_bytes(net: Network) -> bytes:
    """Serialize; parameters are stored as little-endian float32.

    Every layer's weights are written in (out, in, kh, kw) order, so deconv
    weights are transposed from their in-memory (in, out, kh, kw) layout.
    """
    cfg = json.dumps(net.config.to_dict(), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(cfg)), cfg]
    for i, (w, b) in enumerate(zip(net.weights, net.biases), start=1):
        if not net.is_conv(i):
            w = w.transpose(1, 0, 2, 3)
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def from_bytes(blob: bytes) -> Network:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError("not a RED-Net checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version: expected {VERSION}, found {version}")
    (n,) = struct.unpack_from("<I", blob, 8)
    if 12 + n > len(blob):
        raise FormatError("truncated checkpoint (config record)")
    try:
        config = REDNetConfig.from_dict(json.loads(blob[12 : 12 + n].decode()))
    except (ValueError, UnicodeDecodeError) as e:
        raise FormatError(f"bad config record: {e}") from None
    pos = 12 + n
    specs = layer_specs(config)
    weights, biases = [], []
    for i, spec in enumerate(specs, start=1):
        k = spec.kernel
        wshape = (spec.out_ch, spec.in_ch, k, k)
        nw, nb = int(np.prod(wshape)), spec.out_ch
        end = pos + 4 * (nw + nb)
        if end > len(blob):
            raise FormatError(f"truncated checkpoint (layer {i} parameters)")
        vals = np.frombuffer(blob, dtype="<f4", count=nw + nb, offset=pos).astype(np.float32)
        w = vals[:nw].reshape(wshape)
        if i > config.conv_layers:
            w = w.transpose(1, 0, 2, 3)
        weights.append(np.ascontiguousarray(w))
        biases.append(vals[nw:].copy())
        pos = end
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes after parameter blob")
    return Network(config, weights, biases)


def save(net: Network, path) -> None:
    Path(path).write_bytes(to_bytes(net))


def load(path) -> Network:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read checkpoint {path}: {e}") from None
    return from_bytes(blob)
