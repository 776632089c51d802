"""Coordinate networks mapping time in [-1,1] to one amplitude.

Six architectures behind one config type:

- ``nerf``   positional encoding (interleaved sin/cos octaves) + ReLU MLP
- ``siren``  sinusoidal MLP, sin(omega0 (Wx+b)) hidden activations
- ``rff``    random Fourier features (frozen Gaussian projection) + ReLU MLP
- ``wire``   complex Gabor wavelet activations carried as (real, imag) pairs
- ``finer``  variable-periodic activation sin(omega0 |u+1| u)
- ``kan``    positional encoding + layers of learnable edge functions
             phi(x) = w_b silu(x) + w_s spline(x), nodes sum, no biases

Parameters flatten in a fixed layer-major order (dense: W then b; kan:
w_b, w_s, coeffs), so flat vectors, additive deltas, and serialized
payloads all agree.  Frozen state (the RFF projection) is derived from
the config seed, never stored in the parameter vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor, ContractError, ShapeError
from .bspline import make_grid, spline_bases

ARCHS = ("nerf", "siren", "rff", "wire", "finer", "kan")

_KAN_HIDDEN = (48, 24, 12)
_MLP_HIDDEN = (128, 128, 128)


@dataclass
class InrConfig:
    """Architecture tag plus every knob needed to rebuild the network.

    ``hidden`` and ``omega0`` default per architecture when left None.
    param_count is a pure function of this record.
    """
    arch: str
    hidden: tuple[int, ...] | None = None
    encoding_length: int = 8
    rff_features: int = 64
    rff_sigma: float = 10.0
    omega0: float | None = None
    s0: float = 10.0
    finer_bias_bound: float = 1.0
    grid_size: int = 10
    spline_order: int = 2
    scale_spline: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ContractError(f"unknown arch {self.arch!r}; expected one of {ARCHS}")
        if self.hidden is None:
            self.hidden = _KAN_HIDDEN if self.arch == "kan" else _MLP_HIDDEN
        self.hidden = tuple(int(w) for w in self.hidden)
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise ContractError(f"hidden widths must be positive, got {self.hidden}")
        if self.omega0 is None:
            self.omega0 = 20.0 if self.arch == "wire" else 30.0
        if self.encoding_length < 1:
            raise ContractError(f"encoding_length must be >= 1, got {self.encoding_length}")
        if self.rff_features < 1:
            raise ContractError(f"rff_features must be >= 1, got {self.rff_features}")
        for name in ("rff_sigma", "omega0", "s0", "finer_bias_bound"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if self.grid_size < 1 or self.spline_order < 0:
            raise ContractError("grid_size must be >= 1 and spline_order >= 0")


def input_dim(config: InrConfig) -> int:
    if config.arch in ("nerf", "kan"):
        return 2 * config.encoding_length
    if config.arch == "rff":
        return 2 * config.rff_features
    return 1


def layer_dims(config: InrConfig) -> list[int]:
    return [input_dim(config), *config.hidden, 1]


def param_shapes(config: InrConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs defining the flatten layout."""
    dims = layer_dims(config)
    shapes: list[tuple[str, tuple[int, ...]]] = []
    if config.arch == "kan":
        nb = config.grid_size + config.spline_order
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            shapes.append((f"kan{i}.w_b", (d_out, d_in)))
            if config.scale_spline:
                shapes.append((f"kan{i}.w_s", (d_out, d_in)))
            shapes.append((f"kan{i}.coeffs", (d_out, d_in, nb)))
    else:
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            shapes.append((f"layer{i}.W", (d_out, d_in)))
            shapes.append((f"layer{i}.b", (d_out,)))
    return shapes


def param_count(config: InrConfig) -> int:
    return sum(int(np.prod(s)) for _, s in param_shapes(config))


class InrModel:
    """Built network: config, ordered parameter tensors, frozen embedding state."""

    def __init__(self, config: InrConfig, params: list[Tensor], embedding: dict):
        self.config = config
        self.params = params
        self.embedding = embedding

    def named_params(self) -> list[tuple[str, Tensor]]:
        return [(name, p) for (name, _), p in zip(param_shapes(self.config), self.params)]

    def forward(self, times) -> Tensor:
        return forward(self, times)


def build(config: InrConfig, seed: int | None = None) -> InrModel:
    """Initialize a network; draws happen in flatten order, embedding first."""
    rng = np.random.Generator(np.random.PCG64(config.seed if seed is None else seed))
    dt = T.get_default_dtype()
    embedding: dict = {}
    if config.arch == "rff":
        embedding["rff_b"] = rng.normal(0.0, config.rff_sigma,
                                        config.rff_features).astype(np.float64)

    dims = layer_dims(config)
    n_layers = len(dims) - 1
    params: list[Tensor] = []
    for name, shape in param_shapes(config):
        prefix = name.split(".")[0]
        layer_idx = int(prefix[3:]) if prefix.startswith("kan") else int(prefix[5:])
        data = _init_param(config, name, shape, layer_idx, n_layers, rng)
        params.append(Tensor(data.astype(dt), requires_grad=True, name=name))
    return InrModel(config, params, embedding)


def _init_param(config, name, shape, layer_idx, n_layers, rng) -> np.ndarray:
    kind = name.split(".")[1]
    if config.arch == "kan":
        d_out, d_in = shape[0], shape[1]
        if kind in ("w_b", "w_s"):
            bound = math.sqrt(6.0 / (d_in + d_out))
            return rng.uniform(-bound, bound, shape)
        return rng.normal(0.0, 0.1 / math.sqrt(shape[-1]), shape)

    d_in = shape[1] if kind == "W" else None
    if kind == "W":
        if config.arch in ("siren", "finer"):
            if layer_idx == 0:
                bound = 1.0 / d_in
            else:
                bound = math.sqrt(6.0 / d_in) / config.omega0
            return rng.uniform(-bound, bound, shape)
        if config.arch == "wire":
            return rng.normal(0.0, 1.0, shape) / math.sqrt(d_in)
        bound = math.sqrt(6.0 / d_in)                      # relu families
        return rng.uniform(-bound, bound, shape)
    # biases
    fan_in = _fan_in_for_bias(config, layer_idx)
    if config.arch == "finer" and layer_idx == 0:
        return rng.uniform(-config.finer_bias_bound, config.finer_bias_bound, shape)
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def _fan_in_for_bias(config, layer_idx) -> int:
    return layer_dims(config)[layer_idx]


# -- forward -----------------------------------------------------------------


def _pe_consts(length: int) -> tuple[np.ndarray, np.ndarray]:
    """Row of frequencies and phases turning one matmul + sin into
    interleaved [sin(2^l pi t), cos(2^l pi t)] pairs (cos x = sin(x + pi/2))."""
    octaves = math.pi * np.exp2(np.arange(length, dtype=np.float64))
    freq = np.repeat(octaves, 2)[None, :]
    phase = np.tile([0.0, math.pi / 2.0], length)
    return freq, phase


def positional_encoding(times: np.ndarray, length: int) -> np.ndarray:
    """Numpy reference: gamma(t), shape (n, 2*length); starts [0,1,0,1,...] at t=0."""
    freq, phase = _pe_consts(length)
    return np.sin(np.asarray(times, dtype=np.float64)[:, None] * freq[0] + phase)


def _rff_consts(b_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies/phases giving [cos(2 pi B t), sin(2 pi B t)] (cos block first)."""
    m = b_vec.size
    freq = 2.0 * math.pi * np.concatenate([b_vec, b_vec])[None, :]
    phase = np.concatenate([np.full(m, math.pi / 2.0), np.zeros(m)])
    return freq, phase


def _dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.ew_binary("add", T.matmul(x, T.transpose(w)), b)


def forward(model: InrModel, times) -> Tensor:
    """Amplitudes at the given times; times are clamped to [-1,1] first."""
    cfg = model.config
    t = T._as_tensor(times)
    if t.data.ndim != 1:
        raise ShapeError(f"times must be 1-D, got shape {t.shape}")
    return _forward_with(cfg, model.params, t, model.embedding)


def _forward_with(cfg: InrConfig, plist: list[Tensor], t: Tensor, embedding: dict) -> Tensor:
    n = t.size
    t2 = T.reshape(t.clamp(-1.0, 1.0), (n, 1))
    dt = t.data.dtype

    if cfg.arch == "kan":
        return _kan_forward(cfg, plist, t2, dt)
    if cfg.arch == "wire":
        return _wire_forward(cfg, plist, t2)

    if cfg.arch == "nerf":
        freq, phase = _pe_consts(cfg.encoding_length)
        x = T.ew_binary("add", T.matmul(t2, Tensor(freq.astype(dt))),
                        Tensor(phase.astype(dt))).sin()
    elif cfg.arch == "rff":
        freq, phase = _rff_consts(embedding["rff_b"])
        x = T.ew_binary("add", T.matmul(t2, Tensor(freq.astype(dt))),
                        Tensor(phase.astype(dt))).sin()
    else:
        x = t2

    pairs = [(plist[2 * i], plist[2 * i + 1]) for i in range(len(plist) // 2)]
    for i, (w, b) in enumerate(pairs):
        x = _dense(x, w, b)
        if i == len(pairs) - 1:
            break
        if cfg.arch in ("nerf", "rff"):
            x = x.relu()
        elif cfg.arch == "siren":
            x = x.scale(cfg.omega0).sin()
        elif cfg.arch == "finer":
            x = (x * x.shift(1.0).abs()).scale(cfg.omega0).sin()
    return T.reshape(x, (n,))


def _kan_forward(cfg: InrConfig, plist: list[Tensor], t2: Tensor, dt) -> Tensor:
    n = t2.shape[0]
    freq, phase = _pe_consts(cfg.encoding_length)
    x = T.ew_binary("add", T.matmul(t2, Tensor(freq.astype(dt))),
                    Tensor(phase.astype(dt))).sin()
    grid = make_grid(cfg.grid_size, cfg.spline_order)
    nb = grid.n_bases
    per_layer = 3 if cfg.scale_spline else 2
    n_layers = len(plist) // per_layer
    for i in range(n_layers):
        chunk = plist[per_layer * i: per_layer * (i + 1)]
        if cfg.scale_spline:
            w_b, w_s, coeffs = chunk
            eff = T.expand_last(w_s, nb) * coeffs
        else:
            w_b, coeffs = chunk
            eff = coeffs
        d_out, d_in = w_b.shape
        base = T.matmul(x.silu(), T.transpose(w_b))
        bases = spline_bases(x.clamp(grid.lo, grid.hi), grid)        # (n, d_in, nb)
        flat_b = T.reshape(bases, (n, d_in * nb))
        flat_e = T.reshape(eff, (d_out, d_in * nb))
        x = base + T.matmul(flat_b, T.transpose(flat_e))
    return T.reshape(x, (n,))


def _wire_forward(cfg: InrConfig, plist: list[Tensor], t2: Tensor) -> Tensor:
    n = t2.shape[0]
    om, s0 = cfg.omega0, cfg.s0
    pairs = [(plist[2 * i], plist[2 * i + 1]) for i in range(len(plist) // 2)]
    re, im = t2, None
    for w, b in pairs[:-1]:
        z_re = _dense(re, w, b)
        z_im = T.matmul(im, T.transpose(w)) if im is not None else None
        # exp(i om z) exp(-s0^2 |z|^2): combine both exponents before exp so the
        # magnitude stays bounded by e^(om^2 / (4 s0^2))
        if z_im is None:
            expo = z_re.square().scale(-s0 * s0)
        else:
            expo = z_im.scale(-om) + (z_re.square() + z_im.square()).scale(-s0 * s0)
        mag = expo.exp()
        ang = z_re.scale(om)
        re, im = mag * ang.cos(), mag * ang.sin()
    w, b = pairs[-1]
    return T.reshape(_dense(re, w, b), (n,))


# -- flat-vector plumbing ------------------------------------------------------


def flatten_params(model: InrModel) -> np.ndarray:
    return np.concatenate([p.data.ravel() for p in model.params])


def unflatten_params(config: InrConfig, vector: np.ndarray) -> InrModel:
    """Inverse of flatten: rebuild a model (frozen state comes from config.seed)."""
    vector = np.asarray(vector)
    expected = param_count(config)
    if vector.ndim != 1 or vector.size != expected:
        raise ShapeError(f"parameter vector has {vector.size} entries, "
                         f"config needs {expected}")
    model = build(config)
    off = 0
    for p in model.params:
        k = p.data.size
        p.data = vector[off:off + k].reshape(p.data.shape).astype(p.data.dtype)
        off += k
    return model


def apply_delta(model: InrModel, delta: np.ndarray) -> InrModel:
    """New model with parameters theta + delta; the input model is untouched."""
    delta = np.asarray(delta)
    expected = param_count(model.config)
    if delta.ndim != 1 or delta.size != expected:
        raise ShapeError(f"delta has {delta.size} entries, config needs {expected}")
    params = []
    off = 0
    for (name, shape), p in zip(param_shapes(model.config), model.params):
        k = p.data.size
        data = p.data + delta[off:off + k].reshape(shape).astype(p.data.dtype)
        params.append(Tensor(data, requires_grad=True, name=name))
        off += k
    return InrModel(model.config, params, dict(model.embedding))


def forward_from_flat(config: InrConfig, flat: Tensor, times, embedding: dict) -> Tensor:
    """Forward pass with all parameters sliced from one flat tensor.

    Keeps the graph connected to ``flat``, so gradients flow into
    whatever produced it (e.g. theta + delta on the tape).
    """
    if flat.data.ndim != 1 or flat.size != param_count(config):
        raise ShapeError(f"flat vector has {flat.size} entries, "
                         f"config needs {param_count(config)}")
    t = T._as_tensor(times)
    plist = []
    off = 0
    for _, shape in param_shapes(config):
        k = int(np.prod(shape))
        plist.append(T.reshape(T.narrow(flat, off, k), shape))
        off += k
    return _forward_with(config, plist, t, embedding)
