"""Hypernetwork meta-trainer: one shared network, per-clip weight updates.

A convolutional encoder maps a fixed-length window of audio to an
embedding E_S; a small MLP compresses the shared (universal) weights
theta into an embedding E_theta of the same width; a hypernetwork maps
their concatenation to an additive update, giving per-clip weights
theta' = theta + delta.  All four parameter groups (encoder gamma,
weight encoder delta_p, hypernetwork eta, and theta itself) train
jointly by backpropagating the reconstruction loss of every adapted
network in the batch.

The hypernetwork's output layer starts at zero, so before any training
the adapted network is exactly the universal one.

Arbitrary-length audio is reconstructed window by window (50% overlap,
final window right-aligned) and blended with a half-sample-offset Hann
crossfade normalized to sum to one at every sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor, ContractError, ShapeError
from . import inr
from .inr import InrConfig
from .loss import DEFAULT_RESOLUTIONS, make_combined_loss
from .optim import AdamW, OneCycleSchedule, one_cycle_lr


@dataclass
class FewSoundConfig:
    target: InrConfig
    window: int = 32768
    sample_rate: int = 22050
    embed_dim: int = 64
    conv0_channels: int = 16
    encoder_channels: tuple[int, ...] = (32, 32, 64, 64)
    weight_enc_hidden: int = 256
    hyper_hidden: tuple[int, ...] = (256,)
    lam_t: float = 1.0
    lam_f: float = 1.0
    epochs: int = 100
    lr: float | None = None
    seed: int = 0
    batch_size: int | None = None      # None: whole dataset each step

    def __post_init__(self):
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        self.hyper_hidden = tuple(int(w) for w in self.hyper_hidden)
        if self.window < 16:
            raise ContractError(f"window too small: {self.window}")
        if self.embed_dim < 1 or self.conv0_channels < 1:
            raise ContractError("embed_dim and conv0_channels must be positive")
        if not self.encoder_channels or not self.hyper_hidden:
            raise ContractError("encoder_channels and hyper_hidden must be non-empty")
        if self.lr is None:
            self.lr = 1e-6 if self.target.arch == "siren" else 1e-5
        if self.window % (2 ** len(self.encoder_channels)) != 0:
            raise ContractError(
                f"window {self.window} must be divisible by "
                f"2^{len(self.encoder_channels)} for the stride-2 blocks")


class FewSoundState:
    """Parameter groups gamma (encoder), delta (weight encoder), eta
    (hypernetwork), and the flat universal weights theta."""

    def __init__(self, config: FewSoundConfig,
                 encoder: list[tuple[str, Tensor]],
                 weight_enc: list[tuple[str, Tensor]],
                 hyper: list[tuple[str, Tensor]],
                 theta: Tensor, target_embedding: dict):
        self.config = config
        self.encoder = encoder
        self.weight_enc = weight_enc
        self.hyper = hyper
        self.theta = theta
        self.target_embedding = target_embedding

    def groups(self) -> dict[str, list[Tensor]]:
        return {
            "encoder": [p for _, p in self.encoder],
            "weight_enc": [p for _, p in self.weight_enc],
            "hyper": [p for _, p in self.hyper],
            "theta": [self.theta],
        }

    def named_params(self) -> list[tuple[str, Tensor]]:
        return [*self.encoder, *self.weight_enc, *self.hyper, ("theta", self.theta)]


def _encoder_plan(cfg: FewSoundConfig) -> list[tuple[str, tuple[int, ...]]]:
    shapes = [("enc.conv0.w", (cfg.conv0_channels, 1, 7)),
              ("enc.conv0.b", (cfg.conv0_channels,))]
    c_prev = cfg.conv0_channels
    for i, c in enumerate(cfg.encoder_channels):
        shapes += [(f"enc.block{i}.down.w", (c, c_prev, 4)),
                   (f"enc.block{i}.down.b", (c,)),
                   (f"enc.block{i}.a.w", (c, c, 3)),
                   (f"enc.block{i}.a.b", (c,)),
                   (f"enc.block{i}.b.w", (c, c, 1)),
                   (f"enc.block{i}.b.b", (c,))]
        c_prev = c
    shapes += [("enc.final.w", (c_prev, c_prev, 3)), ("enc.final.b", (c_prev,)),
               ("enc.out.w", (cfg.embed_dim, c_prev)), ("enc.out.b", (cfg.embed_dim,))]
    return shapes


def _weight_enc_plan(cfg: FewSoundConfig, p_count: int) -> list[tuple[str, tuple[int, ...]]]:
    h = cfg.weight_enc_hidden
    return [("wenc.l0.w", (h, p_count)), ("wenc.l0.b", (h,)),
            ("wenc.l1.w", (cfg.embed_dim, h)), ("wenc.l1.b", (cfg.embed_dim,))]


def _hyper_plan(cfg: FewSoundConfig, p_count: int) -> list[tuple[str, tuple[int, ...]]]:
    dims = [2 * cfg.embed_dim, *cfg.hyper_hidden, p_count]
    shapes = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        shapes += [(f"hyper.l{i}.w", (b, a)), (f"hyper.l{i}.b", (b,))]
    return shapes


def state_param_count(cfg: FewSoundConfig) -> int:
    p = inr.param_count(cfg.target)
    plans = _encoder_plan(cfg) + _weight_enc_plan(cfg, p) + _hyper_plan(cfg, p)
    return sum(int(np.prod(s)) for _, s in plans) + p


def build_state(config: FewSoundConfig) -> FewSoundState:
    """Seeded init; the hypernetwork's last layer starts at exactly zero."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    dt = T.get_default_dtype()
    p_count = inr.param_count(config.target)

    def draw(shapes, zero_last_layer=False):
        out = []
        last_w = shapes[-2][0] if zero_last_layer else None
        for name, shape in shapes:
            if zero_last_layer and name in (last_w, shapes[-1][0]):
                data = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else _bias_fan(name, shapes)
                bound = math.sqrt(6.0 / fan_in) if len(shape) > 1 else 1.0 / math.sqrt(fan_in)
                data = rng.uniform(-bound, bound, shape)
            out.append((name, Tensor(data.astype(dt), requires_grad=True, name=name)))
        return out

    encoder = draw(_encoder_plan(config))
    weight_enc = draw(_weight_enc_plan(config, p_count))
    hyper = draw(_hyper_plan(config, p_count), zero_last_layer=True)

    universal = inr.build(config.target)
    theta = Tensor(inr.flatten_params(universal).astype(dt),
                   requires_grad=True, name="theta")
    return FewSoundState(config, encoder, weight_enc, hyper, theta, universal.embedding)


def _bias_fan(bias_name: str, shapes) -> int:
    stem = bias_name[:-2] + ".w"
    for name, shape in shapes:
        if name == stem:
            return int(np.prod(shape[1:]))
    raise ContractError(f"no weight matching bias {bias_name!r}")


def state_flatten(state: FewSoundState) -> np.ndarray:
    """All four groups as one float64 vector, in named_params order."""
    return np.concatenate([p.data.ravel().astype(np.float64)
                           for _, p in state.named_params()])


def state_unflatten(state: FewSoundState, vector: np.ndarray) -> None:
    """Assign a vector produced by state_flatten back into the state."""
    vector = np.asarray(vector)
    expected = state_param_count(state.config)
    if vector.ndim != 1 or vector.size != expected:
        raise ShapeError(f"state vector has {vector.size} entries, "
                         f"config implies {expected}")
    off = 0
    for _, p in state.named_params():
        k = p.data.size
        p.data = vector[off:off + k].reshape(p.data.shape).astype(p.data.dtype)
        off += k


# -- the three mappings --------------------------------------------------------


def encode_audio(state: FewSoundState, window) -> Tensor:
    """E_S for one window of exactly config.window samples."""
    cfg = state.config
    x = T._as_tensor(window)
    if x.shape != (cfg.window,):
        raise ContractError(f"window must have exactly {cfg.window} samples, "
                            f"got shape {x.shape}")
    p = dict(state.encoder)
    h = T.conv1d(T.reshape(x, (1, cfg.window)), p["enc.conv0.w"], p["enc.conv0.b"],
                 stride=1, padding=3).relu()
    for i in range(len(cfg.encoder_channels)):
        down = T.conv1d(h, p[f"enc.block{i}.down.w"], p[f"enc.block{i}.down.b"],
                        stride=2, padding=1).relu()
        r = T.conv1d(down, p[f"enc.block{i}.a.w"], p[f"enc.block{i}.a.b"],
                     stride=1, padding=1).relu()
        r = T.conv1d(r, p[f"enc.block{i}.b.w"], p[f"enc.block{i}.b.b"],
                     stride=1, padding=0)
        h = (down + r).relu()
    h = T.conv1d(h, p["enc.final.w"], p["enc.final.b"], stride=1, padding=1)
    pooled = T.reshape(h.mean(axis=1), (1, h.shape[0]))
    out = T.ew_binary("add", T.matmul(pooled, T.transpose(p["enc.out.w"])), p["enc.out.b"])
    return T.reshape(out, (cfg.embed_dim,))


def encode_weights(state: FewSoundState) -> Tensor:
    """E_theta from the current universal weights."""
    cfg = state.config
    p = dict(state.weight_enc)
    h = T.reshape(state.theta, (1, state.theta.size))
    h = T.ew_binary("add", T.matmul(h, T.transpose(p["wenc.l0.w"])), p["wenc.l0.b"]).relu()
    h = T.ew_binary("add", T.matmul(h, T.transpose(p["wenc.l1.w"])), p["wenc.l1.b"])
    return T.reshape(h, (cfg.embed_dim,))


def predict_update(state: FewSoundState, e_s: Tensor, e_theta: Tensor) -> Tensor:
    """Delta-theta of length param_count(target) from the two embeddings."""
    cfg = state.config
    if e_s.shape != (cfg.embed_dim,) or e_theta.shape != (cfg.embed_dim,):
        raise ShapeError(f"embeddings must both be ({cfg.embed_dim},), "
                         f"got {e_s.shape} and {e_theta.shape}")
    h = T.reshape(T.concat([e_s, e_theta]), (1, 2 * cfg.embed_dim))
    n_layers = len(state.hyper) // 2
    p = dict(state.hyper)
    for i in range(n_layers):
        h = T.ew_binary("add", T.matmul(h, T.transpose(p[f"hyper.l{i}.w"])),
                        p[f"hyper.l{i}.b"])
        if i < n_layers - 1:
            h = h.relu()
    return T.reshape(h, (h.shape[1],))


def adapted_flat(state: FewSoundState, window) -> Tensor:
    """theta + delta on the tape (gradients reach all four groups)."""
    e_s = encode_audio(state, window)
    e_t = encode_weights(state)
    delta = predict_update(state, e_s, e_t)
    return state.theta + delta


def adapt(state: FewSoundState, window) -> inr.InrModel:
    """Materialize the per-clip network f_{theta + delta}."""
    flat = adapted_flat(state, window)
    return inr.unflatten_params(state.config.target, flat.data.astype(np.float64))


# -- meta-training ---------------------------------------------------------------


def meta_train(clips: Sequence, config: FewSoundConfig,
               resolutions=DEFAULT_RESOLUTIONS, n_mels: int = 80,
               weight_decay: float = 0.01) -> tuple[FewSoundState, np.ndarray]:
    """Joint training of all four groups; returns (state, per-epoch mean loss).

    Each clip contributes its first ``window`` samples.  Every batch
    adapts each clip, renders the window's [-1,1] time grid, and sums
    the combined losses; AdamW steps under a one-cycle schedule.
    """
    windows = []
    for i, c in enumerate(clips):
        x = np.asarray(getattr(c, "samples", c), dtype=np.float64)
        if x.size < config.window:
            raise ContractError(f"clip {i} has {x.size} samples, "
                                f"need at least {config.window}")
        windows.append(x[:config.window])
    if not windows:
        raise ContractError("empty dataset")

    state = build_state(config)
    times = np.linspace(-1.0, 1.0, config.window)
    loss_fns = [make_combined_loss(w, config.lam_t, config.lam_f, resolutions,
                                   config.sample_rate, n_mels) for w in windows]

    bs = config.batch_size or len(windows)
    batches = [list(range(i, min(i + bs, len(windows))))
               for i in range(0, len(windows), bs)]
    opt = AdamW(state.named_params(), lr=config.lr, weight_decay=weight_decay)
    sched = OneCycleSchedule(max_lr=config.lr,
                             total_steps=max(1, config.epochs * len(batches)))
    leaves = [p for _, p in state.named_params()]

    trace = np.zeros(config.epochs)
    step = 0
    for epoch in range(config.epochs):
        epoch_sum = 0.0
        for batch in batches:
            total = None
            for ci in batch:
                flat = adapted_flat(state, windows[ci])
                pred = inr.forward_from_flat(config.target, flat, times,
                                             state.target_embedding)
                term = loss_fns[ci](pred)
                total = term if total is None else total + term
            if not np.isfinite(total.data):
                raise ContractError(f"non-finite meta-loss at epoch {epoch}, step {step}")
            T.backward(total, leaves=leaves)
            opt.step(lr=one_cycle_lr(sched, min(step, sched.total_steps)))
            step += 1
            epoch_sum += float(total.data)
        trace[epoch] = epoch_sum / len(windows)
    return state, trace


# -- overlap-add reconstruction --------------------------------------------------


def crossfade_window(window: int) -> np.ndarray:
    """Half-sample-offset Hann; strictly positive, and complementary at
    50% overlap (w[i] + w[i + window/2] == 1)."""
    n = np.arange(window)
    return 0.5 - 0.5 * np.cos(2.0 * math.pi * (n + 0.5) / window)


def window_plan(n: int, window: int) -> list[int]:
    """Start offsets: hop = window/2, final window right-aligned."""
    if n <= window:
        return [0]
    hop = window // 2
    starts = list(range(0, n - window + 1, hop))
    if starts[-1] != n - window:
        starts.append(n - window)
    return starts


def overlap_add_weights(n: int, window: int) -> tuple[list[int], np.ndarray]:
    """(starts, rows): rows[i] holds window i's per-sample crossfade
    weight after normalization, over a span of max(n, window) samples
    (longer than n only when the signal is padded to one window).  The
    rows sum to exactly one at every sample."""
    starts = window_plan(n, window)
    span = max(n, window)
    w = crossfade_window(window)
    rows = np.zeros((len(starts), span))
    for i, s in enumerate(starts):
        rows[i, s:s + window] = w
    rows /= rows.sum(axis=0, keepdims=True)
    return starts, rows


def reconstruct_long(state: FewSoundState | None, clip,
                     render_fn: Callable[[np.ndarray], np.ndarray] | None = None,
                     window: int | None = None) -> np.ndarray:
    """Window-by-window reconstruction of audio of any length.

    ``render_fn`` maps one window of true samples to its rendering; by
    default each window is adapted and rendered with the meta-trained
    state.  Output length equals input length; short inputs are padded
    to one window and trimmed afterwards.
    """
    x = np.asarray(getattr(clip, "samples", clip), dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ContractError(f"need a non-empty 1-D signal, got shape {x.shape}")
    if state is not None:
        window = state.config.window
    if window is None:
        raise ContractError("pass a window length when no state is given")
    if render_fn is None:
        if state is None:
            raise ContractError("either a trained state or a render_fn is required")
        times = np.linspace(-1.0, 1.0, window)

        def render_fn(seg: np.ndarray) -> np.ndarray:
            return adapt(state, seg).forward(times).data.astype(np.float64)

    n = x.size
    starts, rows = overlap_add_weights(n, window)
    padded = np.pad(x, (0, max(0, window - n)))
    out = np.zeros(rows.shape[1])
    for s, row in zip(starts, rows):
        y = np.asarray(render_fn(padded[s:s + window]), dtype=np.float64)
        if y.shape != (window,):
            raise ShapeError(f"render_fn returned shape {y.shape}, want ({window},)")
        out[s:s + window] += y * row[s:s + window]
    return out[:n]
