"""Single-clip fitting loop and the multi-architecture comparison harness.

Fitting is full batch: every step evaluates the network on one time
point per sample, uniformly spaced over [-1,1], and takes one AdamW
step on the combined loss at constant learning rate.  The comparison
harness fits every (clip, architecture) pair independently and reports
per-architecture mean and standard deviation of each metric.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor, ContractError, DomainError
from . import inr
from .inr import InrConfig, InrModel
from .loss import DEFAULT_RESOLUTIONS, StftResolution, make_combined_loss
from . import metrics as M
from .optim import AdamW
from .wavio import AudioClip, WavError, wav_read

DEFAULT_KAN_LR = 5e-3
DEFAULT_MLP_LR = 1e-4


@dataclass
class TrainConfig:
    steps: int = 10000
    lr: float | None = None                  # per-arch default when None
    lam_t: float = 1.0
    lam_f: float = 1.0
    seed: int = 0
    precision: str = "float64"
    weight_decay: float = 0.01
    resolutions: tuple = DEFAULT_RESOLUTIONS
    n_mels: int = 80
    metric_res: StftResolution = M.DEFAULT_METRIC_RES

    def __post_init__(self):
        if self.steps < 1:
            raise ContractError(f"steps must be >= 1, got {self.steps}")
        if self.lr is not None and self.lr <= 0:
            raise ContractError(f"lr must be positive, got {self.lr}")
        if self.precision not in ("float32", "float64"):
            raise ContractError(f"precision must be float32 or float64, "
                                f"got {self.precision!r}")


@dataclass
class FitResult:
    model: InrModel
    loss_trace: np.ndarray = field(repr=False)
    metrics: dict[str, float]
    seconds: float


def resolve_lr(train_config: TrainConfig, arch: str) -> float:
    if train_config.lr is not None:
        return train_config.lr
    return DEFAULT_KAN_LR if arch == "kan" else DEFAULT_MLP_LR


def fit_inr(clip: AudioClip, inr_config: InrConfig, train_config: TrainConfig) -> FitResult:
    """Fit one network to one clip; deterministic for fixed config seeds."""
    x = clip.samples
    if x.size == 0:
        raise ContractError("empty clip")
    started = time.monotonic()
    with T.default_dtype(train_config.precision):
        model = inr.build(inr_config)
        times = Tensor(np.linspace(-1.0, 1.0, x.size).astype(T.get_default_dtype()))
        loss_fn = make_combined_loss(x, train_config.lam_t, train_config.lam_f,
                                     train_config.resolutions, clip.sample_rate,
                                     train_config.n_mels)
        opt = AdamW(model.named_params(), lr=resolve_lr(train_config, inr_config.arch),
                    weight_decay=train_config.weight_decay)
        trace = np.zeros(train_config.steps)
        for step in range(train_config.steps):
            loss = loss_fn(model.forward(times))
            if not np.isfinite(loss.data):
                raise ContractError(f"non-finite loss at step {step}")
            T.backward(loss, leaves=model.params)
            opt.step()
            trace[step] = float(loss.data)
        pred = model.forward(times).data.astype(np.float64)
    return FitResult(model, trace, _safe_metrics(x, pred, train_config.metric_res),
                     time.monotonic() - started)


def evaluate(model: InrModel, clip: AudioClip,
             metric_res: StftResolution = M.DEFAULT_METRIC_RES) -> dict[str, float]:
    """Render the model over the clip's [-1,1] time grid and compute metrics."""
    if clip.samples.size == 0:
        raise ContractError("empty clip")
    times = np.linspace(-1.0, 1.0, clip.samples.size)
    pred = model.forward(times).data.astype(np.float64)
    return _safe_metrics(clip.samples, pred, metric_res)


def _safe_metrics(x, pred, metric_res) -> dict[str, float]:
    """All metrics that are defined for this pair; degenerate or too-short
    signals simply omit the affected entries."""
    out: dict[str, float] = {}
    mse, psnr = M.mse_psnr(x, pred)
    out["mse"], out["psnr"] = mse, psnr
    for name, fn in (("lsd", lambda: M.lsd(x, pred, metric_res)),
                     ("sisnr", lambda: M.si_snr(x, pred)),
                     ("wd", lambda: M.spectral_wasserstein(x, pred))):
        try:
            out[name] = fn()
        except (ContractError, DomainError):
            pass
    return out


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if window < 1 or window > x.size:
        raise ContractError(f"window {window} invalid for trace of {x.size}")
    return np.convolve(x, np.full(window, 1.0 / window), mode="valid")


def fraction_nonincreasing(trace: np.ndarray, window: int = 100) -> float:
    """Share of consecutive moving-average windows that do not increase."""
    ma = moving_average(trace, window)
    if ma.size < 2:
        return 1.0
    d = np.diff(ma)
    return float(np.mean(d <= 0.0))


def compare_archs(dataset, configs: Sequence[InrConfig], train_config: TrainConfig,
                  out_csv=None) -> M.MetricsReport:
    """Fit every (clip, config) pair; aggregate per arch; optionally write CSV.

    ``dataset`` is a directory of WAV files (read in sorted path order)
    or a list of AudioClips.  Unreadable files are skipped with a
    warning recorded in the report.
    """
    report = M.MetricsReport()
    clips: list[AudioClip] = []
    if isinstance(dataset, (str, bytes)) or hasattr(dataset, "__fspath__"):
        import os
        paths = []
        for root, _, names in os.walk(os.fspath(dataset)):
            for name in sorted(names):
                if name.lower().endswith(".wav"):
                    paths.append(os.path.join(root, name))
        paths.sort()
        for p in paths:
            try:
                clips.append(wav_read(p))
            except (WavError, OSError) as e:
                report.warn(f"skipped {p}: {e}")
        if not clips:
            raise ContractError(f"no readable clips in {dataset!r}")
    else:
        clips = list(dataset)
        if not clips:
            raise ContractError("empty dataset")

    for cfg in configs:
        count = inr.param_count(cfg)
        for clip in clips:
            result = fit_inr(clip, cfg, train_config)
            vals = {m: result.metrics.get(m, float("nan")) for m in M.METRIC_COLUMNS}
            missing = [m for m in M.METRIC_COLUMNS if m not in result.metrics]
            if missing:
                report.warn(f"{clip.source_id}/{cfg.arch}: metrics {missing} undefined")
            report.add(clip.source_id or "clip", cfg.arch, count, vals)
    if out_csv is not None:
        report.write_csv(out_csv)
    return report
