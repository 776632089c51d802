"""Command-line surface: fit, eval, compare, meta-train, reconstruct,
spectrogram, paramcount.

Every config field is exposed as a flag; fixed seeds make identical
flag sets reproduce identical outputs.  Exit codes: 0 success, 1 usage
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import fewsound, inr, metrics, trainer
from .inr import ARCHS, InrConfig
from .serialize import SerializationError, load_model, save_model
from .tensor import ContractError, DomainError, ShapeError
from .loss import StftResolution
from .wavio import AudioClip, WavError, prepare_dataset, resample, wav_read, wav_write


class UsageError(Exception):
    """Bad flags or arguments; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError(f"expected at least one integer, got {text!r}")
    return vals


def _add_inr_flags(p, with_arch: bool = True) -> None:
    g = p.add_argument_group("network")
    if with_arch:
        g.add_argument("--arch", choices=ARCHS, default="kan")
    g.add_argument("--layers", type=_int_list, default=None, metavar="N,N,...",
                   help="hidden widths (default: per-architecture)")
    g.add_argument("--encoding-length", type=int, default=8)
    g.add_argument("--rff-features", type=int, default=64)
    g.add_argument("--rff-sigma", type=float, default=10.0)
    g.add_argument("--omega0", type=float, default=None)
    g.add_argument("--s0", type=float, default=10.0)
    g.add_argument("--finer-bias-bound", type=float, default=1.0)
    g.add_argument("--grid-size", type=int, default=10)
    g.add_argument("--spline-order", type=int, default=2)
    g.add_argument("--scale-spline", action=argparse.BooleanOptionalAction, default=True)
    g.add_argument("--seed", type=int, default=0)


def _inr_config(args, arch: str | None = None) -> InrConfig:
    return InrConfig(
        arch=arch if arch is not None else args.arch,
        hidden=args.layers,
        encoding_length=args.encoding_length,
        rff_features=args.rff_features,
        rff_sigma=args.rff_sigma,
        omega0=args.omega0,
        s0=args.s0,
        finer_bias_bound=args.finer_bias_bound,
        grid_size=args.grid_size,
        spline_order=args.spline_order,
        scale_spline=args.scale_spline,
        seed=args.seed,
    )


def _add_train_flags(p) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--steps", type=int, default=10000)
    g.add_argument("--lr", type=float, default=None,
                   help="default: 5e-3 for kan, 1e-4 otherwise")
    g.add_argument("--lambda-t", type=float, default=1.0, dest="lambda_t")
    g.add_argument("--lambda-f", type=float, default=1.0, dest="lambda_f")
    g.add_argument("--precision", choices=("float32", "float64"), default="float64")
    g.add_argument("--weight-decay", type=float, default=0.01)
    g.add_argument("--n-mels", type=int, default=80)


def _train_config(args) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        steps=args.steps,
        lr=args.lr,
        lam_t=args.lambda_t,
        lam_f=args.lambda_f,
        seed=args.seed,
        precision=args.precision,
        weight_decay=args.weight_decay,
        n_mels=args.n_mels,
    )


def _read_clip(path, sample_rate: int) -> AudioClip:
    return resample(wav_read(path), sample_rate)


def _print_metrics(values: dict[str, float]) -> None:
    for name in metrics.METRIC_COLUMNS:
        if name in values:
            print(f"{name}={values[name]:.12g}")


# -- subcommands -----------------------------------------------------------


def _cmd_fit(args) -> int:
    clip = _read_clip(args.clip, args.sample_rate)
    result = trainer.fit_inr(clip, _inr_config(args), _train_config(args))
    save_model(args.out, result.model)
    if args.trace is not None:
        lr = trainer.resolve_lr(_train_config(args), args.arch)
        lines = ["step,loss,lr"]
        lines += [f"{i},{v:.12g},{lr:.12g}" for i, v in enumerate(result.loss_trace)]
        with open(args.trace, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    if args.report is not None:
        report = metrics.MetricsReport()
        vals = {m: result.metrics.get(m, float("nan")) for m in metrics.METRIC_COLUMNS}
        report.add(clip.source_id or "clip", args.arch,
                   inr.param_count(_inr_config(args)), vals)
        report.write_csv(args.report)
    print(f"saved {args.out} ({result.seconds:.1f}s, "
          f"final loss {result.loss_trace[-1]:.6g})")
    _print_metrics(result.metrics)
    return 0


def _cmd_eval(args) -> int:
    obj = load_model(args.model)
    if not isinstance(obj, inr.InrModel):
        raise ContractError(f"{args.model} holds a hypernetwork state; "
                            "eval expects a single-network model file")
    clip = _read_clip(args.clip, args.sample_rate)
    _print_metrics(trainer.evaluate(obj, clip))
    return 0


def _cmd_compare(args) -> int:
    archs = args.archs if args.archs is not None else list(ARCHS)
    for a in archs:
        if a not in ARCHS:
            raise UsageError(f"unknown architecture {a!r}; choose from {', '.join(ARCHS)}")
    configs = [_inr_config(args, arch=a) for a in archs]
    report = trainer.compare_archs(args.dataset, configs, _train_config(args),
                                   out_csv=args.out)
    print(f"wrote {args.out} ({len(report.rows)} fits)")
    for arch, agg in report.aggregate().items():
        cells = "  ".join(f"{m}={agg[m][0]:.4g}" for m in metrics.METRIC_COLUMNS)
        print(f"{arch}: {cells}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _cmd_meta_train(args) -> int:
    cfg = fewsound.FewSoundConfig(
        target=_inr_config(args),
        window=args.window,
        sample_rate=args.sample_rate,
        embed_dim=args.embed_dim,
        conv0_channels=args.conv0_channels,
        encoder_channels=args.encoder_channels,
        weight_enc_hidden=args.weight_enc_hidden,
        hyper_hidden=args.hyper_hidden,
        lam_t=args.lambda_t,
        lam_f=args.lambda_f,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        batch_size=args.batch_size,
    )
    clips = prepare_dataset(args.dataset, cfg.window, seed=args.seed,
                            target_sr=cfg.sample_rate)
    state, trace = fewsound.meta_train(clips, cfg)
    save_model(args.out, state)
    print(f"saved {args.out} (epoch loss {trace[0]:.6g} -> {trace[-1]:.6g})")
    return 0


def _cmd_reconstruct(args) -> int:
    state = load_model(args.state)
    if not isinstance(state, fewsound.FewSoundState):
        raise ContractError(f"{args.state} holds a single-network model; "
                            "reconstruct expects a hypernetwork state file")
    sr = state.config.sample_rate
    clip = _read_clip(args.clip, sr)
    out = fewsound.reconstruct_long(state, clip.samples)
    wav_write(args.out, AudioClip(sr, out, clip.source_id), pcm16=args.pcm16)
    print(f"wrote {args.out} ({out.size} samples at {sr} Hz)")
    return 0


def _cmd_spectrogram(args) -> int:
    clip = _read_clip(args.clip, args.sample_rate)
    res = StftResolution(args.fft, args.hop, args.window)
    csv_path, pgm_path = metrics.spectrogram_export(clip.samples, args.out, res)
    print(f"wrote {csv_path} and {pgm_path}")
    return 0


def _cmd_paramcount(args) -> int:
    print(inr.param_count(_inr_config(args)))
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="audioinr",
                     description="Fit and evaluate neural representations of audio.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("fit", parents=[], help="fit one network to one WAV clip")
    p.add_argument("clip", help="input WAV path")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--sample-rate", type=int, default=22050)
    p.add_argument("--report", default=None, help="optional metrics CSV path")
    p.add_argument("--trace", default=None, help="optional loss-trace CSV path")
    _add_inr_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="compute metrics for a saved model on a clip")
    p.add_argument("model", help="model file from fit")
    p.add_argument("clip", help="input WAV path")
    p.add_argument("--sample-rate", type=int, default=22050)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("compare", help="fit all architectures over a WAV directory")
    p.add_argument("dataset", help="directory of WAV files")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--archs", type=lambda s: [v.strip() for v in s.split(",") if v.strip()],
                   default=None, metavar="A,B,...",
                   help=f"subset of: {', '.join(ARCHS)} (default: all)")
    _add_inr_flags(p, with_arch=False)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_compare, arch=None)

    p = sub.add_parser("meta-train", help="train the hypernetwork system on a dataset")
    p.add_argument("dataset", help="directory of WAV files")
    p.add_argument("--out", required=True, help="output state file")
    p.add_argument("--window", type=int, default=32768)
    p.add_argument("--sample-rate", type=int, default=22050)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--conv0-channels", type=int, default=16)
    p.add_argument("--encoder-channels", type=_int_list, default=(32, 32, 64, 64),
                   metavar="N,N,...")
    p.add_argument("--weight-enc-hidden", type=int, default=256)
    p.add_argument("--hyper-hidden", type=_int_list, default=(256,), metavar="N,N,...")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=None,
                   help="default: 1e-6 for a siren target, 1e-5 otherwise")
    p.add_argument("--lambda-t", type=float, default=1.0, dest="lambda_t")
    p.add_argument("--lambda-f", type=float, default=1.0, dest="lambda_f")
    p.add_argument("--batch-size", type=int, default=None)
    _add_inr_flags(p)
    p.set_defaults(func=_cmd_meta_train)

    p = sub.add_parser("reconstruct", help="render a WAV through a trained state")
    p.add_argument("state", help="state file from meta-train")
    p.add_argument("clip", help="input WAV path")
    p.add_argument("--out", required=True, help="output WAV path")
    p.add_argument("--pcm16", action="store_true", help="write PCM-16 instead of float-32")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("spectrogram", help="export dB spectrogram as CSV and PGM")
    p.add_argument("clip", help="input WAV path")
    p.add_argument("--out", required=True, help="output path stem")
    p.add_argument("--sample-rate", type=int, default=22050)
    p.add_argument("--fft", type=int, default=2048)
    p.add_argument("--hop", type=int, default=512)
    p.add_argument("--window", type=int, default=2048)
    p.set_defaults(func=_cmd_spectrogram)

    p = sub.add_parser("paramcount", help="print the parameter count of a config")
    _add_inr_flags(p)
    p.set_defaults(func=_cmd_paramcount)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help()
            return 1
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (ContractError, DomainError, ShapeError, WavError, SerializationError,
            OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
