"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import diffusion
from .checkpoint import CorruptCheckpointError, UnsupportedVersionError, load_checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import scan_corpus
from .dsp import MIN_INPUT_SR, TARGET_SR, AudioBuffer, degrade, design_cheby1_lowpass, resample, training_cutoff
from .inference import ModelUpsampler
from .metrics import EVAL_RATES, evaluate, identity_upsampler
from .training import TrainingDivergedError, train
from .wavio import WavFormatError, UnsupportedFormatError, load_wav, read_wav, save_wav


class UsageError(Exception):
    pass


class CommandError(Exception):
    pass


def _rates(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integer rates, got {text!r}") from None


def _check_input_sr(sr: int, flag: str) -> None:
    if not MIN_INPUT_SR <= sr <= TARGET_SR:
        raise UsageError(f"{flag} must lie in [{MIN_INPUT_SR}, {TARGET_SR}] Hz, got {sr}")


def _load_ckpt(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError as exc:
        raise CommandError(f"checkpoint not found: {path}") from exc
    except (CorruptCheckpointError, UnsupportedVersionError) as exc:
        raise CommandError(str(exc)) from exc


# --------------------------------------------------------------------------- commands


def cmd_degrade(args) -> int:
    _check_input_sr(args.sr, "--sr")
    if not 1 <= args.order <= 12:
        raise UsageError(f"--order must lie in [1, 12], got {args.order}")
    if not args.ripple > 0:
        raise UsageError(f"--ripple must be positive, got {args.ripple}")
    x = load_wav(args.inp, TARGET_SR)
    filt = design_cheby1_lowpass(args.order, args.ripple, training_cutoff(args.sr), TARGET_SR)
    print(filt.describe())
    y = degrade(x, args.sr, filt)
    save_wav(args.out, y, args.format)
    print(f"wrote {args.out}: {len(y)} samples at {TARGET_SR} Hz (band-limited to {args.sr} Hz)")
    return 0


def cmd_train(args) -> int:
    try:
        cfg: RunConfig = load_config(args.config)
    except ConfigError as exc:
        raise UsageError(f"{args.config}: {exc}") from exc
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    resume = _load_ckpt(args.resume) if args.resume else None
    if not cfg.data.corpus_root:
        raise UsageError("config must set data.corpus_root")
    holdout = list(cfg.data.holdout) if cfg.data.holdout is not None else None
    corpus = scan_corpus(cfg.data.corpus_root, holdout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "train.log", "a") as log_file:
        final = train(cfg.model, cfg.train, corpus, checkpoint_dir=out, resume=resume, log_stream=log_file)
    print(f"trained to step {final.global_step}; checkpoint {out / 'last.nw2c'}")
    return 0


def cmd_upsample(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    native = read_wav(args.inp)
    if args.sr_hint is not None:
        _check_input_sr(args.sr_hint, "--sr-hint")
        input_sr = args.sr_hint
    elif native.sample_rate < TARGET_SR:
        input_sr = native.sample_rate
    else:
        raise UsageError(
            f"input is already at {native.sample_rate} Hz; pass --sr-hint with its true bandwidth rate"
        )
    if not 0 < input_sr <= TARGET_SR:
        raise UsageError(f"input rate {input_sr} Hz is outside (0, {TARGET_SR}]")
    x_l = resample(native, TARGET_SR) if native.sample_rate != TARGET_SR else native
    upsampler = ModelUpsampler(ckpt.build_model())
    y = upsampler(x_l.samples, input_sr, np.random.default_rng(args.seed))
    if not np.all(np.isfinite(y)):
        raise CommandError("sampler produced non-finite audio")
    save_wav(args.out, AudioBuffer(y, TARGET_SR), args.format)
    print(f"wrote {args.out}: {len(y)} samples at {TARGET_SR} Hz from {input_sr} Hz input")
    return 0


def cmd_evaluate(args) -> int:
    files = sorted(p for p in Path(args.testset).rglob("*.wav")) if Path(args.testset).is_dir() else []
    if not files:
        raise CommandError(f"no WAV files in test set {args.testset}")
    for r in args.rates:
        if not MIN_INPUT_SR <= r < TARGET_SR:
            raise UsageError(f"rate {r} must lie in [{MIN_INPUT_SR}, {TARGET_SR})")
    clips = [load_wav(p, TARGET_SR).samples for p in files]
    upsampler = ModelUpsampler(_load_ckpt(args.ckpt).build_model()) if args.ckpt else identity_upsampler
    report = evaluate(upsampler, clips, args.rates, seed=args.seed)
    print(report.to_table())
    if args.out:
        Path(args.out).write_text(report.to_csv())
    return 0


def cmd_schedule(args) -> int:
    params = diffusion.ScheduleParams()
    if args.lambdas:
        print(f"{'step':>6} {'lambda':>12} {'alpha':>14} {'sigma':>14}")
        for i, lam in enumerate(diffusion.DEFAULT_INFERENCE_LAMBDAS, start=1):
            alpha, sigma = diffusion.lambda_to_coeffs(lam)
            print(f"{i:>6d} {lam:>12.6f} {alpha:>14.10f} {sigma:>14.10f}")
        return 0
    if args.points < 2:
        raise UsageError(f"--points must be >= 2, got {args.points}")
    print(f"{'t':>10} {'lambda':>12} {'alpha':>14} {'sigma':>14}")
    for t in np.linspace(0.0, 1.0, args.points):
        tp = diffusion.schedule_at(params, float(t))
        print(f"{tp.t:>10.6f} {tp.lam:>12.6f} {tp.alpha:>14.10f} {tp.sigma:>14.10f}")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nuwave2", description="Diffusion-based audio upsampling to 48 kHz.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="low-pass, downsample and re-upsample a 48 kHz file")
    p.add_argument("--in", dest="inp", required=True, help="input WAV")
    p.add_argument("--sr", type=int, required=True, help="simulated input sampling rate (Hz)")
    p.add_argument("--order", type=int, default=8, help="Chebyshev I order (default 8)")
    p.add_argument("--ripple", type=float, default=0.05, help="passband ripple in dB (default 0.05)")
    p.add_argument("--out", required=True, help="output WAV")
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", default="checkpoints", help="directory for checkpoints and train.log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("upsample", help="upsample a file to 48 kHz with a trained model")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--sr-hint", type=int, help="true bandwidth rate of a 48 kHz-container input")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("evaluate", help="SNR / LSD report over a directory of 48 kHz WAVs")
    p.add_argument("--ckpt", help="model checkpoint (omit to score the degraded input itself)")
    p.add_argument("--testset", required=True)
    p.add_argument("--rates", type=_rates, default=list(EVAL_RATES), help="e.g. 8000,12000,16000,24000")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("schedule", help="print the noise schedule")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--points", type=int, help="tabulate n uniformly spaced times")
    g.add_argument("--lambdas", action="store_true", help="show the inference log-SNR list")
    p.set_defaults(func=cmd_schedule)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CommandError, TrainingDivergedError, WavFormatError, UnsupportedFormatError,
            OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
