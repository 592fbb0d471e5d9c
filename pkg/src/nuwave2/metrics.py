"""Objective metrics (SNR, LSD, banded LSD) and the per-rate evaluation harness."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dsp import TARGET_SR, AudioBuffer, StftConfig, degrade, evaluation_filter, stft

log = logging.getLogger(__name__)

METRIC_STFT = StftConfig(fft_size=2048, hop=512)
POWER_FLOOR = 1e-10
SNR_CAP_DB = 300.0
EVAL_RATES = (8000, 12000, 16000, 24000)


def snr_db(ref, est) -> float:
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")
    signal = float(np.sum(ref ** 2))
    if signal == 0.0:
        raise ValueError("reference signal is all zeros")
    noise = float(np.sum((ref - est) ** 2))
    if noise < 1e-30 * signal:
        return SNR_CAP_DB
    return 10.0 * math.log10(signal / noise)


def log_power_spectrogram(x, cfg: StftConfig = METRIC_STFT) -> np.ndarray:
    """``log10(|STFT|**2 + 1e-10)``, shape (bins, frames)."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < cfg.fft_size:
        raise ValueError(f"signal of length {len(x)} shorter than metric FFT size {cfg.fft_size}")
    return np.log10(np.abs(stft(x, cfg).bins) ** 2 + POWER_FLOOR)


def _frame_rms_mean(diff: np.ndarray) -> float:
    return float(np.mean(np.sqrt(np.mean(diff ** 2, axis=0))))


def lsd(ref, est, cfg: StftConfig = METRIC_STFT) -> float:
    """Frame-averaged RMS over bins of the log10 power difference."""
    if np.shape(ref) != np.shape(est):
        raise ValueError(f"length mismatch: {np.shape(ref)} vs {np.shape(est)}")
    return _frame_rms_mean(log_power_spectrogram(ref, cfg) - log_power_spectrogram(est, cfg))


def band_split_bin(cutoff_hz: float, cfg: StftConfig = METRIC_STFT, fs: int = TARGET_SR) -> int:
    """Last bin of the low band; the boundary bin belongs to the low band."""
    return int(math.floor(cutoff_hz / (fs / 2) * (cfg.n_bins - 1) + 0.5))


def lsd_banded(ref, est, cutoff_hz: float, cfg: StftConfig = METRIC_STFT, fs: int = TARGET_SR):
    """(LSD-HF, LSD-LF): bins strictly above / at-or-below the cutoff bin."""
    if not 0 < cutoff_hz < fs / 2:
        raise ValueError(f"cutoff must lie in (0, {fs / 2}), got {cutoff_hz}")
    if np.shape(ref) != np.shape(est):
        raise ValueError(f"length mismatch: {np.shape(ref)} vs {np.shape(est)}")
    diff = log_power_spectrogram(ref, cfg) - log_power_spectrogram(est, cfg)
    k = band_split_bin(cutoff_hz, cfg, fs)
    return _frame_rms_mean(diff[k + 1 :]), _frame_rms_mean(diff[: k + 1])


# --------------------------------------------------------------------------- evaluation

Upsampler = Callable[[np.ndarray, int, np.random.Generator], np.ndarray]


@dataclass
class MetricRow:
    input_sr: int
    snr_db: float
    lsd: float
    lsd_hf: float
    lsd_lf: float
    n_files: int
    n_failed: int = 0


@dataclass
class MetricReport:
    rows: list[MetricRow] = field(default_factory=list)

    CSV_HEADER = "input_sr,snr_db,lsd,lsd_hf,lsd_lf,n_files"

    def means(self) -> dict[str, float]:
        if not self.rows:
            return {}
        keys = ("snr_db", "lsd", "lsd_hf", "lsd_lf")
        return {k: float(np.mean([getattr(r, k) for r in self.rows])) for k in keys}

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(self.CSV_HEADER + "\n")
        for r in self.rows:
            out.write(f"{r.input_sr},{r.snr_db:.6f},{r.lsd:.6f},{r.lsd_hf:.6f},{r.lsd_lf:.6f},{r.n_files}\n")
        return out.getvalue()

    def to_table(self) -> str:
        lines = [f"{'input_sr':>8} {'snr_db':>9} {'lsd':>8} {'lsd_hf':>8} {'lsd_lf':>8} {'n_files':>7}"]
        for r in self.rows:
            lines.append(
                f"{r.input_sr:>8d} {r.snr_db:>9.3f} {r.lsd:>8.4f} {r.lsd_hf:>8.4f} {r.lsd_lf:>8.4f} {r.n_files:>7d}"
            )
        m = self.means()
        if m:
            lines.append(
                f"{'mean':>8} {m['snr_db']:>9.3f} {m['lsd']:>8.4f} {m['lsd_hf']:>8.4f} {m['lsd_lf']:>8.4f}"
            )
        return "\n".join(lines)


def identity_upsampler(x_l: np.ndarray, input_sr: int, rng: np.random.Generator) -> np.ndarray:
    return x_l


def evaluate(
    upsampler: Upsampler,
    testset: Sequence[np.ndarray],
    rates: Sequence[int] = EVAL_RATES,
    seed: int = 0,
) -> MetricReport:
    """Degrade each 48 kHz clip with the fixed test filter, upsample, and score.

    Each (rate, file) pair gets its own RNG stream, so results do not depend on
    evaluation order. Per-file failures are logged, counted and skipped.
    """
    if len(testset) == 0:
        raise ValueError("test set is empty")
    report = MetricReport()
    for ri, rate in enumerate(rates):
        rate = int(rate)
        filt = evaluation_filter(rate)
        scores = []
        failed = 0
        for fi, clip in enumerate(testset):
            try:
                x = np.asarray(clip, dtype=np.float64)
                x_l = degrade(AudioBuffer(x, TARGET_SR), rate, filt).samples
                est = np.asarray(upsampler(x_l, rate, np.random.default_rng([seed, ri, fi])), dtype=np.float64)
                hf, lf = lsd_banded(x, est, rate / 2)
                scores.append((snr_db(x, est), lsd(x, est), hf, lf))
            except Exception as exc:  # noqa: BLE001 - reported, not fatal
                log.warning("evaluation of file %d at %d Hz failed: %s", fi, rate, exc)
                failed += 1
        if scores:
            s = np.array(scores)
            report.rows.append(MetricRow(rate, *(float(v) for v in s.mean(axis=0)), len(scores), failed))
        else:
            log.warning("no file could be evaluated at %d Hz", rate)
    return report
