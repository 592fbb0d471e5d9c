"""Signal-processing kernels: windows, STFT/iSTFT, Chebyshev Type I design,
zero-phase filtering, arbitrary-ratio resampling and the degradation pipeline.

Everything here runs in float64 and is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import signal as _signal
from scipy.special import i0

TARGET_SR = 48000
MIN_INPUT_SR = 6000
_OLA_FLOOR = 1e-11


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"expected mono samples, got shape {samples.shape}")
        if int(self.sample_rate) <= 0 or int(self.sample_rate) != self.sample_rate:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 1024
    hop: int = 256

    def __post_init__(self):
        if self.fft_size < 2 or self.hop < 1:
            raise ValueError(f"invalid STFT sizes fft_size={self.fft_size} hop={self.hop}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return hann_window(self.fft_size)

    def check_cola(self) -> None:
        """Raise ValueError unless the squared-window overlap-add never vanishes."""
        if self.fft_size % self.hop != 0:
            raise ValueError(f"hop {self.hop} does not divide fft_size {self.fft_size}")
        w2 = self.window ** 2
        envelope = w2.reshape(-1, self.hop).sum(axis=0)
        if envelope.min() <= _OLA_FLOOR:
            raise ValueError(
                f"fft_size={self.fft_size}, hop={self.hop} is not invertible with a Hann window"
            )


@dataclass
class Spectrogram:
    """One-sided STFT: ``bins`` has shape (n_bins, n_frames)."""

    bins: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    source_length: int = 0

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]


@dataclass(frozen=True)
class SosFilter:
    """Cascade of biquads; each row is (b0, b1, b2, a1, a2) with a0 = 1."""

    sections: np.ndarray
    order: int
    ripple_db: float
    cutoff_hz: float
    fs: float

    def as_scipy_sos(self) -> np.ndarray:
        s = np.asarray(self.sections)
        ones = np.ones((len(s), 1))
        return np.hstack([s[:, :3], ones, s[:, 3:]])

    def describe(self) -> str:
        return (
            f"Chebyshev I low-pass: order={self.order} ripple={self.ripple_db:g} dB "
            f"cutoff={self.cutoff_hz:g} Hz fs={self.fs:g} Hz sections={len(self.sections)}"
        )


# --------------------------------------------------------------------------- windows / STFT


def hann_window(size: int) -> np.ndarray:
    """Periodic Hann window of length ``size``."""
    if size < 2:
        raise ValueError(f"window size must be >= 2, got {size}")
    n = np.arange(size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / size)


def stft(x, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Centered (reflect-padded), Hann-windowed one-sided STFT.

    Produces ``len(x) // hop + 1`` frames.
    """
    x = np.asarray(x.samples if isinstance(x, AudioBuffer) else x, dtype=np.float64)
    if x.ndim != 1 or len(x) < 1:
        raise ValueError("stft needs a non-empty 1-D signal")
    pad = cfg.fft_size // 2
    padded = np.pad(x, pad, mode="reflect") if len(x) > 1 else np.full(len(x) + 2 * pad, x[0])
    n_frames = len(x) // cfg.hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.fft_size)[:: cfg.hop][:n_frames]
    bins = np.fft.rfft(frames * cfg.window, axis=-1).T
    return Spectrogram(bins=bins, config=cfg, source_length=len(x))


def istft(s: Spectrogram) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`, trimmed to ``source_length``."""
    cfg = s.config
    cfg.check_cola()
    n_fft, hop = cfg.fft_size, cfg.hop
    window = cfg.window
    frames = np.fft.irfft(s.bins.T, n=n_fft, axis=-1) * window
    n_frames = frames.shape[0]
    total = n_fft + hop * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    w2 = window ** 2
    for i in range(n_frames):
        out[i * hop : i * hop + n_fft] += frames[i]
        norm[i * hop : i * hop + n_fft] += w2
    out /= np.maximum(norm, _OLA_FLOOR)
    pad = n_fft // 2
    out = out[pad : pad + s.source_length]
    if len(out) < s.source_length:
        out = np.pad(out, (0, s.source_length - len(out)))
    return out


# --------------------------------------------------------------------------- Chebyshev I


def design_cheby1_lowpass(order: int, ripple_db: float, cutoff_hz: float, fs: float) -> SosFilter:
    """Digital Chebyshev Type I low-pass as second-order sections.

    Analog prototype poles are scaled to the pre-warped edge frequency and
    mapped through the bilinear transform; all zeros land on z = -1.
    ``cutoff_hz`` is the edge where the response last touches ``-ripple_db``.
    """
    if int(order) != order or not 1 <= order <= 12:
        raise ValueError(f"order must be an integer in [1, 12], got {order}")
    if not ripple_db > 0:
        raise ValueError(f"ripple_db must be positive, got {ripple_db}")
    if not 0 < cutoff_hz < fs / 2:
        raise ValueError(f"cutoff_hz must lie in (0, fs/2) = (0, {fs / 2}), got {cutoff_hz}")
    order = int(order)

    eps = math.sqrt(10.0 ** (ripple_db / 10.0) - 1.0)
    mu = math.asinh(1.0 / eps) / order
    k = np.arange(1, order + 1)
    theta = np.pi * (2 * k - 1) / (2 * order)
    analog = -math.sinh(mu) * np.sin(theta) + 1j * math.cosh(mu) * np.cos(theta)

    warped = 2.0 * fs * math.tan(math.pi * cutoff_hz / fs)
    analog = analog * warped
    poles = (2.0 * fs + analog) / (2.0 * fs - analog)

    # theta < pi/2 gives the upper-half-plane poles; the middle one is real for odd orders.
    sections = []
    upper = poles[: order // 2]
    for p in upper[np.argsort(np.abs(upper))]:
        a1, a2 = -2.0 * p.real, abs(p) ** 2
        b = np.array([1.0, 2.0, 1.0])
        b /= b.sum() / (1.0 + a1 + a2)
        sections.append([b[0], b[1], b[2], a1, a2])
    if order % 2:
        p = poles[order // 2].real
        b = np.array([1.0, 1.0]) * (1.0 - p) / 2.0
        sections.append([b[0], b[1], 0.0, -p, 0.0])
    sections = np.array(sections, dtype=np.float64)

    # Every section has unit DC gain; even orders start the passband at -ripple.
    if order % 2 == 0:
        sections[0, :3] /= math.sqrt(1.0 + eps * eps)

    for b0, b1, b2, a1, a2 in sections:
        if np.any(np.abs(np.roots([1.0, a1, a2])) >= 1.0):
            raise RuntimeError(f"unstable section (a1={a1}, a2={a2}) for order={order}")
    return SosFilter(sections, order, float(ripple_db), float(cutoff_hz), float(fs))


def frequency_response(f: SosFilter, freqs_hz) -> np.ndarray:
    """Complex response of the cascade at the given frequencies."""
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / f.fs
    z1 = np.exp(-1j * w)
    h = np.ones_like(z1)
    for b0, b1, b2, a1, a2 in f.sections:
        h *= (b0 + b1 * z1 + b2 * z1 * z1) / (1.0 + a1 * z1 + a2 * z1 * z1)
    return h


def zero_phase_filter(x, f: SosFilter) -> np.ndarray:
    """Forward-backward application of ``f`` with reflective edge padding.

    The effective magnitude response is ``|H|**2`` and the phase is zero.
    """
    x = np.asarray(x.samples if isinstance(x, AudioBuffer) else x, dtype=np.float64)
    if len(x) <= 3 * f.order:
        raise ValueError(f"signal of length {len(x)} too short for order {f.order} filtering")
    padlen = min(3 * (2 * f.order), len(x) - 1)
    return _signal.sosfiltfilt(f.as_scipy_sos(), x, padtype="even", padlen=padlen)


# --------------------------------------------------------------------------- resampling

KAISER_BETA = 14.77
# Cutoff and half-width are in units of the lower rate's sample period.
RESAMPLE_CUTOFF = 0.475
RESAMPLE_HALF_WIDTH = 112
_TABLE_RES = 1024


@lru_cache(maxsize=None)
def _kernel_table(half_width: int = RESAMPLE_HALF_WIDTH, res: int = _TABLE_RES):
    """Tabulated kernel and per-entry slopes for linear interpolation."""
    u = np.arange(half_width * res + 1) / res
    kaiser = i0(KAISER_BETA * np.sqrt(1.0 - (u / half_width) ** 2)) / i0(KAISER_BETA)
    table = 2.0 * RESAMPLE_CUTOFF * np.sinc(2.0 * RESAMPLE_CUTOFF * u) * kaiser
    table[-1] = 0.0
    # Two trailing zeros absorb lookups that land exactly on the support edge.
    table = np.concatenate([table, [0.0, 0.0]])
    slope = np.append(np.diff(table), 0.0)
    return table, slope


@njit(cache=True, nogil=True, fastmath=True)
def _resample_loop(x, n_out, step, scale, table, slope, res, half_width):
    out = np.empty(n_out)
    reach = half_width / scale
    last = len(x) - 1
    du = scale * res
    for j in range(n_out):
        t = j * step
        lo = max(int(math.ceil(t - reach)), 0)
        hi = min(int(math.floor(t + reach)), last)
        u = (t - lo) * du
        acc = 0.0
        for n in range(lo, hi + 1):
            a = abs(u)
            i = int(a)
            acc += x[n] * (table[i] + (a - i) * slope[i])
            u -= du
        out[j] = acc * scale
    return out


def resampled_length(n: int, from_hz: int, to_hz: int) -> int:
    """round(n * to_hz / from_hz) with halves rounded up, in exact integer arithmetic."""
    return (2 * n * to_hz + from_hz) // (2 * from_hz)


def resample(x: AudioBuffer, to_hz: int) -> AudioBuffer:
    """Band-limited resampling by direct Kaiser-windowed-sinc interpolation.

    The anti-aliasing kernel passes up to 0.45 and stops at 0.5 of the lower
    of the two rates, so any ratio (not just small rationals) is supported.
    """
    if to_hz <= 0 or int(to_hz) != to_hz:
        raise ValueError(f"target rate must be a positive integer, got {to_hz}")
    to_hz = int(to_hz)
    from_hz = x.sample_rate
    if to_hz == from_hz:
        return AudioBuffer(x.samples.copy(), to_hz)
    n_out = resampled_length(len(x), from_hz, to_hz)
    if len(x) == 0:
        return AudioBuffer(np.zeros(n_out), to_hz)
    out = _resample_loop(
        x.samples,
        n_out,
        from_hz / to_hz,
        min(1.0, to_hz / from_hz),
        *_kernel_table(),
        float(_TABLE_RES),
        float(RESAMPLE_HALF_WIDTH),
    )
    return AudioBuffer(out, to_hz)


# --------------------------------------------------------------------------- degradation


def training_cutoff(input_sr: int, fs: int = TARGET_SR) -> float:
    """Filter edge at the new Nyquist, kept strictly below the container Nyquist."""
    return min(0.5 * input_sr, 0.999 * 0.5 * fs)


def evaluation_filter(input_sr: int, fs: int = TARGET_SR) -> SosFilter:
    """The fixed evaluation filter: 8th order, 0.05 dB ripple."""
    return design_cheby1_lowpass(8, 0.05, training_cutoff(input_sr, fs), fs)


def random_filter(input_sr: int, rng: np.random.Generator, fs: int = TARGET_SR) -> SosFilter:
    """Training filter: order uniform on {1..10}, ripple log-uniform on [1e-3, 5] dB."""
    order = int(rng.integers(1, 11))
    ripple = float(np.exp(rng.uniform(np.log(1e-3), np.log(5.0))))
    return design_cheby1_lowpass(order, ripple, training_cutoff(input_sr, fs), fs)


def degrade(x: AudioBuffer, input_sr: int, f: SosFilter) -> AudioBuffer:
    """Filter, downsample to ``input_sr`` and upsample back; length is preserved."""
    if not MIN_INPUT_SR <= input_sr <= TARGET_SR:
        raise ValueError(f"input_sr must lie in [{MIN_INPUT_SR}, {TARGET_SR}], got {input_sr}")
    if x.sample_rate != TARGET_SR:
        raise ValueError(f"degrade expects {TARGET_SR} Hz audio, got {x.sample_rate} Hz")
    filtered = AudioBuffer(zero_phase_filter(x.samples, f), x.sample_rate)
    low = resample(filtered, int(input_sr))
    up = resample(low, TARGET_SR).samples
    n = len(x)
    if len(up) >= n:
        up = up[:n]
    else:
        up = np.pad(up, (0, n - len(up)))
    return AudioBuffer(up, TARGET_SR)
