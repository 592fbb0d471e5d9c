"""Noise-prediction network: STFC residual layers with bandwidth-conditioned
spectral transforms.

Tensors are batch-first: waveforms ``(B, T)``, features ``(B, C, T)``,
bandwidth maps ``(B, 2, F)`` and log-SNRs ``(B,)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .dsp import hann_window


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 15
    channels: int = 64
    fft_size: int = 1024
    hop: int = 256
    lambda_emb_dim: int = 128
    lambda_hidden: int = 640
    target_sr: int = 48000
    spectral_activation: str = "swish"

    def __post_init__(self):
        if self.channels < 2 or self.channels % 2:
            raise ValueError(f"channels must be even and >= 2, got {self.channels}")
        if self.n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.lambda_emb_dim < 2 or self.lambda_emb_dim % 2:
            raise ValueError(f"lambda_emb_dim must be even, got {self.lambda_emb_dim}")
        if self.fft_size % self.hop:
            raise ValueError(f"hop {self.hop} must divide fft_size {self.fft_size}")
        if self.spectral_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown spectral_activation {self.spectral_activation!r}")

    @property
    def freq_bins(self) -> int:
        return self.fft_size // 2 + 1

    def to_dict(self) -> dict:
        return asdict(self)


_ACTIVATIONS = {"swish": F.silu, "linear": lambda h: h}


def cutoff_bin(input_sr: float, target_sr: int, n_bins: int) -> int:
    """Highest bin still carried by a signal sampled at ``input_sr`` (round half up)."""
    return int(math.floor((input_sr / 2) / (target_sr / 2) * (n_bins - 1) + 0.5))


def bandwidth_embedding(input_sr: float, cfg: ModelConfig = ModelConfig()) -> np.ndarray:
    """One-hot ``(2, F)`` map: row 0 marks bins present in the input, row 1 bins to generate."""
    if not 0 < input_sr <= cfg.target_sr:
        raise ValueError(f"input_sr must lie in (0, {cfg.target_sr}], got {input_sr}")
    n = cfg.freq_bins
    k = cutoff_bin(input_sr, cfg.target_sr, n)
    e = np.zeros((2, n), dtype=np.float32)
    e[0, : k + 1] = 1.0
    e[1, k + 1 :] = 1.0
    return e


def sinusoidal_features(lam: Tensor, dim: int) -> Tensor:
    """``[sin(w * lam/2), cos(w * lam/2)]`` with periods from 25 down to 0.25."""
    half = dim // 2
    k = torch.arange(half, dtype=lam.dtype, device=lam.device)
    freqs = (2.0 * math.pi / 25.0) * 100.0 ** (k / max(half - 1, 1))
    arg = 0.5 * lam[:, None] * freqs[None, :]
    return torch.cat([arg.sin(), arg.cos()], dim=-1)


class LambdaEmbedding(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.dim = dim
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, hidden)

    def forward(self, lam: Tensor) -> Tensor:
        h = sinusoidal_features(lam, self.dim)
        return F.silu(self.fc2(F.silu(self.fc1(h))))


class BSFT(nn.Module):
    """Bandwidth spectral feature transform ``gamma * h + beta``.

    gamma and beta come from kernel-3 convolutions along frequency of the
    bandwidth map and are broadcast over frames.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.gamma = nn.Conv1d(2, channels, 3, padding=1)
        self.beta = nn.Conv1d(2, channels, 3, padding=1)
        nn.init.ones_(self.gamma.bias)

    def forward(self, h: Tensor, e_l: Tensor) -> Tensor:
        if h.shape[2] != e_l.shape[-1]:
            raise ValueError(f"{h.shape[2]} spectral bins vs {e_l.shape[-1]} embedding bins")
        return self.gamma(e_l).unsqueeze(-1) * h + self.beta(e_l).unsqueeze(-1)


class SpectralTransform(nn.Module):
    """STFT -> [real; imag] -> BSFT -> activation -> 1x1 conv -> iSTFT."""

    def __init__(self, in_channels: int, out_channels: int, cfg: ModelConfig):
        super().__init__()
        self.out_channels = out_channels
        self.fft_size = cfg.fft_size
        self.hop = cfg.hop
        self.activation = _ACTIVATIONS[cfg.spectral_activation]
        self.bsft = BSFT(2 * in_channels)
        self.conv = nn.Conv1d(2 * in_channels, 2 * out_channels, 1)
        window = torch.from_numpy(hann_window(cfg.fft_size)).float()
        self.register_buffer("window", window, persistent=False)

    def forward(self, g: Tensor, e_l: Tensor) -> Tensor:
        b, c, t = g.shape
        spec = torch.stft(
            g.reshape(b * c, t),
            self.fft_size,
            self.hop,
            window=self.window,
            center=True,
            pad_mode="reflect",
            return_complex=True,
        )
        n_bins, n_frames = spec.shape[-2:]
        # (B*C, F, N, 2) -> (B, 2C, F, N) with all real parts first, then all imaginary parts.
        h = torch.view_as_real(spec).reshape(b, c, n_bins, n_frames, 2)
        h = h.permute(0, 4, 1, 2, 3).reshape(b, 2 * c, n_bins, n_frames)
        h = self.activation(self.bsft(h, e_l))
        # A 1x1 convolution over (F, N) is a pointwise channel mix; flattening keeps it on the fast path.
        h = self.conv(h.reshape(b, 2 * c, n_bins * n_frames))
        h = h.reshape(b, 2, self.out_channels, n_bins, n_frames).permute(0, 2, 3, 4, 1)
        spec = torch.view_as_complex(h.contiguous()).reshape(b * self.out_channels, n_bins, n_frames)
        y = torch.istft(spec, self.fft_size, self.hop, window=self.window, center=True, length=t)
        return y.reshape(b, self.out_channels, t)


class STFC(nn.Module):
    """Short-time Fourier convolution with four-path local/global fusion.

    Output is ``[local; global]`` along channels, ``out_channels // 2`` each.
    """

    def __init__(self, in_channels: int, out_channels: int, cfg: ModelConfig):
        super().__init__()
        if in_channels % 2 or out_channels % 2:
            raise ValueError(f"STFC needs even channel counts, got {in_channels}->{out_channels}")
        ci, co = in_channels // 2, out_channels // 2
        self.local_to_local = nn.Conv1d(ci, co, 3, padding=1)
        self.global_to_local = nn.Conv1d(ci, co, 3, padding=1)
        self.local_to_global = nn.Conv1d(ci, co, 3, padding=1)
        self.global_to_global = SpectralTransform(ci, co, cfg)

    def forward(self, x: Tensor, e_l: Tensor) -> Tensor:
        if x.shape[1] % 2:
            raise ValueError(f"STFC input must have an even channel count, got {x.shape[1]}")
        x_local, x_global = x.chunk(2, dim=1)
        out_local = self.local_to_local(x_local) + self.global_to_local(x_global)
        out_global = self.local_to_global(x_local) + self.global_to_global(x_global, e_l)
        return torch.cat([out_local, out_global], dim=1)


class ResidualLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c = cfg.channels
        self.lambda_proj = nn.Linear(cfg.lambda_hidden, c)
        self.stfc = STFC(c, 2 * c, cfg)
        self.out_proj = nn.Conv1d(c, 2 * c, 1)

    def gate(self, x: Tensor, lam_emb: Tensor, e_l: Tensor) -> Tensor:
        y = x + self.lambda_proj(lam_emb).unsqueeze(-1)
        local, glob = self.stfc(y, e_l).chunk(2, dim=1)
        filter_l, gate_l = local.chunk(2, dim=1)
        filter_g, gate_g = glob.chunk(2, dim=1)
        filt = torch.cat([filter_l, filter_g], dim=1)
        gate = torch.cat([gate_l, gate_g], dim=1)
        return torch.tanh(filt) * torch.sigmoid(gate)

    def forward(self, x: Tensor, lam_emb: Tensor, e_l: Tensor) -> tuple[Tensor, Tensor]:
        residual, skip = self.out_proj(self.gate(x, lam_emb, e_l)).chunk(2, dim=1)
        return (x + residual) / math.sqrt(2.0), skip


class NUWave2(nn.Module):
    """Predicts the noise in ``z_t`` given the low-band signal, its bandwidth map and log-SNR."""

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.input_proj = nn.Conv1d(2, c, 1)
        self.lambda_embedding = LambdaEmbedding(cfg.lambda_emb_dim, cfg.lambda_hidden)
        self.layers = nn.ModuleList([ResidualLayer(cfg) for _ in range(cfg.n_layers)])
        self.skip_proj = nn.Conv1d(c, c, 1)
        self.output_proj = nn.Conv1d(c, 1, 1)
        nn.init.zeros_(self.output_proj.weight)
        nn.init.zeros_(self.output_proj.bias)

    def forward(self, z_t: Tensor, x_l: Tensor, e_l: Tensor, lam: Tensor) -> Tensor:
        if z_t.shape != x_l.shape:
            raise ValueError(f"z_t {tuple(z_t.shape)} and x_l {tuple(x_l.shape)} differ in shape")
        if e_l.shape[-1] != self.cfg.freq_bins:
            raise ValueError(f"bandwidth map has {e_l.shape[-1]} bins, expected {self.cfg.freq_bins}")
        length = z_t.shape[-1]
        pad = -length % self.cfg.hop
        x = torch.stack([z_t, x_l], dim=1)
        if pad:
            x = F.pad(x, (0, pad))
        x = F.silu(self.input_proj(x))
        lam_emb = self.lambda_embedding(lam)
        skip = 0.0
        for layer in self.layers:
            x, s = layer(x, lam_emb, e_l)
            skip = skip + s
        x = skip / math.sqrt(len(self.layers))
        x = self.output_proj(F.silu(self.skip_proj(x)))
        return x[:, 0, :length]


def build_model(cfg: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> NUWave2:
    """Deterministically initialised model; leaves the global torch RNG untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = NUWave2(cfg)
    return model.to(dtype)


def param_count(cfg: ModelConfig) -> int:
    with torch.device("meta"):
        model = NUWave2(cfg)
    return sum(p.numel() for p in model.parameters())


# --------------------------------------------------------------------------- gradients


class ActivationCache:
    """Holds the autograd graph of one forward pass until :func:`backward` consumes it."""

    def __init__(self, output: Tensor):
        self.output = output


def forward(model: NUWave2, z_t, x_l, e_l, lam, cache: bool = False):
    """Run the model; with ``cache`` also return an :class:`ActivationCache` for backward."""
    if cache:
        out = model(z_t, x_l, e_l, lam)
        return out, ActivationCache(out)
    with torch.no_grad():
        return model(z_t, x_l, e_l, lam)


def backward(loss_grad: Tensor, cache: ActivationCache | None, model: NUWave2) -> dict[str, Tensor]:
    """Vector-Jacobian product of the cached output with ``loss_grad`` for every parameter."""
    if cache is None or cache.output is None:
        raise RuntimeError("invalid state: backward needs a forward pass run with cache=True")
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(cache.output, params, grad_outputs=loss_grad, allow_unused=True)
    cache.output = None
    return {
        n: torch.zeros_like(p) if g is None else g for n, p, g in zip(names, params, grads)
    }


# --------------------------------------------------------------------------- numpy bridge


class Predictor:
    """Adapts a model to the ``(z, x_l, e_l, lam) -> eps_hat`` numpy signature the sampler uses."""

    def __init__(self, model: NUWave2):
        self.model = model.eval()
        self.dtype = next(model.parameters()).dtype
        self.calls = 0

    def __call__(self, z, x_l, e_l, lam) -> np.ndarray:
        self.calls += 1
        z = torch.as_tensor(np.asarray(z), dtype=self.dtype)
        squeeze = z.ndim == 1
        if squeeze:
            z = z[None]
        x_l = torch.as_tensor(np.asarray(x_l), dtype=self.dtype).reshape(z.shape)
        e_l = torch.as_tensor(np.asarray(e_l), dtype=self.dtype)
        if e_l.ndim == 2:
            e_l = e_l.expand(z.shape[0], *e_l.shape)
        lam = torch.full((z.shape[0],), float(lam), dtype=self.dtype)
        with torch.no_grad():
            out = self.model(z, x_l, e_l, lam).numpy().astype(np.float64)
        return out[0] if squeeze else out
