import numpy as np
import pytest
import torch

from nuwave2.network import ModelConfig, build_model

FS = 48000

# Small enough for double-precision gradient checks and sub-second forwards.
TINY = ModelConfig(n_layers=2, channels=4, lambda_emb_dim=16, lambda_hidden=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    return TINY


@pytest.fixture
def tiny_model():
    return build_model(TINY, seed=0)


def randomize_(model, seed=0, scale=0.3):
    """Overwrite every parameter (including the zero-initialised output conv) with noise."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(scale * torch.randn(p.shape, generator=g, dtype=p.dtype))
    return model


def tone(freq, n, fs=FS, amp=1.0, phase=0.0):
    return amp * np.cos(2 * np.pi * freq * np.arange(n) / fs + phase)


def fit_tone(y, freq, fs=FS):
    """Least-squares amplitude and phase of a cosine at ``freq``."""
    t = np.arange(len(y)) / fs
    basis = np.stack([np.cos(2 * np.pi * freq * t), np.sin(2 * np.pi * freq * t)], axis=1)
    (a, b), *_ = np.linalg.lstsq(basis, y, rcond=None)
    return np.hypot(a, b), np.arctan2(-b, a)


# Acceptance criteria outcomes, reported at the end of the session.
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
