"""Turning a trained noise predictor into a 48 kHz upsampler."""

from __future__ import annotations

import numpy as np

from .diffusion import InferenceSchedule, sample
from .network import NUWave2, Predictor, bandwidth_embedding


class ModelUpsampler:
    """Callable ``(x_l, input_sr, rng) -> x_hat`` running the DDIM sampler."""

    def __init__(self, model: NUWave2, schedule: InferenceSchedule = InferenceSchedule()):
        self.predictor = Predictor(model)
        self.cfg = model.cfg
        self.schedule = schedule

    def __call__(self, x_l: np.ndarray, input_sr: int, rng: np.random.Generator) -> np.ndarray:
        e_l = bandwidth_embedding(input_sr, self.cfg)
        return sample(self.predictor, np.asarray(x_l, dtype=np.float64), e_l, self.schedule, rng)
