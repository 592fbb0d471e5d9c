"""Training loop: batches -> L1 noise-prediction loss -> Adam."""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
import torch

from . import diffusion
from .checkpoint import Checkpoint, save_checkpoint, snapshot
from .data import BATCH_SIZE, PATCH_SIZE, CorpusIndex, make_batch, sample_training_item
from .network import ModelConfig, build_model
from .optim import OptimizerState, adam_step

log = logging.getLogger(__name__)

LOSS_EMA_DECAY = 0.99


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, seed: tuple[int, int], loss: float):
        super().__init__(f"non-finite loss {loss} at step {step} (batch seed {seed})")
        self.step = step
        self.seed = seed


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    batch: int = BATCH_SIZE
    steps: int = 1000
    seed: int = 0
    checkpoint_every: int = 1000
    patch: int = PATCH_SIZE
    # Off by default; none of them is part of the reference recipe.
    lr_decay: float = 1.0
    grad_clip: float = 0.0
    ema_decay: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def batch_rng(seed: int, step: int) -> np.random.Generator:
    """Each step draws from its own stream so resumption and prefetching cannot reorder draws."""
    return np.random.default_rng([seed, step])


def _clip_(grads: dict[str, torch.Tensor], max_norm: float) -> None:
    total = math.sqrt(sum(float((g.double() ** 2).sum()) for g in grads.values()))
    if total > max_norm:
        for g in grads.values():
            g.mul_(max_norm / total)


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    corpus: CorpusIndex,
    steps: int | None = None,
    checkpoint_dir=None,
    resume: Checkpoint | None = None,
    log_stream: TextIO | None = None,
    schedule: diffusion.ScheduleParams = diffusion.ScheduleParams(),
) -> Checkpoint:
    """Run until ``steps`` total optimizer steps have been taken and return the final state.

    Training is a pure function of (configs, corpus, seed); resuming from a
    checkpoint reproduces the uninterrupted run exactly.
    """
    steps = train_cfg.steps if steps is None else steps
    log_stream = sys.stdout if log_stream is None else log_stream
    if resume is not None:
        model = resume.build_model()
        opt = resume.optimizer_state()
        step = resume.global_step
        loss_ema = resume.loss_ema
        ema = {k: torch.from_numpy(v.copy()) for k, v in resume.ema_params.items()}
    else:
        model = build_model(model_cfg, seed=train_cfg.seed)
        params = dict(model.named_parameters())
        opt = OptimizerState.for_params(params, lr=train_cfg.lr)
        step = 0
        loss_ema = None
        ema = {}
    if train_cfg.ema_decay > 0 and not ema:
        ema = {k: p.detach().clone() for k, p in model.named_parameters()}
    model.train()
    names, params = zip(*model.named_parameters())
    param_map = dict(zip(names, params))
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    def state() -> Checkpoint:
        return snapshot(
            model,
            opt,
            global_step=step,
            train_config=train_cfg.to_dict(),
            rng={"scheme": "per-step", "seed": train_cfg.seed},
            loss_ema=loss_ema,
            ema_params=ema,
        )

    while step < steps:
        rng = batch_rng(train_cfg.seed, step)
        items = [sample_training_item(corpus, rng, train_cfg.patch) for _ in range(train_cfg.batch)]
        u = float(rng.uniform())
        batch = make_batch(items, u, schedule, rng, model_cfg)

        as_t = lambda a: torch.as_tensor(a, dtype=torch.float32)  # noqa: E731
        eps_hat = model(as_t(batch.z_t), as_t(batch.x_l), as_t(batch.e_l), as_t(batch.lam))
        loss = diffusion.loss_l1(as_t(batch.eps), eps_hat)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDivergedError(step + 1, (train_cfg.seed, step), value)
        grads = dict(zip(names, torch.autograd.grad(loss, params)))
        if train_cfg.grad_clip > 0:
            _clip_(grads, train_cfg.grad_clip)
        opt.lr = train_cfg.lr * train_cfg.lr_decay ** step
        adam_step(param_map, grads, opt)
        if ema:
            with torch.no_grad():
                for k, p in param_map.items():
                    ema[k].mul_(train_cfg.ema_decay).add_(p, alpha=1.0 - train_cfg.ema_decay)

        step += 1
        loss_ema = value if loss_ema is None else LOSS_EMA_DECAY * loss_ema + (1 - LOSS_EMA_DECAY) * value
        srs = ",".join(str(s) for s in batch.input_sr)
        log_stream.write(f"step={step} loss={value:.6f} ema={loss_ema:.6f} sr={srs}\n")
        log_stream.flush()
        if ckpt_dir is not None and train_cfg.checkpoint_every > 0 and step % train_cfg.checkpoint_every == 0:
            save_checkpoint(ckpt_dir / f"step_{step:08d}.nw2c", state())

    final = state()
    if ckpt_dir is not None:
        save_checkpoint(ckpt_dir / "last.nw2c", final)
    return final
