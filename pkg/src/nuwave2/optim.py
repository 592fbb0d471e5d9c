"""Bias-corrected Adam over named torch tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch


@dataclass
class OptimizerState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, torch.Tensor], **kwargs) -> "OptimizerState":
        state = cls(**kwargs)
        for name, p in params.items():
            state.m[name] = torch.zeros_like(p)
            state.v[name] = torch.zeros_like(p)
        return state


@torch.no_grad()
def adam_step(params: dict[str, torch.Tensor], grads: dict[str, torch.Tensor], state: OptimizerState) -> None:
    """Update ``params`` in place and advance ``state.step``."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ValueError(f"shape mismatch for {name}: param {tuple(p.shape)}, grad {tuple(g.shape)}")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m.mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
        v.mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
        p.sub_(state.lr * (m / c1) / ((v / c2).sqrt() + state.eps))
