"""Binary checkpoint format.

Layout (little-endian)::

    b"NW2C" | u32 version | u32 n | n bytes canonical JSON metadata
    | u32 array count | records... | u32 CRC32 of everything before it

Each record is ``u16 name length, name, 2-byte dtype tag, u8 ndim,
u64 * ndim shape, raw payload``.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .network import ModelConfig, NUWave2
from .optim import OptimizerState

MAGIC = b"NW2C"
VERSION = 1
_DTYPES = {"f4": "<f4", "f8": "<f8", "i8": "<i8", "i4": "<i4"}


class CorruptCheckpointError(ValueError):
    pass


class UnsupportedVersionError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    optimizer: dict = field(default_factory=dict)  # lr/betas/eps/step
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    ema_params: dict[str, np.ndarray] = field(default_factory=dict)
    train_config: dict = field(default_factory=dict)
    rng: dict = field(default_factory=dict)
    global_step: int = 0
    loss_ema: float | None = None
    version: int = VERSION

    def build_model(self) -> NUWave2:
        model = NUWave2(self.model_config)
        model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in self.params.items()})
        return model

    def optimizer_state(self) -> OptimizerState:
        state = OptimizerState(**self.optimizer)
        state.m = {k: torch.from_numpy(v.copy()) for k, v in self.adam_m.items()}
        state.v = {k: torch.from_numpy(v.copy()) for k, v in self.adam_v.items()}
        return state


def snapshot(
    model: NUWave2,
    opt: OptimizerState | None,
    *,
    global_step: int = 0,
    train_config: dict | None = None,
    rng: dict | None = None,
    loss_ema: float | None = None,
    ema_params: dict[str, torch.Tensor] | None = None,
) -> Checkpoint:
    to_np = lambda d: {k: v.detach().cpu().numpy().copy() for k, v in d.items()}  # noqa: E731
    ckpt = Checkpoint(
        model_config=model.cfg,
        params=to_np(dict(model.named_parameters())),
        train_config=dict(train_config or {}),
        rng=dict(rng or {}),
        global_step=global_step,
        loss_ema=loss_ema,
        ema_params=to_np(ema_params or {}),
    )
    if opt is not None:
        ckpt.optimizer = dict(lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps, step=opt.step)
        ckpt.adam_m = to_np(opt.m)
        ckpt.adam_v = to_np(opt.v)
    return ckpt


def _arrays(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    out = []
    for prefix, group in (("param/", ckpt.params), ("adam_m/", ckpt.adam_m),
                          ("adam_v/", ckpt.adam_v), ("ema/", ckpt.ema_params)):
        out.extend((prefix + name, group[name]) for name in sorted(group))
    return out


def _dtype_tag(a: np.ndarray) -> str:
    tag = a.dtype.kind + str(a.dtype.itemsize)
    if tag not in _DTYPES:
        raise ValueError(f"unsupported array dtype {a.dtype}")
    return tag


def dumps(ckpt: Checkpoint) -> bytes:
    meta = {
        "model_config": ckpt.model_config.to_dict(),
        "optimizer": ckpt.optimizer,
        "train_config": ckpt.train_config,
        "rng": ckpt.rng,
        "global_step": ckpt.global_step,
        "loss_ema": ckpt.loss_ema,
    }
    text = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", ckpt.version, len(text)), text]
    arrays = _arrays(ckpt)
    parts.append(struct.pack("<I", len(arrays)))
    for name, a in arrays:
        tag = _dtype_tag(a)
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw + tag.encode() + struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(np.ascontiguousarray(a, dtype=_DTYPES[tag]).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> Checkpoint:
    if len(data) < 16 or data[:4] != MAGIC:
        raise CorruptCheckpointError("corrupt-checkpoint: bad magic")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptCheckpointError("corrupt-checkpoint: CRC mismatch")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported-version: checkpoint v{version}, reader v{VERSION}")
    try:
        pos = 12
        meta = json.loads(data[pos : pos + n])
        pos += n
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}, "ema": {}}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2 : pos + 2 + ln].decode()
            pos += 2 + ln
            tag = data[pos : pos + 2].decode()
            (ndim,) = struct.unpack_from("<B", data, pos + 2)
            pos += 3
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            dtype = np.dtype(_DTYPES[tag])
            size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if pos + size > len(data) - 4:
                raise CorruptCheckpointError(f"corrupt-checkpoint: record {name!r} overruns file")
            arr = np.frombuffer(data, dtype=dtype, count=size // dtype.itemsize, offset=pos)
            pos += size
            prefix, key = name.split("/", 1)
            groups[prefix][key] = arr.reshape(shape).astype(dtype.newbyteorder("="))
    except (struct.error, KeyError, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, CorruptCheckpointError):
            raise
        raise CorruptCheckpointError(f"corrupt-checkpoint: {exc}") from exc
    return Checkpoint(
        model_config=ModelConfig(**meta["model_config"]),
        params=groups["param"],
        optimizer=meta["optimizer"],
        adam_m=groups["adam_m"],
        adam_v=groups["adam_v"],
        ema_params=groups["ema"],
        train_config=meta["train_config"],
        rng=meta["rng"],
        global_step=meta["global_step"],
        loss_ema=meta["loss_ema"],
        version=version,
    )


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(ckpt))
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    return loads(Path(path).read_bytes())
