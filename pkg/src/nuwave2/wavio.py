"""Minimal RIFF/WAVE reader and writer (PCM16 and IEEE float32)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsp import TARGET_SR, AudioBuffer, resample

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """Malformed RIFF/WAVE structure."""


class UnsupportedFormatError(ValueError):
    """Well-formed file in an encoding this reader does not handle."""


def _fail(msg: str, offset: int):
    raise WavFormatError(f"{msg} at byte offset {offset}")


def read_wav(path) -> AudioBuffer:
    """Decode a WAV file at its native rate; multichannel audio is averaged to mono."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        _fail("file too short for a RIFF header", 0)
    if data[0:4] != b"RIFF":
        _fail(f"expected 'RIFF', found {data[0:4]!r}", 0)
    if data[8:12] != b"WAVE":
        _fail(f"expected 'WAVE', found {data[8:12]!r}", 8)

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if chunk_id == b"fmt ":
            if size < 16 or body + 16 > len(data):
                _fail(f"fmt chunk of {size} bytes is too short", pos)
            tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == _EXTENSIBLE and size >= 40:
                (tag,) = struct.unpack_from("<H", data, body + 24)
            fmt = (tag, channels, rate, block_align, bits, pos)
        elif chunk_id == b"data":
            if fmt is None:
                _fail("data chunk before fmt chunk", pos)
            payload = data[body : body + size]
            if len(payload) < size:
                _fail(f"data chunk declares {size} bytes but only {len(payload)} remain", pos + 4)
            break
        pos = body + size + (size & 1)
    if fmt is None:
        _fail("no fmt chunk found", pos)
    if payload is None:
        _fail("no data chunk found", pos)

    tag, channels, rate, block_align, bits, fmt_pos = fmt
    if channels < 1 or rate < 1:
        _fail(f"invalid channels={channels} or rate={rate}", fmt_pos + 8)
    if tag == _PCM and bits == 16:
        samples = np.frombuffer(payload, dtype="<i2", count=len(payload) // 2) / 32768.0
    elif tag == _FLOAT and bits == 32:
        samples = np.frombuffer(payload, dtype="<f4", count=len(payload) // 4).astype(np.float64)
    else:
        raise UnsupportedFormatError(f"unsupported encoding: format tag {tag}, {bits} bits")
    n = len(samples) // channels
    samples = samples[: n * channels].reshape(n, channels).mean(axis=1)
    return AudioBuffer(samples, rate)


def load_wav(path, target_sr: int | None = TARGET_SR) -> AudioBuffer:
    """Read a WAV file and resample it to ``target_sr`` (keep native rate if None)."""
    buf = read_wav(path)
    if target_sr is not None and buf.sample_rate != target_sr:
        buf = resample(buf, target_sr)
    return buf


def save_wav(path, buf: AudioBuffer, format: str = "pcm16") -> None:
    """Write mono audio with a 44-byte canonical header."""
    x = np.asarray(buf.samples, dtype=np.float64)
    if format == "pcm16":
        v = np.clip(x, -1.0, 1.0) * 32768.0
        v = np.sign(v) * np.floor(np.abs(v) + 0.5)
        payload = np.clip(v, -32768, 32767).astype("<i2").tobytes()
        tag, bits = _PCM, 16
    elif format == "float32":
        payload = x.astype("<f4").tobytes()
        tag, bits = _FLOAT, 32
    else:
        raise ValueError(f"format must be 'pcm16' or 'float32', got {format!r}")
    block = bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, tag, 1, buf.sample_rate, buf.sample_rate * block, block, bits)
    header += b"data" + struct.pack("<I", len(payload))
    Path(path).write_bytes(header + payload)


def wav_frame_count(path) -> tuple[int, int]:
    """(frames, sample_rate) read from the header only."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
            _fail("not a RIFF/WAVE file", 0)
        fmt = None
        pos = 12
        while True:
            hdr = fh.read(8)
            if len(hdr) < 8:
                _fail("no data chunk found", pos)
            chunk_id, size = hdr[:4], struct.unpack("<I", hdr[4:])[0]
            if chunk_id == b"fmt ":
                body = fh.read(size + (size & 1))
                if len(body) < 16:
                    _fail("truncated fmt chunk", pos)
                _, channels, rate, _, block_align, _ = struct.unpack_from("<HHIIHH", body)
                fmt = (rate, max(block_align, 1))
            elif chunk_id == b"data":
                if fmt is None:
                    _fail("data chunk before fmt chunk", pos)
                return size // fmt[1], fmt[0]
            else:
                fh.seek(size + (size & 1), 1)
            pos += 8 + size + (size & 1)
