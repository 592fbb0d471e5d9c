"""Corpus indexing, random patches and training-batch assembly."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffusion
from .dsp import MIN_INPUT_SR, TARGET_SR, AudioBuffer, SosFilter, degrade, random_filter, resampled_length
from .network import ModelConfig, bandwidth_embedding
from .wavio import load_wav, wav_frame_count

log = logging.getLogger(__name__)

PATCH_SIZE = 32768
BATCH_SIZE = 24


@dataclass(frozen=True)
class CorpusEntry:
    path: str
    speaker: str
    n_samples: int  # at 48 kHz


@dataclass
class CorpusIndex:
    entries: list[CorpusEntry]
    train_speakers: list[str]
    test_speakers: list[str]
    skipped: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def train(self) -> list[CorpusEntry]:
        keep = set(self.train_speakers)
        return [e for e in self.entries if e.speaker in keep]

    @property
    def test(self) -> list[CorpusEntry]:
        keep = set(self.test_speakers)
        return [e for e in self.entries if e.speaker in keep]

    def load(self, entry: CorpusEntry) -> np.ndarray:
        if entry.path not in self._cache:
            self._cache[entry.path] = load_wav(entry.path, TARGET_SR).samples
        return self._cache[entry.path]

    @classmethod
    def from_clips(cls, clips: list[np.ndarray], speaker: str = "clip") -> "CorpusIndex":
        """In-memory corpus of 48 kHz clips, all assigned to the training split."""
        index = cls([], [speaker], [])
        for i, clip in enumerate(clips):
            entry = CorpusEntry(f"<memory:{i}>", speaker, len(clip))
            index.entries.append(entry)
            index._cache[entry.path] = np.asarray(clip, dtype=np.float64)
        return index


def scan_corpus(root, holdout_speakers: list[str] | None = None) -> CorpusIndex:
    """Index ``root/<speaker>/**/*.wav`` in lexicographic order.

    Without an explicit holdout list the last two speakers go to the test
    split, provided at least three speakers exist.
    """
    root = Path(root)
    entries = []
    skipped = 0
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root)
        if path.suffix.lower() != ".wav":
            skipped += 1
            continue
        speaker = rel.parts[0] if len(rel.parts) > 1 else ""
        frames, rate = wav_frame_count(path)
        entries.append(CorpusEntry(str(path), speaker, resampled_length(frames, rate, TARGET_SR)))
    if skipped:
        log.warning("ignored %d non-WAV files under %s", skipped, root)
    if not entries:
        raise ValueError(f"no WAV files found under {root}")
    speakers = sorted({e.speaker for e in entries})
    if holdout_speakers is None:
        holdout_speakers = speakers[-2:] if len(speakers) > 2 else []
    test = [s for s in speakers if s in set(holdout_speakers)]
    train = [s for s in speakers if s not in set(holdout_speakers)]
    return CorpusIndex(entries, train, test, skipped)


@dataclass
class TrainingItem:
    x: np.ndarray
    input_sr: int
    filter: SosFilter


def sample_training_item(
    index: CorpusIndex, rng: np.random.Generator, patch: int = PATCH_SIZE
) -> TrainingItem:
    """Uniform file, uniform patch offset, input rate ~ U[6000, 48000] and a random filter."""
    train = index.train
    if not train:
        raise ValueError("training split is empty")
    entry = train[int(rng.integers(len(train)))]
    audio = index.load(entry)
    if len(audio) >= patch:
        start = int(rng.integers(len(audio) - patch + 1))
        x = audio[start : start + patch].copy()
    else:
        x = np.pad(audio, (0, patch - len(audio)))
    input_sr = int(round(rng.uniform(MIN_INPUT_SR, TARGET_SR)))
    return TrainingItem(x, input_sr, random_filter(input_sr, rng))


@dataclass
class TrainBatch:
    x: np.ndarray
    x_l: np.ndarray
    e_l: np.ndarray
    t: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    eps: np.ndarray
    z_t: np.ndarray
    input_sr: list[int]


def make_batch(
    items: list[TrainingItem],
    u: float,
    schedule: diffusion.ScheduleParams,
    rng: np.random.Generator,
    model_cfg: ModelConfig = ModelConfig(),
) -> TrainBatch:
    k = len(items)
    if k < 1:
        raise ValueError("a batch needs at least one item")
    x = np.stack([it.x for it in items])
    x_l = np.stack([degrade(AudioBuffer(it.x, TARGET_SR), it.input_sr, it.filter).samples for it in items])
    e_l = np.stack([bandwidth_embedding(it.input_sr, model_cfg) for it in items])
    t = np.array(diffusion.sample_times(u, k))
    points = [diffusion.schedule_at(schedule, ti) for ti in t]
    eps = rng.standard_normal(x.shape)
    z_t = np.stack([diffusion.diffuse(xi, tp, ei) for xi, tp, ei in zip(x, points, eps)])
    return TrainBatch(
        x=x,
        x_l=x_l,
        e_l=e_l,
        t=t,
        lam=np.array([p.lam for p in points]),
        alpha=np.array([p.alpha for p in points]),
        sigma=np.array([p.sigma for p in points]),
        eps=eps,
        z_t=z_t,
        input_sr=[it.input_sr for it in items],
    )
