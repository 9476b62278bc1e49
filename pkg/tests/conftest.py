"""Shared fixtures and corpus-building helpers."""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np
import pytest

from mosbench.corpus import Corpus, CorpusEntry, RatingRecord
from mosbench.model import ArchConfig

TINY_ARCH = ArchConfig(
    mean_channels=(2, 2, 2, 2),
    bias_channels=(2, 2),
    recurrent_hidden=4,
    dense_hidden=4,
    dropout=0.0,
    judge_embedding_dim=3,
)


def make_entry(
    audio_id: str,
    system_id: str,
    scores: dict[str, int],
    n_frames: int = 5,
    seed: int = 0,
    spectrogram: np.ndarray | None = None,
) -> CorpusEntry:
    """Build an entry with a random non-negative spectrogram and given ratings."""
    if spectrogram is None:
        rng = np.random.default_rng(seed)
        spectrogram = np.abs(rng.normal(size=(n_frames, 257))).astype(np.float32)
    ratings = [
        RatingRecord(audio_id=audio_id, system_id=system_id, judge_id=judge, score=score)
        for judge, score in scores.items()
    ]
    return CorpusEntry(audio_id=audio_id, system_id=system_id,
                       spectrogram=spectrogram, ratings=ratings)


def make_corpus(entry_specs: list[tuple[str, str, dict[str, int]]],
                n_frames: int = 5) -> Corpus:
    entries = [
        make_entry(audio_id, system_id, scores, n_frames=n_frames, seed=i)
        for i, (audio_id, system_id, scores) in enumerate(entry_specs)
    ]
    roster = tuple(sorted({j for _, _, scores in entry_specs for j in scores}))
    return Corpus(entries=entries, judge_roster=roster)


def write_wav(path: Path, samples: np.ndarray, rate: int = 16_000) -> Path:
    """Write float samples in [-1, 1] as 16-bit PCM; 2-D input becomes stereo."""
    samples = np.asarray(samples)
    channels = 1 if samples.ndim == 1 else samples.shape[1]
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(channels)
        handle.setsampwidth(2)
        handle.setframerate(rate)
        handle.writeframes(pcm.tobytes())
    return path


@pytest.fixture
def tiny_arch() -> ArchConfig:
    return TINY_ARCH
