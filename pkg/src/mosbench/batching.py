"""Training-tuple expansion and fixed-length batch assembly.

Every (entry, rating) pair becomes one training tuple, so each individual
judge score is used exactly once per epoch. Items inside a batch are brought
to the batch's own maximum length by repetitive padding: the tail of a padded
item is a cyclic replica of its own frames, never silence, which keeps
batch-norm statistics representative of real speech frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import ValidationError

PAD_REPETITIVE = "repetitive"
PAD_ZERO = "zero"
PADDING_MODES = (PAD_REPETITIVE, PAD_ZERO)


@dataclass(frozen=True)
class TrainingTuple:
    """One (audio, judge) supervision pair."""

    audio_id: str
    judge_index: int
    judge_score: float
    mean_score: float


@dataclass(eq=False)
class TrainingBatch:
    """A padded batch of training tuples.

    ``spectrograms`` has shape (B, T_max, 257); ``frame_counts`` keeps each
    item's original length so the padded region can be identified.
    """

    spectrograms: np.ndarray
    frame_counts: np.ndarray
    judge_indices: np.ndarray
    judge_scores: np.ndarray
    mean_scores: np.ndarray

    def __len__(self) -> int:
        return int(self.frame_counts.shape[0])


def expand_tuples(corpus: Corpus) -> list[TrainingTuple]:
    """One tuple per individual rating; an entry with m ratings yields m tuples."""
    if len(corpus) == 0:
        raise ValidationError("cannot expand an empty corpus")
    tuples = []
    for entry in corpus.entries:
        for rating in entry.ratings:
            tuples.append(
                TrainingTuple(
                    audio_id=entry.audio_id,
                    judge_index=corpus.judge_index(rating.judge_id),
                    judge_score=float(rating.score),
                    mean_score=entry.mean_score,
                )
            )
    return tuples


def repetitive_pad(frames: np.ndarray, target_len: int) -> np.ndarray:
    """Extend a (T, F) matrix to ``target_len`` frames by cyclic tiling.

    Output frame t equals input frame (t mod T); a target equal to the input
    length returns the input unchanged.
    """
    length = frames.shape[0]
    if target_len < length:
        raise ValidationError(
            f"target length {target_len} shorter than input ({length} frames)"
        )
    if target_len == length:
        return frames
    return frames[np.arange(target_len) % length]


def zero_pad(frames: np.ndarray, target_len: int) -> np.ndarray:
    """Extend a (T, F) matrix to ``target_len`` frames with all-zero frames."""
    length = frames.shape[0]
    if target_len < length:
        raise ValidationError(
            f"target length {target_len} shorter than input ({length} frames)"
        )
    if target_len == length:
        return frames
    tail = np.zeros((target_len - length, frames.shape[1]), dtype=frames.dtype)
    return np.concatenate([frames, tail], axis=0)


def make_batches(
    tuples: list[TrainingTuple],
    corpus: Corpus,
    batch_size: int,
    seed: int | None,
    padding: str = PAD_REPETITIVE,
) -> list[TrainingBatch]:
    """Deterministically shuffle tuples and pack them into padded batches.

    With ``seed=None`` the tuple order is preserved (used for validation and
    evaluation passes). The final short batch is kept. Each batch is padded
    to its own maximum length.
    """
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    if padding not in PADDING_MODES:
        raise ValidationError(f"padding must be one of {PADDING_MODES}, got {padding!r}")
    if not tuples:
        return []
    order = np.arange(len(tuples))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(tuples))
    pad = repetitive_pad if padding == PAD_REPETITIVE else zero_pad

    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [tuples[i] for i in order[start:start + batch_size]]
        specs = [corpus.entry(t.audio_id).spectrogram for t in chunk]
        t_max = max(s.shape[0] for s in specs)
        batches.append(
            TrainingBatch(
                spectrograms=np.stack([pad(s, t_max) for s in specs]).astype(np.float32),
                frame_counts=np.array([s.shape[0] for s in specs], dtype=np.int64),
                judge_indices=np.array([t.judge_index for t in chunk], dtype=np.int64),
                judge_scores=np.array([t.judge_score for t in chunk], dtype=np.float32),
                mean_scores=np.array([t.mean_score for t in chunk], dtype=np.float32),
            )
        )
    return batches
