"""Input validation helpers shared by the data and model layers."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

#: One-sided bin count of the 512-point FFT frontend; fixed across the toolkit.
FREQ_BINS = 257

MIN_SCORE = 1
MAX_SCORE = 5


def check_spectrogram(frames, name: str = "spectrogram") -> np.ndarray:
    """Validate a (T, 257) non-negative magnitude matrix and return it as float32."""
    arr = np.asarray(frames)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D (frames x bins), got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValidationError(f"{name} must contain at least one frame")
    if arr.shape[1] != FREQ_BINS:
        raise ValidationError(
            f"{name} must have {FREQ_BINS} frequency bins, got {arr.shape[1]}"
        )
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    if (arr < 0).any():
        raise ValidationError(f"{name} contains negative magnitudes")
    return arr.astype(np.float32, copy=False)


def check_score(value, context: str = "") -> int:
    """Validate an integer opinion score in {1..5}."""
    where = f" ({context})" if context else ""
    try:
        score = int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"score {value!r} is not an integer{where}") from None
    if float(score) != float(value) or not MIN_SCORE <= score <= MAX_SCORE:
        raise ValidationError(
            f"score {value!r} outside {{{MIN_SCORE}..{MAX_SCORE}}}{where}"
        )
    return score


def check_positive(value: int, name: str) -> int:
    if value < 1:
        raise ValidationError(f"{name} must be >= 1, got {value}")
    return value


def check_non_negative(value: float, name: str) -> float:
    if value < 0:
        raise ValidationError(f"{name} must be >= 0, got {value}")
    return value
