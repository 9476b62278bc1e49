"""Synthetic listening-test generator with known ground truth.

Desk-scale stand-in for real MOS corpora: system qualities, per-utterance
qualities, and per-judge biases are drawn from known distributions and
recorded, so a trained model's bias estimates can be checked against the
actual biases. The synthetic "audio" is a fixed harmonic-stripe spectrogram
pattern plus white noise whose gain decreases strictly with quality, making
quality learnable from the spectrogram alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .corpus import (
    Corpus,
    CorpusEntry,
    RatingRecord,
    StftConfig,
    save_cached_spectrogram,
)
from .errors import ValidationError
from .evaluation import pearson_lcc
from .model import Predictor
from .validation import FREQ_BINS, MAX_SCORE, MIN_SCORE

# Fixture geometry of the synthetic spectrogram: stripes at every 20th bin,
# gently amplitude-modulated over time so convolutions see local structure.
STRIPE_SPACING = 20
STRIPE_BINS = np.arange(STRIPE_SPACING, FREQ_BINS - 1, STRIPE_SPACING)
_OFF_STRIPE = np.setdiff1d(np.arange(FREQ_BINS), STRIPE_BINS)
MODULATION_PERIOD = 16.0


@dataclass(frozen=True)
class SynthSpec:
    """Shape and noise levels of one synthetic corpus."""

    num_systems: int = 12
    utterances_per_system: int = 30
    total_judges: int = 24
    judges_per_utterance: int = 4
    judge_bias_std: float = 0.8
    utterance_noise_std: float = 0.3
    rating_noise_std: float = 0.4
    min_frames: int = 80
    max_frames: int = 160
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("num_systems", "utterances_per_system", "total_judges",
                     "judges_per_utterance", "min_frames", "max_frames"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.judges_per_utterance > self.total_judges:
            raise ValidationError(
                f"judges_per_utterance ({self.judges_per_utterance}) exceeds "
                f"total_judges ({self.total_judges})"
            )
        for name in ("judge_bias_std", "utterance_noise_std", "rating_noise_std"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.min_frames > self.max_frames:
            raise ValidationError("min_frames must be <= max_frames")


@dataclass(eq=False)
class SynthTruth:
    """Ground truth recorded exactly as drawn by the generator."""

    system_quality: dict[str, float]
    utterance_quality: dict[str, float]
    judge_bias: dict[str, float]


def quality_to_noise_gain(quality: float) -> float:
    """Noise amplitude for a given quality; strictly decreasing in quality."""
    return float(2.0 ** (3.0 - quality))


def stripe_pattern(n_frames: int) -> np.ndarray:
    """The fixed clean-signal component: harmonic stripes, unit base amplitude."""
    pattern = np.zeros((n_frames, FREQ_BINS))
    modulation = 1.0 + 0.25 * np.sin(2.0 * np.pi * np.arange(n_frames) / MODULATION_PERIOD)
    pattern[:, STRIPE_BINS] = modulation[:, None]
    return pattern


def synth_spectrogram(quality: float, n_frames: int, rng: np.random.Generator) -> np.ndarray:
    gain = quality_to_noise_gain(quality)
    noise = gain * np.abs(rng.normal(size=(n_frames, FREQ_BINS)))
    return (stripe_pattern(n_frames) + noise).astype(np.float32)


def snr_proxy(spectrogram: np.ndarray) -> float:
    """Mean stripe-bin amplitude over mean off-stripe amplitude.

    For generated spectrograms this grows strictly with the designed quality
    up to measurement noise, and is how "quality is visible in the audio"
    is verified without a model.
    """
    spectrogram = np.asarray(spectrogram, dtype=np.float64)
    return float(spectrogram[:, STRIPE_BINS].mean() / spectrogram[:, _OFF_STRIPE].mean())


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def generate_synthetic(spec: SynthSpec) -> tuple[Corpus, SynthTruth]:
    """Build a synthetic corpus plus the ground truth it was drawn from.

    Per-system quality is uniform in [1.5, 4.5]; per-utterance quality adds
    Gaussian jitter and is clamped to [1, 5]. Each utterance is rated by a
    random subset of judges; a rating is the utterance quality plus the
    judge's bias plus rating noise, rounded and clamped to {1..5}. All draws
    use per-utterance derived streams, so generation is order-independent.
    """
    judge_ids = [f"judge{k:03d}" for k in range(spec.total_judges)]
    judge_bias = np.random.default_rng((spec.seed, 0)).normal(
        0.0, spec.judge_bias_std, size=spec.total_judges
    )
    system_quality = np.random.default_rng((spec.seed, 1)).uniform(
        1.5, 4.5, size=spec.num_systems
    )

    entries = []
    truth_utterances: dict[str, float] = {}
    for s_idx in range(spec.num_systems):
        system_id = f"sys{s_idx:02d}"
        for u_idx in range(spec.utterances_per_system):
            audio_id = f"{system_id}_utt{u_idx:03d}"
            rng = np.random.default_rng((spec.seed, 2, s_idx, u_idx))
            quality = float(
                np.clip(system_quality[s_idx] + rng.normal(0.0, spec.utterance_noise_std),
                        1.0, 5.0)
            )
            n_frames = int(rng.integers(spec.min_frames, spec.max_frames + 1))
            judge_subset = np.sort(
                rng.choice(spec.total_judges, size=spec.judges_per_utterance, replace=False)
            )
            ratings = []
            for judge_index in judge_subset:
                raw = quality + judge_bias[judge_index] + rng.normal(0.0, spec.rating_noise_std)
                score = int(np.clip(_round_half_up(raw), MIN_SCORE, MAX_SCORE))
                ratings.append(
                    RatingRecord(audio_id=audio_id, system_id=system_id,
                                 judge_id=judge_ids[judge_index], score=score)
                )
            entries.append(
                CorpusEntry(audio_id=audio_id, system_id=system_id,
                            spectrogram=synth_spectrogram(quality, n_frames, rng),
                            ratings=ratings)
            )
            truth_utterances[audio_id] = quality

    corpus = Corpus(entries=entries, judge_roster=tuple(judge_ids))
    truth = SynthTruth(
        system_quality={f"sys{s:02d}": float(q) for s, q in enumerate(system_quality)},
        utterance_quality=truth_utterances,
        judge_bias={judge_ids[k]: float(judge_bias[k]) for k in range(spec.total_judges)},
    )
    return corpus, truth


def bias_recovery(
    predictor: Predictor,
    corpus: Corpus,
    truth: SynthTruth,
    probe_size: int = 50,
) -> float:
    """Correlation between per-judge average bias outputs and true biases.

    Every roster judge is applied to the same probe set of utterances (an
    evenly spaced subset of the corpus); the bias subnet's utterance outputs
    are averaged per judge and correlated against the generator's biases.
    """
    if len(predictor.roster) < 2:
        raise ValidationError("bias recovery needs at least two judges")
    model = predictor.model
    model.eval()
    step = max(1, len(corpus.entries) // probe_size)
    probe = corpus.entries[::step][:probe_size]
    num_judges = len(predictor.roster)
    judges = torch.arange(num_judges, dtype=torch.long)
    totals = np.zeros(num_judges)
    with torch.no_grad():
        for entry in probe:
            spec = torch.from_numpy(np.ascontiguousarray(entry.spectrogram)).unsqueeze(0)
            out = model.bias_net(spec.expand(num_judges, -1, -1), judges)
            totals += out.utterance_scores.numpy().astype(np.float64)
    predicted = totals / len(probe)
    actual = np.array([truth.judge_bias[judge] for judge in predictor.roster])
    return pearson_lcc(predicted, actual)


def save_truth(truth: SynthTruth, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "system_quality": truth.system_quality,
        "utterance_quality": truth.utterance_quality,
        "judge_bias": truth.judge_bias,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_truth(path: Path | str) -> SynthTruth:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return SynthTruth(
        system_quality=dict(payload["system_quality"]),
        utterance_quality=dict(payload["utterance_quality"]),
        judge_bias=dict(payload["judge_bias"]),
    )


def export_corpus(
    corpus: Corpus,
    out_dir: Path | str,
    stft: StftConfig = StftConfig(),
    truth: SynthTruth | None = None,
) -> Path:
    """Write a corpus as manifest CSV plus a spectrogram cache (no WAV files).

    The result is loadable with ``load_corpus(manifest, out_dir, stft,
    cache_dir=out_dir / "spectrograms")`` and round-trips spectrograms
    bit-exactly. Ground truth, when given, lands in ``truth.json``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    lines = ["audio_id,system_id,audio_path,judge_id,score"]
    for entry in corpus.entries:
        for rating in entry.ratings:
            lines.append(
                f"{entry.audio_id},{entry.system_id},wav/{entry.audio_id}.wav,"
                f"{rating.judge_id},{rating.score}"
            )
        save_cached_spectrogram(out_dir / "spectrograms", entry.audio_id, stft,
                                entry.spectrogram)
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if truth is not None:
        save_truth(truth, out_dir / "truth.json")
    return manifest_path
