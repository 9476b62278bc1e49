"""Listening-test corpora: manifest loading, spectrograms, scores, and splits.

A corpus is a list of rated audio entries plus the global judge roster. Each
entry keeps every individual judge score; the utterance-level mean score and
the per-judge bias scores are derived from those.
"""

from __future__ import annotations

import csv
import hashlib
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AudioReadError, ManifestError, ValidationError
from .validation import FREQ_BINS, check_score, check_spectrogram

MANIFEST_COLUMNS = ("audio_id", "system_id", "audio_path", "judge_id", "score")


@dataclass(frozen=True)
class StftConfig:
    """Frontend settings for the magnitude short-time Fourier transform.

    The 512-point one-sided FFT yields the canonical 257 frequency bins.
    Windows are periodic Hann; magnitudes stay linear (no log compression).
    Frames are taken without centering, so an input must cover at least one
    full window and the frame count is ``1 + (len - win_length) // hop_length``.
    """

    sample_rate: int = 16_000
    n_fft: int = 512
    win_length: int = 512
    hop_length: int = 256

    def __post_init__(self) -> None:
        if self.sample_rate < 1:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.n_fft // 2 + 1 != FREQ_BINS:
            raise ValidationError(
                f"n_fft {self.n_fft} does not produce {FREQ_BINS} one-sided bins"
            )
        if not 0 < self.win_length <= self.n_fft:
            raise ValidationError(f"win_length must be in (0, n_fft], got {self.win_length}")
        if self.hop_length < 1:
            raise ValidationError(f"hop_length must be >= 1, got {self.hop_length}")

    def cache_key(self) -> str:
        return f"sr{self.sample_rate}-fft{self.n_fft}-win{self.win_length}-hop{self.hop_length}"


@dataclass(frozen=True)
class RatingRecord:
    """One judge's score for one audio."""

    audio_id: str
    system_id: str
    judge_id: str
    score: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "score", check_score(self.score, context=self.audio_id))


@dataclass(eq=False)
class CorpusEntry:
    """One audio with its spectrogram, system id, and all its ratings."""

    audio_id: str
    system_id: str
    spectrogram: np.ndarray
    ratings: list[RatingRecord]
    mean_score: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.ratings:
            raise ValidationError(f"entry {self.audio_id!r} has no ratings")
        for rating in self.ratings:
            if rating.audio_id != self.audio_id:
                raise ValidationError(
                    f"rating for {rating.audio_id!r} attached to entry {self.audio_id!r}"
                )
        seen: set[str] = set()
        for rating in self.ratings:
            if rating.judge_id in seen:
                raise ValidationError(
                    f"duplicate rating by judge {rating.judge_id!r} for audio {self.audio_id!r}"
                )
            seen.add(rating.judge_id)
        self.spectrogram = check_spectrogram(self.spectrogram, name=f"spectrogram[{self.audio_id}]")
        self.mean_score = sum(r.score for r in self.ratings) / len(self.ratings)

    @property
    def frame_count(self) -> int:
        return self.spectrogram.shape[0]


@dataclass(eq=False)
class Corpus:
    """All entries of one listening test plus the global judge roster."""

    entries: list[CorpusEntry]
    judge_roster: tuple[str, ...]

    def __post_init__(self) -> None:
        self.judge_roster = tuple(self.judge_roster)
        roster = set(self.judge_roster)
        if len(roster) != len(self.judge_roster):
            raise ValidationError("judge_roster contains duplicates")
        self._roster_index = {judge: i for i, judge in enumerate(self.judge_roster)}
        self._entry_index: dict[str, CorpusEntry] = {}
        for entry in self.entries:
            if entry.audio_id in self._entry_index:
                raise ValidationError(f"duplicate audio_id {entry.audio_id!r}")
            self._entry_index[entry.audio_id] = entry
            for rating in entry.ratings:
                if rating.judge_id not in roster:
                    raise ValidationError(
                        f"judge {rating.judge_id!r} missing from roster (audio {entry.audio_id!r})"
                    )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def num_judges(self) -> int:
        return len(self.judge_roster)

    def judge_index(self, judge_id: str) -> int:
        try:
            return self._roster_index[judge_id]
        except KeyError:
            raise ValidationError(f"judge {judge_id!r} not in roster") from None

    def entry(self, audio_id: str) -> CorpusEntry:
        try:
            return self._entry_index[audio_id]
        except KeyError:
            raise ValidationError(f"unknown audio_id {audio_id!r}") from None

    def system_ids(self) -> list[str]:
        return sorted({entry.system_id for entry in self.entries})


def bias_scores(entry: CorpusEntry) -> list[tuple[str, float]]:
    """Per-judge deviation from the entry's mean score, in rating order."""
    return [(r.judge_id, r.score - entry.mean_score) for r in entry.ratings]


def _hann_window(length: int) -> np.ndarray:
    # Periodic Hann, the usual analysis-window convention for STFT.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def compute_spectrogram(waveform, stft: StftConfig) -> np.ndarray:
    """Magnitude STFT of a mono waveform as a (T, 257) float32 matrix."""
    wav = np.asarray(waveform, dtype=np.float64)
    if wav.ndim != 1:
        raise ValidationError(f"waveform must be 1-D, got shape {wav.shape}")
    if wav.size == 0:
        raise ValidationError("waveform is empty")
    if wav.size < stft.win_length:
        raise ValidationError(
            f"waveform shorter than one window ({wav.size} < {stft.win_length} samples)"
        )
    n_frames = 1 + (wav.size - stft.win_length) // stft.hop_length
    offsets = np.arange(n_frames) * stft.hop_length
    segments = wav[offsets[:, None] + np.arange(stft.win_length)[None, :]]
    segments = segments * _hann_window(stft.win_length)
    magnitude = np.abs(np.fft.rfft(segments, n=stft.n_fft, axis=1))
    return magnitude.astype(np.float32)


def read_wav(path: Path | str, expected_sample_rate: int) -> np.ndarray:
    """Read a 16-bit PCM WAV file as a mono float64 waveform in [-1, 1].

    Stereo files are downmixed by channel average. The declared sample rate
    must match ``expected_sample_rate``; resampling is out of scope.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as handle:
            n_channels = handle.getnchannels()
            samp_width = handle.getsampwidth()
            rate = handle.getframerate()
            n_frames = handle.getnframes()
            payload = handle.readframes(n_frames)
    except FileNotFoundError:
        raise AudioReadError(f"audio file not found: {path}") from None
    except (wave.Error, EOFError, OSError) as exc:
        raise AudioReadError(f"cannot decode audio file {path}: {exc}") from exc
    if samp_width != 2:
        raise AudioReadError(f"audio file {path} is not 16-bit PCM (sample width {samp_width})")
    if rate != expected_sample_rate:
        raise ValidationError(
            f"audio file {path} declares {rate} Hz, expected {expected_sample_rate} Hz"
        )
    samples = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return samples


def spectrogram_cache_path(cache_dir: Path | str, audio_id: str, stft: StftConfig) -> Path:
    """Cache location for one audio's spectrogram, keyed by (audio_id, STFT settings)."""
    digest = hashlib.sha256(f"{audio_id}|{stft.cache_key()}".encode("utf-8")).hexdigest()
    return Path(cache_dir) / f"{digest[:32]}.npy"


def save_cached_spectrogram(
    cache_dir: Path | str, audio_id: str, stft: StftConfig, spectrogram: np.ndarray
) -> Path:
    path = spectrogram_cache_path(cache_dir, audio_id, stft)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, check_spectrogram(spectrogram), allow_pickle=False)
    return path


def load_cached_spectrogram(
    cache_dir: Path | str, audio_id: str, stft: StftConfig
) -> np.ndarray | None:
    path = spectrogram_cache_path(cache_dir, audio_id, stft)
    if not path.exists():
        return None
    return check_spectrogram(np.load(path, allow_pickle=False), name=f"cache[{audio_id}]")


def _parse_manifest(manifest_path: Path) -> list[dict[str, str]]:
    try:
        handle = open(manifest_path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {manifest_path}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{manifest_path}: empty manifest") from None
        if tuple(h.strip() for h in header) != MANIFEST_COLUMNS:
            raise ManifestError(
                f"{manifest_path}: header must be {','.join(MANIFEST_COLUMNS)}, "
                f"got {','.join(header)}"
            )
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ManifestError(
                    f"{manifest_path}:{line_no}: expected {len(MANIFEST_COLUMNS)} fields, "
                    f"got {len(row)}"
                )
            record = {col: value.strip() for col, value in zip(MANIFEST_COLUMNS, row)}
            for col in ("audio_id", "system_id", "audio_path", "judge_id"):
                if not record[col]:
                    raise ManifestError(f"{manifest_path}:{line_no}: empty {col}")
            record["line_no"] = str(line_no)
            rows.append(record)
    if not rows:
        raise ManifestError(f"{manifest_path}: manifest has no data rows")
    return rows


def load_corpus(
    manifest_path: Path | str,
    audio_root: Path | str,
    stft: StftConfig = StftConfig(),
    cache_dir: Path | str | None = None,
) -> Corpus:
    """Build a corpus from a rating manifest.

    The manifest is a UTF-8 CSV with header ``audio_id,system_id,audio_path,
    judge_id,score`` and one row per individual rating. Entries are created
    in first-appearance order. When ``cache_dir`` is given, spectrograms are
    loaded from the cache when present and written back on miss, so a fully
    cached corpus needs no audio files at all.
    """
    manifest_path = Path(manifest_path)
    audio_root = Path(audio_root)
    rows = _parse_manifest(manifest_path)

    ratings_by_audio: dict[str, list[RatingRecord]] = {}
    meta_by_audio: dict[str, tuple[str, str]] = {}
    seen_pairs: set[tuple[str, str]] = set()
    for row in rows:
        line = f"{manifest_path}:{row['line_no']}"
        score = check_score(row["score"], context=f"line {row['line_no']}")
        audio_id = row["audio_id"]
        pair = (audio_id, row["judge_id"])
        if pair in seen_pairs:
            raise ValidationError(
                f"{line}: duplicate rating for (audio {audio_id!r}, judge {row['judge_id']!r})"
            )
        seen_pairs.add(pair)
        meta = (row["system_id"], row["audio_path"])
        known = meta_by_audio.setdefault(audio_id, meta)
        if known != meta:
            raise ManifestError(
                f"{line}: audio {audio_id!r} re-declared with different system or path"
            )
        ratings_by_audio.setdefault(audio_id, []).append(
            RatingRecord(audio_id=audio_id, system_id=row["system_id"],
                         judge_id=row["judge_id"], score=score)
        )

    entries = []
    for audio_id, ratings in ratings_by_audio.items():
        system_id, audio_path = meta_by_audio[audio_id]
        spectrogram = None
        if cache_dir is not None:
            spectrogram = load_cached_spectrogram(cache_dir, audio_id, stft)
        if spectrogram is None:
            waveform = read_wav(audio_root / audio_path, stft.sample_rate)
            spectrogram = compute_spectrogram(waveform, stft)
            if cache_dir is not None:
                save_cached_spectrogram(cache_dir, audio_id, stft, spectrogram)
        entries.append(
            CorpusEntry(audio_id=audio_id, system_id=system_id,
                        spectrogram=spectrogram, ratings=ratings)
        )

    roster = tuple(sorted({rating.judge_id for ratings in ratings_by_audio.values()
                           for rating in ratings}))
    return Corpus(entries=entries, judge_roster=roster)


def split_corpus(
    corpus: Corpus, sizes: tuple[int, int, int], seed: int
) -> tuple[Corpus, Corpus, Corpus]:
    """Deterministic disjoint train/val/test split of the entry list.

    Every split keeps the full judge roster so judge-embedding indices stay
    valid across splits. Entry order within each split follows corpus order.
    """
    train_n, val_n, test_n = sizes
    for name, value in zip(("train", "val", "test"), sizes):
        if value < 0:
            raise ValidationError(f"{name} size must be >= 0, got {value}")
    total = train_n + val_n + test_n
    if total > len(corpus):
        raise ValidationError(
            f"requested split sizes sum to {total} but corpus has {len(corpus)} entries"
        )
    perm = np.random.default_rng(seed).permutation(len(corpus))
    picks = (
        sorted(perm[:train_n]),
        sorted(perm[train_n:train_n + val_n]),
        sorted(perm[train_n + val_n:total]),
    )
    return tuple(
        Corpus(entries=[corpus.entries[i] for i in indices], judge_roster=corpus.judge_roster)
        for indices in picks
    )
