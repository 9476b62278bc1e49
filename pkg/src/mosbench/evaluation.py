"""Correlation metrics, inference modes, and utterance/system-level reports.

System-level scores aggregate utterance scores by arithmetic mean per
system, on both the prediction and the ground-truth side. Correlations on
constant inputs are reported as explicit ``undefined`` markers, never as 0.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch

from .corpus import Corpus, CorpusEntry
from .errors import UndefinedCorrelationError, ValidationError
from .model import Predictor

MEAN_ONLY = "mean_only"
CORRECT_JUDGES = "mean_plus_bias_correct_judges"
RANDOM_JUDGES = "mean_plus_bias_random_judges"
INFERENCE_MODES = (MEAN_ONLY, CORRECT_JUDGES, RANDOM_JUDGES)

UTTERANCE = "utterance"
SYSTEM = "system"
METRIC_NAMES = ("lcc", "srcc", "mse")


def pearson_lcc(x, y) -> float:
    """Pearson linear correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"inputs must be equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValidationError("correlation needs at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    if denom == 0.0:
        raise UndefinedCorrelationError("correlation undefined: an input has zero variance")
    return float(min(1.0, max(-1.0, np.dot(xc, yc) / denom)))


def average_ranks(values) -> np.ndarray:
    """1-based ranks; runs of equal values all receive their average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    start = 0
    while start < values.size:
        stop = start
        while stop + 1 < values.size and values[order[stop + 1]] == values[order[start]]:
            stop += 1
        ranks[order[start:stop + 1]] = 0.5 * (start + stop) + 1.0
        start = stop + 1
    return ranks


def spearman_srcc(x, y) -> float:
    """Spearman rank correlation: Pearson correlation of tie-averaged ranks."""
    return pearson_lcc(average_ranks(x), average_ranks(y))


def mse(x, y) -> float:
    """Mean squared difference."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"inputs must be equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 1:
        raise ValidationError("mse needs at least one point")
    return float(np.mean((x - y) ** 2))


def system_aggregate(values: list[tuple[str, float]]) -> dict[str, float]:
    """Arithmetic mean per system id."""
    if not values:
        raise ValidationError("system_aggregate needs at least one value")
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for system_id, value in values:
        sums[system_id] = sums.get(system_id, 0.0) + float(value)
        counts[system_id] = counts.get(system_id, 0) + 1
    return {system_id: sums[system_id] / counts[system_id] for system_id in sums}


def _entry_rng(seed: int, audio_id: str) -> np.random.Generator:
    # Per-entry stream derived from (seed, audio_id): evaluation order and
    # parallelism cannot change the sampled judges.
    digest = hashlib.sha256(audio_id.encode("utf-8")).digest()
    return np.random.default_rng((seed, int.from_bytes(digest[:8], "big")))


def _judge_predictions(predictor: Predictor, entry: CorpusEntry,
                       judge_indices: np.ndarray) -> np.ndarray:
    """Utterance-level predictions for one entry under each given judge."""
    model = predictor.model
    model.eval()
    with torch.no_grad():
        spec = torch.from_numpy(np.ascontiguousarray(entry.spectrogram)).unsqueeze(0)
        judges = torch.from_numpy(np.asarray(judge_indices, dtype=np.int64))
        bias = model.bias_net(spec.expand(len(judges), -1, -1), judges)
        scores = bias.utterance_scores
        if predictor.mean_active:
            mean = model.mean_net(spec)
            scores = scores + mean.utterance_scores.expand(len(judges))
    return scores.numpy().astype(np.float64)


def _mean_prediction(predictor: Predictor, entry: CorpusEntry) -> float:
    model = predictor.model
    model.eval()
    with torch.no_grad():
        spec = torch.from_numpy(np.ascontiguousarray(entry.spectrogram)).unsqueeze(0)
        out = model.mean_net(spec)
    return float(out.utterance_scores[0])


def predict_utterance(
    predictor: Predictor,
    entry: CorpusEntry,
    mode: str = MEAN_ONLY,
    seed: int = 0,
) -> float:
    """Predict one utterance's score under an inference mode.

    ``mean_only`` uses the mean subnet alone. The judge-conditioned modes
    average the per-judge predictions over the entry's actual judges
    (``mean_plus_bias_correct_judges``) or over an equal-sized judge set
    sampled uniformly without replacement from the roster, deterministically
    per (seed, audio) (``mean_plus_bias_random_judges``).
    """
    if mode not in INFERENCE_MODES:
        raise ValidationError(f"unknown inference mode {mode!r}")
    if mode == MEAN_ONLY:
        if not predictor.mean_active:
            raise ValidationError("mean path was not trained; mean_only mode unavailable")
        return _mean_prediction(predictor, entry)

    if not predictor.bias_active:
        raise ValidationError(f"bias path was not trained; mode {mode!r} unavailable")
    if mode == CORRECT_JUDGES:
        if not entry.ratings:
            raise ValidationError(f"entry {entry.audio_id!r} has no ratings")
        judge_indices = np.array(
            [predictor.judge_index(r.judge_id) for r in entry.ratings], dtype=np.int64
        )
    else:
        rng = _entry_rng(seed, entry.audio_id)
        judge_indices = rng.choice(
            len(predictor.roster), size=len(entry.ratings), replace=False
        ).astype(np.int64)
    return float(np.mean(_judge_predictions(predictor, entry, judge_indices)))


@dataclass(frozen=True)
class MetricBundle:
    """LCC/SRCC/MSE triple; ``None`` marks an undefined correlation."""

    lcc: float | None
    srcc: float | None
    mse: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {"lcc": self.lcc, "srcc": self.srcc, "mse": self.mse}


@dataclass(frozen=True)
class MetricsReport:
    """Utterance- and system-level metrics for one inference mode."""

    mode: str
    utterance: MetricBundle | None
    system: MetricBundle


def _bundle(predictions: np.ndarray, truths: np.ndarray) -> MetricBundle:
    def guarded(metric):
        try:
            return metric(predictions, truths)
        except UndefinedCorrelationError:
            return None

    return MetricBundle(
        lcc=guarded(pearson_lcc),
        srcc=guarded(spearman_srcc),
        mse=mse(predictions, truths),
    )


def evaluate(
    predictor: Predictor,
    corpus: Corpus,
    mode: str = MEAN_ONLY,
    seed: int = 0,
) -> MetricsReport:
    """Score every corpus entry and report utterance- and system-level metrics.

    Utterance metrics compare predictions against per-utterance mean scores;
    system metrics compare per-system means of both sides. With fewer than
    two systems the system-level correlations are undefined.
    """
    if len(corpus) == 0:
        raise ValidationError("cannot evaluate an empty corpus")
    predictions = np.array(
        [predict_utterance(predictor, entry, mode=mode, seed=seed) for entry in corpus.entries]
    )
    truths = np.array([entry.mean_score for entry in corpus.entries])
    if len(corpus) >= 2:
        utterance = _bundle(predictions, truths)
    else:
        utterance = MetricBundle(lcc=None, srcc=None, mse=mse(predictions, truths))

    system_ids = [entry.system_id for entry in corpus.entries]
    pred_by_system = system_aggregate(list(zip(system_ids, predictions)))
    truth_by_system = system_aggregate(list(zip(system_ids, truths)))
    systems = sorted(pred_by_system)
    sys_pred = np.array([pred_by_system[s] for s in systems])
    sys_truth = np.array([truth_by_system[s] for s in systems])
    if len(systems) >= 2:
        system = _bundle(sys_pred, sys_truth)
    else:
        system = MetricBundle(lcc=None, srcc=None, mse=mse(sys_pred, sys_truth))
    return MetricsReport(mode=mode, utterance=utterance, system=system)


def format_metric(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.10f}"


def report_lines(report: MetricsReport) -> list[str]:
    """Flat ``key = value`` text rendering of one report."""
    lines = [f"mode = {report.mode}"]
    for level, bundle in ((UTTERANCE, report.utterance), (SYSTEM, report.system)):
        if bundle is None:
            continue
        for metric, value in bundle.as_dict().items():
            lines.append(f"{level}.{metric} = {format_metric(value)}")
    return lines


def report_csv_rows(report: MetricsReport) -> list[tuple[str, str, str, str]]:
    """(mode, level, metric, value) rows for table assembly."""
    rows = []
    for level, bundle in ((UTTERANCE, report.utterance), (SYSTEM, report.system)):
        if bundle is None:
            continue
        for metric, value in bundle.as_dict().items():
            rows.append((report.mode, level, metric, format_metric(value)))
    return rows
