"""Optimization loop, validation-based checkpoint selection, multi-seed runs.

Training is plain Adam over the combined objective. After every epoch the
validation loss is computed in inference mode (dropout off, frozen batch-norm
statistics); the returned parameters are those of the epoch with the smallest
validation loss, earliest epoch winning ties. Everything is deterministic for
a fixed config under single-threaded execution.
"""

from __future__ import annotations

import csv
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .batching import PAD_REPETITIVE, PAD_ZERO, TrainingBatch, expand_tuples, make_batches
from .corpus import Corpus
from .errors import TrainingDivergedError, ValidationError
from .evaluation import MetricsReport, evaluate
from .model import ArchConfig, ForwardOutput, MBNet, Predictor, build_model, save_checkpoint
from .objective import LossConfig, mbnet_loss


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on, ablation switches included."""

    batch_size: int = 64
    learning_rate: float = 1e-4
    epochs: int = 50
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    disable_biasnet: bool = False
    disable_meannet: bool = False
    disable_clipping: bool = False
    zero_padding: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.disable_biasnet and self.disable_meannet:
            raise ValidationError("disable_biasnet and disable_meannet are mutually exclusive")

    @property
    def padding(self) -> str:
        return PAD_ZERO if self.zero_padding else PAD_REPETITIVE

    def effective_loss(self) -> LossConfig:
        if self.disable_clipping:
            return replace(self.loss, clipping_enabled=False)
        return self.loss


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    checkpoint_path: str | None = None


@dataclass(eq=False)
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def best_epoch_index(self) -> int:
        """Index of the smallest validation loss; earliest epoch wins ties."""
        if not self.records:
            raise ValidationError("history is empty")
        losses = [r.val_loss for r in self.records]
        return int(np.argmin(losses))

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "train_loss", "val_loss"])
            for record in self.records:
                writer.writerow([record.epoch, repr(record.train_loss), repr(record.val_loss)])
        return path


def _forward(model: MBNet, batch: TrainingBatch, cfg: TrainConfig
             ) -> tuple[ForwardOutput | None, ForwardOutput | None]:
    """Run the paths required by the ablation flags and compose the outputs."""
    spectrograms = torch.from_numpy(batch.spectrograms)
    if cfg.disable_meannet:
        judge_out = model.bias_net(spectrograms, torch.from_numpy(batch.judge_indices))
        return None, judge_out
    if cfg.disable_biasnet:
        return model.mean_net(spectrograms), None
    return model(spectrograms, torch.from_numpy(batch.judge_indices))


def _batch_loss(model: MBNet, batch: TrainingBatch, cfg: TrainConfig,
                loss_cfg: LossConfig) -> torch.Tensor:
    mean_out, judge_out = _forward(model, batch, cfg)
    return mbnet_loss(mean_out, judge_out, batch, loss_cfg)


def _epoch_loss(model: MBNet, batches: list[TrainingBatch], cfg: TrainConfig,
                loss_cfg: LossConfig) -> float:
    """Tuple-weighted mean loss over a batch list, without gradient tracking."""
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for batch in batches:
            total += float(_batch_loss(model, batch, cfg, loss_cfg)) * len(batch)
            count += len(batch)
    return total / count


def train(
    train_corpus: Corpus,
    val_corpus: Corpus,
    cfg: TrainConfig,
    run_dir: Path | str | None = None,
) -> tuple[Predictor, TrainHistory]:
    """Train an MBNet and return the best-validation-loss parameters.

    With ``run_dir`` set, per-epoch checkpoints land in
    ``run_dir/checkpoints/epoch_NNN.pt``, the winner is copied to
    ``checkpoints/best.pt``, and the history is written to
    ``run_dir/history.csv``.
    """
    if len(train_corpus) == 0 or len(val_corpus) == 0:
        raise ValidationError("training and validation corpora must be nonempty")
    if train_corpus.judge_roster != val_corpus.judge_roster:
        raise ValidationError("training and validation corpora must share one judge roster")

    model = build_model(cfg.arch, train_corpus.num_judges, cfg.seed)
    if cfg.disable_biasnet:
        parameters = list(model.mean_net.parameters())
    elif cfg.disable_meannet:
        parameters = list(model.bias_net.parameters())
    else:
        parameters = list(model.parameters())
    optimizer = torch.optim.Adam(parameters, lr=cfg.learning_rate)
    loss_cfg = cfg.effective_loss()

    train_tuples = expand_tuples(train_corpus)
    val_tuples = expand_tuples(val_corpus)
    val_batches = make_batches(val_tuples, val_corpus, cfg.batch_size,
                               seed=None, padding=cfg.padding)

    checkpoints_dir = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        checkpoints_dir = run_dir / "checkpoints"
        checkpoints_dir.mkdir(parents=True, exist_ok=True)

    epoch_seeds = np.random.default_rng(cfg.seed)
    history = TrainHistory()
    best_state: dict[str, torch.Tensor] | None = None
    best_val = float("inf")

    for epoch in range(1, cfg.epochs + 1):
        shuffle_seed = int(epoch_seeds.integers(0, 2**31 - 1))
        batches = make_batches(train_tuples, train_corpus, cfg.batch_size,
                               seed=shuffle_seed, padding=cfg.padding)
        model.train()
        total, count = 0.0, 0
        for batch_no, batch in enumerate(batches, start=1):
            loss = _batch_loss(model, batch, cfg, loss_cfg)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(batch)
            count += len(batch)
        train_loss = total / count

        val_loss = _epoch_loss(model, val_batches, cfg, loss_cfg)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")

        checkpoint_path = None
        if checkpoints_dir is not None:
            predictor = Predictor(model=model, roster=train_corpus.judge_roster,
                                  mean_active=not cfg.disable_meannet,
                                  bias_active=not cfg.disable_biasnet)
            checkpoint_path = str(
                save_checkpoint(checkpoints_dir / f"epoch_{epoch:03d}.pt", predictor)
            )
        history.records.append(
            EpochRecord(epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                        checkpoint_path=checkpoint_path)
        )
        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    model.eval()
    if run_dir is not None:
        best_record = history.records[history.best_epoch_index()]
        shutil.copyfile(best_record.checkpoint_path, checkpoints_dir / "best.pt")
        history.to_csv(run_dir / "history.csv")

    predictor = Predictor(model=model, roster=train_corpus.judge_roster,
                          mean_active=not cfg.disable_meannet,
                          bias_active=not cfg.disable_biasnet)
    return predictor, history


@dataclass(eq=False)
class SeedResult:
    """Outcome of one seed: reports keyed by inference mode, or a failure."""

    seed: int
    reports: dict[str, MetricsReport] | None = None
    error: str | None = None


@dataclass(eq=False)
class MultiSeedReport:
    results: list[SeedResult]

    def aggregate(self) -> dict[tuple[str, str, str], tuple[float, float, int]]:
        """(mode, level, metric) -> (mean, population std, count over seeds).

        Seeds that failed or produced an undefined value are excluded from
        that metric's aggregate; the count records how many contributed.
        """
        samples: dict[tuple[str, str, str], list[float]] = {}
        for result in self.results:
            if result.reports is None:
                continue
            for mode, report in result.reports.items():
                for level, bundle in (("utterance", report.utterance), ("system", report.system)):
                    if bundle is None:
                        continue
                    for metric, value in bundle.as_dict().items():
                        if value is not None:
                            samples.setdefault((mode, level, metric), []).append(value)
        return {
            key: (float(np.mean(vals)), float(np.std(vals)), len(vals))
            for key, vals in samples.items()
        }

    def failures(self) -> list[SeedResult]:
        return [r for r in self.results if r.error is not None]


def run_seeds(
    train_corpus: Corpus,
    val_corpus: Corpus,
    eval_corpus: Corpus,
    cfg: TrainConfig,
    seeds: list[int],
    modes: tuple[str, ...],
    eval_seed: int = 0,
) -> MultiSeedReport:
    """Train once per seed, evaluate each run, and aggregate the metrics.

    A failing seed is recorded with its error message instead of aborting
    the whole sweep. Results are ordered by seed value.
    """
    if not seeds:
        raise ValidationError("run_seeds needs at least one seed")
    results = []
    for seed in sorted(seeds):
        seed_cfg = replace(cfg, seed=seed)
        try:
            predictor, _ = train(train_corpus, val_corpus, seed_cfg)
            reports = {
                mode: evaluate(predictor, eval_corpus, mode=mode, seed=eval_seed)
                for mode in modes
            }
            results.append(SeedResult(seed=seed, reports=reports))
        except Exception as exc:  # noqa: BLE001 - failure markers by contract
            results.append(SeedResult(seed=seed, error=f"{type(exc).__name__}: {exc}"))
    return MultiSeedReport(results=results)
