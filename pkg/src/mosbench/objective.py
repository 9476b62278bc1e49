"""Clipped squared-error objectives for mean- and judge-score regression.

Opinion scores are discrete, so two audios rated identically are merely of
similar, not equal, quality. The clipped loss therefore zeroes the squared
error whenever the residual magnitude is within a threshold ``tau``,
letting predictions float freely inside that band. The combined objective
supervises the mean prediction with the utterance mean score and the
mean+bias prediction with the individual judge score, the latter scaled by
``lambda_bias``; both are additionally applied per frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .batching import TrainingBatch
from .errors import ValidationError
from .model import ForwardOutput
from .validation import check_non_negative


@dataclass(frozen=True)
class LossConfig:
    """Weights and threshold of the combined training objective."""

    tau: float = 0.5
    lambda_bias: float = 4.0
    frame_weight: float = 1.0
    clipping_enabled: bool = True

    def __post_init__(self) -> None:
        check_non_negative(self.tau, "tau")
        check_non_negative(self.lambda_bias, "lambda_bias")
        check_non_negative(self.frame_weight, "frame_weight")


def clipped_mse(prediction, target, tau: float, clipping_enabled: bool = True) -> Tensor:
    """Elementwise squared error, zeroed where ``|prediction - target| <= tau``.

    The comparison is strict: a residual of exactly ``tau`` yields zero loss,
    and the gradient at that boundary is zero as well. With clipping disabled
    this is the plain squared error. Inputs may be tensors or scalars; dtype
    is preserved.
    """
    prediction = torch.as_tensor(prediction)
    target = torch.as_tensor(target)
    residual = prediction - target
    squared = residual * residual
    if not clipping_enabled:
        return squared
    # Bool gate detached from the graph: gradient flows only through `squared`.
    return squared * (residual.abs() > tau)


def frame_loss(frame_scores, label, tau: float, clipping_enabled: bool = True) -> Tensor:
    """Mean clipped squared error of every frame score against one label.

    ``frame_scores`` is (T,) or (B, T); ``label`` is a scalar or (B,). The
    result averages over frames only, so the shape is () or (B,).
    """
    frame_scores = torch.as_tensor(frame_scores)
    if frame_scores.dim() not in (1, 2) or frame_scores.shape[-1] < 1:
        raise ValidationError(f"frame_scores must be (T,) or (B, T), got {tuple(frame_scores.shape)}")
    label = torch.as_tensor(label, dtype=frame_scores.dtype)
    if frame_scores.dim() == 2 and label.dim() == 1:
        label = label[:, None]
    return clipped_mse(frame_scores, label, tau, clipping_enabled).mean(dim=-1)


def mbnet_loss(
    mean_out: ForwardOutput | None,
    judge_out: ForwardOutput | None,
    batch: TrainingBatch,
    cfg: LossConfig,
) -> Tensor:
    """Combined batch loss.

    Per tuple the loss is ``clip(mean_utt, mean_score) + lambda * clip(judge_utt,
    judge_score)`` plus ``frame_weight`` times the analogous frame-level terms;
    the result is the batch mean. Either output may be ``None`` when its path
    is ablated: without ``judge_out`` only the mean terms remain, without
    ``mean_out`` the judge terms are applied unweighted.
    """
    if mean_out is None and judge_out is None:
        raise ValidationError("at least one of mean_out/judge_out is required")
    reference = mean_out if mean_out is not None else judge_out
    dtype = reference.utterance_scores.dtype

    total = torch.zeros((), dtype=dtype)
    if mean_out is not None:
        mean_scores = torch.as_tensor(batch.mean_scores, dtype=dtype)
        per_tuple = clipped_mse(
            mean_out.utterance_scores, mean_scores, cfg.tau, cfg.clipping_enabled
        )
        if cfg.frame_weight > 0:
            per_tuple = per_tuple + cfg.frame_weight * frame_loss(
                mean_out.frame_scores, mean_scores, cfg.tau, cfg.clipping_enabled
            )
        total = total + per_tuple.mean()
    if judge_out is not None:
        judge_scores = torch.as_tensor(batch.judge_scores, dtype=dtype)
        per_tuple = clipped_mse(
            judge_out.utterance_scores, judge_scores, cfg.tau, cfg.clipping_enabled
        )
        if cfg.frame_weight > 0:
            per_tuple = per_tuple + cfg.frame_weight * frame_loss(
                judge_out.frame_scores, judge_scores, cfg.tau, cfg.clipping_enabled
            )
        weight = cfg.lambda_bias if mean_out is not None else 1.0
        total = total + weight * per_tuple.mean()
    return total
