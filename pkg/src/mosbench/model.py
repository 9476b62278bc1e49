"""Mean and bias subnet forward computation.

Both subnets share the same skeleton: stacked 2-D convolution blocks that
stride the frequency axis down (never the time axis), a bidirectional LSTM
over frames, and a two-layer dense head producing one score per frame. The
utterance score is the global mean of the frame scores. The bias subnet is
additionally conditioned on a judge identity, injected as embedding channels
concatenated after the first convolution; its output is added to the mean
subnet's output to form the per-judge score prediction.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import torch
from torch import Tensor, nn

from .errors import ValidationError
from .validation import FREQ_BINS

MEAN_BLOCKS = 4
BIAS_BLOCKS = 2
FREQ_STRIDE = 3
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ArchConfig:
    """Structural hyperparameters of the two subnets.

    The block counts are fixed (four frequency reductions on the mean path,
    two on the bias path); channel widths, recurrent and dense sizes, the
    judge-embedding width, and dropout are free knobs. None of the defaults
    are load-bearing for correctness, only for capacity.
    """

    mean_channels: tuple[int, int, int, int] = (16, 32, 64, 128)
    bias_channels: tuple[int, int] = (16, 32)
    convs_per_mean_block: int = 3
    convs_per_bias_block: int = 2
    recurrent_hidden: int = 128
    dense_hidden: int = 128
    dropout: float = 0.3
    judge_embedding_dim: int = 86

    def __post_init__(self) -> None:
        if len(self.mean_channels) != MEAN_BLOCKS:
            raise ValidationError(f"mean_channels needs {MEAN_BLOCKS} entries")
        if len(self.bias_channels) != BIAS_BLOCKS:
            raise ValidationError(f"bias_channels needs {BIAS_BLOCKS} entries")
        if min(self.mean_channels) < 1 or min(self.bias_channels) < 1:
            raise ValidationError("channel counts must be >= 1")
        if self.convs_per_mean_block < 1:
            raise ValidationError("convs_per_mean_block must be >= 1")
        if self.convs_per_bias_block < 2:
            # The first bias conv is the embedding-concat site, a later one
            # must carry the frequency stride.
            raise ValidationError("convs_per_bias_block must be >= 2")
        if self.recurrent_hidden < 1 or self.dense_hidden < 1:
            raise ValidationError("hidden sizes must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.judge_embedding_dim < 1:
            raise ValidationError("judge_embedding_dim must be >= 1")


def freq_chain(bins: int, reductions: int) -> list[int]:
    """Frequency widths before and after each stride-3 reduction (ceiling)."""
    widths = [bins]
    for _ in range(reductions):
        widths.append(-(-widths[-1] // FREQ_STRIDE))
    return widths


class ForwardOutput(NamedTuple):
    frame_scores: Tensor  # (B, T)
    utterance_scores: Tensor  # (B,)


def _strided_conv(in_ch: int, out_ch: int) -> nn.Conv2d:
    # kernel 3, frequency stride 3, padding 1: output width is ceil(F / 3),
    # time dimension preserved.
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=(1, FREQ_STRIDE), padding=1)


def _same_conv(in_ch: int, out_ch: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=1, padding=1)


class ConvBlock(nn.Module):
    """A run of 3x3 convolutions whose last one strides the frequency axis,
    followed by dropout and batch normalization."""

    def __init__(self, in_ch: int, out_ch: int, n_convs: int, dropout: float) -> None:
        super().__init__()
        layers: list[nn.Module] = []
        ch = in_ch
        for i in range(n_convs):
            conv = _strided_conv(ch, out_ch) if i == n_convs - 1 else _same_conv(ch, out_ch)
            layers += [conv, nn.ReLU()]
            ch = out_ch
        layers += [nn.Dropout(dropout), nn.BatchNorm2d(out_ch)]
        self.layers = nn.Sequential(*layers)

    def forward(self, x: Tensor) -> Tensor:
        return self.layers(x)


class FrameScoreHead(nn.Module):
    """Per-frame scoring: BLSTM over time, then a two-layer dense stack
    applied at every time step, then global mean pooling."""

    def __init__(self, input_width: int, recurrent_hidden: int, dense_hidden: int,
                 dropout: float) -> None:
        super().__init__()
        self.lstm = nn.LSTM(
            input_size=input_width,
            hidden_size=recurrent_hidden,
            batch_first=True,
            bidirectional=True,
        )
        self.dense = nn.Sequential(
            nn.Linear(2 * recurrent_hidden, dense_hidden),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(dense_hidden, 1),
        )

    def forward(self, features: Tensor) -> ForwardOutput:
        # features: (B, C, T, F) -> (B, T, C*F)
        flat = features.permute(0, 2, 1, 3).flatten(2)
        recurrent, _ = self.lstm(flat)
        frame_scores = self.dense(recurrent).squeeze(-1)
        return ForwardOutput(frame_scores, frame_scores.mean(dim=1))


def _check_spectrogram_tensor(spec: Tensor) -> None:
    if spec.dim() != 3:
        raise ValidationError(f"expected (B, T, F) input, got {tuple(spec.shape)}")
    if spec.shape[1] < 1:
        raise ValidationError("input must contain at least one frame")
    if spec.shape[2] != FREQ_BINS:
        raise ValidationError(
            f"expected {FREQ_BINS} frequency bins, got {spec.shape[2]}"
        )


class MeanNet(nn.Module):
    """Predicts the utterance-level mean score from the spectrogram alone."""

    def __init__(self, arch: ArchConfig) -> None:
        super().__init__()
        self.arch = arch
        channels = (1,) + tuple(arch.mean_channels)
        self.blocks = nn.Sequential(*[
            ConvBlock(channels[i], channels[i + 1], arch.convs_per_mean_block, arch.dropout)
            for i in range(MEAN_BLOCKS)
        ])
        reduced_bins = freq_chain(FREQ_BINS, MEAN_BLOCKS)[-1]
        self.head = FrameScoreHead(
            arch.mean_channels[-1] * reduced_bins,
            arch.recurrent_hidden, arch.dense_hidden, arch.dropout,
        )

    def forward(self, spectrograms: Tensor) -> ForwardOutput:
        _check_spectrogram_tensor(spectrograms)
        x = self.blocks(spectrograms.unsqueeze(1))
        return self.head(x)


class BiasNet(nn.Module):
    """Predicts a judge's deviation from the mean score.

    The judge identity is embedded, broadcast over every (time, frequency)
    position, and concatenated to the channel axis right after the first
    convolution; the remaining convolutions then mix it into the features.
    """

    def __init__(self, arch: ArchConfig, num_judges: int) -> None:
        super().__init__()
        if num_judges < 1:
            raise ValidationError(f"num_judges must be >= 1, got {num_judges}")
        self.arch = arch
        self.num_judges = num_judges
        c1, c2 = arch.bias_channels
        self.first_conv = _same_conv(1, c1)
        self.judge_embedding = nn.Embedding(num_judges, arch.judge_embedding_dim)

        # Remainder of block 1: the embedding channels enter the first of
        # these convolutions, the last one carries the frequency stride.
        rest: list[nn.Module] = []
        ch = c1 + arch.judge_embedding_dim
        for i in range(arch.convs_per_bias_block - 1):
            last = i == arch.convs_per_bias_block - 2
            rest += [_strided_conv(ch, c1) if last else _same_conv(ch, c1), nn.ReLU()]
            ch = c1
        rest += [nn.Dropout(arch.dropout), nn.BatchNorm2d(c1)]
        self.block1_rest = nn.Sequential(*rest)
        self.block2 = ConvBlock(c1, c2, arch.convs_per_bias_block, arch.dropout)

        reduced_bins = freq_chain(FREQ_BINS, BIAS_BLOCKS)[-1]
        self.head = FrameScoreHead(
            c2 * reduced_bins, arch.recurrent_hidden, arch.dense_hidden, arch.dropout
        )

    def forward(self, spectrograms: Tensor, judge_indices: Tensor) -> ForwardOutput:
        _check_spectrogram_tensor(spectrograms)
        judge_indices = torch.as_tensor(judge_indices, dtype=torch.long)
        if judge_indices.dim() != 1 or judge_indices.shape[0] != spectrograms.shape[0]:
            raise ValidationError("judge_indices must be one index per batch item")
        if judge_indices.numel() and (
            judge_indices.min() < 0 or judge_indices.max() >= self.num_judges
        ):
            raise ValidationError(
                f"judge index out of range [0, {self.num_judges})"
            )
        x = torch.relu(self.first_conv(spectrograms.unsqueeze(1)))
        emb = self.judge_embedding(judge_indices).to(x.dtype)
        emb = emb[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        x = torch.cat([x, emb], dim=1)
        x = self.block1_rest(x)
        x = self.block2(x)
        return self.head(x)


class MBNet(nn.Module):
    """Mean-bias network: the bias subnet's output is added to the mean
    subnet's output to predict an individual judge's score."""

    def __init__(self, arch: ArchConfig, num_judges: int) -> None:
        super().__init__()
        self.arch = arch
        self.num_judges = num_judges
        self.mean_net = MeanNet(arch)
        self.bias_net = BiasNet(arch, num_judges)

    def forward(
        self, spectrograms: Tensor, judge_indices: Tensor
    ) -> tuple[ForwardOutput, ForwardOutput]:
        """Returns (mean prediction, per-judge prediction = mean + bias)."""
        mean_out = self.mean_net(spectrograms)
        bias_out = self.bias_net(spectrograms, judge_indices)
        judge_out = ForwardOutput(
            mean_out.frame_scores + bias_out.frame_scores,
            mean_out.utterance_scores + bias_out.utterance_scores,
        )
        return mean_out, judge_out


def build_model(arch: ArchConfig, num_judges: int, seed: int) -> MBNet:
    """Construct an MBNet with deterministic, seed-reproducible initialization."""
    if num_judges < 1:
        raise ValidationError(f"num_judges must be >= 1, got {num_judges}")
    torch.manual_seed(seed)
    return MBNet(arch, num_judges)


@dataclass(eq=False)
class Predictor:
    """A trained model bundled with the judge roster it was trained against.

    ``mean_active``/``bias_active`` record which paths were trained; inference
    refuses modes that would route through an untrained path.
    """

    model: MBNet
    roster: tuple[str, ...]
    mean_active: bool = True
    bias_active: bool = True

    def __post_init__(self) -> None:
        self.roster = tuple(self.roster)
        if self.model.num_judges != len(self.roster):
            raise ValidationError(
                f"model covers {self.model.num_judges} judges but roster has {len(self.roster)}"
            )
        self._roster_index = {judge: i for i, judge in enumerate(self.roster)}

    def judge_index(self, judge_id: str) -> int:
        try:
            return self._roster_index[judge_id]
        except KeyError:
            raise ValidationError(f"judge {judge_id!r} not in predictor roster") from None


def roster_sha256(roster: tuple[str, ...]) -> str:
    return hashlib.sha256("\n".join(roster).encode("utf-8")).hexdigest()


def save_checkpoint(path: Path | str, predictor: Predictor) -> Path:
    """Serialize a predictor (architecture, weights, roster) to one file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "arch": asdict(predictor.model.arch),
        "num_judges": predictor.model.num_judges,
        "roster": list(predictor.roster),
        "roster_sha256": roster_sha256(predictor.roster),
        "mean_active": predictor.mean_active,
        "bias_active": predictor.bias_active,
        "state": predictor.model.state_dict(),
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: Path | str) -> Predictor:
    """Rebuild a predictor saved by :func:`save_checkpoint`, bit-exactly."""
    payload = torch.load(Path(path), weights_only=True)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {payload.get('version')!r}")
    arch_fields = dict(payload["arch"])
    for key in ("mean_channels", "bias_channels"):
        arch_fields[key] = tuple(arch_fields[key])
    arch = ArchConfig(**arch_fields)
    roster = tuple(payload["roster"])
    if roster_sha256(roster) != payload["roster_sha256"]:
        raise ValidationError("checkpoint roster hash mismatch")
    model = MBNet(arch, int(payload["num_judges"]))
    model.load_state_dict(payload["state"], strict=True)
    model.eval()
    return Predictor(
        model=model,
        roster=roster,
        mean_active=bool(payload["mean_active"]),
        bias_active=bool(payload["bias_active"]),
    )
