"""Recurrent classifier over difference sequences.

Pipeline: dropout -> bidirectional GRU -> final-state embedding H ->
dropout -> two fully connected layers -> softmax over {REAL, FAKE}.
H concatenates the forward-direction final state with the
backward-direction final state (each has seen the whole sequence).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ValidationError
from .features import DifferenceSequence

REAL_CLASS = 0
FAKE_CLASS = 1

CHECKPOINT_VERSION = 1


@dataclass
class DetectorConfig:
    input_dim: int
    hidden_size: int = 1024
    bidirectional: bool = True
    head_hidden: int = 512
    dropout_pre_rnn: float = 0.2
    dropout_pre_head: float = 0.5
    num_classes: int = 2

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValidationError("input_dim must be >= 1")
        if self.hidden_size < 1:
            raise ValidationError("hidden_size must be >= 1")
        if not (0 <= self.dropout_pre_rnn < 1) or not (0 <= self.dropout_pre_head < 1):
            raise ValidationError("dropout rates must be in [0, 1)")
        if self.num_classes != 2:
            raise ValidationError("detector is binary; num_classes must be 2")

    @property
    def embed_dim(self) -> int:
        return self.hidden_size * (2 if self.bidirectional else 1)


@dataclass(frozen=True)
class SequenceEmbedding:
    """Final-state embedding H of one difference sequence."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise ValidationError(f"H must be 1-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("H contains non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class DetectorModel(nn.Module):
    def __init__(self, config: DetectorConfig, init_seed: int = 0) -> None:
        super().__init__()
        self.config = config
        self.drop_in = nn.Dropout(config.dropout_pre_rnn)
        self.rnn = nn.GRU(
            config.input_dim,
            config.hidden_size,
            batch_first=True,
            bidirectional=config.bidirectional,
        )
        self.drop_head = nn.Dropout(config.dropout_pre_head)
        self.fc1 = nn.Linear(config.embed_dim, config.head_hidden)
        self.act = nn.ReLU()
        self.fc2 = nn.Linear(config.head_hidden, config.num_classes)
        self.reset_parameters(init_seed)

    def reset_parameters(self, seed: int = 0) -> None:
        """Uniform fan-in init for weights, zero biases, fixed generator."""
        gen = torch.Generator().manual_seed(seed)
        for name, param in self.named_parameters():
            if "weight" in name:
                bound = 1.0 / math.sqrt(param.shape[1])
                with torch.no_grad():
                    param.uniform_(-bound, bound, generator=gen)
            else:
                with torch.no_grad():
                    param.zero_()

    def embed_batch(self, x: torch.Tensor) -> torch.Tensor:
        """(B, T, input_dim) -> (B, embed_dim); dropout follows self.training."""
        if x.ndim != 3 or x.shape[2] != self.config.input_dim:
            raise ValidationError(
                f"expected (B, T, {self.config.input_dim}), got {tuple(x.shape)}"
            )
        _, h_n = self.rnn(self.drop_in(x))
        if self.config.bidirectional:
            return torch.cat([h_n[0], h_n[1]], dim=1)
        return h_n[0]

    def head_logits(self, h: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(self.drop_head(h))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head_logits(self.embed_batch(x))


def _model_dtype(model: DetectorModel) -> torch.dtype:
    return next(model.parameters()).dtype


def forward_embed(
    model: DetectorModel,
    diff: DifferenceSequence,
    training: bool = False,
    rng_seed: int | None = None,
) -> SequenceEmbedding:
    """Embed one difference sequence. Dropout fires only when `training`."""
    if diff.step_dim != model.config.input_dim:
        raise ValidationError(
            f"sequence step_dim {diff.step_dim} != model input_dim {model.config.input_dim}"
        )
    was_training = model.training
    model.train(training)
    if training and rng_seed is not None:
        torch.manual_seed(rng_seed)
    try:
        x = torch.from_numpy(np.asarray(diff.steps)).to(_model_dtype(model)).unsqueeze(0)
        with torch.no_grad():
            h = model.embed_batch(x)[0]
    finally:
        model.train(was_training)
    return SequenceEmbedding(values=h.cpu().numpy())


def forward_prob(
    model: DetectorModel,
    h: SequenceEmbedding | np.ndarray,
    training: bool = False,
) -> float:
    """Probability of the FAKE class from one embedding H."""
    values = h.values if isinstance(h, SequenceEmbedding) else np.asarray(h)
    if values.shape != (model.config.embed_dim,):
        raise ValidationError(
            f"H has shape {values.shape}, head expects ({model.config.embed_dim},)"
        )
    was_training = model.training
    model.train(training)
    try:
        t = torch.from_numpy(np.asarray(values)).to(_model_dtype(model)).unsqueeze(0)
        with torch.no_grad():
            probs = torch.softmax(model.head_logits(t), dim=1)[0]
    finally:
        model.train(was_training)
    return float(probs[FAKE_CLASS])


def window_probs(model: DetectorModel, windows: list[DifferenceSequence]) -> list[float]:
    """FAKE probability per window, inference mode."""
    return [forward_prob(model, forward_embed(model, w)) for w in windows]


def score_video(model: DetectorModel, windows: list[DifferenceSequence]) -> float:
    """Video score: arithmetic mean of per-window FAKE probabilities."""
    if not windows:
        raise ValidationError("cannot score a video with no windows")
    probs = window_probs(model, windows)
    return float(sum(probs) / len(probs))


def save_checkpoint(
    model: DetectorModel, path: str | Path, extra: dict | None = None
) -> Path:
    """Serialize parameters + config + format version (32-bit exact)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "state_dict": {k: v.cpu() for k, v in model.state_dict().items()},
        "extra": extra or {},
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> tuple[DetectorModel, dict]:
    """Load a checkpoint; returns (model in eval mode, extra dict)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {version!r}")
    config = DetectorConfig(**payload["config"])
    model = DetectorModel(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload.get("extra", {})
