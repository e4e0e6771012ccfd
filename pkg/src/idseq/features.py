"""Difference sequences over identity vectors, and frame-window sampling.

Given per-frame identity vectors v_1..v_l and an aux vector v_aux, three
sequence features feed the classifier, each of length l - 1:

* TMP (temporal):  step t = v_{t+1} - v_t          for t = 1..l-1
* AUX (auxiliary): step t = v_t - v_aux            for t = 1..l-1
* CAT:             step t = [tmp_t ; aux_t], dimension 2d

A genuine video keeps all steps near zero; identity swaps shift the AUX
steps away from zero, while temporal instability shows up in TMP steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .embedder import EmbeddingSequence
from .errors import ValidationError


class DiffKind(str, Enum):
    TMP = "TMP"
    AUX = "AUX"
    CAT = "CAT"


class SamplingMode(str, Enum):
    SLIDING_WINDOW = "SLIDING_WINDOW"
    RANDOM = "RANDOM"


class Phase(str, Enum):
    TRAIN = "TRAIN"
    EVAL = "EVAL"


@dataclass(frozen=True)
class DifferenceSequence:
    """Ordered per-timestep difference vectors, shape (length, step_dim)."""

    kind: DiffKind
    steps: np.ndarray

    def __post_init__(self) -> None:
        steps = np.asarray(self.steps, dtype=np.float32)
        if steps.ndim != 2 or steps.shape[0] < 1:
            raise ValidationError(f"steps must be a non-empty 2-D array, got {steps.shape}")
        object.__setattr__(self, "steps", steps)

    @property
    def length(self) -> int:
        return int(self.steps.shape[0])

    @property
    def step_dim(self) -> int:
        return int(self.steps.shape[1])


@dataclass
class SamplerConfig:
    sequence_length: int = 64
    sequences_per_video_per_epoch: int = 20
    mode: SamplingMode = SamplingMode.SLIDING_WINDOW
    eval_stride: int = 64

    def __post_init__(self) -> None:
        if self.sequence_length < 2:
            raise ValidationError("sequence_length must be >= 2")
        if self.sequences_per_video_per_epoch < 1:
            raise ValidationError("sequences_per_video_per_epoch must be >= 1")
        if self.eval_stride < 1:
            raise ValidationError("eval_stride must be >= 1")
        if not isinstance(self.mode, SamplingMode):
            self.mode = SamplingMode(self.mode)


def tdc_sequence(seq: EmbeddingSequence) -> DifferenceSequence:
    """Consecutive-frame differences: step t = v_{t+1} - v_t."""
    mat = seq.matrix()
    return DifferenceSequence(kind=DiffKind.TMP, steps=mat[1:] - mat[:-1])


def adc_sequence(seq: EmbeddingSequence) -> DifferenceSequence:
    """Aux differences over the first l - 1 frames: step t = v_t - v_aux."""
    if seq.aux_vector is None:
        raise ValidationError(f"video {seq.video_id!r}: no aux vector")
    mat = seq.matrix()
    return DifferenceSequence(
        kind=DiffKind.AUX, steps=mat[:-1] - seq.aux_vector.values[None, :]
    )


def cat_sequence(tmp: DifferenceSequence, aux: DifferenceSequence) -> DifferenceSequence:
    """Per-timestep concatenation [tmp_t ; aux_t]; step_dim doubles."""
    if tmp.kind is not DiffKind.TMP or aux.kind is not DiffKind.AUX:
        raise ValidationError(f"expected (TMP, AUX), got ({tmp.kind}, {aux.kind})")
    if tmp.length != aux.length:
        raise ValidationError(f"length mismatch: {tmp.length} vs {aux.length}")
    if tmp.step_dim != aux.step_dim:
        raise ValidationError(f"step_dim mismatch: {tmp.step_dim} vs {aux.step_dim}")
    return DifferenceSequence(
        kind=DiffKind.CAT, steps=np.concatenate([tmp.steps, aux.steps], axis=1)
    )


def difference_sequence(seq: EmbeddingSequence, kind: DiffKind) -> DifferenceSequence:
    """Build the requested difference kind from one embedding sequence."""
    kind = DiffKind(kind)
    if kind is DiffKind.TMP:
        return tdc_sequence(seq)
    if kind is DiffKind.AUX:
        return adc_sequence(seq)
    return cat_sequence(tdc_sequence(seq), adc_sequence(seq))


def step_dim_for(kind: DiffKind, embedding_dim: int) -> int:
    return 2 * embedding_dim if DiffKind(kind) is DiffKind.CAT else embedding_dim


def window_view(seq: EmbeddingSequence, indices: list[int]) -> EmbeddingSequence:
    """Sub-sequence of the given frame indices, sharing the aux vector."""
    return EmbeddingSequence(
        video_id=seq.video_id,
        vectors=[seq.vectors[i] for i in indices],
        aux_vector=seq.aux_vector,
    )


def sample_windows(
    num_frames: int,
    cfg: SamplerConfig,
    seed: int = 0,
    phase: Phase = Phase.TRAIN,
) -> list[list[int]]:
    """Choose frame-index windows of length `sequence_length`.

    TRAIN draws `sequences_per_video_per_epoch` windows: contiguous runs at
    uniformly random start offsets (SLIDING_WINDOW) or sorted draws of
    distinct indices (RANDOM). EVAL ignores the mode and tiles the video
    deterministically at `eval_stride`, adding a final right-aligned window
    when frames would otherwise be left uncovered.
    """
    ell = cfg.sequence_length
    if num_frames < ell:
        raise ValidationError(
            f"video has {num_frames} frames, fewer than sequence_length {ell}"
        )
    phase = Phase(phase)
    if phase is Phase.EVAL:
        starts = list(range(0, num_frames - ell + 1, cfg.eval_stride))
        if starts[-1] + ell < num_frames:
            starts.append(num_frames - ell)
        return [list(range(s, s + ell)) for s in starts]

    rng = np.random.default_rng(seed)
    count = cfg.sequences_per_video_per_epoch
    if cfg.mode is SamplingMode.SLIDING_WINDOW:
        starts = rng.integers(0, num_frames - ell + 1, size=count)
        return [list(range(int(s), int(s) + ell)) for s in starts]
    return [
        sorted(int(i) for i in rng.choice(num_frames, size=ell, replace=False))
        for _ in range(count)
    ]
