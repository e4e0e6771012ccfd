"""Image degradations at five severity levels for robustness evaluation.

Six families: saturation change, contrast change, block-wise distortion,
additive white Gaussian noise, Gaussian blur, and JPEG compression.
Severity 0 is the identity. Per-level parameters live in
``data/corruption_params.json`` so they can be re-pinned without touching
logic; `strength` exposes the scalar that must be strictly monotone in
severity for each family.

Noise and block placement are stochastic and keyed by the spec seed;
the other four families are pure functions of the pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from importlib import resources

import cv2
import numpy as np

from .errors import ValidationError
from .preprocess import FaceCrop


class CorruptionKind(str, Enum):
    SATURATION = "SATURATION"
    CONTRAST = "CONTRAST"
    BLOCKWISE = "BLOCKWISE"
    GAUSSIAN_NOISE = "GAUSSIAN_NOISE"
    GAUSSIAN_BLUR = "GAUSSIAN_BLUR"
    JPEG = "JPEG"


#: Families whose output depends on the spec seed.
STOCHASTIC_KINDS = frozenset({CorruptionKind.GAUSSIAN_NOISE, CorruptionKind.BLOCKWISE})

#: Reference area for the block count in the parameter table.
_BLOCK_REFERENCE_SIDE = 256

# BT.601 full-range RGB <-> YCbCr, used for the saturation change.
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    severity: int
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CorruptionKind(self.kind))
        if not (0 <= self.severity <= 5):
            raise ValidationError(f"severity must be in [0, 5], got {self.severity}")


@lru_cache(maxsize=1)
def load_parameter_table() -> dict:
    text = resources.files("idseq.data").joinpath("corruption_params.json").read_text("utf-8")
    return json.loads(text)


def parameters_for(kind: CorruptionKind, severity: int) -> dict:
    if not (1 <= severity <= 5):
        raise ValidationError(f"severity must be in [1, 5] for parameters, got {severity}")
    return load_parameter_table()[CorruptionKind(kind).value][str(severity)]


def strength(kind: CorruptionKind, severity: int) -> float:
    """The scalar distortion parameter, strictly monotone in severity."""
    params = parameters_for(kind, severity)
    key = {
        CorruptionKind.SATURATION: "scale",
        CorruptionKind.CONTRAST: "scale",
        CorruptionKind.BLOCKWISE: "count",
        CorruptionKind.GAUSSIAN_NOISE: "sigma",
        CorruptionKind.GAUSSIAN_BLUR: "sigma",
        CorruptionKind.JPEG: "quality",
    }[CorruptionKind(kind)]
    return float(params[key])


def parse_spec(text: str, seed: int = 0) -> CorruptionSpec:
    """Parse the CLI form ``kind:severity``, e.g. ``gaussian_blur:3``."""
    try:
        kind_text, severity_text = text.split(":", 1)
        kind = CorruptionKind(kind_text.strip().upper())
        severity = int(severity_text)
    except (ValueError, KeyError):
        raise ValidationError(
            f"bad corruption spec {text!r}; expected kind:severity with kind in "
            f"{[k.value.lower() for k in CorruptionKind]}"
        ) from None
    return CorruptionSpec(kind=kind, severity=severity, seed=seed)


def apply(image: FaceCrop | np.ndarray, spec: CorruptionSpec) -> FaceCrop | np.ndarray:
    """Degrade one image; shape, dtype and value range are preserved."""
    if isinstance(image, FaceCrop):
        out = apply(image.pixels, spec)
        return FaceCrop(pixels=out, source_frame_index=image.source_frame_index)
    if (
        not isinstance(image, np.ndarray)
        or image.ndim != 3
        or image.shape[2] != 3
        or image.dtype != np.uint8
    ):
        raise ValidationError("corruption input must be an HxWx3 uint8 image")
    if spec.severity == 0:
        return image.copy()

    kind = spec.kind
    params = parameters_for(kind, spec.severity)
    if kind is CorruptionKind.SATURATION:
        return _saturation(image, params["scale"])
    if kind is CorruptionKind.CONTRAST:
        return _contrast(image, params["scale"])
    if kind is CorruptionKind.BLOCKWISE:
        return _blockwise(image, params["count"], params["block_size"], spec.seed)
    if kind is CorruptionKind.GAUSSIAN_NOISE:
        return _gaussian_noise(image, params["sigma"], spec.seed)
    if kind is CorruptionKind.GAUSSIAN_BLUR:
        return _gaussian_blur(image, params["kernel"], params["sigma"])
    return _jpeg(image, params["quality"])


def corrupt_video(frames: list[np.ndarray], spec: CorruptionSpec) -> list[np.ndarray]:
    """Apply per frame, deriving the frame seed as seed XOR frame index."""
    return [
        apply(frame, replace(spec, seed=spec.seed ^ idx))
        for idx, frame in enumerate(frames)
    ]


def _clip_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def _saturation(image: np.ndarray, scale: float) -> np.ndarray:
    flat = image.reshape(-1, 3).astype(np.float64)
    ycbcr = flat @ _RGB_TO_YCBCR.T
    ycbcr[:, 1:] *= scale
    rgb = ycbcr @ _YCBCR_TO_RGB.T
    return _clip_u8(rgb).reshape(image.shape)


def _contrast(image: np.ndarray, scale: float) -> np.ndarray:
    out = 128.0 + (image.astype(np.float64) - 128.0) * scale
    return _clip_u8(out)


def _blockwise(image: np.ndarray, count: int, block_size: int, seed: int) -> np.ndarray:
    h, w = image.shape[:2]
    if h < block_size or w < block_size:
        raise ValidationError(f"image {h}x{w} smaller than block size {block_size}")
    area_scale = (h * w) / float(_BLOCK_REFERENCE_SIDE * _BLOCK_REFERENCE_SIDE)
    n_blocks = max(1, int(round(count * area_scale)))
    rng = np.random.default_rng(seed)
    out = image.copy()
    for _ in range(n_blocks):
        top = int(rng.integers(0, h - block_size + 1))
        left = int(rng.integers(0, w - block_size + 1))
        out[top : top + block_size, left : left + block_size] = 128
    return out


def _gaussian_noise(image: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=image.shape)
    return _clip_u8(image.astype(np.float64) + noise)


def _gaussian_blur(image: np.ndarray, kernel: int, sigma: float) -> np.ndarray:
    return cv2.GaussianBlur(image, (kernel, kernel), sigma)


def _jpeg(image: np.ndarray, quality: int) -> np.ndarray:
    bgr = cv2.cvtColor(image, cv2.COLOR_RGB2BGR)
    ok, encoded = cv2.imencode(".jpg", bgr, [int(cv2.IMWRITE_JPEG_QUALITY), int(quality)])
    if not ok:
        raise ValidationError("JPEG encoding failed")
    decoded = cv2.imdecode(encoded, cv2.IMREAD_COLOR)
    return cv2.cvtColor(decoded, cv2.COLOR_BGR2RGB)
