"""Frame decoding and face alignment to 112x112 crops.

Face detection itself is external: `LandmarkAligner` adapts any
MTCNN-compatible detector (boxes + 5-point landmarks) via a similarity
transform onto the standard 112x112 landmark template. The pass-through
`CenterCropAligner` keeps fixtures and tests hermetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import cv2
import numpy as np

from .errors import InputError, ValidationError

CROP_SIZE = 112

#: Canonical 112x112 landmark positions: left eye, right eye, nose tip,
#: left mouth corner, right mouth corner.
LANDMARK_TEMPLATE = np.array(
    [
        [38.2946, 51.6963],
        [73.5318, 51.5014],
        [56.0252, 71.7366],
        [41.5493, 92.3655],
        [70.7299, 92.2041],
    ],
    dtype=np.float32,
)

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class FaceCrop:
    """Aligned RGB face crop, exactly 112x112x3 uint8."""

    pixels: np.ndarray
    source_frame_index: int = 0

    def __post_init__(self) -> None:
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.shape != (CROP_SIZE, CROP_SIZE, 3):
            shape = getattr(px, "shape", None)
            raise ValidationError(f"crop must be {CROP_SIZE}x{CROP_SIZE}x3, got {shape}")
        if px.dtype != np.uint8:
            raise ValidationError(f"crop must be uint8, got {px.dtype}")
        if self.source_frame_index < 0:
            raise ValidationError("source_frame_index must be >= 0")


class Aligner(Protocol):
    def align(self, frame: np.ndarray) -> np.ndarray | None: ...


class CenterCropAligner:
    """Detection-free backend: center square crop resized to 112x112.

    A perfectly uniform frame carries no content to align to and is
    reported as no-face, mirroring how a detector would fail.
    """

    def align(self, frame: np.ndarray) -> np.ndarray | None:
        if frame.std() == 0:
            return None
        h, w = frame.shape[:2]
        side = min(h, w)
        top = (h - side) // 2
        left = (w - side) // 2
        square = frame[top : top + side, left : left + side]
        if side == CROP_SIZE:
            return square.copy()
        return cv2.resize(square, (CROP_SIZE, CROP_SIZE), interpolation=cv2.INTER_AREA)


#: A detection is (box, landmarks): box (x1, y1, x2, y2), landmarks (5, 2)
#: ordered as in LANDMARK_TEMPLATE.
Detection = tuple[Sequence[float], np.ndarray]


class LandmarkAligner:
    """Similarity-warp alignment driven by an external landmark detector.

    `detector(frame)` must return a list of detections; an empty list means
    no face. When several faces are found the largest box wins (eKYC video
    has a single subject).
    """

    def __init__(self, detector: Callable[[np.ndarray], list[Detection]]) -> None:
        self.detector = detector

    def align(self, frame: np.ndarray) -> np.ndarray | None:
        detections = self.detector(frame)
        if not detections:
            return None
        box, landmarks = max(detections, key=_box_area)
        landmarks = np.asarray(landmarks, dtype=np.float32).reshape(5, 2)
        matrix, _ = cv2.estimateAffinePartial2D(
            landmarks, LANDMARK_TEMPLATE, method=cv2.LMEDS
        )
        if matrix is None:
            return None
        return cv2.warpAffine(
            frame, matrix, (CROP_SIZE, CROP_SIZE), flags=cv2.INTER_LINEAR, borderValue=0
        )


def _box_area(detection: Detection) -> float:
    x1, y1, x2, y2 = detection[0]
    return max(0.0, x2 - x1) * max(0.0, y2 - y1)


def align_and_crop(
    frame: np.ndarray, aligner: Aligner, frame_index: int = 0
) -> FaceCrop | None:
    """Align one frame; returns None when no face is found.

    Undecodable input (not an HxWx3 uint8 image) raises `InputError`,
    which is distinct from the no-face result.
    """
    if (
        not isinstance(frame, np.ndarray)
        or frame.ndim != 3
        or frame.shape[2] != 3
        or frame.dtype != np.uint8
        or frame.shape[0] == 0
        or frame.shape[1] == 0
    ):
        raise InputError(f"not a decodable HxWx3 uint8 frame: {type(frame).__name__}")
    pixels = aligner.align(frame)
    if pixels is None:
        return None
    return FaceCrop(pixels=np.ascontiguousarray(pixels), source_frame_index=frame_index)


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as RGB uint8; raises `InputError` when undecodable."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"image not found: {path}")
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise InputError(f"cannot decode image: {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def decode_frames(source: str | Path, stride: int = 1) -> list[np.ndarray]:
    """Decode a video file or a directory of numbered frames, in order.

    Returns every stride-th frame starting at 0, so the result length is
    ceil(total / stride).
    """
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    source = Path(source)
    if source.is_dir():
        files = sorted(
            p for p in source.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
        )
        if not files:
            raise InputError(f"no image frames in directory: {source}")
        frames = [load_image(p) for p in files]
    elif source.is_file():
        frames = _decode_video(source)
    else:
        raise InputError(f"frame source not found: {source}")
    return frames[::stride]


def _decode_video(path: Path) -> list[np.ndarray]:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise InputError(f"cannot open video: {path}")
    frames: list[np.ndarray] = []
    try:
        while True:
            ok, bgr = cap.read()
            if not ok:
                break
            frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
    finally:
        cap.release()
    if not frames:
        raise InputError(f"no decodable frames in video: {path}")
    return frames
