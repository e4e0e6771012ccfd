"""Resolving manifest records to embedding sequences, with disk caching.

A record backed by a ``.emb`` cache file (or already cached under
`cache_dir`) is read directly; otherwise its frames are decoded, aligned,
embedded, and the result is cached. A `frames_transform` hook lets
robustness sweeps degrade the pixels on the way through -- those runs
bypass the cache so corrupted embeddings never shadow pristine ones.
The registered aux image is never transformed: it lives server-side and
does not pass through the degraded capture channel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from .embedder import (
    EmbeddingBackend,
    EmbeddingSequence,
    cache_read,
    cache_write,
    extract,
    extract_video,
)
from .errors import PipelineError, ValidationError
from .manifest import VideoRecord, parse_aux_locator
from .preprocess import (
    Aligner,
    CenterCropAligner,
    FaceCrop,
    align_and_crop,
    decode_frames,
    load_image,
)

CACHE_SUFFIX = ".emb"

#: Maps a record's decoded frames to transformed frames (e.g. corruption).
FramesTransform = Callable[[VideoRecord, list[np.ndarray]], list[np.ndarray]]


class EmbeddingStore:
    def __init__(
        self,
        backend: EmbeddingBackend,
        cache_dir: str | Path | None = None,
        aligner: Aligner | None = None,
        normalize: bool = True,
        corrupt_before_align: bool = True,
        stride: int = 1,
    ) -> None:
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.aligner = aligner if aligner is not None else CenterCropAligner()
        self.normalize = normalize
        self.corrupt_before_align = corrupt_before_align
        self.stride = stride
        self._memo: dict[str, EmbeddingSequence] = {}

    def backend_for(self, record: VideoRecord) -> EmbeddingBackend:
        if hasattr(self.backend, "for_identity"):
            return self.backend.for_identity(record.identity_id)
        return self.backend

    def sequence_for(
        self,
        record: VideoRecord,
        frames_transform: FramesTransform | None = None,
        use_cache: bool = True,
    ) -> EmbeddingSequence:
        if frames_transform is not None:
            return self._extract(record, frames_transform)

        if use_cache:
            memo = self._memo.get(record.video_id)
            if memo is not None:
                return memo
            cached = self._cached_path(record)
            if cached is not None:
                seq = cache_read(cached)
                self._memo[record.video_id] = seq
                return seq

        seq = self._extract(record, None)
        if use_cache:
            if self.cache_dir is not None:
                cache_write(seq, self.cache_dir / f"{record.video_id}{CACHE_SUFFIX}")
            self._memo[record.video_id] = seq
        return seq

    def warm(self, records: list[VideoRecord], workers: int = 1) -> None:
        """Materialize caches for all records; safe to parallelize per video."""
        if workers <= 1:
            for rec in records:
                self.sequence_for(rec)
            return
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(self.sequence_for, records))

    def _cached_path(self, record: VideoRecord) -> Path | None:
        frames_path = Path(record.frames_path)
        if frames_path.suffix == CACHE_SUFFIX and frames_path.exists():
            return frames_path
        if self.cache_dir is not None:
            candidate = self.cache_dir / f"{record.video_id}{CACHE_SUFFIX}"
            if candidate.exists():
                return candidate
        return None

    def _extract(
        self, record: VideoRecord, frames_transform: FramesTransform | None
    ) -> EmbeddingSequence:
        frames_path = Path(record.frames_path)
        if frames_path.suffix == CACHE_SUFFIX:
            raise PipelineError(
                f"video {record.video_id!r} is cache-backed; no pixel frames to process"
            )
        frames = decode_frames(frames_path, stride=self.stride)
        backend = self.backend_for(record)

        if frames_transform is not None and self.corrupt_before_align:
            frames = frames_transform(record, frames)
        crops: list[FaceCrop] = []
        for idx, frame in enumerate(frames):
            crop = align_and_crop(frame, self.aligner, frame_index=idx)
            if crop is not None:
                crops.append(crop)
        if frames_transform is not None and not self.corrupt_before_align:
            pixels = frames_transform(record, [c.pixels for c in crops])
            crops = [
                FaceCrop(pixels=p, source_frame_index=c.source_frame_index)
                for p, c in zip(pixels, crops)
            ]
        if len(crops) < 2:
            raise PipelineError(
                f"video {record.video_id!r}: only {len(crops)} aligned faces; need >= 2"
            )

        aux_crop = self._aux_crop(record)
        return extract_video(
            crops, aux_crop, backend, video_id=record.video_id, normalize=self.normalize
        )

    def _aux_crop(self, record: VideoRecord) -> FaceCrop:
        if not record.aux_image_path:
            raise ValidationError(
                f"video {record.video_id!r} has no aux_image_path; run aux pairing first"
            )
        path, frame_index = parse_aux_locator(record.aux_image_path)
        if frame_index is None:
            frame = load_image(path)
            frame_index = 0
        else:
            frames = decode_frames(path, stride=1)
            if frame_index >= len(frames):
                raise PipelineError(
                    f"aux locator {record.aux_image_path!r}: frame {frame_index} "
                    f"out of range ({len(frames)} frames)"
                )
            frame = frames[frame_index]
        crop = align_and_crop(frame, self.aligner, frame_index=frame_index)
        if crop is None:
            raise PipelineError(
                f"video {record.video_id!r}: no face found in aux image "
                f"{record.aux_image_path!r}"
            )
        return crop
