"""Deterministic synthetic datasets for desk-scale end-to-end runs.

Two generators share the same identity/fake structure:

* `generate_embedding_dataset` writes embedding caches directly -- no
  pixels involved -- and is the workhorse for training tests. Real videos
  hover around a per-identity unit base direction with jitter
  `sigma_real`. Swap-like fakes (tagged FS) ride a different identity's
  base with occasional flips back to the target, so their aux differences
  are large and their temporal differences spike. Reenactment-like fakes
  (tagged FOMM) keep the target's base but jitter with
  `sigma_fake >> sigma_real`, so only their temporal differences betray
  them. Setting sigma_fake == sigma_real erases the temporal signal, which
  is useful as a negative control.

* `generate_image_dataset` writes actual PNG frames built from smooth
  per-identity color fields with the same real/swap/reenactment structure,
  for pipelines that must exercise decoding, alignment, and corruption.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .embedder import EmbeddingSequence, IdentityVector, SyntheticBackend, cache_write, stable_seed
from .errors import ValidationError
from .manifest import FakeType, Label, Manifest, Split, VideoRecord, make_identity_splits, save_manifest

SYNTH_BACKEND_ID = "synthetic"


@dataclass
class SynthConfig:
    identities: int = 10
    reals_per_identity: int = 2
    fakes: int = 20
    frames: int = 48
    dim: int = 32
    sigma_real: float = 0.02
    sigma_fake: float = 0.25
    swap_flip_prob: float = 0.12
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.identities < 3:
            raise ValidationError("need at least 3 identities")
        if self.reals_per_identity < 2:
            raise ValidationError("need >= 2 real videos per identity for aux pairing")
        if self.frames < 2:
            raise ValidationError("need >= 2 frames per video")
        if self.dim < 2:
            raise ValidationError("dim must be >= 2")
        if self.sigma_real < 0 or self.sigma_fake < 0:
            raise ValidationError("jitter sigmas must be >= 0")
        if not (0 <= self.swap_flip_prob <= 1):
            raise ValidationError("swap_flip_prob must be in [0, 1]")


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    return (mat / np.linalg.norm(mat, axis=1, keepdims=True)).astype(np.float32)


def generate_embedding_dataset(out_dir: str | Path, cfg: SynthConfig) -> Path:
    """Write cache files + manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    cache_dir = out_dir / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)

    idents = [f"id{i:02d}" for i in range(cfg.identities)]
    backend = SyntheticBackend(seed=cfg.seed, dim=cfg.dim)
    bases = {ident: backend.for_identity(ident).base_direction() for ident in idents}

    vectors: dict[str, np.ndarray] = {}
    plan: list[tuple[str, str, FakeType | None]] = []  # (video_id, identity, fake_type)

    for ident in idents:
        for r in range(cfg.reals_per_identity):
            video_id = f"{ident}-real{r}"
            rng = np.random.default_rng(stable_seed(cfg.seed, "video", video_id))
            mat = bases[ident][None, :] + cfg.sigma_real * rng.standard_normal(
                (cfg.frames, cfg.dim)
            )
            vectors[video_id] = _unit_rows(mat)
            plan.append((video_id, ident, None))

    n_swap = cfg.fakes // 2
    for k in range(cfg.fakes):
        target_idx = k % cfg.identities
        target = idents[target_idx]
        if k < n_swap:
            video_id = f"{target}-swap{k}"
            donor = idents[(target_idx + 1 + k // cfg.identities) % cfg.identities]
            if donor == target:
                donor = idents[(target_idx + 1) % cfg.identities]
            rng = np.random.default_rng(stable_seed(cfg.seed, "video", video_id))
            flips = rng.random(cfg.frames) < cfg.swap_flip_prob
            mat = np.where(flips[:, None], bases[target][None, :], bases[donor][None, :])
            mat = mat + cfg.sigma_real * rng.standard_normal((cfg.frames, cfg.dim))
            fake_type = FakeType.FS
        else:
            video_id = f"{target}-reenact{k}"
            rng = np.random.default_rng(stable_seed(cfg.seed, "video", video_id))
            mat = bases[target][None, :] + cfg.sigma_fake * rng.standard_normal(
                (cfg.frames, cfg.dim)
            )
            fake_type = FakeType.FOMM
        vectors[video_id] = _unit_rows(mat)
        plan.append((video_id, target, fake_type))

    aux_rng = np.random.default_rng(stable_seed(cfg.seed, "aux"))
    records: list[VideoRecord] = []
    for video_id, ident, fake_type in plan:
        reals = [f"{ident}-real{r}" for r in range(cfg.reals_per_identity)]
        if fake_type is None:
            own_index = reals.index(video_id)
            source = reals[(own_index + 1) % len(reals)]
        else:
            source = reals[int(aux_rng.integers(0, len(reals)))]
        cache_path = cache_dir / f"{video_id}.emb"
        source_path = cache_dir / f"{source}.emb"
        aux_vector = IdentityVector(vectors[source][0].copy(), SYNTH_BACKEND_ID)
        seq = EmbeddingSequence(
            video_id=video_id,
            vectors=[IdentityVector(row.copy(), SYNTH_BACKEND_ID) for row in vectors[video_id]],
            aux_vector=aux_vector,
        )
        cache_write(seq, cache_path)
        records.append(
            VideoRecord(
                video_id=video_id,
                identity_id=ident,
                label=Label.REAL if fake_type is None else Label.FAKE,
                fake_type=fake_type,
                frames_path=str(cache_path),
                aux_image_path=f"{source_path}::0",
                split=Split.TRAIN,
            )
        )

    manifest = make_identity_splits(records, cfg.fractions, cfg.seed)
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(manifest, manifest_path)
    return manifest_path


def _identity_pattern(seed: int, ident: str, size: int) -> np.ndarray:
    """Smooth per-identity color field in [40, 215], float32 HxWx3."""
    rng = np.random.default_rng(stable_seed(seed, "pattern", ident))
    yy, xx = np.meshgrid(
        np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij"
    )
    pattern = np.zeros((size, size, 3), dtype=np.float64)
    for c in range(3):
        for _ in range(3):
            fx, fy = rng.uniform(0.5, 3.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.3, 1.0)
            pattern[:, :, c] += amp * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    lo, hi = pattern.min(), pattern.max()
    return (40 + 175 * (pattern - lo) / (hi - lo)).astype(np.float32)


def generate_image_dataset(
    out_dir: str | Path,
    identities: int = 3,
    reals_per_identity: int = 2,
    frames: int = 10,
    size: int = 112,
    seed: int = 0,
    noise_real: float = 4.0,
    noise_fake: float = 30.0,
    flip_prob: float = 0.25,
    split: Split = Split.TEST,
) -> Path:
    """Write PNG frame directories + manifest; returns the manifest path.

    Each identity gets `reals_per_identity` real videos plus one swap-like
    and one reenactment-like fake, all assigned to `split`.
    """
    if identities < 2:
        raise ValidationError("need at least 2 identities (swap fakes need a donor)")
    out_dir = Path(out_dir)
    idents = [f"im{i:02d}" for i in range(identities)]
    patterns = {ident: _identity_pattern(seed, ident, size) for ident in idents}

    def write_video(video_id: str, frames_stack: np.ndarray) -> Path:
        video_dir = out_dir / "frames" / video_id
        video_dir.mkdir(parents=True, exist_ok=True)
        for t in range(frames_stack.shape[0]):
            bgr = cv2.cvtColor(frames_stack[t], cv2.COLOR_RGB2BGR)
            cv2.imwrite(str(video_dir / f"frame_{t:04d}.png"), bgr)
        return video_dir

    records: list[VideoRecord] = []
    real_dirs: dict[str, list[Path]] = {ident: [] for ident in idents}

    def noisy(base: np.ndarray, rng: np.random.Generator, sigma: float, n: int) -> np.ndarray:
        stack = base[None, :, :, :] + rng.normal(0, sigma, size=(n, *base.shape))
        return np.clip(np.rint(stack), 0, 255).astype(np.uint8)

    for ident in idents:
        for r in range(reals_per_identity):
            video_id = f"{ident}-real{r}"
            rng = np.random.default_rng(stable_seed(seed, "imgvideo", video_id))
            video_dir = write_video(video_id, noisy(patterns[ident], rng, noise_real, frames))
            real_dirs[ident].append(video_dir)
            records.append(
                VideoRecord(
                    video_id=video_id,
                    identity_id=ident,
                    label=Label.REAL,
                    frames_path=str(video_dir),
                    aux_image_path=None,
                    split=split,
                )
            )

    for idx, ident in enumerate(idents):
        donor = idents[(idx + 1) % identities]
        video_id = f"{ident}-swap"
        rng = np.random.default_rng(stable_seed(seed, "imgvideo", video_id))
        flips = rng.random(frames) < flip_prob
        stack = np.where(
            flips[:, None, None, None], patterns[ident][None], patterns[donor][None]
        )
        stack = np.clip(np.rint(stack + rng.normal(0, noise_real, size=stack.shape)), 0, 255)
        video_dir = write_video(video_id, stack.astype(np.uint8))
        records.append(
            VideoRecord(
                video_id=video_id,
                identity_id=ident,
                label=Label.FAKE,
                fake_type=FakeType.FS,
                frames_path=str(video_dir),
                aux_image_path=None,
                split=split,
            )
        )

        video_id = f"{ident}-reenact"
        rng = np.random.default_rng(stable_seed(seed, "imgvideo", video_id))
        video_dir = write_video(video_id, noisy(patterns[ident], rng, noise_fake, frames))
        records.append(
            VideoRecord(
                video_id=video_id,
                identity_id=ident,
                label=Label.FAKE,
                fake_type=FakeType.FOMM,
                frames_path=str(video_dir),
                aux_image_path=None,
                split=split,
            )
        )

    by_identity = {ident: [d for d in real_dirs[ident]] for ident in idents}
    aux_rng = np.random.default_rng(stable_seed(seed, "imgaux"))
    paired: list[VideoRecord] = []
    for rec in records:
        own_dir = Path(rec.frames_path)
        candidates = [d for d in by_identity[rec.identity_id] if d != own_dir]
        source = candidates[int(aux_rng.integers(0, len(candidates)))]
        paired.append(
            VideoRecord(
                video_id=rec.video_id,
                identity_id=rec.identity_id,
                label=rec.label,
                fake_type=rec.fake_type,
                frames_path=rec.frames_path,
                aux_image_path=f"{source}::0",
                split=rec.split,
            )
        )

    manifest = Manifest.from_records(paired)
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(manifest, manifest_path)
    return manifest_path
