"""Identity-vector extraction backends and the on-disk embedding cache.

Backends turn aligned face crops into d-dimensional identity vectors.
Three kinds ship here:

* pretrained slots -- ResNet100 face-recognition models loaded from a
  TorchScript file (weights are external assets, not bundled),
* a deterministic synthetic backend for hermetic desk-scale tests,
* a pixel-patch backend that embeds downsampled pixels through a fixed
  random projection, useful when corruptions must actually move vectors.

Cache files hold one video's frame vectors plus its aux vector as
little-endian float32 with a CRC32 trailer.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import CacheError, ExtractionError, ValidationError
from .preprocess import FaceCrop

DEFAULT_DIM = 512

#: Pretrained face-recognition slots selectable by id. Weights must be
#: supplied as TorchScript files; none are bundled with this package.
PRETRAINED_SLOTS = {
    "arcface_ms1mv2_r100": "ResNet100 trained on MS1MV2 with the ArcFace objective",
    "adaface_ms1mv2_r100": "ResNet100 trained on MS1MV2 with the AdaFace objective",
    "adaface_webface12m_r100": "ResNet100 trained on WebFace12M with the AdaFace objective",
}

DEFAULT_BACKEND = "adaface_webface12m_r100"


@dataclass(frozen=True)
class IdentityVector:
    """One face crop's embedding. `values` is a 1-D float32 array."""

    values: np.ndarray
    backend_id: str

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 1:
            raise ValidationError(f"identity vector must be 1-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("identity vector contains non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass
class EmbeddingSequence:
    """Per-frame identity vectors for one video plus its aux-image vector."""

    video_id: str
    vectors: list[IdentityVector]
    aux_vector: IdentityVector

    def __post_init__(self) -> None:
        if len(self.vectors) < 2:
            raise ValidationError(
                f"video {self.video_id!r}: need at least 2 frame vectors, "
                f"got {len(self.vectors)}"
            )
        dims = {v.dim for v in self.vectors} | {self.aux_vector.dim}
        if len(dims) != 1:
            raise ValidationError(f"video {self.video_id!r}: mixed vector dims {sorted(dims)}")
        backends = {v.backend_id for v in self.vectors} | {self.aux_vector.backend_id}
        if len(backends) != 1:
            raise ValidationError(
                f"video {self.video_id!r}: mixed backends {sorted(backends)}"
            )

    @property
    def length(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors[0].dim

    @property
    def backend_id(self) -> str:
        return self.vectors[0].backend_id

    def matrix(self) -> np.ndarray:
        """Frame vectors stacked as a (length, dim) float32 array."""
        return np.stack([v.values for v in self.vectors])


@runtime_checkable
class EmbeddingBackend(Protocol):
    backend_id: str
    dim: int

    def embed(self, crop: FaceCrop) -> np.ndarray: ...


def stable_seed(*parts: object) -> int:
    """Process-independent 64-bit seed from arbitrary parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _unit(values: np.ndarray) -> np.ndarray:
    return values / np.linalg.norm(values)


@dataclass
class SyntheticBackend:
    """Deterministic stand-in backend, independent of pixel content.

    Each identity seed owns a fixed unit base direction; per-frame vectors
    are `base + jitter * g` with `g` a Gaussian draw keyed by (seed,
    identity, frame index). After unit normalization, vectors of one
    identity satisfy cos(v_i, v_j) >= 1 - k * jitter^2 with k ~ 4 * dim
    (mean ~ dim; the factor 4 absorbs sampling spread).
    """

    identity_seed: str = "id-0"
    jitter: float = 0.0
    seed: int = 0
    dim: int = DEFAULT_DIM
    backend_id: str = "synthetic"

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValidationError("synthetic backend needs dim >= 2")
        if self.jitter < 0:
            raise ValidationError("jitter must be >= 0")

    def for_identity(self, identity_seed: str) -> "SyntheticBackend":
        return replace(self, identity_seed=identity_seed)

    def base_direction(self) -> np.ndarray:
        rng = np.random.default_rng(stable_seed("base", self.seed, self.dim, self.identity_seed))
        return _unit(rng.standard_normal(self.dim)).astype(np.float32)

    def embed(self, crop: FaceCrop) -> np.ndarray:
        base = self.base_direction()
        if self.jitter == 0.0:
            return base
        rng = np.random.default_rng(
            stable_seed("jitter", self.seed, self.identity_seed, crop.source_frame_index)
        )
        noise = rng.standard_normal(self.dim).astype(np.float32)
        return base + np.float32(self.jitter) * noise


@dataclass
class PatchBackend:
    """Pixel-sensitive deterministic backend: downsample, project, done.

    Unlike the synthetic backend this one reacts to image corruptions,
    which makes it the right tool for robustness-sweep tests.
    """

    dim: int = 64
    seed: int = 0
    grid: int = 8
    backend_id: str = "patch"
    _projection: np.ndarray | None = field(default=None, repr=False, compare=False)

    def embed(self, crop: FaceCrop) -> np.ndarray:
        import cv2

        if self._projection is None:
            rng = np.random.default_rng(stable_seed("patch", self.seed, self.dim, self.grid))
            n_in = self.grid * self.grid * 3
            self._projection = (
                rng.standard_normal((self.dim, n_in)) / np.sqrt(n_in)
            ).astype(np.float32)
        small = cv2.resize(crop.pixels, (self.grid, self.grid), interpolation=cv2.INTER_AREA)
        flat = small.astype(np.float32).ravel() / 255.0 - 0.5
        return self._projection @ flat


class ModelFileBackend:
    """Adapter around a TorchScript face-recognition model file.

    The module must map a (1, 3, 112, 112) float tensor with pixels scaled
    to [-1, 1] (the convention of the ArcFace/AdaFace family) to a
    (1, dim) embedding.
    """

    def __init__(self, backend_id: str, model_path: str | Path, dim: int = DEFAULT_DIM,
                 device: str = "cpu") -> None:
        self.backend_id = backend_id
        self.model_path = Path(model_path)
        self.dim = dim
        self.device = device
        self._module = None

    def _load(self):
        if self._module is None:
            import torch

            if not self.model_path.exists():
                raise ExtractionError(
                    f"backend {self.backend_id!r}: model file not found: {self.model_path}"
                )
            try:
                self._module = torch.jit.load(str(self.model_path), map_location=self.device)
                self._module.eval()
            except Exception as exc:
                raise ExtractionError(
                    f"backend {self.backend_id!r}: cannot load model: {exc}"
                ) from exc
        return self._module

    def embed(self, crop: FaceCrop) -> np.ndarray:
        import torch

        module = self._load()
        x = (crop.pixels.astype(np.float32) - 127.5) / 127.5
        tensor = torch.from_numpy(x).permute(2, 0, 1).unsqueeze(0).to(self.device)
        try:
            with torch.no_grad():
                out = module(tensor)
        except Exception as exc:
            raise ExtractionError(f"backend {self.backend_id!r}: inference failed: {exc}") from exc
        values = out.detach().cpu().numpy().reshape(-1)
        if values.shape[0] != self.dim:
            raise ExtractionError(
                f"backend {self.backend_id!r}: expected dim {self.dim}, got {values.shape[0]}"
            )
        return values


def create_backend(
    name: str,
    *,
    dim: int | None = None,
    weights: str | Path | None = None,
    seed: int = 0,
    jitter: float = 0.0,
    identity_seed: str = "id-0",
    device: str = "cpu",
) -> EmbeddingBackend:
    """Build a backend by id: `synthetic`, `patch`, or a pretrained slot."""
    if name == "synthetic":
        return SyntheticBackend(
            identity_seed=identity_seed, jitter=jitter, seed=seed, dim=dim or DEFAULT_DIM
        )
    if name == "patch":
        return PatchBackend(dim=dim or 64, seed=seed)
    if name in PRETRAINED_SLOTS:
        if weights is None:
            raise ValidationError(
                f"backend {name!r} needs a TorchScript weights file (--weights); "
                f"slot: {PRETRAINED_SLOTS[name]}"
            )
        return ModelFileBackend(name, weights, dim=dim or DEFAULT_DIM, device=device)
    known = ["synthetic", "patch", *PRETRAINED_SLOTS]
    raise ValidationError(f"unknown backend {name!r}; known: {', '.join(known)}")


def extract(crop: FaceCrop, backend: EmbeddingBackend, normalize: bool = True) -> IdentityVector:
    """Extract one identity vector; L2-normalized unless disabled."""
    try:
        values = np.asarray(backend.embed(crop), dtype=np.float32)
    except ExtractionError:
        raise
    except Exception as exc:
        raise ExtractionError(f"backend {backend.backend_id!r} failed: {exc}") from exc
    if values.ndim != 1:
        raise ExtractionError(
            f"backend {backend.backend_id!r} returned shape {values.shape}, expected 1-D"
        )
    if not np.all(np.isfinite(values)):
        raise ExtractionError(f"backend {backend.backend_id!r} returned non-finite values")
    if normalize:
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            raise ExtractionError(f"backend {backend.backend_id!r} returned a zero vector")
        values = values / np.float32(norm)
    return IdentityVector(values=values, backend_id=backend.backend_id)


def extract_video(
    crops: Sequence[FaceCrop],
    aux: FaceCrop,
    backend: EmbeddingBackend,
    video_id: str = "",
    normalize: bool = True,
) -> EmbeddingSequence:
    """Extract per-frame vectors in order plus the aux vector."""
    if len(crops) < 2:
        raise ValidationError(f"need at least 2 crops, got {len(crops)}")
    vectors = []
    for i, crop in enumerate(crops):
        try:
            vectors.append(extract(crop, backend, normalize=normalize))
        except ExtractionError as exc:
            raise ExtractionError(f"frame {i}: {exc}") from exc
    aux_vector = extract(aux, backend, normalize=normalize)
    return EmbeddingSequence(video_id=video_id, vectors=vectors, aux_vector=aux_vector)


# Cache layout (all integers little-endian):
#   magic "IDSQ" | u32 version | u32 dim | u32 length |
#   u16 len + utf-8 backend_id | u16 len + utf-8 video_id |
#   (length + 1) * dim float32 payload (frames in order, aux last) |
#   u32 CRC32 over everything before it
CACHE_MAGIC = b"IDSQ"
CACHE_VERSION = 1


def cache_write(seq: EmbeddingSequence, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    backend_b = seq.backend_id.encode("utf-8")
    video_b = seq.video_id.encode("utf-8")
    header = (
        CACHE_MAGIC
        + struct.pack("<III", CACHE_VERSION, seq.dim, seq.length)
        + struct.pack("<H", len(backend_b))
        + backend_b
        + struct.pack("<H", len(video_b))
        + video_b
    )
    payload = np.concatenate([seq.matrix(), seq.aux_vector.values[None, :]])
    payload_b = payload.astype("<f4").tobytes()
    crc = zlib.crc32(header + payload_b)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(header + payload_b + struct.pack("<I", crc))
    tmp.replace(path)


def cache_read(path: str | Path) -> EmbeddingSequence:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CacheError(f"cannot read cache {path}: {exc}") from exc

    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(raw):
            raise CacheError(f"cache {path} is truncated")
        chunk = raw[offset : offset + n]
        offset += n
        return chunk

    if take(4) != CACHE_MAGIC:
        raise CacheError(f"cache {path}: bad magic {raw[:4]!r}")
    version, dim, length = struct.unpack("<III", take(12))
    if version != CACHE_VERSION:
        raise CacheError(f"cache {path}: unsupported version {version}")
    (nb,) = struct.unpack("<H", take(2))
    backend_b = take(nb)
    (nv,) = struct.unpack("<H", take(2))
    video_b = take(nv)
    payload_b = take((length + 1) * dim * 4)
    if offset + 4 != len(raw):
        raise CacheError(f"cache {path}: truncated or trailing bytes")
    (crc_stored,) = struct.unpack("<I", take(4))
    if zlib.crc32(raw[: len(raw) - 4]) != crc_stored:
        raise CacheError(f"cache {path}: checksum mismatch")

    backend_id = backend_b.decode("utf-8")
    video_id = video_b.decode("utf-8")
    payload = np.frombuffer(payload_b, dtype="<f4").reshape(length + 1, dim)
    vectors = [IdentityVector(payload[i].copy(), backend_id) for i in range(length)]
    aux = IdentityVector(payload[length].copy(), backend_id)
    return EmbeddingSequence(video_id=video_id, vectors=vectors, aux_vector=aux)
