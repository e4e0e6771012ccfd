"""Dataset manifest: video records, identity-disjoint splits, aux-image pairing.

A manifest is a JSON-Lines file (UTF-8, one record per line). Auxiliary
image locators either point at a standalone image file or use the form
``<frames_path>::<frame_index>`` to reference one frame of another video.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ManifestError


class Label(str, Enum):
    REAL = "REAL"
    FAKE = "FAKE"


class FakeType(str, Enum):
    AD = "AD"
    FOMM = "FOMM"
    FS = "FS"
    DFL = "DFL"
    FSGAN = "FSGAN"
    OTHER = "OTHER"


class Split(str, Enum):
    TRAIN = "TRAIN"
    VAL = "VAL"
    TEST = "TEST"


#: Fake types produced by swapping a face onto another identity.
SWAP_TYPES = frozenset({FakeType.FS, FakeType.DFL, FakeType.FSGAN})
#: Fake types that re-animate the same identity's face.
REENACT_TYPES = frozenset({FakeType.AD, FakeType.FOMM})

_REQUIRED_FIELDS = ("video_id", "identity_id", "label", "frames_path", "split")


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    identity_id: str
    label: Label
    frames_path: str
    split: Split
    fake_type: FakeType | None = None
    aux_image_path: str | None = None

    def __post_init__(self) -> None:
        if self.label is Label.FAKE and self.fake_type is None:
            raise ManifestError(
                f"record {self.video_id!r}: label=FAKE requires fake_type"
            )
        if self.label is Label.REAL and self.fake_type is not None:
            raise ManifestError(
                f"record {self.video_id!r}: label=REAL must not carry fake_type"
            )

    def to_dict(self) -> dict:
        out = {
            "video_id": self.video_id,
            "identity_id": self.identity_id,
            "label": self.label.value,
            "frames_path": self.frames_path,
            "split": self.split.value,
        }
        if self.fake_type is not None:
            out["fake_type"] = self.fake_type.value
        if self.aux_image_path is not None:
            out["aux_image_path"] = self.aux_image_path
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "VideoRecord":
        missing = [k for k in _REQUIRED_FIELDS if k not in data]
        if missing:
            raise ManifestError(f"missing fields: {', '.join(missing)}")
        try:
            label = Label(data["label"])
            split = Split(data["split"])
            fake_type = FakeType(data["fake_type"]) if "fake_type" in data else None
        except ValueError as exc:
            raise ManifestError(str(exc)) from None
        return cls(
            video_id=str(data["video_id"]),
            identity_id=str(data["identity_id"]),
            label=label,
            frames_path=str(data["frames_path"]),
            split=split,
            fake_type=fake_type,
            aux_image_path=(
                str(data["aux_image_path"]) if data.get("aux_image_path") else None
            ),
        )


@dataclass
class Manifest:
    records: list[VideoRecord]
    split_identities: dict[Split, set[str]]

    @classmethod
    def from_records(cls, records: Sequence[VideoRecord]) -> "Manifest":
        """Build a manifest, deriving split identity sets and checking invariants."""
        split_identities: dict[Split, set[str]] = {s: set() for s in Split}
        for rec in records:
            split_identities[rec.split].add(rec.identity_id)
        _check_disjoint(split_identities)
        _check_aux_invariants(records)
        return cls(records=list(records), split_identities=split_identities)

    def by_split(self, split: Split) -> list[VideoRecord]:
        return [r for r in self.records if r.split == split]

    def identities(self) -> set[str]:
        return {r.identity_id for r in self.records}


def _check_disjoint(split_identities: dict[Split, set[str]]) -> None:
    splits = list(Split)
    for i, a in enumerate(splits):
        for b in splits[i + 1 :]:
            overlap = split_identities[a] & split_identities[b]
            if overlap:
                ident = sorted(overlap)[0]
                raise ManifestError(
                    f"identity {ident!r} appears in both {a.value} and {b.value}"
                )


def _check_aux_invariants(records: Sequence[VideoRecord]) -> None:
    """Reject aux images that provably come from the wrong source.

    The checks only fire when the aux locator resolves to a video known to
    this manifest; external registered images (the real eKYC case) cannot
    be cross-checked and are accepted as-is.
    """
    by_frames_path = {r.frames_path: r for r in records}
    for rec in records:
        if rec.aux_image_path is None:
            continue
        src_path = rec.aux_image_path.split("::", 1)[0]
        src = by_frames_path.get(src_path)
        if src is None:
            continue
        if src.video_id == rec.video_id:
            raise ManifestError(
                f"record {rec.video_id!r}: aux image drawn from its own video"
            )
        if src.identity_id != rec.identity_id:
            raise ManifestError(
                f"record {rec.video_id!r}: aux image identity {src.identity_id!r} "
                f"differs from record identity {rec.identity_id!r}"
            )


def load_manifest(path: str | Path) -> Manifest:
    """Load and validate a JSON-Lines manifest.

    Raises `ManifestError` with the 1-based line number on schema
    violations, and names the offending identity on split overlap.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    records: list[VideoRecord] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {lineno}: invalid JSON ({exc})") from None
            try:
                rec = VideoRecord.from_dict(data)
            except ManifestError as exc:
                raise ManifestError(f"line {lineno}: {exc}") from None
            if rec.video_id in seen_ids:
                raise ManifestError(f"line {lineno}: duplicate video_id {rec.video_id!r}")
            seen_ids.add(rec.video_id)
            records.append(rec)
    return Manifest.from_records(records)


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """Write a manifest as JSON Lines. Output is byte-deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def make_identity_splits(
    records: Sequence[VideoRecord],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> Manifest:
    """Partition identities (not videos) into TRAIN/VAL/TEST.

    Identities are sorted, shuffled by `seed`, then sliced by the floor of
    fraction x count per split with the remainder going to TRAIN. The same
    inputs and seed always produce the same manifest.
    """
    if len(fractions) != 3:
        raise ManifestError("fractions must be (train, val, test)")
    if any(f < 0 for f in fractions):
        raise ManifestError("fractions must be non-negative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ManifestError(f"fractions must sum to 1, got {sum(fractions)}")

    identities = sorted({r.identity_id for r in records})
    n = len(identities)
    nonempty = sum(1 for f in fractions if f > 0)
    if n < nonempty:
        raise ManifestError(
            f"{n} identities cannot fill {nonempty} non-empty splits"
        )

    rng = random.Random(seed)
    rng.shuffle(identities)

    counts = [int(f * n) for f in fractions]
    counts[0] += n - sum(counts)
    bounds = (counts[0], counts[0] + counts[1])
    assignment: dict[str, Split] = {}
    for idx, ident in enumerate(identities):
        if idx < bounds[0]:
            assignment[ident] = Split.TRAIN
        elif idx < bounds[1]:
            assignment[ident] = Split.VAL
        else:
            assignment[ident] = Split.TEST

    for split, frac, count in zip(Split, fractions, counts):
        if frac > 0 and count == 0:
            raise ManifestError(
                f"split {split.value} received no identities "
                f"(n={n}, fractions={fractions})"
            )

    new_records = [replace(r, split=assignment[r.identity_id]) for r in records]
    return Manifest.from_records(new_records)


def pair_aux_images(
    records: Sequence[VideoRecord],
    seed: int = 0,
    frame_index: int = 0,
) -> list[VideoRecord]:
    """Assign each record an aux image from a REAL video of the same identity.

    The aux source is always a different video than the record itself.
    Fake records draw from real videos of their labeled (target) identity.
    Deterministic under `seed`; raises listing any identity without an
    eligible real source video.
    """
    rng = random.Random(seed)
    reals_by_identity: dict[str, list[VideoRecord]] = {}
    for rec in records:
        if rec.label is Label.REAL:
            reals_by_identity.setdefault(rec.identity_id, []).append(rec)
    for sources in reals_by_identity.values():
        sources.sort(key=lambda r: r.video_id)

    blocked: list[str] = []
    paired: list[VideoRecord] = []
    for rec in sorted(records, key=lambda r: r.video_id):
        candidates = [
            src
            for src in reals_by_identity.get(rec.identity_id, [])
            if src.video_id != rec.video_id
        ]
        if not candidates:
            blocked.append(rec.identity_id)
            continue
        src = rng.choice(candidates)
        paired.append(
            replace(rec, aux_image_path=f"{src.frames_path}::{frame_index}")
        )
    if blocked:
        names = ", ".join(sorted(set(blocked)))
        raise ManifestError(f"no eligible aux source for identities: {names}")

    order = {r.video_id: i for i, r in enumerate(records)}
    paired.sort(key=lambda r: order[r.video_id])
    return paired


def parse_aux_locator(locator: str) -> tuple[str, int | None]:
    """Split an aux locator into (path, frame_index or None)."""
    if "::" in locator:
        path, _, idx = locator.rpartition("::")
        try:
            return path, int(idx)
        except ValueError:
            raise ManifestError(f"bad aux locator {locator!r}") from None
    return locator, None
