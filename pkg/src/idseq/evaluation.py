"""Video-level AUC, per-fake-type breakdowns, robustness sweeps, reports.

AUC is the exact Mann-Whitney statistic with FAKE as the positive class:
the fraction of (fake, real) video pairs where the fake scores higher,
ties counting one half. Robustness sweeps re-score the evaluation split
under each corruption kind at severities 0..5 and tabulate the AUC
decline relative to severity 0.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corruptions import CorruptionKind, CorruptionSpec, corrupt_video
from .detector import DetectorModel, window_probs
from .embedder import EmbeddingSequence, stable_seed
from .errors import ValidationError
from .features import (
    DiffKind,
    Phase,
    SamplerConfig,
    difference_sequence,
    sample_windows,
    window_view,
)
from .manifest import FakeType, Label, Manifest, Split, VideoRecord
from .pipeline import EmbeddingStore

FAKE_TYPE_ORDER = ["AD", "FOMM", "FS", "DFL", "FSGAN", "OTHER"]
REPORT_FORMATS = ("json", "csv", "markdown", "svg")
AGGREGATES = ("mean", "max")


def auc(scores_pos: Sequence[float], scores_neg: Sequence[float]) -> float:
    """Exact pairwise AUC via midranks; ties count 0.5."""
    pos = np.asarray(scores_pos, dtype=np.float64)
    neg = np.asarray(scores_neg, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValidationError("AUC undefined: need scores for both classes")
    combined = np.concatenate([pos, neg])
    ranks = _midranks(combined)
    rank_sum_pos = float(ranks[: pos.size].sum())
    u = rank_sum_pos - pos.size * (pos.size + 1) / 2.0
    return u / (pos.size * neg.size)


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, tied values receiving the mean of their rank range."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class VideoScore:
    video_id: str
    label: str
    fake_type: str | None
    score: float


@dataclass
class EvalReport:
    per_video: list[VideoScore]
    auc_overall: float
    auc_by_fake_type: dict[str, float]
    robustness: dict[str, list[float]] = field(default_factory=dict)
    auc_decline: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for value in [self.auc_overall, *self.auc_by_fake_type.values()]:
            if not (0.0 <= value <= 1.0):
                raise ValidationError(f"AUC {value} outside [0, 1]")
        for kind, row in self.robustness.items():
            if len(row) != 6:
                raise ValidationError(f"robustness[{kind}] must list severities 0..5")
            if any(not (0.0 <= v <= 1.0) for v in row):
                raise ValidationError(f"robustness[{kind}] has AUC outside [0, 1]")
        for kind, declines in self.auc_decline.items():
            row = self.robustness.get(kind)
            if row is None or len(declines) != 5:
                raise ValidationError(f"auc_decline[{kind}] must pair a 6-entry sweep row")
            for s, d in enumerate(declines, start=1):
                if d != row[0] - row[s]:
                    raise ValidationError(
                        f"auc_decline[{kind}][{s}] != pristine - severity-{s} AUC"
                    )

    def to_dict(self) -> dict:
        return {
            "per_video": [asdict(v) for v in self.per_video],
            "auc_overall": self.auc_overall,
            "auc_by_fake_type": dict(self.auc_by_fake_type),
            "robustness": {k: list(v) for k, v in self.robustness.items()},
            "auc_decline": {k: list(v) for k, v in self.auc_decline.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            per_video=[VideoScore(**v) for v in data["per_video"]],
            auc_overall=data["auc_overall"],
            auc_by_fake_type=dict(data["auc_by_fake_type"]),
            robustness={k: list(v) for k, v in data.get("robustness", {}).items()},
            auc_decline={k: list(v) for k, v in data.get("auc_decline", {}).items()},
        )


def score_sequence(
    model: DetectorModel,
    seq: EmbeddingSequence,
    sampler: SamplerConfig,
    kind: DiffKind = DiffKind.CAT,
    aggregate: str = "mean",
) -> float:
    """Score one video's embedding sequence over its EVAL windows."""
    if aggregate not in AGGREGATES:
        raise ValidationError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
    windows = sample_windows(seq.length, sampler, phase=Phase.EVAL)
    diffs = [difference_sequence(window_view(seq, w), kind) for w in windows]
    probs = window_probs(model, diffs)
    if aggregate == "max":
        return float(max(probs))
    return float(sum(probs) / len(probs))


def _report_from_scores(scored: list[tuple[VideoRecord, float]]) -> EvalReport:
    per_video = [
        VideoScore(
            video_id=rec.video_id,
            label=rec.label.value,
            fake_type=rec.fake_type.value if rec.fake_type else None,
            score=score,
        )
        for rec, score in scored
    ]
    neg = [s for rec, s in scored if rec.label is Label.REAL]
    pos = [s for rec, s in scored if rec.label is Label.FAKE]
    overall = auc(pos, neg)
    by_type: dict[str, float] = {}
    for type_name in FAKE_TYPE_ORDER:
        type_scores = [
            s for rec, s in scored if rec.fake_type is not None and rec.fake_type.value == type_name
        ]
        if type_scores:
            by_type[type_name] = auc(type_scores, neg)
    return EvalReport(per_video=per_video, auc_overall=overall, auc_by_fake_type=by_type)


def evaluate_model(
    model: DetectorModel,
    store: EmbeddingStore,
    manifest: Manifest,
    split: Split,
    sampler: SamplerConfig,
    kind: DiffKind = DiffKind.CAT,
    aggregate: str = "mean",
    frames_transform=None,
    use_cache: bool = True,
) -> EvalReport:
    """Score every video in `split` and compute overall/per-type AUC."""
    records = manifest.by_split(split)
    if not records:
        raise ValidationError(f"split {Split(split).value} has no records")
    scored = []
    for rec in records:
        seq = store.sequence_for(rec, frames_transform=frames_transform, use_cache=use_cache)
        scored.append((rec, score_sequence(model, seq, sampler, kind, aggregate)))
    return _report_from_scores(scored)


def robustness_sweep(
    model: DetectorModel,
    store: EmbeddingStore,
    manifest: Manifest,
    split: Split,
    sampler: SamplerConfig,
    kind: DiffKind = DiffKind.CAT,
    aggregate: str = "mean",
    kinds: Iterable[CorruptionKind] = tuple(CorruptionKind),
    corruption_seed: int = 0,
) -> EvalReport:
    """Re-score the split under each corruption kind at severities 0..5.

    Every cell, severity 0 included, runs the full decode/corrupt/align/
    embed path with caching disabled, so the severity-0 column doubles as
    a determinism check against the pristine evaluation.
    """
    base = evaluate_model(model, store, manifest, split, sampler, kind, aggregate)
    robustness: dict[str, list[float]] = {}
    decline: dict[str, list[float]] = {}
    for ckind in kinds:
        ckind = CorruptionKind(ckind)
        row: list[float] = []
        for severity in range(6):
            transform = _corruption_transform(ckind, severity, corruption_seed)
            cell = evaluate_model(
                model,
                store,
                manifest,
                split,
                sampler,
                kind,
                aggregate,
                frames_transform=transform,
                use_cache=False,
            )
            row.append(cell.auc_overall)
        robustness[ckind.value] = row
        decline[ckind.value] = [row[0] - row[s] for s in range(1, 6)]
    return EvalReport(
        per_video=base.per_video,
        auc_overall=base.auc_overall,
        auc_by_fake_type=base.auc_by_fake_type,
        robustness=robustness,
        auc_decline=decline,
    )


def _corruption_transform(kind: CorruptionKind, severity: int, corruption_seed: int):
    def transform(record: VideoRecord, frames: list[np.ndarray]) -> list[np.ndarray]:
        seed = stable_seed("corrupt", corruption_seed, record.video_id) & 0x7FFFFFFF
        spec = CorruptionSpec(kind=kind, severity=severity, seed=seed)
        return corrupt_video(frames, spec)

    return transform


def render_report(report: EvalReport, fmt: str, path: str | Path) -> Path:
    """Serialize a report as json, csv, markdown, or an svg severity plot."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    elif fmt == "csv":
        path.write_text(_render_csv(report))
    elif fmt == "markdown":
        path.write_text(_render_markdown(report))
    elif fmt == "svg":
        _render_svg(report, path)
    else:
        raise ValidationError(f"unknown report format {fmt!r}; known: {REPORT_FORMATS}")
    return path


def _render_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["video_id", "label", "fake_type", "score"])
    for v in report.per_video:
        writer.writerow([v.video_id, v.label, v.fake_type or "", f"{v.score:.10g}"])
    writer.writerow(["auc:all", "", "", f"{report.auc_overall:.10g}"])
    for name, value in report.auc_by_fake_type.items():
        writer.writerow([f"auc:{name}", "", "", f"{value:.10g}"])
    for kind, row in report.robustness.items():
        for severity, value in enumerate(row):
            writer.writerow([f"robustness:{kind}:{severity}", "", "", f"{value:.10g}"])
    for kind, declines in report.auc_decline.items():
        for severity, value in enumerate(declines, start=1):
            writer.writerow([f"decline:{kind}:{severity}", "", "", f"{value:.10g}"])
    return buf.getvalue()


def _render_markdown(report: EvalReport) -> str:
    types = [t for t in FAKE_TYPE_ORDER if t in report.auc_by_fake_type]
    header = types + ["all"]
    values = [report.auc_by_fake_type[t] for t in types] + [report.auc_overall]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
        "| " + " | ".join(f"{v:.4f}" for v in values) + " |",
    ]
    if report.robustness:
        lines += ["", "| kind | " + " | ".join(str(s) for s in range(6)) + " |",
                  "|" + "---|" * 7]
        for kind in sorted(report.robustness):
            row = report.robustness[kind]
            lines.append("| " + kind + " | " + " | ".join(f"{v:.4f}" for v in row) + " |")
    return "\n".join(lines) + "\n"


def _render_svg(report: EvalReport, path: Path) -> None:
    if not report.robustness:
        raise ValidationError("svg rendering needs robustness sweep data")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "idseq"
    fig, ax = plt.subplots(figsize=(6, 4))
    severities = list(range(6))
    for kind in sorted(report.robustness):
        ax.plot(severities, report.robustness[kind], marker="o", label=kind)
    ax.set_xlabel("severity level")
    ax.set_ylabel("video-level AUC")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
