"""Composite training objective: cross-entropy + triplet + anchor-positive.

With sequence embeddings H_a (anchor, real), H_p (positive, real) and
H_n (negative, fake):

    L_tri = max(||H_a - H_p|| - ||H_a - H_n|| + margin, 0)
    L_ap  = ||H_a - H_p||
    L_cls = -log p[y]
    L     = L_cls + lambda_tri * L_tri + lambda_ap * L_ap

All functions accept single vectors or batches (leading batch axis) and
reduce by mean, returning a 0-dim tensor that stays differentiable; dtype
follows the inputs. The distance uses sqrt(sum_sq + 1e-24): invisible at
float64 resolution away from zero, but it keeps the gradient finite when
two embeddings coincide. At the hinge kink the subgradient is 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ValidationError

#: Added under the sqrt of the L2 distance; see module docstring.
_DIST_EPS_SQ = 1e-24
#: Probabilities are clamped to this floor before the log.
LOG_EPS = 1e-12


@dataclass
class LossConfig:
    margin: float = 0.2
    lambda_tri: float = 1.0
    lambda_ap: float = 0.1

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ValidationError("margin must be > 0")
        if self.lambda_tri < 0 or self.lambda_ap < 0:
            raise ValidationError("loss weights must be >= 0")


def _as_batch(x, name: str) -> torch.Tensor:
    t = torch.as_tensor(x)
    if t.ndim == 1:
        t = t.unsqueeze(0)
    if t.ndim != 2:
        raise ValidationError(f"{name} must be a vector or batch of vectors, got {tuple(t.shape)}")
    return t


def _check_same_shape(*named: tuple[str, torch.Tensor]) -> None:
    shapes = {t.shape for _, t in named}
    if len(shapes) != 1:
        detail = ", ".join(f"{n}={tuple(t.shape)}" for n, t in named)
        raise ValidationError(f"embedding shape mismatch: {detail}")


def _distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.sqrt(((a - b) ** 2).sum(dim=-1) + _DIST_EPS_SQ)


def triplet_loss(h_a, h_p, h_n, margin: float = 0.2) -> torch.Tensor:
    """Hinge on (anchor-positive distance) - (anchor-negative distance) + margin."""
    a = _as_batch(h_a, "h_a")
    p = _as_batch(h_p, "h_p")
    n = _as_batch(h_n, "h_n")
    _check_same_shape(("h_a", a), ("h_p", p), ("h_n", n))
    return torch.relu(_distance(a, p) - _distance(a, n) + margin).mean()


def anchor_positive_loss(h_a, h_p) -> torch.Tensor:
    """L2 distance between anchor and positive embeddings."""
    a = _as_batch(h_a, "h_a")
    p = _as_batch(h_p, "h_p")
    _check_same_shape(("h_a", a), ("h_p", p))
    return _distance(a, p).mean()


def classification_loss(y, p) -> torch.Tensor:
    """Cross-entropy -log p[y] over a 2-class probability vector (or batch)."""
    probs = torch.as_tensor(p)
    if probs.ndim == 1:
        probs = probs.unsqueeze(0)
    if probs.ndim != 2 or probs.shape[1] != 2:
        raise ValidationError(f"p must have 2 classes, got shape {tuple(probs.shape)}")
    labels = torch.as_tensor(y, dtype=torch.long).reshape(-1)
    if labels.shape[0] != probs.shape[0]:
        raise ValidationError(f"{labels.shape[0]} labels for {probs.shape[0]} probability rows")
    sums = probs.detach().sum(dim=1)
    if not torch.allclose(sums, torch.ones_like(sums), atol=1e-4):
        raise ValidationError("class probabilities must sum to 1")
    picked = probs.gather(1, labels.unsqueeze(1)).squeeze(1)
    return -torch.log(picked.clamp_min(LOG_EPS)).mean()


def total_loss(l_cls, l_tri, l_ap, lambda_tri: float = 1.0, lambda_ap: float = 0.1):
    """Weighted sum L_cls + lambda_tri * L_tri + lambda_ap * L_ap."""
    return l_cls + lambda_tri * l_tri + lambda_ap * l_ap
