"""Logistic-linear affinity model and the triplet hinge objective over it."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from ..corpus.model import Entity, Mention
from .features import EXTRACTOR_ID, ME_FEATURES, MM_FEATURES, FeatureExtractor
from .scorers import Scorer

# keeps scores strictly inside (0, 1) where the logistic saturates in float64
_CLIP = 1e-12


def triplet_loss(s_pos: float, s_neg: float, mu: float) -> float:
    """Hinge ``max(s_neg - s_pos + mu, 0)``."""
    if not mu > 0:
        raise ValueError("margin must be positive")
    return max(s_neg - s_pos + mu, 0.0)


@dataclass
class LinearAffinityModel:
    kind: str  # "mm" or "me"
    weights: np.ndarray
    bias: float = 0.0
    extractor_id: str = EXTRACTOR_ID

    def __post_init__(self) -> None:
        if self.kind not in ("mm", "me"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = float(self.bias)

    @classmethod
    def init(cls, kind: str, rng: np.random.Generator | None = None, scale: float = 0.01) -> "LinearAffinityModel":
        n = len(MM_FEATURES if kind == "mm" else ME_FEATURES)
        w = np.zeros(n) if rng is None else rng.normal(0.0, scale, size=n)
        return cls(kind, w, 0.0)

    def logits(self, feats: np.ndarray) -> np.ndarray:
        return feats @ self.weights + self.bias

    def raw_score(self, feats: np.ndarray) -> np.ndarray:
        return expit(self.logits(feats))

    def score(self, feats: np.ndarray) -> float:
        return float(np.clip(self.raw_score(feats), _CLIP, 1.0 - _CLIP))

    def copy(self) -> "LinearAffinityModel":
        return LinearAffinityModel(self.kind, self.weights.copy(), self.bias, self.extractor_id)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.isfinite(self.bias))

    def to_dict(self, config: dict | None = None, seed: int | None = None) -> dict:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "feature_extractor": self.extractor_id,
            "features": list(MM_FEATURES if self.kind == "mm" else ME_FEATURES),
            "config": config or {},
            "seed": seed,
        }

    def save(self, path, config: dict | None = None, seed: int | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(config, seed), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinearAffinityModel":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        model = cls(d["kind"], np.asarray(d["weights"]), d["bias"], d.get("feature_extractor", EXTRACTOR_ID))
        if model.extractor_id != EXTRACTOR_ID:
            raise ValueError(f"{path}: checkpoint built for extractor {model.extractor_id!r}, have {EXTRACTOR_ID!r}")
        return model


@dataclass
class BatchObjective:
    loss: float
    active: int
    n: int
    grad_w: np.ndarray
    grad_b: float


def batch_loss_and_grad(model: LinearAffinityModel, pos: np.ndarray, neg: np.ndarray, mu: float) -> BatchObjective:
    """Mean triplet hinge over rows of (positive, negative) feature matrices and its subgradient.

    With ``s = logistic(w.f + b)`` and ``ds/dw = s (1 - s) f``, the
    subgradient of an active triplet is ``ds_neg - ds_pos``; inactive
    triplets (hinge at or below zero) contribute nothing.
    """
    pos = np.atleast_2d(pos)
    neg = np.atleast_2d(neg)
    n = pos.shape[0]
    if n == 0:
        return BatchObjective(0.0, 0, 0, np.zeros_like(model.weights), 0.0)
    sp = model.raw_score(pos)
    sn = model.raw_score(neg)
    h = sn - sp + mu
    act = h > 0
    loss = float(np.sum(np.where(act, h, 0.0)) / n)
    dp = sp * (1 - sp)
    dn = sn * (1 - sn)
    a = act.astype(np.float64)
    grad_w = ((a * dn) @ neg - (a * dp) @ pos) / n
    grad_b = float(np.sum(a * (dn - dp)) / n)
    return BatchObjective(loss, int(act.sum()), n, grad_w, grad_b)


class LinearScorer(Scorer):
    """Scorer backed by up to two linear models sharing one feature extractor."""

    def __init__(self, extractor: FeatureExtractor, mm_model: LinearAffinityModel | None = None,
                 me_model: LinearAffinityModel | None = None) -> None:
        self.extractor = extractor
        self.mm_model = mm_model
        self.me_model = me_model

    @property
    def has_mm(self) -> bool:  # type: ignore[override]
        return self.mm_model is not None

    @property
    def has_me(self) -> bool:  # type: ignore[override]
        return self.me_model is not None

    def score_mm(self, a: Mention, b: Mention) -> float:
        if self.mm_model is None:
            raise ValueError("no mention-mention model loaded")
        return self.mm_model.score(self.extractor.mm(a, b))

    def score_me(self, m: Mention, e: Entity | str) -> float:
        if self.me_model is None:
            raise ValueError("no mention-entity model loaded")
        return self.me_model.score(self.extractor.me(m, e))
