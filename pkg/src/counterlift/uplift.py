"""T-learner uplift scoring with undersampling and recalibration.

Trains one logistic ensemble per treatment arm on randomized campaign
data. Class imbalance is handled EasyEnsemble-style: every member sees
all minority-class rows plus a fresh equal-size draw from the majority,
and predictions are mapped back to the original prevalence with the
undersampling ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import Scores, checked_probability
from .errors import (
    DimensionMismatchError,
    DomainError,
    MissingArmError,
    SingleClassArmError,
)


@dataclass(frozen=True, slots=True)
class CampaignRecord:
    """One observed unit: features, assigned treatment, realized outcome."""

    x: np.ndarray
    t: int
    y: int

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise DomainError("features must be a finite 1-D vector")
        object.__setattr__(self, "x", x)
        if self.t not in (0, 1):
            raise DomainError(f"treatment must be 0 or 1, got {self.t!r}")
        if self.y not in (0, 1):
            raise DomainError(f"outcome must be 0 or 1, got {self.y!r}")


@dataclass(frozen=True, slots=True)
class UpliftConfig:
    """Training knobs for the logistic base learners."""

    epochs: int = 500
    learning_rate: float = 0.1
    l2: float = 1e-4
    seed: int = 0
    calibrate: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.learning_rate <= 0 or self.l2 < 0:
            raise ValueError("epochs, learning_rate must be positive; l2 >= 0")


@dataclass(frozen=True, slots=True)
class ArmEnsemble:
    """Logistic members for one arm plus its undersampling bookkeeping.

    beta is the minority/majority row ratio of the arm's training data;
    majority_label records which class was undersampled, because the
    prevalence correction must be applied to the probability of the
    class that kept all its rows.
    """

    weights: np.ndarray
    intercepts: np.ndarray
    beta: float
    majority_label: int

    @property
    def size(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, slots=True)
class UpliftModel:
    """Per-arm ensembles; index 0 is control, 1 is treatment."""

    arm0: ArmEnsemble
    arm1: ArmEnsemble
    n_features: int
    calibrated: bool = True


def calibrate(p_s: float, beta: float) -> float:
    """Map a score from balanced training data back to true prevalence.

    With the majority (negative) class undersampled at rate beta, Bayes'
    rule gives p = beta*p_s / (beta*p_s - p_s + 1).  The map is monotone
    in p_s, fixes 0 and 1, and is the identity at beta = 1.
    """
    p_s = checked_probability(p_s, "p_s")
    if not 0.0 < beta <= 1.0:
        raise DomainError(f"beta must be in (0, 1], got {beta!r}")
    return beta * p_s / (beta * p_s - p_s + 1.0)


def _calibrate_array(p_s: np.ndarray, beta: float) -> np.ndarray:
    return beta * p_s / (beta * p_s - p_s + 1.0)


def _train_members(
    x: np.ndarray,
    y: np.ndarray,
    k: int,
    cfg: UpliftConfig,
    rng: np.random.Generator,
) -> ArmEnsemble:
    labels = (np.flatnonzero(y == 0), np.flatnonzero(y == 1))
    minority_label = 1 if labels[1].size <= labels[0].size else 0
    minority = labels[minority_label]
    majority = labels[1 - minority_label]
    beta = minority.size / majority.size

    member_x = []
    member_y = []
    for _ in range(k):
        picked = rng.choice(majority, size=minority.size, replace=False)
        rows = np.concatenate([minority, picked])
        member_x.append(x[rows])
        member_y.append(y[rows])
    xk = np.stack(member_x)
    yk = np.stack(member_y).astype(float)

    n_rows = xk.shape[1]
    w = np.zeros((k, x.shape[1]))
    b = np.zeros(k)
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        logits = np.einsum("kbn,kn->kb", xk, w) + b[:, None]
        resid = expit(logits) - yk
        grad_w = np.einsum("kbn,kb->kn", xk, resid) / n_rows + cfg.l2 * w
        grad_b = resid.mean(axis=1)
        w -= lr * grad_w
        b -= lr * grad_b
    return ArmEnsemble(w, b, beta, 1 - minority_label)


def train_tlearner(
    data: Sequence[CampaignRecord],
    k: int = 5,
    cfg: UpliftConfig = UpliftConfig(),
) -> UpliftModel:
    """Train one logistic EasyEnsemble per arm on campaign records.

    Undersampling draws come from a generator seeded by cfg.seed, arm 0
    first, so training is reproducible for fixed (data, k, cfg).
    """
    if k < 1:
        raise ValueError("ensemble size k must be at least 1")
    if not data:
        raise MissingArmError("no campaign records given")
    x = np.stack([r.x for r in data])
    t = np.array([r.t for r in data])
    y = np.array([r.y for r in data])
    return train_tlearner_arrays(x, t, y, k, cfg)


def train_tlearner_arrays(
    x: np.ndarray,
    t: np.ndarray,
    y: np.ndarray,
    k: int = 5,
    cfg: UpliftConfig = UpliftConfig(),
) -> UpliftModel:
    """Array-based training entry point (columns follow CampaignRecord)."""
    rng = np.random.default_rng(cfg.seed)
    arms = []
    for arm in (0, 1):
        mask = t == arm
        if not mask.any():
            raise MissingArmError(f"no records with treatment t={arm}")
        y_arm = y[mask]
        if y_arm.min() == y_arm.max():
            raise SingleClassArmError(
                f"arm t={arm} contains only outcome y={int(y_arm[0])}; "
                "cannot train a classifier on one class"
            )
        arms.append(_train_members(x[mask], y_arm, k, cfg, rng))
    return UpliftModel(arms[0], arms[1], x.shape[1], cfg.calibrate)


def _arm_scores(ens: ArmEnsemble, x: np.ndarray, calibrated: bool) -> np.ndarray:
    member_p = expit(x @ ens.weights.T + ens.intercepts)
    p = member_p.mean(axis=1)
    if not calibrated:
        return p
    if ens.majority_label == 0:
        return _calibrate_array(p, ens.beta)
    # The positive class was undersampled; correct its complement.
    return 1.0 - _calibrate_array(1.0 - p, ens.beta)


def predict_scores_batch(model: UpliftModel, x: np.ndarray) -> np.ndarray:
    """Score pairs for a feature matrix; returns an (N, 2) array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"expected feature matrix with {model.n_features} columns, "
            f"got shape {x.shape}"
        )
    z0 = _arm_scores(model.arm0, x, model.calibrated)
    z1 = _arm_scores(model.arm1, x, model.calibrated)
    return np.column_stack([z0, z1])


def predict_scores(model: UpliftModel, x: np.ndarray) -> Scores:
    """Calibrated (z0, z1) for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise DimensionMismatchError(
            f"expected {model.n_features} features, got shape {x.shape}"
        )
    pair = predict_scores_batch(model, x[None, :])[0]
    return Scores(float(pair[0]), float(pair[1]))
