"""Logistic-regression risk engine.

Encodes an observation (vitals, mobility, place category) into a fixed
10-dimensional feature vector, trains a weight vector by monotone gradient
descent, and scores observations with an at-risk probability.

Feature layout (FEATURE_SPEC_VERSION 1):

    0      bias, always 1
    1      (spo2 - 95) / 5, clamped to [-5, 5]; missing reads as -5
    2      (hr - 75) / 20, clamped to [-5, 5]; missing reads as -5
    3-5    mobility one-hot: resting, active, fall
    6-9    place category one-hot: home, clinic, outdoor, other
           (an unresolved place counts as other)

The normalization constants are fixed per feature_spec_version so stored
models keep their meaning; changing them requires a version bump.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .cells import PlaceRecord
from .types import MobilityState

FEATURE_SPEC_VERSION = 1
FEATURE_DIM = 10
MOBILITY_ORDER = (MobilityState.RESTING, MobilityState.ACTIVE, MobilityState.FALL)
CATEGORY_ORDER = ("home", "clinic", "outdoor", "other")

SPO2_CENTER, SPO2_SCALE = 95.0, 5.0
HR_CENTER, HR_SCALE = 75.0, 20.0
NORM_CLAMP = 5.0


class DimensionMismatch(ValueError):
    pass


class DegenerateData(ValueError):
    """All labels identical with no regularization: the optimum is unbounded."""


def _normalize(value: int | None, center: float, scale: float) -> float:
    if value is None:
        return -NORM_CLAMP
    return max(-NORM_CLAMP, min(NORM_CLAMP, (value - center) / scale))


def encode_features(
    hr: int | None,
    spo2: int | None,
    mobility: MobilityState,
    place: PlaceRecord | None,
) -> np.ndarray:
    """Build the feature vector for one observation; unknown place maps to other."""
    x = np.zeros(FEATURE_DIM)
    x[0] = 1.0
    x[1] = _normalize(spo2, SPO2_CENTER, SPO2_SCALE)
    x[2] = _normalize(hr, HR_CENTER, HR_SCALE)
    x[3 + MOBILITY_ORDER.index(mobility)] = 1.0
    category = place.category if place is not None else "other"
    x[6 + CATEGORY_ORDER.index(category)] = 1.0
    return x


@dataclass
class RiskModel:
    """Weight vector plus the metadata needed to interpret it.

    Production models built from ``encode_features`` have FEATURE_DIM
    weights; the dimension is only required to agree with whatever data
    the model is applied to.
    """

    weights: np.ndarray
    feature_spec_version: int = FEATURE_SPEC_VERSION
    l2: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.size == 0:
            raise DimensionMismatch(f"weights must be a non-empty vector, got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")


@dataclass
class LabeledDataset:
    """Feature matrix X (n x D) with 0/1 labels y (n)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise DimensionMismatch("X must be (n, D) and y must be (n,)")
        if not np.all((self.y == 0.0) | (self.y == 1.0)):
            raise ValueError("labels must be 0 or 1")

    def __len__(self) -> int:
        return int(self.X.shape[0])


def sigmoid(z: float) -> float:
    """Overflow-safe logistic function with output in the open interval (0, 1).

    Computed via the sign-split form so no exp() overflows for any finite z;
    results that would round to exactly 0 or 1 are nudged one ulp inward so
    callers can rely on strict openness.
    """
    if z >= 0:
        p = 1.0 / (1.0 + math.exp(-z))
    else:
        ez = math.exp(z)
        p = ez / (1.0 + ez)
    if p >= 1.0:
        return math.nextafter(1.0, 0.0)
    if p <= 0.0:
        return math.nextafter(0.0, 1.0)
    return p


def predict(model: RiskModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise DimensionMismatch(f"feature dimension {x.shape} != {model.weights.shape}")
    return sigmoid(float(np.dot(model.weights, x)))


def nll(model: RiskModel, data: LabeledDataset) -> float:
    """Regularized negative log-likelihood of the data under the model."""
    if data.X.shape[1] != model.weights.shape[0]:
        raise DimensionMismatch(
            f"data dimension {data.X.shape[1]} != model dimension {model.weights.shape[0]}"
        )
    return float(kernels.logistic_nll(model.weights, data.X, data.y, model.l2))


def gradient(model: RiskModel, data: LabeledDataset) -> np.ndarray:
    """Gradient of ``nll`` with respect to the weights (bias unpenalized)."""
    if data.X.shape[1] != model.weights.shape[0]:
        raise DimensionMismatch(
            f"data dimension {data.X.shape[1]} != model dimension {model.weights.shape[0]}"
        )
    return np.asarray(kernels.logistic_grad(model.weights, data.X, data.y, model.l2))


@dataclass
class TrainConfig:
    step0: float = 1.0
    max_iters: int = 5000
    tol: float = 1e-6
    l2: float = 1e-4


@dataclass
class TrainReport:
    iterations: int
    final_nll: float
    stop_reason: str  # converged | max_iters | no_decrease
    grad_inf_norm: float
    accuracy: float
    nll_history: list[float] = field(default_factory=list)


MAX_HALVINGS = 50


def train(data: LabeledDataset, cfg: TrainConfig | None = None) -> tuple[RiskModel, TrainReport]:
    """Gradient descent from zero weights with per-iteration step halving.

    Each iteration starts from cfg.step0 and halves the step until the
    candidate strictly decreases the NLL (up to 50 halvings, after which
    training stops), so the NLL over accepted iterations is strictly
    decreasing. Stops when the max-norm of the gradient falls below
    cfg.tol or max_iters is reached. Deterministic for fixed inputs.
    """
    cfg = cfg or TrainConfig()
    if len(data) == 0:
        raise ValueError("training data must be non-empty")
    if cfg.l2 == 0.0 and (np.all(data.y == 1.0) or np.all(data.y == 0.0)):
        raise DegenerateData("all labels identical and l2 = 0; set l2 > 0")

    dim = data.X.shape[1]
    w = np.zeros(dim)
    current = float(kernels.logistic_nll(w, data.X, data.y, cfg.l2))
    history = [current]
    stop_reason = "max_iters"
    iterations = 0
    grad = np.asarray(kernels.logistic_grad(w, data.X, data.y, cfg.l2))

    for _ in range(cfg.max_iters):
        if float(np.max(np.abs(grad))) < cfg.tol:
            stop_reason = "converged"
            break
        step = cfg.step0
        accepted = False
        for _halving in range(MAX_HALVINGS + 1):
            candidate = w - step * grad
            cand_nll = float(kernels.logistic_nll(candidate, data.X, data.y, cfg.l2))
            if cand_nll < current:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            stop_reason = "no_decrease"
            break
        w = candidate
        current = cand_nll
        history.append(current)
        iterations += 1
        grad = np.asarray(kernels.logistic_grad(w, data.X, data.y, cfg.l2))
    else:
        stop_reason = "max_iters"

    if stop_reason == "max_iters" and float(np.max(np.abs(grad))) < cfg.tol:
        stop_reason = "converged"

    model = RiskModel(weights=w, feature_spec_version=FEATURE_SPEC_VERSION, l2=cfg.l2)
    preds = data.X @ w >= 0.0
    accuracy = float(np.mean(preds == (data.y == 1.0)))
    report = TrainReport(
        iterations=iterations,
        final_nll=current,
        stop_reason=stop_reason,
        grad_inf_norm=float(np.max(np.abs(grad))),
        accuracy=accuracy,
        nll_history=history,
    )
    return model, report


# ---------------------------------------------------------------------------
# Model and dataset files
# ---------------------------------------------------------------------------


def save_model(model: RiskModel, path: str | Path) -> None:
    payload = {
        "feature_spec_version": model.feature_spec_version,
        "l2": model.l2,
        "weights": [float(v) for v in model.weights],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_model(path: str | Path) -> RiskModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = int(payload["feature_spec_version"])
    if version != FEATURE_SPEC_VERSION:
        raise ValueError(
            f"model feature_spec_version {version} is not supported "
            f"(this build understands {FEATURE_SPEC_VERSION})"
        )
    return RiskModel(
        weights=np.array(payload["weights"], dtype=np.float64),
        feature_spec_version=version,
        l2=float(payload["l2"]),
    )


def save_dataset(data: LabeledDataset, path: str | Path) -> None:
    """One example per line: label first, then the D features, comma-separated."""
    with open(path, "w", encoding="utf-8") as fh:
        for label, row in zip(data.y, data.X):
            fields = [str(int(label))] + [repr(float(v)) for v in row]
            fh.write(",".join(fields) + "\n")


def load_dataset(path: str | Path) -> LabeledDataset:
    labels: list[float] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                labels.append(float(parts[0]))
                rows.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ValueError(f"line {line_no}: {exc}") from None
    if not rows:
        raise ValueError("dataset file has no examples")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DimensionMismatch("examples have differing feature dimensions")
    return LabeledDataset(X=np.array(rows), y=np.array(labels))
