"""Supervised comparators: a small tanh MLP and a class-weighted max-margin linear model.

Both train on the same downsampled datasets as the agents and expose the same
predict/alarm_scores surface, so the evaluation harness treats all models alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .env import Normalizer
from .ingest import BinaryLabel, Dataset
from .nn import (
    Adam,
    DenseNet,
    weighted_cross_entropy,
    weighted_cross_entropy_logit_grad,
)
from .sampling import SamplingStrategy, apply_downsampling

MLP_HIDDEN_SIZES = (20, 4)
MLP_EPOCH_CAP = 5000
MLP_LR = 0.001
CONVERGENCE_REL_TOL = 1e-6
CONVERGENCE_PATIENCE = 20  # consecutive epochs below the tolerance


class DegenerateDataError(ValueError):
    """Training data holding a single class cannot fit a discriminator."""


def _check_two_classes(y: np.ndarray) -> None:
    present = np.unique(y)
    if len(present) < 2:
        raise DegenerateDataError(f"training data contains a single class: {present.tolist()}")


def default_class_weights(strategy: SamplingStrategy) -> tuple[float, float]:
    """(non-alarm weight, alarm weight) matched to the downsampling range."""
    if strategy.kind == "n3":
        return (1.0, 20.0)
    if strategy.kind == "n10":
        return (1.0, 40.0)
    return (1.0, 1.0)


def balanced_class_weights(y) -> tuple[float, float]:
    """n_total / (2 * n_class) per class, so classes contribute equal total mass."""
    y = np.asarray(y, dtype=int)
    _check_two_classes(y)
    n = len(y)
    return (n / (2.0 * (y == 0).sum()), n / (2.0 * (y == 1).sum()))


def fit_mlp(
    X,
    y,
    class_weights=(1.0, 1.0),
    seed: int = 0,
    lr: float = MLP_LR,
    epoch_cap: int = MLP_EPOCH_CAP,
    rel_tol: float = CONVERGENCE_REL_TOL,
    patience: int = CONVERGENCE_PATIENCE,
) -> tuple[DenseNet, list[float]]:
    """Full-batch Adam on class-weighted cross-entropy until the loss plateaus.

    Stops once the relative epoch-loss improvement stays below rel_tol for
    `patience` consecutive epochs, or at epoch_cap.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    _check_two_classes(y)
    weights = np.asarray(class_weights, dtype=float)
    net = DenseNet([X.shape[1], *MLP_HIDDEN_SIZES, 2], ["tanh", "tanh", "softmax"], seed=seed)
    optimizer = Adam(lr)
    history: list[float] = []
    previous = None
    streak = 0
    for _ in range(epoch_cap):
        probs, cache = net.forward_cached(X)
        loss = weighted_cross_entropy(probs, y, weights)
        grads = net.backward(cache, weighted_cross_entropy_logit_grad(probs, y, weights), wrt="logits")
        optimizer.step(net.parameters(), grads)
        history.append(loss)
        if previous is not None:
            improvement = (previous - loss) / max(abs(previous), 1e-12)
            streak = streak + 1 if improvement < rel_tol else 0
            if streak >= patience:
                break
        previous = loss
    return net, history


@dataclass
class MLPClassifier:
    net: DenseNet
    normalizer: Normalizer
    loss_history: list[float] = field(default_factory=list, repr=False)

    kind: ClassVar[str] = "mlp"

    def alarm_scores(self, vitals_matrix) -> np.ndarray:
        probs = self.net.forward(self.normalizer.transform(np.atleast_2d(vitals_matrix)))
        return probs[:, 1]

    def predict(self, vitals_matrix) -> np.ndarray:
        # a 0.5 tie goes to non-alarm
        return (self.alarm_scores(vitals_matrix) > 0.5).astype(int)

    def classify(self, state_vector) -> tuple[BinaryLabel, float]:
        score = float(self.alarm_scores(np.atleast_2d(state_vector))[0])
        return BinaryLabel(int(score > 0.5)), score

    def to_checkpoint_obj(self, epoch: int = 0) -> dict:
        return {
            "kind": self.kind,
            "epoch": int(epoch),
            "normalizer": self.normalizer.to_json_obj(),
            "networks": {"net": self.net.to_json_obj()},
        }

    @classmethod
    def from_checkpoint_obj(cls, obj: dict) -> "MLPClassifier":
        return cls(
            net=DenseNet.from_json_obj(obj["networks"]["net"]),
            normalizer=Normalizer.from_json_obj(obj["normalizer"]),
        )


def mlp_train(
    dataset: Dataset,
    strategy: SamplingStrategy,
    class_weights: tuple[float, float] | None = None,
    seed: int = 0,
    normalize: bool = True,
    **fit_kwargs,
) -> MLPClassifier:
    """Downsample, normalize, and fit the two-hidden-layer tanh classifier."""
    downsampled = apply_downsampling(dataset, strategy)
    if len(downsampled) == 0:
        raise ValueError("downsampling removed every event")
    if class_weights is None:
        class_weights = default_class_weights(strategy)
    normalizer = Normalizer.fit(downsampled) if normalize else Normalizer.identity()
    X = normalizer.transform(downsampled.vitals_matrix())
    net, history = fit_mlp(X, downsampled.labels(), class_weights, seed=seed, **fit_kwargs)
    return MLPClassifier(net=net, normalizer=normalizer, loss_history=history)


LINEAR_ITERATIONS = 2000
LINEAR_LR = 0.5


def fit_linear_margin(
    X,
    y,
    class_weights: tuple[float, float] | None = None,
    C: float = 1.0,
    iterations: int = LINEAR_ITERATIONS,
    lr: float = LINEAR_LR,
) -> tuple[np.ndarray, float, list[float]]:
    """Full-batch subgradient descent on L2-regularized class-weighted hinge loss.

    Objective: (1 / 2C) * ||w||^2 + mean_i cw_i * max(0, 1 - y_i (w.x_i + b)),
    with y in {-1, +1}. Deterministic: zero init, fixed decaying step sizes.
    class_weights None means balanced (n_total / (2 n_class)).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    _check_two_classes(y)
    if class_weights is None:
        class_weights = balanced_class_weights(y)
    sample_weights = np.asarray(class_weights, dtype=float)[y]
    y_signed = np.where(y == 1, 1.0, -1.0)
    lam = 1.0 / (2.0 * C)
    w = np.zeros(X.shape[1])
    b = 0.0
    history: list[float] = []
    for t in range(iterations):
        margins = y_signed * (X @ w + b)
        slack = np.maximum(0.0, 1.0 - margins)
        history.append(float(lam * (w @ w) + (sample_weights * slack).mean()))
        active = (margins < 1.0) * sample_weights
        grad_w = 2.0 * lam * w - (X * (active * y_signed)[:, None]).mean(axis=0)
        grad_b = -(active * y_signed).mean()
        step = lr / (1.0 + 4.0 * t / iterations)
        w -= step * grad_w
        b -= step * grad_b
    return w, float(b), history


@dataclass
class LinearMarginClassifier:
    w: np.ndarray
    b: float
    normalizer: Normalizer
    loss_history: list[float] = field(default_factory=list, repr=False)

    kind: ClassVar[str] = "svm"

    def alarm_scores(self, vitals_matrix) -> np.ndarray:
        """Signed margin; positive means alarm. Unbounded, used for ranking."""
        X = self.normalizer.transform(np.atleast_2d(vitals_matrix))
        return X @ self.w + self.b

    def predict(self, vitals_matrix) -> np.ndarray:
        # a zero margin goes to non-alarm
        return (self.alarm_scores(vitals_matrix) > 0.0).astype(int)

    def classify(self, state_vector) -> tuple[BinaryLabel, float]:
        margin = float(self.alarm_scores(np.atleast_2d(state_vector))[0])
        return BinaryLabel(int(margin > 0.0)), margin

    def to_checkpoint_obj(self, epoch: int = 0) -> dict:
        return {
            "kind": self.kind,
            "epoch": int(epoch),
            "normalizer": self.normalizer.to_json_obj(),
            "weights": self.w.tolist(),
            "bias": self.b,
        }

    @classmethod
    def from_checkpoint_obj(cls, obj: dict) -> "LinearMarginClassifier":
        return cls(
            w=np.asarray(obj["weights"], dtype=float),
            b=float(obj["bias"]),
            normalizer=Normalizer.from_json_obj(obj["normalizer"]),
        )


def linear_margin_train(
    dataset: Dataset,
    strategy: SamplingStrategy,
    seed: int = 0,
    C: float = 1.0,
    normalize: bool = True,
    **fit_kwargs,
) -> LinearMarginClassifier:
    """Downsample, normalize, and fit the balanced-weight linear margin model.

    Training is deterministic; `seed` is accepted for interface parity.
    """
    del seed
    downsampled = apply_downsampling(dataset, strategy)
    if len(downsampled) == 0:
        raise ValueError("downsampling removed every event")
    normalizer = Normalizer.fit(downsampled) if normalize else Normalizer.identity()
    X = normalizer.transform(downsampled.vitals_matrix())
    w, b, history = fit_linear_margin(X, downsampled.labels(), class_weights=None, C=C, **fit_kwargs)
    return LinearMarginClassifier(w=w, b=b, normalizer=normalizer, loss_history=history)


def classify(classifier, state_vector) -> tuple[BinaryLabel, float]:
    """(label, score) for one raw vitals vector."""
    return classifier.classify(state_vector)
