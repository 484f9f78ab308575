"""Label-driven second feature path through a trained encoder stack.

Targets for every hidden layer are derived by pulling the one-hot labels
backward: the readout's pseudoinverse maps labels to top-layer targets,
and each encoder's pseudoinverse composed with the clamped inverse
activation maps a layer's target one layer down. A fresh weight stack of
the same shape is then refit front to back against those targets, so its
features are shaped by the labels instead of by reconstruction.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .forward import ForwardModel
from .linalg import (
    Activation,
    activate,
    activate_inverse,
    as_matrix,
    pinv,
    ridge_solve,
)


@dataclass(frozen=True)
class BackwardModel:
    """Label-refit weight stack; the last weight is the class readout."""

    weights: tuple[np.ndarray, ...]
    activation: Activation

    def __post_init__(self):
        if len(self.weights) < 2:
            raise DimensionError(
                "backward model needs at least one hidden layer plus a readout"
            )
        for k in range(1, len(self.weights)):
            prev = self.weights[k - 1]
            cur = self.weights[k]
            if cur.shape[1] != prev.shape[0]:
                raise DimensionError(
                    f"weight {k + 1} expects {cur.shape[1]} inputs but weight "
                    f"{k} produces {prev.shape[0]}"
                )

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    @property
    def layer_widths(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[0]


def backward_targets(fm: ForwardModel, t) -> list[np.ndarray]:
    """Per-layer feature targets pulled back from the labels.

    Returns [B^1 .. B^depth]: the top target solves the readout against t
    in the least-squares sense, and each earlier one inverts one encoder
    layer (clamped inverse activation, then pseudoinverse). Clamping
    keeps every target finite no matter how far outside the activation
    range the least-squares targets land.
    """
    t = as_matrix(t, "t")
    if t.shape[0] != fm.n_classes:
        raise DimensionError(
            f"t has {t.shape[0]} classes but the model readout has {fm.n_classes}"
        )
    targets = [pinv(fm.output_weight) @ t]
    for w_e in fm.encoder_weights[:0:-1]:
        targets.append(pinv(w_e) @ activate_inverse(fm.activation, targets[-1]))
    targets.reverse()
    return targets


def train_backward(x, t, fm: ForwardModel, lam: float = 1e-3) -> BackwardModel:
    """Refit a same-shape weight stack against the backward targets.

    Weights are fit front to back by ridge least squares; each layer's
    input is the recomputed activation through the already-refit weights,
    and the final readout is fit against the labels themselves. lam = 0
    recovers plain pseudoinverse fits.
    """
    x = as_matrix(x, "x")
    t = as_matrix(t, "t")
    if x.shape[0] != fm.input_dim:
        raise DimensionError(
            f"x has {x.shape[0]} rows but the model expects {fm.input_dim}"
        )
    if x.shape[1] != t.shape[1]:
        raise DimensionError(
            f"x has {x.shape[1]} samples but t has {t.shape[1]}"
        )
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    targets = backward_targets(fm, t)
    weights = []
    h = x
    for target in targets:
        w = ridge_solve(h, target, lam)
        weights.append(w)
        h = activate(fm.activation, w @ h)
    weights.append(ridge_solve(h, t, lam))
    return BackwardModel(weights=tuple(weights), activation=fm.activation)


def backward_features(bm: BackwardModel, x) -> list[np.ndarray]:
    """Hidden activations of the backward-weight network."""
    x = as_matrix(x, "x")
    if x.shape[0] != bm.input_dim:
        raise DimensionError(
            f"input has {x.shape[0]} rows but model expects {bm.input_dim}"
        )
    feats = []
    h = x
    for w in bm.weights[:-1]:
        h = activate(bm.activation, w @ h)
        feats.append(h)
    return feats


def backward_predict(bm: BackwardModel, x) -> np.ndarray:
    """Raw class scores from the backward network."""
    return bm.weights[-1] @ backward_features(bm, x)[-1]
