"""Classification head: scores, posteriors, loss, thresholded prediction."""

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor, _accumulate

CLAMP_EPS = 1e-7


def vectorize_pooled(pooled: Tensor) -> Tensor:
    """Column-major flattening of the pooled descriptor matrix (d_phi, T)
    to a vector of width d_phi*T; batched inputs keep their leading axis."""
    transposed = T.swap_last_axes(pooled)
    if pooled.ndim == 2:
        return T.reshape(transposed, (-1,))
    return T.reshape(transposed, (pooled.shape[0], -1))


def classify(pooled: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Class scores W @ vec(pooled) + b with W of shape (C, d_phi*T)."""
    vec = vectorize_pooled(pooled)
    if weight.shape[1] != vec.shape[-1]:
        raise ShapeError(f"classifier weight {weight.shape} does not match descriptor width {vec.shape}")
    return T.fc(vec, weight, bias)


def posteriors(scores: Tensor) -> Tensor:
    """Per-class probabilities sigmoid(z)."""
    return T.sigmoid(scores)


def bce_loss(probs: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy over all entries, with probabilities
    clamped to [eps, 1-eps]. This is the definitional form; training uses
    the logit-space version below."""
    y = Tensor(np.asarray(targets, dtype=probs.dtype))
    p = T.clip(probs, CLAMP_EPS, 1.0 - CLAMP_EPS)
    losses = y * T.log(p) + (1.0 - y) * T.log(1.0 - p)
    return T.neg(T.mean_all(losses))


def bce_with_logits_loss(scores: Tensor, targets) -> Tensor:
    """Numerically stable mean binary cross-entropy straight from logits.

    Uses max(z,0) - z*y + log1p(exp(-|z|)) per element; the gradient is
    (sigmoid(z) - y) / n.
    """
    z = scores.data
    y = np.asarray(targets, dtype=z.dtype)
    if y.shape != z.shape:
        raise ShapeError(f"targets {y.shape} do not match scores {z.shape}")
    elementwise = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out_data = np.asarray(elementwise.mean(), dtype=z.dtype)

    def _bw(g):
        from .tensor import _sigmoid

        _accumulate(scores, g * (_sigmoid(z) - y) / z.size)

    return Tensor(out_data, _parents=(scores,), _backward=_bw, _op="bce_with_logits")


def predict(probs, threshold: float = 0.5) -> np.ndarray:
    """Binary label vector: 1 where probability >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    p = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    return (p >= threshold).astype(np.uint8)
