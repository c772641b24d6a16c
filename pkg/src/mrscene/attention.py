"""Multi-score attention pooling of the patch descriptor matrix.

The descriptor matrix holds one column per patch. Two bias-free layers
(tanh then row softmax) produce a score matrix with one row per attention
head, each row a distribution over patches; pooling takes the rectified
product of the descriptor matrix with the transposed scores.
"""

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


def attention_scores(omega: Tensor, w_hidden: Tensor, w_heads: Tensor) -> Tensor:
    """Score matrix softmax_rows(w_heads @ tanh(w_hidden @ omega)).

    omega: (d_phi, R) or batched (B, d_phi, R); w_hidden: (d_a, d_phi);
    w_heads: (T, d_a). No bias terms anywhere. Each of the T rows is a
    softmax-normalized weighting over the R patches.
    """
    if w_hidden.shape[1] != omega.shape[-2]:
        raise ShapeError(f"attention hidden weight {w_hidden.shape} does not match descriptors {omega.shape}")
    if w_heads.shape[1] != w_hidden.shape[0]:
        raise ShapeError(f"attention head weight {w_heads.shape} does not match hidden {w_hidden.shape}")
    return T.softmax_rows(T.matmul(w_heads, T.tanh(T.matmul(w_hidden, omega))))


def pool_descriptors(omega: Tensor, scores: Tensor) -> Tensor:
    """Rectified attention-weighted pooling max(0, omega @ scores^T).

    Column t of the result is the scores-row-t weighted average of patch
    descriptors, clipped at zero. Shape (d_phi, T), batched if omega is.
    """
    if omega.shape[-1] != scores.shape[-1]:
        raise ShapeError(f"descriptors {omega.shape} and scores {scores.shape} disagree on patch count")
    return T.relu(T.matmul(omega, T.swap_last_axes(scores)))
