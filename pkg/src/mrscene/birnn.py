"""Bidirectional LSTM over the patch sequence.

One pass walks the patches in row-major order, the other in reverse; each
patch descriptor is replaced by the concatenation of the two hidden states
so that it reflects the neighbourhoods on both sides.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import UsageError
from .init import xavier_init
from .tensor import Tensor


@dataclass
class LstmParams:
    """Gate parameters of one direction: input weights W_* (hidden x d_in),
    recurrent weights U_* (hidden x hidden), biases b_* (hidden)."""

    W_f: Tensor
    W_i: Tensor
    W_o: Tensor
    W_c: Tensor
    U_f: Tensor
    U_i: Tensor
    U_o: Tensor
    U_c: Tensor
    b_f: Tensor
    b_i: Tensor
    b_o: Tensor
    b_c: Tensor

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    def named(self, prefix: str):
        for gate in "fioc":
            yield f"{prefix}.W_{gate}", getattr(self, f"W_{gate}")
            yield f"{prefix}.U_{gate}", getattr(self, f"U_{gate}")
            yield f"{prefix}.b_{gate}", getattr(self, f"b_{gate}")


def make_lstm_params(d_in: int, hidden: int, seed: int, prefix: str, dtype=np.float32) -> LstmParams:
    kwargs = {}
    for gate in "fioc":
        kwargs[f"W_{gate}"] = xavier_init((hidden, d_in), seed, f"{prefix}.W_{gate}", dtype)
        kwargs[f"U_{gate}"] = xavier_init((hidden, hidden), seed, f"{prefix}.U_{gate}", dtype)
        kwargs[f"b_{gate}"] = xavier_init((hidden,), seed, f"{prefix}.b_{gate}", dtype)
    return LstmParams(**kwargs)


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams) -> tuple:
    """One LSTM step.

    forget = sigm(W_f x + U_f h + b_f), input and output gates likewise;
    cell   = forget * c_prev + input * tanh(W_c x + U_c h + b_c);
    hidden = output * tanh(cell).
    """
    f = T.sigmoid(T.fc(x, p.W_f, p.b_f) + T.fc(h_prev, p.U_f))
    i = T.sigmoid(T.fc(x, p.W_i, p.b_i) + T.fc(h_prev, p.U_i))
    o = T.sigmoid(T.fc(x, p.W_o, p.b_o) + T.fc(h_prev, p.U_o))
    c = f * c_prev + i * T.tanh(T.fc(x, p.W_c, p.b_c) + T.fc(h_prev, p.U_c))
    h = o * T.tanh(c)
    return h, c


def _params_for_step(params, r: int, length: int):
    if isinstance(params, LstmParams):
        return params
    if len(params) != length:
        raise UsageError(f"per-position mode needs {length} parameter sets, got {len(params)}")
    return params[r]


def _zero_state(template: Tensor, hidden: int) -> Tensor:
    shape = template.shape[:-1] + (hidden,)
    return Tensor(np.zeros(shape, dtype=template.dtype))


def bidirectional_pass(descriptors, fwd, bwd) -> list:
    """Run both directions over the descriptor sequence and concatenate.

    ``descriptors`` is a sequence of tensors (d_in,) or batched (B, d_in).
    ``fwd``/``bwd`` are either a shared LstmParams or one per position.
    Both directions start from zero hidden and cell states. Element r of
    the result is [h_forward_r ; h_backward_r], width 2*hidden.
    """
    descriptors = list(descriptors)
    n = len(descriptors)
    if n < 1:
        raise UsageError("bidirectional_pass needs at least one descriptor")

    hidden = (fwd if isinstance(fwd, LstmParams) else fwd[0]).hidden
    h = _zero_state(descriptors[0], hidden)
    c = _zero_state(descriptors[0], hidden)
    forward_states = []
    for r in range(n):
        h, c = lstm_cell(descriptors[r], h, c, _params_for_step(fwd, r, n))
        forward_states.append(h)

    h = _zero_state(descriptors[0], hidden)
    c = _zero_state(descriptors[0], hidden)
    backward_states = [None] * n
    for r in range(n - 1, -1, -1):
        h, c = lstm_cell(descriptors[r], h, c, _params_for_step(bwd, r, n))
        backward_states[r] = h

    return [T.concat([forward_states[r], backward_states[r]], axis=-1) for r in range(n)]
