"""A single LSTM layer: gated cell step, unrolled forward pass, and exact
backpropagation through time.

The cell follows the standard formulation: forget, input, and output
gates squash an affine map of the concatenated [previous hidden, input]
through a sigmoid; the candidate update and the hidden output go through
tanh:

    f = sigmoid(W_f [h, x] + b_f)
    i = sigmoid(W_i [h, x] + b_i)
    g = tanh   (W_c [h, x] + b_c)
    c' = f * c + i * g
    o = sigmoid(W_o [h, x] + b_o)
    h' = o * tanh(c')

All arrays are batch-first: a batch of B independent sequences is
processed at once, with states of shape (B, hidden) and inputs of shape
(B, T, input). A single sequence is just B = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_math import Rng, glorot_init, sigmoid, tanh
from .errors import EmptyInputError, ShapeError

__all__ = [
    "LstmLayerParams",
    "LstmStepState",
    "LstmStepCache",
    "lstm_step",
    "lstm_forward",
    "lstm_backward",
]


@dataclass
class LstmLayerParams:
    """Per-gate weight matrices (hidden x (hidden + input)) and biases."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_c: np.ndarray
    w_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]

    def weights(self):
        return [self.w_f, self.w_i, self.w_c, self.w_o]

    def biases(self):
        return [self.b_f, self.b_i, self.b_c, self.b_o]

    def arrays(self):
        return self.weights() + self.biases()

    def validate(self) -> None:
        h = self.w_f.shape[0]
        shape = self.w_f.shape
        if shape[1] <= h:
            raise ShapeError(f"weight shape {shape} leaves no input columns")
        for w in self.weights():
            if w.shape != shape:
                raise ShapeError(f"gate weight shapes differ: {w.shape} vs {shape}")
        for b in self.biases():
            if b.shape != (h,):
                raise ShapeError(f"gate bias shape {b.shape} does not match hidden size {h}")
        for a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise ShapeError("non-finite value in LSTM parameters")

    @classmethod
    def init(cls, hidden_size: int, input_size: int, rng: Rng) -> "LstmLayerParams":
        """Glorot-uniform weights, zero biases."""
        cols = hidden_size + input_size
        return cls(
            w_f=glorot_init(hidden_size, cols, rng),
            w_i=glorot_init(hidden_size, cols, rng),
            w_c=glorot_init(hidden_size, cols, rng),
            w_o=glorot_init(hidden_size, cols, rng),
            b_f=np.zeros(hidden_size),
            b_i=np.zeros(hidden_size),
            b_c=np.zeros(hidden_size),
            b_o=np.zeros(hidden_size),
        )

    @classmethod
    def zeros(cls, hidden_size: int, input_size: int) -> "LstmLayerParams":
        cols = hidden_size + input_size
        return cls(
            w_f=np.zeros((hidden_size, cols)),
            w_i=np.zeros((hidden_size, cols)),
            w_c=np.zeros((hidden_size, cols)),
            w_o=np.zeros((hidden_size, cols)),
            b_f=np.zeros(hidden_size),
            b_i=np.zeros(hidden_size),
            b_c=np.zeros(hidden_size),
            b_o=np.zeros(hidden_size),
        )


@dataclass
class LstmStepState:
    """Hidden and cell state after a step, each (batch, hidden)."""

    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, batch: int, hidden_size: int) -> "LstmStepState":
        return cls(hidden=np.zeros((batch, hidden_size)), cell=np.zeros((batch, hidden_size)))


@dataclass
class LstmStepCache:
    """Everything the backward pass needs from one forward step."""

    z: np.ndarray  # concatenated [h_prev, x], (B, hidden+input)
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray  # candidate update, tanh-activated
    o: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def _check_step_shapes(params: LstmLayerParams, prev: LstmStepState, x: np.ndarray):
    h, d = params.hidden_size, params.input_size
    if x.ndim != 2 or x.shape[1] != d:
        raise ShapeError(f"input shape {x.shape} does not match input size {d}")
    b = x.shape[0]
    if prev.hidden.shape != (b, h) or prev.cell.shape != (b, h):
        raise ShapeError(
            f"state shapes {prev.hidden.shape}/{prev.cell.shape} "
            f"do not match (batch={b}, hidden={h})"
        )


def lstm_step(
    params: LstmLayerParams,
    prev: LstmStepState,
    x: np.ndarray,
    gate_override: dict | None = None,
) -> tuple[LstmStepState, LstmStepCache]:
    """One gated cell update.

    `gate_override` is a test hook: a dict mapping gate names among
    {"f", "i", "o"} to fixed activation arrays, substituted for the
    computed sigmoids. It makes cell-memory properties (f=1, i=0 keeps
    the cell bit-exact) directly assertable; production code never
    passes it.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_step_shapes(params, prev, x)
    z = np.concatenate([prev.hidden, x], axis=1)

    f = sigmoid(z @ params.w_f.T + params.b_f)
    i = sigmoid(z @ params.w_i.T + params.b_i)
    g = tanh(z @ params.w_c.T + params.b_c)
    o = sigmoid(z @ params.w_o.T + params.b_o)
    if gate_override:
        f = np.broadcast_to(np.asarray(gate_override.get("f", f), dtype=np.float64), f.shape)
        i = np.broadcast_to(np.asarray(gate_override.get("i", i), dtype=np.float64), i.shape)
        o = np.broadcast_to(np.asarray(gate_override.get("o", o), dtype=np.float64), o.shape)

    c = f * prev.cell + i * g
    tanh_c = tanh(c)
    h = o * tanh_c
    state = LstmStepState(hidden=h, cell=c)
    cache = LstmStepCache(z=z, f=f, i=i, g=g, o=o, c_prev=prev.cell, c=c, tanh_c=tanh_c)
    return state, cache


def lstm_forward(
    params: LstmLayerParams,
    inputs: np.ndarray,
    init_state: LstmStepState | None = None,
    return_sequences: bool = True,
) -> tuple[np.ndarray, list[LstmStepCache]]:
    """Unroll the cell over a (batch, T, input) array.

    Returns (outputs, caches) where outputs is (batch, T, hidden) when
    `return_sequences` is set, else just the final hidden state
    (batch, hidden). The initial state defaults to zeros.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3:
        raise ShapeError(f"expected (batch, T, input) array, got shape {inputs.shape}")
    b, t_len, _ = inputs.shape
    if t_len == 0:
        raise EmptyInputError("cannot run an LSTM over an empty sequence")
    state = init_state if init_state is not None else LstmStepState.zeros(b, params.hidden_size)
    caches = []
    hiddens = np.empty((b, t_len, params.hidden_size))
    for t in range(t_len):
        state, cache = lstm_step(params, state, inputs[:, t, :])
        hiddens[:, t, :] = state.hidden
        caches.append(cache)
    if return_sequences:
        return hiddens, caches
    return state.hidden, caches


def lstm_backward(
    params: LstmLayerParams,
    caches: list[LstmStepCache],
    grad_outputs: np.ndarray,
) -> tuple[LstmLayerParams, np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients through an unrolled pass, weights shared across steps.

    `grad_outputs` must be shaped like the forward pass's outputs:
    (batch, T, hidden) for a return-sequences pass, or (batch, hidden)
    for a final-state-only pass (treated as a gradient on step T-1 with
    zeros elsewhere).

    Returns (param_grads, d_inputs, d_h0, d_c0) where param_grads is an
    LstmLayerParams holding the accumulated gradients and d_inputs is
    (batch, T, input).
    """
    t_len = len(caches)
    if t_len == 0:
        raise EmptyInputError("no cached steps to backpropagate through")
    h = params.hidden_size
    b = caches[0].z.shape[0]

    grad_outputs = np.asarray(grad_outputs, dtype=np.float64)
    if grad_outputs.shape == (b, t_len, h):
        seq_grads = grad_outputs
    elif grad_outputs.shape == (b, h):
        seq_grads = np.zeros((b, t_len, h))
        seq_grads[:, -1, :] = grad_outputs
    else:
        raise ShapeError(
            f"grad_outputs shape {grad_outputs.shape} matches neither "
            f"(batch={b}, T={t_len}, hidden={h}) nor (batch={b}, hidden={h})"
        )

    grads = LstmLayerParams.zeros(h, params.input_size)
    d_inputs = np.empty((b, t_len, params.input_size))
    dh_next = np.zeros((b, h))
    dc_next = np.zeros((b, h))
    for t in range(t_len - 1, -1, -1):
        cc = caches[t]
        if cc.z.shape != (b, h + params.input_size):
            raise ShapeError(f"cache at step {t} has shape {cc.z.shape}, expected {(b, h + params.input_size)}")
        dh = seq_grads[:, t, :] + dh_next
        dc = dh * cc.o * (1.0 - cc.tanh_c**2) + dc_next

        da_o = dh * cc.tanh_c * cc.o * (1.0 - cc.o)
        da_f = dc * cc.c_prev * cc.f * (1.0 - cc.f)
        da_i = dc * cc.g * cc.i * (1.0 - cc.i)
        da_g = dc * cc.i * (1.0 - cc.g**2)

        grads.w_f += da_f.T @ cc.z
        grads.w_i += da_i.T @ cc.z
        grads.w_c += da_g.T @ cc.z
        grads.w_o += da_o.T @ cc.z
        grads.b_f += da_f.sum(axis=0)
        grads.b_i += da_i.sum(axis=0)
        grads.b_c += da_g.sum(axis=0)
        grads.b_o += da_o.sum(axis=0)

        dz = da_f @ params.w_f + da_i @ params.w_i + da_g @ params.w_c + da_o @ params.w_o
        dh_next = dz[:, :h]
        d_inputs[:, t, :] = dz[:, h:]
        dc_next = dc * cc.f
    return grads, d_inputs, dh_next, dc_next
