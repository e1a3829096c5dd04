"""Numerical core: activations, binary cross-entropy, an LSTM cell with
exact backpropagation through time, bidirectional composition, dense
layers, Adam, and a central finite-difference gradient oracle.

Everything is plain numpy. Training runs in float32 by default; gradient
verification runs the same code in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_EPS = 1e-7  # probability clamp used by the loss and by predictions


class NumericError(RuntimeError):
    """Raised when training hits a non-finite loss or gradient."""


def sigmoid(x):
    """Numerically stable logistic function.

    Uses exp(-|x|) only, so it cannot overflow, and satisfies
    sigmoid(-x) + sigmoid(x) == 1 exactly.
    """
    x = np.asarray(x)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    if out.ndim == 0:
        return float(out)
    return out


def bce(probabilities, labels) -> float:
    """Mean binary cross-entropy with probabilities clamped away from {0, 1}."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


@dataclass
class LstmCellParams:
    """One LSTM cell. Gate order in the stacked 4h dimension is fixed:
    input, forget, candidate, output."""

    w_in: np.ndarray  # (4h, d)
    w_rec: np.ndarray  # (4h, h)
    bias: np.ndarray  # (4h,)

    def __post_init__(self):
        four_h, _ = self.w_in.shape
        if four_h % 4 != 0:
            raise ValueError(f"first weight dimension must be 4*h, got {four_h}")
        h = four_h // 4
        if self.w_rec.shape != (four_h, h) or self.bias.shape != (four_h,):
            raise ValueError(
                f"inconsistent LSTM shapes: w_in {self.w_in.shape}, "
                f"w_rec {self.w_rec.shape}, bias {self.bias.shape}"
            )

    @property
    def hidden_size(self) -> int:
        return self.w_in.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.w_in.shape[1]


def init_lstm_params(input_size, hidden_size, rng, dtype=np.float32) -> LstmCellParams:
    """Uniform +-1/sqrt(h) weights, zero biases."""
    bound = 1.0 / np.sqrt(hidden_size)
    w_in = rng.uniform(-bound, bound, (4 * hidden_size, input_size)).astype(dtype)
    w_rec = rng.uniform(-bound, bound, (4 * hidden_size, hidden_size)).astype(dtype)
    bias = np.zeros(4 * hidden_size, dtype=dtype)
    return LstmCellParams(w_in, w_rec, bias)


def lstm_cell_step(x, h_prev, c_prev, params: LstmCellParams):
    """One gated update: c' = f*c + i*g, h' = o*tanh(c')."""
    x = np.asarray(x)
    h_prev = np.asarray(h_prev)
    c_prev = np.asarray(c_prev)
    h = params.hidden_size
    if x.shape != (params.input_size,) or h_prev.shape != (h,) or c_prev.shape != (h,):
        raise ValueError(
            f"shape mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for cell with d={params.input_size}, h={h}"
        )
    z = params.w_in @ x + params.w_rec @ h_prev + params.bias
    i = sigmoid(z[:h])
    f = sigmoid(z[h : 2 * h])
    g = np.tanh(z[2 * h : 3 * h])
    o = sigmoid(z[3 * h :])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def lstm_forward(inputs, params: LstmCellParams):
    """Scan a batch of sequences; returns (states (B,L,h), cache for backward)."""
    inputs = np.asarray(inputs)
    batch, length, d = inputs.shape
    if d != params.input_size:
        raise ValueError(f"input size {d} does not match cell input size {params.input_size}")
    h = params.hidden_size
    dtype = inputs.dtype
    gates_i = np.empty((batch, length, h), dtype=dtype)
    gates_f = np.empty_like(gates_i)
    gates_g = np.empty_like(gates_i)
    gates_o = np.empty_like(gates_i)
    cells = np.empty_like(gates_i)
    states = np.empty_like(gates_i)
    h_prev = np.zeros((batch, h), dtype=dtype)
    c_prev = np.zeros((batch, h), dtype=dtype)
    for t in range(length):
        z = inputs[:, t] @ params.w_in.T + h_prev @ params.w_rec.T + params.bias
        i = sigmoid(z[:, :h])
        f = sigmoid(z[:, h : 2 * h])
        g = np.tanh(z[:, 2 * h : 3 * h])
        o = sigmoid(z[:, 3 * h :])
        c = f * c_prev + i * g
        h_prev = o * np.tanh(c)
        c_prev = c
        gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t] = i, f, g, o
        cells[:, t] = c
        states[:, t] = h_prev
    cache = (inputs, gates_i, gates_f, gates_g, gates_o, cells, states)
    return states, cache


def lstm_backward(d_states, cache, params: LstmCellParams):
    """Exact BPTT given dLoss/d h_t for every timestep (zeros where unused).

    Returns (d_inputs (B,L,d), grads dict with keys w_in/w_rec/bias).
    """
    inputs, gates_i, gates_f, gates_g, gates_o, cells, states = cache
    batch, length, h = states.shape
    dtype = inputs.dtype
    d_inputs = np.zeros_like(inputs)
    d_w_in = np.zeros_like(params.w_in)
    d_w_rec = np.zeros_like(params.w_rec)
    d_bias = np.zeros_like(params.bias)
    dh_next = np.zeros((batch, h), dtype=dtype)
    dc_next = np.zeros((batch, h), dtype=dtype)
    for t in reversed(range(length)):
        i, f, g, o = gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t]
        tanh_c = np.tanh(cells[:, t])
        c_prev = cells[:, t - 1] if t > 0 else np.zeros((batch, h), dtype=dtype)
        h_prev = states[:, t - 1] if t > 0 else np.zeros((batch, h), dtype=dtype)
        dh = d_states[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tanh_c**2)
        dz_o = dh * tanh_c * o * (1.0 - o)
        dz_i = dc * g * i * (1.0 - i)
        dz_f = dc * c_prev * f * (1.0 - f)
        dz_g = dc * i * (1.0 - g**2)
        dz = np.concatenate((dz_i, dz_f, dz_g, dz_o), axis=1)  # (B, 4h)
        d_w_in += dz.T @ inputs[:, t]
        d_w_rec += dz.T @ h_prev
        d_bias += dz.sum(axis=0)
        d_inputs[:, t] = dz @ params.w_in
        dh_next = dz @ params.w_rec
        dc_next = dc * f
    return d_inputs, {"w_in": d_w_in, "w_rec": d_w_rec, "bias": d_bias}


def bilstm_batch_forward(inputs, forward_params, backward_params, mode="final"):
    """Run both directions over a batch.

    mode="final": features are the concatenated final hidden states (B, 2h).
    mode="flatten": per-position concatenation flattened to (B, 2h*L).
    """
    if mode not in ("final", "flatten"):
        raise ValueError(f"unknown sequence representation {mode!r}")
    states_fwd, cache_fwd = lstm_forward(inputs, forward_params)
    states_bwd_rev, cache_bwd = lstm_forward(inputs[:, ::-1], backward_params)
    if mode == "final":
        features = np.concatenate((states_fwd[:, -1], states_bwd_rev[:, -1]), axis=1)
    else:
        batch, length, h = states_fwd.shape
        aligned_bwd = states_bwd_rev[:, ::-1]
        features = np.concatenate((states_fwd, aligned_bwd), axis=2).reshape(batch, 2 * h * length)
    return features, (cache_fwd, cache_bwd)


def bilstm_batch_backward(d_features, caches, forward_params, backward_params, mode="final"):
    cache_fwd, cache_bwd = caches
    states_fwd = cache_fwd[6]
    states_bwd = cache_bwd[6]
    batch, length, h_fwd = states_fwd.shape
    h_bwd = states_bwd.shape[2]
    if mode == "final":
        d_states_fwd = np.zeros_like(states_fwd)
        d_states_fwd[:, -1] = d_features[:, :h_fwd]
        d_states_bwd_rev = np.zeros_like(states_bwd)
        d_states_bwd_rev[:, -1] = d_features[:, h_fwd:]
    else:
        d_all = d_features.reshape(batch, length, h_fwd + h_bwd)
        d_states_fwd = np.ascontiguousarray(d_all[:, :, :h_fwd])
        d_states_bwd_rev = np.ascontiguousarray(d_all[:, ::-1, h_fwd:])
    d_in_fwd, grads_fwd = lstm_backward(d_states_fwd, cache_fwd, forward_params)
    d_in_bwd_rev, grads_bwd = lstm_backward(d_states_bwd_rev, cache_bwd, backward_params)
    d_inputs = d_in_fwd + d_in_bwd_rev[:, ::-1]
    return d_inputs, grads_fwd, grads_bwd


def bilstm_forward(sequence, forward_params, backward_params, mode="final") -> np.ndarray:
    """Single-sequence convenience wrapper: (L, d) -> (2h,) or (2h*L,)."""
    sequence = np.asarray(sequence)
    if sequence.ndim != 2 or sequence.shape[0] < 1:
        raise ValueError(f"expected a (L, d) sequence with L >= 1, got shape {sequence.shape}")
    features, _ = bilstm_batch_forward(sequence[None], forward_params, backward_params, mode)
    return features[0]


DENSE_ACTIVATIONS = ("identity", "sigmoid", "relu")


@dataclass
class DenseParams:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in DENSE_ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent dense shapes: weights {self.weights.shape}, bias {self.bias.shape}"
            )


def init_dense_params(input_size, output_size, rng, activation="identity", dtype=np.float32):
    bound = 1.0 / np.sqrt(input_size)
    weights = rng.uniform(-bound, bound, (output_size, input_size)).astype(dtype)
    bias = np.zeros(output_size, dtype=dtype)
    return DenseParams(weights, bias, activation)


def dense_forward(x, params: DenseParams):
    x = np.asarray(x)
    if x.shape[-1] != params.weights.shape[1]:
        raise ValueError(
            f"input size {x.shape[-1]} does not match dense input {params.weights.shape[1]}"
        )
    z = x @ params.weights.T + params.bias
    if params.activation == "identity":
        y = z
    elif params.activation == "sigmoid":
        y = sigmoid(z)
    else:
        y = np.maximum(z, 0.0)
    return y, (x, y)


def dense_backward(d_out, cache, params: DenseParams):
    x, y = cache
    if params.activation == "identity":
        dz = d_out
    elif params.activation == "sigmoid":
        dz = d_out * y * (1.0 - y)
    else:
        dz = d_out * (y > 0)
    d_weights = dz.T @ x
    d_bias = dz.sum(axis=0)
    d_x = dz @ params.weights
    return d_x, d_weights, d_bias


@dataclass
class AdamState:
    """Per-parameter moment accumulators for bias-corrected Adam."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict = None
    second_moment: dict = None

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = {}
        if self.second_moment is None:
            self.second_moment = {}


def adam_step(params: dict, grads: dict, state: AdamState):
    """Apply one bias-corrected Adam update in place.

    Raises NumericError on any non-finite gradient (training aborts rather
    than silently diverging).
    """
    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for name, grad in grads.items():
        param = params[name]
        if grad.shape != param.shape:
            raise ValueError(f"gradient shape {grad.shape} != param shape {param.shape} ({name})")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        m = state.first_moment.setdefault(name, np.zeros_like(param))
        v = state.second_moment.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad**2
        m_hat = m / correction1
        v_hat = v / correction2
        param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def finite_diff_grad(f, params, step: float = 1e-5):
    """Central finite differences of a scalar function, coordinate by
    coordinate. `params` is an ndarray or a dict of ndarrays; `f` is
    called on the same (temporarily perturbed) object and must be pure.
    """
    if isinstance(params, np.ndarray):
        wrapped = {"_": params}
        return _finite_diff_dict(lambda p: f(p["_"]), wrapped, step)["_"]
    return _finite_diff_dict(f, params, step)


def _finite_diff_dict(f, params, step):
    grads = {}
    for name, tensor in params.items():
        grad = np.zeros(tensor.shape, dtype=np.float64)
        flat = tensor.reshape(-1)
        grad_flat = grad.reshape(-1)
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + step
            f_plus = f(params)
            flat[idx] = saved - step
            f_minus = f(params)
            flat[idx] = saved
            grad_flat[idx] = (f_plus - f_minus) / (2.0 * step)
        grads[name] = grad
    return grads
