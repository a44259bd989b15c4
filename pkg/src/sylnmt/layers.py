"""Parameterized layers with forward passes and hand-derived backward passes.

Every layer follows the same protocol::

    y, tape = layer.forward(x, train=False, rng=None)
    dx, grads = layer.backward(tape, dy)

The tape holds whatever the backward pass needs, so a layer object is never
mutated by forward/backward and several tapes can coexist. ``grads`` maps
parameter names to arrays shaped like ``layer.params``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .numcore import WORK_DTYPE, init_params, make_rng, sigmoid, softmax


class LayerError(ValueError):
    pass


class DimMismatch(LayerError):
    pass


class IdOutOfRange(LayerError):
    pass


class EmptySequence(LayerError):
    pass


class MissingTape(LayerError):
    pass


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


class Layer:
    params: dict[str, np.ndarray]

    @property
    def num_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def astype(self, dtype):
        for k, v in self.params.items():
            self.params[k] = v.astype(dtype)
        return self

    def zero_grads(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}


class Embedding(Layer):
    def __init__(self, vocab_size: int, dim: int, seed=0):
        self.vocab_size, self.dim = vocab_size, dim
        self.params = {"table": init_params((vocab_size, dim), "glorot_uniform", seed)}

    def forward(self, ids, train=False, rng=None):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise IdOutOfRange(f"ids must lie in [0, {self.vocab_size})")
        return self.params["table"][ids], ids

    def backward(self, tape, dy):
        if tape is None:
            raise MissingTape("Embedding.backward called without a forward tape")
        dtable = np.zeros_like(self.params["table"])
        np.add.at(dtable, tape.reshape(-1), dy.reshape(-1, self.dim))
        return None, {"table": dtable}


class Dense(Layer):
    """Position-wise affine map ``y = x W + b`` over the last axis."""

    def __init__(self, d_in: int, d_out: int, seed=0):
        self.d_in, self.d_out = d_in, d_out
        self.params = {
            "W": init_params((d_in, d_out), "glorot_uniform", seed),
            "b": init_params((d_out,), "zeros"),
        }

    def forward(self, x, train=False, rng=None):
        if x.shape[-1] != self.d_in:
            raise DimMismatch(f"Dense expects trailing dim {self.d_in}, got {x.shape[-1]}")
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, tape, dy):
        if tape is None:
            raise MissingTape("Dense.backward called without a forward tape")
        x = tape
        x2 = x.reshape(-1, self.d_in)
        dy2 = dy.reshape(-1, self.d_out)
        grads = {"W": x2.T @ dy2, "b": dy2.sum(axis=0)}
        return dy @ self.params["W"].T, grads


def dropout_forward(x, rate: float, mode: str = "train", seed=0):
    """Inverted dropout. Identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if mode == "eval" or rate == 0.0:
        return x, None
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * keep, keep


class Dropout(Layer):
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.params = {}

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            return x, ("identity",)
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        y, keep = dropout_forward(x, self.rate, "train", rng)
        return y, ("mask", keep)

    def backward(self, tape, dy):
        if tape is None:
            raise MissingTape("Dropout.backward called without a forward tape")
        if tape[0] == "identity":
            return dy, {}
        return dy * tape[1], {}


class _LstmTape(NamedTuple):
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    gates: np.ndarray
    tanh_c: np.ndarray
    mask: np.ndarray | None


class LSTM(Layer):
    """Single-direction LSTM over ``(B, T, d_in)`` batches.

    The four gate matrices act on ``[h_{t-1}, x_t]`` and are stored side by
    side in one ``(d_h + d_in, 4 d_h)`` matrix, gate order input, forget,
    output, candidate. Rows ``[:d_h]`` multiply the recurrent state.
    """

    GATES = ("i", "f", "o", "c")

    def __init__(self, d_in: int, d_h: int, seed=0):
        self.d_in, self.d_h = d_in, d_h
        rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
        blocks = [init_params((d_h + d_in, d_h), "glorot_uniform", rng) for _ in range(4)]
        b = np.zeros(4 * d_h, dtype=WORK_DTYPE)
        b[d_h:2 * d_h] = 1.0  # forget gate
        self.params = {"W": np.concatenate(blocks, axis=1), "b": b}

    def gate_weights(self, gate: str):
        k = self.GATES.index(gate)
        sl = slice(k * self.d_h, (k + 1) * self.d_h)
        return self.params["W"][:, sl], self.params["b"][sl]

    def zero_state(self, batch: int) -> LstmState:
        dt = self.params["W"].dtype
        return LstmState(np.zeros((batch, self.d_h), dt), np.zeros((batch, self.d_h), dt))

    def step(self, x_t, prev: LstmState) -> LstmState:
        """One cell update for a ``(B, d_in)`` input."""
        W, b = self.params["W"], self.params["b"]
        if x_t.shape[-1] != self.d_in or prev.h.shape[-1] != self.d_h:
            raise DimMismatch("LSTM step dimensions do not agree")
        z = prev.h @ W[: self.d_h] + x_t @ W[self.d_h:] + b
        return self._update(z, prev.c)[0]

    def _update(self, z, c_prev):
        d = self.d_h
        g = np.empty_like(z)
        g[..., : 3 * d] = sigmoid(z[..., : 3 * d])
        g[..., 3 * d:] = np.tanh(z[..., 3 * d:])
        i, f, o, cand = g[..., :d], g[..., d:2 * d], g[..., 2 * d:3 * d], g[..., 3 * d:]
        c = f * c_prev + i * cand
        tc = np.tanh(c)
        return LstmState(o * tc, c), g, tc

    def forward(self, x, h0=None, c0=None, mask=None, train=False, rng=None):
        """Run the sequence left to right.

        Returns ``((hs, final_state), tape)`` where ``hs`` is ``(B, T, d_h)``.
        Where ``mask[b, t]`` is false the state is carried through unchanged.
        """
        if x.ndim != 3 or x.shape[1] == 0:
            raise EmptySequence("LSTM needs a (B, T>=1, d_in) input")
        if x.shape[2] != self.d_in:
            raise DimMismatch(f"LSTM expects d_in={self.d_in}, got {x.shape[2]}")
        B, T, _ = x.shape
        d = self.d_h
        W, b = self.params["W"], self.params["b"]
        dt = W.dtype
        h = np.zeros((B, d), dt) if h0 is None else h0
        c = np.zeros((B, d), dt) if c0 is None else c0
        m = None if mask is None else np.asarray(mask, dtype=dt)
        xz = x @ W[d:] + b
        Wh = W[:d]
        hs = np.empty((B, T, d), dt)
        h_prev = np.empty((B, T, d), dt)
        c_prev = np.empty((B, T, d), dt)
        gates = np.empty((B, T, 4 * d), dt)
        tanh_c = np.empty((B, T, d), dt)
        for t in range(T):
            h_prev[:, t], c_prev[:, t] = h, c
            (h_new, c_new), gates[:, t], tanh_c[:, t] = self._update(xz[:, t] + h @ Wh, c)
            if m is None:
                h, c = h_new, c_new
            else:
                mt = m[:, t, None]
                h = mt * h_new + (1 - mt) * h
                c = mt * c_new + (1 - mt) * c
            hs[:, t] = h
        tape = _LstmTape(x, h_prev, c_prev, gates, tanh_c, m)
        return (hs, LstmState(h, c)), tape

    def backward(self, tape, dhs=None, dh_final=None, dc_final=None):
        """Backpropagate through time.

        Returns ``((dx, dh0, dc0), grads)``.
        """
        if tape is None:
            raise MissingTape("LSTM.backward called without a forward tape")
        x, h_prev, c_prev, gates, tanh_c, m = tape
        B, T, _ = x.shape
        d = self.d_h
        W = self.params["W"]
        Wh = W[:d]
        dt = W.dtype
        dh = np.zeros((B, d), dt) if dh_final is None else dh_final.copy()
        dc = np.zeros((B, d), dt) if dc_final is None else dc_final.copy()
        dz_all = np.empty((B, T, 4 * d), dt)
        dWh = np.zeros_like(Wh)
        for t in reversed(range(T)):
            if dhs is not None:
                dh = dh + dhs[:, t]
            g = gates[:, t]
            i, f, o, cand = g[:, :d], g[:, d:2 * d], g[:, 2 * d:3 * d], g[:, 3 * d:]
            tc = tanh_c[:, t]
            if m is not None:
                mt = m[:, t, None]
                dh_carry, dc_carry = (1 - mt) * dh, (1 - mt) * dc
                dh, dc = mt * dh, mt * dc
            dc = dc + dh * o * (1 - tc * tc)
            dz = dz_all[:, t]
            dz[:, :d] = dc * cand * i * (1 - i)
            dz[:, d:2 * d] = dc * c_prev[:, t] * f * (1 - f)
            dz[:, 2 * d:3 * d] = dh * tc * o * (1 - o)
            dz[:, 3 * d:] = dc * i * (1 - cand * cand)
            dWh += h_prev[:, t].T @ dz
            dh = dz @ Wh.T
            dc = dc * f
            if m is not None:
                dh, dc = dh + dh_carry, dc + dc_carry
        dz2 = dz_all.reshape(B * T, 4 * d)
        dWx = x.reshape(B * T, -1).T @ dz2
        dx = dz_all @ W[d:].T
        grads = {"W": np.concatenate([dWh, dWx], axis=0), "b": dz2.sum(axis=0)}
        return (dx, dh, dc), grads


class BiLSTM(Layer):
    """Forward and backward LSTMs; per-step output ``[h_fwd ; h_bwd]``."""

    def __init__(self, d_in: int, d_h: int, seed=0):
        rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
        self.d_in, self.d_h = d_in, d_h
        self.fwd = LSTM(d_in, d_h, rng)
        self.bwd = LSTM(d_in, d_h, rng)

    @property
    def params(self):
        out = {f"fwd.{k}": v for k, v in self.fwd.params.items()}
        out.update({f"bwd.{k}": v for k, v in self.bwd.params.items()})
        return out

    def astype(self, dtype):
        self.fwd.astype(dtype)
        self.bwd.astype(dtype)
        return self

    def forward(self, x, train=False, rng=None):
        if x.ndim == 3 and x.shape[2] != self.d_in:
            raise DimMismatch(f"BiLSTM expects d_in={self.d_in}, got {x.shape[2]}")
        (hf, _), tf = self.fwd.forward(x)
        (hb, _), tb = self.bwd.forward(x[:, ::-1])
        return np.concatenate([hf, hb[:, ::-1]], axis=-1), (tf, tb)

    def backward(self, tape, dy):
        if tape is None:
            raise MissingTape("BiLSTM.backward called without a forward tape")
        tf, tb = tape
        d = self.d_h
        (dxf, _, _), gf = self.fwd.backward(tf, dy[..., :d])
        (dxb, _, _), gb = self.bwd.backward(tb, np.ascontiguousarray(dy[:, ::-1, d:]))
        grads = {f"fwd.{k}": v for k, v in gf.items()}
        grads.update({f"bwd.{k}": v for k, v in gb.items()})
        return dxf + dxb[:, ::-1], grads


class Attention(Layer):
    """Shape-preserving score attention over time.

    ``s_t = tanh(H_t . w + b_t)``, ``a = softmax_t(s)``, ``out_t = a_t H_t``.
    """

    def __init__(self, d_model: int, steps: int, seed=0):
        self.d_model, self.steps = d_model, steps
        self.params = {
            "w": init_params((d_model, 1), "glorot_uniform", seed)[:, 0].copy(),
            "b": init_params((steps,), "zeros"),
        }

    def forward(self, H, train=False, rng=None):
        if H.shape[1] != self.steps or H.shape[2] != self.d_model:
            raise DimMismatch(
                f"Attention expects (B, {self.steps}, {self.d_model}), got {H.shape}"
            )
        s = np.tanh(H @ self.params["w"] + self.params["b"])
        a = softmax(s, axis=1)
        return a[..., None] * H, (H, s, a)

    def backward(self, tape, dy):
        if tape is None:
            raise MissingTape("Attention.backward called without a forward tape")
        H, s, a = tape
        da = np.einsum("btd,btd->bt", dy, H)
        ds = a * (da - (a * da).sum(axis=1, keepdims=True))
        dz = ds * (1 - s * s)
        grads = {"w": np.einsum("bt,btd->d", dz, H), "b": dz.sum(axis=0)}
        dH = a[..., None] * dy + dz[..., None] * self.params["w"]
        return dH, grads


# functional forms ----------------------------------------------------------

def embedding_forward(ids, table):
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IdOutOfRange(f"ids must lie in [0, {table.shape[0]})")
    return table[ids]


def lstm_cell_step(x_t, prev: LstmState, layer: LSTM) -> LstmState:
    x_t = np.atleast_2d(x_t)
    prev = LstmState(np.atleast_2d(prev.h), np.atleast_2d(prev.c))
    return layer.step(x_t, prev)


def lstm_layer_forward(seq, layer: LSTM, init: LstmState | None = None,
                       return_sequences: bool = True):
    h0, c0 = (None, None) if init is None else init
    (hs, final), _ = layer.forward(seq, h0, c0)
    return hs if return_sequences else final


def bilstm_forward(seq, layer: BiLSTM):
    return layer.forward(seq)[0]


def attention_forward(H, layer: Attention):
    return layer.forward(H)[0]


def dense_forward(x, layer: Dense):
    return layer.forward(x)[0]


def layer_backward(layer: Layer, tape, upstream):
    if tape is None:
        raise MissingTape(f"{type(layer).__name__}: no forward tape recorded")
    return layer.backward(tape, upstream)


def lstm_param_count(d_in: int, d_h: int) -> int:
    return 4 * (d_in * d_h + d_h * d_h + d_h)
