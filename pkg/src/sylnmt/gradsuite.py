"""Finite-difference checks of every layer's backward pass (float64)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .layers import LSTM, Attention, BiLSTM, Dense, Dropout, Embedding, LstmState
from .numcore import CHECK_DTYPE, GradCheckReport, grad_check, make_rng, softmax_cross_entropy

EPSILON = 1e-5
TOLERANCE = 1e-4


@dataclass
class SuiteResult:
    layer: str
    seed: int
    report: GradCheckReport

    @property
    def passed(self) -> bool:
        return self.report.passed


def _projected(fn, shape, rng):
    # random projection keeps gradients O(1) and free of symmetric cancellation
    R = rng.normal(size=shape)
    return R, lambda: float((fn() * R).sum())


def _check(params: dict, inputs: dict, loss, grads: dict) -> GradCheckReport:
    """``grads`` carries input gradients under ``input:<name>`` keys."""
    point = {**params, **{f"input:{k}": v for k, v in inputs.items()}}
    return grad_check(lambda _: loss(), point, grads, EPSILON, TOLERANCE)


def check_dense(seed: int) -> GradCheckReport:
    rng = make_rng(seed)
    layer = Dense(4, 3, rng).astype(CHECK_DTYPE)
    layer.params["b"][:] = rng.normal(size=3)
    x = rng.normal(size=(2, 3, 4))
    y, tape = layer.forward(x)
    R, loss = _projected(lambda: layer.forward(x)[0], y.shape, rng)
    dx, g = layer.backward(tape, R)
    return _check(layer.params, {"x": x}, loss, {**g, "input:x": dx})


def check_embedding(seed: int) -> GradCheckReport:
    rng = make_rng(seed)
    layer = Embedding(7, 3, rng).astype(CHECK_DTYPE)
    ids = rng.integers(0, 7, size=(2, 4))
    y, tape = layer.forward(ids)
    R, loss = _projected(lambda: layer.forward(ids)[0], y.shape, rng)
    _, g = layer.backward(tape, R)
    return _check(layer.params, {}, loss, g)


def check_lstm_cell(seed: int) -> GradCheckReport:
    rng = make_rng(seed)
    layer = LSTM(3, 2, rng).astype(CHECK_DTYPE)
    layer.params["b"][:] = rng.normal(size=8)
    x = rng.normal(size=(2, 3))
    h = rng.uniform(-0.9, 0.9, size=(2, 2))
    c = rng.normal(size=(2, 2))
    R = rng.normal(size=(2, 2))
    Rc = rng.normal(size=(2, 2))

    def loss():
        s = layer.step(x, LstmState(h, c))
        return float((s.h * R).sum() + (s.c * Rc).sum())

    _, tape = layer.forward(x[:, None, :], h, c)
    (dx, dh, dc), g = layer.backward(tape, None, R, Rc)
    return _check(layer.params, {"x": x, "h": h, "c": c}, loss,
                  {**g, "input:x": dx[:, 0], "input:h": dh, "input:c": dc})


def check_lstm_layer(seed: int) -> GradCheckReport:
    rng = make_rng(seed)
    layer = LSTM(3, 2, rng).astype(CHECK_DTYPE)
    layer.params["b"][:] = rng.normal(size=8)
    x = rng.normal(size=(2, 4, 3))
    mask = np.ones((2, 4), dtype=bool)
    mask[0, 3:] = False
    R = rng.normal(size=(2, 4, 2))
    Rh, Rc = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))

    def loss():
        (hs, (h, c)), _ = layer.forward(x, mask=mask)
        return float((hs * R).sum() + (h * Rh).sum() + (c * Rc).sum())

    _, tape = layer.forward(x, mask=mask)
    (dx, _, _), g = layer.backward(tape, R, Rh, Rc)
    return _check(layer.params, {"x": x}, loss, {**g, "input:x": dx})


def check_bilstm(seed: int) -> GradCheckReport:
    rng = make_rng(seed)
    layer = BiLSTM(3, 2, rng).astype(CHECK_DTYPE)
    x = rng.normal(size=(2, 4, 3))
    y, tape = layer.forward(x)
    R, loss = _projected(lambda: layer.forward(x)[0], y.shape, rng)
    dx, g = layer.backward(tape, R)
    return _check(layer.params, {"x": x}, loss, {**g, "input:x": dx})


def check_attention(seed: int) -> GradCheckReport:
    rng = make_rng(seed)
    layer = Attention(4, 5, rng).astype(CHECK_DTYPE)
    layer.params["b"][:] = rng.normal(size=5)
    H = rng.normal(size=(2, 5, 4))
    y, tape = layer.forward(H)
    R, loss = _projected(lambda: layer.forward(H)[0], y.shape, rng)
    dH, g = layer.backward(tape, R)
    return _check(layer.params, {"H": H}, loss, {**g, "input:H": dH})


def check_dropout_eval(seed: int) -> GradCheckReport:
    rng = make_rng(seed)
    layer = Dropout(0.5)
    x = rng.normal(size=(2, 3, 4))
    y, tape = layer.forward(x, train=False)
    R, loss = _projected(lambda: layer.forward(x, train=False)[0], y.shape, rng)
    dx, _ = layer.backward(tape, R)
    return _check({}, {"x": x}, loss, {"input:x": dx})


def check_softmax_xent(seed: int) -> GradCheckReport:
    rng = make_rng(seed)
    logits = rng.normal(size=(2, 3, 5)) * 2
    targets = rng.integers(0, 5, size=(2, 3))
    mask = rng.random((2, 3)) < 0.7
    mask[0, 0] = True
    _, _, dlogits = softmax_cross_entropy(logits, targets, mask)
    loss = lambda: softmax_cross_entropy(logits, targets, mask)[0]
    return _check({}, {"logits": logits}, loss, {"input:logits": dlogits})


CHECKS: dict[str, Callable[[int], GradCheckReport]] = {
    "embedding": check_embedding,
    "lstm_cell": check_lstm_cell,
    "lstm_layer": check_lstm_layer,
    "bilstm": check_bilstm,
    "attention": check_attention,
    "dense": check_dense,
    "dropout_eval": check_dropout_eval,
    "softmax_xent": check_softmax_xent,
}


def run_suite(seeds: Iterable[int] = range(10), layers: Iterable[str] | None = None
              ) -> list[SuiteResult]:
    names = list(CHECKS) if layers is None else list(layers)
    seeds = list(seeds)
    return [SuiteResult(name, s, CHECKS[name](s)) for name in names for s in seeds]
