"""Numeric substrate: activations, loss, initialization, gradient checking.

Tensors are plain numpy arrays. Training runs in float32, gradient checks
in float64. All randomness goes through :func:`make_rng`, a PCG64 bit
generator (64-bit output, 128-bit state) seeded explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

WORK_DTYPE = np.float32
CHECK_DTYPE = np.float64
LOG_CLAMP = 1e-12


class NumericError(ValueError):
    pass


class EmptyTensor(NumericError):
    pass


class EmptyMask(NumericError):
    pass


class NonFiniteValue(NumericError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue(f"{what} contains NaN or Inf")
    return x


def sigmoid(x):
    # tanh form never overflows and stays in the input dtype
    x = np.asarray(x)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x, axis: int = -1):
    x = np.asarray(x)
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def activation(kind: str, x) -> np.ndarray:
    """Apply ``sigmoid``, ``tanh`` or ``softmax_rows`` (over the last axis)."""
    x = np.asarray(x)
    if x.size == 0:
        raise EmptyTensor("activation of an empty tensor")
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "softmax_rows":
        if x.ndim < 1:
            raise EmptyTensor("softmax_rows needs rank >= 1")
        return softmax(x, axis=-1)
    raise ValueError(f"unknown activation {kind!r}")


def _gather_target_probs(probs, targets):
    return np.take_along_axis(probs, targets[..., None].astype(np.int64), axis=-1)[..., 0]


def cross_entropy(probs, targets, mask=None) -> float:
    """Mean of -ln p[target] over unmasked positions, p clamped at 1e-12."""
    probs = np.asarray(probs)
    targets = np.asarray(targets)
    if targets.size and targets.max() >= probs.shape[-1]:
        raise IndexError("target id out of range")
    p = np.maximum(_gather_target_probs(probs, targets), LOG_CLAMP)
    nll = -np.log(p.astype(np.float64))
    if mask is None:
        if nll.size == 0:
            raise EmptyMask("no positions to average over")
        return float(nll.mean())
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise EmptyMask("all positions are masked")
    return float(nll[mask].sum() / count)


def softmax_cross_entropy(logits, targets, mask=None):
    """Fused softmax + cross-entropy. Returns (loss, probs, dlogits)."""
    probs = softmax(logits, axis=-1)
    loss = cross_entropy(probs, targets, mask)
    if mask is None:
        weight = np.full(targets.shape, 1.0 / targets.size, dtype=logits.dtype)
    else:
        m = np.asarray(mask, dtype=logits.dtype)
        weight = m / m.sum()
    dlogits = probs.copy()
    np.put_along_axis(
        dlogits,
        targets[..., None].astype(np.int64),
        _gather_target_probs(probs, targets)[..., None] - 1.0,
        axis=-1,
    )
    dlogits *= weight[..., None]
    return loss, probs, dlogits


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(shape, scheme: str = "glorot_uniform", rng_seed: int | np.random.Generator = 0,
                dtype=WORK_DTYPE) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if scheme == "zeros":
        return np.zeros(shape, dtype=dtype)
    if scheme != "glorot_uniform":
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else make_rng(rng_seed)
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        receptive = int(np.prod(shape[:-2])) if len(shape) > 2 else 1
        fan_in, fan_out = shape[-2] * receptive, shape[-1] * receptive
    a = glorot_bound(fan_in, fan_out)
    return rng.uniform(-a, a, size=shape).astype(dtype)


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_index: tuple | None
    analytic: float
    numeric: float
    passed: bool
    checked: int = 0


def rel_error(a, n):
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def grad_check(
    f: Callable[[Mapping[str, np.ndarray]], float],
    point: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare ``analytic`` gradients against central differences of ``f``.

    ``point`` is perturbed in place one coordinate at a time and restored.
    Arrays in ``point`` must be float64. ``worst_index`` is ``(name, flat_index)``.
    """
    worst = GradCheckReport(0.0, None, 0.0, 0.0, True)
    checked = 0
    for name, theta in point.items():
        if theta.dtype != CHECK_DTYPE:
            raise TypeError(f"{name}: grad_check needs float64 arrays, got {theta.dtype}")
        grad = np.asarray(analytic[name], dtype=CHECK_DTYPE).reshape(-1)
        flat = theta.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = f(point)
            flat[i] = orig - epsilon
            fm = f(point)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteValue(f"{name}[{i}]: loss is not finite")
            num = (fp - fm) / (2 * epsilon)
            err = float(rel_error(grad[i], num))
            checked += 1
            if worst.worst_index is None or err > worst.max_rel_err:
                worst = GradCheckReport(err, (name, i), float(grad[i]), float(num), True)
    worst.passed = worst.max_rel_err < tolerance
    worst.checked = checked
    return worst
