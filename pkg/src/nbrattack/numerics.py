"""Small float64 numeric kernel: activations, affine layers, Adam, RNG
helpers and a central-difference gradient checker.

Everything here is pure numpy and deterministic given a Generator.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import TrainingError

LOG_FLOOR = 1e-12


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def stage_seed(root_seed: int, label: str) -> int:
    """Derive a per-stage seed from a root seed and a stage label.

    Uses sha256 so that stages are decorrelated and insertion of a new
    stage never shifts the seeds of existing ones.
    """
    digest = hashlib.sha256(f"{root_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def sigmoid(x):
    return expit(np.asarray(x, dtype=np.float64))


def neg_log_sigmoid(x):
    """-log(sigmoid(x)) with the argument of the log floored at 1e-12."""
    return -np.log(np.maximum(sigmoid(x), LOG_FLOOR))


def relu(x):
    return np.maximum(x, 0.0)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError(f"bad fan dims ({fan_in}, {fan_out})")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def affine_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"affine shape mismatch: x {x.shape} w {w.shape}")
    out = x @ w
    if b is not None:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (w.shape[1],):
            raise ValueError(f"bias shape {b.shape} does not match width {w.shape[1]}")
        out = out + b
    return out


def softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


@dataclass
class AdamState:
    """Per-parameter Adam moments; step counts the updates applied so far."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init_like(cls, param: np.ndarray, lr: float = 0.01) -> "AdamState":
        return cls(m=np.zeros_like(param, dtype=np.float64),
                   v=np.zeros_like(param, dtype=np.float64), lr=lr)


def adam_update(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One Adam step. Mutates `state`, returns the new parameter array."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ValueError(
            f"adam shape mismatch: param {param.shape} grad {grad.shape} m {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        bad = int(np.sum(~np.isfinite(grad)))
        raise TrainingError(
            f"non-finite gradient ({bad}/{grad.size} entries) at step {state.step + 1}")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    """Keyed Adam over a dict of parameter arrays."""

    def __init__(self, lr: float = 0.01):
        self.lr = lr
        self.states: dict[str, AdamState] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        out = {}
        for name, p in params.items():
            if name not in grads:
                raise ValueError(f"missing gradient for parameter {name!r}")
            if name not in self.states:
                self.states[name] = AdamState.init_like(p, lr=self.lr)
            out[name] = adam_update(p, grads[name], self.states[name])
        return out


def finite_diff_check(loss_fn, param: np.ndarray, analytic_grad: np.ndarray,
                      h: float = 1e-5) -> float:
    """Max relative error between `analytic_grad` and central differences.

    loss_fn maps a parameter array (same shape as `param`) to a scalar.
    Relative error per coordinate is |a - n| / max(1, |a| + |n|).
    """
    if param.shape != analytic_grad.shape:
        raise ValueError("param / gradient shape mismatch")
    work = np.array(param, dtype=np.float64)
    worst = 0.0
    it = np.nditer(work, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = work[idx]
        work[idx] = orig + h
        hi = float(loss_fn(work))
        work[idx] = orig - h
        lo = float(loss_fn(work))
        work[idx] = orig
        numeric = (hi - lo) / (2.0 * h)
        a = float(analytic_grad[idx])
        err = abs(a - numeric) / max(1.0, abs(a) + abs(numeric))
        worst = max(worst, err)
    return worst
