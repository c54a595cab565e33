"""Central finite-difference checks of every closed-form gradient.

The numerical side only ever calls forward-pass pieces; it never touches
:mod:`attnlab.gradients`. Each check perturbs one tensor at a time, either a
parameter or an intermediate (G, S, Q, K, V), and recomputes the summed loss
downstream of it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from attnlab.forward import (
    AttentionParams,
    TaskInstance,
    causal_mask,
    cross_entropy,
    forward,
    forward_from_qkv,
    head_output,
    softmax_rows,
)
from attnlab.gradients import backward
from attnlab.linalg import gaussian_matrix, make_rng

FD_STEP = 1e-5
TOLERANCE = 1e-6

CHECKED = ("U", "dS", "dQ", "dK", "dV", "dW_Q", "dW_K", "dW_V", "dW_O", "db")


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / (max|a| + 1e-12)``."""
    return float(np.max(np.abs(analytic - numeric)) / (np.max(np.abs(analytic)) + 1e-12))


def central_difference(loss_fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP,
                       skip: np.ndarray | None = None) -> np.ndarray:
    """Numerical gradient of ``loss_fn`` at ``x``; entries flagged in ``skip`` are left at 0."""
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    base = x.copy()
    for idx in range(x.size):
        if skip is not None and skip.reshape(-1)[idx]:
            continue
        orig = base.flat[idx]
        base.flat[idx] = orig + h
        up = loss_fn(base)
        base.flat[idx] = orig - h
        down = loss_fn(base)
        base.flat[idx] = orig
        flat[idx] = (up - down) / (2.0 * h)
    return grad


def numeric_gradients(params: AttentionParams, task: TaskInstance, h: float = FD_STEP) -> dict[str, np.ndarray]:
    """Finite-difference gradients keyed like the :class:`GradientSet` fields."""
    tr = forward(params, task)
    y, causal = task.y, task.causal
    mask = causal_mask(task.T) if causal else None
    W_O, b = params.W_O, params.b

    def from_context(G):
        return cross_entropy(head_output(W_O, b, G)[1], y)

    def from_scores(S):
        Alpha = softmax_rows(S, mask)
        return from_context(tr.V @ Alpha.T)

    out = {
        "U": central_difference(from_context, tr.G, h),
        "dS": central_difference(from_scores, tr.S, h, skip=None if mask is None else ~mask),
        "dQ": central_difference(lambda Q: forward_from_qkv(Q, tr.K, tr.V, W_O, b, y, causal).loss, tr.Q, h),
        "dK": central_difference(lambda K: forward_from_qkv(tr.Q, K, tr.V, W_O, b, y, causal).loss, tr.K, h),
        "dV": central_difference(lambda V: forward_from_qkv(tr.Q, tr.K, V, W_O, b, y, causal).loss, tr.V, h),
    }
    for name in ("W_Q", "W_K", "W_V", "W_O", "b"):
        out["d" + name if name != "b" else "db"] = central_difference(
            lambda w, name=name: forward(params.replace(**{name: w}), task).loss, getattr(params, name), h
        )
    return out


@dataclass
class GradCheckResult:
    label: str
    errors: dict[str, float]

    @property
    def max_error(self) -> float:
        return max(self.errors.values())


def check_instance(params: AttentionParams, task: TaskInstance, label: str = "", h: float = FD_STEP) -> GradCheckResult:
    grads = backward(params, task, forward(params, task))
    numeric = numeric_gradients(params, task, h)
    return GradCheckResult(label, {k: relative_error(getattr(grads, k), numeric[k]) for k in CHECKED})


def random_instance(seed: int, T: int, d_x: int, d_k: int, d_v: int, C: int, causal: bool,
                    scale: float = 0.5) -> tuple[AttentionParams, TaskInstance]:
    """Moderately scaled random parameters and inputs, so no gradient is negligible."""
    rng = make_rng(np.random.SeedSequence([seed, 7]))
    params = AttentionParams(
        W_Q=gaussian_matrix(rng, d_k, d_x, scale),
        W_K=gaussian_matrix(rng, d_k, d_x, scale),
        W_V=gaussian_matrix(rng, d_v, d_x, scale),
        W_O=gaussian_matrix(rng, C, d_v, scale),
        b=gaussian_matrix(rng, C, 1, scale)[:, 0],
    )
    X = rng.standard_normal((d_x, T))
    y = rng.integers(0, C, size=T)
    return params, TaskInstance(X=X, y=y, causal=causal, n_classes=C)


TOY_SHAPE = dict(T=5, d_x=3, d_k=2, d_v=2, C=3)
STICKY_SHAPE = dict(T=12, d_x=20, d_k=10, d_v=15, C=8)


def suite(n_toy: int = 12, n_sticky: int = 8) -> list[GradCheckResult]:
    """Random toy-sized and sticky-sized instances (sticky ones causal, shorter sequence)."""
    results = []
    for s in range(n_toy):
        params, task = random_instance(s, causal=bool(s % 2), **TOY_SHAPE)
        results.append(check_instance(params, task, f"toy-{s}{'-causal' if task.causal else ''}"))
    for s in range(n_sticky):
        params, task = random_instance(1000 + s, causal=True, **STICKY_SHAPE)
        results.append(check_instance(params, task, f"sticky-dims-{s}"))
    return results
