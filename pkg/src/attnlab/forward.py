"""Forward pass of a single-head attention block with an output softmax.

Column convention throughout: ``X`` is ``d_x x T`` with one position per
column, and so are ``Q``, ``K``, ``V``, ``G``, ``logits`` and ``probs``.
Score and weight matrices are ``T x T`` with rows indexed by query; masked
scores are ``-inf`` and masked weights exactly zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from attnlab.linalg import ShapeError

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class AttentionParams:
    W_Q: np.ndarray  # d_k x d_x
    W_K: np.ndarray  # d_k x d_x
    W_V: np.ndarray  # d_v x d_x
    W_O: np.ndarray  # C x d_v
    b: np.ndarray  # C

    def __post_init__(self):
        d_k, d_x = self.W_Q.shape
        d_v = self.W_V.shape[0]
        C = self.W_O.shape[0]
        if self.W_K.shape != (d_k, d_x):
            raise ShapeError(f"W_K has shape {self.W_K.shape}, expected {(d_k, d_x)}")
        if self.W_V.shape != (d_v, d_x):
            raise ShapeError(f"W_V has shape {self.W_V.shape}, expected {(d_v, d_x)}")
        if self.W_O.shape != (C, d_v):
            raise ShapeError(f"W_O has shape {self.W_O.shape}, expected {(C, d_v)}")
        if self.b.shape != (C,):
            raise ShapeError(f"b has shape {self.b.shape}, expected {(C,)}")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(d_x, d_k, d_v, C)"""
        return self.W_Q.shape[1], self.W_Q.shape[0], self.W_V.shape[0], self.W_O.shape[0]

    def replace(self, **changes) -> "AttentionParams":
        fields = dict(W_Q=self.W_Q, W_K=self.W_K, W_V=self.W_V, W_O=self.W_O, b=self.b)
        fields.update(changes)
        return AttentionParams(**fields)

    def copy(self) -> "AttentionParams":
        return AttentionParams(self.W_Q.copy(), self.W_K.copy(), self.W_V.copy(), self.W_O.copy(), self.b.copy())

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"W_Q": self.W_Q, "W_K": self.W_K, "W_V": self.W_V, "W_O": self.W_O, "b": self.b}


@dataclass(frozen=True)
class TaskInstance:
    X: np.ndarray  # d_x x T
    y: np.ndarray  # T, integer class indices
    causal: bool = False
    n_classes: int | None = None

    def __post_init__(self):
        if self.X.ndim != 2:
            raise ShapeError(f"X must be 2-D, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[1],):
            raise ShapeError(f"y has shape {self.y.shape}, expected ({self.X.shape[1]},)")
        if self.y.size and self.y.min() < 0:
            raise ValueError("targets must be non-negative class indices")
        if self.n_classes is not None and self.y.size and self.y.max() >= self.n_classes:
            raise ValueError(f"target {self.y.max()} out of range for {self.n_classes} classes")

    @property
    def T(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ForwardTrace:
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    Alpha: np.ndarray
    G: np.ndarray
    Logits: np.ndarray
    Probs: np.ndarray
    loss: float  # summed over positions, nats
    causal: bool = False
    attention_entropy: np.ndarray | None = None  # per query row, nats

    @property
    def T(self) -> int:
        return self.Alpha.shape[0]

    @cached_property
    def S(self) -> np.ndarray:
        """Scaled dot-product scores, ``-inf`` where masked (computed on first access)."""
        S = scores(self.Q, self.K)
        if self.causal:
            S[~causal_mask(self.T)] = -np.inf
        return S

    @property
    def mask(self) -> np.ndarray | None:
        """True where attention is allowed; None when unmasked."""
        return causal_mask(self.T) if self.causal else None

    @property
    def mean_loss(self) -> float:
        return self.loss / self.T


@lru_cache(maxsize=8)
def causal_mask(T: int) -> np.ndarray:
    m = np.tril(np.ones((T, T), dtype=bool))
    m.flags.writeable = False
    return m


def softmax_row(scores, mask=None) -> np.ndarray:
    """Softmax of one score vector; masked-out entries get exactly zero weight."""
    s = np.asarray(scores, dtype=np.float64)
    if mask is None:
        mask = np.ones(s.shape, dtype=bool)
    if not np.any(mask):
        raise ValueError("softmax over an empty set of unmasked entries")
    out = np.zeros_like(s)
    kept = s[mask]
    e = np.exp(kept - kept.max())
    out[mask] = e / e.sum()
    return out


def softmax_rows(S: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise softmax of a score matrix, excluding masked entries from the normalizer."""
    if mask is None:
        z = S - S.max(axis=1, keepdims=True)
        np.exp(z, out=z)
        return z / z.sum(axis=1, keepdims=True)
    if not np.all(mask.any(axis=1)):
        raise ValueError("attention row with every position masked")
    z = np.where(mask, S, -np.inf)
    z -= z.max(axis=1, keepdims=True)
    np.exp(z, out=z)  # exp(-inf) == 0 exactly
    return z / z.sum(axis=1, keepdims=True)


BLOCK = 32


def row_blocks(T: int, causal: bool, block: int = BLOCK):
    """Yield (r0, r1, c1): query rows r0..r1-1 and the key columns 0..c1-1 they can see."""
    for r0 in range(0, T, block):
        r1 = min(r0 + block, T)
        yield r0, r1, (r1 if causal else T)


@lru_cache(maxsize=16)
def _above_diagonal(n: int) -> np.ndarray:
    """Strict upper triangle of an n x n tile (the masked part of a diagonal block)."""
    m = np.triu(np.ones((n, n), dtype=bool), k=1)
    m.flags.writeable = False
    return m


def attend(Q: np.ndarray, K: np.ndarray, V: np.ndarray, causal: bool):
    """Attention weights, per-row attention entropy and contexts.

    Works through query rows in blocks; with ``causal`` only the visible
    lower-triangular part is computed and masked weights stay exactly zero.
    """
    d_k, T = Q.shape
    Qs = Q / np.sqrt(d_k)
    Alpha = np.zeros((T, T))
    H = np.empty(T)
    G = np.empty((V.shape[0], T))
    scratch = np.empty((BLOCK, T))
    for r0, r1, c1 in row_blocks(T, causal):
        z = Qs[:, r0:r1].T @ K[:, :c1]
        if causal:
            # only the diagonal tile z[:, r0:r1] has masked entries
            upper = _above_diagonal(r1 - r0)
            np.copyto(z[:, r0:], -np.inf, where=upper)
        top = z.max(axis=1, keepdims=True)
        z -= top
        e = scratch[: r1 - r0, :c1]
        np.exp(z, out=e)  # exp(-inf) == 0 exactly, so masked keys drop out of the normalizer
        total = e.sum(axis=1, keepdims=True)
        a = Alpha[r0:r1, :c1]
        np.divide(e, total, out=a)
        # H_i = log Z_i - sum_j alpha_ij (s_ij - max_i), masked terms contribute 0
        if causal:
            np.copyto(z[:, r0:], 0.0, where=upper)
        H[r0:r1] = np.log(total[:, 0]) - np.einsum("ij,ij->i", a, z)
        G[:, r0:r1] = V[:, :c1] @ a.T
    return Alpha, H, G


def softmax_cols(L: np.ndarray) -> np.ndarray:
    z = L - L.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def cross_entropy(probs: np.ndarray, y) -> float:
    """Summed negative log-likelihood of the targets, in nats.

    Zero target probabilities are clamped at ``PROB_FLOOR`` (with a logged
    warning) so the result is always finite.
    """
    y = np.asarray(y)
    p = probs[y, np.arange(y.size)]
    if np.any(p < PROB_FLOOR):
        log.warning("cross_entropy: %d target probabilities clamped at %g", int(np.sum(p < PROB_FLOOR)), PROB_FLOOR)
        p = np.maximum(p, PROB_FLOOR)
    return float(-np.sum(np.log(p)))


def scores(Q: np.ndarray, K: np.ndarray) -> np.ndarray:
    return (Q.T @ K) / np.sqrt(Q.shape[0])


def head_output(W_O: np.ndarray, b: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logits = W_O @ G + b[:, None]
    return logits, softmax_cols(logits)


def check_shapes(params: AttentionParams, task: TaskInstance) -> None:
    d_x, _, _, C = params.dims
    if task.X.shape[0] != d_x:
        raise ShapeError(f"X has {task.X.shape[0]} rows but W_Q expects d_x={d_x}")
    if task.y.size and task.y.max() >= C:
        raise ValueError(f"target {task.y.max()} out of range for C={C}")


def forward_from_qkv(Q, K, V, W_O, b, y, causal: bool) -> ForwardTrace:
    """Forward pass starting from projected queries, keys and values."""
    Alpha, H, G = attend(Q, K, V, causal)
    logits, probs = head_output(W_O, b, G)
    loss = cross_entropy(probs, y)
    return ForwardTrace(
        Q=Q, K=K, V=V, Alpha=Alpha, G=G, Logits=logits, Probs=probs, loss=loss, causal=causal, attention_entropy=H
    )


def forward(params: AttentionParams, task: TaskInstance) -> ForwardTrace:
    check_shapes(params, task)
    X = task.X
    return forward_from_qkv(params.W_Q @ X, params.W_K @ X, params.W_V @ X, params.W_O, params.b, task.y, task.causal)
