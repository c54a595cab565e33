"""Closed-form first-order gradients of the summed cross-entropy loss.

Every function here mirrors one step of the chain rule through the forward
pass in :mod:`attnlab.forward`, keeping the intermediate quantities that make
the dynamics interpretable: upstream error vectors ``U``, the compatibility
matrix ``B = U^T V`` and its attention-weighted row means.

The single-step functions (``grad_values``, ``compatibility``,
``grad_scores``, ``grad_queries_keys``) work on whole matrices. ``backward``
chains the same formulas through query-row blocks so a long causal sequence
never needs the masked upper triangle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from attnlab.forward import AttentionParams, ForwardTrace, TaskInstance, row_blocks


@dataclass(frozen=True)
class GradientSet:
    U: np.ndarray  # d_v x T, dL/dG
    V: np.ndarray  # values the compatibilities were taken against
    Alpha: np.ndarray
    rowMeanB: np.ndarray  # T, sum_j alpha_ij b_ij
    dQ: np.ndarray
    dK: np.ndarray
    dV: np.ndarray
    dW_Q: np.ndarray
    dW_K: np.ndarray
    dW_V: np.ndarray
    dW_O: np.ndarray
    db: np.ndarray

    @cached_property
    def B(self) -> np.ndarray:
        """Compatibility matrix, ``B[i, j] = u_i . v_j`` (computed on first access)."""
        return self.U.T @ self.V

    @cached_property
    def dS(self) -> np.ndarray:
        """Score gradient ``alpha_ij (b_ij - E_alpha_i[b])`` (computed on first access)."""
        return grad_scores(self.Alpha, self.B, self.rowMeanB)

    def param_grads(self) -> dict[str, np.ndarray]:
        return {"W_Q": self.dW_Q, "W_K": self.dW_K, "W_V": self.dW_V, "W_O": self.dW_O, "b": self.db}


def one_hot(y, C: int) -> np.ndarray:
    y = np.asarray(y)
    Y = np.zeros((C, y.size))
    Y[y, np.arange(y.size)] = 1.0
    return Y


def logit_residual(trace: ForwardTrace, y) -> np.ndarray:
    """dL/dlogits, column i equal to p_i - e_{y_i}."""
    return trace.Probs - one_hot(y, trace.Probs.shape[0])


def upstream(trace: ForwardTrace, params: AttentionParams, y) -> np.ndarray:
    return params.W_O.T @ logit_residual(trace, y)


def grad_values(Alpha: np.ndarray, U: np.ndarray) -> np.ndarray:
    """dL/dV: column j is sum_i alpha_ij u_i."""
    return U @ Alpha


def compatibility(U: np.ndarray, V: np.ndarray, Alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (B, rowMeanB) with ``B[i, j] = u_i . v_j`` and ``rowMeanB[i] = sum_j alpha_ij b_ij``."""
    B = U.T @ V
    return B, np.sum(Alpha * B, axis=1)


def advantage(B: np.ndarray, rowMeanB: np.ndarray) -> np.ndarray:
    """A[i, j] = -(b_ij - E_alpha_i[b]); positive where more attention lowers the loss."""
    return -(B - rowMeanB[:, None])


def grad_scores(Alpha: np.ndarray, B: np.ndarray, rowMeanB: np.ndarray) -> np.ndarray:
    # Masked entries have alpha == 0 exactly, so their gradient is exactly 0.
    return Alpha * (B - rowMeanB[:, None])


def grad_queries_keys(trace: ForwardTrace, dS: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scale = 1.0 / np.sqrt(trace.Q.shape[0])
    return scale * (trace.K @ dS.T), scale * (trace.Q @ dS)


def grad_values_weight_matrix_form(U: np.ndarray, Alpha: np.ndarray, X: np.ndarray) -> np.ndarray:
    """dL/dW_V written as U A X^T."""
    return U @ (Alpha @ X.T)


def grad_projections(task: TaskInstance, trace: ForwardTrace, dQ, dK, dV, U, check_dual: bool = True):
    """Gradients of the five parameters: (dW_Q, dW_K, dW_V, dW_O, db).

    ``dW_V`` is the sum of outer products ``sum_j dV_j x_j^T``; with
    ``check_dual`` it is also formed as ``U A X^T`` and the two must agree.
    """
    X = task.X
    dW_Q = dQ @ X.T
    dW_K = dK @ X.T
    dW_V = np.einsum("aj,bj->ab", dV, X)
    if check_dual:
        dual = grad_values_weight_matrix_form(U, trace.Alpha, X)
        scale = max(np.abs(dW_V).max(), np.abs(dual).max(), 1.0)
        if np.abs(dW_V - dual).max() > 1e-9 * scale:
            raise ArithmeticError("dW_V outer-product and matrix forms disagree")
    R = logit_residual(trace, task.y)
    return dW_Q, dW_K, dW_V, R @ trace.G.T, R.sum(axis=1)


def _routing_grads(trace: ForwardTrace, U: np.ndarray):
    """Blocked (rowMeanB, dQ, dK, dV) for one trace."""
    Q, K, V, Alpha = trace.Q, trace.K, trace.V, trace.Alpha
    T = Alpha.shape[0]
    scale = 1.0 / np.sqrt(Q.shape[0])
    # sum_j alpha_ij (u_i . v_j) == u_i . g_i
    rowMeanB = np.einsum("ai,ai->i", U, trace.G)
    dQ = np.empty_like(Q)
    dK = np.zeros_like(K)
    dV = np.zeros_like(V)
    # augmented rows fold the row-mean subtraction into the matmul:
    # [u_i; -m_i] . [v_j; 1] = b_ij - m_i
    Ua = np.vstack([U, -rowMeanB])
    Va = np.vstack([V, np.ones(T)])
    for r0, r1, c1 in row_blocks(T, trace.causal):
        a = Alpha[r0:r1, :c1]
        ds = Ua[:, r0:r1].T @ Va[:, :c1]
        ds *= a
        dQ[:, r0:r1] = K[:, :c1] @ ds.T
        dK[:, :c1] += Q[:, r0:r1] @ ds
        dV[:, :c1] += U[:, r0:r1] @ a
    dQ *= scale
    dK *= scale
    return rowMeanB, dQ, dK, dV


def backward(params: AttentionParams, task: TaskInstance, trace: ForwardTrace, check_dual: bool = True) -> GradientSet:
    U = upstream(trace, params, task.y)
    rowMeanB, dQ, dK, dV = _routing_grads(trace, U)
    dW_Q, dW_K, dW_V, dW_O, db = grad_projections(task, trace, dQ, dK, dV, U, check_dual=check_dual)
    return GradientSet(
        U=U, V=trace.V, Alpha=trace.Alpha, rowMeanB=rowMeanB, dQ=dQ, dK=dK, dV=dV,
        dW_Q=dW_Q, dW_K=dW_K, dW_V=dW_V, dW_O=dW_O, db=db,
    )


def first_order_loss_change(trace: ForwardTrace, U: np.ndarray, j: int, eta: float) -> np.ndarray:
    """Predicted per-query loss change when only v_j takes its gradient step.

    ``dL_i ~= -eta * alpha_ij * sum_r alpha_rj (u_i . u_r)``
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    col = trace.Alpha[:, j]
    return -eta * col * (U.T @ (U @ col))
