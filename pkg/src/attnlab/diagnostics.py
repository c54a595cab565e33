"""Routing diagnostics, predictive metrics and PCA of value trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from attnlab.forward import ForwardTrace
from attnlab.gradients import GradientSet, advantage
from attnlab.linalg import sym_eig_top


def attention_entropy(Alpha: np.ndarray) -> np.ndarray:
    """Per-query entropy of the attention rows, nats."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Alpha > 0, Alpha * np.log(Alpha), 0.0)
    return -terms.sum(axis=1)


def accuracy(probs: np.ndarray, y) -> float:
    # argmax returns the first maximum, i.e. ties go to the lowest class index
    return float(np.mean(np.argmax(probs, axis=0) == np.asarray(y)))


def predictive_entropy(probs: np.ndarray) -> float:
    """Mean over positions of the entropy of each predictive column, nats."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    return float(-terms.sum(axis=0).mean())


def kl_mean(p: np.ndarray, q: np.ndarray, floor: float = 1e-12) -> float:
    """Mean over positions of KL(p_i || q_i), nats. Columns are distributions."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(np.maximum(q, floor))), 0.0)
    return float(terms.sum() / p.shape[1])


@dataclass(frozen=True)
class DiagnosticsReport:
    B: np.ndarray
    advantage: np.ndarray
    column_usage: np.ndarray  # sum_i alpha_ij
    value_norms: np.ndarray  # ||v_j||
    attention_entropy: np.ndarray
    mean_loss: float
    accuracy: float
    mean_predictive_entropy: float

    def summary(self) -> dict:
        return {
            "mean_loss": self.mean_loss,
            "accuracy": self.accuracy,
            "mean_predictive_entropy": self.mean_predictive_entropy,
            "attention_entropy_mean": float(self.attention_entropy.mean()),
            "min_column_usage": float(self.column_usage.min()),
            "max_column_usage": float(self.column_usage.max()),
            "mean_value_norm": float(self.value_norms.mean()),
        }


def diagnostics(trace: ForwardTrace, grads: GradientSet, y) -> DiagnosticsReport:
    return DiagnosticsReport(
        B=grads.B,
        advantage=advantage(grads.B, grads.rowMeanB),
        column_usage=trace.Alpha.sum(axis=0),
        value_norms=np.linalg.norm(trace.V, axis=0),
        attention_entropy=attention_entropy(trace.Alpha),
        mean_loss=trace.mean_loss,
        accuracy=accuracy(trace.Probs, y),
        mean_predictive_entropy=predictive_entropy(trace.Probs),
    )


@dataclass(frozen=True)
class PcaProjection:
    components: np.ndarray  # 2 x d_v, rows are principal axes
    mean: np.ndarray  # d_v
    positions: np.ndarray  # sampled column indices
    start: np.ndarray  # n x 2
    end: np.ndarray  # n x 2
    explained_variance: np.ndarray  # 2, descending
    total_variance: float

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.end - self.start, axis=1)

    def arrows(self):
        for j, a, b in zip(self.positions, self.start, self.end):
            yield int(j), a, b


def stride_sample(T: int, sample: int) -> np.ndarray:
    """``sample`` evenly strided positions out of ``T`` (every ``T // sample``-th)."""
    if not 0 < sample <= T:
        raise ValueError(f"sample must be in [1, {T}], got {sample}")
    return np.arange(sample) * (T // sample)


def fit_pca(points: np.ndarray, k: int = 2):
    """PCA of the columns of ``points``. Returns (mean, components k x d, variances, total variance)."""
    mean = points.mean(axis=1)
    centered = points - mean[:, None]
    cov = centered @ centered.T / points.shape[1]
    cov = 0.5 * (cov + cov.T)
    vals, vecs = sym_eig_top(cov, k)
    return mean, vecs.T, np.maximum(vals, 0.0), float(np.trace(cov))


def pca_trajectories(snap_start: np.ndarray, snap_end: np.ndarray, sample: int = 200, basis=None) -> PcaProjection:
    """Project start and end value vectors into a shared 2-D PCA frame.

    The frame is fit on the union of all start and end columns unless an
    explicit ``basis`` (mean, components) is passed, which lets several runs
    share one frame. Arrows are drawn for ``sample`` strided positions.
    """
    if snap_start.shape != snap_end.shape:
        raise ValueError(f"snapshot shapes differ: {snap_start.shape} vs {snap_end.shape}")
    d_v, T = snap_start.shape
    if d_v < 2:
        raise ValueError("need at least 2 value dimensions for a 2-D projection")
    if basis is None:
        mean, comps, var, total = fit_pca(np.concatenate([snap_start, snap_end], axis=1))
    else:
        mean, comps = basis
        union = np.concatenate([snap_start, snap_end], axis=1) - mean[:, None]
        total = float(np.sum(union**2) / union.shape[1])
        var = np.sum((comps @ union) ** 2, axis=1) / union.shape[1]
    idx = stride_sample(T, sample)
    start = (comps @ (snap_start[:, idx] - mean[:, None])).T
    end = (comps @ (snap_end[:, idx] - mean[:, None])).T
    return PcaProjection(
        components=comps, mean=mean, positions=idx, start=start, end=end,
        explained_variance=var, total_variance=total,
    )


def shared_frame_trajectories(start: np.ndarray, ends: dict[str, np.ndarray], sample: int = 200) -> dict[str, PcaProjection]:
    """Trajectories of several runs from one common start, in one PCA frame.

    The frame is fit on the start columns together with every run's end
    columns, so arrow lengths are comparable across runs.
    """
    mean, comps, _, _ = fit_pca(np.concatenate([start, *ends.values()], axis=1))
    return {label: pca_trajectories(start, end, sample, basis=(mean, comps)) for label, end in ends.items()}
