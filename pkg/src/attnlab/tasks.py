"""Task generators: the small random-target toy task and the sticky Markov chain."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from attnlab.forward import AttentionParams, TaskInstance
from attnlab.linalg import gaussian_matrix, make_rng

TOY_DIMS = dict(d_x=3, d_k=2, d_v=2, C=3)
TOY_T = 5
INIT_SCALE = 0.1
TOY_INIT_SCALE = 0.5


@dataclass(frozen=True)
class StickyChainSpec:
    vocab: int = 8
    stay_prob: float = 0.3
    T: int = 2000
    d_x: int = 20
    d_k: int = 10
    d_v: int = 15
    embed_scale: float = 2.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.stay_prob < 1.0:
            raise ValueError(f"stay_prob must lie in (0, 1), got {self.stay_prob}")
        if self.vocab < 2:
            raise ValueError(f"vocab must be at least 2, got {self.vocab}")
        if self.T < 1:
            raise ValueError("T must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def circular_distance(a: int, b: int, n: int) -> int:
    d = abs(a - b) % n
    return min(d, n - d)


def build_kernel(spec: StickyChainSpec) -> np.ndarray:
    """Transition matrix: ``stay_prob`` on the diagonal, the remainder spread
    over the other symbols with weight inversely proportional to circular distance."""
    n = spec.vocab
    P = np.zeros((n, n))
    for c in range(n):
        w = np.array([0.0 if s == c else 1.0 / circular_distance(c, s, n) for s in range(n)])
        P[c] = (1.0 - spec.stay_prob) * w / w.sum()
        P[c, c] = spec.stay_prob
    return P


def kernel_entropy(P: np.ndarray, row: int = 0) -> float:
    """Entropy in nats of one kernel row (all rows agree for circulant kernels)."""
    p = P[row]
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def sample_chain(P: np.ndarray, T: int, rng: np.random.Generator) -> np.ndarray:
    n = P.shape[0]
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(T)
    y = np.empty(T, dtype=np.int64)
    y[0] = min(int(u[0] * n), n - 1)
    for t in range(1, T):
        y[t] = int(np.searchsorted(cdf[y[t - 1]], u[t], side="right"))
    return y


def generate_sticky(spec: StickyChainSpec) -> tuple[TaskInstance, np.ndarray]:
    """Sample a sticky chain and its noisy previous-symbol embeddings.

    Column t of X is ``mu[y[t-1]] + noise``; column 0 uses a separate start
    embedding. Returns the (causal) task and the symbol sequence.
    """
    ss = np.random.SeedSequence([spec.seed, 1])
    chain_ss, embed_ss, noise_ss = ss.spawn(3)
    P = build_kernel(spec)
    y = sample_chain(P, spec.T, make_rng(chain_ss))
    erng = make_rng(embed_ss)
    mu = gaussian_matrix(erng, spec.d_x, spec.vocab, spec.embed_scale)
    mu_start = gaussian_matrix(erng, spec.d_x, 1, spec.embed_scale)[:, 0]
    noise = gaussian_matrix(make_rng(noise_ss), spec.d_x, spec.T, spec.noise_std)
    prev = np.concatenate([mu_start[:, None], mu[:, y[:-1]]], axis=1)
    X = prev + noise
    return TaskInstance(X=X, y=y, causal=True, n_classes=spec.vocab), y


def init_params(seed: int, d_x: int, d_k: int, d_v: int, C: int, scale: float = INIT_SCALE) -> AttentionParams:
    """Small Gaussian projections and a zero output bias."""
    rng = make_rng(np.random.SeedSequence([seed, 2]))
    return AttentionParams(
        W_Q=gaussian_matrix(rng, d_k, d_x, scale),
        W_K=gaussian_matrix(rng, d_k, d_x, scale),
        W_V=gaussian_matrix(rng, d_v, d_x, scale),
        W_O=gaussian_matrix(rng, C, d_v, scale),
        b=np.zeros(C),
    )


def sticky_params(spec: StickyChainSpec, seed: int | None = None, scale: float = INIT_SCALE) -> AttentionParams:
    return init_params(spec.seed if seed is None else seed, spec.d_x, spec.d_k, spec.d_v, spec.vocab, scale)


def generate_toy(seed: int, scale: float = TOY_INIT_SCALE) -> tuple[TaskInstance, AttentionParams]:
    rng = make_rng(np.random.SeedSequence([seed, 3]))
    X = rng.standard_normal((TOY_DIMS["d_x"], TOY_T))
    y = rng.integers(0, TOY_DIMS["C"], size=TOY_T)
    task = TaskInstance(X=X, y=y, causal=False, n_classes=TOY_DIMS["C"])
    return task, init_params(seed, scale=scale, **TOY_DIMS)
