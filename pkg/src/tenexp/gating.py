"""Top-k gating over the candidate decompositions.

Scores are plain learnable reals, one per candidate.  Gating keeps the k
largest scores, softmaxes them, and assigns exactly zero weight to the
rest, so the active support set is unambiguous and off-support gradients
vanish identically.  Candidate indices are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError

__all__ = [
    "GateState",
    "GateWeights",
    "top_k_gate",
    "select_candidates",
    "gate_gradient",
    "softmax",
]


@dataclass
class GateState:
    """Learnable gate scores plus the active top-k size."""

    scores: np.ndarray
    k: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1 or self.scores.size < 1:
            raise ArgumentError("scores must be a non-empty vector")
        if not 1 <= self.k <= self.scores.size:
            raise ArgumentError(
                f"k={self.k} out of range 1..{self.scores.size}"
            )


@dataclass
class GateWeights:
    """Normalized mixture weights; entries off the support are exact zeros."""

    lambdas: np.ndarray
    support: np.ndarray


def softmax(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    shifted = np.exp(values - values.max())
    return shifted / shifted.sum()


def _check_gate_args(g: np.ndarray, k: int) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1 or g.size < 1:
        raise ArgumentError("scores must be a non-empty vector")
    if not np.all(np.isfinite(g)):
        raise ArgumentError("scores must be finite")
    if not 1 <= k <= g.size:
        raise ArgumentError(f"k={k} out of range 1..{g.size}")
    return g


def _top_k_indices(g: np.ndarray, k: int) -> np.ndarray:
    # stable sort on the negated scores: ties go to the lower index
    order = np.argsort(-g, kind="stable")
    return np.sort(order[:k])


def top_k_gate(g: np.ndarray, k: int) -> GateWeights:
    """Softmax over the k largest scores; everything else is hard zero.

    Ties on the k-th value break toward the lower index.
    """
    g = _check_gate_args(g, k)
    support = _top_k_indices(g, k)
    lambdas = np.zeros_like(g)
    lambdas[support] = softmax(g[support])
    return GateWeights(lambdas=lambdas, support=support)


def select_candidates(
    g: np.ndarray, k: int, strategy: str, seed: int | None = None
) -> np.ndarray:
    """Pick k candidate indices, either the k best scores ("max") or a
    seeded without-replacement draw proportional to softmax(g) ("random")."""
    g = _check_gate_args(g, k)
    if strategy == "max":
        return _top_k_indices(g, k)
    if strategy == "random":
        rng = np.random.default_rng(seed)
        chosen = rng.choice(g.size, size=k, replace=False, p=softmax(g))
        return np.sort(chosen)
    raise ArgumentError(f"unknown selection strategy {strategy!r}")


def gate_gradient(g: np.ndarray, k: int, upstream: np.ndarray) -> np.ndarray:
    """Backpropagate d(loss)/d(lambda) through the top-k softmax.

    On the support this is the usual softmax Jacobian; off-support scores
    get exactly zero gradient because their weights are hard zeros.
    """
    g = _check_gate_args(g, k)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != g.shape:
        raise ArgumentError(
            f"upstream shape {upstream.shape} != scores shape {g.shape}"
        )
    weights = top_k_gate(g, k)
    lam = weights.lambdas
    inner = float(np.dot(upstream, lam))
    return lam * (upstream - inner)
