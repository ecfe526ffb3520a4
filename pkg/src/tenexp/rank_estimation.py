"""Energy-based rank estimation for every candidate decomposition.

One primitive does all the work: keep the smallest number of leading
singular values whose cumulative squared magnitude reaches a fraction
``tau`` of the total.  Per-mode applications of that primitive yield
Tucker ranks directly, FCTN rank edges as pairwise minima, and the
t-product factorization's latent dimension / tubal rank via the mode-3
singular basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DegenerateInputError
from .tensor import as_tensor, mode_n_product, mode_n_unfold, svd

__all__ = [
    "ErmResult",
    "EnergyThresholds",
    "RankEstimate",
    "erm",
    "estimate_tucker_ranks",
    "estimate_fctn_ranks",
    "estimate_tf_ranks",
    "estimate_ranks",
]


@dataclass
class ErmResult:
    """Estimated rank plus the matching truncated left singular basis."""

    rank: int
    basis: np.ndarray


@dataclass
class EnergyThresholds:
    """Energy ratio thresholds, one per candidate family, each in (0, 1]."""

    tau_tucker: float = 0.95
    tau_fctn: float = 0.95
    tau_tf: float = 0.95

    def __post_init__(self):
        for name in ("tau_tucker", "tau_fctn", "tau_tf"):
            value = float(getattr(self, name))
            if not 0.0 < value <= 1.0:
                raise ArgumentError(f"{name}={value} must lie in (0, 1]")
            setattr(self, name, value)


@dataclass
class RankEstimate:
    """Ranks and spectral initializers for all candidate decompositions.

    The t-product fields are ``None`` for inputs of order above three.
    """

    tucker_ranks: list[int]
    tucker_bases: list[np.ndarray]
    fctn_ranks: dict[tuple[int, int], int]
    tf_tubal_rank: int | None = None
    tf_latent_dim: int | None = None
    tf_transform_init: np.ndarray | None = None


def erm(m: np.ndarray, tau: float) -> ErmResult:
    """Smallest rank whose leading singular values hold a ``tau`` fraction
    of the total squared singular-value energy.

    Ties (cumulative ratio exactly ``tau``) resolve to the smaller rank.
    Raises :class:`DegenerateInputError` for an all-zero matrix.
    """
    if not 0.0 < tau <= 1.0:
        raise ArgumentError(f"tau={tau} must lie in (0, 1]")
    result = svd(m)
    energies = np.cumsum(result.s**2)
    total = energies[-1]
    if total == 0.0:
        raise DegenerateInputError("all-zero matrix has no energy to threshold")
    rank = int(np.searchsorted(energies / total, tau, side="left")) + 1
    rank = min(rank, len(result.s))
    return ErmResult(rank=rank, basis=result.u[:, :rank].copy())


def estimate_tucker_ranks(
    x: np.ndarray, tau: float
) -> tuple[list[int], list[np.ndarray]]:
    """Per-mode energy ranks of the mode-n unfoldings, with their bases."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise ArgumentError(f"need order >= 3, got {x.ndim}")
    results = [erm(mode_n_unfold(x, n), tau) for n in range(1, x.ndim + 1)]
    return [r.rank for r in results], [r.basis for r in results]


def estimate_fctn_ranks(x: np.ndarray, tau: float) -> dict[tuple[int, int], int]:
    """Rank edge (n1, n2) = min of the two modes' energy ranks."""
    ranks, _ = estimate_tucker_ranks(x, tau)
    table = {}
    for n1 in range(1, x.ndim + 1):
        for n2 in range(n1 + 1, x.ndim + 1):
            table[(n1, n2)] = min(ranks[n1 - 1], ranks[n2 - 1])
    return table


def estimate_tf_ranks(
    x: np.ndarray, tau: float
) -> tuple[int, int, np.ndarray]:
    """Latent dimension, tubal rank, and transform initializer.

    The latent dimension is the energy rank of the mode-3 unfolding; its
    truncated basis is the transform initializer.  The tubal rank is the
    largest energy rank over the frontal slices of the tensor carried
    into that basis.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ArgumentError(f"t-product factorization needs order 3, got {x.ndim}")
    mode3 = erm(mode_n_unfold(x, 3), tau)
    latent_dim = mode3.rank
    transform = mode3.basis  # I_3 x latent_dim, orthonormal columns
    latent = mode_n_product(x, transform.T, 3)
    tubal_rank = max(
        erm(latent[:, :, n], tau).rank for n in range(latent_dim)
    )
    return tubal_rank, latent_dim, transform


def estimate_ranks(
    x: np.ndarray, thresholds: EnergyThresholds | None = None
) -> RankEstimate:
    """Run every estimator branch applicable to the order of ``x``."""
    x = as_tensor(x)
    thresholds = thresholds or EnergyThresholds()
    tucker_ranks, tucker_bases = estimate_tucker_ranks(x, thresholds.tau_tucker)
    fctn_ranks = estimate_fctn_ranks(x, thresholds.tau_fctn)
    estimate = RankEstimate(
        tucker_ranks=tucker_ranks,
        tucker_bases=tucker_bases,
        fctn_ranks=fctn_ranks,
    )
    if x.ndim == 3:
        tubal, latent, transform = estimate_tf_ranks(x, thresholds.tau_tf)
        estimate.tf_tubal_rank = tubal
        estimate.tf_latent_dim = latent
        estimate.tf_transform_init = transform
    return estimate
