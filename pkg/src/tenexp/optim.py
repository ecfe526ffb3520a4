"""Masked least-squares loss, hand-derived gradients, and Adam.

The loss is the squared Frobenius norm of the masked residual between
the gated mixture of composed candidates and the observed tensor.  Each
candidate family has a closed-form adjoint (the residual contracted
against all factors but one), so no autodiff machinery is involved; the
finite-difference tests pin the derivations down.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .decompositions import (
    CandidateDecomposition,
    FCTNFactors,
    TFFactors,
    TuckerFactors,
    _fctn_subscripts,
    compose,
)
from .errors import ArgumentError
from .gating import GateState, GateWeights, gate_gradient, top_k_gate
from .tensor import facewise_product, mode_n_product, mode_n_unfold

__all__ = [
    "ParamSet",
    "AdamState",
    "GradResult",
    "loss",
    "gradients",
    "adam_step",
]


@dataclass
class ParamSet:
    """Everything the optimizer may touch: candidates plus gate scores."""

    candidates: list[CandidateDecomposition]
    gates: GateState

    def __post_init__(self):
        if not self.candidates:
            raise ArgumentError("need at least one candidate")
        shapes = {c.shape for c in self.candidates}
        if len(shapes) != 1:
            raise ArgumentError(f"candidates disagree on target shape: {shapes}")
        if self.gates.scores.size != len(self.candidates):
            raise ArgumentError(
                f"{self.gates.scores.size} gate scores for "
                f"{len(self.candidates)} candidates"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.candidates[0].shape


def _check_problem(params: ParamSet, observed: np.ndarray, mask: np.ndarray):
    observed = np.asarray(observed, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if observed.shape != params.shape:
        raise ArgumentError(
            f"observed shape {observed.shape} != candidate shape {params.shape}"
        )
    if mask.shape != observed.shape:
        raise ArgumentError(
            f"mask shape {mask.shape} != observed shape {observed.shape}"
        )
    return observed, mask


def _mixture(
    params: ParamSet, weights: GateWeights
) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Composed estimate plus the per-support-candidate tensors."""
    composed = {int(i): compose(params.candidates[i]) for i in weights.support}
    xhat = np.zeros(params.shape)
    for i, tensor in composed.items():
        lam = weights.lambdas[i]
        if lam != 0.0:
            xhat += lam * tensor
    return xhat, composed


def loss(
    params: ParamSet,
    observed: np.ndarray,
    mask: np.ndarray,
    weights: GateWeights | None = None,
) -> float:
    """Squared Frobenius norm of the masked residual.

    ``weights`` overrides the gate-derived mixture weights; recovery uses
    this to train with frozen weights after candidate selection.
    """
    observed, mask = _check_problem(params, observed, mask)
    if weights is None:
        weights = top_k_gate(params.gates.scores, params.gates.k)
    xhat, _ = _mixture(params, weights)
    residual = mask * (xhat - observed)
    return float(np.vdot(residual, residual))


def _tucker_vjp(f: TuckerFactors, grad_out: np.ndarray) -> list[np.ndarray]:
    order = grad_out.ndim
    dcore = grad_out
    for n in range(1, order + 1):
        dcore = mode_n_product(dcore, f.factors[n - 1].T, n)
    grads = [dcore]
    for n in range(1, order + 1):
        partial = f.core
        for m in range(1, order + 1):
            if m != n:
                partial = mode_n_product(partial, f.factors[m - 1], m)
        grads.append(mode_n_unfold(grad_out, n) @ mode_n_unfold(partial, n).T)
    return grads


def _fctn_vjp(f: FCTNFactors, grad_out: np.ndarray) -> list[np.ndarray]:
    subs, out_sub = _fctn_subscripts(f.order)
    grads = []
    for n in range(f.order):
        operands = [grad_out, out_sub]
        for m in range(f.order):
            if m != n:
                operands.extend([f.cores[m], subs[m]])
        grads.append(np.einsum(*operands, subs[n], optimize=True))
    return grads


def _tf_vjp(f: TFFactors, grad_out: np.ndarray) -> list[np.ndarray]:
    faces = facewise_product(f.a_hat, f.b_hat)
    d_transform = np.einsum("ijk,ijt->kt", grad_out, faces)
    d_faces = np.einsum("ijk,kt->ijt", grad_out, f.transform)
    d_a = np.einsum("ijt,rjt->irt", d_faces, f.b_hat)
    d_b = np.einsum("ijt,irt->rjt", d_faces, f.a_hat)
    return [d_a, d_b, d_transform]


def _candidate_vjp(
    candidate: CandidateDecomposition, grad_out: np.ndarray
) -> list[np.ndarray]:
    if candidate.kind == "tucker":
        return _tucker_vjp(candidate.factors, grad_out)
    if candidate.kind == "fctn":
        return _fctn_vjp(candidate.factors, grad_out)
    return _tf_vjp(candidate.factors, grad_out)


def _zeros_like_arrays(candidate: CandidateDecomposition) -> list[np.ndarray]:
    return [np.zeros_like(a) for a in candidate.arrays()]


@dataclass
class GradResult:
    """Loss value plus gradient buffers congruent to the parameter set."""

    loss: float
    factors: list[list[np.ndarray]]
    gates: np.ndarray


def gradients(
    params: ParamSet,
    observed: np.ndarray,
    mask: np.ndarray,
    update_factors: bool = True,
    update_gates: bool = True,
    weights: GateWeights | None = None,
    candidate_subset: Sequence[int] | None = None,
) -> GradResult:
    """Exact gradients of :func:`loss` with respect to every parameter.

    ``update_factors`` / ``update_gates`` zero out one side, supporting
    alternating update schedules.  ``candidate_subset`` restricts factor
    gradients to the listed candidate indices (the rest stay zero), which
    the per-candidate updating order uses to avoid wasted work.
    """
    observed, mask = _check_problem(params, observed, mask)
    frozen_weights = weights is not None
    if weights is None:
        weights = top_k_gate(params.gates.scores, params.gates.k)
    xhat, composed = _mixture(params, weights)
    residual = mask * (xhat - observed)
    loss_value = float(np.vdot(residual, residual))
    upstream = 2.0 * residual  # d(loss)/d(xhat); mask is binary so m^2 = m

    active = set(range(len(params.candidates)))
    if candidate_subset is not None:
        active = set(int(i) for i in candidate_subset)

    factor_grads = []
    for i, candidate in enumerate(params.candidates):
        lam = float(weights.lambdas[i])
        if not update_factors or lam == 0.0 or i not in active:
            factor_grads.append(_zeros_like_arrays(candidate))
        else:
            factor_grads.append(_candidate_vjp(candidate, lam * upstream))

    if update_gates and not frozen_weights:
        d_lambda = np.zeros(len(params.candidates))
        for i in weights.support:
            d_lambda[i] = float(np.vdot(upstream, composed[int(i)]))
        gate_grads = gate_gradient(params.gates.scores, params.gates.k, d_lambda)
    else:
        gate_grads = np.zeros_like(params.gates.scores)

    return GradResult(loss=loss_value, factors=factor_grads, gates=gate_grads)


@dataclass
class AdamState:
    """Bias-corrected Adam moments for one bundle of parameter arrays."""

    step: int
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float

    @classmethod
    def for_params(
        cls,
        params: Sequence[np.ndarray],
        learning_rate: float = 1e-2,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> "AdamState":
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ArgumentError("beta1 and beta2 must lie in [0, 1)")
        if epsilon <= 0.0:
            raise ArgumentError("epsilon must be positive")
        return cls(
            step=0,
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(
    state: AdamState,
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
) -> tuple[Sequence[np.ndarray], AdamState]:
    """One in-place Adam update of the bundle.

    Arrays whose gradient is identically zero are left untouched (their
    moments do not decay either), so frozen parameter groups are
    bit-identical after any number of steps.
    """
    if len(params) != len(state.first_moment) or len(params) != len(grads):
        raise ArgumentError("params, grads, and moments must be congruent")
    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ArgumentError(f"gradient shape {g.shape} != param {p.shape}")
        if not g.any():
            continue
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
    return params, state
