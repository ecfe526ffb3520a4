"""Two-phase fitting/completion pipeline, evaluation metrics, and the
singular-value-tail error bound.

Phase 1 trains all candidate decompositions jointly under top-L gating
with learnable gate scores.  If fewer experts are requested than exist,
the support is selected (by score or by seeded sampling), the selected
experts are reinitialized, the gate weights are frozen to the softmax of
the end-of-phase-1 scores restricted to the support, and phase 2 trains
the selected factors alone.  Observed entries always pass through to the
output unchanged.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.signal import convolve2d

from .decompositions import (
    CandidateDecomposition,
    FCTNFactors,
    TFFactors,
    TuckerFactors,
    compose,
    param_count,
)
from .errors import ArgumentError, DegenerateInputError, NumericalError
from .gating import GateState, GateWeights, select_candidates, softmax, top_k_gate
from .optim import AdamState, ParamSet, adam_step, gradients
from .rank_estimation import EnergyThresholds, RankEstimate, estimate_ranks
from .tensor import as_tensor, frobenius_norm, mode_n_product, mode_n_unfold

__all__ = [
    "RecoveryConfig",
    "RecoveryReport",
    "UpdateStep",
    "updating_schedule",
    "recover",
    "fit",
    "metric_re",
    "metric_cr",
    "metric_psnr",
    "metric_ssim",
    "error_bound_rhs",
]


@dataclass
class RecoveryConfig:
    """All knobs of one recovery run.

    ``k=None`` means "keep every candidate" (no selection phase).  The
    candidate set defaults to (tucker, fctn, tf) for third-order data and
    (tucker, fctn) above that, because the face-wise product is only
    defined for third-order tensors.
    """

    thresholds: EnergyThresholds = field(default_factory=EnergyThresholds)
    k: int | None = None
    t_max: int = 5000
    updating_order: str = "II"
    selection_strategy: str = "max"
    seed: int = 0
    lr_factors: float = 1e-2
    lr_gates: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    init_std: float = 0.1
    candidate_kinds: tuple[str, ...] | None = None
    early_stop_window: int = 100
    early_stop_rel_tol: float = 1e-9
    warm_start: bool = False
    trace_every: int = 50

    def __post_init__(self):
        if isinstance(self.thresholds, (tuple, list)):
            self.thresholds = EnergyThresholds(*self.thresholds)
        if self.t_max < 1:
            raise ArgumentError("t_max must be >= 1")
        if self.updating_order not in ("I", "II", "III"):
            raise ArgumentError(
                f"updating order {self.updating_order!r} not one of I, II, III"
            )
        if self.selection_strategy not in ("max", "random"):
            raise ArgumentError(
                f"selection strategy {self.selection_strategy!r} not one of "
                f"max, random"
            )
        if self.candidate_kinds is not None:
            self.candidate_kinds = tuple(self.candidate_kinds)

    def resolved(self, order: int) -> dict:
        """Config echo with the order-dependent defaults filled in."""
        kinds = self.candidate_kinds or _default_kinds(order)
        out = asdict(self)
        out["thresholds"] = {
            "tau_tucker": self.thresholds.tau_tucker,
            "tau_fctn": self.thresholds.tau_fctn,
            "tau_tf": self.thresholds.tau_tf,
        }
        out["candidate_kinds"] = list(kinds)
        out["k"] = self.k if self.k is not None else len(kinds)
        return out


def _default_kinds(order: int) -> tuple[str, ...]:
    return ("tucker", "fctn", "tf") if order == 3 else ("tucker", "fctn")


@dataclass(frozen=True)
class UpdateStep:
    """One sub-step of an iteration: which candidate positions get a factor
    update and which gate components get a score update."""

    candidates: tuple[int, ...]
    gates: tuple[int, ...]


def updating_schedule(order: str, num_candidates: int) -> list[UpdateStep]:
    """Per-iteration plan for the three updating orders.

    I: one simultaneous step on all factors and all gate scores.
    II: all factors first (scores frozen), then all scores (factors frozen).
    III: per candidate, its factors then its own score, everything else
    frozen (2 * num_candidates sub-steps).
    """
    everyone = tuple(range(num_candidates))
    if order == "I":
        return [UpdateStep(candidates=everyone, gates=everyone)]
    if order == "II":
        return [
            UpdateStep(candidates=everyone, gates=()),
            UpdateStep(candidates=(), gates=everyone),
        ]
    if order == "III":
        steps = []
        for i in range(num_candidates):
            steps.append(UpdateStep(candidates=(i,), gates=()))
            steps.append(UpdateStep(candidates=(), gates=(i,)))
        return steps
    raise ArgumentError(f"updating order {order!r} not one of I, II, III")


def _init_candidate(
    kind: str,
    reference: np.ndarray,
    est: RankEstimate,
    rng: np.random.Generator,
    init_std: float,
) -> CandidateDecomposition:
    """Spectral initialization where the rank estimate provides a basis,
    small zero-mean Gaussian everywhere else."""
    shape = reference.shape
    if kind == "tucker":
        core = reference
        for n, basis in enumerate(est.tucker_bases, start=1):
            core = mode_n_product(core, basis.T, n)
        factors = [basis.copy() for basis in est.tucker_bases]
        return CandidateDecomposition(kind, TuckerFactors(core, factors))
    if kind == "fctn":
        order = len(shape)
        cores = []
        for n in range(1, order + 1):
            sizes = []
            for k in range(1, order + 1):
                if k < n:
                    sizes.append(est.fctn_ranks[(k, n)])
                elif k == n:
                    sizes.append(shape[n - 1])
                else:
                    sizes.append(est.fctn_ranks[(n, k)])
            cores.append(rng.normal(0.0, init_std, size=tuple(sizes)))
        return CandidateDecomposition(kind, FCTNFactors(cores))
    if kind == "tf":
        if est.tf_transform_init is None:
            raise ArgumentError("no t-product rank estimate for this order")
        i1, i2, _ = shape
        r = est.tf_tubal_rank
        ell = est.tf_latent_dim
        return CandidateDecomposition(
            kind,
            TFFactors(
                a_hat=rng.normal(0.0, init_std, size=(i1, r, ell)),
                b_hat=rng.normal(0.0, init_std, size=(r, i2, ell)),
                transform=est.tf_transform_init.copy(),
            ),
        )
    raise ArgumentError(f"unknown candidate kind {kind!r}")


def _flatten(candidates, positions) -> list[np.ndarray]:
    arrays = []
    for i in positions:
        arrays.extend(candidates[i].arrays())
    return arrays


def _train_phase(
    candidates: list[CandidateDecomposition],
    scores: np.ndarray,
    observed: np.ndarray,
    mask: np.ndarray,
    config: RecoveryConfig,
    active: list[int],
    gates_learnable: bool,
    fixed_weights: GateWeights | None,
    trace: list[dict] | None,
    phase: str,
):
    """Run one training phase; mutates factors (and scores when learnable)."""
    params = ParamSet(
        candidates=candidates,
        gates=GateState(scores=scores, k=scores.size),
    )
    steps = updating_schedule(config.updating_order, len(active))
    if not gates_learnable:
        steps = [
            UpdateStep(candidates=s.candidates, gates=())
            for s in steps
            if s.candidates
        ]

    factor_states: dict[int, AdamState] = {}
    gate_states: dict[int, AdamState] = {}
    for idx, step in enumerate(steps):
        if step.candidates:
            bundle = _flatten(candidates, [active[j] for j in step.candidates])
            factor_states[idx] = AdamState.for_params(
                bundle, config.lr_factors, config.beta1, config.beta2,
                config.epsilon,
            )
        if step.gates:
            comps = [active[j] for j in step.gates]
            view = scores if len(comps) == scores.size else scores[comps[0]:comps[0] + 1]
            gate_states[idx] = AdamState.for_params(
                [view], config.lr_gates, config.beta1, config.beta2,
                config.epsilon,
            )

    curve: list[float] = []
    window = config.early_stop_window
    for t in range(1, config.t_max + 1):
        for idx, step in enumerate(steps):
            positions = [active[j] for j in step.candidates]
            want_gates = bool(step.gates) and gates_learnable
            result = gradients(
                params,
                observed,
                mask,
                update_factors=bool(positions),
                update_gates=want_gates,
                weights=fixed_weights,
                candidate_subset=positions if positions else None,
            )
            if idx == 0:
                if not math.isfinite(result.loss):
                    raise NumericalError(
                        f"non-finite loss at {phase} iteration {t}"
                    )
                curve.append(result.loss)
            if positions:
                arrays = _flatten(candidates, positions)
                grads = []
                for i in positions:
                    grads.extend(result.factors[i])
                adam_step(factor_states[idx], arrays, grads)
            if want_gates:
                comps = [active[j] for j in step.gates]
                if len(comps) == scores.size:
                    adam_step(gate_states[idx], [scores], [result.gates])
                else:
                    i = comps[0]
                    adam_step(
                        gate_states[idx],
                        [scores[i:i + 1]],
                        [result.gates[i:i + 1]],
                    )
        if trace is not None and (t % config.trace_every == 0 or t == 1):
            lam = (
                fixed_weights.lambdas
                if fixed_weights is not None
                else top_k_gate(scores, scores.size).lambdas
            )
            trace.append({"phase": phase, "iteration": t,
                          "weights": [float(w) for w in lam]})
        if len(curve) > window:
            prev = curve[-1 - window]
            if abs(prev - curve[-1]) <= config.early_stop_rel_tol * max(
                abs(prev), 1e-300
            ):
                break
    return curve


@dataclass
class RecoveryReport:
    """Everything one run produced: the recovered tensor, the fitted
    factors, metrics, gate diagnostics, loss curves, and a config echo."""

    recovered: np.ndarray
    candidates: list[CandidateDecomposition]
    metrics: dict
    gate_scores: list[float]
    gate_weights: list[float]
    support: list[int]
    selected_kinds: list[str]
    ranks: dict
    loss_curve: dict
    iterations: dict
    gate_trace: list[dict]
    config: dict
    wall_time_s: float

    def to_json_dict(self) -> dict:
        """JSON-ready view (drops the tensors; infinities become "inf")."""
        metrics = {}
        for name, value in self.metrics.items():
            if value is None:
                metrics[name] = None
            elif math.isinf(value):
                metrics[name] = "inf"
            else:
                metrics[name] = float(value)
        return {
            "schema": 1,
            "config": self.config,
            "ranks": self.ranks,
            "metrics": metrics,
            "gate": {
                "scores": self.gate_scores,
                "weights": self.gate_weights,
                "support": self.support,
                "kinds": self.selected_kinds,
                "trace": self.gate_trace,
            },
            "loss": self.loss_curve,
            "iterations": self.iterations,
            "wall_time_s": self.wall_time_s,
        }


def _ranks_echo(est: RankEstimate) -> dict:
    out = {
        "tucker": [int(r) for r in est.tucker_ranks],
        "fctn": [
            [n1, n2, int(r)] for (n1, n2), r in sorted(est.fctn_ranks.items())
        ],
    }
    if est.tf_latent_dim is not None:
        out["tf"] = {
            "tubal_rank": int(est.tf_tubal_rank),
            "latent_dim": int(est.tf_latent_dim),
        }
    else:
        out["tf"] = None
    return out


def recover(
    observed: np.ndarray,
    mask: np.ndarray,
    config: RecoveryConfig | None = None,
    truth: np.ndarray | None = None,
) -> RecoveryReport:
    """Fit the gated mixture to the observed entries and fill the rest.

    ``mask`` must be binary with at least one observed entry.  When a
    ground-truth tensor is supplied the report's metrics are computed
    against it; otherwise they are computed against the observations
    (which is exact for fitting, i.e. an all-ones mask).
    """
    started = time.perf_counter()
    config = config or RecoveryConfig()
    observed = as_tensor(observed)
    mask = as_tensor(mask)
    if mask.shape != observed.shape:
        raise ArgumentError(
            f"mask shape {mask.shape} != observed shape {observed.shape}"
        )
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ArgumentError("mask must be binary (entries 0 or 1)")
    if not mask.any():
        raise ArgumentError("mask has no observed entries")
    if not np.all(np.isfinite(observed)):
        raise ArgumentError("observed tensor has non-finite entries")

    all_ones = bool(mask.all())
    if all_ones:
        filled = observed
    else:
        fill_value = float(observed[mask == 1.0].mean())
        filled = np.where(mask == 1.0, observed, fill_value)

    est = estimate_ranks(filled, config.thresholds)
    kinds = config.candidate_kinds or _default_kinds(observed.ndim)
    num = len(kinds)
    k = config.k if config.k is not None else num
    if not 1 <= k <= num:
        raise ArgumentError(f"k={k} out of range 1..{num}")

    rng = np.random.default_rng(config.seed)
    candidates = [
        _init_candidate(kind, filled, est, rng, config.init_std)
        for kind in kinds
    ]
    scores = np.zeros(num)

    trace: list[dict] = []
    curve1 = _train_phase(
        candidates, scores, observed, mask, config,
        active=list(range(num)), gates_learnable=True, fixed_weights=None,
        trace=trace, phase="phase1",
    )

    curve2 = None
    if k < num:
        selection_seed = int(rng.integers(0, 2**63 - 1))
        support = select_candidates(
            scores, k, config.selection_strategy, selection_seed
        )
        if not config.warm_start:
            for i in support:
                candidates[int(i)] = _init_candidate(
                    kinds[int(i)], filled, est, rng, config.init_std
                )
        lambdas = np.zeros(num)
        lambdas[support] = softmax(scores[support])
        weights = GateWeights(lambdas=lambdas, support=support)
        curve2 = _train_phase(
            candidates, scores, observed, mask, config,
            active=[int(i) for i in support], gates_learnable=False,
            fixed_weights=weights, trace=trace, phase="phase2",
        )
    else:
        weights = top_k_gate(scores, num)
        support = weights.support

    xhat = np.zeros(observed.shape)
    for i in support:
        xhat += weights.lambdas[int(i)] * compose(candidates[int(i)])
    recovered = xhat if all_ones else np.where(mask == 1.0, observed, xhat)

    reference = truth if truth is not None else (observed if all_ones else None)
    metrics: dict = {}
    if reference is not None:
        reference = as_tensor(reference)
        metrics["re"] = metric_re(reference, recovered)
        metrics["psnr"] = metric_psnr(reference, recovered)
        metrics["ssim"] = metric_ssim(reference, recovered)
    else:
        denom = frobenius_norm(mask * observed)
        residual = frobenius_norm(mask * (xhat - observed))
        metrics["re"] = residual / denom if denom > 0 else None
        metrics["psnr"] = None
        metrics["ssim"] = None
    active_candidates = [candidates[int(i)] for i in support]
    metrics["cr"] = metric_cr(active_candidates, weights, observed.size)

    return RecoveryReport(
        recovered=recovered,
        candidates=candidates,
        metrics=metrics,
        gate_scores=[float(s) for s in scores],
        gate_weights=[float(w) for w in weights.lambdas],
        support=[int(i) for i in support],
        selected_kinds=[kinds[int(i)] for i in support],
        ranks=_ranks_echo(est),
        loss_curve={"phase1": curve1, "phase2": curve2},
        iterations={
            "phase1": len(curve1),
            "phase2": len(curve2) if curve2 is not None else None,
        },
        gate_trace=trace,
        config=config.resolved(observed.ndim),
        wall_time_s=time.perf_counter() - started,
    )


def fit(
    x: np.ndarray,
    config: RecoveryConfig | None = None,
    truth: np.ndarray | None = None,
) -> RecoveryReport:
    """Recovery with an all-ones mask: plain unsupervised fitting."""
    x = as_tensor(x)
    return recover(x, np.ones_like(x), config, truth=truth)


# --- metrics ---------------------------------------------------------------


def metric_re(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Relative Frobenius error ||truth - estimate|| / ||truth||."""
    truth = as_tensor(truth)
    estimate = as_tensor(estimate)
    if truth.shape != estimate.shape:
        raise ArgumentError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    denom = frobenius_norm(truth)
    if denom == 0.0:
        raise DegenerateInputError("zero truth tensor: relative error undefined")
    return frobenius_norm(truth - estimate) / denom


def metric_cr(
    candidates: list[CandidateDecomposition],
    weights: GateWeights,
    target_elements: int,
) -> float:
    """Stored parameters (support factors plus the active gate weights) as
    a percentage of the full tensor's element count."""
    if target_elements <= 0:
        raise ArgumentError("target element count must be positive")
    stored = sum(param_count(c) for c in candidates) + len(weights.support)
    return 100.0 * stored / target_elements


def _slices(x: np.ndarray) -> np.ndarray:
    if x.ndim < 2:
        raise ArgumentError("metric needs order >= 2")
    return x.reshape(x.shape[0], x.shape[1], -1)


def metric_psnr(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Mean over trailing-mode slices of 10*log10(1 / MSE), peak value 1.

    Identical inputs give positive infinity.
    """
    truth = as_tensor(truth)
    estimate = as_tensor(estimate)
    if truth.shape != estimate.shape:
        raise ArgumentError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    t = _slices(truth)
    e = _slices(estimate)
    values = []
    for s in range(t.shape[2]):
        mse = float(np.mean((t[:, :, s] - e[:, :, s]) ** 2))
        values.append(math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse))
    return float(np.mean(values)) if all(map(math.isfinite, values)) else math.inf


_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _ssim_window(side: int) -> np.ndarray:
    # 11x11 Gaussian with sigma 1.5 when the slice allows it
    size = min(11, side if side % 2 == 1 else side - 1)
    size = max(size, 1)
    offsets = np.arange(size) - (size - 1) / 2
    g = np.exp(-(offsets**2) / (2.0 * 1.5**2))
    window = np.outer(g, g)
    return window / window.sum()


def metric_ssim(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Mean structural similarity over trailing-mode slices.

    Standard windowed form: Gaussian window (11x11, sigma 1.5, shrunk for
    small slices), stabilizers K1=0.01 and K2=0.03, dynamic range 1.
    """
    truth = as_tensor(truth)
    estimate = as_tensor(estimate)
    if truth.shape != estimate.shape:
        raise ArgumentError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    t = _slices(truth)
    e = _slices(estimate)
    window = _ssim_window(min(t.shape[0], t.shape[1]))
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    values = []
    for s in range(t.shape[2]):
        a = t[:, :, s]
        b = e[:, :, s]
        mu_a = convolve2d(a, window, mode="valid")
        mu_b = convolve2d(b, window, mode="valid")
        var_a = convolve2d(a * a, window, mode="valid") - mu_a**2
        var_b = convolve2d(b * b, window, mode="valid") - mu_b**2
        cov = convolve2d(a * b, window, mode="valid") - mu_a * mu_b
        ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
            (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        )
        values.append(float(ssim_map.mean()))
    return float(np.mean(values))


# --- approximation error bound ---------------------------------------------


def _numerical_rank(s: np.ndarray, rows: int, cols: int) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = s[0] * max(rows, cols) * np.finfo(np.float64).eps
    return int(np.sum(s > tol))


def error_bound_rhs(
    x: np.ndarray, ranks: RankEstimate, lambdas: GateWeights
) -> float:
    """Upper bound on the squared mixture approximation error of a
    third-order tensor, evaluated from singular-value tails.

    Term by term: the Tucker part sums, over each mode, the squared
    singular values of the mode unfolding beyond the Tucker rank, scaled
    by that expert's squared weight.  The network part does the same per
    mode pair, reading the tail from whichever of the two unfoldings has
    the smaller numerical rank (ties go to the lower mode).  The
    t-product part sums slice tails beyond the tubal rank in the latent
    basis plus the mode-3 tail beyond the latent dimension.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ArgumentError(f"error bound needs a third-order tensor, got {x.ndim}")
    if ranks.tf_latent_dim is None or ranks.tf_transform_init is None:
        raise ArgumentError("rank estimate lacks the t-product fields")
    lam = np.asarray(lambdas.lambdas, dtype=np.float64)
    if lam.size != 3:
        raise ArgumentError(f"need 3 mixture weights, got {lam.size}")

    unfoldings = [mode_n_unfold(x, n) for n in (1, 2, 3)]
    spectra = [np.linalg.svd(u, compute_uv=False) for u in unfoldings]
    numranks = [
        _numerical_rank(s, u.shape[0], u.shape[1])
        for s, u in zip(spectra, unfoldings)
    ]

    for n in (1, 2, 3):
        if ranks.tucker_ranks[n - 1] > numranks[n - 1]:
            raise ArgumentError(
                f"assumption violated: Tucker rank {ranks.tucker_ranks[n - 1]} "
                f"exceeds rank {numranks[n - 1]} of the mode-{n} unfolding"
            )
    for (n1, n2), r in ranks.fctn_ranks.items():
        if r > min(numranks[n1 - 1], numranks[n2 - 1]):
            raise ArgumentError(
                f"assumption violated: network rank {r} for modes ({n1},{n2}) "
                f"exceeds min unfolding rank "
                f"{min(numranks[n1 - 1], numranks[n2 - 1])}"
            )
    ell = int(ranks.tf_latent_dim)
    tubal = int(ranks.tf_tubal_rank)
    if ell > numranks[2]:
        raise ArgumentError(
            f"assumption violated: latent dimension {ell} exceeds rank "
            f"{numranks[2]} of the mode-3 unfolding"
        )
    latent = mode_n_product(x, ranks.tf_transform_init.T, 3)
    slice_spectra = []
    for n in range(ell):
        s = np.linalg.svd(latent[:, :, n], compute_uv=False)
        nr = _numerical_rank(s, latent.shape[0], latent.shape[1])
        if tubal > nr:
            raise ArgumentError(
                f"assumption violated: tubal rank {tubal} exceeds rank {nr} "
                f"of latent slice {n + 1}"
            )
        slice_spectra.append(s)

    tucker_term = sum(
        float(np.sum(spectra[n][ranks.tucker_ranks[n]:] ** 2)) for n in range(3)
    )
    fctn_term = 0.0
    for (n1, n2), r in sorted(ranks.fctn_ranks.items()):
        pick = n1 if numranks[n1 - 1] <= numranks[n2 - 1] else n2
        fctn_term += float(np.sum(spectra[pick - 1][r:] ** 2))
    tf_term = sum(float(np.sum(s[tubal:] ** 2)) for s in slice_spectra)
    tf_term += float(np.sum(spectra[2][ell:] ** 2))

    return float(
        lam[0] ** 2 * tucker_term
        + lam[1] ** 2 * fctn_term
        + lam[2] ** 2 * tf_term
    )
