"""TenExp: mixture-of-experts search over tensor decomposition structures.

The library fits and completes multi-dimensional arrays with a small set
of candidate decompositions (Tucker, fully-connected tensor network, and
a t-product-style factorization), estimates their ranks from singular
value energy, and routes between them with learnable top-k gating.

Submodules are imported lazily so that the command-line entry point can
configure threading before numpy loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    # tensor algebra
    "SvdResult": "tensor",
    "generalized_unfold": "tensor",
    "generalized_fold": "tensor",
    "mode_n_unfold": "tensor",
    "mode_n_product": "tensor",
    "tensor_contraction": "tensor",
    "facewise_product": "tensor",
    "hadamard": "tensor",
    "frobenius_norm": "tensor",
    "svd": "tensor",
    # decompositions
    "CPFactors": "decompositions",
    "TuckerFactors": "decompositions",
    "TTFactors": "decompositions",
    "TRFactors": "decompositions",
    "FCTNFactors": "decompositions",
    "TFFactors": "decompositions",
    "CandidateDecomposition": "decompositions",
    "cp_compose": "decompositions",
    "tucker_compose": "decompositions",
    "tt_compose": "decompositions",
    "tr_compose": "decompositions",
    "fctn_compose": "decompositions",
    "tf_compose": "decompositions",
    "compose": "decompositions",
    "special_case_embedding": "decompositions",
    "param_count": "decompositions",
    # rank estimation
    "ErmResult": "rank_estimation",
    "RankEstimate": "rank_estimation",
    "EnergyThresholds": "rank_estimation",
    "erm": "rank_estimation",
    "estimate_tucker_ranks": "rank_estimation",
    "estimate_fctn_ranks": "rank_estimation",
    "estimate_tf_ranks": "rank_estimation",
    "estimate_ranks": "rank_estimation",
    # gating
    "GateState": "gating",
    "GateWeights": "gating",
    "top_k_gate": "gating",
    "select_candidates": "gating",
    "gate_gradient": "gating",
    # optimization
    "ParamSet": "optim",
    "AdamState": "optim",
    "loss": "optim",
    "gradients": "optim",
    "adam_step": "optim",
    # recovery and metrics
    "RecoveryConfig": "recovery",
    "RecoveryReport": "recovery",
    "recover": "recovery",
    "fit": "recovery",
    "updating_schedule": "recovery",
    "metric_re": "recovery",
    "metric_cr": "recovery",
    "metric_psnr": "recovery",
    "metric_ssim": "recovery",
    "error_bound_rhs": "recovery",
    # data and files
    "Mask": "data_io",
    "SynthSpec": "data_io",
    "read_tensor": "data_io",
    "write_tensor": "data_io",
    "gen_mask": "data_io",
    "synth": "data_io",
    "normalize01": "data_io",
    "save_model": "data_io",
    "load_model": "data_io",
    # errors
    "TenexpError": "errors",
    "ArgumentError": "errors",
    "FormatError": "errors",
    "NumericalError": "errors",
    "DegenerateInputError": "errors",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        module = import_module(f".{_EXPORTS[name]}", __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(__all__))
