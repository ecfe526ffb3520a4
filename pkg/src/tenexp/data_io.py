"""Tensor file I/O, synthetic data, masks, and normalization.

Tensors interchange as NPY version-1.0 files holding C-order float64
data; the reader rejects anything else and names the offending header
field.  Fitted factor sets travel in a small container format: one JSON
header line followed by the factor arrays as concatenated NPY blobs.

All randomness comes from ``numpy.random.default_rng`` (the PCG64
generator), so identical seeds reproduce identical bytes across runs and
platforms.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np
import numpy.lib.format as npy_format

from .decompositions import (
    CandidateDecomposition,
    FCTNFactors,
    TFFactors,
    TuckerFactors,
    compose,
)
from .errors import ArgumentError, DegenerateInputError, FormatError

__all__ = [
    "Mask",
    "SynthSpec",
    "read_tensor",
    "write_tensor",
    "gen_mask",
    "synth",
    "normalize01",
    "save_model",
    "load_model",
]

_DTYPE = np.dtype("<f8")


def write_tensor(path, x: np.ndarray) -> None:
    """Write ``x`` as an NPY v1.0 file (C order, float64)."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise ArgumentError("refusing to write non-finite values")
    with open(path, "wb") as f:
        npy_format.write_array(f, x, version=(1, 0))


def _read_array(f) -> np.ndarray:
    magic = f.read(6)
    if magic != b"\x93NUMPY":
        raise FormatError(f"bad magic {magic!r}, expected NPY")
    version = tuple(f.read(2))
    if version != (1, 0):
        raise FormatError(f"unsupported NPY version {version}, expected (1, 0)")
    try:
        shape, fortran_order, dtype = npy_format.read_array_header_1_0(f)
    except ValueError as exc:
        raise FormatError(f"malformed NPY header: {exc}") from exc
    if dtype != _DTYPE:
        raise FormatError(f"dtype {dtype.str!r} not supported, expected '<f8'")
    if fortran_order:
        raise FormatError("fortran_order=True not supported, expected C order")
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    raw = f.read(count * _DTYPE.itemsize)
    if len(raw) != count * _DTYPE.itemsize:
        raise FormatError(
            f"truncated data: expected {count * _DTYPE.itemsize} bytes, "
            f"got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype=_DTYPE).reshape(shape)
    if not np.all(np.isfinite(data)):
        raise FormatError("tensor data contains non-finite values")
    return data.copy()


def read_tensor(path) -> np.ndarray:
    """Read an NPY v1.0 float64 C-order tensor, validating the header."""
    with open(path, "rb") as f:
        return _read_array(f)


@dataclass
class Mask:
    """Binary observation mask with its nominal sampling rate."""

    data: np.ndarray
    sampling_rate: float


def gen_mask(shape, sr: float, seed: int | None = None) -> Mask:
    """Place exactly ``floor(sr * total)`` ones uniformly at random."""
    shape = tuple(int(s) for s in shape)
    if not 0.0 < sr <= 1.0:
        raise ArgumentError(f"sampling rate {sr} must lie in (0, 1]")
    total = int(np.prod(shape))
    ones = math.floor(sr * total)
    if ones == 0:
        raise ArgumentError(
            f"sampling rate {sr} leaves no observed entries on shape {shape}"
        )
    rng = np.random.default_rng(seed)
    flat = np.zeros(total)
    flat[rng.permutation(total)[:ones]] = 1.0
    return Mask(data=flat.reshape(shape), sampling_rate=float(sr))


@dataclass
class SynthSpec:
    """Recipe for one synthetic tensor with known generating factors."""

    kind: str  # tucker | fctn | tf | mixture
    shape: tuple[int, ...]
    rank: int
    latent_dim: int = 10
    seed: int = 0

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        if self.kind not in ("tucker", "fctn", "tf", "mixture"):
            raise ArgumentError(f"unknown synthetic kind {self.kind!r}")
        if len(self.shape) < 3:
            raise ArgumentError("synthetic tensors must have order >= 3")
        if self.kind in ("tf", "mixture") and len(self.shape) != 3:
            raise ArgumentError(
                f"kind {self.kind!r} needs a third-order shape, got "
                f"{len(self.shape)}"
            )
        if self.rank < 1 or self.latent_dim < 1:
            raise ArgumentError("rank and latent_dim must be >= 1")


def _gauss01(rng: np.random.Generator, shape) -> np.ndarray:
    """Factor entries: N(0.5, 0.25^2) clipped into [0, 1]."""
    return np.clip(rng.normal(0.5, 0.25, size=shape), 0.0, 1.0)


def _synth_tucker(rng, shape, rank) -> CandidateDecomposition:
    order = len(shape)
    core = _gauss01(rng, (rank,) * order)
    factors = [_gauss01(rng, (s, rank)) for s in shape]
    return CandidateDecomposition("tucker", TuckerFactors(core, factors))


def _synth_fctn(rng, shape, rank) -> CandidateDecomposition:
    order = len(shape)
    cores = []
    for n in range(order):
        core_shape = [rank] * order
        core_shape[n] = shape[n]
        cores.append(_gauss01(rng, tuple(core_shape)))
    return CandidateDecomposition("fctn", FCTNFactors(cores))


def _synth_tf(rng, shape, rank, latent_dim) -> CandidateDecomposition:
    i1, i2, i3 = shape
    a_hat = _gauss01(rng, (i1, rank, latent_dim))
    b_hat = _gauss01(rng, (rank, i2, latent_dim))
    transform = _gauss01(rng, (i3, latent_dim))
    return CandidateDecomposition("tf", TFFactors(a_hat, b_hat, transform))


def synth(spec: SynthSpec) -> tuple[np.ndarray, list[CandidateDecomposition]]:
    """Draw factors, compose the tensor, and return both.

    The mixture kind averages one tensor of each family (equal thirds)
    drawn in the fixed order tucker, fctn, tf.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "tucker":
        truth = [_synth_tucker(rng, spec.shape, spec.rank)]
    elif spec.kind == "fctn":
        truth = [_synth_fctn(rng, spec.shape, spec.rank)]
    elif spec.kind == "tf":
        truth = [_synth_tf(rng, spec.shape, spec.rank, spec.latent_dim)]
    else:
        truth = [
            _synth_tucker(rng, spec.shape, spec.rank),
            _synth_fctn(rng, spec.shape, spec.rank),
            _synth_tf(rng, spec.shape, spec.rank, spec.latent_dim),
        ]
    composed = [compose(c) for c in truth]
    tensor = sum(composed[1:], start=composed[0]) / len(composed)
    return tensor, truth


def normalize01(x: np.ndarray) -> np.ndarray:
    """Affine map sending the minimum to 0 and the maximum to 1."""
    x = np.asarray(x, dtype=np.float64)
    lo = float(x.min())
    hi = float(x.max())
    if hi == lo:
        raise DegenerateInputError("constant tensor cannot be normalized")
    return (x - lo) / (hi - lo)


# --- model container -------------------------------------------------------
#
# Layout: one UTF-8 JSON line (the header), then one NPY v1.0 blob per
# array, in exactly the order the header lists them.

_FACTOR_META = {
    "tucker": lambda f: {"ranks": list(f.ranks)},
    "fctn": lambda f: {
        "ranks": [[n1, n2, r] for (n1, n2), r in sorted(f.ranks().items())]
    },
    "tf": lambda f: {"tubal_rank": f.tubal_rank, "latent_dim": f.latent_dim},
}


def save_model(
    path,
    candidates: list[CandidateDecomposition],
    weights=None,
    support=None,
    extra: dict | None = None,
) -> None:
    """Serialize candidates (and optional gate info) to one container file."""
    entries = []
    arrays: list[np.ndarray] = []
    for c in candidates:
        meta = {"kind": c.kind, "shape": list(c.shape)}
        meta.update(_FACTOR_META[c.kind](c.factors))
        meta["array_count"] = len(c.arrays())
        entries.append(meta)
        arrays.extend(c.arrays())
    header = {"schema": 1, "kind": "model", "candidates": entries}
    if weights is not None:
        header["gate_weights"] = [float(w) for w in weights]
    if support is not None:
        header["support"] = [int(i) for i in support]
    if extra:
        header.update(extra)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for a in arrays:
            npy_format.write_array(
                f, np.ascontiguousarray(np.asarray(a, dtype=np.float64)),
                version=(1, 0),
            )


def _rebuild_candidate(meta: dict, arrays: list[np.ndarray]) -> CandidateDecomposition:
    kind = meta["kind"]
    if kind == "tucker":
        factors = TuckerFactors(core=arrays[0], factors=list(arrays[1:]))
    elif kind == "fctn":
        factors = FCTNFactors(cores=list(arrays))
    elif kind == "tf":
        factors = TFFactors(a_hat=arrays[0], b_hat=arrays[1], transform=arrays[2])
    else:
        raise FormatError(f"unknown candidate kind {kind!r} in container")
    return CandidateDecomposition(kind, factors, tuple(meta["shape"]))


def load_model(path) -> tuple[list[CandidateDecomposition], dict]:
    """Read a container written by :func:`save_model`.

    Returns the candidate list and the raw JSON header.
    """
    with open(path, "rb") as f:
        line = f.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"malformed container header: {exc}") from exc
        if header.get("kind") != "model" or "candidates" not in header:
            raise FormatError("container header is not a model header")
        candidates = []
        for meta in header["candidates"]:
            arrays = [_read_array(f) for _ in range(int(meta["array_count"]))]
            candidates.append(_rebuild_candidate(meta, arrays))
    return candidates, header


def save_arrays(path, header: dict, arrays: list[np.ndarray]) -> None:
    """Low-level container writer for non-model payloads (e.g. rank bases)."""
    header = dict(header)
    header.setdefault("schema", 1)
    header["array_count"] = len(arrays)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for a in arrays:
            npy_format.write_array(
                f, np.ascontiguousarray(np.asarray(a, dtype=np.float64)),
                version=(1, 0),
            )


def load_arrays(path) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as f:
        line = f.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"malformed container header: {exc}") from exc
        arrays = [_read_array(f) for _ in range(int(header.get("array_count", 0)))]
    return header, arrays
