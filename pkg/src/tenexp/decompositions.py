"""Factor containers and composition maps for the decomposition families.

Six formats are supported: CP, Tucker, tensor-train (TT), tensor-ring
(TR), fully-connected tensor network (FCTN), and a t-product-style
factorization with a learnable mode-3 transform (TF).  Only Tucker, FCTN
and TF act as candidates in the search; CP/TT/TR exist so that the
special-case embeddings between families are executable.

Composition always means "multiply the factors back into a dense
tensor"; no fitting happens here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .tensor import facewise_product, mode_n_product

__all__ = [
    "CPFactors",
    "TuckerFactors",
    "TTFactors",
    "TRFactors",
    "FCTNFactors",
    "TFFactors",
    "CandidateDecomposition",
    "cp_compose",
    "tucker_compose",
    "tt_compose",
    "tr_compose",
    "fctn_compose",
    "tf_compose",
    "compose",
    "special_case_embedding",
    "param_count",
    "CANDIDATE_KINDS",
]

CANDIDATE_KINDS = ("tucker", "fctn", "tf")


def _as_matrix(a, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ArgumentError(f"{what} must be a matrix, got order {a.ndim}")
    return a


@dataclass
class CPFactors:
    """Factor matrices ``H_n`` of shape ``I_n x R`` sharing one rank ``R``."""

    factors: list[np.ndarray]

    def __post_init__(self):
        self.factors = [_as_matrix(h, "CP factor") for h in self.factors]
        if not self.factors:
            raise ArgumentError("CP needs at least one factor matrix")
        ranks = {h.shape[1] for h in self.factors}
        if len(ranks) != 1:
            raise ArgumentError(f"CP factors disagree on rank: {sorted(ranks)}")
        if self.rank < 1:
            raise ArgumentError("CP rank must be >= 1")

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(h.shape[0] for h in self.factors)


@dataclass
class TuckerFactors:
    """Core tensor ``R_1 x ... x R_N`` plus factor matrices ``I_n x R_n``."""

    core: np.ndarray
    factors: list[np.ndarray]

    def __post_init__(self):
        self.core = np.asarray(self.core, dtype=np.float64)
        self.factors = [_as_matrix(h, "Tucker factor") for h in self.factors]
        if self.core.ndim != len(self.factors):
            raise ArgumentError(
                f"core order {self.core.ndim} != factor count {len(self.factors)}"
            )
        for n, h in enumerate(self.factors, start=1):
            if h.shape[1] != self.core.shape[n - 1]:
                raise ArgumentError(
                    f"factor {n} has {h.shape[1]} columns but core mode {n} "
                    f"has size {self.core.shape[n - 1]}"
                )

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.shape

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(h.shape[0] for h in self.factors)

    def arrays(self) -> list[np.ndarray]:
        return [self.core, *self.factors]


@dataclass
class TTFactors:
    """Chain format: head ``I_1 x R_1``, third-order middle cores
    ``R_{n-1} x I_n x R_n``, tail ``R_{N-1} x I_N``."""

    head: np.ndarray
    cores: list[np.ndarray]
    tail: np.ndarray

    def __post_init__(self):
        self.head = _as_matrix(self.head, "TT head")
        self.tail = _as_matrix(self.tail, "TT tail")
        self.cores = [np.asarray(g, dtype=np.float64) for g in self.cores]
        left = self.head.shape[1]
        for i, g in enumerate(self.cores):
            if g.ndim != 3:
                raise ArgumentError(f"TT core {i + 2} must be third-order")
            if g.shape[0] != left:
                raise ArgumentError(
                    f"TT rank chain broken at core {i + 2}: "
                    f"{g.shape[0]} != {left}"
                )
            left = g.shape[2]
        if self.tail.shape[0] != left:
            raise ArgumentError(
                f"TT rank chain broken at tail: {self.tail.shape[0]} != {left}"
            )

    @property
    def ranks(self) -> tuple[int, ...]:
        return (self.head.shape[1], *(g.shape[2] for g in self.cores))

    @property
    def shape(self) -> tuple[int, ...]:
        return (
            self.head.shape[0],
            *(g.shape[1] for g in self.cores),
            self.tail.shape[1],
        )


@dataclass
class TRFactors:
    """Cyclic chain of third-order cores ``R_n x I_n x R_{n+1}`` with
    ``R_{N+1} = R_1``."""

    cores: list[np.ndarray]

    def __post_init__(self):
        self.cores = [np.asarray(g, dtype=np.float64) for g in self.cores]
        if len(self.cores) < 2:
            raise ArgumentError("TR needs at least two cores")
        for i, g in enumerate(self.cores):
            if g.ndim != 3:
                raise ArgumentError(f"TR core {i + 1} must be third-order")
            nxt = self.cores[(i + 1) % len(self.cores)]
            if g.shape[2] != nxt.shape[0]:
                raise ArgumentError(
                    f"TR rank chain broken between cores {i + 1} and "
                    f"{(i + 1) % len(self.cores) + 1}: {g.shape[2]} != {nxt.shape[0]}"
                )

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(g.shape[0] for g in self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.shape[1] for g in self.cores)


@dataclass
class FCTNFactors:
    """Fully-connected network: core ``n`` has shape
    ``(R_{1,n}, ..., R_{n-1,n}, I_n, R_{n,n+1}, ..., R_{n,N})`` so every
    pair of cores shares exactly one rank edge."""

    cores: list[np.ndarray]

    def __post_init__(self):
        self.cores = [np.asarray(g, dtype=np.float64) for g in self.cores]
        n_cores = len(self.cores)
        if n_cores < 2:
            raise ArgumentError("FCTN needs at least two cores")
        for i, g in enumerate(self.cores, start=1):
            if g.ndim != n_cores:
                raise ArgumentError(
                    f"FCTN core {i} must have order {n_cores}, got {g.ndim}"
                )
        for n1 in range(n_cores):
            for n2 in range(n1 + 1, n_cores):
                r12 = self.cores[n1].shape[n2]
                r21 = self.cores[n2].shape[n1]
                if r12 != r21:
                    raise ArgumentError(
                        f"rank edge ({n1 + 1},{n2 + 1}) disagrees between "
                        f"cores: {r12} != {r21}"
                    )

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.shape[n] for n, g in enumerate(self.cores))

    def ranks(self) -> dict[tuple[int, int], int]:
        """Rank table keyed by 1-based mode pairs (n1, n2), n1 < n2."""
        table = {}
        for n1 in range(self.order):
            for n2 in range(n1 + 1, self.order):
                table[(n1 + 1, n2 + 1)] = self.cores[n1].shape[n2]
        return table


@dataclass
class TFFactors:
    """Latent slice factors ``a_hat`` (I_1 x R x L), ``b_hat`` (R x I_2 x L)
    and a learnable transform (I_3 x L) mapping the L latent slices back to
    the I_3 frontal slices."""

    a_hat: np.ndarray
    b_hat: np.ndarray
    transform: np.ndarray

    def __post_init__(self):
        self.a_hat = np.asarray(self.a_hat, dtype=np.float64)
        self.b_hat = np.asarray(self.b_hat, dtype=np.float64)
        self.transform = _as_matrix(self.transform, "TF transform")
        if self.a_hat.ndim != 3 or self.b_hat.ndim != 3:
            raise ArgumentError("TF slice factors must be third-order")
        if self.a_hat.shape[1] != self.b_hat.shape[0]:
            raise ArgumentError(
                f"TF inner ranks differ: {self.a_hat.shape[1]} vs "
                f"{self.b_hat.shape[0]}"
            )
        if self.a_hat.shape[2] != self.b_hat.shape[2]:
            raise ArgumentError(
                f"TF latent slice counts differ: {self.a_hat.shape[2]} vs "
                f"{self.b_hat.shape[2]}"
            )
        if self.transform.shape[1] != self.a_hat.shape[2]:
            raise ArgumentError(
                f"transform has {self.transform.shape[1]} columns but there "
                f"are {self.a_hat.shape[2]} latent slices"
            )

    @property
    def tubal_rank(self) -> int:
        return self.a_hat.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.a_hat.shape[2]

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.a_hat.shape[0], self.b_hat.shape[1], self.transform.shape[0])


def cp_compose(f: CPFactors) -> np.ndarray:
    """Sum of rank-1 outer products shared across all modes."""
    n = len(f.factors)
    operands = []
    for i, h in enumerate(f.factors):
        operands.extend([h, [i, n]])
    return np.einsum(*operands, list(range(n)), optimize=True)


def tucker_compose(f: TuckerFactors) -> np.ndarray:
    """Core multiplied along every mode by its factor matrix."""
    out = f.core
    for n, h in enumerate(f.factors, start=1):
        out = mode_n_product(out, h, n)
    return out


def tt_compose(f: TTFactors) -> np.ndarray:
    """Chain contraction head -> cores -> tail over the shared ranks."""
    out = f.head
    for g in f.cores:
        out = np.tensordot(out, g, axes=(out.ndim - 1, 0))
    return np.tensordot(out, f.tail, axes=(out.ndim - 1, 0))


def tr_compose(f: TRFactors) -> np.ndarray:
    """Trace of the cyclic chain of core slices."""
    out = f.cores[0]
    for g in f.cores[1:]:
        out = np.tensordot(out, g, axes=(out.ndim - 1, 0))
    return np.trace(out, axis1=0, axis2=out.ndim - 1)


def _fctn_subscripts(order: int) -> tuple[list[list[int]], list[int]]:
    """Einsum index lists for the FCTN network.

    Indices 0..order-1 label the external modes; each rank edge
    (n1, n2) gets its own index beyond that.  Core ``n`` reads, across
    its axes, the edges to earlier cores, its external mode, then the
    edges to later cores.
    """
    edge_ids = {}
    next_id = order
    for n1 in range(order):
        for n2 in range(n1 + 1, order):
            edge_ids[(n1, n2)] = next_id
            next_id += 1
    subs = []
    for n in range(order):
        sub = []
        for k in range(order):
            if k < n:
                sub.append(edge_ids[(k, n)])
            elif k == n:
                sub.append(n)
            else:
                sub.append(edge_ids[(n, k)])
        subs.append(sub)
    return subs, list(range(order))


def fctn_compose(f: FCTNFactors) -> np.ndarray:
    """Contract every rank edge of the fully-connected network.

    Equivalent to the elementwise sum over all edge indices of the product
    of core entries; the contraction order is an internal optimization.
    """
    subs, out = _fctn_subscripts(f.order)
    operands = []
    for g, sub in zip(f.cores, subs):
        operands.extend([g, sub])
    return np.einsum(*operands, out, optimize=True)


def tf_compose(f: TFFactors) -> np.ndarray:
    """Face-wise product of the latent factors, then the mode-3 transform."""
    return mode_n_product(facewise_product(f.a_hat, f.b_hat), f.transform, 3)


@dataclass
class CandidateDecomposition:
    """One expert of the search: a tagged factor set plus its target shape."""

    kind: str
    factors: TuckerFactors | FCTNFactors | TFFactors
    shape: tuple[int, ...] = field(default=())

    def __post_init__(self):
        expected = {
            "tucker": TuckerFactors,
            "fctn": FCTNFactors,
            "tf": TFFactors,
        }
        if self.kind not in expected:
            raise ArgumentError(
                f"unknown candidate kind {self.kind!r}; expected one of "
                f"{CANDIDATE_KINDS}"
            )
        if not isinstance(self.factors, expected[self.kind]):
            raise ArgumentError(
                f"kind {self.kind!r} does not match factor container "
                f"{type(self.factors).__name__}"
            )
        self.shape = tuple(int(s) for s in (self.shape or self.factors.shape))
        if self.factors.shape != self.shape:
            raise ArgumentError(
                f"factors compose to {self.factors.shape}, not the target "
                f"shape {self.shape}"
            )

    def compose(self) -> np.ndarray:
        return compose(self)

    def arrays(self) -> list[np.ndarray]:
        """Learnable arrays in a fixed order (the optimizer's view)."""
        if self.kind == "tucker":
            return [self.factors.core, *self.factors.factors]
        if self.kind == "fctn":
            return list(self.factors.cores)
        return [self.factors.a_hat, self.factors.b_hat, self.factors.transform]


_COMPOSE = {
    "tucker": tucker_compose,
    "fctn": fctn_compose,
    "tf": tf_compose,
}


def compose(candidate: CandidateDecomposition) -> np.ndarray:
    return _COMPOSE[candidate.kind](candidate.factors)


def param_count(c: CandidateDecomposition) -> int:
    """Total number of stored factor elements, core and transform included."""
    return int(sum(a.size for a in c.arrays()))


def _superdiagonal(rank: int, order: int) -> np.ndarray:
    core = np.zeros((rank,) * order)
    idx = np.arange(rank)
    core[tuple(idx for _ in range(order))] = 1.0
    return core


def _cp_to_tucker(f: CPFactors) -> TuckerFactors:
    return TuckerFactors(
        core=_superdiagonal(f.rank, len(f.factors)),
        factors=[h.copy() for h in f.factors],
    )


def _tt_to_tr(f: TTFactors) -> TRFactors:
    head = f.head
    tail = f.tail
    cores = [head.reshape(1, *head.shape)]
    cores.extend(g.copy() for g in f.cores)
    cores.append(tail.reshape(*tail.shape, 1))
    return TRFactors(cores=cores)


def _tt_to_fctn(f: TTFactors) -> FCTNFactors:
    order = len(f.cores) + 2
    if order < 3:
        raise ArgumentError("TT-to-FCTN embedding needs order >= 3")

    def placed(array: np.ndarray, axes: dict[int, int]) -> np.ndarray:
        shape = [1] * order
        for axis, size in axes.items():
            shape[axis] = size
        return array.reshape(shape)

    i1, r1 = f.head.shape
    cores = [placed(f.head, {0: i1, 1: r1})]
    for n, g in enumerate(f.cores, start=2):
        rl, im, rr = g.shape
        cores.append(placed(g, {n - 2: rl, n - 1: im, n: rr}))
    rl, iN = f.tail.shape
    cores.append(placed(f.tail, {order - 2: rl, order - 1: iN}))
    return FCTNFactors(cores=cores)


def _tr_to_fctn(f: TRFactors) -> FCTNFactors:
    order = len(f.cores)
    if order < 3:
        raise ArgumentError("TR-to-FCTN embedding needs order >= 3")

    def placed(array: np.ndarray, axes: dict[int, int]) -> np.ndarray:
        shape = [1] * order
        for axis, size in axes.items():
            shape[axis] = size
        return array.reshape(shape)

    cores = []
    g = f.cores[0]  # (R_1, I_1, R_2) -> (I_1, R_2, 1, ..., 1, R_1)
    r1, i1, r2 = g.shape
    cores.append(placed(np.transpose(g, (1, 2, 0)), {0: i1, 1: r2, order - 1: r1}))
    for n in range(1, order - 1):  # (R_n, I_n, R_{n+1}) stays in axis order
        g = f.cores[n]
        cores.append(placed(g, {n - 1: g.shape[0], n: g.shape[1], n + 1: g.shape[2]}))
    g = f.cores[-1]  # (R_N, I_N, R_1) -> (R_1, 1, ..., 1, R_N, I_N)
    rN, iN, r1 = g.shape
    cores.append(
        placed(np.transpose(g, (2, 0, 1)), {0: r1, order - 2: rN, order - 1: iN})
    )
    return FCTNFactors(cores=cores)


_EMBEDDINGS = {
    (CPFactors, "tucker"): _cp_to_tucker,
    (TTFactors, "tr"): _tt_to_tr,
    (TTFactors, "fctn"): _tt_to_fctn,
    (TRFactors, "fctn"): _tr_to_fctn,
}


def special_case_embedding(source, target_kind: str):
    """Rewrite a factor set into a more general family without changing
    the composed tensor.

    Supported pairs: CP -> Tucker (superdiagonal core), TT -> TR (leading
    rank 1), TT -> FCTN (non-adjacent edges 1), TR -> FCTN (non-adjacent
    edges 1 except the wrap-around edge).
    """
    key = (type(source), target_kind)
    if key not in _EMBEDDINGS:
        raise ArgumentError(
            f"no embedding from {type(source).__name__} to {target_kind!r}"
        )
    return _EMBEDDINGS[key](source)
