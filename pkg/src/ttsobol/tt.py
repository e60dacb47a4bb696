"""Tensor-train data structure and arithmetic.

A tensor train of order N stores an array of shape ``(I_1, ..., I_N)`` as a
chain of 3-way cores; core ``n`` has shape ``(R_{n-1}, I_n, R_n)`` with
``R_0 = R_N = 1``. Element ``t[i_1, ..., i_N]`` is the product of the
matrices ``core_1[:, i_1, :] @ ... @ core_N[:, i_N, :]``.

All functions here are pure: they never modify their inputs, and the
cores of a :class:`TTTensor` are stored read-only.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, DomainError, ShapeError

__all__ = [
    "TTTensor",
    "DENSE_CAP",
    "HADAMARD_RANK_CAP",
    "ZERO_SV_RTOL",
    "tt_eval",
    "tt_eval_batch",
    "tt_full",
    "tt_from_full",
    "tt_round",
    "tt_scale",
    "tt_add",
    "tt_sub",
    "tt_hadamard",
    "tt_dot",
    "tt_norm",
    "tt_sum",
    "tt_ones",
    "tt_zeros",
    "tt_rank1",
    "tt_random",
    "core_expectation",
    "uniform_weights",
    "check_weights",
]

DENSE_CAP = 10**7
HADAMARD_RANK_CAP = 4096
# singular values below this fraction of the largest are numerical zeros
ZERO_SV_RTOL = 1e-14


class TTTensor:
    """An N-dimensional array in tensor-train format.

    Parameters
    ----------
    cores : sequence of ndarray
        Three-way cores, core ``n`` shaped ``(R_{n-1}, I_n, R_n)``. The
        arrays are copied to float64 and frozen.

    Raises
    ------
    ShapeError
        If a core is not 3-way, the boundary ranks are not 1, or two
        adjacent cores disagree on their shared rank.
    """

    __slots__ = ("_cores",)

    def __init__(self, cores: Sequence[np.ndarray]):
        cores = [np.array(c, dtype=np.float64) for c in cores]
        if not cores:
            raise ShapeError("a tensor train needs at least one core")
        for n, c in enumerate(cores):
            if c.ndim != 3:
                raise ShapeError(f"core {n} has {c.ndim} axes, expected 3")
            if c.shape[1] < 1:
                raise ShapeError(f"core {n} has an empty mode")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ShapeError("boundary ranks must be 1")
        for n in range(len(cores) - 1):
            if cores[n].shape[2] != cores[n + 1].shape[0]:
                raise ShapeError(
                    f"rank mismatch between cores {n} and {n + 1}: "
                    f"{cores[n].shape[2]} != {cores[n + 1].shape[0]}"
                )
        for c in cores:
            c.flags.writeable = False
        self._cores = tuple(cores)

    @property
    def cores(self) -> tuple[np.ndarray, ...]:
        return self._cores

    @property
    def ndim(self) -> int:
        return len(self._cores)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self._cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self._cores)

    @property
    def n_params(self) -> int:
        """Number of stored floating-point elements over all cores."""
        return int(sum(c.size for c in self._cores))

    def __repr__(self) -> str:
        return f"TTTensor(dims={self.dims}, ranks={self.ranks})"

    def __getitem__(self, idx) -> float:
        return tt_eval(self, idx)


def _check_same_dims(a: TTTensor, b: TTTensor) -> None:
    if a.dims != b.dims:
        raise ShapeError(f"dims differ: {a.dims} vs {b.dims}")


# ----------------------------------------------------------------------
# Construction helpers
# ----------------------------------------------------------------------


def tt_rank1(vectors: Sequence[Sequence[float]]) -> TTTensor:
    """Rank-1 tensor train of the outer product of ``vectors``."""
    return TTTensor([np.asarray(v, dtype=float).reshape(1, -1, 1) for v in vectors])


def tt_ones(dims: Sequence[int]) -> TTTensor:
    return tt_rank1([np.ones(d) for d in dims])


def tt_zeros(dims: Sequence[int]) -> TTTensor:
    return tt_rank1([np.zeros(d) for d in dims])


def tt_random(
    dims: Sequence[int],
    ranks: int | Sequence[int],
    rng: np.random.Generator | int | None = None,
) -> TTTensor:
    """Tensor train with standard-normal cores.

    ``ranks`` is either a single internal rank or the full chain of N+1
    ranks (boundary ones included).
    """
    rng = np.random.default_rng(rng)
    N = len(dims)
    if np.isscalar(ranks):
        chain = [1] + [int(ranks)] * (N - 1) + [1]
    else:
        chain = [int(r) for r in ranks]
        if len(chain) != N + 1:
            raise ShapeError("rank chain must have N+1 entries")
    return TTTensor(
        [rng.standard_normal((chain[n], dims[n], chain[n + 1])) for n in range(N)]
    )


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------


def tt_eval(t: TTTensor, idx: Sequence[int]) -> float:
    """Value of ``t`` at one multi-index."""
    idx = tuple(int(i) for i in idx)
    if len(idx) != t.ndim:
        raise ShapeError(f"expected {t.ndim} indices, got {len(idx)}")
    v = np.ones((1,))
    for n, (c, i) in enumerate(zip(t.cores, idx)):
        if not 0 <= i < c.shape[1]:
            raise IndexError(f"index {i} out of range for mode {n} of size {c.shape[1]}")
        v = v @ c[:, i, :]
    return float(v[0])


def tt_eval_batch(t: TTTensor, idx: np.ndarray) -> np.ndarray:
    """Values of ``t`` at each row of the integer array ``idx`` (P x N)."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 2 or idx.shape[1] != t.ndim:
        raise ShapeError(f"index array must be P x {t.ndim}, got {idx.shape}")
    if idx.size and (np.any(idx < 0) or np.any(idx >= np.array(t.dims))):
        raise IndexError("index out of range")
    v = np.ones((idx.shape[0], 1))
    for n, c in enumerate(t.cores):
        # (P, r) x (P, r, r') -> (P, r')
        v = np.einsum("pa,pab->pb", v, c[:, idx[:, n], :].transpose(1, 0, 2))
    return v[:, 0]


def tt_full(t: TTTensor, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense array represented by ``t``."""
    size = int(np.prod(t.dims, dtype=object))
    if size > cap:
        raise CapacityError(f"dense size {size} exceeds cap {cap}", size=size, cap=cap)
    out = t.cores[0].reshape(t.dims[0], -1)
    for c in t.cores[1:]:
        r, i, r2 = c.shape
        out = (out.reshape(-1, r) @ c.reshape(r, i * r2)).reshape(-1, r2)
    return out.reshape(t.dims)


def tt_sum(t: TTTensor, weights: Sequence[np.ndarray] | None = None) -> float:
    """Sum of all entries, or the weighted sum with per-axis weight vectors."""
    v = np.ones((1,))
    for n, c in enumerate(t.cores):
        if weights is None:
            v = v @ c.sum(axis=1)
        else:
            v = v @ np.einsum("i,aib->ab", weights[n], c)
    return float(v[0])


# ----------------------------------------------------------------------
# Compression
# ----------------------------------------------------------------------


def _truncation_rank(s: np.ndarray, delta: float) -> int:
    """Smallest rank whose discarded tail has 2-norm at most ``delta``.

    Singular values below ``ZERO_SV_RTOL * s[0]`` are always discarded.
    """
    if s.size == 0 or s[0] == 0.0:
        return 1
    keep = int(np.count_nonzero(s > ZERO_SV_RTOL * s[0]))
    # tail[k] = norm of s[k:]
    tail = np.sqrt(np.cumsum((s**2)[::-1])[::-1])
    within = np.nonzero(tail <= delta)[0]
    r = int(within[0]) if within.size else s.size
    return max(1, min(r, keep))


def tt_from_full(a: np.ndarray, eps: float = 1e-12) -> TTTensor:
    """Compress a dense array with sequential truncated SVDs (TT-SVD).

    The per-step truncation budget is ``eps * ||a|| / sqrt(N - 1)`` so that
    the overall relative Frobenius error stays below ``eps``.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise ShapeError("cannot compress an empty array")
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    dims = a.shape if a.ndim else (1,)
    N = len(dims)
    if N == 1:
        return TTTensor([a.reshape(1, -1, 1)])
    delta = eps * np.linalg.norm(a) / np.sqrt(N - 1)
    cores = []
    r = 1
    rest = a.reshape(dims)
    for n in range(N - 1):
        mat = rest.reshape(r * dims[n], -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        rn = _truncation_rank(s, delta)
        cores.append(u[:, :rn].reshape(r, dims[n], rn))
        rest = s[:rn, None] * vt[:rn]
        r = rn
    cores.append(rest.reshape(r, dims[-1], 1))
    return TTTensor(cores)


def _right_orthogonalize(cores: list[np.ndarray]) -> list[np.ndarray]:
    """Make cores 2..N right-orthogonal; the norm moves into core 1."""
    cores = [c.copy() for c in cores]
    for n in range(len(cores) - 1, 0, -1):
        r, i, r2 = cores[n].shape
        q, rr = np.linalg.qr(cores[n].reshape(r, i * r2).T)
        k = q.shape[1]
        cores[n] = q.T.reshape(k, i, r2)
        cores[n - 1] = np.einsum("aib,bc->aic", cores[n - 1], rr.T)
    return cores


def tt_norm(t: TTTensor) -> float:
    """Frobenius norm, computed through orthogonalized cores."""
    cores = _right_orthogonalize(list(t.cores))
    return float(np.linalg.norm(cores[0]))


def tt_round(t: TTTensor, eps: float = 1e-12) -> TTTensor:
    """Recompress ``t`` to relative Frobenius error at most ``eps``.

    Right-to-left QR orthogonalization followed by left-to-right truncated
    SVDs, each with budget ``eps * ||t|| / sqrt(N - 1)``. Ranks never
    increase; ``eps=0`` only drops numerically zero singular values.
    """
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    N = t.ndim
    if N == 1:
        return t
    cores = _right_orthogonalize(list(t.cores))
    nrm = np.linalg.norm(cores[0])
    if nrm == 0.0:
        return tt_zeros(t.dims)
    delta = eps * nrm / np.sqrt(N - 1)
    for n in range(N - 1):
        r, i, r2 = cores[n].shape
        u, s, vt = np.linalg.svd(cores[n].reshape(r * i, r2), full_matrices=False)
        rn = _truncation_rank(s, delta)
        cores[n] = u[:, :rn].reshape(r, i, rn)
        cores[n + 1] = np.einsum("ab,bic->aic", s[:rn, None] * vt[:rn], cores[n + 1])
    return TTTensor(cores)


# ----------------------------------------------------------------------
# Arithmetic
# ----------------------------------------------------------------------


def tt_scale(t: TTTensor, alpha: float) -> TTTensor:
    cores = list(t.cores)
    cores[0] = cores[0] * float(alpha)
    return TTTensor(cores)


def tt_add(a: TTTensor, b: TTTensor) -> TTTensor:
    """Element-wise sum via the block-diagonal core construction.

    Internal ranks add up; no rounding is performed.
    """
    _check_same_dims(a, b)
    N = a.ndim
    if N == 1:
        return TTTensor([a.cores[0] + b.cores[0]])
    cores = []
    for n, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        ra, i, ra2 = ca.shape
        rb, _, rb2 = cb.shape
        if n == 0:
            c = np.concatenate([ca, cb], axis=2)
        elif n == N - 1:
            c = np.concatenate([ca, cb], axis=0)
        else:
            c = np.zeros((ra + rb, i, ra2 + rb2))
            c[:ra, :, :ra2] = ca
            c[ra:, :, ra2:] = cb
        cores.append(c)
    return TTTensor(cores)


def tt_sub(a: TTTensor, b: TTTensor) -> TTTensor:
    return tt_add(a, tt_scale(b, -1.0))


def tt_hadamard(a: TTTensor, b: TTTensor, rank_cap: int = HADAMARD_RANK_CAP) -> TTTensor:
    """Element-wise product via slice-wise Kronecker products.

    Ranks multiply. Raises :class:`CapacityError` when a resulting rank
    would exceed ``rank_cap``; round the inputs first in that case.
    """
    _check_same_dims(a, b)
    for n in range(1, a.ndim):
        r = a.ranks[n] * b.ranks[n]
        if r > rank_cap:
            raise CapacityError(
                f"Hadamard rank {r} at bond {n} (between modes {n - 1} and {n}) "
                f"exceeds cap {rank_cap}; round the inputs first",
                mode=n,
                rank=r,
            )
    cores = []
    for ca, cb in zip(a.cores, b.cores):
        ra, i, ra2 = ca.shape
        rb, _, rb2 = cb.shape
        c = np.einsum("aib,cid->acibd", ca, cb).reshape(ra * rb, i, ra2 * rb2)
        cores.append(c)
    return TTTensor(cores)


def tt_dot(a: TTTensor, b: TTTensor) -> float:
    """Sum over all indices of ``a * b``, contracted left to right."""
    _check_same_dims(a, b)
    v = np.ones((1, 1))
    for ca, cb in zip(a.cores, b.cores):
        v = np.einsum("ac,aib,cid->bd", v, ca, cb)
    return float(v[0, 0])


# ----------------------------------------------------------------------
# Weights and expectations
# ----------------------------------------------------------------------


def uniform_weights(dims: Iterable[int]) -> list[np.ndarray]:
    return [np.full(d, 1.0 / d) for d in dims]


def check_weights(weights: Sequence[np.ndarray], dims: Sequence[int]) -> list[np.ndarray]:
    """Validate per-axis probability vectors and return them as arrays."""
    if len(weights) != len(dims):
        raise ShapeError(f"need {len(dims)} weight vectors, got {len(weights)}")
    out = []
    for n, (w, d) in enumerate(zip(weights, dims)):
        w = np.asarray(w, dtype=float)
        if w.shape != (d,):
            raise ShapeError(f"weights for axis {n} have shape {w.shape}, expected ({d},)")
        if np.any(w < 0):
            raise DomainError(f"weights for axis {n} contain negative entries")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights for axis {n} sum to {w.sum()!r}, not 1")
        out.append(w)
    return out


def core_expectation(t: TTTensor, n: int, w: np.ndarray) -> np.ndarray:
    """Weighted average ``sum_i w[i] * core_n[:, i, :]`` of the slices of core ``n``."""
    c = t.cores[n]
    w = np.asarray(w, dtype=float)
    if w.shape != (c.shape[1],):
        raise ShapeError(f"weight vector has shape {w.shape}, expected ({c.shape[1]},)")
    return np.einsum("i,aib->ab", w, c)
