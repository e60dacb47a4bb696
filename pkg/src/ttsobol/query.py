"""Mask tensors and optimization queries over 2 x ... x 2 index tensors.

Variable subsets are returned as sorted tuples of 0-based axis numbers.
Ties between equal values always go to the lexicographically smallest
indicator vector (variable 0 is the most significant bit).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import CapacityError, DomainError, ShapeError
from .sobol import SobolTT, subset_of
from .tt import TTTensor, tt_dot, tt_eval_batch, tt_ones, tt_rank1, tt_round, tt_sub

__all__ = [
    "MaskTT",
    "hamming_mask",
    "ones_mask",
    "nonempty_mask",
    "constrain_mask",
    "order_contribution",
    "masked_argmax",
    "top_k",
    "EXHAUSTIVE_CAP",
]

EXHAUSTIVE_CAP = 24
FEASIBLE_CAP = 2**22
_TAIL_BITS = 12
_CHUNK_ROWS = 256


@dataclass(frozen=True)
class MaskTT:
    """Binary indicator tensor with a record of how it was built."""

    tt: TTTensor
    order: int | None = None
    frozen: frozenset = field(default_factory=frozenset)
    forced: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if any(d != 2 for d in self.tt.dims):
            raise ShapeError("mask tensors must be 2 x ... x 2")

    @property
    def ndim(self) -> int:
        return self.tt.ndim


def hamming_mask(N: int, k: int) -> MaskTT:
    """Indicator of all subsets with exactly ``k`` elements, at TT rank ``k + 1``.

    The running rank vector is a one-hot counter of the 1-bits seen so far:
    a 0-bit applies the identity, a 1-bit shifts the counter up by one, and
    the last core reads off whether the count equals ``k``.
    """
    if N < 1:
        raise DomainError("N must be positive")
    if not 0 <= k <= N:
        raise DomainError(f"order {k} out of range 0..{N}")
    r = k + 1
    eye = np.eye(r)
    shift = np.eye(r, k=1)
    if N == 1:
        core = np.zeros((1, 2, 1))
        core[0, k, 0] = 1.0
        return MaskTT(TTTensor([core]), order=k)
    first = np.zeros((1, 2, r))
    first[0, 0, 0] = 1.0
    if k >= 1:
        first[0, 1, 1] = 1.0
    mid = np.stack([eye, shift], axis=1)
    last = np.zeros((r, 2, 1))
    last[k, 0, 0] = 1.0
    if k >= 1:
        last[k - 1, 1, 0] = 1.0
    return MaskTT(TTTensor([first] + [mid] * (N - 2) + [last]), order=k)


def ones_mask(N: int) -> MaskTT:
    return MaskTT(tt_ones((2,) * N))


def nonempty_mask(N: int) -> MaskTT:
    """Indicator of every subset except the empty one."""
    corner = tt_rank1([np.array([1.0, 0.0])] * N)
    return MaskTT(tt_round(tt_sub(tt_ones((2,) * N), corner), 1e-14))


def constrain_mask(m: MaskTT, frozen: Iterable[int] = (), forced: Iterable[int] = ()) -> MaskTT:
    """Restrict a mask to subsets avoiding ``frozen`` and containing ``forced``.

    The excluded slice of each affected core is zeroed rather than removed,
    so the mask keeps its 2 x ... x 2 shape.
    """
    frozen, forced = frozenset(int(n) for n in frozen), frozenset(int(n) for n in forced)
    if frozen & forced:
        raise DomainError(f"variables both frozen and forced: {sorted(frozen & forced)}")
    for n in frozen | forced:
        if not 0 <= n < m.ndim:
            raise DomainError(f"variable {n} out of range for N={m.ndim}")
    cores = [c.copy() for c in m.tt.cores]
    for n in frozen:
        cores[n][:, 1, :] = 0.0
    for n in forced:
        cores[n][:, 0, :] = 0.0
    return MaskTT(TTTensor(cores), m.order, m.frozen | frozen, m.forced | forced)


def order_contribution(s: SobolTT | TTTensor, k: int) -> float:
    """Sum of all entries of order ``k`` (inner product with the Hamming mask)."""
    S = s.S if isinstance(s, SobolTT) else s
    if not 1 <= k <= S.ndim:
        raise DomainError(f"order {k} out of range 1..{S.ndim}")
    return tt_dot(S, hamming_mask(S.ndim, k).tt)


# ----------------------------------------------------------------------
# Exhaustive enumeration
# ----------------------------------------------------------------------


def _prefix(cores) -> np.ndarray:
    v = np.ones((1, 1))
    for c in cores:
        v = np.einsum("pa,aib->pib", v, c).reshape(-1, c.shape[2])
    return v


def _suffix(cores) -> np.ndarray:
    u = np.ones((1, 1))
    for c in reversed(cores):
        u = np.einsum("aib,bq->aiq", c, u).reshape(c.shape[0], -1)
    return u


def _blocks(tensors: list[TTTensor]):
    """Yield ``(offset, [values...])`` covering all 2^N entries in lexicographic order."""
    N = tensors[0].ndim
    h = max(0, N - _TAIL_BITS)
    heads = [_prefix(t.cores[:h]) for t in tensors]
    tails = [_suffix(t.cores[h:]) for t in tensors]
    width = tails[0].shape[1]
    for start in range(0, heads[0].shape[0], _CHUNK_ROWS):
        vals = [hd[start : start + _CHUNK_ROWS] @ tl for hd, tl in zip(heads, tails)]
        yield start * width, [v.reshape(-1) for v in vals]


def _check(t: TTTensor, m: MaskTT) -> None:
    if t.dims != m.tt.dims:
        raise ShapeError(f"tensor dims {t.dims} do not match mask dims {m.tt.dims}")
    if tt_dot(m.tt, tt_ones(m.tt.dims)) < 0.5:
        raise DomainError("mask selects no entries")


def _bits(flat: int, N: int) -> tuple[int, ...]:
    return tuple((flat >> (N - 1 - n)) & 1 for n in range(N))


def _completions(cores) -> list[np.ndarray]:
    """``right[j]`` sums the mask cores ``j..N-1`` over their mode index."""
    right = [np.ones((1,))]
    for c in reversed(cores):
        right.append(c.sum(axis=1) @ right[-1])
    return right[::-1]


def _feasible(m: MaskTT) -> np.ndarray:
    """All selected subsets as rows of bits, in lexicographic order.

    Grows prefixes one variable at a time and drops any prefix that has
    no selected completion, so the work is proportional to the number of
    selected entries rather than 2^N.
    """
    cores = m.tt.cores
    right = _completions(cores)
    bits = np.zeros((1, 0), dtype=np.intp)
    v = np.ones((1, 1))
    for j, c in enumerate(cores):
        # children (p, 0) and (p, 1) stay adjacent, so the rows remain sorted
        P = len(bits)
        nb = np.empty((P, 2, j + 1), dtype=np.intp)
        nb[:, :, :j] = bits[:, None, :]
        nb[:, 0, j], nb[:, 1, j] = 0, 1
        nv = np.stack([v @ c[:, 0, :], v @ c[:, 1, :]], axis=1)
        nb, nv = nb.reshape(2 * P, j + 1), nv.reshape(2 * P, -1)
        keep = nv @ right[j + 1] > 0.5
        bits, v = nb[keep], nv[keep]
    return bits


def _sparse_top(t: TTTensor, m: MaskTT, k: int, sign: float):
    bits = _feasible(m)
    vals = sign * tt_eval_batch(t, bits)
    order = np.argsort(-vals, kind="stable")[:k]
    return [(subset_of(bits[i]), float(sign * vals[i])) for i in order]


def _exhaustive_top(t: TTTensor, m: MaskTT, k: int, sign: float, cap: int):
    N = t.ndim
    if N > cap:
        if tt_dot(m.tt, tt_ones(m.tt.dims)) <= FEASIBLE_CAP:
            return _sparse_top(t, m, k, sign)
        raise CapacityError(
            f"exhaustive search over 2^{N} entries exceeds cap 2^{cap}; use the heuristic method",
            N=N,
            cap=cap,
        )
    best_v = np.empty(0)
    best_i = np.empty(0, dtype=np.int64)
    for offset, (vals, mvals) in _blocks([t, m.tt]):
        sel = np.nonzero(mvals > 0.5)[0]
        if sel.size == 0:
            continue
        v = np.concatenate([best_v, sign * vals[sel]])
        i = np.concatenate([best_i, offset + sel.astype(np.int64)])
        order = np.lexsort((i, -v))[:k]
        best_v, best_i = v[order], i[order]
    return [(subset_of(_bits(int(i), N)), float(sign * v)) for v, i in zip(best_v, best_i)]


# ----------------------------------------------------------------------
# Heuristic search
# ----------------------------------------------------------------------


def _sample_feasible(m: MaskTT, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` subsets uniformly from those the mask selects."""
    cores = m.tt.cores
    N = len(cores)
    right = _completions(cores)
    out = np.zeros((n, N), dtype=np.intp)
    v = np.ones((n, 1))
    for j, c in enumerate(cores):
        w = np.stack([v @ c[:, b, :] @ right[j + 1] for b in (0, 1)], axis=1)
        w = np.clip(w, 0.0, None)
        p1 = w[:, 1] / np.maximum(w.sum(axis=1), np.finfo(float).tiny)
        bit = (rng.random(n) < p1).astype(np.intp)
        out[:, j] = bit
        v = np.einsum("pa,pab->pb", v, c[:, bit, :].transpose(1, 0, 2))
    return out


def _neighbours(pop: np.ndarray) -> np.ndarray:
    N = pop.shape[1]
    flips = [np.eye(N, dtype=np.intp)[i] for i in range(N)]
    flips += [np.eye(N, dtype=np.intp)[i] + np.eye(N, dtype=np.intp)[j] for i in range(N) for j in range(i + 1, N)]
    flips = np.array(flips)
    return (pop[:, None, :] ^ flips[None, :, :]).reshape(-1, N)


def _heuristic_top(t: TTTensor, m: MaskTT, beam: int, sign: float, seed: int, max_iter: int = 100):
    rng = np.random.default_rng(seed)
    pop = np.unique(_sample_feasible(m, beam, rng), axis=0)
    for _ in range(max_iter):
        cand = np.unique(np.concatenate([pop, _neighbours(pop)]), axis=0)
        feas = tt_eval_batch(m.tt, cand) > 0.5
        cand = cand[feas]
        vals = sign * tt_eval_batch(t, cand)
        # np.unique sorted rows lexicographically, so a stable sort keeps ties in that order
        order = np.argsort(-vals, kind="stable")[:beam]
        new = cand[order]
        if new.shape == pop.shape and np.array_equal(np.unique(new, axis=0), np.unique(pop, axis=0)):
            pop = new
            break
        pop = new
    vals = sign * tt_eval_batch(t, pop)
    order = np.argsort(-vals, kind="stable")
    pop, vals = pop[order], vals[order]
    return [(subset_of(row), float(sign * v)) for row, v in zip(pop, vals)]


def masked_argmax(
    t: TTTensor,
    m: MaskTT,
    mode: str = "max",
    method: str = "exhaustive",
    beam: int = 64,
    seed: int = 0,
    cap: int = EXHAUSTIVE_CAP,
) -> tuple[tuple[int, ...], float]:
    """Best entry of ``t`` among the subsets selected by mask ``m``.

    ``method="exhaustive"`` is exact: it enumerates all 2^N entries
    blockwise, or, beyond ``2^cap`` entries, only the subsets the mask
    selects (if there are at most ``FEASIBLE_CAP`` of them). ``method="heuristic"`` runs a seeded beam search from random
    feasible subsets, moving by one- and two-bit flips; its answer is
    always feasible but may be suboptimal. ``mode="min"`` negates ``t``.
    """
    return top_k(t, m, 1, mode=mode, method=method, beam=beam, seed=seed, cap=cap)[0]


def top_k(
    t: TTTensor,
    m: MaskTT,
    k: int,
    mode: str = "max",
    method: str = "exhaustive",
    beam: int = 64,
    seed: int = 0,
    cap: int = EXHAUSTIVE_CAP,
) -> list[tuple[tuple[int, ...], float]]:
    """The ``k`` best masked entries, best first."""
    if k < 1:
        raise DomainError("k must be at least 1")
    if mode not in ("max", "min"):
        raise DomainError(f"unknown mode {mode!r}")
    _check(t, m)
    sign = 1.0 if mode == "max" else -1.0
    if method == "exhaustive":
        return _exhaustive_top(t, m, k, sign, cap)
    if method == "heuristic":
        return _heuristic_top(t, m, max(beam, k), sign, seed)[:k]
    raise DomainError(f"unknown method {method!r}")
