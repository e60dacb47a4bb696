"""Black-box TT construction by rank-adaptive fiber cross approximation.

The function is only ever sampled along tensor fibers (all indices fixed
but one). Alternating sweeps pick interpolation points with maxvol; ranks
grow by enriching each fiber matrix with a few random extra fibers and
truncating with an SVD. A held-out random index set decides when to stop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import qr as pivoted_qr

from .errors import ConstructionError, DomainError
from .grid import Grid
from .tt import TTTensor, _truncation_rank, tt_eval_batch

__all__ = ["maxvol", "tt_cross", "CrossResult", "grid_evaluator"]

log = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]


def maxvol(A: np.ndarray, tol: float = 1.05, max_iters: int = 200) -> np.ndarray:
    """Rows of a tall ``m x r`` matrix spanning a submatrix of locally maximal volume.

    Starts from column-pivoted QR of ``A.T`` and swaps rows while some
    coefficient of ``A @ inv(A[rows])`` exceeds ``tol`` in modulus.
    """
    m, r = A.shape
    if r == 0:
        return np.zeros(0, dtype=np.intp)
    if m <= r:
        return np.arange(m, dtype=np.intp)
    _, _, piv = pivoted_qr(A.T, pivoting=True, mode="economic")
    rows = piv[:r].astype(np.intp)
    try:
        B = np.linalg.solve(A[rows].T, A.T).T
    except np.linalg.LinAlgError:
        return rows
    for _ in range(max_iters):
        i, j = np.unravel_index(np.argmax(np.abs(B)), B.shape)
        if abs(B[i, j]) <= tol:
            break
        rows[j] = i
        bij = B[i, j]
        col, row = B[:, j].copy(), B[i, :].copy()
        row[j] -= 1.0
        B -= np.outer(col, row) / bij
    return rows


def grid_evaluator(func: Callable[[np.ndarray], np.ndarray], grid: Grid) -> Evaluator:
    """Wrap a function of continuous coordinates as a function of grid indices."""
    return lambda idx: np.asarray(func(grid.values(idx)), dtype=float)


class _BudgetExhausted(Exception):
    pass


class _CachedOracle:
    """Counts distinct evaluations and refuses to exceed the budget."""

    def __init__(self, f: Evaluator, max_evals: int):
        self.f = f
        self.max_evals = max_evals
        self.cache: dict[bytes, float] = {}

    @property
    def count(self) -> int:
        return len(self.cache)

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        idx = np.ascontiguousarray(idx, dtype=np.int64)
        keys = [row.tobytes() for row in idx]
        new = {}
        for k, row in zip(keys, idx):
            if k not in self.cache and k not in new:
                new[k] = row
        if new:
            if self.count + len(new) > self.max_evals:
                raise _BudgetExhausted
            vals = np.asarray(self.f(np.array(list(new.values()))), dtype=float).reshape(-1)
            if vals.shape[0] != len(new):
                raise DomainError(f"evaluator returned {vals.shape[0]} values for {len(new)} indices")
            if not np.all(np.isfinite(vals)):
                raise DomainError("evaluator returned non-finite values")
            self.cache.update(zip(new.keys(), vals.tolist()))
        return np.array([self.cache[k] for k in keys])


@dataclass
class CrossResult:
    """Outcome of :func:`tt_cross`.

    ``history`` holds one ``(evals, ranks, validation_error)`` triple per
    half sweep. ``converged`` tells whether ``error <= eps`` was reached.
    """

    tt: TTTensor
    evals: int
    error: float
    converged: bool
    history: list = field(default_factory=list)

    def __iter__(self):
        # unpacks as (tt, evals)
        return iter((self.tt, self.evals))


def _fibers(oracle, left: np.ndarray, n: int, I: int, right: np.ndarray) -> np.ndarray:
    """Values on all fibers ``(left[a], i, right[b])``, shape (len(left), I, len(right))."""
    rl, rr = left.shape[0], right.shape[0]
    L = np.repeat(left, I * rr, axis=0)
    mid = np.tile(np.repeat(np.arange(I), rr), rl)[:, None]
    R = np.tile(right, (rl * I, 1))
    return oracle(np.hstack([L, mid, R])).reshape(rl, I, rr)


def _random_multi(rng, dims: Sequence[int], k: int) -> np.ndarray:
    if not dims:
        return np.zeros((k, 0), dtype=np.int64)
    return np.stack([rng.integers(0, d, k) for d in dims], axis=1)


def _basis(mat: np.ndarray, delta: float, max_rank: int) -> np.ndarray:
    """Orthonormal basis of the dominant column space of ``mat``."""
    q, r = np.linalg.qr(mat)
    u, s, _ = np.linalg.svd(r)
    rank = min(_truncation_rank(s, delta * np.linalg.norm(s)), max_rank)
    return q @ u[:, :rank]


def tt_cross(
    f: Evaluator,
    grid: Grid | Sequence[int],
    eps: float = 1e-6,
    max_evals: int = 100_000,
    seed: int = 0,
    n_validation: int = 1000,
    kick: int = 2,
    max_rank: int = 64,
    max_sweeps: int = 50,
    patience: int = 3,
) -> CrossResult:
    """Build a TT surrogate of ``f`` over the grid by fiber sampling.

    Parameters
    ----------
    f : callable
        Maps a ``P x N`` integer array of grid indices to ``P`` values.
        Must be deterministic on the grid.
    grid : Grid or sequence of int
        The grid, or just its dimensions.
    eps : float
        Target relative error on the validation set.
    max_evals : int
        Budget of distinct function evaluations, validation set included.
    seed : int
        Seeds the validation set, the starting point and the rank kicks.
    n_validation : int
        Size of the random held-out index set.
    kick : int
        Random extra fibers appended per core; bounds rank growth per step.

    Returns
    -------
    CrossResult
        Best surrogate found (lowest validation error), the number of
        evaluations used and the error history. Unpacks as ``(tt, evals)``.

    Raises
    ------
    ConstructionError
        If the budget runs out before one complete sweep.
    """
    dims = tuple(grid.dims) if isinstance(grid, Grid) else tuple(int(d) for d in grid)
    N = len(dims)
    rng = np.random.default_rng(seed)
    oracle = _CachedOracle(f, max_evals)
    total = int(np.prod(dims, dtype=object))

    n_val = min(n_validation, total)
    val_idx = _random_multi(rng, dims, n_val)
    try:
        val_y = oracle(val_idx)
    except _BudgetExhausted:
        raise ConstructionError(
            "budget too small for the validation set", evals=oracle.count, max_evals=max_evals
        ) from None
    val_norm = np.linalg.norm(val_y)

    def val_error(tt: TTTensor) -> float:
        diff = np.linalg.norm(tt_eval_batch(tt, val_idx) - val_y)
        return float(diff / val_norm) if val_norm > 0 else float(diff)

    # per-step truncation keeps the accumulated interpolation error below eps
    delta = eps / (2.0 * np.sqrt(max(N - 1, 1)))
    x0 = _random_multi(rng, dims, 1)[0]
    left = [x0[:n][None, :] for n in range(N)]
    right = [x0[n + 1 :][None, :] for n in range(N)]
    left[0] = np.zeros((1, 0), dtype=np.int64)
    right[N - 1] = np.zeros((1, 0), dtype=np.int64)
    cores: list[np.ndarray] = [None] * N  # type: ignore[list-item]

    history = []
    best: tuple[float, TTTensor] | None = None
    stale = 0
    for sweep in range(max_sweeps):
        forward = sweep % 2 == 0
        try:
            if N == 1:
                cores[0] = _fibers(oracle, left[0], 0, dims[0], right[0])
            elif forward:
                for n in range(N - 1):
                    C = _fibers(oracle, left[n], n, dims[n], right[n])
                    rl, I, rr = C.shape
                    mat = C.reshape(rl * I, rr)
                    if kick:
                        extra = _random_multi(rng, dims[n + 1 :], kick)
                        mat = np.hstack([mat, _fibers(oracle, left[n], n, I, extra).reshape(rl * I, kick)])
                    Q = _basis(mat, delta, max_rank)
                    rows = maxvol(Q)
                    cores[n] = (Q @ np.linalg.inv(Q[rows])).reshape(rl, I, -1)
                    a, i = np.divmod(rows, I)
                    left[n + 1] = np.hstack([left[n][a], i[:, None]])
                cores[N - 1] = _fibers(oracle, left[N - 1], N - 1, dims[N - 1], right[N - 1])
            else:
                for n in range(N - 1, 0, -1):
                    C = _fibers(oracle, left[n], n, dims[n], right[n])
                    rl, I, rr = C.shape
                    mat = C.reshape(rl, I * rr).T
                    if kick:
                        extra = _random_multi(rng, dims[:n], kick)
                        mat = np.hstack([mat, _fibers(oracle, extra, n, I, right[n]).reshape(kick, I * rr).T])
                    Q = _basis(mat, delta, max_rank)
                    rows = maxvol(Q)
                    cores[n] = (Q @ np.linalg.inv(Q[rows])).T.reshape(-1, I, rr)
                    i, b = np.divmod(rows, rr)
                    right[n - 1] = np.hstack([i[:, None], right[n][b]])
                cores[0] = _fibers(oracle, left[0], 0, dims[0], right[0])
        except _BudgetExhausted:
            log.info("cross: budget of %d evaluations exhausted in sweep %d", max_evals, sweep)
            break

        tt = TTTensor(cores)
        err = val_error(tt)
        history.append((oracle.count, tt.ranks, err))
        log.debug("cross sweep %d: evals=%d ranks=%s error=%.3e", sweep, oracle.count, tt.ranks, err)
        if best is None or err < best[0]:
            stale = 0 if best is None or err < 0.99 * best[0] else stale + 1
            best = (err, tt)
        else:
            stale += 1
        if err <= eps or N == 1 or stale >= patience:
            break

    if best is None:
        raise ConstructionError(
            "evaluation budget exhausted before completing one sweep",
            evals=oracle.count,
            max_evals=max_evals,
            validation_size=n_val,
        )
    err, tt = best
    return CrossResult(tt, oracle.count, err, err <= eps, history)
