"""TT completion from scattered samples by alternating least squares.

One core is solved at a time while the others stay fixed. With the other
cores fixed the model is linear in the active core, and the problem splits
into one small least-squares system per slice: slice ``i`` of core ``n``
only affects samples whose ``n``-th index equals ``i``. Solving each slice
exactly makes the training error non-increasing from one update to the
next.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .grid import Grid, SampleSet
from .tt import TTTensor, tt_eval_batch

__all__ = ["tt_als_complete", "ALSResult", "UnidentifiableSliceWarning"]

log = logging.getLogger(__name__)


class UnidentifiableSliceWarning(UserWarning):
    """Some grid index never appears in the training samples."""


@dataclass
class ALSResult:
    """Fitted tensor plus the training RMSE before and after every sweep."""

    tt: TTTensor
    train_rmse: list = field(default_factory=list)
    valid_rmse: list = field(default_factory=list)
    restart: int = 0


def _init_cores(dims, ranks, rng) -> list[np.ndarray]:
    """Random cores, right-orthonormal (rows of each unfolding orthonormal)."""
    N = len(dims)
    cores = []
    for n in range(N):
        r, I, r2 = ranks[n], dims[n], ranks[n + 1]
        g = rng.standard_normal((r, I * r2))
        if n > 0:
            q, _ = np.linalg.qr(g.T)
            g = q.T
        cores.append(g.reshape(r, I, r2))
    return cores


def _solve_slice(A: np.ndarray, y: np.ndarray, old: np.ndarray, reg: float) -> np.ndarray:
    """Ridge solution of ``A x ~ y``, unless it fits worse than ``old``."""
    k = A.shape[1]
    if A.shape[0] == 0:
        return np.zeros(k)
    x = np.linalg.solve(A.T @ A + reg * np.eye(k), A.T @ y) if reg > 0 else None
    res_old = np.sum((A @ old - y) ** 2)
    if x is None or np.sum((A @ x - y) ** 2) > res_old:
        x = np.linalg.lstsq(A, y, rcond=None)[0]
        if np.sum((A @ x - y) ** 2) > res_old:
            x = old
    return x


def _rmse(tt: TTTensor, s: SampleSet) -> float:
    if len(s) == 0:
        return float("nan")
    return float(np.sqrt(np.mean((tt_eval_batch(tt, s.indices) - s.values) ** 2)))


def tt_als_complete(
    samples: SampleSet,
    grid: Grid | Sequence[int],
    ranks: int | Sequence[int],
    sweeps: int = 25,
    reg: float = 1e-8,
    seed: int = 0,
    validation: SampleSet | None = None,
    restarts: int = 3,
) -> ALSResult:
    """Fit a TT of the given ranks to observed entries.

    Parameters
    ----------
    samples : SampleSet
        Training observations. Split tags, if any, are ignored here;
        select the training subset before calling.
    grid : Grid or sequence of int
        Grid (or its dimensions) the indices refer to.
    ranks : int or sequence of int
        Internal rank, or the full chain of N+1 ranks.
    sweeps : int
        Number of sweeps; each updates every core once, alternating the
        sweep direction.
    reg : float
        Ridge parameter for the per-slice systems.
    validation : SampleSet, optional
        Held-out observations; their RMSE is recorded per sweep.
    restarts : int
        Number of independent random starts (default 3). The run with the lowest final
        validation RMSE (training RMSE without validation data) is kept.
        Restarts guard against the degenerate local minima that ALS can
        settle in when few entries are observed.

    Returns
    -------
    ALSResult
        ``train_rmse[0]`` is the error of the random initialization and
        ``train_rmse[s]`` the error after sweep ``s``.
    """
    dims = tuple(grid.dims) if isinstance(grid, Grid) else tuple(int(d) for d in grid)
    N = len(dims)
    samples.check_grid(dims)
    if np.isscalar(ranks):
        chain = [1] + [int(ranks)] * (N - 1) + [1]
    else:
        chain = [int(r) for r in ranks]
        if len(chain) == N - 1:
            chain = [1] + chain + [1]
    if len(chain) != N + 1 or min(chain) < 1 or chain[0] != 1 or chain[-1] != 1:
        raise DomainError(f"invalid rank specification {ranks!r}")
    for n in range(N):
        missing = np.setdiff1d(np.arange(dims[n]), samples.indices[:, n])
        if missing.size:
            warnings.warn(
                f"axis {n}: indices {missing.tolist()} never observed; their slices are set to zero",
                UnidentifiableSliceWarning,
                stacklevel=2,
            )

    if restarts < 1:
        raise DomainError("restarts must be at least 1")
    # restart 0 uses the plain seed so that restarts=1 matches a single run
    rngs = [np.random.default_rng(seed if r == 0 else [seed, r]) for r in range(restarts)]
    runs = [_fit(samples, dims, chain, sweeps, reg, rng, validation) for rng in rngs]
    use_valid = validation is not None and len(validation) > 0
    key = [run.valid_rmse[-1] if use_valid else run.train_rmse[-1] for run in runs]
    best = int(np.argmin(key))
    runs[best].restart = best
    return runs[best]


def _fit(samples, dims, chain, sweeps, reg, rng, validation) -> ALSResult:
    N = len(dims)
    cores = _init_cores(dims, chain, rng)
    X, y = samples.indices, samples.values
    P = len(samples)

    def left_iface(n):
        v = np.ones((P, 1))
        for k in range(n):
            v = np.einsum("pa,pab->pb", v, cores[k][:, X[:, k], :].transpose(1, 0, 2))
        return v

    def right_iface(n):
        u = np.ones((P, 1))
        for k in range(N - 1, n, -1):
            u = np.einsum("pab,pb->pa", cores[k][:, X[:, k], :].transpose(1, 0, 2), u)
        return u

    def update(n, L, R):
        r, I, r2 = cores[n].shape
        new = np.empty_like(cores[n])
        design = np.einsum("pa,pb->pab", L, R).reshape(P, r * r2)
        for i in range(I):
            rows = X[:, n] == i
            new[:, i, :] = _solve_slice(design[rows], y[rows], cores[n][:, i, :].reshape(-1), reg).reshape(r, r2)
        cores[n] = new

    result = ALSResult(TTTensor(cores))
    result.train_rmse.append(_rmse(result.tt, samples))
    if validation is not None:
        result.valid_rmse.append(_rmse(result.tt, validation))

    for sweep in range(sweeps):
        order = range(N) if sweep % 2 == 0 else range(N - 1, -1, -1)
        for n in order:
            update(n, left_iface(n), right_iface(n))
            # move the norm away from the sweep direction; the tensor is unchanged
            r, I, r2 = cores[n].shape
            if sweep % 2 == 0 and n < N - 1:
                q, rr = np.linalg.qr(cores[n].reshape(r * I, r2))
                cores[n] = q.reshape(r, I, -1)
                cores[n + 1] = np.einsum("ab,bic->aic", rr, cores[n + 1])
            elif sweep % 2 == 1 and n > 0:
                q, rr = np.linalg.qr(cores[n].reshape(r, I * r2).T)
                cores[n] = q.T.reshape(-1, I, r2)
                cores[n - 1] = np.einsum("aib,bc->aic", cores[n - 1], rr.T)
        result.tt = TTTensor(cores)
        result.train_rmse.append(_rmse(result.tt, samples))
        if validation is not None:
            result.valid_rmse.append(_rmse(result.tt, validation))
        log.debug("als sweep %d: train rmse %.3e", sweep, result.train_rmse[-1])
    return result
