"""Conversions from CP, Tucker and polynomial-chaos models to tensor trains."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial import legendre

from .errors import CapacityError, ShapeError
from .grid import Grid
from .tt import DENSE_CAP, TTTensor, tt_from_full

__all__ = [
    "CPModel",
    "TuckerModel",
    "PCEModel",
    "cp_to_tt",
    "tucker_to_tt",
    "pce_to_tt",
    "legendre_basis",
    "legendre_projection",
]


@dataclass(frozen=True)
class CPModel:
    """Sum of ``R`` rank-one terms: ``sum_r lam[r] prod_n U_n[x_n, r]``."""

    factors: tuple
    weights: np.ndarray | None = None

    def __post_init__(self):
        factors = tuple(np.asarray(U, dtype=float) for U in self.factors)
        if not factors:
            raise ShapeError("CP model needs at least one factor")
        R = factors[0].shape[1]
        if any(U.ndim != 2 or U.shape[1] != R for U in factors):
            raise ShapeError("all CP factors must be 2-D with the same number of columns")
        object.__setattr__(self, "factors", factors)
        if self.weights is not None:
            lam = np.asarray(self.weights, dtype=float)
            if lam.shape != (R,):
                raise ShapeError(f"CP weights must have length {R}")
            object.__setattr__(self, "weights", lam)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]


@dataclass(frozen=True)
class TuckerModel:
    """Dense core ``B`` (R_1 x ... x R_N) with factor matrices ``U_n`` (I_n x R_n)."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = np.asarray(self.core, dtype=float)
        factors = tuple(np.asarray(U, dtype=float) for U in self.factors)
        if core.ndim != len(factors):
            raise ShapeError(f"core has {core.ndim} axes but {len(factors)} factors were given")
        for n, U in enumerate(factors):
            if U.ndim != 2 or U.shape[1] != core.shape[n]:
                raise ShapeError(f"factor {n} has shape {U.shape}, core mode is {core.shape[n]}")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)


@dataclass(frozen=True)
class PCEModel:
    """Truncated polynomial chaos expansion.

    ``coefficients`` is either a dense array of shape ``(D+1,) * N`` or a
    mapping from multi-degrees to coefficients. ``bases[n]`` maps an array
    of coordinates to the matrix of basis values, one column per degree
    ``0..D``. Orthogonality of the bases is not checked.
    """

    coefficients: object
    bases: tuple
    degree: int

    def dense_coefficients(self) -> np.ndarray:
        N, D = len(self.bases), self.degree
        if isinstance(self.coefficients, Mapping):
            C = np.zeros((D + 1,) * N)
            for alpha, c in self.coefficients.items():
                if len(alpha) != N or max(alpha) > D or min(alpha) < 0:
                    raise ShapeError(f"multi-degree {alpha} incompatible with N={N}, D={D}")
                C[tuple(alpha)] += c
            return C
        C = np.asarray(self.coefficients, dtype=float)
        if C.shape != (D + 1,) * N:
            raise ShapeError(f"coefficient tensor has shape {C.shape}, expected {(D + 1,) * N}")
        return C


def cp_to_tt(m: CPModel) -> TTTensor:
    """Exact TT of a CP model, with diagonal interior cores of rank ``R``.

    The weights are absorbed into the first core.
    """
    U = m.factors
    lam = np.ones(m.rank) if m.weights is None else m.weights
    N = len(U)
    if N == 1:
        return TTTensor([(U[0] @ lam).reshape(1, -1, 1)])
    R = m.rank
    cores = [(U[0] * lam)[None, :, :]]
    for Un in U[1:-1]:
        c = np.zeros((R, Un.shape[0], R))
        idx = np.arange(R)
        c[idx, :, idx] = Un.T
        cores.append(c)
    cores.append(U[-1].T[:, :, None])
    return TTTensor(cores)


def tucker_to_tt(m: TuckerModel, eps: float = 1e-12, cap: int = DENSE_CAP) -> TTTensor:
    """TT of a Tucker model: compress the core to TT, then apply each factor to its core."""
    if m.core.size > cap:
        raise CapacityError(f"Tucker core with {m.core.size} entries exceeds cap {cap}")
    small = tt_from_full(m.core, eps)
    return TTTensor([np.einsum("arb,ir->aib", c, U) for c, U in zip(small.cores, m.factors)])


def pce_to_tt(m: PCEModel, grid: Grid, eps: float = 1e-12) -> TTTensor:
    """TT of a PCE sampled on ``grid``: factor ``n`` holds basis ``n`` at the grid values."""
    if len(m.bases) != grid.ndim:
        raise ShapeError(f"PCE has {len(m.bases)} bases, grid has {grid.ndim} axes")
    factors = []
    for n, basis in enumerate(m.bases):
        U = np.asarray(basis(np.asarray(grid.axes[n])), dtype=float)
        if U.shape != (grid.dims[n], m.degree + 1):
            raise ShapeError(f"basis {n} returned shape {U.shape}")
        factors.append(U)
    return tucker_to_tt(TuckerModel(m.dense_coefficients(), tuple(factors)), eps)


def legendre_basis(degree: int, lo: float = -1.0, hi: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Legendre polynomials ``P_0..P_degree`` on ``[lo, hi]`` (affinely mapped)."""

    def basis(x):
        u = 2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0
        return legendre.legvander(u, degree)

    return basis


def legendre_projection(
    f: Callable[[np.ndarray], np.ndarray],
    ranges: Sequence[tuple[float, float]],
    degree: int,
    nodes: int | None = None,
) -> PCEModel:
    """Full tensor Legendre PCE of ``f`` by Gauss-Legendre spectral projection.

    Assumes independent uniform inputs on ``ranges``. Uses ``nodes`` points
    per axis (default ``degree + 2``), i.e. ``nodes**N`` evaluations of ``f``.
    """
    N = len(ranges)
    nodes = degree + 2 if nodes is None else nodes
    u, wq = legendre.leggauss(nodes)
    wq = wq / 2.0
    pts = [lo + (u + 1.0) * (hi - lo) / 2.0 for lo, hi in ranges]
    mesh = np.stack(np.meshgrid(*pts, indexing="ij"), axis=-1).reshape(-1, N)
    F = np.asarray(f(mesh), dtype=float).reshape((nodes,) * N)
    # project each axis on P_d / E[P_d^2], with E[P_d^2] = 1 / (2d + 1)
    proj = legendre.legvander(u, degree) * wq[:, None] * (2 * np.arange(degree + 1) + 1)
    C = F
    for n in range(N):
        C = np.tensordot(C, proj, axes=([0], [0]))
    bases = tuple(legendre_basis(degree, lo, hi) for lo, hi in ranges)
    return PCEModel(C, bases, degree)
