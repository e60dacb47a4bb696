"""Sobol tensor trains: all variance-based sensitivity indices of a TT surrogate.

Variable subsets ``alpha`` are given as iterables of 0-based axis numbers.
Inside a 2 x ... x 2 tensor the subset is addressed by its indicator
vector: position ``n`` holds 1 if ``n`` is in ``alpha`` and 0 otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateModelError, DomainError, NumericalInstabilityError
from .tt import (
    TTTensor,
    check_weights,
    core_expectation,
    tt_add,
    tt_eval,
    tt_rank1,
    tt_round,
    tt_scale,
)

__all__ = [
    "SobolTT",
    "binary_index",
    "subset_of",
    "anova_term",
    "sobol_star",
    "sobol_tensor",
    "sobol_index",
    "DEFAULT_SQUARING_EPS",
]

DEFAULT_SQUARING_EPS = 1e-6


def binary_index(alpha: Iterable[int], N: int) -> tuple[int, ...]:
    """Indicator vector of a 0-based variable subset."""
    bits = [0] * N
    for n in alpha:
        n = int(n)
        if not 0 <= n < N:
            raise DomainError(f"variable {n} out of range for N={N}")
        bits[n] = 1
    return tuple(bits)


def subset_of(bits: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`binary_index`."""
    return tuple(n for n, b in enumerate(bits) if b)


@dataclass(frozen=True)
class SobolTT:
    """Compressed Sobol indices of a surrogate.

    Attributes
    ----------
    S : TTTensor
        2 x ... x 2 tensor whose entry at the indicator of ``alpha`` is the
        Sobol index of ``alpha``. The empty-set corner is zeroed.
    D_tensor : TTTensor
        Unnormalized variances ``D_alpha``. Its corner keeps the squared
        mean, which is not a variance.
    total_variance : float
        Variance of the surrogate under the product measure.
    mean : float
        Mean of the surrogate.
    corner_zeroed : bool
    """

    S: TTTensor
    D_tensor: TTTensor
    total_variance: float
    mean: float = 0.0
    corner_zeroed: bool = True

    @property
    def ndim(self) -> int:
        return self.S.ndim


def _expectations(t: TTTensor, w) -> list[np.ndarray]:
    return [core_expectation(t, n, w[n]) for n in range(t.ndim)]


def anova_term(t: TTTensor, alpha: Iterable[int], weights) -> TTTensor:
    """ANOVA component of ``t`` for the variable subset ``alpha``.

    Axes outside ``alpha`` get the averaged core repeated on every slice;
    axes in ``alpha`` get the slices minus that average. The empty subset
    yields the constant tensor holding the mean.
    """
    w = check_weights(weights, t.dims)
    bits = binary_index(alpha, t.ndim)
    cores = []
    for c, E, b in zip(t.cores, _expectations(t, w), bits):
        if b:
            cores.append(c - E[:, None, :])
        else:
            cores.append(np.repeat(E[:, None, :], c.shape[1], axis=1))
    return TTTensor(cores)


def sobol_star(t: TTTensor, weights) -> TTTensor:
    """All ANOVA components of ``t`` packed in one tensor train.

    Core ``n`` has ``I_n + 1`` slices: slice 0 is the averaged core and
    slice ``j >= 1`` is original slice ``j - 1`` minus the average. Choosing
    slice 0 on axes outside ``alpha`` and ``i_n + 1`` on axes inside gives
    the ``alpha`` component at grid point ``i``.
    """
    w = check_weights(weights, t.dims)
    cores = []
    for c, E in zip(t.cores, _expectations(t, w)):
        cores.append(np.concatenate([E[:, None, :], c - E[:, None, :]], axis=1))
    return TTTensor(cores)


def sobol_tensor(t: TTTensor, weights, eps: float = DEFAULT_SQUARING_EPS) -> SobolTT:
    """Extract the Sobol tensor train of surrogate ``t``.

    Steps: pack the ANOVA components (:func:`sobol_star`), square them
    core by core and collapse each squared core to two slices (slice 0 is
    the squared average; slice 1 is the weighted sum of the squared
    centered slices), round at ``eps``, divide by the total variance, and
    zero the empty-set corner with a rank-1 correction.

    Raises
    ------
    DegenerateModelError
        If the surrogate has (numerically) zero variance.
    NumericalInstabilityError
        If the computed variance is clearly negative; lower ``eps``.
    """
    w = check_weights(weights, t.dims)
    star = sobol_star(t, w)
    # square and collapse in one step, before any rounding: the collapsed
    # cores have 2 slices instead of I_n + 1, which keeps rounding cheap
    dcores = []
    for c, wn in zip(star.cores, w):
        r, _, r2 = c.shape
        E, Cc = c[:, 0, :], c[:, 1:, :]
        d = np.empty((r * r, 2, r2 * r2))
        d[:, 0, :] = np.einsum("ab,cd->acbd", E, E).reshape(r * r, r2 * r2)
        d[:, 1, :] = np.einsum("i,aib,cid->acbd", wn, Cc, Cc).reshape(r * r, r2 * r2)
        dcores.append(d)
    dcores = tt_round(TTTensor(dcores), eps).cores
    Dt = TTTensor(dcores)

    # product of the summed slices is E[f^2]; the corner holds mean^2
    v = np.ones((1, 1))
    for d in dcores:
        v = v @ (d[:, 0, :] + d[:, 1, :])
    second_moment = float(v[0, 0])
    corner = tt_eval(Dt, (0,) * t.ndim)
    D = second_moment - corner
    scale = max(abs(second_moment), np.finfo(float).tiny)
    if D < -1e-10 * scale:
        raise NumericalInstabilityError(
            f"negative total variance {D:.3e}; use a smaller squaring eps",
            total_variance=D,
        )
    if D <= 1e-12 * scale:
        raise DegenerateModelError("surrogate has zero variance", total_variance=D)

    m = np.ones((1, 1))
    for E in _expectations(t, w):
        m = m @ E
    mean = float(m[0, 0])

    S = tt_scale(Dt, 1.0 / D)
    e0 = [np.array([1.0, 0.0])] * t.ndim
    corr = tt_scale(tt_rank1(e0), -corner / D)
    S = tt_round(tt_add(S, corr), 1e-12)
    return SobolTT(S=S, D_tensor=Dt, total_variance=D, mean=mean, corner_zeroed=True)


def sobol_index(s: SobolTT | TTTensor, alpha: Iterable[int]) -> float:
    """Raw (unclamped) Sobol index of a nonempty subset ``alpha``."""
    S = s.S if isinstance(s, SobolTT) else s
    alpha = list(alpha)
    if not alpha:
        raise DomainError("the empty tuple has no Sobol index")
    return tt_eval(S, binary_index(alpha, S.ndim))
