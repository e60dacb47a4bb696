"""Analytic benchmark models and a brute-force ANOVA oracle.

The oracle works on dense arrays and is independent of the tensor-train
code paths; it is what the compressed Sobol machinery is checked against.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import CapacityError, DegenerateModelError, DomainError, NumericalInstabilityError

__all__ = [
    "GSpec",
    "PistonSpec",
    "PISTON",
    "sobol_g",
    "sobol_g_analytic",
    "piston",
    "brute_force_anova",
    "ModelEntry",
    "MODELS",
    "get_model",
]


@dataclass(frozen=True)
class GSpec:
    """Coefficients ``a_n >= 0`` of the Sobol G function."""

    a: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        if any(v < 0 for v in a):
            raise DomainError("Sobol G coefficients must be nonnegative")
        object.__setattr__(self, "a", a)

    @classmethod
    def random(cls, n: int, seed: int = 0) -> "GSpec":
        """Coefficients drawn from U(0, 1)."""
        return cls(tuple(np.random.default_rng(seed).uniform(0.0, 1.0, n)))

    @property
    def ndim(self) -> int:
        return len(self.a)


def sobol_g(x, spec: GSpec) -> np.ndarray | float:
    """Sobol G function ``prod_n (|4 x_n - 2| + a_n) / (1 + a_n)``.

    ``x`` is one point or a batch of points (last axis = variables).
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(spec.a)
    out = np.prod((np.abs(4.0 * x - 2.0) + a) / (1.0 + a), axis=-1)
    return float(out) if out.ndim == 0 else out


def sobol_g_analytic(spec: GSpec):
    """Closed-form variances of the Sobol G function.

    Returns ``(Dn, D, index)`` where ``Dn`` holds the per-variable partial
    variances ``1 / (3 (1 + a_n)^2)``, ``D = prod(1 + Dn) - 1`` and
    ``index(alpha)`` gives ``prod_{n in alpha} Dn / D`` for a 0-based
    variable subset.
    """
    a = np.asarray(spec.a)
    Dn = 1.0 / (3.0 * (1.0 + a) ** 2)
    D = float(np.prod(1.0 + Dn) - 1.0)

    def index(alpha) -> float:
        alpha = list(alpha)
        if not alpha:
            raise DomainError("the empty tuple has no Sobol index")
        return float(np.prod(Dn[alpha]) / D)

    return Dn, D, index


@dataclass(frozen=True)
class PistonSpec:
    """Uniform input ranges of the piston cycle-time model, in model order."""

    names: tuple = ("M", "S", "V0", "k", "P0", "Ta", "T0")
    ranges: tuple = (
        (30.0, 60.0),  # kg
        (0.005, 0.02),  # m^2
        (0.002, 0.01),  # m^3
        (1000.0, 5000.0),  # N/m
        (90000.0, 110000.0),  # N/m^2
        (290.0, 296.0),  # K
        (340.0, 360.0),  # K
    )

    def __post_init__(self):
        for lo, hi in self.ranges:
            if not lo < hi:
                raise DomainError(f"empty range [{lo}, {hi}]")


PISTON = PistonSpec()


def piston(x, spec: PistonSpec = PISTON) -> np.ndarray | float:
    """Cycle time (seconds) of the piston model.

    Raises :class:`DomainError` for inputs outside ``spec.ranges``.
    """
    x = np.asarray(x, dtype=float)
    lo = np.array([r[0] for r in spec.ranges])
    hi = np.array([r[1] for r in spec.ranges])
    slack = 1e-12 * (hi - lo)
    if np.any(x < lo - slack) or np.any(x > hi + slack):
        raise DomainError("piston input outside its admissible ranges")
    M, S, V0, k, P0, Ta, T0 = np.moveaxis(x, -1, 0)
    A = P0 * S + 19.62 * M - k * V0 / S
    disc = A**2 + 4.0 * k * P0 * V0 / T0 * Ta
    V = S / (2.0 * k) * (np.sqrt(disc) - A)
    denom = k + S**2 * P0 * V0 / T0 * Ta / V**2
    out = 2.0 * np.pi * np.sqrt(M / denom)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------
# Dense oracle
# ----------------------------------------------------------------------

ORACLE_CAP = 2**8 * 12**8


def brute_force_anova(dense: np.ndarray, weights: Sequence[np.ndarray], cap: int = ORACLE_CAP):
    """Exact functional ANOVA of a dense array under a product measure.

    Every term ``f_alpha`` is built by marginalizing over the complement of
    ``alpha`` and subtracting all strictly smaller terms, in order of
    increasing ``|alpha|``.

    Returns
    -------
    D : float
        Total variance ``E[f^2] - E[f]^2``.
    S : dict
        Maps every nonempty 0-based ``alpha`` (sorted tuple) to ``D_alpha / D``.
    terms : dict
        The dense ANOVA terms, each broadcastable to ``dense.shape``;
        includes the empty tuple (the mean).
    """
    f = np.asarray(dense, dtype=float)
    N = f.ndim
    if 2**N * f.size > cap:
        raise CapacityError(f"oracle cost 2^{N} * {f.size} exceeds cap {cap}")
    w = [np.asarray(v, dtype=float) for v in weights]

    def expect(arr, axes):
        for ax in sorted(axes, reverse=True):
            arr = np.tensordot(arr, w[ax], axes=([ax], [0]))
            arr = np.expand_dims(arr, ax)
        return arr

    terms = {}
    for k in range(N + 1):
        for alpha in itertools.combinations(range(N), k):
            rest = [n for n in range(N) if n not in alpha]
            fa = expect(f, rest)
            for beta, fb in terms.items():
                if set(beta) < set(alpha):
                    fa = fa - fb
            terms[alpha] = fa

    def mean_all(arr):
        return float(expect(np.broadcast_to(arr, f.shape), range(N)).reshape(()))

    Dalpha = {a: mean_all(t**2) for a, t in terms.items() if a}
    mean = float(terms[()].reshape(()))
    D_direct = mean_all(f**2) - mean**2
    D = float(sum(Dalpha.values()))
    scale = max(mean_all(f**2), np.finfo(float).tiny)
    if D <= 1e-14 * scale:
        raise DegenerateModelError("model has zero variance", total_variance=D)
    if abs(D - D_direct) > 1e-10 * scale:
        raise NumericalInstabilityError(f"variance partition mismatch: {D} vs {D_direct}")
    return D, {a: v / D for a, v in Dalpha.items()}, terms


# ----------------------------------------------------------------------
# Registry
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ModelEntry:
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    ranges: tuple
    names: tuple
    spec: object = None


def get_model(name: str, dim: int | None = None, a=None, a_seed: int = 0) -> ModelEntry:
    """Look up a built-in model by registry name ("sobol-g" or "piston")."""
    if name == "piston":
        return ModelEntry("piston", piston, PISTON.ranges, PISTON.names, PISTON)
    if name == "sobol-g":
        if a is not None:
            spec = GSpec(tuple(a))
        else:
            spec = GSpec.random(dim or 25, a_seed)
        return ModelEntry(
            "sobol-g",
            lambda x: sobol_g(x, spec),
            ((0.0, 1.0),) * spec.ndim,
            tuple(f"x{n + 1}" for n in range(spec.ndim)),
            spec,
        )
    raise DomainError(f"unknown model {name!r}; choose from {MODELS}")


MODELS = ("sobol-g", "piston")
