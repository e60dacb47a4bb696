"""Variable-space discretization and scattered sample sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, DomainError, ShapeError
from .tt import check_weights

__all__ = ["Grid", "SampleSet", "quantize", "split_samples", "lhs"]


@dataclass(frozen=True)
class Grid:
    """Tensor-product grid with per-axis probability masses.

    ``axes[n]`` is either a strictly increasing float array (continuous
    variable) or a tuple of labels (categorical variable).
    """

    axes: tuple
    weights: tuple = field(default=())

    def __post_init__(self):
        axes = []
        for n, ax in enumerate(self.axes):
            if isinstance(ax, tuple) and ax and not isinstance(ax[0], (int, float, np.number)):
                if len(set(ax)) != len(ax):
                    raise DomainError(f"axis {n} has repeated labels")
                axes.append(tuple(ax))
                continue
            ax = np.asarray(ax, dtype=float)
            if ax.ndim != 1 or ax.size < 1:
                raise ShapeError(f"axis {n} must be a nonempty 1-D array")
            if np.any(np.diff(ax) <= 0):
                raise DomainError(f"axis {n} values are not strictly increasing")
            ax.flags.writeable = False
            axes.append(ax)
        object.__setattr__(self, "axes", tuple(axes))
        dims = [len(ax) for ax in axes]
        if not self.weights:
            w = [np.full(d, 1.0 / d) for d in dims]
        else:
            w = check_weights(self.weights, dims)
        object.__setattr__(self, "weights", tuple(w))

    @classmethod
    def uniform(
        cls,
        ranges: Sequence[tuple[float, float]],
        bins: int | Sequence[int],
        points: str = "endpoints",
    ) -> "Grid":
        """Equispaced grid over a box, with equal weights.

        ``points="endpoints"`` places ``bins`` values from ``lo`` to ``hi``
        inclusive; ``points="midpoints"`` uses the centers of ``bins`` equal
        cells instead (the midpoint quadrature rule for a uniform variable).
        """
        if np.isscalar(bins):
            bins = [int(bins)] * len(ranges)
        axes = []
        for (lo, hi), b in zip(ranges, bins):
            if not lo < hi:
                raise DomainError(f"empty range [{lo}, {hi}]")
            if points == "endpoints":
                axes.append(np.linspace(lo, hi, b) if b > 1 else np.array([(lo + hi) / 2]))
            elif points == "midpoints":
                h = (hi - lo) / b
                axes.append(lo + h * (np.arange(b) + 0.5))
            else:
                raise DomainError(f"unknown point placement {points!r}")
        return cls(tuple(axes))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(ax) for ax in self.axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def is_categorical(self, n: int) -> bool:
        return isinstance(self.axes[n], tuple)

    def values(self, idx: np.ndarray) -> np.ndarray:
        """Coordinates of grid points ``idx`` (P x N) on continuous axes."""
        idx = np.asarray(idx, dtype=np.intp)
        cols = []
        for n in range(self.ndim):
            if self.is_categorical(n):
                raise DomainError(f"axis {n} is categorical; no numeric coordinates")
            cols.append(self.axes[n][idx[:, n]])
        return np.stack(cols, axis=1) if cols else np.zeros((idx.shape[0], 0))


def quantize(grid: Grid, x) -> np.ndarray:
    """Nearest grid index per coordinate; exact ties go to the lower index.

    ``x`` may be one point (length N) or a batch (P x N). Categorical
    coordinates must match a label exactly.
    """
    single = np.ndim(x) == 1 or (np.ndim(x) == 0 and grid.ndim == 1)
    pts = [list(np.atleast_1d(x))] if single else [list(row) for row in x]
    out = np.empty((len(pts), grid.ndim), dtype=np.intp)
    for n, ax in enumerate(grid.axes):
        col = [p[n] for p in pts]
        if grid.is_categorical(n):
            lookup = {v: i for i, v in enumerate(ax)}
            try:
                out[:, n] = [lookup[v] for v in col]
            except KeyError as e:
                raise DomainError(f"unknown label {e.args[0]!r} on axis {n}") from None
            continue
        v = np.asarray(col, dtype=float)
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite coordinate on axis {n}")
        hi = np.clip(np.searchsorted(ax, v, side="left"), 0, len(ax) - 1)
        lo = np.clip(hi - 1, 0, len(ax) - 1)
        # choose hi only when strictly closer than lo
        pick_hi = np.abs(ax[hi] - v) < np.abs(v - ax[lo])
        out[:, n] = np.where(pick_hi, hi, lo)
    return out[0] if single else out


def lhs(n_points: int, n_dims: int, rng=None) -> np.ndarray:
    """Latin hypercube sample in the unit cube, shape (n_points, n_dims)."""
    rng = np.random.default_rng(rng)
    u = (rng.random((n_points, n_dims)) + np.arange(n_points)[:, None]) / n_points
    for d in range(n_dims):
        u[:, d] = u[rng.permutation(n_points), d]
    return u


SPLITS = ("train", "valid", "test")


@dataclass
class SampleSet:
    """Scattered observations ``(multi-index, value)``, optionally tagged by split.

    ``levels[n]``, when present, holds the original setting that each index
    of axis ``n`` stands for.
    """

    indices: np.ndarray
    values: np.ndarray
    split: np.ndarray | None = None
    levels: tuple | None = None

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.intp)
        self.values = np.asarray(self.values, dtype=float)
        if self.indices.ndim != 2 or self.indices.shape[0] != self.values.shape[0]:
            raise ShapeError("indices must be P x N and match the number of values")
        if self.split is not None:
            self.split = np.asarray(self.split, dtype=object)
            bad = set(self.split) - set(SPLITS)
            if bad:
                raise DataError(f"unknown split tags {sorted(bad)}")

    def __len__(self) -> int:
        return self.values.shape[0]

    def check_grid(self, dims: Sequence[int]) -> None:
        if self.indices.shape[1] != len(dims):
            raise ShapeError(f"samples have {self.indices.shape[1]} columns, grid has {len(dims)}")
        if len(self) and (np.any(self.indices < 0) or np.any(self.indices >= np.asarray(dims))):
            raise DomainError("sample index outside the grid")

    def subset(self, name: str) -> "SampleSet":
        if self.split is None:
            raise DataError("sample set has no split tags")
        m = self.split == name
        return SampleSet(self.indices[m], self.values[m], self.split[m], self.levels)


def split_samples(
    samples: SampleSet, fractions=(0.7, 0.15, 0.15), seed: int = 0
) -> SampleSet:
    """Tag samples train/valid/test at random with the given fractions."""
    P = len(samples)
    perm = np.random.default_rng(seed).permutation(P)
    n_train = int(round(fractions[0] * P))
    n_valid = int(round(fractions[1] * P))
    tags = np.empty(P, dtype=object)
    tags[perm[:n_train]] = "train"
    tags[perm[n_train : n_train + n_valid]] = "valid"
    tags[perm[n_train + n_valid :]] = "test"
    return SampleSet(samples.indices, samples.values, tags, samples.levels)
