"""Aggregated Sobol tensors (superset, closed, total) by slice arithmetic.

Each transform acts core by core on the two slices of a 2 x ... x 2
tensor train, so it costs O(N R^2) and leaves ranks unchanged (``to_total``
adds one rank for the constant term before rounding).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tt import TTTensor, tt_ones, tt_round, tt_sub

__all__ = [
    "to_superset",
    "from_superset",
    "to_closed",
    "from_closed",
    "complement",
    "to_total",
    "from_total",
    "AGGREGATIONS",
]


def _binary_cores(t: TTTensor) -> list[np.ndarray]:
    if any(d != 2 for d in t.dims):
        raise ShapeError(f"expected a 2 x ... x 2 tensor, got dims {t.dims}")
    return [c.copy() for c in t.cores]


def _slice_map(t: TTTensor, m00, m01, m10, m11) -> TTTensor:
    # new slice k = m_k0 * slice0 + m_k1 * slice1
    out = []
    for c in _binary_cores(t):
        s0, s1 = c[:, 0, :], c[:, 1, :]
        out.append(np.stack([m00 * s0 + m01 * s1, m10 * s0 + m11 * s1], axis=1))
    return TTTensor(out)


def to_superset(s: TTTensor) -> TTTensor:
    """Entry ``alpha`` becomes the sum of ``s`` over all supersets of ``alpha``."""
    return _slice_map(s, 1, 1, 0, 1)


def from_superset(ss: TTTensor) -> TTTensor:
    return _slice_map(ss, 1, -1, 0, 1)


def to_closed(s: TTTensor) -> TTTensor:
    """Entry ``alpha`` becomes the sum of ``s`` over all subsets of ``alpha``.

    On a corner-zeroed Sobol tensor this sums the nonempty subsets only.
    """
    return _slice_map(s, 1, 0, 1, 1)


def from_closed(sc: TTTensor) -> TTTensor:
    return _slice_map(sc, 1, 0, -1, 1)


def complement(t: TTTensor) -> TTTensor:
    """Entry ``alpha`` becomes the entry of the complementary subset."""
    return _slice_map(t, 0, 1, 1, 0)


def to_total(s: TTTensor) -> TTTensor:
    """Total indices: entry ``alpha`` sums ``s`` over subsets meeting ``alpha``.

    Computed as one minus the complemented closed tensor, which requires a
    corner-zeroed Sobol tensor (indices summing to one). Applying the same
    map to a total tensor gives back the Sobol tensor.
    """
    return tt_round(tt_sub(tt_ones(s.dims), complement(to_closed(s))), 1e-12)


def from_total(st: TTTensor) -> TTTensor:
    # the chain 1 - complement(closed(.)) is undone by 1 - complement, then from_closed
    return from_closed(tt_round(tt_sub(tt_ones(st.dims), complement(st)), 1e-12))


AGGREGATIONS = {
    "superset": to_superset,
    "closed": to_closed,
    "total": to_total,
}
