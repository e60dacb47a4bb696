from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_closed, dense_superset, dense_total
from ttsobol.aggregate import (
    complement,
    from_closed,
    from_superset,
    from_total,
    to_closed,
    to_superset,
    to_total,
)
from ttsobol.errors import ShapeError
from ttsobol.sobol import sobol_tensor
from ttsobol.tt import tt_full, tt_random, tt_ones, uniform_weights


def _sobol(rng, N):
    t = tt_random((3,) * N, 2, rng)
    return sobol_tensor(t, uniform_weights(t.dims)).S


def test_superset_and_closed_match_dense(rng):
    s = tt_random((2,) * 5, 3, rng)
    A = tt_full(s)
    np.testing.assert_allclose(tt_full(to_superset(s)), dense_superset(A), atol=1e-12)
    np.testing.assert_allclose(tt_full(to_closed(s)), dense_closed(A), atol=1e-12)


def test_total_matches_dense(rng):
    S = _sobol(rng, 5)
    A = tt_full(S)
    np.testing.assert_allclose(tt_full(to_total(S)), dense_total(A), atol=1e-12)


def test_complement(rng):
    s = tt_random((2,) * 4, 2, rng)
    A = tt_full(s)
    np.testing.assert_allclose(tt_full(complement(s)), A[::-1, ::-1, ::-1, ::-1], atol=1e-14)


def test_closed_total_duality(rng):
    S = _sobol(rng, 6)
    sc = tt_full(to_closed(S))
    stc = tt_full(complement(to_total(S)))
    # S^C_alpha = 1 - S^T_{complement of alpha}
    np.testing.assert_allclose(sc, 1.0 - stc, atol=1e-12)


def test_known_values_small():
    # indices S_1=.5, S_2=.3, S_12=.2 in bit order (x1, x2)
    A = np.array([[0.0, 0.3], [0.5, 0.2]])
    from ttsobol.tt import tt_from_full

    S = tt_from_full(A)
    assert tt_full(to_total(S))[1, 0] == pytest.approx(0.7)
    assert tt_full(to_closed(S))[1, 1] == pytest.approx(1.0)
    assert tt_full(to_superset(S))[0, 1] == pytest.approx(0.5)


def test_non_binary_rejected():
    with pytest.raises(ShapeError):
        to_closed(tt_ones((2, 3)))


@settings(max_examples=25, deadline=None)
@given(N=st.integers(1, 7), seed=st.integers(0, 10_000))
def test_round_trips(N, seed):
    rng = np.random.default_rng(seed)
    s = tt_random((2,) * N, 2, rng)
    A = tt_full(s)
    np.testing.assert_allclose(tt_full(from_superset(to_superset(s))), A, atol=1e-12)
    np.testing.assert_allclose(tt_full(from_closed(to_closed(s))), A, atol=1e-12)
    np.testing.assert_allclose(tt_full(complement(complement(s))), A, atol=0)
    np.testing.assert_allclose(tt_full(from_total(to_total(s))), A, atol=1e-11 * max(1, np.abs(A).max()))
