from __future__ import annotations

import numpy as np
import pytest

from ttsobol.convert import (
    CPModel,
    PCEModel,
    TuckerModel,
    cp_to_tt,
    legendre_basis,
    legendre_projection,
    pce_to_tt,
    tucker_to_tt,
)
from ttsobol.errors import CapacityError, ShapeError
from ttsobol.grid import Grid
from ttsobol.tt import tt_full


def test_cp_dense(rng):
    U = [rng.standard_normal((d, 4)) for d in (3, 5, 2, 4)]
    lam = rng.standard_normal(4)
    dense = np.einsum("r,ir,jr,kr,lr->ijkl", lam, *U)
    t = cp_to_tt(CPModel(tuple(U), lam))
    assert t.ranks == (1, 4, 4, 4, 1)
    np.testing.assert_allclose(tt_full(t), dense, atol=1e-12)
    one = cp_to_tt(CPModel((U[0],)))
    np.testing.assert_allclose(tt_full(one), U[0].sum(axis=1), atol=1e-12)


def test_cp_validation(rng):
    with pytest.raises(ShapeError):
        CPModel((rng.random((3, 2)), rng.random((3, 3))))
    with pytest.raises(ShapeError):
        CPModel((rng.random((3, 2)),), np.ones(3))


def test_tucker_dense(rng):
    B = rng.standard_normal((2, 3, 2))
    U = [rng.standard_normal((d, r)) for d, r in zip((4, 5, 3), B.shape)]
    dense = np.einsum("abc,ia,jb,kc->ijk", B, *U)
    t = tucker_to_tt(TuckerModel(B, tuple(U)))
    np.testing.assert_allclose(tt_full(t), dense, atol=1e-12)
    with pytest.raises(ShapeError):
        TuckerModel(B, tuple(U[:2]))
    with pytest.raises(CapacityError):
        tucker_to_tt(TuckerModel(B, tuple(U)), cap=5)


def test_pce_dense(rng):
    g = Grid.uniform([(0.0, 2.0), (-1.0, 1.0), (1.0, 3.0)], 6)
    bases = tuple(legendre_basis(2, lo, hi) for lo, hi in [(0.0, 2.0), (-1.0, 1.0), (1.0, 3.0)])
    C = rng.standard_normal((3, 3, 3))
    t = pce_to_tt(PCEModel(C, bases, 2), g)
    V = [bases[n](g.axes[n]) for n in range(3)]
    np.testing.assert_allclose(tt_full(t), np.einsum("abc,ia,jb,kc->ijk", C, *V), atol=1e-12)


def test_pce_sparse_coefficients():
    bases = (legendre_basis(1),) * 2
    m = PCEModel({(1, 0): 2.0, (0, 1): -1.0, (1, 1): 0.5}, bases, 1)
    C = m.dense_coefficients()
    assert C[1, 0] == 2.0 and C[1, 1] == 0.5 and C[0, 0] == 0.0
    with pytest.raises(ShapeError):
        PCEModel({(2, 0): 1.0}, bases, 1).dense_coefficients()


def test_legendre_basis_values():
    B = legendre_basis(3, 0.0, 4.0)(np.array([0.0, 2.0, 4.0]))
    np.testing.assert_allclose(B[:, 0], 1.0)
    np.testing.assert_allclose(B[:, 1], [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(B[:, 2], [1.0, -0.5, 1.0])
    np.testing.assert_allclose(B[:, 3], [-1.0, 0.0, 1.0])


def test_projection_reproduces_polynomials():
    ranges = [(0.0, 1.0), (2.0, 5.0)]

    def f(x):
        return 1.0 + 3.0 * x[:, 0] ** 2 * x[:, 1] - x[:, 1] ** 3

    m = legendre_projection(f, ranges, degree=3)
    x = np.random.default_rng(0).uniform([0, 2], [1, 5], (20, 2))
    vals = np.einsum("ab,pa,pb->p", m.dense_coefficients(), m.bases[0](x[:, 0]), m.bases[1](x[:, 1]))
    np.testing.assert_allclose(vals, f(x), rtol=1e-11)
