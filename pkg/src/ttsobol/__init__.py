"""Tensor-train surrogates and Sobol sensitivity tensors.

Build a TT surrogate of a model on a grid (cross approximation, ALS
completion or conversion from CP/Tucker/PCE), compress all 2^N Sobol
indices into a 2 x ... x 2 TT, aggregate them into closed, superset or
total indices and search them under cardinality and membership
constraints.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .aggregate import (
    AGGREGATIONS,
    complement,
    from_closed,
    from_superset,
    from_total,
    to_closed,
    to_superset,
    to_total,
)
from .als import ALSResult, tt_als_complete
from .convert import (
    CPModel,
    PCEModel,
    TuckerModel,
    cp_to_tt,
    legendre_basis,
    legendre_projection,
    pce_to_tt,
    tucker_to_tt,
)
from .cross import CrossResult, grid_evaluator, maxvol, tt_cross
from .errors import (
    CapacityError,
    ChecksumError,
    ConstructionError,
    DataError,
    DegenerateModelError,
    DomainError,
    FileAccessError,
    FormatError,
    NumericalError,
    NumericalInstabilityError,
    ShapeError,
    TTSobolError,
)
from .grid import Grid, SampleSet, lhs, quantize, split_samples
from .io import ingest_samples, load_sobol, load_tt, save_sobol, save_tt
from .models import GSpec, PISTON, brute_force_anova, get_model, piston, sobol_g, sobol_g_analytic
from .query import (
    MaskTT,
    constrain_mask,
    hamming_mask,
    masked_argmax,
    nonempty_mask,
    ones_mask,
    order_contribution,
    top_k,
)
from .sobol import SobolTT, anova_term, binary_index, sobol_index, sobol_star, sobol_tensor, subset_of
from .tt import (
    TTTensor,
    tt_add,
    tt_dot,
    tt_eval,
    tt_eval_batch,
    tt_from_full,
    tt_full,
    tt_hadamard,
    tt_norm,
    tt_ones,
    tt_random,
    tt_rank1,
    tt_round,
    tt_scale,
    tt_sub,
    tt_sum,
    uniform_weights,
)
