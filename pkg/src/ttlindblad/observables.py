"""Measurements on the low-rank state rho = V V^dagger.

All observables work directly on the TT columns; nothing here densifies the
state.
"""

from __future__ import annotations

import numpy as np

from .dm_compress import FactorMatrix, gram
from .tt import TensorTrain, canonicalize, tt_inner


def reduced_density(v: FactorMatrix, site: int) -> np.ndarray:
    """Single-site reduced density matrix tr_{k != site}(V V^dagger).

    Each column is canonicalized at ``site`` so the partial trace collapses
    to one contraction of the center core with itself.
    """
    n = v.mode_sizes[site]
    rho = np.zeros((n, n), dtype=np.complex128)
    for col in v.columns:
        center = canonicalize(col, site).cores[site]
        rho += np.einsum("aib,ajb->ij", center, center.conj())
    return rho


def observable_site_probability(v: FactorMatrix, site: int, level: int) -> float:
    """Probability of measuring ``site`` in basis state ``level``."""
    return float(np.real(reduced_density(v, site)[level, level]))


def observable_population(v: FactorMatrix, phi) -> float:
    """<phi| rho |phi> = sum_j |<v_j, phi>|^2 for a pure reference state."""
    if isinstance(phi, FactorMatrix):
        if phi.rank != 1:
            raise ValueError("reference state must be pure (rank 1)")
        phi = phi.columns[0]
    if not isinstance(phi, TensorTrain):
        raise TypeError("phi must be a TensorTrain or rank-1 FactorMatrix")
    return float(sum(abs(tt_inner(col, phi)) ** 2 for col in v.columns))


def observable_purity(v: FactorMatrix) -> float:
    """Tr(rho^2) = squared Frobenius norm of the column Gram matrix."""
    w = gram(v)
    return float(np.sum(np.abs(w) ** 2))


def observable_energy_level(v: FactorMatrix, site: int) -> float:
    """Expected occupation level sum_l l * p_l of one subsystem."""
    diag = np.real(np.diag(reduced_density(v, site)))
    return float(np.dot(np.arange(diag.size), diag))
