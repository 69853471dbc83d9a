"""Matrix product operators: construction, application, products, compression.

Core ``k`` has shape ``(b_k, n_k, n'_k, b_{k+1})`` with (row, column) physical
indices.  The site-to-Kronecker-factor convention is fixed package wide by
:func:`kron_embed`: site 0 is the *leftmost* Kronecker factor, matching the
C-order reshape used in :mod:`ttlindblad.tt`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tt import (
    DENSE_CAP,
    ModeMismatch,
    TensorTrain,
    TruncationReport,
    _check_cap,
    svd_sweep,
)


@dataclass(frozen=True)
class MatrixProductOperator:
    """An operator on the product Hilbert space as a chain of order-4 cores."""

    cores: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "cores", tuple(np.asarray(c, dtype=np.complex128) for c in self.cores))
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[3] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for a, b in zip(self.cores, self.cores[1:]):
            if a.shape[3] != b.shape[0]:
                raise ValueError(f"bond mismatch: {a.shape} vs {b.shape}")

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def row_modes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_modes(self) -> tuple[int, ...]:
        return tuple(c.shape[2] for c in self.cores)

    @property
    def bonds(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[3] for c in self.cores)

    @property
    def max_bond(self) -> int:
        return max(self.bonds)


def kron_embed(site: int, m: np.ndarray, modes) -> np.ndarray:
    """Dense Kronecker embedding of a single-site operator.

    Site 0 is the leftmost factor: ``I_{n_0} x ... x m x ... x I_{n_{d-1}}``.
    This is the one shared ordering utility; every dense oracle goes through it.
    """
    modes = tuple(modes)
    m = np.asarray(m, dtype=np.complex128)
    if m.shape != (modes[site], modes[site]):
        raise ValueError(f"operator shape {m.shape} does not fit mode {modes[site]} at site {site}")
    out = np.eye(int(np.prod(modes[:site], dtype=np.int64)) if site else 1, dtype=np.complex128)
    out = np.kron(out, m)
    after = int(np.prod(modes[site + 1 :], dtype=np.int64)) if site < len(modes) - 1 else 1
    return np.kron(out, np.eye(after, dtype=np.complex128))


def mpo_identity(modes) -> MatrixProductOperator:
    return MatrixProductOperator(
        tuple(np.eye(n, dtype=np.complex128).reshape(1, n, n, 1) for n in modes)
    )


def mpo_zero(modes) -> MatrixProductOperator:
    return MatrixProductOperator(
        tuple(np.zeros((1, n, n, 1), dtype=np.complex128) for n in modes)
    )


def mpo_from_local(site: int, m: np.ndarray, modes) -> MatrixProductOperator:
    """Bond-1 MPO of a single-site operator at ``site``."""
    modes = tuple(modes)
    m = np.asarray(m, dtype=np.complex128)
    if m.shape != (modes[site], modes[site]):
        raise ValueError(f"operator shape {m.shape} does not fit mode {modes[site]}")
    cores = [np.eye(n, dtype=np.complex128).reshape(1, n, n, 1) for n in modes]
    cores[site] = m.reshape(1, *m.shape, 1)
    return MatrixProductOperator(tuple(cores))


def mpo_scale(alpha: complex, h: MatrixProductOperator) -> MatrixProductOperator:
    cores = list(h.cores)
    cores[0] = alpha * cores[0]
    return MatrixProductOperator(tuple(cores))


def mpo_to_dense(h: MatrixProductOperator, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense N x N matrix, with row/column indices flattened in C order."""
    n_total = int(np.prod(h.row_modes, dtype=np.int64))
    _check_cap((n_total, int(np.prod(h.col_modes, dtype=np.int64))), cap)
    out = h.cores[0]  # (1, i, j, b)
    for core in h.cores[1:]:
        out = np.tensordot(out, core, axes=(-1, 0))
    # axes: 1, i_0, j_0, i_1, j_1, ..., 1 -> group rows then columns
    out = out.reshape(out.shape[1:-1])
    d = h.ndim
    perm = list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2))
    return np.ascontiguousarray(out.transpose(perm).reshape(n_total, -1))


def mpo_apply(h: MatrixProductOperator, x: TensorTrain) -> TensorTrain:
    """Exact product Hx; bonds multiply, no truncation."""
    if h.col_modes != x.mode_sizes:
        raise ModeMismatch(f"MPO column modes {h.col_modes} vs TT modes {x.mode_sizes}")
    cores = []
    for hc, xc in zip(h.cores, x.cores):
        # hc: (a, i, j, a'), xc: (b, j, b') -> (a*b, i, a'*b')
        t = np.tensordot(hc, xc, axes=(2, 1))  # (a, i, a', b, b')
        t = t.transpose(0, 3, 1, 2, 4)
        a, b, i, a2, b2 = t.shape
        cores.append(t.reshape(a * b, i, a2 * b2))
    return TensorTrain(tuple(cores))


def mpo_mul(a: MatrixProductOperator, b: MatrixProductOperator) -> MatrixProductOperator:
    """Exact operator product AB; bonds multiply."""
    if a.col_modes != b.row_modes:
        raise ModeMismatch(f"inner modes differ: {a.col_modes} vs {b.row_modes}")
    cores = []
    for ac, bc in zip(a.cores, b.cores):
        # ac: (p, i, j, p'), bc: (q, j, k, q') -> (p*q, i, k, p'*q')
        t = np.tensordot(ac, bc, axes=(2, 1))  # (p, i, p', q, k, q')
        t = t.transpose(0, 3, 1, 4, 2, 5)
        p, q, i, k, p2, q2 = t.shape
        cores.append(t.reshape(p * q, i, k, p2 * q2))
    return MatrixProductOperator(tuple(cores))


def mpo_add(a: MatrixProductOperator, b: MatrixProductOperator) -> MatrixProductOperator:
    """Exact sum via block cores; bonds add."""
    if a.row_modes != b.row_modes or a.col_modes != b.col_modes:
        raise ModeMismatch("MPO mode mismatch in sum")
    d = a.ndim
    if d == 1:
        return MatrixProductOperator((a.cores[0] + b.cores[0],))
    cores = []
    for k in range(d):
        ac, bc = a.cores[k], b.cores[k]
        (al, i, j, ar), (bl, _, _, br) = ac.shape, bc.shape
        if k == 0:
            core = np.concatenate([ac, bc], axis=3)
        elif k == d - 1:
            core = np.concatenate([ac, bc], axis=0)
        else:
            core = np.zeros((al + bl, i, j, ar + br), dtype=np.complex128)
            core[:al, :, :, :ar] = ac
            core[al:, :, :, ar:] = bc
        cores.append(core)
    return MatrixProductOperator(tuple(cores))


def _mpo_as_tt(h: MatrixProductOperator) -> TensorTrain:
    return TensorTrain(
        tuple(c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in h.cores)
    )


def _tt_as_mpo(x: TensorTrain, row_modes, col_modes) -> MatrixProductOperator:
    return MatrixProductOperator(
        tuple(
            c.reshape(c.shape[0], i, j, c.shape[2])
            for c, i, j in zip(x.cores, row_modes, col_modes)
        )
    )


def mpo_compress(
    h: MatrixProductOperator, tol: float, max_bond: int | None = None
) -> tuple[MatrixProductOperator, TruncationReport]:
    """Truncate in the operator Frobenius norm by fusing each (row, col)
    physical pair into one index and running a TT sweep."""
    fused, report = svd_sweep(_mpo_as_tt(h), tol, max_bond=max_bond)
    return _tt_as_mpo(fused, h.row_modes, h.col_modes), report


def mpo_apply_compressed(
    h: MatrixProductOperator,
    x: TensorTrain,
    tol: float,
    method: str = "deterministic",
    max_bond: int | None = None,
    rng: np.random.Generator | None = None,
    sketch_factor: float = 1.2,
) -> TensorTrain:
    """Hx within ``tol`` in Frobenius norm.

    ``deterministic`` materializes the product and runs an SVD sweep.  The
    ``randomized`` path sketches the product core by core without ever forming
    the uncompressed train; the sketch bond defaults to
    ``ceil(sketch_factor * b_H * b_x)`` capped at ``max_bond``.
    """
    if method == "deterministic":
        out, _ = svd_sweep(mpo_apply(h, x), tol, max_bond=max_bond)
        return out
    if method != "randomized":
        raise ValueError(f"unknown method {method!r}")
    from .rand_round import randomized_apply

    return randomized_apply(
        h, x, tol, rng=rng, max_bond=max_bond, sketch_factor=sketch_factor
    )
