"""Tensor trains (matrix product states) with exact arithmetic and SVD truncation.

Conventions used throughout the package:

* Core ``k`` (0-based) has shape ``(b_k, n_k, b_{k+1})`` with ``b_0 = b_d = 1``.
* Site 0 corresponds to the *leftmost* Kronecker factor: the dense tensor is
  reshaped in C order, so the flat index of ``(i_0, ..., i_{d-1})`` has ``i_0``
  varying slowest.
* ``svd_sweep`` and ``tt_from_dense`` return left-canonical trains with the
  orthogonality center at the last site.
* A zero tensor is represented with all bond dimensions 1 and zero cores.

All operations return new values; no operation mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DENSE_CAP = 2**24


class DenseCapExceeded(ValueError):
    """Raised when a dense materialization would exceed the element cap."""


class ModeMismatch(ValueError):
    """Raised when two tensor trains do not share mode sizes."""


@dataclass(frozen=True)
class TensorTrain:
    """An order-d tensor stored as a chain of order-3 cores.

    ``ortho_center = c`` guarantees cores left of ``c`` are left-orthogonal
    (column unfolding has orthonormal columns) and cores right of ``c`` are
    right-orthogonal.
    """

    cores: tuple[np.ndarray, ...]
    ortho_center: int | None = None

    def __post_init__(self):
        if not self.cores:
            raise ValueError("tensor train needs at least one core")
        object.__setattr__(self, "cores", tuple(np.asarray(c, dtype=np.complex128) for c in self.cores))
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for a, b in zip(self.cores, self.cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError(f"bond mismatch: {a.shape} vs {b.shape}")

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def bonds(self) -> tuple[int, ...]:
        """The tuple (b_0, b_1, ..., b_d)."""
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def max_bond(self) -> int:
        return max(self.bonds)


@dataclass
class TruncationReport:
    """Accounting for one SVD sweep: accumulated squared discarded singular
    values and the resulting bond dimensions."""

    discarded_weight: float = 0.0
    final_bonds: tuple[int, ...] = field(default_factory=tuple)
    max_bond_capped: bool = False

    @property
    def error_bound(self) -> float:
        """Upper bound on the Frobenius error of the sweep."""
        return float(np.sqrt(self.discarded_weight))


def _check_modes(x: TensorTrain, y: TensorTrain) -> None:
    if x.mode_sizes != y.mode_sizes:
        raise ModeMismatch(f"mode sizes differ: {x.mode_sizes} vs {y.mode_sizes}")


def _check_cap(modes, cap: int = DENSE_CAP) -> None:
    size = int(np.prod([int(n) for n in modes], dtype=object))
    if size > cap:
        raise DenseCapExceeded(f"dense size {size} exceeds cap {cap}")


def tt_zero(modes) -> TensorTrain:
    """Zero tensor: all bonds 1, zero cores."""
    return TensorTrain(tuple(np.zeros((1, n, 1), dtype=np.complex128) for n in modes))


def tt_product_state(vectors) -> TensorTrain:
    """Rank-1 train from one vector per site."""
    return TensorTrain(
        tuple(np.asarray(v, dtype=np.complex128).reshape(1, -1, 1) for v in vectors),
        ortho_center=None,
    )


def tt_random(modes, bonds, rng: np.random.Generator) -> TensorTrain:
    """Random train with prescribed interior bonds (len(modes) - 1 entries)."""
    modes = tuple(modes)
    full = (1,) + tuple(bonds) + (1,)
    cores = []
    for k, n in enumerate(modes):
        shape = (full[k], n, full[k + 1])
        cores.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return TensorTrain(tuple(cores))


def tt_to_dense(x: TensorTrain, cap: int = DENSE_CAP) -> np.ndarray:
    """Materialize the full order-d tensor. Refuses above the element cap."""
    _check_cap(x.mode_sizes, cap)
    out = x.cores[0]  # (1, n_0, b_1)
    for core in x.cores[1:]:
        out = np.tensordot(out, core, axes=(-1, 0))
    return np.ascontiguousarray(out.reshape(x.mode_sizes))


def tt_from_dense(x: np.ndarray, tol: float = 0.0, cap: int = DENSE_CAP) -> TensorTrain:
    """Sequential TT-SVD of a dense tensor.

    The reconstruction differs from ``x`` by at most ``tol`` in Frobenius
    norm.  The result is left-canonical with the center at the last site.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.size == 0:
        raise ValueError("empty tensor")
    _check_cap(x.shape, cap)
    modes = x.shape
    d = x.ndim
    per_core = tol / np.sqrt(max(d - 1, 1))
    cores = []
    mat = x.reshape(1, -1)
    bl = 1
    for k in range(d - 1):
        n = modes[k]
        mat = mat.reshape(bl * n, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        r = _rank_for_tol(s, per_core)
        cores.append(u[:, :r].reshape(bl, n, r))
        mat = (s[:r, None] * vh[:r])
        bl = r
    cores.append(mat.reshape(bl, modes[-1], 1))
    return TensorTrain(tuple(cores), ortho_center=d - 1)


def _rank_for_tol(s: np.ndarray, tol: float, max_bond: int | None = None):
    """Smallest rank whose discarded tail satisfies sqrt(sum s^2) <= tol.

    Ties at the threshold are kept for determinism; at least one singular
    value is always retained.
    """
    if s.size == 0:
        return 1
    tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]  # tail[k] = ||s[k:]||
    over = np.nonzero(tail > tol)[0]
    r = int(over[-1]) + 1 if over.size else 0
    while 0 < r < s.size and s[r] == s[r - 1] and s[r] > 0.0:
        r += 1
    r = max(r, 1)
    if max_bond is not None:
        r = min(r, max_bond)
    return r


def tt_add(x: TensorTrain, y: TensorTrain) -> TensorTrain:
    """Exact elementwise sum via block cores; bonds add, no truncation."""
    _check_modes(x, y)
    d = x.ndim
    if d == 1:
        return TensorTrain((x.cores[0] + y.cores[0],))
    cores = []
    for k in range(d):
        xc, yc = x.cores[k], y.cores[k]
        (xl, n, xr), (yl, _, yr) = xc.shape, yc.shape
        if k == 0:
            core = np.concatenate([xc, yc], axis=2)
        elif k == d - 1:
            core = np.concatenate([xc, yc], axis=0)
        else:
            core = np.zeros((xl + yl, n, xr + yr), dtype=np.complex128)
            core[:xl, :, :xr] = xc
            core[xl:, :, xr:] = yc
        cores.append(core)
    return TensorTrain(tuple(cores))


def tt_scale(alpha: complex, x: TensorTrain) -> TensorTrain:
    """Scale by absorbing alpha into a single core (the center if set)."""
    if alpha == 1:
        return x
    k = x.ortho_center if x.ortho_center is not None else 0
    cores = list(x.cores)
    cores[k] = alpha * cores[k]
    return TensorTrain(tuple(cores), ortho_center=x.ortho_center)


def tt_inner(x: TensorTrain, y: TensorTrain) -> complex:
    """<x, y> = sum conj(y) * x, accumulated left to right."""
    _check_modes(x, y)
    env = np.ones((1, 1), dtype=np.complex128)  # (b^x, b^y)
    for xc, yc in zip(x.cores, y.cores):
        t = np.tensordot(env, xc, axes=(0, 0))  # (b^y, n, b^x')
        env = np.tensordot(yc.conj(), t, axes=([0, 1], [0, 1]))  # (b^y', b^x')
        env = env.T
    return complex(env[0, 0])


def tt_norm(x: TensorTrain) -> float:
    """Frobenius norm; reads the center core alone when canonical."""
    if x.ortho_center is not None:
        return float(np.linalg.norm(x.cores[x.ortho_center]))
    return float(np.sqrt(abs(tt_inner(x, x))))


def canonicalize(x: TensorTrain, center: int) -> TensorTrain:
    """Gauge the train so cores left of ``center`` are left-orthogonal and
    cores right of it are right-orthogonal.  Realized by QR/LQ sweeps."""
    d = x.ndim
    if not 0 <= center < d:
        raise ValueError(f"center {center} out of range for {d} sites")
    if x.ortho_center == center:
        return x
    cores = list(x.cores)
    lo = 0 if x.ortho_center is None else min(x.ortho_center, center)
    hi = d - 1 if x.ortho_center is None else max(x.ortho_center, center)
    # Left-orthogonalize sites lo .. center-1.
    for k in range(lo, center):
        bl, n, br = cores[k].shape
        q, r = np.linalg.qr(cores[k].reshape(bl * n, br))
        cores[k] = q.reshape(bl, n, -1)
        cores[k + 1] = np.tensordot(r, cores[k + 1], axes=(1, 0))
    # Right-orthogonalize sites hi .. center+1.
    for k in range(hi, center, -1):
        bl, n, br = cores[k].shape
        q, r = np.linalg.qr(cores[k].reshape(bl, n * br).conj().T)
        cores[k] = q.conj().T.reshape(-1, n, br)
        cores[k - 1] = np.tensordot(cores[k - 1], r.conj().T, axes=(2, 0))
    return TensorTrain(tuple(cores), ortho_center=center)


def svd_sweep(
    x: TensorTrain,
    tol: float = 0.0,
    max_bond: int | None = None,
    core_tols=None,
) -> tuple[TensorTrain, TruncationReport]:
    """Single left-to-right truncation sweep after right-canonicalization.

    With a uniform ``tol`` the per-bond budget is ``tol / sqrt(d-1)`` in the
    2-norm of discarded singular values, so the total Frobenius error stays
    below ``tol``.  ``core_tols`` (length d-1) overrides the budget bond by
    bond.  The output is left-canonical with the center at the last site.
    """
    d = x.ndim
    report = TruncationReport()
    if d == 1:
        out = TensorTrain(x.cores, ortho_center=0)
        report.final_bonds = out.bonds
        return out, report
    if core_tols is None:
        core_tols = [tol / np.sqrt(d - 1)] * (d - 1)
    elif np.isscalar(core_tols):
        core_tols = [float(core_tols)] * (d - 1)
    if len(core_tols) != d - 1:
        raise ValueError("core_tols must have one entry per interior bond")
    work = canonicalize(x, 0)
    cores = list(work.cores)
    for k in range(d - 1):
        bl, n, br = cores[k].shape
        u, s, vh = np.linalg.svd(cores[k].reshape(bl * n, br), full_matrices=False)
        r = _rank_for_tol(s, core_tols[k], max_bond)
        if max_bond is not None and r == max_bond and np.sqrt(np.sum(s[r:] ** 2)) > core_tols[k]:
            report.max_bond_capped = True
        report.discarded_weight += float(np.sum(s[r:] ** 2))
        cores[k] = u[:, :r].reshape(bl, n, r)
        sv = s[:r, None] * vh[:r]
        cores[k + 1] = np.tensordot(sv, cores[k + 1], axes=(1, 0))
    out = TensorTrain(tuple(cores), ortho_center=d - 1)
    report.final_bonds = out.bonds
    return out, report
