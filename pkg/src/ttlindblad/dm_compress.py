"""Density-matrix rank truncation for factors rho = X X^dagger.

The pipeline: norm screening, Gram eigendecomposition, truncation-rank
selection, then error-budgeted linear combinations of the surviving columns
(randomized sketching or iterative TT-SVD).  The output is always an explicit
factor collection, so the truncation map stays completely positive.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .rand_round import make_sketch, randomized_round_many
from .tt import TensorTrain, svd_sweep, tt_add, tt_norm, tt_scale, tt_zero


@dataclass(frozen=True)
class FactorMatrix:
    """Ordered TT columns of a factor V with rho = V V^dagger.

    trace(rho) equals the sum of squared column norms.
    """

    columns: tuple[TensorTrain, ...]
    norms: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        modes = {c.mode_sizes for c in self.columns}
        if len(modes) > 1:
            raise ValueError(f"columns disagree on mode sizes: {modes}")
        if self.norms is not None and len(self.norms) != len(self.columns):
            raise ValueError("cached norms must match column count")

    @property
    def rank(self) -> int:
        return len(self.columns)

    @property
    def mode_sizes(self):
        return self.columns[0].mode_sizes

    def column_norms(self) -> np.ndarray:
        if self.norms is not None:
            return np.asarray(self.norms, dtype=float)
        return np.array([tt_norm(c) for c in self.columns])

    def frobenius_norm(self) -> float:
        """||V||_F, i.e. sqrt(trace(rho))."""
        return float(np.sqrt(np.sum(self.column_norms() ** 2)))

    def max_bond(self) -> int:
        return max(c.max_bond for c in self.columns)


@dataclass(frozen=True)
class CompressOptions:
    """Error-budget split and linear-combination method for tt_compress.

    ``alpha_screen`` / ``alpha_svd`` give the fraction of the running budget
    spent on norm screening and on discarding Gram eigenvalues.
    """

    alpha_screen: float = 0.7
    alpha_svd: float = 0.7
    method: str = "randomized"  # randomized | ttsvd_iterative | ttsvd_adaptive
    sketch_factor: float = 1.2
    seed: int = 0
    eig_floor: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.alpha_screen <= 1.0 and 0.0 <= self.alpha_svd <= 1.0):
            raise ValueError("budget fractions must lie in [0, 1]")
        if self.method not in ("randomized", "ttsvd_iterative", "ttsvd_adaptive"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class CompressReport:
    spent_screen: float = 0.0
    spent_svd: float = 0.0
    bound_tt: float = 0.0
    rank_in: int = 0
    rank_screened: int = 0
    rank_out: int = 0

    @property
    def total_bound(self) -> float:
        return self.spent_screen + self.spent_svd + self.bound_tt


def norm_screen(x: FactorMatrix, budget: float) -> tuple[FactorMatrix, float]:
    """Drop the longest small-norm tail with sum of squared norms <= budget.

    Columns are returned sorted by decreasing norm; the dropped tail bounds
    the density-matrix perturbation by ``budget`` in Frobenius norm.
    """
    norms = x.column_norms()
    order = np.argsort(-norms, kind="stable")
    sorted_norms = norms[order]
    tail = np.cumsum(sorted_norms[::-1] ** 2)[::-1]  # tail[k] = sum_{i >= k} n_i^2
    keep = x.rank
    for k in range(x.rank, 0, -1):
        if tail[k - 1] <= budget:
            keep = k - 1
        else:
            break
    keep = max(keep, 1)
    spent = float(tail[keep]) if keep < x.rank else 0.0
    kept = tuple(x.columns[j] for j in order[:keep])
    return FactorMatrix(kept, norms=tuple(sorted_norms[:keep])), spent


def gram(x: FactorMatrix, inner=None) -> np.ndarray:
    """Hermitian W = X^dagger X, symmetrized on return.

    ``inner`` may override the pairwise inner product (used by the shared-core
    jump-operator path).
    """
    from .tt import tt_inner

    if inner is None:
        inner = tt_inner
    r = x.rank
    w = np.zeros((r, r), dtype=np.complex128)
    for i in range(r):
        for j in range(i, r):
            # W[i, j] = <x_j, x_i> so that W = X^dagger X elementwise.
            w[i, j] = inner(x.columns[j], x.columns[i])
            w[j, i] = np.conj(w[i, j])
    return 0.5 * (w + w.conj().T)


def select_rank(eigs_desc: np.ndarray, budget: float) -> tuple[int, float]:
    """Smallest rank whose discarded eigenvalue tail stays within budget.

    Eigenvalues must be sorted descending with negatives already clamped.
    At least one column is kept whenever the trace is nonzero.
    """
    eigs = np.asarray(eigs_desc, dtype=float)
    tail = np.cumsum(eigs[::-1])[::-1]
    r = eigs.size
    for k in range(eigs.size, 0, -1):
        if tail[k - 1] <= budget:
            r = k - 1
        else:
            break
    if r == 0 and tail.size and tail[0] > 0.0:
        r = 1
    spent = float(np.sum(eigs[r:]))
    return r, spent


def _per_column_allowed_error(sigma: float, tau_tt: float, r: int) -> float:
    """Allowed ||e_i|| so that ||e_i||^2 + 2 sigma_i ||e_i|| <= tau_tt / r.

    Uses the conservative form with tau_tt^2 / r^2 under the square root.
    """
    return -sigma + np.sqrt(sigma**2 + tau_tt**2 / r**2)


def linear_combinations_ttsvd(
    x: FactorMatrix,
    coeffs: np.ndarray,
    sigmas: np.ndarray,
    tau_tt: float,
    adaptive: bool = False,
) -> tuple[FactorMatrix, float]:
    """Columns of X @ coeffs by sequential pairwise TT sums with SVD sweeps.

    Non-adaptive mode uses a fixed per-sum tolerance; adaptive mode
    redistributes unspent budget using the measured per-sum errors, both at
    the sum level and across output columns.  Returns the new factor and the
    accumulated density-level error bound.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    r0, r = coeffs.shape
    if r0 != x.rank or len(sigmas) != r:
        raise ValueError("coefficient/singular-value shapes do not match the factor")
    per_term = tau_tt / r if r else 0.0
    eps_upper = 0.0  # accumulated ||e||^2 + 2 sigma ||e|| over finished columns
    out_cols = []
    out_norms = []
    for i in range(r):
        if adaptive:
            budget_i = max(i + 1, 1) * per_term - eps_upper
            allowed = -sigmas[i] + np.sqrt(sigmas[i] ** 2 + max(budget_i, 0.0) ** 2)
        else:
            allowed = _per_column_allowed_error(sigmas[i], tau_tt, r)
        acc = tt_scale(coeffs[0, i], x.columns[0])
        eps_i = 0.0
        for j in range(1, r0):
            if adaptive:
                tol_j = (j / max(r0 - 1, 1)) * allowed - eps_i
                tol_j = max(tol_j, 0.0)
            else:
                tol_j = allowed / max(r0 - 1, 1)
            acc = tt_add(acc, tt_scale(coeffs[j, i], x.columns[j]))
            acc, rep = svd_sweep(acc, tol_j)
            eps_i += rep.error_bound
        if r0 == 1:
            acc, _ = svd_sweep(acc, 0.0)
        eps_upper += eps_i**2 + 2.0 * sigmas[i] * eps_i
        out_cols.append(acc)
        out_norms.append(tt_norm(acc))
    return FactorMatrix(tuple(out_cols), norms=tuple(out_norms)), float(eps_upper)


def tt_compress(
    x: FactorMatrix,
    tau: float,
    opts: CompressOptions = CompressOptions(),
    gram_fn=None,
    lincomb_fn=None,
) -> tuple[FactorMatrix, CompressReport]:
    """Truncate the factor so that ||XX^dagger - X'X'^dagger||_F <= tau.

    The map is realized purely as column linear combinations, so the output
    density matrix is of the form X'X'^dagger by construction.  ``gram_fn``
    and ``lincomb_fn`` allow the shared-core jump path to substitute its
    specialized routines.
    """
    if tau <= 0:
        raise ValueError("truncation tolerance must be positive")
    report = CompressReport(rank_in=x.rank)
    if x.rank == 0:
        return x, report

    screened, spent = norm_screen(x, opts.alpha_screen * tau)
    report.spent_screen = spent
    report.rank_screened = screened.rank
    tau_left = tau - spent

    w = gram_fn(screened) if gram_fn is not None else gram(screened)
    eigs, vecs = np.linalg.eigh(w)
    eigs = np.clip(eigs[::-1], opts.eig_floor, None)
    vecs = vecs[:, ::-1]
    r, spent_svd = select_rank(eigs, opts.alpha_svd * tau_left)
    report.spent_svd = spent_svd
    tau_tt = tau_left - spent_svd
    report.rank_out = r
    if r == 0:
        return FactorMatrix((tt_zero(x.mode_sizes),), norms=(0.0,)), report

    sigmas = np.sqrt(eigs[:r])
    coeffs = vecs[:, :r]

    if lincomb_fn is not None:
        out, bound = lincomb_fn(screened, coeffs, sigmas, tau_tt)
    elif opts.method == "randomized":
        out, bound = _randomized_lincombs(screened, coeffs, sigmas, tau_tt, opts)
    else:
        out, bound = linear_combinations_ttsvd(
            screened, coeffs, sigmas, tau_tt, adaptive=(opts.method == "ttsvd_adaptive")
        )
    report.bound_tt = bound
    return out, report


def _randomized_lincombs(x, coeffs, sigmas, tau_tt, opts):
    """Sketch-based linear combinations with the shared-sketch scheme.

    The sketch bonds cover the exact block-sum bonds (sum of the input column
    bonds), so the randomized sweep itself is loss-free and the trailing SVD
    sweep enforces the per-column error budget.
    """
    r = coeffs.shape[1]
    d = len(x.mode_sizes)
    if d > 1:
        bond = [sum(c.bonds[k] for c in x.columns) for k in range(1, d)]
    else:
        bond = 1
    omega = make_sketch(x.mode_sizes, bond, opts.seed)
    scale = 1.0 / np.sqrt(max(d - 1, 1))
    tols = [
        [_per_column_allowed_error(float(sigmas[i]), tau_tt, r) * scale] * max(d - 1, 1)
        if d > 1
        else 0.0
        for i in range(r)
    ]
    cols = randomized_round_many(list(x.columns), coeffs, omega, tols)
    bound = 0.0
    out = []
    for i, c in enumerate(cols):
        canon = c if c.ortho_center is not None else svd_sweep(c, 0.0)[0]
        out.append(canon)
        allowed = _per_column_allowed_error(float(sigmas[i]), tau_tt, r)
        bound += allowed**2 + 2.0 * float(sigmas[i]) * allowed
    return FactorMatrix(tuple(out), norms=tuple(tt_norm(c) for c in out)), float(bound)


def concat(*factors: FactorMatrix) -> FactorMatrix:
    """Column-wise concatenation, merging cached norms when all present."""
    cols = tuple(c for f in factors for c in f.columns)
    norms = None
    if all(f.norms is not None for f in factors):
        norms = tuple(n for f in factors for n in f.norms)
    return FactorMatrix(cols, norms=norms)


def scale_factor(alpha: complex, x: FactorMatrix) -> FactorMatrix:
    cols = tuple(tt_scale(alpha, c) for c in x.columns)
    norms = tuple(abs(alpha) * n for n in x.norms) if x.norms is not None else None
    return FactorMatrix(cols, norms=norms)


def factor_to_dense_rho(x: FactorMatrix) -> np.ndarray:
    """Dense rho = V V^dagger for desk-scale verification."""
    from .tt import tt_to_dense

    vecs = [tt_to_dense(c).reshape(-1) for c in x.columns]
    v = np.stack(vecs, axis=1)
    return v @ v.conj().T
