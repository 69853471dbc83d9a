"""Site-local jump operators and their two-level compression.

Applying a single-site operator to a TT touches one core only.  The family
[L_1 v, ..., L_P v] therefore shares every unmodified core of v, which lets
pairwise inner products run with O(d^2) core contractions (instead of O(d^3))
and linear combinations stay within twice the bond dimensions of v.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dm_compress import (
    CompressOptions,
    CompressReport,
    FactorMatrix,
    concat,
    select_rank,
    tt_compress,
    _per_column_allowed_error,
)
from .tt import TensorTrain, canonicalize, svd_sweep, tt_norm, tt_zero

# Instrumented counter of per-site environment contractions in shared_gram.
_contraction_count = 0


def reset_contraction_counter() -> None:
    global _contraction_count
    _contraction_count = 0


def contraction_count() -> int:
    return _contraction_count


def _count(n: int = 1) -> None:
    global _contraction_count
    _contraction_count += n


@dataclass(frozen=True)
class JumpOperatorSet:
    """Site-local jump operators (site index, local matrix).

    Rate prefactors are expected to be folded into the matrices already.
    """

    ops: tuple[tuple[int, np.ndarray], ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "ops",
            tuple((int(site), np.asarray(m, dtype=np.complex128)) for site, m in self.ops),
        )
        for site, m in self.ops:
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"jump operator at site {site} is not square: {m.shape}")

    def __len__(self) -> int:
        return len(self.ops)


def apply_jump(local: np.ndarray, site: int, v: TensorTrain) -> TensorTrain:
    """Contract a local matrix with one core; bonds unchanged."""
    local = np.asarray(local, dtype=np.complex128)
    n = v.mode_sizes[site]
    if local.shape != (n, n):
        raise ValueError(f"operator shape {local.shape} does not fit mode {n} at site {site}")
    cores = list(v.cores)
    cores[site] = np.einsum("il,alb->aib", local, cores[site])
    center = v.ortho_center if v.ortho_center == site else None
    return TensorTrain(tuple(cores), ortho_center=center)


@dataclass(frozen=True)
class SharedJumpFamily:
    """The family [L_1 v, ..., L_P v] stored through all canonical forms of v.

    ``left[k]`` / ``right[k]`` are the left-/right-orthogonal cores of v and
    ``center[k]`` the center core of its k-th canonical form; member j is
    v with ``center[site_j]`` replaced by the operator-contracted core.
    """

    left: tuple[np.ndarray, ...]
    right: tuple[np.ndarray, ...]
    center: tuple[np.ndarray, ...]
    ops: JumpOperatorSet

    @classmethod
    def build(cls, v: TensorTrain, ops: JumpOperatorSet) -> "SharedJumpFamily":
        d = v.ndim
        for site, m in ops.ops:
            if not 0 <= site < d:
                raise ValueError(f"jump site {site} out of range")
            if m.shape[0] != v.mode_sizes[site]:
                raise ValueError("jump operator does not fit its site")
        vr = canonicalize(v, 0)
        right = list(vr.cores)
        left = [None] * d
        center = [None] * d
        c = right[0]
        for k in range(d):
            center[k] = c
            if k < d - 1:
                bl, n, br = c.shape
                q, r = np.linalg.qr(c.reshape(bl * n, br))
                left[k] = q.reshape(bl, n, -1)
                c = np.tensordot(r, right[k + 1], axes=(1, 0))
        left[d - 1] = center[d - 1]
        return cls(tuple(left), tuple(right), tuple(center), ops)

    @property
    def ndim(self) -> int:
        return len(self.center)

    def modified_center(self, j: int) -> np.ndarray:
        site, m = self.ops.ops[j]
        return np.einsum("il,alb->aib", m, self.center[site])

    def member(self, j: int) -> TensorTrain:
        """Materialize L_j v; shares every unmodified core of v."""
        site, _ = self.ops.ops[j]
        cores = list(self.left[:site]) + [self.modified_center(j)] + list(self.right[site + 1 :])
        return TensorTrain(tuple(cores))

    def mode_sizes(self):
        return tuple(c.shape[1] for c in self.center)


def shared_gram(family: SharedJumpFamily) -> np.ndarray:
    """Hermitian matrix of <L_j v, L_k v> using the shared-core recurrence.

    For each j the partial environments are advanced once across the chain
    and reused for every k >= j, so the total count of per-site contractions
    is O(P * d) rather than O(P^2 * d).
    """
    ops = family.ops.ops
    p = len(ops)
    w = np.zeros((p, p), dtype=np.complex128)
    order = sorted(range(p), key=lambda j: ops[j][0])
    mods = {}  # cache of modified center cores

    def modified(j):
        if j not in mods:
            mods[j] = family.modified_center(j)
        return mods[j]

    for a, j in enumerate(order):
        sj = ops[j][0]
        # ket = L_j v in form sj; env over sites < sj is the identity.
        wj = modified(j)
        w[j, j] = np.linalg.norm(wj) ** 2
        env = None  # env[b_ket, b_bra] after the last processed site
        site = sj
        for b in range(a + 1, len(order)):
            k = order[b]
            sk = ops[k][0]
            # advance env to just before site sk using ket cores and bra left cores
            while site < sk:
                ket_core = wj if site == sj else family.right[site]
                if env is None:
                    t = ket_core  # (1, n, b') with leading identity env
                else:
                    t = np.tensordot(env.T, ket_core, axes=(1, 0))  # (b_bra, n, b_ket')
                bra_core = family.left[site]
                env = np.tensordot(bra_core.conj(), t, axes=([0, 1], [0, 1])).T
                _count()
                site += 1
            # close at site sk: ket core B_sk (or wj if sk == sj), bra core W_k
            ket_core = wj if sk == sj else family.right[sk]
            t = ket_core if env is None else np.tensordot(env.T, ket_core, axes=(1, 0))
            closed = np.tensordot(modified(k).conj(), t, axes=([0, 1], [0, 1]))
            _count()
            # <L_j v, L_k v>; bra is L_k v
            val = np.trace(closed)
            w[k, j] = val
            w[j, k] = np.conj(val)
    return 0.5 * (w + w.conj().T)


def shared_lincomb(family: SharedJumpFamily, c) -> TensorTrain:
    """sum_j c_j L_j v via the block-core construction; bonds at most double."""
    c = np.asarray(c, dtype=np.complex128)
    ops = family.ops.ops
    if c.shape != (len(ops),):
        raise ValueError(f"need {len(ops)} coefficients, got {c.shape}")
    d = family.ndim
    by_site = {}
    for j, (site, _) in enumerate(ops):
        if c[j] != 0:
            by_site.setdefault(site, []).append(j)

    def w_core(k):
        bl = family.center[k].shape[0]
        n = family.center[k].shape[1]
        br = family.center[k].shape[2]
        out = np.zeros((bl, n, br), dtype=np.complex128)
        for j in by_site.get(k, ()):
            out = out + c[j] * family.modified_center(j)
        return out

    if d == 1:
        return TensorTrain((w_core(0),))
    cores = []
    for k in range(d):
        if k == 0:
            cores.append(np.concatenate([w_core(0), family.left[0]], axis=2))
        elif k == d - 1:
            cores.append(np.concatenate([family.right[k], w_core(k)], axis=0))
        else:
            bk = family.right[k]
            ak = family.left[k]
            wk = w_core(k)
            bl_b, n, br_b = bk.shape
            bl_a, _, br_a = ak.shape
            core = np.zeros((bl_b + bl_a, n, br_b + br_a), dtype=np.complex128)
            core[:bl_b, :, :br_b] = bk
            core[bl_b:, :, :br_b] = wk
            core[bl_b:, :, br_b:] = ak
            cores.append(core)
    return TensorTrain(tuple(cores))


def compress_family(
    family: SharedJumpFamily, tau: float, opts: CompressOptions
) -> tuple[FactorMatrix, CompressReport]:
    """Rank-truncate [L_1 v, ..., L_P v] with the shared-core fast paths.

    Mirrors the generic truncation pipeline (norm screening, Gram
    eigendecomposition, rank selection, budgeted linear combinations) but the
    Gram matrix comes from shared_gram and each output column from a single
    shared_lincomb followed by one SVD sweep.
    """
    if tau <= 0:
        raise ValueError("truncation tolerance must be positive")
    p = len(family.ops)
    report = CompressReport(rank_in=p)
    modes = tuple(core.shape[1] for core in family.center)
    w = shared_gram(family)
    norms2 = np.real(np.diag(w)).clip(min=0.0)

    # Norm screening on the family members.
    order = np.argsort(-norms2, kind="stable")
    tail = np.cumsum(norms2[order][::-1])[::-1]
    keep = p
    for k in range(p, 0, -1):
        if tail[k - 1] <= opts.alpha_screen * tau:
            keep = k - 1
        else:
            break
    kept = list(order[:keep])
    report.spent_screen = float(tail[keep]) if keep < p else 0.0
    report.rank_screened = keep
    tau_left = tau - report.spent_screen
    if not kept:
        report.rank_out = 1
        zero = tt_zero(modes)
        return FactorMatrix((zero,), norms=(0.0,)), report

    wk = w[np.ix_(kept, kept)]
    eigs, vecs = np.linalg.eigh(wk)
    eigs = np.clip(eigs[::-1], opts.eig_floor, None)
    vecs = vecs[:, ::-1]
    r, spent_svd = select_rank(eigs, opts.alpha_svd * tau_left)
    report.spent_svd = spent_svd
    tau_tt = tau_left - spent_svd
    report.rank_out = r
    if r == 0:
        zero = tt_zero(modes)
        return FactorMatrix((zero,), norms=(0.0,)), report

    sigmas = np.sqrt(eigs[:r])
    d = len(modes)
    scale = 1.0 / np.sqrt(max(d - 1, 1))
    cols = []
    norms = []
    bound = 0.0
    for i in range(r):
        full_c = np.zeros(p, dtype=np.complex128)
        full_c[kept] = vecs[:, i]
        raw = shared_lincomb(family, full_c)
        allowed = _per_column_allowed_error(float(sigmas[i]), tau_tt, r)
        col, rep = svd_sweep(raw, core_tols=[allowed * scale] * max(d - 1, 1) if d > 1 else None)
        cols.append(col)
        norms.append(tt_norm(col))
        err = rep.error_bound
        bound += err**2 + 2.0 * float(sigmas[i]) * err
    report.bound_tt = float(bound)
    return FactorMatrix(tuple(cols), norms=tuple(norms)), report


def tt_compress_L(
    v: FactorMatrix,
    jumps: JumpOperatorSet,
    tau: float,
    opts: CompressOptions = CompressOptions(),
) -> tuple[FactorMatrix, CompressReport]:
    """Compressed representation of [L_1 V, ..., L_P V].

    Stage 1 compresses each per-column family with budget tau / (2 r) using
    the shared-core routines; stage 2 concatenates the survivors and runs the
    generic truncation with budget tau / 2.
    """
    if tau <= 0:
        raise ValueError("truncation tolerance must be positive")
    r = v.rank
    stage1 = []
    for i, col in enumerate(v.columns):
        family = SharedJumpFamily.build(col, jumps)
        col_opts = CompressOptions(
            alpha_screen=opts.alpha_screen,
            alpha_svd=opts.alpha_svd,
            method=opts.method,
            sketch_factor=opts.sketch_factor,
            seed=opts.seed + i,
            eig_floor=opts.eig_floor,
        )
        compressed, _ = compress_family(family, tau / (2.0 * r), col_opts)
        stage1.append(compressed)
    combined = concat(*stage1)
    return tt_compress(combined, tau / 2.0, opts)
