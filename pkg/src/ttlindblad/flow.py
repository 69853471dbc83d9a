"""Flow operators exp(-i h H_eff) for the non-Hermitian effective Hamiltonian.

Three constructions are provided:

* TEBD operator splitting (orders 1 and 2) for nearest-neighbor Hamiltonians,
* a truncated Taylor series built iteratively with MPO compression, for
  Hamiltonians with long-range terms, and
* a three-part Strang splitting specialized to alternating qudit/resonator
  chains, where the diagonal device factor is built and compressed once.

The effective Hamiltonian is H - (i/2) sum_j L_j^dagger L_j; since all jump
operators here are site-local, the dissipative part contributes single-site
terms only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dm_compress import FactorMatrix
from .mpo import (
    MatrixProductOperator,
    kron_embed,
    mpo_add,
    mpo_apply_compressed,
    mpo_compress,
    mpo_from_local,
    mpo_identity,
    mpo_mul,
    mpo_scale,
)
from .models import LindbladModel, dense_hamiltonian, lowering
from .tt import ModeMismatch, tt_norm, tt_scale


def _expm(m: np.ndarray) -> np.ndarray:
    """Small dense matrix exponential (scaling and squaring)."""
    return scipy.linalg.expm(m)


@dataclass(frozen=True)
class TwoSiteTermList:
    """Nearest-neighbor Hamiltonian terms: (left site k, block of side n_k * n_{k+1})."""

    modes: tuple[int, ...]
    terms: tuple[tuple[int, np.ndarray], ...]

    def __post_init__(self):
        for k, block in self.terms:
            if not 0 <= k < len(self.modes) - 1:
                raise ValueError(f"two-site term at site {k} out of range")
            side = self.modes[k] * self.modes[k + 1]
            if block.shape != (side, side):
                raise ValueError(f"block at site {k} has shape {block.shape}, expected side {side}")


@dataclass(frozen=True)
class FlowOperator:
    """Ordered MPO factors approximating exp(-i h H_eff).

    ``factors[0]`` is applied to the state first.  ``rand_threshold`` is the
    uncompressed product bond above which applications switch to randomized
    rounding.
    """

    factors: tuple[MatrixProductOperator, ...]
    interval: int | None = None
    rand_threshold: int = 32


def _dissipative_locals(model: LindbladModel):
    """Single-site terms -(i/2) L^dagger L of the effective Hamiltonian."""
    out = []
    for site, m in model.jumps.ops:
        out.append((site, -0.5j * (m.conj().T @ m)))
    return out


def dense_h_eff(model: LindbladModel, interval_index: int = 0) -> np.ndarray:
    """Dense effective Hamiltonian, for oracles and small-system checks."""
    h = dense_hamiltonian(model, interval_index)
    for site, m in _dissipative_locals(model):
        h = h + kron_embed(site, m, model.modes)
    return h


def build_h_eff(model: LindbladModel, interval_index: int = 0, tol: float = 1e-12):
    """Effective-Hamiltonian description for the model's flow method.

    Returns a :class:`TwoSiteTermList` for TEBD models (single-site terms,
    including the dissipative ones, folded into two-site blocks: each attaches
    to the block on its left, except site 0 which attaches to block (0, 1)),
    or an MPO for Taylor-flow models.
    """
    iv = model.intervals[interval_index]
    locals_ = list(iv.local) + _dissipative_locals(model)
    if model.flow_method == "tebd" and model.ndim >= 2:
        if iv.products:
            raise ValueError("TEBD flow supports nearest-neighbor terms only")
        d = model.ndim
        blocks = {}
        for k, c in iv.two_site:
            blocks[k] = blocks.get(k, 0) + np.asarray(c, dtype=np.complex128)
        for s, m in locals_:
            if s == 0:
                blocks[0] = blocks.get(0, 0) + np.kron(m, np.eye(model.modes[1]))
            else:
                blocks[s - 1] = blocks.get(s - 1, 0) + np.kron(np.eye(model.modes[s - 1]), m)
        terms = tuple(sorted(blocks.items(), key=lambda kv: kv[0]))
        return TwoSiteTermList(model.modes, terms)
    return h_eff_mpo(model, interval_index, tol)


def h_eff_mpo(model: LindbladModel, interval_index: int = 0, tol: float = 1e-12):
    """The effective Hamiltonian assembled and compressed as an MPO."""
    modes = model.modes
    iv = model.intervals[interval_index]
    acc = None

    def add(term):
        nonlocal acc
        acc = term if acc is None else mpo_add(acc, term)

    for s, m in list(iv.local) + _dissipative_locals(model):
        add(mpo_from_local(s, m, modes))
    for k, c in iv.two_site:
        add(_two_site_mpo(k, c, modes))
    for sites, mats in iv.products:
        cores = [np.eye(n, dtype=np.complex128).reshape(1, n, n, 1) for n in modes]
        for s, m in zip(sites, mats):
            cores[s] = np.asarray(m, dtype=np.complex128).reshape(1, *m.shape, 1)
        add(MatrixProductOperator(tuple(cores)))
    if acc is None:
        from .mpo import mpo_zero

        return mpo_zero(modes)
    out, _ = mpo_compress(acc, tol)
    return out


def _split_two_site(m: np.ndarray, n1: int, n2: int, tol: float = 1e-14):
    """Decompose an (n1*n2)-side matrix into two MPO cores by operator SVD."""
    t = m.reshape(n1, n2, n1, n2).transpose(0, 2, 1, 3).reshape(n1 * n1, n2 * n2)
    u, s, vh = np.linalg.svd(t, full_matrices=False)
    cutoff = tol * max(s[0], 1.0) if s.size else 0.0
    r = max(int(np.sum(s > cutoff)), 1)
    left = (u[:, :r] * np.sqrt(s[:r])).reshape(n1, n1, r)
    right = (np.sqrt(s[:r])[:, None] * vh[:r]).reshape(r, n2, n2)
    return left.reshape(1, n1, n1, r), right.reshape(r, n2, n2, 1)


def _two_site_mpo(k: int, block: np.ndarray, modes) -> MatrixProductOperator:
    cores = [np.eye(n, dtype=np.complex128).reshape(1, n, n, 1) for n in modes]
    lcore, rcore = _split_two_site(block, modes[k], modes[k + 1])
    cores[k] = lcore
    cores[k + 1] = rcore
    return MatrixProductOperator(tuple(cores))


def _partition_mpo(terms: TwoSiteTermList, which: int, h: float) -> MatrixProductOperator:
    """exp(-i h H_partition) for the blocks with left-site parity ``which``."""
    modes = terms.modes
    cores = [np.eye(n, dtype=np.complex128).reshape(1, n, n, 1) for n in modes]
    for k, c in terms.terms:
        if k % 2 != which:
            continue
        e = _expm(-1j * h * c)
        lcore, rcore = _split_two_site(e, modes[k], modes[k + 1])
        cores[k] = lcore
        cores[k + 1] = rcore
    return MatrixProductOperator(tuple(cores))


def tebd_build(
    terms: TwoSiteTermList,
    h: float,
    order: int = 2,
    tol: float = 0.0,
    rand_threshold: int = 32,
    interval: int | None = None,
) -> FlowOperator:
    """Odd/even operator-splitting flow from exact two-site exponentials.

    Order 1 is the Lie product of the two partition flows; order 2 is the
    Strang composition.  Within one partition the blocks commute, so each
    partition flow is exact.
    """
    if order not in (1, 2):
        raise ValueError("splitting order must be 1 or 2")
    if order == 1:
        factors = [_partition_mpo(terms, 0, h), _partition_mpo(terms, 1, h)]
    else:
        half = _partition_mpo(terms, 0, h / 2.0)
        factors = [half, _partition_mpo(terms, 1, h), half]
    if tol > 0.0:
        factors = [mpo_compress(f, tol)[0] for f in factors]
    return FlowOperator(tuple(factors), interval=interval, rand_threshold=rand_threshold)


def taylor_flow(
    h_eff: MatrixProductOperator, h: float, n_terms: int, tol: float
) -> MatrixProductOperator:
    """Truncated Taylor series of exp(-i h H_eff) with per-term compression.

    U(k) = compress(U(k-1) + dU(k)), dU(k) = compress((-i h H_eff / k) dU(k-1)),
    starting from the identity.
    """
    if n_terms < 1:
        raise ValueError("need at least one Taylor term")
    modes = h_eff.col_modes
    u = mpo_identity(modes)
    du = mpo_identity(modes)
    for k in range(1, n_terms + 1):
        du, _ = mpo_compress(mpo_mul(mpo_scale(-1j * h / k, h_eff), du), tol)
        u, _ = mpo_compress(mpo_add(u, du), tol)
    return u


def _qudit_resonator_layout(model: LindbladModel):
    modes = model.modes
    d = len(modes)
    if d % 2 == 0 or any(
        modes[k] != modes[0] if k % 2 == 0 else modes[k] != modes[1 % d]
        for k in range(d)
    ):
        raise ValueError("expected an alternating qudit/resonator chain (odd length)")
    return d


def _site_diagonal_terms(model: LindbladModel):
    """Per-site diagonal H_eff contributions: self-Kerr plus -(i/2) L^dagger L."""
    dev = model.device
    out = []
    for q, n in enumerate(model.modes):
        aq = lowering(n)
        m = -0.5 * dev.self_kerr[q] * (aq.conj().T @ aq.conj().T @ aq @ aq)
        out.append(m)
    for site, l in model.jumps.ops:
        out[site] = out[site] - 0.5j * (l.conj().T @ l)
    return out


def qudit_resonator_flow(
    model: LindbladModel,
    interval_index: int,
    h: float,
    tol: float,
    device_factor: MatrixProductOperator | None = None,
    rand_threshold: int = 32,
) -> FlowOperator:
    """Three-part Strang splitting for the alternating chain.

    The diagonal drift (self/cross-Kerr plus the diagonal dissipative terms)
    splits into 3-site cross-Kerr blocks around even- and odd-indexed
    resonators; since every diagonal term commutes, the composition
    exp(-ihH1/2) exp(-ihH2) exp(-ihH1/2) equals exp(-ihH_drift) exactly and is
    compressed once (``device_factor``).  The off-diagonal control part enters
    as a rank-1 MPO sandwich exp(-ihH3/2) U_d exp(-ihH3/2).
    """
    if device_factor is None:
        device_factor = qudit_resonator_device_factor(model, h, tol)
    dev = model.device
    amps = dev.controls[min(interval_index, dev.controls.shape[0] - 1)]
    if not np.any(amps):
        return FlowOperator((device_factor,), interval=interval_index, rand_threshold=rand_threshold)
    cores = []
    for q, n in enumerate(model.modes):
        aq = lowering(n)
        hc = amps[q] * aq + np.conj(amps[q]) * aq.conj().T
        cores.append(_expm(-0.5j * h * hc).reshape(1, n, n, 1))
    half_control = MatrixProductOperator(tuple(cores))
    return FlowOperator(
        (half_control, device_factor, half_control),
        interval=interval_index,
        rand_threshold=rand_threshold,
    )


def qudit_resonator_device_factor(
    model: LindbladModel, h: float, tol: float
) -> MatrixProductOperator:
    """Compressed exp(-i h H_drift) for the alternating chain (time independent)."""
    d = _qudit_resonator_layout(model)
    modes = model.modes
    dev = model.device
    cross = {(p, q): xi for p, q, xi in dev.cross_kerr}
    site_diag = _site_diagonal_terms(model)

    n_res = d // 2
    # Resonator r (1-based) sits at chain position 2r - 1 (0-based 2r - 2 .. 2r
    # span its 3-site block).  Odd-r blocks absorb the single-site diagonal
    # terms of the sites they cover; leftover sites attach to the even-r block
    # containing them, or stand alone when no block covers them.
    odd_blocks = [r for r in range(1, n_res + 1) if r % 2 == 1]
    even_blocks = [r for r in range(1, n_res + 1) if r % 2 == 0]
    covered = set()
    for r in odd_blocks:
        covered.update(range(2 * r - 2, 2 * r + 1))
    assign = {r: [] for r in odd_blocks + even_blocks}
    standalone = []
    for q in range(d):
        if q in covered:
            continue
        host = next((r for r in even_blocks if 2 * r - 2 <= q <= 2 * r), None)
        if host is not None:
            assign[host].append(q)
        else:
            standalone.append(q)
    for r in odd_blocks:
        assign[r] = list(range(2 * r - 2, 2 * r + 1))

    def block_hamiltonian(r):
        lo = 2 * r - 2
        dims = modes[lo : lo + 3]
        n_block = int(np.prod(dims))
        hb = np.zeros((n_block, n_block), dtype=np.complex128)
        for (p, q), xi in cross.items():
            if lo <= p and q <= lo + 2:
                hb += -xi * kron_embed(p - lo, number_mat(modes[p]), dims) @ kron_embed(
                    q - lo, number_mat(modes[q]), dims
                )
        for q in assign[r]:
            hb += kron_embed(q - lo, site_diag[q], dims)
        return hb

    def number_mat(n):
        aq = lowering(n)
        return aq.conj().T @ aq

    def partition_factor(block_list, step):
        cores = [np.eye(n, dtype=np.complex128).reshape(1, n, n, 1) for n in modes]
        for r in block_list:
            lo = 2 * r - 2
            e = _expm(-1j * step * block_hamiltonian(r))
            c1, c2, c3 = _split_three_site(e, modes[lo], modes[lo + 1], modes[lo + 2])
            cores[lo], cores[lo + 1], cores[lo + 2] = c1, c2, c3
        return MatrixProductOperator(tuple(cores))

    u1_half = partition_factor(even_blocks, h / 2.0)
    u2 = partition_factor(odd_blocks, h)
    device = mpo_mul(mpo_mul(u1_half, u2), u1_half)
    for q in standalone:
        local = _expm(-1j * h * site_diag[q])
        device = mpo_mul(device, mpo_from_local(q, local, modes))
    out, _ = mpo_compress(device, tol)
    return out


def _split_three_site(e: np.ndarray, n1: int, n2: int, n3: int, tol: float = 1e-14):
    """Decompose a 3-site operator into MPO cores with two SVDs."""
    t = (
        e.reshape(n1, n2, n3, n1, n2, n3)
        .transpose(0, 3, 1, 4, 2, 5)
        .reshape(n1 * n1, n2 * n2 * n3 * n3)
    )
    u, s, vh = np.linalg.svd(t, full_matrices=False)
    cutoff = tol * max(s[0], 1.0) if s.size else 0.0
    r1 = max(int(np.sum(s > cutoff)), 1)
    c1 = u[:, :r1].reshape(1, n1, n1, r1)
    rest = (s[:r1, None] * vh[:r1]).reshape(r1 * n2 * n2, n3 * n3)
    u2, s2, vh2 = np.linalg.svd(rest, full_matrices=False)
    cutoff2 = tol * max(s2[0], 1.0) if s2.size else 0.0
    r2 = max(int(np.sum(s2 > cutoff2)), 1)
    c2 = u2[:, :r2].reshape(r1, n2, n2, r2)
    c3 = (s2[:r2, None] * vh2[:r2]).reshape(r2, n3, n3, 1)
    return c1, c2, c3


class FlowCache:
    """Builds and memoizes flow operators per (interval, duration).

    The qudit-resonator device factor is additionally cached per duration so
    new control intervals reuse it without recompression.
    """

    def __init__(
        self,
        model: LindbladModel,
        tol: float,
        order: int = 2,
        rand_threshold: int = 32,
    ):
        self.model = model
        self.tol = tol
        self.order = order
        self.rand_threshold = rand_threshold
        self._flows: dict = {}
        self._h_eff: dict = {}
        self._device: dict = {}

    def _h_eff_for(self, interval_index: int):
        if interval_index not in self._h_eff:
            self._h_eff[interval_index] = build_h_eff(self.model, interval_index)
        return self._h_eff[interval_index]

    def flow(self, interval_index: int, h: float) -> FlowOperator:
        key = (interval_index, float(h))
        if key in self._flows:
            return self._flows[key]
        if h == 0.0:
            out = FlowOperator((), interval=interval_index, rand_threshold=self.rand_threshold)
        elif self.model.flow_method == "tebd" and self.model.ndim >= 2:
            out = tebd_build(
                self._h_eff_for(interval_index),
                h,
                order=self.order,
                tol=self.tol,
                rand_threshold=self.rand_threshold,
                interval=interval_index,
            )
        elif self.model.flow_method == "qudit_resonator":
            if float(h) not in self._device:
                self._device[float(h)] = qudit_resonator_device_factor(
                    self.model, h, self.tol
                )
            out = qudit_resonator_flow(
                self.model,
                interval_index,
                h,
                self.tol,
                device_factor=self._device[float(h)],
                rand_threshold=self.rand_threshold,
            )
        else:
            mpo = taylor_flow(
                self._h_eff_for(interval_index), h, self.model.taylor_terms, self.tol
            )
            out = FlowOperator((mpo,), interval=interval_index, rand_threshold=self.rand_threshold)
        self._flows[key] = out
        return out


def schrodinger_solve(
    flow: FlowOperator,
    v: FactorMatrix,
    scale: complex,
    tol: float,
    seed: int = 0,
) -> FactorMatrix:
    """Apply scale * (flow factors) to every column within ``tol``.

    Per-column tolerance is tol / r, divided evenly over the factors.  Each
    application uses randomized rounding when the uncompressed product bond
    would exceed ``flow.rand_threshold``, deterministic SVD sweeps otherwise.
    """
    r = v.rank
    n_factors = len(flow.factors)
    cols = []
    norms = []
    for i, col in enumerate(v.columns):
        y = tt_scale(scale, col)
        for f_idx, f in enumerate(flow.factors):
            if f.col_modes != y.mode_sizes:
                raise ModeMismatch(
                    f"flow factor modes {f.col_modes} vs column modes {y.mode_sizes}"
                )
            product_bond = max(
                hb * xb for hb, xb in zip(f.bonds, y.bonds)
            )
            method = (
                "randomized" if product_bond > flow.rand_threshold else "deterministic"
            )
            rng = np.random.Generator(
                np.random.Philox(key=[seed & (2**64 - 1), (i << 32) | f_idx])
            )
            y = mpo_apply_compressed(
                f,
                y,
                tol / (r * max(n_factors, 1)),
                method=method,
                rng=rng,
            )
        cols.append(y)
        norms.append(tt_norm(y))
    return FactorMatrix(tuple(cols), norms=tuple(norms))
