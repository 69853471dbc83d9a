"""Randomize-then-orthogonalize rounding of TT linear combinations and MPO-TT
products.

A random sketch train is contracted against the inputs right-to-left once; the
resulting partial contractions are reused across every requested output.  The
orthogonalize sweep then builds each output left-to-right with bond dimensions
capped by the sketch bonds, and a final SVD sweep cuts below the sketch rank
where possible.

The RNG is the counter-based Philox generator, seeded explicitly, so fixed
(inputs, coefficients, seed) give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .tt import TensorTrain, svd_sweep, tt_zero


@dataclass(frozen=True)
class SketchTensor:
    """Random TT with prescribed bonds and a recorded seed.

    Core entries are i.i.d. complex standard Gaussian (independent real and
    imaginary parts of variance 1/2), scaled by ``1/sqrt(b_k)`` with ``b_k``
    the core's right bond, so each entry has expected squared modulus 1/b_k.
    """

    tt: TensorTrain
    seed: int

    @property
    def bonds(self):
        return self.tt.bonds


@dataclass(frozen=True)
class PartialContraction:
    """Right-to-left accumulated contractions of one input train with the
    conjugated sketch.  ``envs[k]`` covers cores ``k..d-1`` and has shape
    ``(b_k of x, b_k of sketch)``; ``envs[d]`` is the trivial 1x1."""

    envs: tuple[np.ndarray, ...]


def make_sketch(modes, bond, seed: int) -> SketchTensor:
    """Gaussian sketch train; ``bond`` is an int or per-bond list (d-1 entries)."""
    modes = tuple(modes)
    d = len(modes)
    if np.isscalar(bond):
        interior = [int(bond)] * (d - 1)
    else:
        interior = [int(b) for b in bond]
    if len(interior) != d - 1 or any(b < 1 for b in interior):
        raise ValueError("sketch bonds must be positive, one per interior bond")
    full = [1] + interior + [1]
    rng = np.random.Generator(np.random.Philox(seed))
    cores = []
    for k, n in enumerate(modes):
        shape = (full[k], n, full[k + 1])
        core = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
        cores.append(core / np.sqrt(full[k + 1]))
    return SketchTensor(TensorTrain(tuple(cores)), seed=int(seed))


def partial_contractions_rl(x: TensorTrain, omega: SketchTensor) -> PartialContraction:
    """Contract ``x`` against the conjugated sketch from the right."""
    w = omega.tt
    if x.mode_sizes != w.mode_sizes:
        raise ValueError(f"mode mismatch: {x.mode_sizes} vs {w.mode_sizes}")
    d = x.ndim
    envs = [None] * (d + 1)
    envs[d] = np.ones((1, 1), dtype=np.complex128)
    for k in range(d - 1, -1, -1):
        t = np.tensordot(x.cores[k], envs[k + 1], axes=(2, 0))  # (bx, n, bw')
        envs[k] = np.tensordot(t, w.cores[k].conj(), axes=([1, 2], [1, 2]))  # (bx, bw)
    return PartialContraction(tuple(envs))


def _orthogonalize_sum(columns, carries, envs, sketch_modes):
    """Left-to-right orthogonalize sweep for an implicit linear combination.

    ``carries[j]`` maps the current output bond to column j's bond; the sum of
    sketched carries defines each new core via QR.  Returns the raw cores.
    """
    d = len(sketch_modes)
    cores = []
    for k in range(d - 1):
        ts = [np.tensordot(c, x.cores[k], axes=(1, 0)) for c, x in zip(carries, columns)]
        s = sum(np.tensordot(t, env.envs[k + 1], axes=(2, 0)) for t, env in zip(ts, envs))
        chi, n, bw = s.shape
        q, _ = np.linalg.qr(s.reshape(chi * n, bw))
        qc = q.reshape(chi, n, -1)
        cores.append(qc)
        carries = [np.tensordot(qc.conj(), t, axes=([0, 1], [0, 1])) for t in ts]
    last = sum(np.tensordot(c, x.cores[d - 1], axes=(1, 0)) for c, x in zip(carries, columns))
    cores.append(last)
    return cores


def randomized_round_many(
    columns,
    coeffs: np.ndarray,
    omega: SketchTensor,
    per_output_tols,
) -> list[TensorTrain]:
    """Round ``r`` linear combinations of the same columns with one sketch.

    ``coeffs`` has shape (R0, r); output ``i`` approximates
    ``sum_j coeffs[j, i] * columns[j]``.  The partial contractions are built
    once per column and reused for every output.  ``per_output_tols`` gives,
    per output, either a scalar sweep tolerance or a per-bond tolerance list.
    """
    columns = list(columns)
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.ndim != 2 or coeffs.shape[0] != len(columns):
        raise ValueError(f"coefficient shape {coeffs.shape} does not match {len(columns)} columns")
    r = coeffs.shape[1]
    if len(per_output_tols) != r:
        raise ValueError("need one tolerance per output")
    modes = columns[0].mode_sizes
    envs = [partial_contractions_rl(x, omega) for x in columns]
    outputs = []
    for i in range(r):
        if not np.any(coeffs[:, i]):
            outputs.append(tt_zero(modes))
            continue
        carries = [
            np.full((1, 1), coeffs[j, i], dtype=np.complex128) for j in range(len(columns))
        ]
        cores = _orthogonalize_sum(columns, carries, envs, modes)
        raw = TensorTrain(tuple(cores))
        tol = per_output_tols[i]
        if np.isscalar(tol):
            out, _ = svd_sweep(raw, float(tol))
        else:
            out, _ = svd_sweep(raw, core_tols=list(tol))
        outputs.append(out)
    return outputs


def default_sketch_bond(columns, factor: float = 1.2) -> int:
    """Heuristic sketch bond: ceil(factor x largest input bond)."""
    return max(1, ceil(factor * max(x.max_bond for x in columns)))


def randomized_apply(
    h,
    x: TensorTrain,
    tol: float,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
    sketch_bond=None,
    sketch_factor: float = 1.2,
    max_bond: int | None = None,
) -> TensorTrain:
    """Round the MPO-TT product Hx without materializing its full cores.

    The sketch environments and the orthogonalize sweep contract the MPO core,
    the TT core, and the sketch site by site, so the uncompressed product
    train (bond ``b_H * b_x``) never exists as a whole.  By default the sketch
    bonds equal the full product bonds (capped by ``max_bond``), which makes
    the randomization loss-free up to the final SVD sweep at ``tol``.
    """
    from .mpo import MatrixProductOperator  # cycle guard

    assert isinstance(h, MatrixProductOperator)
    d = x.ndim
    hb, xb = h.bonds, x.bonds
    if sketch_bond is None:
        interior = [hb[k] * xb[k] for k in range(1, d)]
        if max_bond is not None:
            interior = [min(b, max(max_bond, ceil(sketch_factor * xb[k + 1]))) for k, b in enumerate(interior)]
    elif np.isscalar(sketch_bond):
        interior = [min(hb[k] * xb[k], int(sketch_bond)) for k in range(1, d)]
    else:
        interior = [int(b) for b in sketch_bond]
    if seed is None:
        seed = int(rng.integers(2**63)) if rng is not None else 0
    omega = make_sketch(x.mode_sizes, interior if d > 1 else 1, seed).tt

    # Right-to-left environments over the implicit product cores.
    envs = [None] * (d + 1)
    envs[d] = np.ones((1, 1, 1), dtype=np.complex128)  # (bH, bx, bw)
    for k in range(d - 1, -1, -1):
        t = np.tensordot(x.cores[k], envs[k + 1], axes=(2, 1))  # (bx, j, bH', bw')
        t = np.tensordot(h.cores[k], t, axes=([2, 3], [1, 2]))  # (a, i, bx, bw')
        envs[k] = np.tensordot(t, omega.cores[k].conj(), axes=([1, 3], [1, 2])).transpose(0, 1, 2)
        # (a, bx, bw)

    # Left-to-right orthogonalize sweep.
    carry = np.ones((1, 1, 1), dtype=np.complex128)  # (chi, bH, bx)
    cores = []
    for k in range(d - 1):
        u = np.tensordot(carry, h.cores[k], axes=(1, 0))  # (chi, bx, i, j, a')
        t = np.tensordot(u, x.cores[k], axes=([1, 3], [0, 1]))  # (chi, i, a', bx')
        s = np.tensordot(t, envs[k + 1], axes=([2, 3], [0, 1]))  # (chi, i, bw)
        chi, n, bw = s.shape
        q, _ = np.linalg.qr(s.reshape(chi * n, bw))
        qc = q.reshape(chi, n, -1)
        cores.append(qc)
        carry = np.tensordot(qc.conj(), t, axes=([0, 1], [0, 1]))  # (chi', a', bx')
    u = np.tensordot(carry, h.cores[d - 1], axes=(1, 0))
    t = np.tensordot(u, x.cores[d - 1], axes=([1, 3], [0, 1]))  # (chi, i, 1)
    cores.append(t.reshape(t.shape[0], t.shape[1], 1))
    out, _ = svd_sweep(TensorTrain(tuple(cores)), tol, max_bond=max_bond)
    return out
