"""Dense reference solver: the vectorized Lindbladian, exact propagation, and
a dense replication of the low-rank stepper.

Vectorization is column stacking throughout: vec(A rho B) = (B^T kron A) vec(rho),
with vec(rho) = rho.reshape(-1, order="F").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .flow import dense_h_eff
from .models import LindbladModel, dense_hamiltonian
from .mpo import kron_embed

DENSE_ORACLE_CAP = 256


class OracleSizeExceeded(ValueError):
    """The Hilbert space is too large for dense reference computations."""


def _hilbert_dim(model: LindbladModel) -> int:
    n = int(np.prod(model.modes, dtype=np.int64))
    if n > DENSE_ORACLE_CAP:
        raise OracleSizeExceeded(f"Hilbert dimension {n} exceeds the dense cap {DENSE_ORACLE_CAP}")
    return n


def dense_jumps(model: LindbladModel) -> list[np.ndarray]:
    """The jump operators embedded as dense N x N matrices."""
    _hilbert_dim(model)
    return [kron_embed(site, m, model.modes) for site, m in model.jumps.ops]


@dataclass(frozen=True)
class DenseLindbladian:
    """The N^2 x N^2 generator with vec(L rho) = matrix @ vec(rho)."""

    matrix: np.ndarray
    modes: tuple[int, ...]

    @property
    def hilbert_dim(self) -> int:
        return int(np.prod(self.modes, dtype=np.int64))


def dense_lindbladian(model: LindbladModel, t: float = 0.0) -> DenseLindbladian:
    """Assemble the generator of the master equation at time t."""
    n = _hilbert_dim(model)
    idx, _ = model.interval_at(t)
    h = dense_hamiltonian(model, idx)
    eye = np.eye(n, dtype=np.complex128)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for l in dense_jumps(model):
        ldl = l.conj().T @ l
        gen += np.kron(l.conj(), l)
        gen -= 0.5 * np.kron(eye, ldl)
        gen -= 0.5 * np.kron(ldl.T, eye)
    return DenseLindbladian(gen, model.modes)


def dense_propagate(rho0: np.ndarray, lind: DenseLindbladian, t: float) -> np.ndarray:
    """exp(L t) applied to rho0 via the vectorized generator."""
    n = lind.hilbert_dim
    if rho0.shape != (n, n):
        raise ValueError(f"state shape {rho0.shape} does not match dimension {n}")
    vec = rho0.reshape(-1, order="F")
    out = scipy.linalg.expm(lind.matrix * t) @ vec
    return out.reshape(n, n, order="F")


# Above this Hilbert dimension the N^2 x N^2 generator is too large to
# exponentiate, so the reference solution switches to adaptive ODE integration
# of the N x N master equation.
EXPM_DIM_CAP = 64


def _ode_propagate(
    rho: np.ndarray, model: LindbladModel, t_start: float, duration: float
) -> np.ndarray:
    import scipy.integrate

    n = rho.shape[0]
    idx, _ = model.interval_at(t_start)
    h = dense_hamiltonian(model, idx)
    jumps = dense_jumps(model)
    ldl = sum((l.conj().T @ l for l in jumps), np.zeros((n, n), dtype=np.complex128))

    def rhs(_, y):
        r = y.reshape(n, n)
        out = -1j * (h @ r - r @ h) - 0.5 * (ldl @ r + r @ ldl)
        for l in jumps:
            out += l @ r @ l.conj().T
        return out.reshape(-1)

    sol = scipy.integrate.solve_ivp(
        rhs,
        (0.0, duration),
        rho.reshape(-1),
        method="DOP853",
        rtol=1e-11,
        atol=1e-13,
    )
    if not sol.success:
        raise RuntimeError(f"dense reference integration failed: {sol.message}")
    return sol.y[:, -1].reshape(n, n)


def dense_solution(rho0: np.ndarray, model: LindbladModel, t: float) -> np.ndarray:
    """Propagate rho0 to time t, interval by interval.

    Small systems use the exact exponential of the vectorized generator;
    larger ones (up to the oracle cap) fall back to tight-tolerance adaptive
    integration of the master equation.
    """
    n = _hilbert_dim(model)
    rho = rho0
    now = 0.0
    while now < t - 1e-12:
        idx, iv = model.interval_at(now)
        stop = min(iv.t_end, t)
        if n <= EXPM_DIM_CAP:
            rho = dense_propagate(rho, dense_lindbladian(model, now), stop - now)
        else:
            rho = _ode_propagate(rho, model, now, stop - now)
        now = stop
    return rho


def _dense_factor(rho: np.ndarray, clip: float = 0.0) -> np.ndarray:
    """V with rho = V V^dagger from an eigendecomposition (negatives clamped)."""
    evals, evecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    evals = np.clip(evals[::-1], clip, None)
    evecs = evecs[:, ::-1]
    keep = evals > 0.0
    if not np.any(keep):
        keep[0] = True
    return evecs[:, keep] * np.sqrt(evals[keep])


def _dense_compress(x: np.ndarray, tau: float) -> np.ndarray:
    """SVD rank truncation with sum of discarded sigma^2 at most tau."""
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    tail = np.cumsum((s**2)[::-1])[::-1]
    r = s.size
    for k in range(s.size, 0, -1):
        if tail[k - 1] <= tau:
            r = k - 1
        else:
            break
    r = max(r, 1)
    return u[:, :r] * s[:r]


def dense_kraus_step(
    rho: np.ndarray,
    model: LindbladModel,
    tab,
    h: float,
    t: float = 0.0,
    tau: float = 0.0,
) -> np.ndarray:
    """Dense replication of one low-rank step with exact flow operators.

    Uses exp(-i c h H_eff) computed by dense matrix exponentials, so any
    difference against the tensor-train step isolates the TT-arithmetic and
    flow-approximation error.  ``tau`` is the per-truncation tolerance (0 for
    exact-rank SVD truncation at machine precision).
    """
    n = _hilbert_dim(model)
    idx, _ = model.interval_at(t)
    h_eff = dense_h_eff(model, idx)
    jumps = dense_jumps(model)

    def flow(duration):
        return scipy.linalg.expm(-1j * duration * h_eff)

    def apply_jumps(v):
        return np.hstack([l @ v for l in jumps]) if jumps else np.zeros((n, 0))

    v = _dense_factor(rho)
    s = tab.stages
    stages = [v]
    for i in range(1, s + 1):
        ci = tab.c[i - 1]
        parts = [flow(ci * h) @ v]
        for j in range(1, i):
            aij = tab.a[i - 1, j - 1]
            if aij == 0.0 or not jumps:
                continue
            w = apply_jumps(stages[j])
            parts.append(np.sqrt(aij * h) * (flow((ci - tab.c[j - 1]) * h) @ w))
        stages.append(_dense_compress(np.hstack(parts), tau))
    parts = [flow(h) @ v]
    for i in range(1, s + 1):
        bi = tab.b[i - 1]
        if bi == 0.0 or not jumps:
            continue
        w = apply_jumps(stages[i])
        parts.append(np.sqrt(bi * h) * (flow((1.0 - tab.c[i - 1]) * h) @ w))
    v_next = _dense_compress(np.hstack(parts), tau)
    v_next = v_next / np.linalg.norm(v_next)
    return v_next @ v_next.conj().T
