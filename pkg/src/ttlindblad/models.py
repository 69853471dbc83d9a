"""Builders for the physical systems: dissipative spin chain, heavy-hex
transmon lattice with SWAP controls, and the qudit-resonator chain.

Units: the spin chain is dimensionless.  Both circuit models use nanoseconds
for time and rad/ns for angular frequencies; quoted values like "2.3 MHz/2pi"
enter as 2*pi*2.3e-3 rad/ns, and decay/dephase times in microseconds are
converted to ns.

Basis conventions: for spin-1/2 chains index 0 is |up> and index 1 is |down>,
so the lowering operator is sigma_minus = |down><up|.  For circuit models
index 0 is the ground state and the lowering operator is the standard
annihilation operator a|k> = sqrt(k)|k-1>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dm_compress import FactorMatrix
from .jump_ops import JumpOperatorSet
from .mpo import kron_embed
from .tt import tt_product_state

TWO_PI = 2.0 * np.pi

# Spin-1/2 operators in the (|up>, |down>) basis.
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=np.complex128)
SIGMA_PLUS = SIGMA_MINUS.conj().T
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)


def lowering(n: int) -> np.ndarray:
    """Annihilation operator a|k> = sqrt(k)|k-1> on n levels."""
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), k=1).astype(np.complex128)


def number_op(n: int) -> np.ndarray:
    return np.diag(np.arange(n, dtype=float)).astype(np.complex128)


@dataclass(frozen=True)
class HamiltonianInterval:
    """Time-independent Hamiltonian on [t_start, t_end).

    ``two_site`` holds nearest-neighbor blocks (left site k, matrix of side
    n_k * n_{k+1}); ``local`` holds single-site terms; ``products`` holds
    general terms, each a tuple of sites with one local matrix per site whose
    Kronecker product (identity elsewhere) is the term.
    """

    t_start: float
    t_end: float
    two_site: tuple[tuple[int, np.ndarray], ...] = ()
    local: tuple[tuple[int, np.ndarray], ...] = ()
    products: tuple[tuple[tuple[int, ...], tuple[np.ndarray, ...]], ...] = ()

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("interval must have positive length")


@dataclass(frozen=True)
class DeviceParams:
    """Drawn physical parameters shared by the circuit-model builders.

    All frequencies are angular (rad/ns); all times in ns.  ``cross_kerr``
    and ``couplings`` are keyed by site pairs (p, q) with p < q.
    """

    self_kerr: tuple[float, ...] = ()
    cross_kerr: tuple[tuple[int, int, float], ...] = ()
    couplings: tuple[tuple[int, int, float], ...] = ()
    t_decay: tuple[float, ...] = ()
    t_dephase: tuple[float | None, ...] = ()
    seed: int = 0

    def __post_init__(self):
        for t in self.t_decay:
            if t <= 0:
                raise ValueError("decay times must be positive")
        for t in self.t_dephase:
            if t is not None and t <= 0:
                raise ValueError("dephase times must be positive")


@dataclass(frozen=True)
class QuditResonatorDevice:
    """Structured parameters the three-part splitting flow consumes."""

    modes: tuple[int, ...]
    self_kerr: tuple[float, ...]
    cross_kerr: tuple[tuple[int, int, float], ...]
    controls: np.ndarray  # (n_intervals, d) complex amplitudes
    t_signal: float


@dataclass(frozen=True)
class LindbladModel:
    modes: tuple[int, ...]
    intervals: tuple[HamiltonianInterval, ...]
    jumps: JumpOperatorSet
    flow_method: str  # "tebd" | "taylor" | "qudit_resonator"
    device: QuditResonatorDevice | None = None
    taylor_terms: int = 12

    def __post_init__(self):
        if self.flow_method not in ("tebd", "taylor", "qudit_resonator"):
            raise ValueError(f"unknown flow method {self.flow_method!r}")
        for site, m in self.jumps.ops:
            if not 0 <= site < len(self.modes) or m.shape[0] != self.modes[site]:
                raise ValueError("jump operator does not fit the chain")
        for a, b in zip(self.intervals, self.intervals[1:]):
            if not np.isclose(a.t_end, b.t_start):
                raise ValueError("intervals must tile time contiguously")

    @property
    def ndim(self) -> int:
        return len(self.modes)

    def interval_at(self, t: float) -> tuple[int, HamiltonianInterval]:
        for i, iv in enumerate(self.intervals):
            if iv.t_start - 1e-12 <= t < iv.t_end - 1e-12:
                return i, iv
        # Past the schedule: hold the last interval.
        return len(self.intervals) - 1, self.intervals[-1]


def dense_hamiltonian(model: LindbladModel, interval_index: int = 0) -> np.ndarray:
    """Dense Hamiltonian of one interval, assembled via Kronecker embeddings."""
    modes = model.modes
    n = int(np.prod(modes))
    iv = model.intervals[interval_index]
    h = np.zeros((n, n), dtype=np.complex128)
    for site, m in iv.local:
        h += kron_embed(site, m, modes)
    for k, block in iv.two_site:
        left = int(np.prod(modes[:k], dtype=np.int64)) if k else 1
        right = int(np.prod(modes[k + 2 :], dtype=np.int64)) if k + 2 < len(modes) else 1
        h += np.kron(np.kron(np.eye(left), block), np.eye(right))
    for sites, mats in iv.products:
        term = np.eye(1, dtype=np.complex128)
        pos = 0
        for site, m in sorted(zip(sites, mats), key=lambda sm: sm[0]):
            gap = int(np.prod(modes[pos:site], dtype=np.int64)) if site > pos else 1
            term = np.kron(np.kron(term, np.eye(gap)), m)
            pos = site + 1
        tail = int(np.prod(modes[pos:], dtype=np.int64)) if pos < len(modes) else 1
        term = np.kron(term, np.eye(tail))
        h += term
    return h


def heisenberg_model(
    d: int, t_decay: float = 20.0, flow_method: str = "tebd", taylor_terms: int = 12
) -> LindbladModel:
    """Dissipative XX chain: nearest-neighbor hopping plus uniform decay.

    H = sum_k (sigma+_k sigma-_{k+1} + sigma-_k sigma+_{k+1}) and jump
    operators sigma-_j / sqrt(T_decay) at every site.  ``t_decay = inf``
    gives the closed system.  ``flow_method`` may be "taylor" when the
    operator-splitting error of TEBD would mask a high-order stepper.
    """
    if d < 1:
        raise ValueError("need at least one spin")
    modes = (2,) * d
    block = np.kron(SIGMA_PLUS, SIGMA_MINUS) + np.kron(SIGMA_MINUS, SIGMA_PLUS)
    two_site = tuple((k, block.copy()) for k in range(d - 1))
    if np.isfinite(t_decay):
        jumps = JumpOperatorSet(
            tuple((j, SIGMA_MINUS / np.sqrt(t_decay)) for j in range(d))
        )
    else:
        jumps = JumpOperatorSet(())
    interval = HamiltonianInterval(0.0, np.inf, two_site=two_site)
    return LindbladModel(
        modes, (interval,), jumps, flow_method=flow_method, taylor_terms=taylor_terms
    )


def draw_heavy_hex_params(
    edges,
    n_qubits: int,
    seed: int = 0,
    j_mean: float = TWO_PI * 2.3e-3,
    j_std: float = TWO_PI * 5.4e-3,
    t_decay_mean: float = 95e3,
    t_decay_std: float = 5e3,
    t_dephase_mean: float = 100e3,
    t_dephase_std: float = 10e3,
) -> DeviceParams:
    """Normal draws of couplings and decoherence times under a fixed seed.

    Defaults are mean J = 2*pi*2.3 MHz, T_decay 95 +/- 5 us, T_dephase
    100 +/- 10 us, expressed in rad/ns and ns.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    couplings = tuple(
        (min(p, q), max(p, q), float(rng.normal(j_mean, j_std))) for p, q in edges
    )
    t_decay = tuple(abs(float(rng.normal(t_decay_mean, t_decay_std))) for _ in range(n_qubits))
    t_dephase = tuple(
        abs(float(rng.normal(t_dephase_mean, t_dephase_std))) for _ in range(n_qubits)
    )
    return DeviceParams(
        couplings=couplings, t_decay=t_decay, t_dephase=t_dephase, seed=seed
    )


def swap_hamiltonian(j_pq: float, t_gate: float) -> np.ndarray:
    """Two-qubit control Hamiltonian that realizes a SWAP despite the coupling.

    Returns the 4x4 matrix H with exp(-i t_gate (H + H_JC)) = U_SWAP, using
    the principal matrix logarithm (the -1 eigenvalue of U_SWAP maps to +i*pi).
    """
    u_swap = np.eye(4, dtype=np.complex128)[[0, 2, 1, 3]]
    a = lowering(2)
    h_jc = j_pq * (np.kron(a, a.conj().T) + np.kron(a.conj().T, a))
    log_u = scipy.linalg.logm(u_swap)
    return (1j / t_gate) * log_u - h_jc


def _schmidt_products(p: int, q: int, m: np.ndarray, tol: float = 1e-13):
    """Split a two-qubit operator on sites (p, q) into Kronecker product terms."""
    t = m.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(t)
    out = []
    for alpha in range(4):
        if s[alpha] <= tol:
            continue
        left = (np.sqrt(s[alpha]) * u[:, alpha]).reshape(2, 2)
        right = (np.sqrt(s[alpha]) * vh[alpha]).reshape(2, 2)
        out.append(((p, q), (left, right)))
    return out


def heavy_hex_model(
    n_qubits: int,
    layout,
    params: DeviceParams,
    gate_schedule,
    t_gate: float = 100.0,
) -> LindbladModel:
    """Coupled transmon qubits driven through a sequence of SWAP gates.

    ``layout`` is the edge list in MPS order; ``gate_schedule`` is a sequence
    of gate layers, one per interval of length ``t_gate`` (ns), each a list of
    qubit pairs active in that interval.  Hamiltonians per interval combine
    the always-on exchange coupling with the SWAP control terms; qubits carry
    decay and dephasing jumps.
    """
    modes = (2,) * n_qubits
    a = lowering(2)
    j_by_edge = {(p, q): j for p, q, j in params.couplings}
    base_products = []
    for (p, q), j in j_by_edge.items():
        base_products.append(((p, q), (j * a, a.conj().T)))
        base_products.append(((p, q), (j * a.conj().T, a)))

    intervals = []
    n_layers = max(len(gate_schedule), 1)
    for k in range(n_layers):
        pairs = list(gate_schedule[k]) if k < len(gate_schedule) else []
        seen = set()
        for p, q in pairs:
            if p in seen or q in seen:
                raise ValueError(f"overlapping gate pairs in interval {k}")
            seen.update((p, q))
        products = list(base_products)
        for p, q in pairs:
            p, q = min(p, q), max(p, q)
            j = j_by_edge.get((p, q), 0.0)
            products.extend(_schmidt_products(p, q, swap_hamiltonian(j, t_gate)))
        t_end = np.inf if k == n_layers - 1 else (k + 1) * t_gate
        intervals.append(
            HamiltonianInterval(k * t_gate, t_end, products=tuple(products))
        )

    jumps = []
    for p in range(n_qubits):
        jumps.append((p, a / np.sqrt(params.t_decay[p])))
        if params.t_dephase[p] is not None:
            jumps.append((p, (a.conj().T @ a) / np.sqrt(params.t_dephase[p])))
    return LindbladModel(
        modes, tuple(intervals), JumpOperatorSet(tuple(jumps)), flow_method="taylor"
    )


# Table values for the qudit-resonator chain, as angular frequencies in rad/ns.
QUDIT_RESONATOR_KERR = {
    "xi_1": TWO_PI * 0.220,
    "xi_2": TWO_PI * 0.225,
    "xi_r": TWO_PI * 2.83e-3,
    "xi_12": TWO_PI * 1e-6,
    "xi_1r": TWO_PI * 2.49e-3,
    "xi_2r": TWO_PI * 2.52e-3,
}


def draw_qudit_resonator_params(
    n_qudits: int, seed: int = 0, n_res: int | None = None
) -> DeviceParams:
    """Table parameters for the alternating chain; decoherence times drawn
    normally with a standard deviation of 1% of the mean.

    Qudits alternate between type 1 and type 2; resonators share one
    self-Kerr.  Qudits decay (95 us) and dephase (50 us); resonators only
    decay (0.4 us).
    """
    if n_res is None:
        n_res = max(n_qudits - 1, 0)
    d = n_qudits + n_res
    rng = np.random.Generator(np.random.Philox(seed))
    kerr = QUDIT_RESONATOR_KERR
    self_kerr = []
    t_decay = []
    t_dephase = []
    for site in range(d):
        if site % 2 == 0:  # qudit; alternate type 1 / type 2
            qudit_index = site // 2
            self_kerr.append(kerr["xi_1"] if qudit_index % 2 == 0 else kerr["xi_2"])
            t_decay.append(abs(float(rng.normal(95e3, 0.01 * 95e3))))
            t_dephase.append(abs(float(rng.normal(50e3, 0.01 * 50e3))))
        else:  # resonator
            self_kerr.append(kerr["xi_r"])
            t_decay.append(abs(float(rng.normal(400.0, 4.0))))
            t_dephase.append(None)
    cross = []
    for site in range(1, d, 2):  # resonator positions
        left_type = (site - 1) // 2 % 2
        right_type = (site + 1) // 2 % 2
        cross.append((site - 1, site, kerr["xi_1r"] if left_type == 0 else kerr["xi_2r"]))
        if site + 1 < d:
            cross.append((site, site + 1, kerr["xi_1r"] if right_type == 0 else kerr["xi_2r"]))
            cross.append((site - 1, site + 1, kerr["xi_12"]))
    return DeviceParams(
        self_kerr=tuple(self_kerr),
        cross_kerr=tuple(cross),
        t_decay=tuple(t_decay),
        t_dephase=tuple(t_dephase),
        seed=seed,
    )


def load_control_table(path, n_sites: int) -> np.ndarray:
    """Read piecewise-constant control amplitudes from CSV.

    Columns: transmon_index, interval_index, re, im.  Returns a complex array
    of shape (n_intervals, n_sites); missing entries are zero.
    """
    raw = np.genfromtxt(path, delimiter=",", comments="#", skip_header=1)
    raw = np.atleast_2d(raw)
    if raw.shape[1] != 4:
        raise ValueError("control table needs columns transmon_index,interval_index,re,im")
    n_intervals = int(raw[:, 1].max()) + 1
    table = np.zeros((n_intervals, n_sites), dtype=np.complex128)
    for site, interval, re, im in raw:
        table[int(interval), int(site)] = re + 1j * im
    return table


def synthetic_control_table(
    n_sites: int, n_intervals: int, amplitude: float, seed: int = 0
) -> np.ndarray:
    """Smooth random piecewise-constant controls for tests and demos."""
    rng = np.random.Generator(np.random.Philox(seed))
    phases = rng.uniform(0, TWO_PI, size=n_sites)
    rates = rng.uniform(0.5, 1.5, size=n_sites)
    t = np.arange(n_intervals)[:, None]
    return amplitude * np.exp(1j * (phases[None, :] + 0.1 * rates[None, :] * t))


def qudit_resonator_model(
    n_qudits: int,
    params: DeviceParams,
    control_table: np.ndarray,
    t_signal: float = 1.0,
    n_qudit_levels: int = 4,
    n_res_levels: int = 10,
) -> LindbladModel:
    """Alternating qudit/resonator chain with Kerr couplings and drives.

    ``control_table`` has shape (n_intervals, d) with one complex amplitude
    per subsystem per interval of length ``t_signal`` ns.  The drift part is
    diagonal (self- and cross-Kerr); controls add d a + conj(d) a^dagger.
    """
    d = 2 * n_qudits - 1 if n_qudits >= 1 else 0
    modes = tuple(n_qudit_levels if k % 2 == 0 else n_res_levels for k in range(d))
    control_table = np.asarray(control_table, dtype=np.complex128)
    if control_table.ndim != 2 or control_table.shape[1] != d:
        raise ValueError(f"control table must have {d} columns")
    if len(params.self_kerr) != d:
        raise ValueError("params do not match the chain length")

    local_drift = []
    for q, n in enumerate(modes):
        aq = lowering(n)
        kerr = aq.conj().T @ aq.conj().T @ aq @ aq
        local_drift.append((q, -0.5 * params.self_kerr[q] * kerr))
    products = []
    for p, q, xi in params.cross_kerr:
        products.append(((p, q), (-xi * number_op(modes[p]), number_op(modes[q]))))

    intervals = []
    n_intervals = control_table.shape[0]
    for k in range(n_intervals):
        local = list(local_drift)
        for q, n in enumerate(modes):
            amp = control_table[k, q]
            if amp != 0:
                aq = lowering(n)
                local.append((q, amp * aq + np.conj(amp) * aq.conj().T))
        t_end = np.inf if k == n_intervals - 1 else (k + 1) * t_signal
        intervals.append(
            HamiltonianInterval(
                k * t_signal, t_end, local=tuple(local), products=tuple(products)
            )
        )

    jumps = []
    for q, n in enumerate(modes):
        aq = lowering(n)
        jumps.append((q, aq / np.sqrt(params.t_decay[q])))
        if params.t_dephase[q] is not None:
            jumps.append((q, (aq.conj().T @ aq) / np.sqrt(params.t_dephase[q])))

    device = QuditResonatorDevice(
        modes=modes,
        self_kerr=tuple(params.self_kerr),
        cross_kerr=tuple(params.cross_kerr),
        controls=control_table,
        t_signal=t_signal,
    )
    return LindbladModel(
        modes,
        tuple(intervals),
        JumpOperatorSet(tuple(jumps)),
        flow_method="qudit_resonator",
        device=device,
    )


def product_state(levels, modes) -> FactorMatrix:
    """Rank-1 factor for the product state |l_0 l_1 ... l_{d-1}>.

    ``levels`` is a string of digits or a sequence of ints, one per site.
    """
    modes = tuple(modes)
    if isinstance(levels, str):
        levels = [int(ch) for ch in levels]
    levels = list(levels)
    if len(levels) != len(modes):
        raise ValueError(f"need {len(modes)} levels, got {len(levels)}")
    vecs = []
    for lvl, n in zip(levels, modes):
        if not 0 <= lvl < n:
            raise ValueError(f"level {lvl} out of range for a {n}-level site")
        v = np.zeros(n, dtype=np.complex128)
        v[lvl] = 1.0
        vecs.append(v)
    tt = tt_product_state(vecs)
    return FactorMatrix((tt,), norms=(1.0,))
