"""CPTP low-rank time stepper for the Lindblad equation.

One step propagates the factor V of rho = V V^dagger through the stages of an
explicit Runge-Kutta tableau.  Every operation is either a flow application,
a jump-operator application, or a column linear combination, so the map from
rho to rho' is completely positive by construction; trace preservation is
restored exactly by the final normalization.

Tolerance accounting: the per-step budget tau_step is divided by 3(s+1) into
the per-truncation tolerance tau.  Stage-j jump applications are compressed
lazily (only when some later stage actually consumes them with a nonzero
coefficient) and cached, and stages that reduce to the identity (c_i = 0 with
no accumulated jump terms) are passed through untruncated; both choices only
reduce the total truncation expenditure.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dm_compress import CompressOptions, FactorMatrix, concat, scale_factor, tt_compress
from .flow import FlowCache, schrodinger_solve
from .jump_ops import tt_compress_L
from .models import LindbladModel
from .tt import tt_scale


class NumericalAbort(RuntimeError):
    """Raised when a non-finite value appears; carries the offending stage."""

    def __init__(self, stage: str, detail: str = ""):
        self.stage = stage
        super().__init__(f"non-finite values after {stage}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients of an explicit Runge-Kutta method.

    Requirements checked at construction: strictly lower-triangular A, row
    sums equal to c, weights summing to one, and nonnegative a_ij and b_i
    (their square roots scale the jump contributions).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    name: str = "custom"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        s = b.size
        if a.shape != (s, s) or c.shape != (s,):
            raise ValueError("tableau shapes inconsistent")
        if np.any(np.triu(a) != 0.0):
            raise ValueError("tableau must be explicit (strictly lower triangular A)")
        if not np.allclose(a.sum(axis=1), c, atol=1e-12):
            raise ValueError("row sums of A must equal c")
        if not np.isclose(b.sum(), 1.0, atol=1e-12):
            raise ValueError("weights b must sum to 1")
        if np.any(a < 0.0) or np.any(b < 0.0):
            raise ValueError("a_ij and b_i must be nonnegative (square roots are taken)")

    @property
    def stages(self) -> int:
        return self.b.size


MIDPOINT = ButcherTableau(
    a=np.array([[0.0, 0.0], [0.5, 0.0]]),
    b=np.array([0.0, 1.0]),
    c=np.array([0.0, 0.5]),
    order=2,
    name="midpoint",
)

RK4 = ButcherTableau(
    a=np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.5, 0.0, 0.0, 0.0],
            [0.0, 0.5, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    ),
    b=np.array([1.0, 2.0, 2.0, 1.0]) / 6.0,
    c=np.array([0.0, 0.5, 0.5, 1.0]),
    order=4,
    name="rk4",
)

TABLEAUS = {"midpoint": MIDPOINT, "rk4": RK4}


@dataclass
class StepStats:
    """Per-step diagnostics mirrored to JSONL when enabled."""

    time: float = 0.0
    rank_before: int = 0
    rank_after: int = 0
    column_max_bonds: tuple[int, ...] = ()
    wall_flow: float = 0.0
    wall_jump_compress: float = 0.0
    wall_generic_compress: float = 0.0
    trace_pre_normalization: float = 0.0
    budget_spent: float = 0.0

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "rank_before": self.rank_before,
            "rank_after": self.rank_after,
            "column_max_bonds": list(self.column_max_bonds),
            "wall_flow": self.wall_flow,
            "wall_jump_compress": self.wall_jump_compress,
            "wall_generic_compress": self.wall_generic_compress,
            "trace_pre_normalization": self.trace_pre_normalization,
            "budget_spent": self.budget_spent,
        }


@dataclass
class StepOptions:
    compress: CompressOptions = field(default_factory=CompressOptions)
    rand_threshold: int = 32
    seed: int = 0
    flow_cache: FlowCache | None = None


def trace_normalize(v: FactorMatrix) -> FactorMatrix:
    """Rescale so that trace(V V^dagger) = 1."""
    norm = v.frobenius_norm()
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite factor")
    cols = tuple(tt_scale(1.0 / norm, c) for c in v.columns)
    norms = tuple(n / norm for n in v.column_norms())
    return FactorMatrix(cols, norms=norms)


def _check_finite(v: FactorMatrix, stage: str) -> None:
    for i, n in enumerate(v.column_norms()):
        if not np.isfinite(n):
            raise NumericalAbort(stage, f"column {i}")


def step(
    v: FactorMatrix,
    model: LindbladModel,
    tab: ButcherTableau,
    h: float,
    tau_step: float,
    opts: StepOptions,
    t: float = 0.0,
) -> tuple[FactorMatrix, StepStats]:
    """One CPTP step of size h starting at time t."""
    if h <= 0 or tau_step <= 0:
        raise ValueError("h and tau_step must be positive")
    s = tab.stages
    tau = tau_step / (3.0 * (s + 1))
    cache = opts.flow_cache or FlowCache(
        model, tol=tau, order=min(tab.order, 2), rand_threshold=opts.rand_threshold
    )
    interval_index, _ = model.interval_at(t)
    jumps = model.jumps
    stats = StepStats(time=t, rank_before=v.rank)
    copts = replace(opts.compress, seed=opts.seed)

    clock = {"flow": 0.0, "jump": 0.0, "generic": 0.0}

    def timed(kind, fn, *args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        clock[kind] += time.perf_counter() - t0
        return out

    def solve(duration, x, scale, tol, tag, seed_off):
        if duration == 0.0 and scale == 1:
            return x
        flow = cache.flow(interval_index, duration)
        out = timed(
            "flow", schrodinger_solve, flow, x, scale, tol, seed=opts.seed + seed_off
        )
        _check_finite(out, tag)
        if duration != 0.0:
            stats.budget_spent += tol
        return out

    w_cache: dict[int, FactorMatrix] = {}

    def jump_factor(stage_index, stage_v):
        """Compressed [L_1 V^j, ..., L_P V^j], computed lazily per stage."""
        if stage_index not in w_cache:
            if len(jumps) == 0:
                raise ValueError("tableau requires jump terms but the model has none")
            out, rep = timed("jump", tt_compress_L, stage_v, jumps, tau, copts)
            _check_finite(out, f"jump compression at stage {stage_index}")
            stats.budget_spent += rep.total_bound
            w_cache[stage_index] = out
        return w_cache[stage_index]

    has_jumps = len(jumps) > 0
    stages: list[FactorMatrix] = [v]  # stages[i] = V^i, stages[0] = V
    for i in range(1, s + 1):
        ci = tab.c[i - 1]
        parts = []
        ys = []
        if has_jumps:
            for j in range(1, i):
                aij = tab.a[i - 1, j - 1]
                if aij == 0.0:
                    continue
                wj = jump_factor(j, stages[j])
                ys.append(
                    solve(
                        (ci - tab.c[j - 1]) * h,
                        scale_factor(np.sqrt(aij * h), wj),
                        1,
                        tau / i,
                        f"stage ({i},{j}) jump flow",
                        seed_off=97 * i + j,
                    )
                )
        if not ys and ci == 0.0:
            stages.append(v)  # identity stage, exact
            continue
        ui = solve(ci * h, v, 1, tau, f"stage {i} flow", seed_off=17 * i)
        parts = [ui] + ys
        vi, rep = timed("generic", tt_compress, concat(*parts), tau, copts)
        _check_finite(vi, f"stage {i} truncation")
        stats.budget_spent += rep.total_bound
        stages.append(vi)

    u = solve(h, v, 1, tau, "final flow", seed_off=5_000)
    ys = []
    if has_jumps:
        for i in range(1, s + 1):
            bi = tab.b[i - 1]
            if bi == 0.0:
                continue
            wi = jump_factor(i, stages[i])
            ys.append(
                solve(
                    (1.0 - tab.c[i - 1]) * h,
                    scale_factor(np.sqrt(bi * h), wi),
                    1,
                    tau / s,
                    f"final jump flow {i}",
                    seed_off=7_000 + i,
                )
            )
    out, rep = timed("generic", tt_compress, concat(u, *ys), tau, copts)
    _check_finite(out, "final truncation")
    stats.budget_spent += rep.total_bound
    stats.trace_pre_normalization = out.frobenius_norm() ** 2
    out = trace_normalize(out)

    stats.rank_after = out.rank
    stats.column_max_bonds = tuple(c.max_bond for c in out.columns)
    stats.wall_flow = clock["flow"]
    stats.wall_jump_compress = clock["jump"]
    stats.wall_generic_compress = clock["generic"]
    return out, stats


@dataclass(frozen=True)
class TauPolicy:
    """Per-step truncation budget: a fixed value, h^(p+1), or kappa/h."""

    kind: str  # fixed | h_power | rate
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "h_power", "rate"):
            raise ValueError(f"unknown tolerance policy {self.kind!r}")
        if self.kind in ("fixed", "rate") and (self.value is None or self.value <= 0):
            raise ValueError(f"policy {self.kind!r} needs a positive value")

    def step_tolerance(self, h: float, order: int) -> float:
        if self.kind == "fixed":
            return float(self.value)
        if self.kind == "h_power":
            return float(h ** (order + 1))
        return float(self.value) / h


def run(
    v0: FactorMatrix,
    model: LindbladModel,
    tab: ButcherTableau,
    h: float,
    t_final: float,
    tau_policy: TauPolicy,
    opts: StepOptions | None = None,
    snapshot_every: int = 1,
    stats_path=None,
) -> tuple[list[tuple[float, FactorMatrix]], list[StepStats]]:
    """March from t = 0 to t_final; returns snapshots and per-step stats.

    If t_final is not a multiple of h the last step is shortened.  Snapshots
    are (time, factor) pairs taken every ``snapshot_every`` steps plus the
    initial and final states.  ``stats_path`` mirrors stats to JSONL.
    """
    if h <= 0 or t_final <= 0:
        raise ValueError("h and t_final must be positive")
    opts = opts or StepOptions()
    tau_step = tau_policy.step_tolerance(h, tab.order)
    if opts.flow_cache is None:
        tau_internal = tau_step / (3.0 * (tab.stages + 1))
        opts = replace(
            opts,
            flow_cache=FlowCache(
                model,
                tol=tau_internal,
                order=min(tab.order, 2),
                rand_threshold=opts.rand_threshold,
            ),
        )

    n_full = int(np.floor(t_final / h + 1e-9))
    remainder = t_final - n_full * h
    if remainder < 1e-12 * max(t_final, 1.0):
        remainder = 0.0

    v = v0
    t = 0.0
    snapshots = [(0.0, v)]
    all_stats: list[StepStats] = []
    stats_file = open(stats_path, "w") if stats_path else None
    try:
        total_steps = n_full + (1 if remainder else 0)
        for k in range(total_steps):
            hk = h if k < n_full else remainder
            tau_k = tau_step if hk == h else tau_policy.step_tolerance(hk, tab.order)
            step_opts = replace(opts, seed=opts.seed + 1_000_003 * (k + 1))
            v, st = step(v, model, tab, hk, tau_k, step_opts, t=t)
            t += hk
            st.time = t
            all_stats.append(st)
            if stats_file:
                stats_file.write(json.dumps(st.to_dict()) + "\n")
            if (k + 1) % snapshot_every == 0 or k == total_steps - 1:
                snapshots.append((t, v))
    finally:
        if stats_file:
            stats_file.close()
    return snapshots, all_stats
