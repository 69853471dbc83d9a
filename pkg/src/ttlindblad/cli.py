"""Configuration-driven command-line frontend.

Three subcommands:

* ``simulate`` runs one configuration and writes one CSV per observable, a
  stats JSONL, and rendered figures;
* ``converge`` sweeps the step size by halving and reports the fitted
  convergence slope, against either self-refinement or the dense reference;
* ``oracle-compare`` runs the tensor-train integrator and the dense solver
  side by side and reports the Frobenius deviation per snapshot.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import jsonschema
import numpy as np

from .dm_compress import CompressOptions, factor_to_dense_rho
from .integrator import (
    TABLEAUS,
    ButcherTableau,
    NumericalAbort,
    StepOptions,
    TauPolicy,
    run,
)
from .models import (
    LindbladModel,
    draw_heavy_hex_params,
    draw_qudit_resonator_params,
    heavy_hex_model,
    heisenberg_model,
    load_control_table,
    product_state,
    qudit_resonator_model,
    synthetic_control_table,
)
from .observables import (
    observable_energy_level,
    observable_population,
    observable_purity,
    observable_site_probability,
)

FLOAT_FMT = "%.15e"


class ConfigError(ValueError):
    pass


_PAIR = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "initial_state", "integrator"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["heisenberg", "heavy_hex", "qudit_resonator"]},
                "sites": {"type": "integer", "minimum": 1},
                "t_decay": {"type": ["number", "string"]},
                "flow_method": {"enum": ["tebd", "taylor"]},
                "n_qubits": {"type": "integer", "minimum": 2},
                "edges": {"type": "array", "items": _PAIR},
                "gate_schedule": {"type": "array", "items": {"type": "array", "items": _PAIR}},
                "t_gate": {"type": "number", "exclusiveMinimum": 0},
                "n_qudits": {"type": "integer", "minimum": 1},
                "control_table": {"type": ["string", "object"]},
                "t_signal": {"type": "number", "exclusiveMinimum": 0},
                "n_res_levels": {"type": "integer", "minimum": 2},
                "taylor_terms": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "initial_state": {"type": "string"},
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["h", "t_final"],
            "properties": {
                "tableau": {"type": ["string", "object"]},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "t_final": {"type": "number", "exclusiveMinimum": 0},
                "tau_policy": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["fixed", "h_power", "rate"]},
                        "value": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "compression": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["randomized", "ttsvd_iterative", "ttsvd_adaptive"]},
                "alpha_screen": {"type": "number", "minimum": 0, "maximum": 1},
                "alpha_svd": {"type": "number", "minimum": 0, "maximum": 1},
                "sketch_factor": {"type": "number", "exclusiveMinimum": 0},
                "eig_floor": {"type": "number", "minimum": 0},
            },
        },
        "flow": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rand_threshold": {"type": "integer", "minimum": 1},
                "order": {"enum": [1, 2]},
            },
        },
        "observables": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["site_probability", "population", "purity", "energy_level"]},
                    "name": {"type": "string"},
                    "site": {"type": "integer", "minimum": 0},
                    "level": {"type": "integer", "minimum": 0},
                    "all_sites": {"type": "boolean"},
                    "state": {"type": "string"},
                },
            },
        },
        "snapshot_every": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "figures": {"type": "boolean"},
                "stats": {"type": "boolean"},
            },
        },
    },
}


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message} (at {'/'.join(map(str, exc.absolute_path))})") from exc
    return cfg


def build_model(cfg: dict) -> LindbladModel:
    m = cfg["model"]
    kind = m["type"]
    seed = int(m.get("seed", 0))
    if kind == "heisenberg":
        t_decay = m.get("t_decay", 20.0)
        if isinstance(t_decay, str):
            if t_decay != "inf":
                raise ConfigError(f"t_decay must be a number or 'inf', got {t_decay!r}")
            t_decay = np.inf
        return heisenberg_model(
            int(m.get("sites", 6)),
            float(t_decay),
            flow_method=m.get("flow_method", "tebd"),
            taylor_terms=int(m.get("taylor_terms", 12)),
        )
    if kind == "heavy_hex":
        if "n_qubits" not in m or "edges" not in m:
            raise ConfigError("heavy_hex model needs n_qubits and edges")
        edges = [tuple(e) for e in m["edges"]]
        params = draw_heavy_hex_params(edges, int(m["n_qubits"]), seed=seed)
        return heavy_hex_model(
            int(m["n_qubits"]),
            edges,
            params,
            m.get("gate_schedule", []),
            t_gate=float(m.get("t_gate", 100.0)),
        )
    # qudit_resonator
    if "n_qudits" not in m:
        raise ConfigError("qudit_resonator model needs n_qudits")
    n_qudits = int(m["n_qudits"])
    d = 2 * n_qudits - 1
    table_cfg = m.get("control_table", {"synthetic": {"amplitude": 0.01, "intervals": 1}})
    if isinstance(table_cfg, str):
        table = load_control_table(table_cfg, d)
    else:
        syn = table_cfg.get("synthetic")
        if syn is None:
            raise ConfigError("control_table must be a CSV path or {'synthetic': {...}}")
        table = synthetic_control_table(
            d,
            int(syn.get("intervals", 1)),
            float(syn.get("amplitude", 0.01)),
            seed=int(syn.get("seed", seed)),
        )
    params = draw_qudit_resonator_params(n_qudits, seed=seed)
    return qudit_resonator_model(
        n_qudits,
        params,
        table,
        t_signal=float(m.get("t_signal", 1.0)),
        n_res_levels=int(m.get("n_res_levels", 10)),
    )


def build_tableau(icfg: dict) -> ButcherTableau:
    tab = icfg.get("tableau", "midpoint")
    if isinstance(tab, str):
        if tab not in TABLEAUS:
            raise ConfigError(f"unknown tableau {tab!r}; available: {sorted(TABLEAUS)}")
        return TABLEAUS[tab]
    try:
        return ButcherTableau(
            a=np.asarray(tab["a"], dtype=float),
            b=np.asarray(tab["b"], dtype=float),
            c=np.asarray(tab["c"], dtype=float),
            order=int(tab["order"]),
            name=str(tab.get("name", "custom")),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid inline tableau: {exc}") from exc


def build_policy(icfg: dict) -> TauPolicy:
    p = icfg.get("tau_policy", {"kind": "h_power"})
    try:
        return TauPolicy(kind=p["kind"], value=p.get("value"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_options(cfg: dict, seed: int) -> StepOptions:
    comp = dict(cfg.get("compression", {}))
    flow = cfg.get("flow", {})
    try:
        copts = CompressOptions(seed=seed, **comp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid compression options: {exc}") from exc
    return StepOptions(
        compress=copts,
        rand_threshold=int(flow.get("rand_threshold", 32)),
        seed=seed,
    )


def _observable_columns(obs: dict, model: LindbladModel):
    kind = obs["kind"]
    modes = model.modes
    if kind == "purity":
        return ["value"], lambda v: [observable_purity(v)]
    if kind == "population":
        if "state" not in obs:
            raise ConfigError("population observable needs 'state'")
        phi = product_state(obs["state"], modes)
        return ["value"], lambda v: [observable_population(v, phi)]
    sites = list(range(len(modes))) if obs.get("all_sites") else [int(obs.get("site", 0))]
    for s in sites:
        if not 0 <= s < len(modes):
            raise ConfigError(f"observable site {s} out of range")
    if kind == "site_probability":
        level = int(obs.get("level", 0))
        return (
            [f"site{s}" for s in sites],
            lambda v: [observable_site_probability(v, s, level) for s in sites],
        )
    # energy_level
    return (
        [f"site{s}" for s in sites],
        lambda v: [observable_energy_level(v, s) for s in sites],
    )


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(FLOAT_FMT % x for x in row) + "\n")


def _simulate_config(cfg: dict, seed: int):
    """Shared driver: build everything and run; returns run artifacts."""
    model = build_model(cfg)
    icfg = cfg["integrator"]
    tab = build_tableau(icfg)
    policy = build_policy(icfg)
    opts = build_options(cfg, seed)
    state_string = cfg["initial_state"]
    if len(state_string) != model.ndim:
        raise ConfigError(
            f"initial state has {len(state_string)} sites but the model has {model.ndim}"
        )
    v0 = product_state(state_string, model.modes)
    h = float(icfg["h"])
    t_final = float(icfg["t_final"])
    n_steps = max(int(round(t_final / h)), 1)
    cadence = int(cfg.get("snapshot_every", 1 if n_steps <= 1000 else int(np.ceil(n_steps / 1000))))
    return model, tab, policy, opts, v0, h, t_final, cadence


@click.group()
def main():
    """Low-rank tensor-train integrator for the Lindblad equation."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(), default=".", help="Output directory.")
def simulate(config_path, seed, out_dir):
    """Run one configuration and write observables, stats, and figures."""
    try:
        cfg = load_config(config_path)
        seed = int(cfg.get("seed", 0)) if seed is None else seed
        model, tab, policy, opts, v0, h, t_final, cadence = _simulate_config(cfg, seed)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        output_cfg = cfg.get("output", {})
        stats_path = out / "stats.jsonl" if output_cfg.get("stats", True) else None
        snapshots, stats = run(
            v0, model, tab, h, t_final, policy, opts,
            snapshot_every=cadence, stats_path=stats_path,
        )
    except (ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except NumericalAbort as exc:
        click.echo(f"numerical abort: {exc}", err=True)
        sys.exit(3)

    obs_cfgs = cfg.get("observables", [{"kind": "purity"}])
    times = [t for t, _ in snapshots]
    for idx, obs in enumerate(obs_cfgs):
        name = obs.get("name", f"{obs['kind']}_{idx}")
        cols, evaluate = _observable_columns(obs, model)
        rows = [[t] + evaluate(v) for t, v in snapshots]
        csv_path = out / f"{name}.csv"
        _write_csv(csv_path, ["time"] + cols, rows)
        if output_cfg.get("figures", True):
            from . import report

            data = np.asarray(rows, dtype=float)
            report.render_time_series(
                data[:, 0],
                {c: data[:, j + 1] for j, c in enumerate(cols)},
                out / f"{name}.png",
                title=name,
                ylabel=obs["kind"],
            )
    if output_cfg.get("figures", True) and stats:
        from . import report

        report.render_bond_history(
            [s.time for s in stats],
            [max(s.column_max_bonds) for s in stats],
            out / "bond_dimensions.png",
            title="maximum bond dimension",
        )
    click.echo(f"wrote {len(snapshots)} snapshots to {out_dir}")


def _mean_levels(v, model):
    from .observables import observable_energy_level

    return np.array([observable_energy_level(v, s) for s in range(model.ndim)])


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--h-min", type=float, required=True)
@click.option("--h-max", type=float, required=True)
@click.option("--levels", type=int, required=True)
@click.option(
    "--reference",
    type=click.Choice(["self", "dense"]),
    default="self",
    help="Compare against the next halved step size or the dense solver.",
)
@click.option("--out", "out_dir", type=click.Path(), default=".")
def converge(config_path, h_min, h_max, levels, reference, out_dir):
    """Step-size sweep by halving; reports the fitted log-log slope."""
    try:
        cfg = load_config(config_path)
        if h_min <= 0 or h_max < h_min or levels < 2:
            raise ConfigError("need 0 < h-min <= h-max and at least 2 levels")
        seed = int(cfg.get("seed", 0))
        hs = [h_max / 2**k for k in range(levels)]
        if hs[-1] < h_min * (1 - 1e-9):
            raise ConfigError("levels of halving descend below h-min")
        model, tab, policy, opts, v0, _, t_final, _ = _simulate_config(cfg, seed)

        def solve_at(h):
            snaps, _ = run(v0, model, tab, h, t_final, policy, opts, snapshot_every=10**9)
            return snaps[-1][1]

        errors = []
        if reference == "dense":
            from .oracle import dense_solution

            rho_ref = dense_solution(factor_to_dense_rho(v0), model, t_final)
            for h in hs:
                rho_h = factor_to_dense_rho(solve_at(h))
                errors.append(float(np.linalg.norm(rho_h - rho_ref)))
        else:
            finals = [solve_at(h) for h in hs + [hs[-1] / 2]]
            probes = [_mean_levels(v, model) for v in finals]
            errors = [float(np.linalg.norm(probes[k] - probes[k + 1])) for k in range(levels)]
    except (ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except NumericalAbort as exc:
        click.echo(f"numerical abort: {exc}", err=True)
        sys.exit(3)

    slope = float(np.polyfit(np.log(hs), np.log(np.maximum(errors, 1e-300)), 1)[0])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "converge.csv", ["h", "error"], list(zip(hs, errors)))
    from . import report

    report.render_convergence(hs, errors, slope, out / "converge.png", title="step-size refinement")
    click.echo(f"slope = {slope:.3f}")


@main.command("oracle-compare")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=".")
def oracle_compare(config_path, out_dir):
    """Run the TT integrator and the dense solver side by side."""
    try:
        cfg = load_config(config_path)
        seed = int(cfg.get("seed", 0))
        model, tab, policy, opts, v0, h, t_final, cadence = _simulate_config(cfg, seed)
        from .oracle import OracleSizeExceeded, dense_solution

        try:
            rho0 = factor_to_dense_rho(v0)
        except Exception as exc:
            raise ConfigError(f"cannot densify the initial state: {exc}") from exc
        snapshots, _ = run(v0, model, tab, h, t_final, policy, opts, snapshot_every=cadence)
        rows = []
        for t, v in snapshots:
            rho_tt = factor_to_dense_rho(v)
            rho_ref = dense_solution(rho0, model, t)
            rows.append([t, float(np.linalg.norm(rho_tt - rho_ref))])
    except OracleSizeExceeded as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except (ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except NumericalAbort as exc:
        click.echo(f"numerical abort: {exc}", err=True)
        sys.exit(3)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "oracle_compare.csv", ["time", "frobenius_error"], rows)
    from . import report

    data = np.asarray(rows, dtype=float)
    report.render_time_series(
        data[:, 0],
        {"frobenius_error": data[:, 1]},
        out / "oracle_compare.png",
        title="deviation from dense reference",
        ylabel="Frobenius error",
    )
    click.echo(f"final error = {rows[-1][1]:.3e}")


if __name__ == "__main__":
    main()
