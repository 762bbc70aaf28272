"""Command-line front end: simulate, sweep, grid, calibrate.

Exit codes: 0 success, 1 run never settled, 2 usage or config error.
Outputs are deterministic byte-for-byte for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import presets
from .config import (ConfigError, canonical_echo, load_toml, parse_si,
                     resolve_grid, resolve_metrics, resolve_run)
from .engine import (NotSettledError, Scheme, calibrate_ecmp,
                     compute_metrics, measure_ripple, measure_settling, run,
                     sweep)
from .grid import node_spread, run_grid
from .varshift import ThermoState, junction_index

EXIT_OK = 0
EXIT_NOT_SETTLED = 1
EXIT_CONFIG = 2


def _load_config(args) -> dict:
    if args.preset and args.config:
        raise ConfigError("give either --config or --preset, not both")
    if args.preset:
        name = args.preset
        if name in presets.RUN_PRESETS:
            return presets.RUN_PRESETS[name]()
        if name in presets.GRID_PRESETS:
            return presets.GRID_PRESETS[name]()
        raise ConfigError(f"unknown preset {name!r}")
    if not args.config:
        raise ConfigError("a --config file or --preset is required")
    return load_toml(args.config)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_metrics(path: Path, metrics, echo: dict) -> None:
    doc = {"metrics": asdict(metrics), "config": echo}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    t_end = parse_si(cfg.get("sim", {}).get("t_end", 5e-6), "sim.t_end")
    if t_end <= 0:
        (out / "trace.csv").write_text("t,v_out,n_on,i_load,period_eff\n")
        print("not settled: zero-duration run produced an empty trace",
              file=sys.stderr)
        return EXIT_NOT_SETTLED
    resolved = resolve_run(cfg, seed_override=args.seed)
    trace = run(resolved.sim, resolved.controller, resolved.load,
                band_map=resolved.band_map)
    trace.to_csv(out / "trace.csv")
    try:
        metrics = compute_metrics(trace, resolved.sim, resolved.controller,
                                  **resolve_metrics(cfg))
    except NotSettledError as exc:
        print(f"not settled: {exc} (tail ripple "
              f"{exc.tail_ripple * 1e3:.3f} mV)", file=sys.stderr)
        return EXIT_NOT_SETTLED
    _write_metrics(out / "metrics.json", metrics, resolved.echo)
    if resolved.sim.scheme is Scheme.VAR_SHIFT:
        # audit: final gate state must still be a valid thermometer code
        junction_index(ThermoState.from_junction(
            int(trace.n_on[-1]), resolved.controller.n_switches))
    print(f"ripple_pp {metrics.ripple_pp * 1e3:.4f} mV, settling "
          f"{metrics.settling_time * 1e9:.2f} ns, efficiency "
          f"{metrics.current_efficiency * 100:.3f} %")
    return EXIT_OK


def _sweep_rows_csv(rows) -> str:
    lines = ["value,ripple_pp,settling_time,efficiency"]
    for r in rows:
        if r.metrics is None:
            lines.append(f"{r.value:.17g},,,")
        else:
            m = r.metrics
            lines.append(f"{r.value:.17g},{m.ripple_pp:.17g},"
                         f"{m.settling_time:.17g},"
                         f"{m.current_efficiency:.17g}")
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    if args.preset:
        preset = presets.sweep_preset(args.preset)
        cfg, parameter, values = preset.config, preset.parameter, preset.values
        derive, ripple_window = preset.derive, preset.ripple_window
    else:
        if not args.param:
            raise ConfigError("custom sweeps need --param and --values")
        cfg = _load_config(args)
        parameter = args.param
        if not args.values:
            raise ConfigError("empty --values list")
        values = [parse_si(v, "--values") for v in args.values.split(",")]
        derive = None
        ripple_window = resolve_metrics(cfg).get("ripple_window")
    resolved = resolve_run(cfg, seed_override=args.seed)
    rows = sweep(resolved.sim, resolved.controller, resolved.load,
                 parameter, values, band_map=resolved.band_map,
                 derive=derive, ripple_window=ripple_window)
    name = f"sweep_{parameter}.csv"
    if args.format == "json":
        doc = [{"value": r.value, "settled": r.settled,
                "metrics": None if r.metrics is None else asdict(r.metrics)}
               for r in rows]
        (out / f"sweep_{parameter}.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        (out / name).write_text(_sweep_rows_csv(rows))
    n_flagged = sum(1 for r in rows if not r.settled)
    print(f"swept {parameter} over {len(rows)} values "
          f"({n_flagged} not settled)")
    return EXIT_OK


def cmd_grid(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    resolved = resolve_grid(cfg, seed_override=args.seed)
    result = run_grid(resolved.spec, resolved.scenario, resolved.t_end,
                      sample_dt=resolved.sample_dt)
    spec = resolved.scenario.ldo_spec
    summary_nodes = {}
    any_not_settled = False
    for node, trace in sorted(result.traces.items()):
        trace.to_csv(out / f"trace_node_{node:04d}.csv")
        entry = {}
        is_ldo = node in result.ldo_mesh_nodes
        try:
            settled = measure_settling(trace, spec.v_ref,
                                       0.01 * spec.v_ref,
                                       10 * spec.base_clock_period)
            window = 0.5 * (trace.duration() - settled)
            sel = trace.t >= trace.t[-1] - window
            entry = {
                "ripple_pp": measure_ripple(trace, window),
                "settling_time": settled,
                "v_mean_ss": float(trace.v_out[sel].mean()),
                "current_efficiency": None,
                "is_ldo_node": is_ldo,
            }
        except NotSettledError as exc:
            any_not_settled = True
            entry = {"ripple_pp": None, "settling_time": None,
                     "v_mean_ss": None, "current_efficiency": None,
                     "is_ldo_node": is_ldo,
                     "error": f"not settled ({exc.tail_ripple:.3e} V tail)"}
        summary_nodes[str(node)] = entry
    spread_window = 0.5 * resolved.t_end
    summary = {
        "nodes": summary_nodes,
        "node_spread": node_spread(result.traces, spread_window),
        "max_step_residual_A": result.max_residual,
        "dt": result.dt,
        "sample_dt": result.sample_dt,
        "config": resolved.echo,
    }
    (out / "grid_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"grid run: {len(result.traces)} nodes, spread "
          f"{summary['node_spread'] * 1e3:.3f} mV, max residual "
          f"{result.max_residual:.3e} A")
    return EXIT_NOT_SETTLED if any_not_settled else EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    sec = cfg.get("calibrate")
    if sec is None:
        raise ConfigError("missing [calibrate] section")
    try:
        e_cmp = calibrate_ecmp(
            target_eta=parse_si(sec.get("target_eta", 0.969),
                                "calibrate.target_eta"),
            i_load=parse_si(sec["i_load"], "calibrate.i_load"),
            f_clk=parse_si(sec["f_clk"], "calibrate.f_clk"),
            n_comparators=int(sec["n_comparators"]),
            vdd=parse_si(sec.get("vdd", 1.0), "calibrate.vdd"))
    except KeyError as exc:
        raise ConfigError(f"calibrate: missing field {exc}")
    except ValueError as exc:
        raise ConfigError(f"calibrate: {exc}")
    out = _out_dir(args)
    (out / "efficiency.toml").write_text(
        f"[efficiency]\ne_cmp = {e_cmp:.17g}\ni_static = 0.0\n")
    print(f"e_cmp = {e_cmp:.6g} J per comparison")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dldosim",
        description="Behavioral DLDO regulator and power-grid simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("sweep", cmd_sweep),
                     ("grid", cmd_grid), ("calibrate", cmd_calibrate)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--preset", help="built-in configuration name")
        p.add_argument("--out", help="output directory (default .)")
        p.add_argument("--seed", type=int, default=None,
                       help="override sim.seed")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "sweep":
            p.add_argument("--param", help="parameter to sweep")
            p.add_argument("--values", help="comma-separated values")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NotSettledError as exc:
        print(f"not settled: {exc}", file=sys.stderr)
        return EXIT_NOT_SETTLED
    except ValueError as exc:  # ConfigError and invalid run parameters
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
