"""Config parsing: TOML documents with engineering-suffix numbers.

One file describes a run through nested sections (sim, switch, varshift,
interleave, load, efficiency, grid). Any numeric field accepts either a
number or a string with an SI engineering suffix ("9n", "0.25u", "1G").
The resolver turns the raw document into constructed simulation objects
plus a canonical all-SI echo dict that re-parses to the same objects.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - version dependent
    import tomli as tomllib

from .circuit import LoadProfile, OffsetModel, PulseSpec, SwitchKind, SwitchModel
from .engine import EfficiencyModel, Scheme, SimConfig
from .grid import GridScenario, GridSpec, PadModel, generate_skewed_loads
from .interleave import FreqBandMap, InterleaveSpec
from .varshift import ComparatorBankSpec


class ConfigError(ValueError):
    """Malformed configuration: bad value, unknown field, missing section."""


_SUFFIXES = {"n": 1e-9, "u": 1e-6, "m": 1e-3, "k": 1e3, "M": 1e6, "G": 1e9}
_NUM_RE = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*"
                     r"([numkMG]?)\s*$")


def parse_si(value, field: str = "value") -> float:
    """Accept a float or a string with an engineering suffix (n u m k M G)."""
    if isinstance(value, bool):
        raise ConfigError(f"{field}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _NUM_RE.match(value)
        if not m:
            raise ConfigError(f"{field}: cannot parse number {value!r}")
        return float(m.group(1)) * _SUFFIXES.get(m.group(2), 1.0)
    raise ConfigError(f"{field}: expected number or string, got {type(value)}")


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}")


def _get(section: dict, key: str, default=None, required: bool = False):
    if key in section:
        return section[key]
    if required:
        raise ConfigError(f"missing required field {key!r}")
    return default


def _build_switch(cfg: dict, vdd: float) -> SwitchModel:
    sw = cfg.get("switch", {})
    kind_name = _get(sw, "kind", "triode")
    if kind_name in ("triode", "triode_conductance"):
        kind = SwitchKind.TRIODE_CONDUCTANCE
    elif kind_name in ("current", "constant_current"):
        kind = SwitchKind.CONSTANT_CURRENT
    else:
        raise ConfigError(f"switch.kind: unknown kind {kind_name!r}")
    try:
        return SwitchModel(
            kind=kind,
            i_on=parse_si(_get(sw, "i_on", 0.0), "switch.i_on"),
            g_on=parse_si(_get(sw, "g_on", 0.0), "switch.g_on"),
            vdd=parse_si(_get(sw, "vdd", vdd), "switch.vdd"))
    except ValueError as exc:
        raise ConfigError(f"switch: {exc}")


def _build_load(cfg: dict) -> LoadProfile:
    sec = cfg.get("load", {})
    segments = tuple(
        (parse_si(t, "load.segments[t]"), parse_si(i, "load.segments[i]"))
        for t, i in _get(sec, "segments", [[0.0, 0.0]]))
    pulse = None
    if "pulse" in sec:
        p = sec["pulse"]
        pulse = PulseSpec(
            period=parse_si(_get(p, "period", required=True), "pulse.period"),
            duty=parse_si(_get(p, "duty", 0.5), "pulse.duty"),
            i_high=parse_si(_get(p, "i_high", required=True), "pulse.i_high"),
            i_low=parse_si(_get(p, "i_low", 0.0), "pulse.i_low"),
            phase=parse_si(_get(p, "phase", 0.0), "pulse.phase"))
    try:
        return LoadProfile(segments=segments, pulse=pulse)
    except ValueError as exc:
        raise ConfigError(f"load: {exc}")


def _build_band_map(raw, n_comparators: int) -> Optional[FreqBandMap]:
    if raw is None:
        return None
    try:
        bands = [(entry["counts"], int(entry["div"])) for entry in raw]
        return FreqBandMap(bands, n_comparators)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"interleave.bands: malformed entry ({exc})")
    except ValueError as exc:
        raise ConfigError(f"interleave.bands: {exc}")


@dataclass
class ResolvedRun:
    """A single-node run ready to hand to engine.run."""

    sim: SimConfig
    controller: object
    load: LoadProfile
    band_map: Optional[FreqBandMap]
    echo: dict


def resolve_run(cfg: dict, seed_override: Optional[int] = None) -> ResolvedRun:
    """Construct engine inputs from a parsed config document."""
    sim_sec = cfg.get("sim", {})
    scheme_name = _get(sim_sec, "scheme", "interleaved")
    try:
        scheme = Scheme(scheme_name)
    except ValueError:
        raise ConfigError(f"sim.scheme: unknown scheme {scheme_name!r}")
    vdd = parse_si(_get(sim_sec, "vdd", 1.0), "sim.vdd")
    seed = int(_get(sim_sec, "seed", 0))
    if seed_override is not None:
        seed = int(seed_override)
    eff_sec = cfg.get("efficiency", {})
    efficiency = EfficiencyModel(
        e_cmp=parse_si(_get(eff_sec, "e_cmp", 0.0), "efficiency.e_cmp"),
        i_static=parse_si(_get(eff_sec, "i_static", 0.0),
                          "efficiency.i_static"))
    switch = _build_switch(cfg, vdd)
    sample_dt = _get(sim_sec, "sample_dt")
    try:
        sim = SimConfig(
            vdd=vdd,
            c_load=parse_si(_get(sim_sec, "c_load", 9e-9), "sim.c_load"),
            t_end=parse_si(_get(sim_sec, "t_end", 5e-6), "sim.t_end"),
            sample_dt=None if sample_dt is None else parse_si(
                sample_dt, "sim.sample_dt"),
            seed=seed, scheme=scheme, efficiency=efficiency, switch=switch,
            v0=parse_si(_get(sim_sec, "v0", 0.0), "sim.v0"))
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}")

    band_map = None
    try:
        if scheme is Scheme.VAR_SHIFT:
            vs = cfg.get("varshift", {})
            controller = ComparatorBankSpec(
                num_c=int(_get(vs, "num_c", 8)),
                v_center=parse_si(_get(vs, "v_center", 0.8),
                                  "varshift.v_center"),
                v_gap=parse_si(_get(vs, "v_gap", 5e-3), "varshift.v_gap"),
                block_size=int(_get(vs, "block_size", 8)),
                n_switches=int(_get(vs, "n_switches", 256)),
                clock_period=parse_si(_get(vs, "clock_period", 1e-9),
                                      "varshift.clock_period"))
        else:
            il = cfg.get("interleave", {})
            n = int(_get(il, "n", 8))
            controller = InterleaveSpec(
                n_comparators=n,
                v_ref=parse_si(_get(il, "v_ref", 0.9), "interleave.v_ref"),
                base_clock_period=parse_si(
                    _get(il, "base_clock_period", 1e-9),
                    "interleave.base_clock_period"),
                switch=switch)
            band_map = _build_band_map(_get(il, "bands"), n)
    except ValueError as exc:
        raise ConfigError(str(exc))

    load = _build_load(cfg)
    return ResolvedRun(sim=sim, controller=controller, load=load,
                       band_map=band_map, echo=canonical_echo(cfg))


@dataclass
class ResolvedGrid:
    spec: GridSpec
    scenario: GridScenario
    t_end: float
    sample_dt: Optional[float]
    echo: dict


def resolve_grid(cfg: dict, seed_override: Optional[int] = None) -> ResolvedGrid:
    """Construct grid co-simulation inputs from a parsed config document."""
    g = cfg.get("grid")
    if g is None:
        raise ConfigError("missing [grid] section")
    pad_sec = g.get("pad", {})
    pad = PadModel(
        r_pad=parse_si(_get(pad_sec, "r", 1.0), "grid.pad.r"),
        l_pad=parse_si(_get(pad_sec, "l", 1e-9), "grid.pad.l"),
        c_pad=parse_si(_get(pad_sec, "c", 5e-12), "grid.pad.c"),
        v_supply=parse_si(_get(pad_sec, "v_supply", 1.0), "grid.pad.v_supply"))
    try:
        spec = GridSpec(
            cell_size=parse_si(_get(g, "cell_size", 1e-3), "grid.cell_size"),
            segment_len=parse_si(_get(g, "segment_len", 0.1e-3),
                                 "grid.segment_len"),
            r_segment=parse_si(_get(g, "r_segment", 0.55), "grid.r_segment"),
            n_pads_x=int(_get(g, "n_pads_x", 3)),
            n_pads_y=int(_get(g, "n_pads_y", 3)),
            c_lumped=parse_si(_get(g, "c_lumped", 9e-9), "grid.c_lumped"),
            pad=pad)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}")

    run = resolve_run(cfg, seed_override=seed_override)
    if run.sim.scheme is not Scheme.INTERLEAVED:
        raise ConfigError("grid co-simulation runs the interleaved scheme")

    loads_sec = g.get("loads", {})
    n_ldos = spec.n_pads_x * spec.n_pads_y
    mode = _get(loads_sec, "mode", "skewed")
    if mode == "skewed":
        seed = int(_get(loads_sec, "seed", run.sim.seed))
        loads = generate_skewed_loads(
            n_ldos, seed=seed,
            i_max=parse_si(_get(loads_sec, "i_max", 20e-3),
                           "grid.loads.i_max"))
    elif mode == "uniform":
        loads = {k: run.load for k in range(n_ldos)}
    else:
        raise ConfigError(f"grid.loads.mode: unknown mode {mode!r}")

    dt = _get(g, "dt")
    sample_dt = _get(g, "sample_dt")
    scenario = GridScenario(
        ldo_spec=run.controller, band_map=run.band_map, loads=loads,
        observe_nodes=_get(g, "observe_nodes"),
        i_ldo_max=parse_si(_get(g, "i_ldo_max", 35e-3), "grid.i_ldo_max"),
        dt=None if dt is None else parse_si(dt, "grid.dt"),
        v_init=None if _get(g, "v_init") is None else parse_si(
            g["v_init"], "grid.v_init"))
    return ResolvedGrid(
        spec=spec, scenario=scenario,
        t_end=parse_si(_get(g, "t_end", 2e-6), "grid.t_end"),
        sample_dt=None if sample_dt is None else parse_si(
            sample_dt, "grid.sample_dt"),
        echo=canonical_echo(cfg))


def resolve_metrics(cfg: dict) -> dict:
    """Optional [metrics] overrides: ripple_window, band, hold (SI)."""
    sec = cfg.get("metrics", {})
    out = {}
    for key in ("ripple_window", "band", "hold"):
        if key in sec:
            out[key] = parse_si(sec[key], f"metrics.{key}")
    return out


def canonical_echo(cfg: dict) -> dict:
    """Deep-copy of the raw document with every numeric string resolved.

    The echo embedded in metrics.json re-parses to the same objects as the
    original file, making outputs self-describing.
    """
    def walk(node, path=""):
        if isinstance(node, dict):
            return {k: walk(v, f"{path}.{k}" if path else k)
                    for k, v in node.items()}
        if isinstance(node, list):
            return [walk(v, path) for v in node]
        if isinstance(node, str):
            try:
                return parse_si(node, path)
            except ConfigError:
                return node
        return node

    return walk(cfg)


def echo_to_json(echo: dict) -> str:
    return json.dumps(echo, indent=2, sort_keys=True)
