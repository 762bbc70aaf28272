"""Built-in benchmark and figure-reproduction configurations.

Presets are plain config dicts (same schema as user TOML files) plus, for
sweep presets, the sweep parameter, its value grid and any derived-field
rule. The operating points follow the studies they reproduce: benchmark
rows at C = 9 nF with N = 8 and per-row clock periods, sensitivity sweeps
at their stated load/capacitance, each in a regime where the swept
parameter dominates the response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

# -- single-run presets ---------------------------------------------------

# Load-scaled benchmark rows: pulsating load (period 100 ns, duty 0.5,
# floor 20% of the row current) against the row's clock period.
_ROW_TABLE = {"20mA": (20e-3, 2e-9), "10mA": (10e-3, 4e-9),
              "5mA": (5e-3, 8e-9)}


def table1_row(name: str) -> dict:
    """Benchmark row config: pulsed load at the row current and period."""
    if name not in _ROW_TABLE:
        raise KeyError(f"unknown row {name!r}; rows: {sorted(_ROW_TABLE)}")
    i_load, period = _ROW_TABLE[name]
    return {
        "sim": {"scheme": "interleaved", "vdd": 1.0, "c_load": 9e-9,
                "t_end": 8e-6, "seed": 0},
        "switch": {"kind": "triode", "g_on": 55e-3},
        "interleave": {"n": 8, "v_ref": 0.9, "base_clock_period": period},
        "load": {"segments": [[0.0, 0.0]],
                 "pulse": {"period": 100e-9, "duty": 0.5,
                           "i_high": i_load, "i_low": 0.2 * i_load}},
        "metrics": {"ripple_window": 4e-6},
    }


def table1_row_constant(name: str) -> dict:
    """Same row at constant current, used for efficiency bookkeeping."""
    cfg = table1_row(name)
    i_load, _ = _ROW_TABLE[name]
    cfg["load"] = {"segments": [[0.0, i_load]]}
    cfg["sim"]["t_end"] = 2e-6
    return cfg


def headline_step() -> dict:
    """50 mA load-step configuration: N = 8, C = 9 nF, f0 = 1 GHz."""
    return {
        "sim": {"scheme": "interleaved", "vdd": 1.0, "c_load": 9e-9,
                "t_end": 3e-6, "seed": 0},
        "switch": {"kind": "triode", "g_on": 70e-3},
        "interleave": {"n": 8, "v_ref": 0.9, "base_clock_period": 1e-9},
        "load": {"segments": [[0.0, 2e-3], [1.5e-6, 52e-3]]},
    }


def varshift_default() -> dict:
    """Default variable-shift run: 256 switches, 17 comparators, 1 ns."""
    return {
        "sim": {"scheme": "varshift", "vdd": 1.0, "c_load": 5e-9,
                "t_end": 6e-6, "seed": 0},
        "switch": {"kind": "triode", "g_on": 1e-3},
        "varshift": {"num_c": 8, "v_center": 0.8, "v_gap": 5e-3,
                     "block_size": 8, "n_switches": 256,
                     "clock_period": 1e-9},
        "load": {"segments": [[0.0, 10e-3]]},
    }


def grid_default() -> dict:
    """3x3-pad grid, 9 LDOs, skewed pulsed loads up to 20 mA per LDO."""
    return {
        "sim": {"scheme": "interleaved", "vdd": 1.0, "c_load": 9e-9,
                "seed": 0},
        "switch": {"kind": "triode", "g_on": 55e-3},
        "interleave": {"n": 8, "v_ref": 0.9, "base_clock_period": 1e-9,
                       "bands": [{"counts": [0, 1], "div": 8},
                                 {"counts": [2], "div": 4},
                                 {"counts": [3, 4], "div": 2},
                                 {"counts": [5, 6, 7, 8], "div": 1}]},
        "load": {"segments": [[0.0, 0.0]]},
        "grid": {"cell_size": 1e-3, "segment_len": 0.1e-3,
                 "r_segment": 0.55, "n_pads_x": 3, "n_pads_y": 3,
                 "c_lumped": 9e-9, "t_end": 2e-6, "i_ldo_max": 35e-3,
                 "v_init": 0.9,
                 "pad": {"r": 1.0, "l": 1e-9, "c": 5e-12, "v_supply": 1.0},
                 "loads": {"mode": "skewed", "seed": 7, "i_max": 20e-3}},
    }


# Band allocation study: four divider maps from smoothest frequency
# gradient to coarsest, all covering 0..8 ON switches at f0 = 1 GHz.
BAND_MAPS = {
    "smooth": [{"counts": [0, 1], "div": 8}, {"counts": [2], "div": 4},
               {"counts": [3, 4], "div": 2},
               {"counts": [5, 6, 7, 8], "div": 1}],
    "mid_a": [{"counts": [0, 1, 2], "div": 8},
              {"counts": [3, 4], "div": 2},
              {"counts": [5, 6, 7, 8], "div": 1}],
    "mid_b": [{"counts": [0, 1, 2, 3, 4], "div": 4},
              {"counts": [5, 6, 7, 8], "div": 1}],
    "coarse": [{"counts": [0, 1, 2, 3, 4], "div": 8},
               {"counts": [5, 6, 7, 8], "div": 1}],
}


def band_study(map_name: str, i_load: float = 20e-3) -> dict:
    """Single-LDO run of the frequency-band allocation study."""
    if map_name not in BAND_MAPS:
        raise KeyError(f"unknown band map {map_name!r}")
    return {
        "sim": {"scheme": "interleaved", "vdd": 1.0, "c_load": 9e-9,
                "t_end": 8e-6, "seed": 0},
        "switch": {"kind": "triode", "g_on": 55e-3},
        "interleave": {"n": 8, "v_ref": 0.9, "base_clock_period": 1e-9,
                       "bands": BAND_MAPS[map_name]},
        "load": {"segments": [[0.0, i_load]]},
    }


# -- sweep presets --------------------------------------------------------

@dataclass
class SweepPreset:
    """One sensitivity study: base config, swept parameter, value grid."""

    config: dict
    parameter: str
    values: Sequence[float]
    derive: Optional[Callable] = None
    ripple_window: Optional[float] = None
    note: str = ""


def _disturbed_load(i_dc: float, frac: float = 0.10,
                    period: float = 600e-9) -> dict:
    """DC load with a +/-frac square disturbance around it."""
    return {"segments": [[0.0, i_dc * (1 - frac)]],
            "pulse": {"period": period, "duty": 0.5,
                      "i_high": 2 * frac * i_dc, "i_low": 0.0}}


def _vs_base(g_on: float, c_load: float, load: dict, t_end: float,
             block_size: int = 16, v_gap: float = 5e-3) -> dict:
    return {
        "sim": {"scheme": "varshift", "vdd": 1.0, "c_load": c_load,
                "t_end": t_end, "seed": 0},
        "switch": {"kind": "triode", "g_on": g_on},
        "varshift": {"num_c": 8, "v_center": 0.8, "v_gap": v_gap,
                     "block_size": block_size, "n_switches": 256,
                     "clock_period": 1e-9},
        "load": load,
    }


def _il_base(g_on: float, c_load: float, i_load: float, t_end: float,
             n: int = 16) -> dict:
    return {
        "sim": {"scheme": "interleaved", "vdd": 1.0, "c_load": c_load,
                "t_end": t_end, "seed": 0},
        "switch": {"kind": "triode", "g_on": g_on},
        "interleave": {"n": n, "v_ref": 0.9, "base_clock_period": 1e-9},
        "load": {"segments": [[0.0, i_load]]},
    }


def _derive_fig3(sim, controller, load, value):
    # finer references as the bank grows: gap shrinks with the count
    return sim, replace(controller, v_gap=30e-3 / controller.num_c), load


def _derive_fig11(sim, controller, load, value):
    # hold the total switch current at 48 mA while N varies
    g = 0.048 / (int(value) * 0.1)
    return sim, replace(controller,
                        switch=replace(controller.switch, g_on=g)), load


def sweep_preset(name: str) -> SweepPreset:
    """Figure-reproduction sweeps (variable-shift 3-7, interleaved 9-14)."""
    presets = {
        "fig3": lambda: SweepPreset(
            config=_vs_base(0.3e-3, 5e-9, _disturbed_load(10e-3), 6e-6,
                            block_size=24),
            parameter="n_comparators", values=[5, 7, 9, 13, 17],
            derive=_derive_fig3, ripple_window=2.4e-6,
            note="comparator count at fixed 10 mA load"),
        "fig4": lambda: SweepPreset(
            config=_vs_base(0.3e-3, 5e-9,
                            _disturbed_load(10e-3, period=2.4e-6), 12e-6),
            parameter="c_load",
            values=[2e-9, 4e-9, 8e-9, 16e-9, 32e-9],
            ripple_window=4.8e-6, note="load capacitance"),
        "fig5": lambda: SweepPreset(
            config=_vs_base(0.05e-3, 5e-9,
                            _disturbed_load(2e-3, period=4e-6), 14e-6,
                            block_size=8, v_gap=2e-3),
            parameter="v_gap", values=[2e-3, 4e-3, 6e-3, 8e-3, 10e-3],
            ripple_window=8e-6, note="reference gap at 2 mA"),
        "fig6": lambda: SweepPreset(
            config=_vs_base(1.5e-3, 5e-9, {"segments": [[0.0, 10e-3]]},
                            6e-6, block_size=8),
            parameter="block_size", values=[8, 16, 32, 64, 128],
            ripple_window=2e-6, note="maximum step (minimum step) size"),
        "fig7": lambda: SweepPreset(
            config=_vs_base(1.5e-3, 5e-9,
                            _disturbed_load(10e-3, period=150e-9), 6e-6,
                            block_size=8),
            parameter="g_on",
            values=[0.3e-3, 1e-3, 3e-3, 10e-3, 30e-3, 100e-3],
            ripple_window=2e-6, note="switch strength (device width)"),
        "fig9": lambda: SweepPreset(
            config=_with_efficiency(_il_base(30e-3, 3e-9, 10e-3, 4e-6)),
            parameter="f_clk",
            values=[0.25e9, 0.5e9, 1e9, 2e9, 4e9],
            ripple_window=1.5e-6, note="efficiency vs clock frequency"),
        "fig10": lambda: SweepPreset(
            config=_il_base(30e-3, 3e-9, 10e-3, 4e-6),
            parameter="f_clk",
            values=[0.25e9, 0.5e9, 1e9, 2e9, 4e9],
            ripple_window=1.5e-6, note="clock frequency"),
        "fig11": lambda: SweepPreset(
            config=_il_base(30e-3, 3e-9, 10e-3, 4e-6),
            parameter="n_comparators", values=[4, 8, 16, 32, 64],
            derive=_derive_fig11, ripple_window=1.5e-6,
            note="comparator count at 48 mA total switch current"),
        "fig12": lambda: SweepPreset(
            config=_il_base(30e-3, 3e-9, 10e-3, 4e-6),
            parameter="i_load", values=[2e-3, 5e-3, 10e-3, 15e-3, 20e-3],
            ripple_window=1.5e-6,
            note="load current (inferred trend: ripple non-decreasing)"),
        "fig13": lambda: SweepPreset(
            config=_il_base(30e-3, 3e-9, 10e-3, 4e-6),
            parameter="c_load",
            values=[1.5e-9, 2e-9, 3e-9, 4.5e-9, 6e-9],
            ripple_window=1.5e-6, note="load capacitance"),
        "fig14": lambda: SweepPreset(
            config=_il_base(30e-3, 3e-9, 10e-3, 4e-6),
            parameter="g_on",
            values=[7e-3, 10e-3, 15e-3, 25e-3, 40e-3],
            ripple_window=1.5e-6, note="switch width"),
    }
    if name not in presets:
        raise KeyError(f"unknown sweep preset {name!r}; "
                       f"available: {sorted(presets)}")
    return presets[name]()


def _with_efficiency(cfg: dict) -> dict:
    from .engine import calibrate_ecmp
    cfg["efficiency"] = {
        "e_cmp": calibrate_ecmp(0.969, 10e-3, 250e6, 8, 1.0),
        "i_static": 0.0}
    return cfg


SWEEP_PRESET_NAMES = ("fig3", "fig4", "fig5", "fig6", "fig7",
                      "fig9", "fig10", "fig11", "fig12", "fig13", "fig14")

RUN_PRESETS = {
    "table1_20mA": lambda: table1_row("20mA"),
    "table1_10mA": lambda: table1_row("10mA"),
    "table1_5mA": lambda: table1_row("5mA"),
    "headline": headline_step,
    "varshift_default": varshift_default,
}

GRID_PRESETS = {
    "grid_default": grid_default,
}
