"""Single-node closed-loop transient engine and metrics.

The regulated node obeys dV/dt = (i_supply - i_load)/C. Between
consecutive events (comparator firings, load edges, clock retimings) the
coefficients are constant, so the node advances by the closed-form
solution: an exponential toward vdd - i_load/G for triode switches, a
linear ramp for constant-current switches. No step-size error accrues;
accuracy is limited only by float rounding.

Rails are handled physically: the node cannot discharge below ground or
charge above the supply, and while pinned at a rail the curtailed branch
current is accounted for so charge bookkeeping stays exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .circuit import (LoadProfile, OffsetModel, SwitchKind, SwitchModel,
                      ZERO_OFFSET, load_at, load_breakpoints, sample_offset)
from .interleave import FreqBandMap, InterleaveSpec, divider_for
from .varshift import ComparatorBankSpec, reference_ladder, shift_amount

CONSERVATION_RTOL = 1e-6


class Scheme(enum.Enum):
    VAR_SHIFT = "varshift"
    INTERLEAVED = "interleaved"


class NotSettledError(RuntimeError):
    """Raised when a trace never meets the band-and-hold settling rule.

    Carries the best-effort peak-to-peak ripple of the trace tail so sweep
    harnesses can still report something useful for the failed row.
    """

    def __init__(self, message: str, tail_ripple: float = math.nan):
        super().__init__(message)
        self.tail_ripple = tail_ripple


@dataclass(frozen=True)
class EfficiencyModel:
    """Control-power model: energy per comparison plus static draw."""

    e_cmp: float = 0.0
    i_static: float = 0.0

    def __post_init__(self):
        if self.e_cmp < 0 or self.i_static < 0:
            raise ValueError("efficiency model parameters must be non-negative")


@dataclass(frozen=True)
class SimConfig:
    """Run-level configuration shared by both control schemes."""

    vdd: float = 1.0
    c_load: float = 9e-9
    t_end: float = 5e-6
    sample_dt: Optional[float] = None
    seed: int = 0
    scheme: Scheme = Scheme.INTERLEAVED
    efficiency: EfficiencyModel = field(default_factory=EfficiencyModel)
    switch: Optional[SwitchModel] = None
    offset: OffsetModel = ZERO_OFFSET
    v0: float = 0.0

    def __post_init__(self):
        if self.c_load <= 0:
            raise ValueError("c_load must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.sample_dt is not None and self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive")
        if not 0.0 <= self.v0 <= self.vdd:
            raise ValueError("v0 must lie within [0, vdd]")


@dataclass
class Trace:
    """Uniformly sampled waveform of one run plus charge bookkeeping."""

    t: np.ndarray
    v_out: np.ndarray
    n_on: np.ndarray
    i_load: np.ndarray
    period_eff: np.ndarray
    sample_dt: float
    q_supplied: float = 0.0
    q_load: float = 0.0
    v_start: float = 0.0
    v_end: float = 0.0
    c_load: float = 0.0

    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if self.t.size else 0.0

    def conservation_residual(self) -> float:
        """Relative mismatch between integrated net charge and C*dV."""
        lhs = self.q_supplied - self.q_load
        rhs = self.c_load * (self.v_end - self.v_start)
        scale = max(abs(self.q_supplied), abs(self.q_load), abs(rhs), 1e-30)
        return abs(lhs - rhs) / scale

    def to_csv(self, path) -> None:
        data = np.column_stack([self.t, self.v_out, self.n_on,
                                self.i_load, self.period_eff])
        np.savetxt(path, data, delimiter=",", fmt="%.17g",
                   header="t,v_out,n_on,i_load,period_eff", comments="")


@dataclass(frozen=True)
class Metrics:
    ripple_pp: float
    settling_time: float
    current_efficiency: float
    v_mean_ss: float


class _NodeIntegrator:
    """Advances the single RC node exactly between events and samples it."""

    def __init__(self, sim: SimConfig, switch: SwitchModel, sample_dt: float):
        self.c = sim.c_load
        self.vdd = sim.vdd
        self.switch = switch
        self.sample_dt = sample_dt
        self.q_sup = 0.0
        self.q_load = 0.0
        self.next_k = 0  # index of the next sample to emit
        self.period_eff = 0.0
        self.ts: list = []
        self.vs: list = []
        self.ns: list = []
        self.ils: list = []
        self.pes: list = []

    # -- closed-form node value dt after segment start ------------------
    @staticmethod
    def _value(v0, dt, kind, g_net, i_net, c, h0, v_rail):
        """Node voltage dt into a segment that rails at h0 (inf if never).

        kind 0 is a linear ramp with net current i_net; kind 1 is the
        exponential branch, where i_net carries the asymptote voltage.
        """
        if dt >= h0:
            return v_rail
        if kind == 0:
            return v0 + i_net * dt / c
        return i_net + (v0 - i_net) * math.exp(-g_net * dt / c)

    def _emit(self, t0, t1, v0, n_on, i_load_cmd, kind, g_net, i_net,
              h0, v_rail):
        """Emit trace samples with t0 <= t_k < t1 using the segment form."""
        sd = self.sample_dt
        k = self.next_k
        t_k = k * sd
        while t_k < t1:
            if t_k >= t0:
                v = self._value(v0, t_k - t0, kind, g_net, i_net,
                                self.c, h0, v_rail)
                self.ts.append(t_k)
                self.vs.append(v)
                self.ns.append(n_on)
                self.ils.append(i_load_cmd)
                self.pes.append(self.period_eff)
            k += 1
            t_k = k * sd
        self.next_k = k

    def advance(self, t0: float, v0: float, t1: float, n_on: int,
                i_load: float) -> float:
        """Integrate from t0 to t1 with constant gate state and load."""
        h = t1 - t0
        if h < 0:
            raise ValueError("segment end precedes start")
        c, vdd, sw = self.c, self.vdd, self.switch
        inf = math.inf

        if sw.kind is SwitchKind.CONSTANT_CURRENT:
            i_sup = n_on * sw.i_on
            net = i_sup - i_load
            h0, v_rail = inf, 0.0
            if net > 0 and v0 + net * h / c > vdd:
                h0, v_rail = (vdd - v0) * c / net, vdd
            elif net < 0 and v0 + net * h / c < 0.0:
                h0, v_rail = -v0 * c / net, 0.0
            self._emit(t0, t1, v0, n_on, i_load, 0, 0.0, net, h0, v_rail)
            if h >= h0:
                h_rest = h - h0
                if v_rail == vdd:  # excess switch current shed at the rail
                    self.q_sup += i_sup * h0 + i_load * h_rest
                    self.q_load += i_load * h
                else:  # load curtailed: a grounded node cannot sink more
                    self.q_sup += i_sup * h
                    self.q_load += i_load * h0 + i_sup * h_rest
                return v_rail
            self.q_sup += i_sup * h
            self.q_load += i_load * h
            return v0 + net * h / c

        # triode switches
        if v0 > vdd * (1 + 1e-12):
            raise ValueError("triode integration requires v0 <= vdd")
        g = n_on * sw.g_on
        if g == 0.0:
            net = -i_load
            h0, v_rail = inf, 0.0
            if i_load > 0 and v0 - i_load * h / c < 0.0:
                h0 = v0 * c / i_load
            self._emit(t0, t1, v0, n_on, i_load, 0, 0.0, net, h0, v_rail)
            if h >= h0:
                self.q_load += i_load * h0  # nothing flows once at ground
                return 0.0
            self.q_load += i_load * h
            return v0 - i_load * h / c

        v_inf = vdd - i_load / g
        tau = c / g
        h0, v_rail = inf, 0.0
        if v_inf < 0.0:
            v_end_un = v_inf + (v0 - v_inf) * math.exp(-h / tau)
            if v_end_un < 0.0:
                h0 = tau * math.log((v0 - v_inf) / (-v_inf))
        self._emit(t0, t1, v0, n_on, i_load, 1, g, v_inf, h0, v_rail)
        if h >= h0:
            h_rest = h - h0
            int_v = v_inf * h0 + (v0 - v_inf) * tau * (
                1.0 - math.exp(-h0 / tau))
            self.q_sup += g * (vdd * h0 - int_v) + g * vdd * h_rest
            self.q_load += i_load * h0 + g * vdd * h_rest
            return 0.0
        e = math.exp(-h / tau)
        int_v = v_inf * h + (v0 - v_inf) * tau * (1.0 - e)
        self.q_sup += g * (vdd * h - int_v)
        self.q_load += i_load * h
        return v_inf + (v0 - v_inf) * e

    def flush_tail(self, t_end: float, v_end: float, n_on: int,
                   i_load: float) -> None:
        """Emit the sample that lands exactly on t_end, if any."""
        t_k = self.next_k * self.sample_dt
        if t_k <= t_end * (1 + 1e-12):
            self.ts.append(t_k)
            self.vs.append(v_end)
            self.ns.append(n_on)
            self.ils.append(i_load)
            self.pes.append(self.period_eff)
            self.next_k += 1


def _default_sample_dt(sim: SimConfig, controller_spec,
                       band_map: Optional[FreqBandMap]) -> float:
    if sim.sample_dt is not None:
        return sim.sample_dt
    if isinstance(controller_spec, ComparatorBankSpec):
        return controller_spec.clock_period / 16.0
    base = controller_spec.base_clock_period
    div = 1 if band_map is None else int(min(band_map._table))
    return base * div / 16.0


def run(sim: SimConfig, controller_spec, load: LoadProfile,
        band_map: Optional[FreqBandMap] = None,
        forced_n_on: Optional[int] = None) -> Trace:
    """Closed-loop (or forced-gate) transient run; returns the sampled trace.

    controller_spec must match sim.scheme: a ComparatorBankSpec for
    VAR_SHIFT or an InterleaveSpec for INTERLEAVED. band_map enables the
    load-dependent clock divider (interleaved only); without it the clock
    runs at the base period. forced_n_on pins the gate state and disables
    the controller, which turns the run into an open-loop RC reference.

    Raises RuntimeError if the run's charge bookkeeping disagrees with
    C*dV by more than 1e-6 relative - a self-check on the closed forms.
    """
    if sim.scheme is Scheme.VAR_SHIFT:
        if not isinstance(controller_spec, ComparatorBankSpec):
            raise ValueError("VAR_SHIFT scheme needs a ComparatorBankSpec")
        if sim.switch is None:
            raise ValueError("VAR_SHIFT scheme needs sim.switch")
        switch = sim.switch
    elif sim.scheme is Scheme.INTERLEAVED:
        if not isinstance(controller_spec, InterleaveSpec):
            raise ValueError("INTERLEAVED scheme needs an InterleaveSpec")
        switch = controller_spec.switch
        if band_map is not None and \
                band_map.n_comparators != controller_spec.n_comparators:
            raise ValueError("band map size does not match n_comparators")
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown scheme {sim.scheme}")

    sample_dt = _default_sample_dt(sim, controller_spec, band_map)
    node = _NodeIntegrator(sim, switch, sample_dt)
    rng = np.random.default_rng(sim.seed)
    offset = sim.offset
    use_offset = offset.enabled and offset.sigma0 > 0.0

    t = 0.0
    v = sim.v0
    i_load = load_at(load, 0.0)
    breakpoints = load_breakpoints(load, 0.0, sim.t_end)
    bp_idx = 0

    if sim.scheme is Scheme.VAR_SHIFT:
        spec = controller_spec
        period = spec.clock_period
        f_clk = 1.0 / period
        node.period_eff = period
        junction = 0 if forced_n_on is None else int(forced_n_on)
        n_on = junction
        n_cycles = 0

        while t < sim.t_end:
            if forced_n_on is None:
                off = sample_offset(offset, f_clk, rng) if use_offset else 0.0
                delta = shift_amount(spec, v + off)
                junction = max(0, min(spec.n_switches, junction + delta))
                n_on = junction
            n_cycles += 1
            t_next_ctrl = n_cycles * period
            while True:
                t1 = min(t_next_ctrl, sim.t_end)
                if bp_idx < len(breakpoints) and breakpoints[bp_idx] < t1:
                    t1 = breakpoints[bp_idx]
                # piecewise-constant load: the midpoint value is exact and
                # immune to float rounding of the edge instants themselves
                i_load = load_at(load, 0.5 * (t + t1)) if t1 > t else i_load
                v = node.advance(t, v, t1, n_on, i_load)
                t = t1
                if bp_idx < len(breakpoints) and t == breakpoints[bp_idx]:
                    bp_idx += 1
                    continue
                break
            if t >= sim.t_end:
                break
    else:
        spec = controller_spec
        n = spec.n_comparators
        gates = [0] * n
        n_on = 0
        if forced_n_on is not None:
            n_on = int(forced_n_on)
            gates = [1] * n_on + [0] * (n - n_on)
        divider = 1 if band_map is None else divider_for(band_map, n_on)
        t_eff = spec.base_clock_period * divider
        node.period_eff = t_eff
        t_boundary = 0.0
        phase = 0

        while t < sim.t_end:
            # fire comparator `phase` at time t (decision from pre-update v)
            if forced_n_on is None:
                off = sample_offset(offset, 1.0 / t_eff, rng) \
                    if use_offset else 0.0
                want_on = 1 if spec.v_ref > v + off else 0
                n_on += want_on - gates[phase]
                gates[phase] = want_on
            phase += 1
            if phase == n:
                phase = 0
                t_next_ctrl = t_boundary + t_eff
            else:
                t_next_ctrl = t_boundary + phase * (t_eff / n)
            while True:
                t1 = min(t_next_ctrl, sim.t_end)
                if bp_idx < len(breakpoints) and breakpoints[bp_idx] < t1:
                    t1 = breakpoints[bp_idx]
                i_load = load_at(load, 0.5 * (t + t1)) if t1 > t else i_load
                v = node.advance(t, v, t1, n_on, i_load)
                t = t1
                if bp_idx < len(breakpoints) and t == breakpoints[bp_idx]:
                    bp_idx += 1
                    continue
                break
            if t >= sim.t_end:
                break
            if phase == 0:
                # period boundary: retime from the pre-phase-0 gate state
                t_boundary = t_next_ctrl
                if band_map is not None:
                    divider = divider_for(band_map, n_on)
                    t_eff = spec.base_clock_period * divider
                    node.period_eff = t_eff

    node.flush_tail(sim.t_end, v, n_on, i_load)

    trace = Trace(
        t=np.asarray(node.ts), v_out=np.asarray(node.vs),
        n_on=np.asarray(node.ns, dtype=np.int64),
        i_load=np.asarray(node.ils), period_eff=np.asarray(node.pes),
        sample_dt=sample_dt, q_supplied=node.q_sup, q_load=node.q_load,
        v_start=sim.v0, v_end=v, c_load=sim.c_load)
    resid = trace.conservation_residual()
    if resid > CONSERVATION_RTOL:
        raise RuntimeError(
            f"charge bookkeeping off by {resid:.3e} relative (> 1e-6)")
    return trace


# -- metrics ------------------------------------------------------------


def measure_settling(trace: Trace, v_target: float, band: float,
                     hold: float) -> float:
    """Earliest t with |v - v_target| <= band over the whole [t, t+hold].

    Resolution is one sample_dt. Raises NotSettledError when no window of
    length `hold` fits within the trace while staying inside the band.
    """
    if band <= 0 or hold <= 0:
        raise ValueError("band and hold must be positive")
    ok = np.abs(trace.v_out - v_target) <= band
    m = int(math.floor(hold / trace.sample_dt + 1e-9))
    if m + 1 > ok.size:
        raise NotSettledError("hold window longer than trace",
                              _tail_pp(trace))
    good = np.convolve(ok.astype(np.int64), np.ones(m + 1, dtype=np.int64),
                       "valid") == m + 1
    idx = np.flatnonzero(good)
    if idx.size == 0:
        raise NotSettledError("output never held inside the band",
                              _tail_pp(trace))
    return float(trace.t[idx[0]])


def _tail_pp(trace: Trace, fraction: float = 0.25) -> float:
    n = max(2, int(trace.t.size * fraction))
    tail = trace.v_out[-n:]
    return float(tail.max() - tail.min())


def measure_ripple(trace: Trace, window: float) -> float:
    """Peak-to-peak excursion over the final `window` seconds of the trace."""
    if trace.t.size == 0:
        raise ValueError("empty trace")
    if window > trace.duration() * (1 + 1e-12):
        raise ValueError("window exceeds trace duration")
    t_from = trace.t[-1] - window
    sel = trace.v_out[trace.t >= t_from - 1e-15 * max(1.0, abs(t_from))]
    return float(sel.max() - sel.min())


def current_efficiency(trace: Trace, sim: SimConfig, n_comparators: int,
                       t_from: float = 0.0) -> float:
    """Load current over total drawn current, averaged from t_from onward.

    Control draw is i_static plus the comparison-energy term
    n_comparators * e_cmp * f_eff / vdd with f_eff the time-averaged
    effective clock frequency of the trace window.
    """
    sel = trace.t >= t_from - 1e-15 * max(1.0, abs(t_from))
    if not sel.any():
        raise ValueError("t_from beyond end of trace")
    i_load_avg = float(trace.i_load[sel].mean())
    if i_load_avg <= 0.0:
        raise ValueError("efficiency undefined for zero average load")
    f_avg = float((1.0 / trace.period_eff[sel]).mean())
    eff = sim.efficiency
    i_ctrl = eff.i_static + n_comparators * eff.e_cmp * f_avg / sim.vdd
    return i_load_avg / (i_load_avg + i_ctrl)


def calibrate_ecmp(target_eta: float, i_load: float, f_clk: float,
                   n_comparators: int, vdd: float) -> float:
    """Energy per comparison that yields target_eta at one operating point.

    Inverts eta = i_load / (i_load + n * e_cmp * f / vdd) with zero static
    draw, pinning the efficiency model's single free constant.
    """
    if not 0.0 < target_eta < 1.0:
        raise ValueError("target_eta must lie strictly inside (0, 1)")
    if i_load <= 0 or f_clk <= 0 or n_comparators < 1 or vdd <= 0:
        raise ValueError("calibration inputs must be positive")
    return i_load * (1.0 / target_eta - 1.0) * vdd / (n_comparators * f_clk)


def _controller_target(sim: SimConfig, controller_spec) -> float:
    if sim.scheme is Scheme.VAR_SHIFT:
        return controller_spec.v_center
    return controller_spec.v_ref


def _controller_n_comparators(sim: SimConfig, controller_spec) -> int:
    if sim.scheme is Scheme.VAR_SHIFT:
        return controller_spec.n_comparators
    return controller_spec.n_comparators


def compute_metrics(trace: Trace, sim: SimConfig, controller_spec,
                    v_target: Optional[float] = None,
                    band: Optional[float] = None,
                    hold: Optional[float] = None,
                    ripple_window: Optional[float] = None) -> Metrics:
    """Settling, post-settling ripple, efficiency and mean for one run.

    Defaults follow the regulation contract: band is 1% of the target and
    the output must hold it for 10 effective clock periods. Ripple covers
    every sample after the settling instant unless a shorter
    ripple_window is given (steady-state benchmarks pass one to skip the
    band-entry transient); the efficiency average always starts at the
    settling instant.
    """
    if v_target is None:
        v_target = _controller_target(sim, controller_spec)
    if band is None:
        band = 0.01 * v_target
    if hold is None:
        hold = 10.0 * float(trace.period_eff[-1])
    settled_at = measure_settling(trace, v_target, band, hold)
    window = trace.duration() - settled_at
    if ripple_window is not None:
        window = min(window, ripple_window)
    ripple = measure_ripple(trace, window)
    sel = trace.t >= trace.t[-1] - window
    v_mean = float(trace.v_out[sel].mean())
    eta = current_efficiency(trace, sim,
                             _controller_n_comparators(sim, controller_spec),
                             t_from=settled_at)
    return Metrics(ripple_pp=ripple, settling_time=settled_at,
                   current_efficiency=eta, v_mean_ss=v_mean)


# -- sweeps -------------------------------------------------------------

SWEEP_PARAMETERS = ("n_comparators", "c_load", "v_gap", "block_size",
                    "g_on", "switch_width", "f_clk", "i_load")


@dataclass(frozen=True)
class SweepRow:
    value: float
    metrics: Optional[Metrics]
    settled: bool
    note: str = ""


def _apply_parameter(sim: SimConfig, controller_spec, load: LoadProfile,
                     parameter: str, value):
    """Return (sim, controller, load) with one named parameter replaced."""
    if parameter == "c_load":
        return replace(sim, c_load=float(value)), controller_spec, load
    if parameter == "i_load":
        return sim, controller_spec, LoadProfile.constant(float(value))
    if parameter in ("g_on", "switch_width"):
        if sim.scheme is Scheme.VAR_SHIFT:
            return (replace(sim, switch=replace(sim.switch, g_on=float(value))),
                    controller_spec, load)
        new_switch = replace(controller_spec.switch, g_on=float(value))
        return sim, replace(controller_spec, switch=new_switch), load
    if parameter == "f_clk":
        period = 1.0 / float(value)
        if sim.scheme is Scheme.VAR_SHIFT:
            return sim, replace(controller_spec, clock_period=period), load
        return sim, replace(controller_spec, base_clock_period=period), load
    if parameter == "n_comparators":
        if sim.scheme is Scheme.VAR_SHIFT:
            total = int(value)
            if total < 3 or total % 2 == 0:
                raise ValueError("comparator count must be odd and >= 3")
            return sim, replace(controller_spec, num_c=(total - 1) // 2), load
        return sim, replace(controller_spec, n_comparators=int(value)), load
    if parameter in ("v_gap", "block_size"):
        if sim.scheme is not Scheme.VAR_SHIFT:
            raise ValueError(f"{parameter} applies to the varshift scheme only")
        if parameter == "v_gap":
            return sim, replace(controller_spec, v_gap=float(value)), load
        return sim, replace(controller_spec, block_size=int(value)), load
    raise ValueError(f"unknown sweep parameter {parameter!r}; "
                     f"expected one of {SWEEP_PARAMETERS}")


def sweep(sim: SimConfig, controller_spec, load: LoadProfile,
          parameter: str, values: Sequence, band_map=None,
          derive=None, ripple_window: Optional[float] = None) -> list:
    """One independent run per value with a shared seed; rows in input order.

    Rows whose run never settles are flagged (metrics None, note set)
    rather than aborting the sweep. `derive` may post-adjust the
    (sim, controller, load) bundle per value, e.g. to hold total switch
    current constant while the switch count varies.
    """
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for value in values:
        s, c, l = _apply_parameter(sim, controller_spec, load,
                                   parameter, value)
        if derive is not None:
            s, c, l = derive(s, c, l, value)
        try:
            trace = run(s, c, l, band_map=band_map)
            metrics = compute_metrics(trace, s, c,
                                      ripple_window=ripple_window)
            rows.append(SweepRow(value=float(value), metrics=metrics,
                                 settled=True))
        except NotSettledError as exc:
            rows.append(SweepRow(value=float(value), metrics=None,
                                 settled=False, note=str(exc)))
    return rows
