"""Shared circuit primitives for the DLDO behavioral models.

Comparator decision rule, pass-switch current models, piecewise load
profiles and the optional comparator-offset hook. Everything here is a
pure function of its inputs; simulation state lives in the engines.

Conventions: SI base units throughout (V, A, s, F, Hz, S).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np


class ComparatorDecision(enum.Enum):
    """Output of a clocked comparator: HIGH is the supply rail, LOW is ground."""

    HIGH = 1
    LOW = 0


class SwitchKind(enum.Enum):
    """Electrical model of one pass switch.

    TriodeConductance treats the device as a linear-region resistor to the
    supply; ConstantCurrent treats it as an ideal current source.
    """

    CONSTANT_CURRENT = "constant_current"
    TRIODE_CONDUCTANCE = "triode_conductance"


@dataclass(frozen=True)
class SwitchModel:
    """One pass switch of the driver array.

    Args:
        kind: electrical model used for the ON state.
        i_on: ON current (A), used when kind is CONSTANT_CURRENT.
        g_on: ON conductance (S), used when kind is TRIODE_CONDUCTANCE.
        vdd: supply rail the switch sources from (V).
    """

    kind: SwitchKind = SwitchKind.TRIODE_CONDUCTANCE
    i_on: float = 0.0
    g_on: float = 0.0
    vdd: float = 1.0

    def __post_init__(self):
        if self.vdd <= 0:
            raise ValueError(f"vdd must be positive, got {self.vdd}")
        if self.kind is SwitchKind.CONSTANT_CURRENT and self.i_on <= 0:
            raise ValueError("ConstantCurrent switch needs i_on > 0")
        if self.kind is SwitchKind.TRIODE_CONDUCTANCE and self.g_on <= 0:
            raise ValueError("TriodeConductance switch needs g_on > 0")


@dataclass(frozen=True)
class PulseSpec:
    """Periodic square-pulse load component.

    The load sits at i_high for the first duty fraction of every period
    (measured from the phase offset) and at i_low for the rest.
    """

    period: float
    duty: float
    i_high: float
    i_low: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("pulse period must be positive")
        if not 0.0 <= self.duty <= 1.0:
            raise ValueError(f"duty must lie in [0,1], got {self.duty}")
        if self.i_high < 0 or self.i_low < 0:
            raise ValueError("pulse currents must be non-negative")


@dataclass(frozen=True)
class LoadProfile:
    """Piecewise-constant load current vs time, plus an optional pulse train.

    Segment boundaries belong to the later segment (right-continuous), so a
    step programmed at t applies exactly from t onward. When a pulse spec is
    present its current is superposed on the segment current.
    """

    segments: Tuple[Tuple[float, float], ...] = ((0.0, 0.0),)
    pulse: Optional[PulseSpec] = None

    def __post_init__(self):
        if not self.segments:
            raise ValueError("profile needs at least one segment")
        segs = tuple((float(t), float(i)) for t, i in self.segments)
        object.__setattr__(self, "segments", segs)
        if segs[0][0] != 0.0:
            raise ValueError("first segment must start at t = 0")
        for (t0, i0), (t1, _) in zip(segs, segs[1:]):
            if t1 <= t0:
                raise ValueError("segment start times must strictly increase")
        if any(i < 0 for _, i in segs):
            raise ValueError("load currents must be non-negative")

    @staticmethod
    def constant(i_load: float) -> "LoadProfile":
        return LoadProfile(segments=((0.0, i_load),))

    @staticmethod
    def step(t_step: float, i_before: float, i_after: float) -> "LoadProfile":
        return LoadProfile(segments=((0.0, i_before), (t_step, i_after)))


def comparator_decide(v_sense: float, v_ref: float,
                      offset_sample: float = 0.0) -> ComparatorDecision:
    """Clocked comparator decision.

    Returns LOW (ground) iff the reference lies strictly above the sensed
    voltage plus the sampled input offset; equality resolves to HIGH so the
    rule is deterministic at the tie.
    """
    v_eff = v_sense + offset_sample
    if not (math.isfinite(v_sense) and math.isfinite(v_ref)
            and math.isfinite(offset_sample)):
        raise ValueError("comparator inputs must be finite")
    return ComparatorDecision.LOW if v_ref > v_eff else ComparatorDecision.HIGH


def switch_current(model: SwitchModel, n_on: int, v_out: float) -> float:
    """Total current sourced by n_on switches into a node at v_out.

    TriodeConductance switches cannot conduct backwards: if the node sits
    above the supply the current clamps to zero rather than going negative.
    """
    if n_on < 0:
        raise ValueError("n_on must be non-negative")
    if n_on == 0:
        return 0.0
    if model.kind is SwitchKind.CONSTANT_CURRENT:
        return n_on * model.i_on
    dv = model.vdd - v_out
    if dv <= 0.0:
        return 0.0
    return n_on * model.g_on * dv


def load_at(profile: LoadProfile, t: float) -> float:
    """Load current drawn at time t (t >= 0), right-continuous in t."""
    if t < 0:
        raise ValueError("t must be non-negative")
    i = 0.0
    for t_start, i_seg in profile.segments:
        if t >= t_start:
            i = i_seg
        else:
            break
    if profile.pulse is not None:
        p = profile.pulse
        x = (t - p.phase) % p.period
        i += p.i_high if x < p.duty * p.period else p.i_low
    return i


def load_breakpoints(profile: LoadProfile, t_from: float, t_to: float) -> list:
    """All instants in (t_from, t_to] where the load current may change.

    Used by the engines to split integration segments exactly at load edges.
    """
    points = [t for t, _ in profile.segments if t_from < t <= t_to]
    p = profile.pulse
    if p is not None and 0.0 < p.duty < 1.0:
        # edges at phase + k*period (rising) and phase + (k+duty)*period (falling)
        k0 = math.floor((t_from - p.phase) / p.period) - 1
        k1 = math.ceil((t_to - p.phase) / p.period) + 1
        for k in range(k0, k1 + 1):
            for edge in (p.phase + k * p.period,
                         p.phase + (k + p.duty) * p.period):
                if t_from < edge <= t_to:
                    points.append(edge)
    points.sort()
    # collapse duplicates from coincident segment/pulse edges
    out = []
    for t in points:
        if not out or t > out[-1]:
            out.append(t)
    return out


@dataclass(frozen=True)
class OffsetModel:
    """Input-referred comparator offset vs clock frequency.

    The offset of a dynamic comparator grows with clock rate; the power-law
    form here is a configurable extrapolation hook, disabled by default, so
    plain runs see ideal comparators.
    """

    sigma0: float = 0.0
    f_knee: float = 1e9
    exponent: float = 1.0
    enabled: bool = False

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be non-negative")
        if self.f_knee <= 0:
            raise ValueError("f_knee must be positive")
        if self.exponent < 0:
            raise ValueError("exponent must be non-negative")

    def sigma_at(self, f_clk: float) -> float:
        """Offset standard deviation (V) at clock frequency f_clk."""
        if not self.enabled or self.sigma0 == 0.0:
            return 0.0
        return self.sigma0 * (1.0 + (f_clk / self.f_knee) ** self.exponent)


ZERO_OFFSET = OffsetModel()


def sample_offset(model: OffsetModel, f_clk: float,
                  rng: np.random.Generator) -> float:
    """Draw one zero-mean Gaussian offset sample for a comparison at f_clk.

    Disabled models return exactly 0 without consuming randomness, so runs
    with ideal comparators are reproducible independent of the offset hook.
    """
    if f_clk <= 0:
        raise ValueError("f_clk must be positive")
    sigma = model.sigma_at(f_clk)
    if sigma == 0.0:
        return 0.0
    return float(rng.normal(0.0, sigma))
