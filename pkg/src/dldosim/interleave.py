"""Time-interleaved DLDO controller with load-dependent clock scaling.

N comparators share a single reference voltage and fire one at a time at N
equal sub-phases of the clock period; each drives its own pass switch, so
the supply current updates N times per period. The number of ON switches
is a proxy for load current and selects a clock divider through a band
map, slowing the clock at light load to save comparator power.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from .circuit import ComparatorDecision, SwitchModel, comparator_decide


@dataclass(frozen=True)
class InterleaveSpec:
    """Static configuration: N comparators/switches, shared v_ref, base clock."""

    n_comparators: int = 8
    v_ref: float = 0.9
    base_clock_period: float = 1e-9
    switch: SwitchModel = field(default_factory=SwitchModel)

    def __post_init__(self):
        if self.n_comparators < 1:
            raise ValueError("n_comparators must be at least 1")
        if self.base_clock_period <= 0:
            raise ValueError("base_clock_period must be positive")


class GateVector:
    """ON/OFF state of the N switches; unordered, one gate per comparator."""

    __slots__ = ("gates",)

    def __init__(self, gates):
        self.gates = np.asarray(gates, dtype=np.uint8)
        if self.gates.ndim != 1:
            raise ValueError("gates must be a flat bit vector")

    @staticmethod
    def all_off(n: int) -> "GateVector":
        return GateVector(np.zeros(n, dtype=np.uint8))

    def __len__(self):
        return self.gates.size

    def __eq__(self, other):
        return isinstance(other, GateVector) and np.array_equal(
            self.gates, other.gates)

    def __repr__(self):
        return f"GateVector({''.join(str(int(g)) for g in self.gates)})"


class FreqBandMap:
    """Maps the ON-switch count to a clock divider.

    The bands must jointly cover every count 0..n_comparators exactly once;
    coverage is validated here so divider lookups can never fail mid-run.
    """

    def __init__(self, bands: Sequence[Tuple[Sequence[int], int]],
                 n_comparators: int):
        table = np.zeros(n_comparators + 1, dtype=np.int64)
        seen = set()
        for counts, divider in bands:
            divider = int(divider)
            if divider < 1:
                raise ValueError(f"divider must be >= 1, got {divider}")
            for c in counts:
                c = int(c)
                if not 0 <= c <= n_comparators:
                    raise ValueError(
                        f"count {c} outside 0..{n_comparators}")
                if c in seen:
                    raise ValueError(f"count {c} covered by two bands")
                seen.add(c)
                table[c] = divider
        missing = set(range(n_comparators + 1)) - seen
        if missing:
            raise ValueError(f"band map leaves counts uncovered: {sorted(missing)}")
        self.n_comparators = n_comparators
        self.bands = tuple((tuple(sorted(int(c) for c in counts)), int(div))
                           for counts, div in bands)
        self._table = table

    @staticmethod
    def identity(n_comparators: int) -> "FreqBandMap":
        """Trivial map: full-speed clock at every load level."""
        return FreqBandMap([(range(n_comparators + 1), 1)], n_comparators)

    def __repr__(self):
        return f"FreqBandMap({list(self.bands)})"


def phase_times(spec: InterleaveSpec, divider: int = 1) -> np.ndarray:
    """Comparator firing offsets k*T/N within one effective period T."""
    if divider < 1:
        raise ValueError("divider must be >= 1")
    t_eff = spec.base_clock_period * divider
    n = spec.n_comparators
    return np.arange(n) * (t_eff / n)


def step_phase(spec: InterleaveSpec, gates: GateVector, phase_index: int,
               v_out_sampled: float, offset_sample: float = 0.0) -> GateVector:
    """Fire comparator phase_index: its gate goes ON iff v_out is below v_ref.

    Only the firing comparator's gate changes; the other N-1 hold their
    previous decisions until their own sub-phase comes around.
    """
    if not 0 <= phase_index < spec.n_comparators:
        raise ValueError(f"phase_index {phase_index} outside 0..N-1")
    decision = comparator_decide(v_out_sampled, spec.v_ref, offset_sample)
    new = gates.gates.copy()
    new[phase_index] = 1 if decision is ComparatorDecision.LOW else 0
    return GateVector(new)


def on_count(gates: GateVector) -> int:
    """Number of ON switches, the controller's load-current proxy."""
    return int(np.count_nonzero(gates.gates))


def divider_for(band_map: FreqBandMap, n_on: int) -> int:
    """Clock divider for the band containing n_on."""
    if not 0 <= n_on <= band_map.n_comparators:
        raise ValueError(f"n_on {n_on} outside 0..{band_map.n_comparators}")
    return int(band_map._table[n_on])


def retime_clock(current_time: float, band_map: FreqBandMap, n_on: int,
                 spec: InterleaveSpec) -> float:
    """Effective clock period for the period starting after current_time.

    Evaluated once per completed period from the gate state at the
    boundary; the engine applies the new period only from the next
    boundary on, never mid-period.
    """
    return spec.base_clock_period * divider_for(band_map, n_on)
