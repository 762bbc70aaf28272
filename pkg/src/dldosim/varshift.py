"""Variable-shift (proportional step) DLDO controller.

A bank of 2*num_c + 1 clocked comparators with equally spaced references
straddling the regulation target drives a thermometer-coded array of pass
switches. Once per clock cycle the junction of the thermometer code moves
by a step proportional to how far the sampled output sits from the target,
capped at block_size switches per cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ComparatorBankSpec:
    """Static configuration of the comparator bank and switch array.

    num_c comparators sit on either side of the center reference, so the
    bank holds 2*num_c + 1 comparators total. block_size is the maximum
    number of switches toggled in one cycle; the minimum nonzero step is
    block_size/num_c (rounded).
    """

    num_c: int = 8
    v_center: float = 0.8
    v_gap: float = 0.005
    block_size: int = 8
    n_switches: int = 256
    clock_period: float = 1e-9

    def __post_init__(self):
        if self.num_c < 1:
            raise ValueError("num_c must be at least 1")
        if self.v_gap <= 0:
            raise ValueError("v_gap must be positive")
        if self.block_size < 1:
            raise ValueError("block_size must be at least 1")
        if self.n_switches < self.block_size:
            raise ValueError("n_switches must be >= block_size")
        if self.clock_period <= 0:
            raise ValueError("clock_period must be positive")

    @property
    def n_comparators(self) -> int:
        return 2 * self.num_c + 1


class ThermoState:
    """Gate vector of the switch array under the thermometer invariant.

    All ON gates (1) precede all OFF gates (0); the 1/0 boundary is the
    junction. Instances are treated as immutable snapshots.
    """

    __slots__ = ("gates",)

    def __init__(self, gates):
        self.gates = np.asarray(gates, dtype=np.uint8)
        if self.gates.ndim != 1:
            raise ValueError("gates must be a flat bit vector")

    @staticmethod
    def from_junction(junction: int, n_switches: int) -> "ThermoState":
        if not 0 <= junction <= n_switches:
            raise ValueError(f"junction {junction} outside [0, {n_switches}]")
        gates = np.zeros(n_switches, dtype=np.uint8)
        gates[:junction] = 1
        return ThermoState(gates)

    @property
    def n_switches(self) -> int:
        return self.gates.size

    def __eq__(self, other):
        return isinstance(other, ThermoState) and np.array_equal(
            self.gates, other.gates)

    def __repr__(self):
        return f"ThermoState(junction={junction_index(self)}/{self.n_switches})"


def reference_ladder(spec: ComparatorBankSpec) -> np.ndarray:
    """Ascending reference voltages v_center + k*v_gap, k in [-num_c, num_c]."""
    k = np.arange(-spec.num_c, spec.num_c + 1, dtype=float)
    return spec.v_center + k * spec.v_gap


def count_above(v_out: float, ladder: np.ndarray) -> int:
    """Number of ladder references strictly above v_out.

    These are exactly the comparators outputting LOW/ground for an ideal
    (zero offset) bank; the strict inequality mirrors the comparator
    tie-break, so a rung equal to v_out does not count.
    """
    return int(np.count_nonzero(np.asarray(ladder) > v_out))


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def shift_amount(spec: ComparatorBankSpec, v_out: float) -> int:
    """Signed switch count to toggle this cycle; positive turns switches ON.

    The imbalance d of the comparator bank (references above v_out minus
    the num_c that sit above at equilibrium) scales the maximum step:
    shift = round(block_size * d / num_c), so a fully deflected bank moves
    exactly block_size switches and one rung of deviation moves the
    minimum step block_size/num_c.
    """
    ladder = reference_ladder(spec)
    d = count_above(v_out, ladder) - spec.num_c
    d = max(-spec.num_c, min(spec.num_c, d))
    return _round_half_away(spec.block_size * d / spec.num_c)


def junction_index(state: ThermoState) -> int:
    """Number of leading ON gates; raises if the thermometer code is corrupt."""
    gates = state.gates
    n_on = int(np.count_nonzero(gates))
    if n_on and not gates[:n_on].all():
        raise ValueError("corrupted thermometer code: ON gates not contiguous")
    return n_on


def apply_shift(state: ThermoState, delta: int) -> ThermoState:
    """Shift the junction by delta switches, saturating at the array ends."""
    j = junction_index(state)
    nj = max(0, min(state.n_switches, j + delta))
    return ThermoState.from_junction(nj, state.n_switches)


def step_cycle(spec: ComparatorBankSpec, state: ThermoState,
               v_out_sampled: float) -> ThermoState:
    """One clock cycle of the controller: sample, compare, shift."""
    if state.n_switches != spec.n_switches:
        raise ValueError("state size does not match spec.n_switches")
    return apply_shift(state, shift_amount(spec, v_out_sampled))
