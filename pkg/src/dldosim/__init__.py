"""Behavioral simulator for digitally controlled LDO regulators.

Two control schemes (variable-shift and time-interleaved), an event-exact
single-node transient engine with ripple/settling/efficiency metrics, a
flip-chip pad + RC-grid power-delivery co-simulation, and a CLI sweep
harness.
"""

from .circuit import (ComparatorDecision, LoadProfile, OffsetModel,
                      PulseSpec, SwitchKind, SwitchModel, ZERO_OFFSET,
                      comparator_decide, load_at, sample_offset,
                      switch_current)
from .engine import (EfficiencyModel, Metrics, NotSettledError, Scheme,
                     SimConfig, Trace, calibrate_ecmp, compute_metrics,
                     current_efficiency, measure_ripple, measure_settling,
                     run, sweep)
from .interleave import (FreqBandMap, GateVector, InterleaveSpec,
                         divider_for, on_count, phase_times, retime_clock,
                         step_phase)
from .varshift import (ComparatorBankSpec, ThermoState, apply_shift,
                       count_above, junction_index, reference_ladder,
                       shift_amount, step_cycle)

__version__ = "0.1.0"
