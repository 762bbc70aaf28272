"""Engine tests: exact integration, metrics, efficiency, sweeps, rails."""

import math

import numpy as np
import pytest

from dldosim.circuit import LoadProfile, PulseSpec, SwitchKind, SwitchModel
from dldosim.engine import (EfficiencyModel, Metrics, NotSettledError,
                            Scheme, SimConfig, Trace, calibrate_ecmp,
                            compute_metrics, current_efficiency,
                            measure_ripple, measure_settling, run, sweep)
from dldosim.interleave import InterleaveSpec
from dldosim.varshift import ComparatorBankSpec

from oracles import analytic_rc_response


def interleave_spec(n=8, period=4e-9, g_on=55e-3, kind="triode", i_on=7e-3):
    if kind == "triode":
        sw = SwitchModel(kind=SwitchKind.TRIODE_CONDUCTANCE, g_on=g_on,
                         vdd=1.0)
    else:
        sw = SwitchModel(kind=SwitchKind.CONSTANT_CURRENT, i_on=i_on, vdd=1.0)
    return InterleaveSpec(n_comparators=n, v_ref=0.9,
                          base_clock_period=period, switch=sw)


def synthetic_trace(t, v, sample_dt, period=1e-9):
    n = np.zeros(t.size, dtype=np.int64)
    return Trace(t=t, v_out=v, n_on=n, i_load=np.full(t.size, 1e-3),
                 period_eff=np.full(t.size, period), sample_dt=sample_dt)


class TestForcedRunMatchesAnalyticRC:
    def test_triode_forced_on_exponential(self):
        spec = interleave_spec()
        sim = SimConfig(vdd=1.0, c_load=9e-9, t_end=2e-6,
                        scheme=Scheme.INTERLEAVED, sample_dt=0.25e-9)
        trace = run(sim, spec, LoadProfile.constant(10e-3), forced_n_on=8)
        ref = analytic_rc_response(trace.t, 0.0, 8 * 55e-3, 1.0, 10e-3, 9e-9)
        assert np.abs(trace.v_out - ref).max() < 10e-6

    def test_constant_current_forced_ramp(self):
        spec = interleave_spec(kind="cc", i_on=2e-3)
        sim = SimConfig(vdd=1.0, c_load=9e-9, t_end=0.2e-6,
                        scheme=Scheme.INTERLEAVED, sample_dt=0.25e-9)
        trace = run(sim, spec, LoadProfile.constant(6e-3), forced_n_on=8)
        ref = np.minimum(1.0, (8 * 2e-3 - 6e-3) * trace.t / 9e-9)
        assert np.abs(trace.v_out - ref).max() < 1e-12


class TestZeroLoadRun:
    def test_rises_to_band_and_holds(self):
        spec = interleave_spec()
        sim = SimConfig(vdd=1.0, c_load=9e-9, t_end=2e-6,
                        scheme=Scheme.INTERLEAVED)
        trace = run(sim, spec, LoadProfile.constant(0.0))
        tail = trace.v_out[trace.t > 1e-6]
        assert np.all(tail <= 1.0)
        assert np.all(np.abs(tail - 0.9) < 0.01 * 0.9)


class TestConservationAndBounds:
    @pytest.mark.parametrize("i_load", [0.0, 5e-3, 20e-3])
    def test_residual_small_and_v_in_range(self, i_load):
        spec = interleave_spec(period=2e-9)
        sim = SimConfig(vdd=1.0, c_load=9e-9, t_end=2e-6,
                        scheme=Scheme.INTERLEAVED)
        trace = run(sim, spec, LoadProfile.constant(i_load))
        assert trace.conservation_residual() < 1e-6
        assert trace.v_out.min() >= 0.0
        assert trace.v_out.max() <= 1.0 + 1e-12

    def test_ground_rail_curtailment_conserves_charge(self):
        # load exceeds what one switch supplies: node pins at ground
        spec = interleave_spec(n=2, period=2e-9, g_on=5e-3)
        sim = SimConfig(vdd=1.0, c_load=1e-9, t_end=0.5e-6,
                        scheme=Scheme.INTERLEAVED)
        trace = run(sim, spec, LoadProfile.constant(30e-3))
        assert trace.conservation_residual() < 1e-6
        assert trace.v_out.min() >= 0.0

    def test_supply_rail_clamp_constant_current(self):
        spec = interleave_spec(kind="cc", i_on=5e-3)
        sim = SimConfig(vdd=1.0, c_load=1e-9, t_end=1e-6,
                        scheme=Scheme.INTERLEAVED)
        trace = run(sim, spec, LoadProfile.constant(0.0), forced_n_on=8)
        assert trace.v_out.max() <= 1.0
        assert trace.conservation_residual() < 1e-6


class TestDeterminism:
    def test_identical_config_bit_identical_trace(self):
        spec = interleave_spec(period=2e-9)
        sim = SimConfig(vdd=1.0, c_load=9e-9, t_end=1e-6, seed=42,
                        scheme=Scheme.INTERLEAVED)
        load = LoadProfile(pulse=PulseSpec(period=100e-9, duty=0.5,
                                           i_high=20e-3, i_low=4e-3))
        t1 = run(sim, spec, load)
        t2 = run(sim, spec, load)
        assert np.array_equal(t1.v_out, t2.v_out)
        assert np.array_equal(t1.n_on, t2.n_on)
        assert t1.q_supplied == t2.q_supplied


class TestMeasureSettling:
    def test_synthetic_exponential_inversion(self):
        # v(t) = vt*(1 - exp(-t/tau)) enters a 1% band at tau*ln(100)
        tau, vt, sample_dt = 100e-9, 0.8, 0.5e-9
        t = np.arange(0, 2e-6, sample_dt)
        v = vt * (1 - np.exp(-t / tau))
        trace = synthetic_trace(t, v, sample_dt)
        got = measure_settling(trace, vt, 0.01 * vt, 50e-9)
        assert abs(got - tau * math.log(100)) <= sample_dt + 1e-15

    def test_starting_inside_band_gives_zero(self):
        sample_dt = 1e-9
        t = np.arange(0, 1e-6, sample_dt)
        trace = synthetic_trace(t, np.full(t.size, 0.8), sample_dt)
        assert measure_settling(trace, 0.8, 8e-3, 50e-9) == 0.0

    def test_never_settles_raises_with_tail(self):
        sample_dt = 1e-9
        t = np.arange(0, 1e-6, sample_dt)
        v = 0.8 + 0.05 * np.sin(2 * np.pi * t / 200e-9)
        trace = synthetic_trace(t, v, sample_dt)
        with pytest.raises(NotSettledError) as err:
            measure_settling(trace, 0.8, 8e-3, 50e-9)
        assert err.value.tail_ripple > 0


class TestMeasureRipple:
    def test_sinusoid_peak_to_peak(self):
        sample_dt = 0.1e-9
        t = np.arange(0, 1e-6, sample_dt)
        v = 0.8 + 1e-3 * np.sin(2 * np.pi * t / 50e-9)
        trace = synthetic_trace(t, v, sample_dt)
        assert measure_ripple(trace, 0.5e-6) == pytest.approx(2e-3, rel=1e-3)

    def test_constant_trace_zero(self):
        sample_dt = 1e-9
        t = np.arange(0, 1e-6, sample_dt)
        trace = synthetic_trace(t, np.full(t.size, 0.8), sample_dt)
        assert measure_ripple(trace, 0.5e-6) == 0.0

    def test_window_longer_than_trace_rejected(self):
        sample_dt = 1e-9
        t = np.arange(0, 1e-7, sample_dt)
        trace = synthetic_trace(t, np.full(t.size, 0.8), sample_dt)
        with pytest.raises(ValueError):
            measure_ripple(trace, 1e-6)


class TestEfficiency:
    def test_free_control_is_unity(self):
        sample_dt = 1e-9
        t = np.arange(0, 1e-6, sample_dt)
        trace = synthetic_trace(t, np.full(t.size, 0.9), sample_dt)
        sim = SimConfig(scheme=Scheme.INTERLEAVED)
        assert current_efficiency(trace, sim, 8) == 1.0

    def test_zero_load_rejected(self):
        sample_dt = 1e-9
        t = np.arange(0, 1e-6, sample_dt)
        trace = synthetic_trace(t, np.full(t.size, 0.9), sample_dt)
        trace.i_load[:] = 0.0
        sim = SimConfig(scheme=Scheme.INTERLEAVED)
        with pytest.raises(ValueError):
            current_efficiency(trace, sim, 8)

    def test_calibration_anchor_value(self):
        # 96.9% at 10 mA / 250 MHz / 8 comparators / 0.7 V -> ~112 fJ
        e = calibrate_ecmp(0.969, 10e-3, 250e6, 8, 0.7)
        assert e == pytest.approx(112e-15, rel=0.01)

    def test_calibration_limits(self):
        assert calibrate_ecmp(0.999999, 10e-3, 250e6, 8, 0.7) < 1e-17
        e1 = calibrate_ecmp(0.95, 10e-3, 250e6, 8, 0.7)
        e2 = calibrate_ecmp(0.95, 10e-3, 250e6, 16, 0.7)
        assert e2 == pytest.approx(e1 / 2)
        with pytest.raises(ValueError):
            calibrate_ecmp(1.0, 10e-3, 250e6, 8, 0.7)

    def test_rate_term_scales_with_frequency(self):
        sample_dt = 1e-9
        t = np.arange(0, 1e-6, sample_dt)
        e_cmp = calibrate_ecmp(0.969, 10e-3, 250e6, 8, 1.0)
        sim = SimConfig(vdd=1.0, scheme=Scheme.INTERLEAVED,
                        efficiency=EfficiencyModel(e_cmp=e_cmp))
        tr = synthetic_trace(t, np.full(t.size, 0.9), sample_dt, period=4e-9)
        tr.i_load[:] = 10e-3
        assert current_efficiency(tr, sim, 8) == pytest.approx(0.969,
                                                               abs=1e-6)
        tr2 = synthetic_trace(t, np.full(t.size, 0.9), sample_dt,
                              period=2e-9)
        tr2.i_load[:] = 20e-3
        # doubled load at doubled rate keeps the efficiency fixed
        assert current_efficiency(tr2, sim, 8) == pytest.approx(0.969,
                                                                abs=1e-6)


class TestRunValidation:
    def test_scheme_controller_mismatch(self):
        sim = SimConfig(scheme=Scheme.INTERLEAVED)
        with pytest.raises(ValueError):
            run(sim, ComparatorBankSpec(), LoadProfile.constant(1e-3))

    def test_varshift_needs_switch(self):
        sim = SimConfig(scheme=Scheme.VAR_SHIFT, switch=None)
        with pytest.raises(ValueError):
            run(sim, ComparatorBankSpec(), LoadProfile.constant(1e-3))

    def test_zero_duration_rejected(self):
        with pytest.raises(ValueError):
            SimConfig(t_end=0.0)

    def test_band_map_size_mismatch(self):
        from dldosim.interleave import FreqBandMap
        sim = SimConfig(scheme=Scheme.INTERLEAVED)
        with pytest.raises(ValueError):
            run(sim, interleave_spec(n=8), LoadProfile.constant(1e-3),
                band_map=FreqBandMap.identity(4))


class TestSweep:
    def test_rows_in_input_order_with_flagging(self):
        # the smallest conductance cannot lift the output into the band
        spec = interleave_spec(n=8, period=1e-9)
        sim = SimConfig(vdd=1.0, c_load=3e-9, t_end=2e-6,
                        scheme=Scheme.INTERLEAVED)
        values = [0.5e-3, 55e-3, 30e-3]
        rows = sweep(sim, spec, LoadProfile.constant(10e-3), "g_on", values)
        assert [r.value for r in rows] == values
        assert not rows[0].settled and rows[0].metrics is None
        assert rows[1].settled and rows[2].settled

    def test_unknown_parameter_rejected(self):
        sim = SimConfig(scheme=Scheme.INTERLEAVED)
        with pytest.raises(ValueError):
            sweep(sim, interleave_spec(), LoadProfile.constant(1e-3),
                  "bogus", [1.0])

    def test_empty_values_rejected(self):
        sim = SimConfig(scheme=Scheme.INTERLEAVED)
        with pytest.raises(ValueError):
            sweep(sim, interleave_spec(), LoadProfile.constant(1e-3),
                  "g_on", [])
