"""Flip-chip pad + on-chip RC grid co-simulation with multiple LDOs.

The regulated output net is an orthogonal resistor mesh at segment pitch;
each LDO injects into the mesh at its pad position through its switch
array, drawing from a local supply node fed by the pad's series R-L from
an ideal source (shunt C to ground). Loads are pulsed current sinks at
the LDO nodes.

Time stepping is implicit backward-difference at a fixed dt chosen so
every controller sub-phase lands exactly on a step boundary. The sparse
base matrix is factored once; the time-varying switch conductances enter
through a low-rank Woodbury correction (one rank per LDO), so no
refactorization ever happens mid-run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .circuit import LoadProfile, PulseSpec, SwitchKind, load_at
from .engine import Trace
from .interleave import FreqBandMap, InterleaveSpec, divider_for


@dataclass(frozen=True)
class PadModel:
    """Series R-L to an ideal supply plus shunt C, per flip-chip pad."""

    r_pad: float = 1.0
    l_pad: float = 1e-9
    c_pad: float = 5e-12
    v_supply: float = 1.0

    def __post_init__(self):
        if min(self.r_pad, self.l_pad, self.c_pad) < 0:
            raise ValueError("pad R, L, C must be non-negative")
        if self.v_supply <= 0:
            raise ValueError("v_supply must be positive")


@dataclass(frozen=True)
class GridSpec:
    """Geometry and electrical parameters of the power grid.

    The chip spans n_pads * cell_size per axis with pads centered in
    their cells (half-cell margin), so the mesh has
    n_pads * cell_size / segment_len + 1 nodes per axis. A degenerate
    single-node grid (no mesh) is expressed as n_pads 1x1 with
    cell_size = 0.
    """

    cell_size: float = 1e-3
    segment_len: float = 0.1e-3
    r_segment: float = 0.55
    n_pads_x: int = 3
    n_pads_y: int = 3
    c_lumped: float = 9e-9
    pad: PadModel = field(default_factory=PadModel)
    ldo_positions: Optional[Tuple[Tuple[int, int], ...]] = None  # pad (ix, iy)

    def __post_init__(self):
        if self.n_pads_x < 1 or self.n_pads_y < 1:
            raise ValueError("need at least one pad per axis")
        if self.c_lumped <= 0:
            raise ValueError("c_lumped must be positive")
        if self.cell_size == 0.0:
            if self.n_pads_x != 1 or self.n_pads_y != 1:
                raise ValueError("zero-size grid requires a single pad")
            return
        if self.cell_size < 0 or self.segment_len <= 0:
            raise ValueError("dimensions must be positive")
        if self.r_segment <= 0:
            raise ValueError("r_segment must be positive")
        ratio = self.cell_size / self.segment_len
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("segment_len must divide cell_size")
        if round(ratio) % 2:
            raise ValueError(
                "cell_size/segment_len must be even so pads land on nodes")

    @property
    def segments_per_cell(self) -> int:
        if self.cell_size == 0.0:
            return 0
        return int(round(self.cell_size / self.segment_len))

    @property
    def nodes_x(self) -> int:
        return self.n_pads_x * self.segments_per_cell + 1 \
            if self.cell_size else 1

    @property
    def nodes_y(self) -> int:
        return self.n_pads_y * self.segments_per_cell + 1 \
            if self.cell_size else 1

    def pad_node_index(self, pad_ix: int, pad_iy: int) -> int:
        """Row-major mesh index of the pad at pad coordinate (ix, iy)."""
        if not (0 <= pad_ix < self.n_pads_x and 0 <= pad_iy < self.n_pads_y):
            raise ValueError("pad coordinate out of range")
        if self.cell_size == 0.0:
            return 0
        s = self.segments_per_cell
        nx = s // 2 + pad_ix * s
        ny = s // 2 + pad_iy * s
        return ny * self.nodes_x + nx

    def all_pads(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((ix, iy) for iy in range(self.n_pads_y)
                     for ix in range(self.n_pads_x))


@dataclass
class GridState:
    """Transient solver state: node voltages, pad inductor currents, time."""

    node_voltages: np.ndarray
    inductor_currents: np.ndarray
    time: float = 0.0

    def copy(self) -> "GridState":
        return GridState(self.node_voltages.copy(),
                         self.inductor_currents.copy(), self.time)


@dataclass
class GridScenario:
    """Per-LDO controller configs and loads for one co-simulation run."""

    ldo_spec: InterleaveSpec
    band_map: Optional[FreqBandMap] = None
    loads: Dict[int, LoadProfile] = field(default_factory=dict)  # ldo idx
    observe_nodes: Optional[Sequence[int]] = None  # mesh indices
    i_ldo_max: float = 35e-3
    dt: Optional[float] = None
    v_init: Optional[float] = None  # defaults to v_ref

    def validate(self, n_ldos: int) -> None:
        for idx, profile in self.loads.items():
            if not 0 <= idx < n_ldos:
                raise ValueError(f"load index {idx} outside 0..{n_ldos-1}")
            peak = max(i for _, i in profile.segments)
            if profile.pulse is not None:
                peak += max(profile.pulse.i_high, profile.pulse.i_low)
            if peak > self.i_ldo_max * (1 + 1e-9):
                raise ValueError(
                    f"load at LDO {idx} peaks at {peak:.4g} A, above the "
                    f"configured per-LDO maximum {self.i_ldo_max:.4g} A")


class GridNetwork:
    """Assembled nodal system: mesh + pad branches + LDO supply nodes.

    Unknown ordering: the nx*ny mesh voltages row-major, then one supply
    node per LDO. With an ideal pad (R = L = 0) the supply node is
    eliminated and switches see the source directly.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        nx, ny = spec.nodes_x, spec.nodes_y
        self.n_mesh = nx * ny
        positions = spec.ldo_positions or spec.all_pads()
        self.ldo_mesh_nodes = [spec.pad_node_index(ix, iy)
                               for ix, iy in positions]
        self.n_ldos = len(self.ldo_mesh_nodes)
        pad = spec.pad
        self.ideal_pad = (pad.r_pad == 0.0 and pad.l_pad == 0.0)
        self.n_unknowns = self.n_mesh + (0 if self.ideal_pad else self.n_ldos)

        rows, cols, vals = [], [], []

        def stamp(a, b, g):
            rows.extend((a, a)); cols.extend((a, b)); vals.extend((g, -g))
            rows.extend((b, b)); cols.extend((b, a)); vals.extend((g, -g))

        def stamp_diag(a, g):
            rows.append(a); cols.append(a); vals.append(g)

        if spec.cell_size > 0.0:
            g_seg = 1.0 / spec.r_segment
            for iy in range(ny):
                for ix in range(nx):
                    n = iy * nx + ix
                    if ix + 1 < nx:
                        stamp(n, n + 1, g_seg)
                    if iy + 1 < ny:
                        stamp(n, n + nx, g_seg)
        self._resistive = sp.csr_matrix(
            (vals, (rows, cols)), shape=(self.n_unknowns, self.n_unknowns))

        self._cap_nodes = list(self.ldo_mesh_nodes)
        self._cap_values = [spec.c_lumped] * self.n_ldos
        if not self.ideal_pad:
            for k in range(self.n_ldos):
                if pad.c_pad > 0:
                    self._cap_nodes.append(self.n_mesh + k)
                    self._cap_values.append(pad.c_pad)

        self._factor_dt = None
        self._lu = None
        self._Z = None
        self._A = None

    def supply_index(self, k: int) -> int:
        """Unknown index of LDO k's supply node (ideal pads have none)."""
        if self.ideal_pad:
            raise ValueError("ideal pad: supply node eliminated")
        return self.n_mesh + k

    def audit(self) -> dict:
        return {
            "nodes_x": self.spec.nodes_x, "nodes_y": self.spec.nodes_y,
            "n_mesh_nodes": self.n_mesh, "n_ldos": self.n_ldos,
            "ldo_mesh_nodes": list(self.ldo_mesh_nodes),
            "n_unknowns": self.n_unknowns, "ideal_pad": self.ideal_pad,
        }

    # -- assembly --------------------------------------------------------

    def _assemble(self, dt: float):
        pad = self.spec.pad
        A = self._resistive.tolil(copy=True)
        for node, c in zip(self._cap_nodes, self._cap_values):
            A[node, node] += c / dt
        if not self.ideal_pad:
            g_b = 1.0 / (pad.r_pad + pad.l_pad / dt)
            for k in range(self.n_ldos):
                s = self.n_mesh + k
                A[s, s] += g_b
        A = A.tocsc()
        lu = spla.splu(A)
        # Woodbury basis: one +/- column per LDO switch branch
        U = np.zeros((self.n_unknowns, self.n_ldos))
        for k, mesh_node in enumerate(self.ldo_mesh_nodes):
            U[mesh_node, k] = 1.0
            if not self.ideal_pad:
                U[self.n_mesh + k, k] = -1.0
        Z = lu.solve(U)
        self._factor_dt = dt
        self._lu = lu
        self._Z = Z
        self._U = U
        self._A = A

    def _ensure_factor(self, dt: float):
        if self._factor_dt != dt:
            self._assemble(dt)

    def initial_state(self, v_mesh: float,
                      v_supply: Optional[float] = None) -> GridState:
        v = np.empty(self.n_unknowns)
        v[:self.n_mesh] = v_mesh
        if not self.ideal_pad:
            v[self.n_mesh:] = self.spec.pad.v_supply \
                if v_supply is None else v_supply
        return GridState(node_voltages=v,
                         inductor_currents=np.zeros(self.n_ldos), time=0.0)

    def dc_equilibrium(self) -> GridState:
        """All nodes at the pad supply voltage, no currents flowing."""
        return self.initial_state(self.spec.pad.v_supply)

    def transient_step(self, state: GridState, injections: np.ndarray,
                       dt: float,
                       switch_g: Optional[np.ndarray] = None,
                       switch_i: Optional[np.ndarray] = None,
                       residual_out: Optional[list] = None) -> GridState:
        """One backward-difference step of length dt.

        injections: current (A) injected into each unknown node (loads are
        negative entries at their mesh nodes). switch_g gives each LDO's
        ON conductance (triode stamps, handled via the Woodbury update);
        switch_i gives each LDO's forced source current (constant-current
        switches, pure injections from supply node to mesh node).
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        self._ensure_factor(dt)
        pad = self.spec.pad
        b = np.array(injections, dtype=float)
        if b.shape != (self.n_unknowns,):
            raise ValueError(f"injections must have shape ({self.n_unknowns},)")
        v_prev = state.node_voltages
        for node, c in zip(self._cap_nodes, self._cap_values):
            b[node] += (c / dt) * v_prev[node]
        if not self.ideal_pad:
            g_b = 1.0 / (pad.r_pad + pad.l_pad / dt)
            r_l = pad.l_pad / dt
            for k in range(self.n_ldos):
                s = self.n_mesh + k
                b[s] += g_b * (pad.v_supply
                               + r_l * state.inductor_currents[k])
        if switch_i is not None:
            for k, mesh_node in enumerate(self.ldo_mesh_nodes):
                i_k = switch_i[k]
                if i_k:
                    b[mesh_node] += i_k
                    if not self.ideal_pad:
                        b[self.n_mesh + k] -= i_k
        if switch_g is not None and self.ideal_pad:
            # switch conductance runs to the ideal source, not to ground
            for k, mesh_node in enumerate(self.ldo_mesh_nodes):
                if switch_g[k]:
                    b[mesh_node] += switch_g[k] * pad.v_supply

        y = self._lu.solve(b)
        if switch_g is not None and np.any(switch_g):
            d = np.asarray(switch_g, dtype=float)
            zd = self._Z * d  # column-scaled
            small = np.eye(self.n_ldos) + self._U.T @ zd
            x = y - zd @ np.linalg.solve(small, self._U.T @ y)
        else:
            d = None
            x = y

        if residual_out is not None:
            r = self._A @ x - b
            if d is not None:
                r += self._U @ (d * (self._U.T @ x))
            residual_out.append(float(np.abs(r).max()))

        new = GridState(node_voltages=x,
                        inductor_currents=state.inductor_currents.copy(),
                        time=state.time + dt)
        if not self.ideal_pad:
            g_b = 1.0 / (pad.r_pad + pad.l_pad / dt)
            r_l = pad.l_pad / dt
            for k in range(self.n_ldos):
                s = self.n_mesh + k
                v_eq = pad.v_supply + r_l * state.inductor_currents[k]
                new.inductor_currents[k] = g_b * (v_eq - x[s])
        return new


def build_network(spec: GridSpec) -> GridNetwork:
    """Assemble the nodal network for a grid spec (see GridNetwork)."""
    return GridNetwork(spec)


@dataclass
class GridRunResult:
    """Per-node traces plus solver diagnostics for one co-simulation."""

    traces: Dict[int, Trace]
    ldo_mesh_nodes: List[int]
    max_residual: float
    dt: float
    sample_dt: float


def _scenario_dt(scenario: GridScenario) -> float:
    if scenario.dt is not None:
        return scenario.dt
    spec = scenario.ldo_spec
    return spec.base_clock_period / (spec.n_comparators * 4)


def run_grid(grid_spec: GridSpec, scenario: GridScenario, t_end: float,
             sample_dt: Optional[float] = None) -> GridRunResult:
    """Co-simulate all LDOs against the grid; returns observed-node traces.

    Controller sub-phases land exactly on solver step boundaries (dt is a
    quarter sub-phase of the fastest clock by default). Each LDO samples
    its own output node at its phase instants and its divider is retimed
    at its own period boundaries from its local ON count. The regulated
    net starts at the reference voltage (soft-start complete); pad nodes
    start at the supply.
    """
    net = build_network(grid_spec)
    scenario.validate(net.n_ldos)
    spec = scenario.ldo_spec
    n = spec.n_comparators
    dt = _scenario_dt(scenario)
    base_steps = spec.base_clock_period / (n * dt)
    if abs(base_steps - round(base_steps)) > 1e-9 or round(base_steps) < 1:
        raise ValueError("dt must divide the base sub-phase duration")
    base_steps = int(round(base_steps))

    if sample_dt is None:
        sample_dt = 16 * dt
    sample_steps = int(round(sample_dt / dt))
    if abs(sample_steps * dt - sample_dt) > 1e-9 * sample_dt or sample_steps < 1:
        raise ValueError("sample_dt must be an integer multiple of dt")

    n_steps = int(round(t_end / dt))
    observe = list(scenario.observe_nodes) if scenario.observe_nodes \
        else list(net.ldo_mesh_nodes)
    for node in observe:
        if not 0 <= node < net.n_mesh:
            raise ValueError(f"observation node {node} outside mesh")

    v_init = scenario.v_init if scenario.v_init is not None else spec.v_ref
    state = net.initial_state(v_init)

    triode = spec.switch.kind is SwitchKind.TRIODE_CONDUCTANCE
    gates = np.zeros((net.n_ldos, n), dtype=np.int64)
    n_on = np.zeros(net.n_ldos, dtype=np.int64)
    dividers = np.ones(net.n_ldos, dtype=np.int64)
    if scenario.band_map is not None:
        dividers[:] = divider_for(scenario.band_map, 0)
    phase_period_steps = dividers * base_steps  # steps per sub-phase
    next_phase_step = np.zeros(net.n_ldos, dtype=np.int64)
    phase_idx = np.zeros(net.n_ldos, dtype=np.int64)

    loads = scenario.loads
    mesh_nodes = net.ldo_mesh_nodes
    injections = np.zeros(net.n_unknowns)
    switch_g = np.zeros(net.n_ldos)
    switch_i = np.zeros(net.n_ldos)
    residuals: list = []

    n_samples = n_steps // sample_steps + 1
    t_samples = np.arange(n_samples) * (sample_steps * dt)
    v_samples = {node: np.empty(n_samples) for node in observe}
    non_samples = np.empty((n_samples, net.n_ldos), dtype=np.int64)
    per_samples = np.empty((n_samples, net.n_ldos))
    i_samples = np.zeros((n_samples, net.n_ldos))
    sample_i = 0

    for step in range(n_steps + 1):
        t_now = step * dt
        # controller events due at this step boundary
        for k in range(net.n_ldos):
            if step == next_phase_step[k]:
                v_k = state.node_voltages[mesh_nodes[k]]
                gate = 1 if spec.v_ref > v_k else 0
                j = phase_idx[k]
                n_on[k] += gate - gates[k, j]
                gates[k, j] = gate
                phase_idx[k] = (j + 1) % n
                if phase_idx[k] == 0 and scenario.band_map is not None:
                    dividers[k] = divider_for(scenario.band_map, int(n_on[k]))
                    phase_period_steps[k] = dividers[k] * base_steps
                next_phase_step[k] = step + phase_period_steps[k]

        if step % sample_steps == 0 and sample_i < n_samples:
            for node in observe:
                v_samples[node][sample_i] = state.node_voltages[node]
            non_samples[sample_i] = n_on
            per_samples[sample_i] = dividers * spec.base_clock_period
            for k in range(net.n_ldos):
                if k in loads:
                    i_samples[sample_i, k] = load_at(loads[k], t_now)
            sample_i += 1

        if step == n_steps:
            break

        # BE step to t + dt; the step-midpoint load value is unambiguous
        # even when a pulse edge rounds onto a step boundary
        injections[:] = 0.0
        for k in range(net.n_ldos):
            if k in loads:
                injections[mesh_nodes[k]] -= load_at(loads[k],
                                                     t_now + 0.5 * dt)
        if triode:
            switch_g[:] = n_on * spec.switch.g_on
            state = net.transient_step(state, injections, dt,
                                       switch_g=switch_g,
                                       residual_out=residuals)
        else:
            switch_i[:] = n_on * spec.switch.i_on
            state = net.transient_step(state, injections, dt,
                                       switch_i=switch_i,
                                       residual_out=residuals)

    traces = {}
    ldo_of_node = {mesh_nodes[k]: k for k in range(net.n_ldos)}
    for node in observe:
        k = ldo_of_node.get(node)
        traces[node] = Trace(
            t=t_samples.copy(), v_out=v_samples[node],
            n_on=non_samples[:, k] if k is not None
            else np.zeros(n_samples, dtype=np.int64),
            i_load=i_samples[:, k] if k is not None else np.zeros(n_samples),
            period_eff=per_samples[:, k] if k is not None
            else np.full(n_samples, spec.base_clock_period),
            sample_dt=sample_steps * dt, c_load=grid_spec.c_lumped)
    return GridRunResult(traces=traces, ldo_mesh_nodes=list(mesh_nodes),
                         max_residual=max(residuals) if residuals else 0.0,
                         dt=dt, sample_dt=sample_steps * dt)


def node_spread(traces: Dict[int, Trace], window: float) -> float:
    """Largest instantaneous voltage spread across nodes in the window."""
    if not traces:
        raise ValueError("need at least one trace")
    any_trace = next(iter(traces.values()))
    t = any_trace.t
    t_from = t[-1] - window
    sel = t >= t_from - 1e-15 * max(1.0, abs(t_from))
    stack = np.vstack([tr.v_out[sel] for tr in traces.values()])
    if stack.shape[0] == 1:
        return 0.0
    return float((stack.max(axis=0) - stack.min(axis=0)).max())


def generate_skewed_loads(n_ldos: int, seed: int, i_max: float = 20e-3,
                          period_range: Tuple[float, float] = (100e-9, 400e-9),
                          duty_range: Tuple[float, float] = (0.2, 0.8),
                          i_low_max: float = 2e-3) -> Dict[int, LoadProfile]:
    """Seeded random pulse train per LDO: skewed levels, periods, phases."""
    rng = np.random.default_rng(seed)
    loads = {}
    for k in range(n_ldos):
        period = float(rng.uniform(*period_range))
        duty = float(rng.uniform(*duty_range))
        i_high = float(rng.uniform(0.3 * i_max, i_max))
        i_low = float(rng.uniform(0.0, i_low_max))
        phase = float(rng.uniform(0.0, period))
        loads[k] = LoadProfile(
            segments=((0.0, 0.0),),
            pulse=PulseSpec(period=period, duty=duty, i_high=i_high,
                            i_low=i_low, phase=phase))
    return loads
