"""Frame-accurate discrete mode.

The physics stays continuous underneath (phases advance at omega), but the
controller only ever sees integer frame counters: a buffer's occupancy is the
difference of its write and read pointers, which track whole frames.  Each
node re-evaluates its control law only when its own clock crosses a control
period boundary, and holds the correction in between.

Before the reframe the buffers are virtual (counters may range freely, since
boot-time frames carry no data); after it they are physical and any occupancy
outside [0, capacity] is a detected fault, never a silent wrap.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import ReframeSchedule, auto_reframe_trigger, node_views, \
    proportional_correction
from .dynamics import SystemParams
from .graph import Topology, build_incidence, is_strongly_connected


@dataclass(frozen=True)
class Fault:
    edge: int          # 1-indexed, config order
    t: float
    direction: str     # "overflow" | "underflow"
    occupancy: int


class OverflowFault(RuntimeError):
    """A physical buffer left [0, capacity]."""

    def __init__(self, fault: Fault):
        self.fault = fault
        super().__init__(
            f"edge {fault.edge} {fault.direction} at t = {fault.t:.6g} "
            f"(occupancy {fault.occupancy})")


@dataclass(frozen=True)
class ElasticBuffer:
    edge: int
    write_count: int
    read_count: int
    capacity: int
    virtual: bool

    @property
    def occupancy(self) -> int:
        return self.write_count - self.read_count


@dataclass(frozen=True)
class DiscreteScenario:
    """Discrete-mode configuration; k = 0 models a disabled controller."""

    topology: Topology
    params: SystemParams
    theta0: np.ndarray
    capacity: int
    control_period: float = 1.0    # local clock cycles between controller updates
    quantization: int = 1          # measurement granularity in frames
    dt: float | None = None        # None: 1 / (4 max omega)
    horizon: float = 100.0
    reframe: ReframeSchedule | None = None
    continue_on_fault: bool = False

    def __post_init__(self):
        if self.control_period < 1.0:
            raise ValueError("control period must be at least one clock cycle")
        if self.capacity < 1:
            raise ValueError("capacity must be a positive frame count")
        if self.quantization < 1:
            raise ValueError("quantization unit must be at least one frame")

    def step_size(self) -> float:
        bound = 1.0 / (4.0 * float(self.params.omega_u.max()))
        if self.dt is None:
            return bound
        if self.dt > bound:
            raise ValueError(
                f"dt = {self.dt} too coarse for frame counting; need dt <= "
                f"1/(4 max omega) = {bound}")
        return self.dt


@dataclass
class DiscreteState:
    t: float
    theta: np.ndarray
    correction: np.ndarray     # held per-node corrections (zero-order hold)
    next_fire: np.ndarray      # local phase of each node's next controller update
    write: np.ndarray          # int64 frame counters per edge
    read: np.ndarray
    virtual: bool
    faults: list = field(default_factory=list)

    def occupancy(self) -> np.ndarray:
        return self.write - self.read

    def buffers(self, capacity: int) -> list:
        return [ElasticBuffer(edge=e + 1, write_count=int(self.write[e]),
                              read_count=int(self.read[e]), capacity=capacity,
                              virtual=self.virtual)
                for e in range(len(self.write))]


@dataclass
class DiscreteTrace:
    times: np.ndarray
    omega: np.ndarray
    correction: np.ndarray
    occupancy: np.ndarray      # measured integer occupancies
    mode: list
    faults: list
    reframe_time: float | None = None
    aborted: bool = False


def _materialize(scenario: DiscreteScenario):
    inc = build_incidence(scenario.topology)
    theta0 = np.broadcast_to(np.asarray(scenario.theta0, dtype=float),
                             (inc.n,)).copy()
    params = scenario.params
    if params.beta_off is None:
        params = replace(params, beta_off=inc.B.T @ theta0 + params.lam)
    return inc, params, theta0


def _counters(inc, params, theta):
    # the write pointer leads the read pointer by the frames in flight on the
    # link, so occupancy = floor(theta_src + lambda) - floor(theta_dst)
    src = inc.S.argmax(axis=0)
    dst = inc.D.argmax(axis=0)
    write = np.floor(theta[src] + params.lam).astype(np.int64)
    read = np.floor(theta[dst]).astype(np.int64)
    return write, read


def _quantize(occ: np.ndarray, unit: int) -> np.ndarray:
    return unit * np.floor_divide(occ, unit)


def _fire_controllers(state: DiscreteState, scenario: DiscreteScenario,
                      inc, params, which: np.ndarray):
    occ_meas = _quantize(state.occupancy(), scenario.quantization).astype(float)
    views = node_views(scenario.topology, occ_meas, params.beta_off, params.q)
    for i in np.flatnonzero(which):
        state.correction[i] = proportional_correction(views[i], params.k)


def init_discrete(scenario: DiscreteScenario) -> DiscreteState:
    inc, params, theta0 = _materialize(scenario)
    write, read = _counters(inc, params, theta0)
    state = DiscreteState(t=0.0, theta=theta0,
                          correction=np.zeros(inc.n),
                          next_fire=theta0 + scenario.control_period,
                          write=write, read=read, virtual=True)
    _fire_controllers(state, scenario, inc, params, np.ones(inc.n, dtype=bool))
    return state


def discrete_step(state: DiscreteState, scenario: DiscreteScenario,
                  inc, params, dt: float) -> DiscreteState:
    """Advance one step: phases move at the held frequency, counters follow,
    bounds are policed in physical mode, controllers fire on their own clocks."""
    omega = params.omega_u + state.correction
    new_theta = state.theta + omega * dt
    t = state.t + dt
    write, read = _counters(inc, params, new_theta)

    # no frame is created or lost: pointers only advance, in lockstep with
    # whole cycles of the source and destination clocks
    assert (write >= state.write).all() and (read >= state.read).all()
    src = inc.S.argmax(axis=0)
    emitted = write - np.floor(params.lam + scenario.theta0[src]).astype(np.int64)
    source_cycles = np.floor(new_theta[src]).astype(np.int64) - \
        np.floor(scenario.theta0[src]).astype(np.int64)
    assert np.abs(emitted - source_cycles).max() <= 1

    state = DiscreteState(t=t, theta=new_theta, correction=state.correction.copy(),
                          next_fire=state.next_fire.copy(), write=write, read=read,
                          virtual=state.virtual, faults=state.faults)
    if not state.virtual:
        occ = state.occupancy()
        for e in np.flatnonzero((occ < 0) | (occ > scenario.capacity)):
            fault = Fault(edge=int(e) + 1, t=t,
                          direction="underflow" if occ[e] < 0 else "overflow",
                          occupancy=int(occ[e]))
            state.faults.append(fault)
            if not scenario.continue_on_fault:
                raise OverflowFault(fault)

    due = state.theta >= state.next_fire - 1e-12
    if due.any():
        _fire_controllers(state, scenario, inc, params, due)
        while True:
            pending = state.theta >= state.next_fire - 1e-12
            if not pending.any():
                break
            state.next_fire[pending] += scenario.control_period
    return state


def run_discrete(scenario: DiscreteScenario) -> DiscreteTrace:
    """Run the discrete scenario; a bound violation stops the run (and is
    reported) unless continue_on_fault is set."""
    if not is_strongly_connected(scenario.topology):
        raise ValueError("topology is not strongly connected")
    inc, params, theta0 = _materialize(scenario)
    scenario = replace(scenario, params=params, theta0=theta0)
    _capacity_advisory(scenario, inc, params)

    dt = scenario.step_size()
    schedule = scenario.reframe
    if schedule is not None:
        schedule = schedule.resolved(params, inc, default_T1=scenario.horizon / 2.0)
    reframed = schedule is None
    horizon = scenario.horizon

    state = init_discrete(scenario)
    times, omegas, cs, occs, modes = [], [], [], [], []
    faults: list = state.faults
    reframe_time = None
    aborted = False

    def record(st: DiscreteState):
        times.append(st.t)
        cs.append(st.correction.copy())
        omegas.append(params.omega_u + st.correction)
        occs.append(_quantize(st.occupancy(), scenario.quantization).astype(float))
        modes.append("pre-reframe" if st.virtual else "post-reframe")

    record(state)
    steps = int(math.ceil(horizon / dt - 1e-9))
    for _ in range(steps):
        try:
            state = discrete_step(state, scenario, inc, params, dt)
        except OverflowFault:
            # the fault is already in the shared fault list; the last good
            # sample stays the final trace row
            aborted = True
            break
        if not reframed:
            fire = (schedule.mode == "fixed-time" and state.t >= schedule.T1 - 1e-12)
            if schedule.mode == "auto" and len(times) > 2:
                fire = auto_reframe_trigger(np.array(times), np.array(cs),
                                            schedule.epsilon, schedule.window)
            if fire:
                record(state)  # pre-mode row at the reframe instant
                params = replace(params, q=state.correction.copy())
                state.virtual = False
                _fire_controllers(state, scenario, inc, params,
                                  np.ones(inc.n, dtype=bool))
                reframe_time = state.t
                reframed = True
        record(state)

    return DiscreteTrace(times=np.array(times), omega=np.vstack(omegas),
                         correction=np.vstack(cs), occupancy=np.vstack(occs),
                         mode=modes, faults=list(faults),
                         reframe_time=reframe_time, aborted=aborted)


def _capacity_advisory(scenario: DiscreteScenario, inc, params):
    if params.k <= 0:
        return
    from .spectral import build_closed_loop, metzler_eigenvector, predict_beta_ss

    try:
        clm = build_closed_loop(inc, params)
        sd = metzler_eigenvector(clm)
        swing = float(np.abs(predict_beta_ss(sd, clm, params) - params.beta_off).max())
    except Exception:
        return
    if scenario.capacity < 2.0 * swing:
        warnings.warn(
            f"capacity {scenario.capacity} is below twice the predicted "
            f"occupancy swing {swing:.3g}; overflow likely", stacklevel=3)


def fault_report(trace: DiscreteTrace) -> list:
    """First fault per affected edge, ordered by time then edge.

    Empty exactly when the run respected the physical bounds (virtual-mode
    samples are never policed)."""
    first: dict[int, Fault] = {}
    for f in sorted(trace.faults, key=lambda f: (f.t, f.edge)):
        first.setdefault(f.edge, f)
    return sorted(first.values(), key=lambda f: (f.t, f.edge))
