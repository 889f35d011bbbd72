"""Continuous-time closed-loop integration.

Between controller mode switches the system is linear time-invariant, so the
default integrator advances the affine flow exactly through an augmented
matrix exponential.  Fixed-step rk4/euler are kept to mimic discrete
controller hardware; they carry an explicit stability bound on dt.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la

from .controller import ReframeSchedule, auto_reframe_trigger
from .graph import IncidenceSet, Topology, build_incidence, is_strongly_connected
from .spectral import ClosedLoopMatrix, build_closed_loop, metzler_eigenvector

PRE_REFRAME = "pre-reframe"
POST_REFRAME = "post-reframe"


@dataclass(frozen=True)
class SystemParams:
    """Full parameterization of the closed loop.

    beta_off is None while tagged feasible-at-start; init_state materializes
    it as B^T theta0 + lambda, which puts the residual r in range(A).
    """

    k: float
    omega_u: np.ndarray
    lam: np.ndarray
    beta_off: np.ndarray | None = None
    q: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "omega_u", np.asarray(self.omega_u, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        if self.beta_off is not None:
            object.__setattr__(self, "beta_off", np.asarray(self.beta_off, dtype=float))
        q = np.zeros_like(self.omega_u) if self.q is None else np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)
        # k == 0 is tolerated so the discrete mode can model a disabled
        # controller; the spectral layer insists on k > 0.
        if self.k < 0:
            raise ValueError(f"gain k must be nonnegative, got {self.k}")
        if np.any(self.omega_u <= 0):
            raise ValueError("uncontrolled frequencies must be positive (physical clocks)")
        if self.q.shape != self.omega_u.shape:
            raise ValueError("q and omega_u must have matching shapes")
        if self.beta_off is not None and self.beta_off.shape != self.lam.shape:
            raise ValueError("beta_off and lambda must have matching shapes")


def make_system_params(topology: Topology, k: float, omega_u,
                       lam=10.0, beta_off=None, q=0.0) -> SystemParams:
    """Broadcast scalars to the topology's node/edge counts."""
    n, m = topology.n, topology.m
    omega_u = np.broadcast_to(np.asarray(omega_u, dtype=float), (n,)).copy()
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (m,)).copy()
    if beta_off is not None:
        beta_off = np.broadcast_to(np.asarray(beta_off, dtype=float), (m,)).copy()
    q = np.broadcast_to(np.asarray(q, dtype=float), (n,)).copy()
    return SystemParams(k=k, omega_u=omega_u, lam=lam, beta_off=beta_off, q=q)


@dataclass(frozen=True)
class SimState:
    t: float
    theta: np.ndarray
    mode: str = PRE_REFRAME


@dataclass
class SimTrace:
    """Time-indexed record of the observable quantities.

    The reframe instant appears twice (same t, pre then post mode) so the
    correction discontinuity is visible in the trace.
    """

    times: np.ndarray
    theta: np.ndarray        # (T, n)
    omega: np.ndarray        # (T, n)
    correction: np.ndarray   # (T, n)
    occupancy: np.ndarray    # (T, m)
    mode: list = field(default_factory=list)
    reframe_time: float | None = None
    reframe_payload: np.ndarray | None = None

    def __len__(self):
        return len(self.times)

    def terminal(self):
        """(omega, correction, occupancy) at the final sample."""
        return self.omega[-1], self.correction[-1], self.occupancy[-1]


@dataclass(frozen=True)
class IntegratorSettings:
    method: str = "exact"              # exact | rk4 | euler
    dt: float | None = None            # substep for rk4/euler; defaults to the bound/8
    sample_interval: float | None = None
    horizon: float | None = None       # pre-reframe horizon; None = 50 e-folds
    post_horizon: float | None = None  # time simulated after the reframe; None = horizon


def init_state(inc: IncidenceSet, params: SystemParams,
               theta0) -> tuple[SimState, SystemParams]:
    """Materialize feasible offsets at t = 0 and build the initial state.

    Returns the state together with params whose beta_off is now explicit.
    """
    theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), (inc.n,)).copy()
    if params.beta_off is None:
        beta_off = inc.B.T @ theta0 + params.lam
        params = replace(params, beta_off=beta_off)
    elif np.any(params.beta_off < 0):
        warnings.warn("explicit beta_off has negative entries; physically suspect",
                      stacklevel=2)
    return SimState(t=0.0, theta=theta0, mode=PRE_REFRAME), params


def _drift(clm: ClosedLoopMatrix, params: SystemParams) -> np.ndarray:
    return params.omega_u + params.q + clm.r


def _apply_A(A: np.ndarray, theta: np.ndarray) -> np.ndarray:
    # A annihilates constants; removing the mean phase avoids catastrophic
    # cancellation once theta has grown to t * consensus frequency
    return A @ (theta - theta.mean())


def observe(state: SimState, params: SystemParams,
            clm: ClosedLoopMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(omega, correction, occupancy) at the current state."""
    centered = state.theta - state.theta.mean()
    c = _apply_A(clm.A, state.theta) + params.q + clm.r
    beta = clm.inc.B.T @ centered + params.lam
    return params.omega_u + c, c, beta


def stability_bound(inc: IncidenceSet, k: float) -> float:
    """Explicit-method dt limit 1 / (k * max in-degree)."""
    deg = inc.max_in_degree()
    return float("inf") if k * deg == 0 else 1.0 / (k * deg)


def exact_flow_operators(A: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(e^{A dt}, integral_0^dt e^{As} ds) via one augmented exponential."""
    n = A.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = A
    aug[:n, n:] = np.eye(n)
    E = la.expm(aug * dt)
    return E[:n, :n], E[:n, n:]


def step(state: SimState, params: SystemParams, clm: ClosedLoopMatrix,
         dt: float, method: str = "exact",
         _ops: tuple | None = None) -> SimState:
    """Advance theta by dt under theta' = A theta + omega_u + q + r."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    v = _drift(clm, params)
    theta = state.theta
    if method == "exact":
        phi, integ = _ops if _ops is not None else exact_flow_operators(clm.A, dt)
        new_theta = phi @ theta + integ @ v
    elif method in ("rk4", "euler"):
        bound = stability_bound(clm.inc, clm.k)
        if dt > bound:
            raise ValueError(
                f"dt = {dt} violates the explicit-method stability bound "
                f"1/(k * max in-degree) = {bound}")
        A = clm.A
        if method == "euler":
            new_theta = theta + dt * (_apply_A(A, theta) + v)
        else:
            k1 = _apply_A(A, theta) + v
            k2 = _apply_A(A, theta + 0.5 * dt * k1) + v
            k3 = _apply_A(A, theta + 0.5 * dt * k2) + v
            k4 = _apply_A(A, theta + dt * k3) + v
            new_theta = theta + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        raise ValueError(f"unknown integration method {method!r}")
    return SimState(t=state.t + dt, theta=new_theta, mode=state.mode)


class _Stepper:
    """Caches flow operators per dt; exact substeps equal the sample spacing."""

    def __init__(self, clm: ClosedLoopMatrix, method: str, dt: float | None):
        self.clm = clm
        self.method = method
        self.sub_dt = dt
        self._ops: dict[float, tuple] = {}

    def advance(self, state: SimState, params: SystemParams, span: float) -> SimState:
        if span <= 0:
            return state
        if self.method == "exact":
            ops = self._ops.get(span)
            if ops is None:
                ops = exact_flow_operators(self.clm.A, span)
                self._ops[span] = ops
            return step(state, params, self.clm, span, "exact", _ops=ops)
        sub = self.sub_dt or stability_bound(self.clm.inc, self.clm.k) / 8.0
        steps = max(1, int(np.ceil(span / sub - 1e-12)))
        h = span / steps
        for _ in range(steps):
            state = step(state, params, self.clm, h, self.method)
        return state


def run(topology: Topology, params: SystemParams, schedule: ReframeSchedule | None,
        settings: IntegratorSettings = IntegratorSettings(),
        theta0=0.0) -> SimTrace:
    """Simulate the configured scenario and sample the observables.

    schedule None runs the plain proportional controller for the whole
    horizon; otherwise exactly one reframe fires, either at the scheduled
    time or when the auto trigger sees a stable correction.
    """
    if not is_strongly_connected(topology):
        raise ValueError("topology is not strongly connected")
    inc = build_incidence(topology)
    state, params = init_state(inc, params, theta0)
    clm = build_closed_loop(inc, params)
    sd = metzler_eigenvector(clm)

    horizon = settings.horizon if settings.horizon is not None else sd.horizon()
    post_horizon = settings.post_horizon if settings.post_horizon is not None else horizon
    sample_dt = settings.sample_interval or horizon / 200.0

    if schedule is not None:
        schedule = schedule.resolved(params, inc, default_T1=horizon)
    reframe_at = schedule.T1 if schedule is not None and schedule.mode == "fixed-time" else None

    stepper = _Stepper(clm, settings.method, settings.dt)

    times, thetas, omegas, cs, betas, modes = [], [], [], [], [], []
    reframe_time = None
    reframe_payload = None

    def record(st: SimState):
        om, c, beta = observe(st, params, clm)
        times.append(st.t)
        thetas.append(st.theta.copy())
        omegas.append(om)
        cs.append(c)
        betas.append(beta)
        modes.append(st.mode)

    def do_reframe(st: SimState, record_pre: bool = True) -> SimState:
        nonlocal params, reframe_time, reframe_payload
        _, payload, _ = observe(st, params, clm)
        if record_pre:
            record(st)  # pre-mode row at the reframe instant
        params = replace(params, q=payload)
        reframe_time = st.t
        reframe_payload = payload
        post = SimState(t=st.t, theta=st.theta, mode=POST_REFRAME)
        record(post)
        return post

    record(state)
    reframed = False
    t_end = horizon + (post_horizon if schedule is not None else 0.0)
    while state.t < t_end - 1e-12:
        t_next = min(state.t + sample_dt, t_end)
        if not reframed and reframe_at is not None and reframe_at <= t_next + 1e-12:
            if reframe_at > state.t + 1e-12:
                state = stepper.advance(state, params, reframe_at - state.t)
            state = do_reframe(state)
            reframed = True
            t_end = state.t + post_horizon
            continue
        state = stepper.advance(state, params, t_next - state.t)
        record(state)
        if (not reframed and schedule is not None and schedule.mode == "auto"
                and auto_reframe_trigger(np.array(times), np.array(cs),
                                         schedule.epsilon, schedule.window)):
            # the pre-mode row at this instant was just recorded above
            state = do_reframe(state, record_pre=False)
            reframed = True
            t_end = state.t + post_horizon

    return SimTrace(
        times=np.array(times),
        theta=np.vstack(thetas),
        omega=np.vstack(omegas),
        correction=np.vstack(cs),
        occupancy=np.vstack(betas) if inc.m else np.empty((len(times), 0)),
        mode=modes,
        reframe_time=reframe_time,
        reframe_payload=reframe_payload,
    )


def run_staggered(topology: Topology, params: SystemParams, reframe_times,
                  settings: IntegratorSettings = IntegratorSettings(),
                  theta0=0.0) -> SimTrace:
    """Experimental variant: each node freezes its own correction at its own
    time.  Distributed nodes cannot share a common T1, so this reports what
    desynchronized resets do; no convergence guarantee is claimed or checked.
    """
    if not is_strongly_connected(topology):
        raise ValueError("topology is not strongly connected")
    inc = build_incidence(topology)
    state, params = init_state(inc, params, theta0)
    clm = build_closed_loop(inc, params)
    sd = metzler_eigenvector(clm)

    reframe_times = np.broadcast_to(np.asarray(reframe_times, dtype=float),
                                    (inc.n,)).copy()
    horizon = settings.horizon if settings.horizon is not None else sd.horizon()
    t_end = float(reframe_times.max()) + horizon
    sample_dt = settings.sample_interval or horizon / 200.0
    stepper = _Stepper(clm, settings.method, settings.dt)

    events = sorted({float(t) for t in reframe_times})
    times, thetas, omegas, cs, betas, modes = [], [], [], [], [], []
    done = np.zeros(inc.n, dtype=bool)

    def record(st: SimState):
        om, c, beta = observe(st, params, clm)
        times.append(st.t)
        thetas.append(st.theta.copy())
        omegas.append(om)
        cs.append(c)
        betas.append(beta)
        modes.append(st.mode)

    record(state)
    while state.t < t_end - 1e-12:
        t_next = min(state.t + sample_dt, t_end)
        if events and events[0] <= t_next + 1e-12:
            t_ev = events.pop(0)
            if t_ev > state.t + 1e-12:
                state = stepper.advance(state, params, t_ev - state.t)
            _, c_now, _ = observe(state, params, clm)
            record(state)
            firing = (~done) & (np.abs(reframe_times - t_ev) <= 1e-12)
            q = params.q.copy()
            q[firing] = c_now[firing]
            done |= firing
            params = replace(params, q=q)
            mode = POST_REFRAME if done.all() else f"staggered-{int(done.sum())}/{inc.n}"
            state = SimState(t=state.t, theta=state.theta, mode=mode)
            record(state)
            continue
        state = stepper.advance(state, params, t_next - state.t)
        record(state)

    return SimTrace(
        times=np.array(times),
        theta=np.vstack(thetas),
        omega=np.vstack(omegas),
        correction=np.vstack(cs),
        occupancy=np.vstack(betas) if inc.m else np.empty((len(times), 0)),
        mode=modes,
        reframe_time=float(reframe_times.max()),
        reframe_payload=None,
    )
