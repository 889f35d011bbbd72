"""Per-node proportional and reframing control laws.

Each node sees only the occupancies of its own incoming buffers, its local
offsets, and its own frequency offset q_i.  NodeView is that boundary: the
control law takes a view and nothing else, so there is no API path through
which a node could read another node's state or the global time.
"""

from dataclasses import dataclass, replace

import numpy as np

from .graph import IncidenceSet, Topology


class ReframeError(RuntimeError):
    """Raised on a second reframe; the reset happens exactly once."""


@dataclass(frozen=True)
class NodeView:
    """What one node's controller is allowed to observe."""

    node: int                     # 1-indexed
    in_edges: tuple               # 1-indexed edge ids, config order
    occupancies: np.ndarray       # measured beta for those edges
    offsets: np.ndarray           # beta_off for those edges
    q: float = 0.0


def node_views(topology: Topology, beta: np.ndarray, beta_off: np.ndarray,
               q: np.ndarray) -> list[NodeView]:
    """Partition a global occupancy vector into per-node views."""
    incoming: list[list[int]] = [[] for _ in range(topology.n)]
    for e, (_, dst) in enumerate(topology.edges):
        incoming[dst - 1].append(e)
    return [
        NodeView(node=i + 1,
                 in_edges=tuple(e + 1 for e in edges),
                 occupancies=np.array([beta[e] for e in edges]),
                 offsets=np.array([beta_off[e] for e in edges]),
                 q=float(q[i]))
        for i, edges in enumerate(incoming)
    ]


def proportional_correction(view: NodeView, k: float) -> float:
    """c_i = k * sum of relative occupancies on incoming links, plus q_i."""
    return k * float(np.sum(view.occupancies - view.offsets)) + view.q


@dataclass(frozen=True)
class NodeControllerState:
    node: int
    q: float = 0.0
    reframed: bool = False


def reframe(ctl: NodeControllerState, c_at_T1: float) -> NodeControllerState:
    """Freeze the node's emitted correction into its offset, exactly once.

    c_at_T1 is the locally computed correction the node was emitting at the
    reframe instant, so no cross-node information is needed.
    """
    if ctl.reframed:
        raise ReframeError(f"node {ctl.node} already reframed; the reset is one-shot")
    return replace(ctl, q=float(c_at_T1), reframed=True)


def auto_reframe_trigger(times: np.ndarray, corrections: np.ndarray,
                         epsilon: float, window: float) -> bool:
    """True once the correction has been stable over the trailing window.

    Stability means max over the window of ||c(t) - c(t_end)||_inf <= epsilon.
    Returns False while less than a full window of samples has elapsed.
    """
    if len(times) == 0 or times[-1] - times[0] < window:
        return False
    t_lo = times[-1] - window
    in_window = times >= t_lo - 1e-12
    dev = np.abs(corrections[in_window] - corrections[-1]).max()
    return bool(dev <= epsilon)


@dataclass(frozen=True)
class ReframeSchedule:
    """When the single reframe fires.

    fixed-time: at T1.  auto: at the first sample where the correction has
    been epsilon-stable for a full window.  Defaults follow the correction
    scale: epsilon = 1e-9 * ||omega_u||_inf, window = 10/(k * max in-degree).
    """

    mode: str = "auto"            # fixed-time | auto
    T1: float | None = None
    epsilon: float | None = None
    window: float | None = None

    def __post_init__(self):
        if self.mode not in ("fixed-time", "auto"):
            raise ValueError(f"unknown reframe mode {self.mode!r}")

    def resolved(self, params, inc: IncidenceSet,
                 default_T1: float | None = None) -> "ReframeSchedule":
        """Fill unset fields from the system scale."""
        T1 = self.T1
        if self.mode == "fixed-time" and T1 is None:
            T1 = default_T1
        eps = self.epsilon
        if eps is None:
            eps = 1e-9 * float(np.abs(params.omega_u).max())
        window = self.window
        if window is None:
            deg = max(inc.max_in_degree(), 1)
            window = 10.0 / (params.k * deg) if params.k > 0 else 10.0
        return ReframeSchedule(mode=self.mode, T1=T1, epsilon=eps, window=window)
