"""Scenario configuration: JSON parsing, strict validation, defaults.

The config file is the single input contract: everything a run needs is in
it (no environment variables), and the edge list order in the file defines
the canonical edge indices used by every trace column and report entry.
Parsed configs are plain-data dataclasses, so an emitted config re-parses to
an equal object.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .controller import ReframeSchedule
from .dynamics import IntegratorSettings, SystemParams, make_system_params
from .framesim import DiscreteScenario
from .graph import (TOPOLOGY_KINDS, Topology, TopologyError, generate_topology,
                    is_strongly_connected)

FEASIBLE = "feasible"


class ConfigError(ValueError):
    """Configuration rejected; the message carries the offending key path."""


@dataclass(frozen=True)
class ReframeSpec:
    mode: str = "auto"               # fixed-time | auto
    T1: float | None = None
    epsilon: float | None = None
    window: float | None = None


@dataclass(frozen=True)
class IntegratorSpec:
    method: str = "exact"            # exact | rk4 | euler
    dt: float | None = None
    sample_interval: float | None = None
    horizon: float | None = None
    post_horizon: float | None = None


@dataclass(frozen=True)
class DiscreteSpec:
    enabled: bool = False
    control_period: float = 1.0
    quantization: int = 1
    capacity: int = 20
    continue_on_fault: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    k: float
    omega_u: tuple
    topology_kind: str | None = None     # None means explicit edges
    edges: tuple | None = None
    topology_seed: int = 0
    extra_edge_fraction: float = 0.0
    lam: tuple = ()
    beta_off: object = FEASIBLE          # "feasible" or per-edge tuple
    q: tuple = ()
    theta0: tuple = ()
    controller: str = "reframing"        # reframing | proportional
    reframe: ReframeSpec = field(default_factory=ReframeSpec)
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    discrete: DiscreteSpec = field(default_factory=DiscreteSpec)
    seed: int = 0

    def topology(self) -> Topology:
        if self.topology_kind is None:
            return Topology(n=self.n, edges=self.edges)
        return generate_topology(self.topology_kind, self.n,
                                 seed=self.topology_seed,
                                 extra_edge_fraction=self.extra_edge_fraction)

    def system_params(self) -> SystemParams:
        beta_off = None if self.beta_off == FEASIBLE else np.array(self.beta_off)
        return make_system_params(self.topology(), k=self.k,
                                  omega_u=np.array(self.omega_u),
                                  lam=np.array(self.lam), beta_off=beta_off,
                                  q=np.array(self.q))

    def schedule(self) -> ReframeSchedule | None:
        if self.controller != "reframing":
            return None
        r = self.reframe
        return ReframeSchedule(mode=r.mode, T1=r.T1, epsilon=r.epsilon,
                               window=r.window)

    def integrator_settings(self) -> IntegratorSettings:
        s = self.integrator
        return IntegratorSettings(method=s.method, dt=s.dt,
                                  sample_interval=s.sample_interval,
                                  horizon=s.horizon, post_horizon=s.post_horizon)

    def discrete_scenario(self) -> DiscreteScenario:
        d = self.discrete
        horizon = self.integrator.horizon
        if horizon is None:
            # same 50-e-fold rule the continuous runner applies, doubled to
            # leave room for the post-reframe phase
            from .graph import build_incidence
            from .spectral import build_closed_loop, metzler_eigenvector
            from .dynamics import init_state

            inc = build_incidence(self.topology())
            _, params = init_state(inc, self.system_params(),
                                   np.array(self.theta0))
            sd = metzler_eigenvector(build_closed_loop(inc, params))
            horizon = sd.horizon() * (2.0 if self.controller == "reframing"
                                      else 1.0)
        elif (self.controller == "reframing" and self.reframe.mode == "fixed-time"
                and self.reframe.T1 is not None
                and self.integrator.post_horizon is not None):
            # horizon is the total run length; stretch it only when an explicit
            # post-reframe span would not fit
            horizon = max(horizon, self.reframe.T1 + self.integrator.post_horizon)
        return DiscreteScenario(topology=self.topology(),
                                params=self.system_params(),
                                theta0=np.array(self.theta0),
                                capacity=d.capacity,
                                control_period=d.control_period,
                                quantization=d.quantization,
                                dt=self.integrator.dt, horizon=horizon,
                                reframe=self.schedule(),
                                continue_on_fault=d.continue_on_fault)


def _type_name(v):
    return type(v).__name__


def _expect(raw: dict, key: str, types, path: str, required=False, default=None):
    if key not in raw:
        if required:
            raise ConfigError(f"{path}: missing required key '{key}'")
        return default
    v = raw[key]
    if isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}.{key}: expected {types}, got bool")
    if not isinstance(v, types):
        raise ConfigError(
            f"{path}.{key}: expected {getattr(types, '__name__', types)}, "
            f"got {_type_name(v)} ({v!r})")
    return v


def _check_keys(raw: dict, allowed, path: str, strict: bool):
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        msg = f"{path}: unknown key{'s' if len(unknown) > 1 else ''} " \
              f"{', '.join(repr(u) for u in unknown)}"
        if strict:
            raise ConfigError(msg)
        import warnings
        warnings.warn(msg, stacklevel=3)


def _vector(raw, length, path, minimum=None):
    """Scalar broadcast or full-length list of numbers."""
    if isinstance(raw, bool) or not isinstance(raw, (int, float, list)):
        raise ConfigError(f"{path}: expected number or list, got {_type_name(raw)}")
    if isinstance(raw, (int, float)):
        values = (float(raw),) * length
    else:
        if len(raw) != length:
            raise ConfigError(f"{path}: expected {length} entries, got {len(raw)}")
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                   for x in raw):
            raise ConfigError(f"{path}: entries must be numbers")
        values = tuple(float(x) for x in raw)
    if minimum is not None and any(x <= minimum for x in values):
        raise ConfigError(f"{path}: entries must be > {minimum}")
    return values


def _parse_topology(raw: dict, strict: bool):
    topo = raw.get("topology")
    if topo is None:
        raise ConfigError("config: missing required key 'topology'")
    if isinstance(topo, str):
        if topo not in TOPOLOGY_KINDS:
            raise ConfigError(
                f"config.topology: unknown kind {topo!r}, expected one of "
                f"{TOPOLOGY_KINDS} or an object with 'edges'")
        n = _expect(raw, "n", int, "config", required=True)
        seed = _expect(raw, "topology_seed", int, "config", default=0)
        frac = _expect(raw, "extra_edge_fraction", (int, float), "config",
                       default=0.0)
        try:
            topology = generate_topology(topo, n, seed=seed,
                                         extra_edge_fraction=float(frac))
        except TopologyError as exc:
            raise ConfigError(f"config.topology: {exc}") from exc
        return topo, None, n, seed, float(frac), topology
    if isinstance(topo, dict):
        _check_keys(topo, {"edges", "n"}, "config.topology", strict)
        edges_raw = _expect(topo, "edges", list, "config.topology", required=True)
        edges = []
        for i, e in enumerate(edges_raw):
            if (not isinstance(e, (list, tuple)) or len(e) != 2
                    or not all(isinstance(x, int) for x in e)):
                raise ConfigError(
                    f"config.topology.edges[{i}]: expected [src, dst] integers")
            edges.append((e[0], e[1]))
        n = topo.get("n", max((max(e) for e in edges), default=0))
        try:
            topology = Topology(n=n, edges=tuple(edges))
        except TopologyError as exc:
            raise ConfigError(f"config.topology: {exc}") from exc
        _require_strongly_connected(topology)
        return None, tuple(edges), n, 0, 0.0, topology
    raise ConfigError("config.topology: expected a kind string or an object "
                      "with 'edges'")


def _require_strongly_connected(topology: Topology):
    if is_strongly_connected(topology):
        return
    fwd = _reach_set(topology, reverse=False)
    rev = _reach_set(topology, reverse=True)
    stranded = sorted(set(range(1, topology.n + 1)) - (fwd & rev))
    raise ConfigError(
        f"config.topology: not strongly connected; node {stranded[0]} is "
        "unreachable from or cannot reach node 1")


def _reach_set(topology: Topology, reverse: bool):
    adj = {i: [] for i in range(1, topology.n + 1)}
    for s, d in topology.edges:
        if reverse:
            adj[d].append(s)
        else:
            adj[s].append(d)
    seen = {1}
    stack = [1]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


_TOP_KEYS = {"topology", "n", "topology_seed", "extra_edge_fraction", "k",
             "omega_u", "lambda", "beta_off", "q", "theta0", "controller",
             "reframe", "integrator", "discrete", "seed"}


def parse_config_dict(raw: dict, strict: bool = True) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object at top level")
    _check_keys(raw, _TOP_KEYS, "config", strict)

    kind, edges, n, tseed, frac, topology = _parse_topology(raw, strict)
    m = topology.m

    k = float(_expect(raw, "k", (int, float), "config", required=True))
    if k <= 0:
        raise ConfigError(f"config.k: gain must be positive, got {k}")
    if "omega_u" not in raw:
        raise ConfigError("config: missing required key 'omega_u'")
    omega_u = _vector(raw["omega_u"], topology.n, "config.omega_u", minimum=0.0)
    lam = _vector(raw.get("lambda", 10.0), m, "config.lambda")

    beta_raw = raw.get("beta_off", FEASIBLE)
    if beta_raw == FEASIBLE:
        beta_off = FEASIBLE
    else:
        beta_off = _vector(beta_raw, m, "config.beta_off")
    q = _vector(raw.get("q", 0.0), topology.n, "config.q")
    theta0 = _vector(raw.get("theta0", 0.0), topology.n, "config.theta0")

    controller = _expect(raw, "controller", str, "config", default="reframing")
    if controller not in ("reframing", "proportional"):
        raise ConfigError(f"config.controller: expected 'reframing' or "
                          f"'proportional', got {controller!r}")

    rraw = raw.get("reframe", {})
    _check_keys(rraw, {"mode", "T1", "epsilon", "window"}, "config.reframe",
                strict)
    mode = _expect(rraw, "mode", str, "config.reframe", default="auto")
    if mode not in ("fixed-time", "auto"):
        raise ConfigError(f"config.reframe.mode: expected 'fixed-time' or "
                          f"'auto', got {mode!r}")
    reframe = ReframeSpec(
        mode=mode,
        T1=_optional_number(rraw, "T1", "config.reframe"),
        epsilon=_optional_number(rraw, "epsilon", "config.reframe"),
        window=_optional_number(rraw, "window", "config.reframe"))

    iraw = raw.get("integrator", {})
    _check_keys(iraw, {"method", "dt", "sample_interval", "horizon",
                       "post_horizon"}, "config.integrator", strict)
    method = _expect(iraw, "method", str, "config.integrator", default="exact")
    if method not in ("exact", "rk4", "euler"):
        raise ConfigError(f"config.integrator.method: expected 'exact', 'rk4' "
                          f"or 'euler', got {method!r}")
    integrator = IntegratorSpec(
        method=method,
        dt=_optional_number(iraw, "dt", "config.integrator"),
        sample_interval=_optional_number(iraw, "sample_interval",
                                         "config.integrator"),
        horizon=_optional_number(iraw, "horizon", "config.integrator"),
        post_horizon=_optional_number(iraw, "post_horizon", "config.integrator"))

    draw = raw.get("discrete", {})
    _check_keys(draw, {"enabled", "control_period", "quantization", "capacity",
                       "continue_on_fault"}, "config.discrete", strict)
    discrete = DiscreteSpec(
        enabled=bool(_expect(draw, "enabled", bool, "config.discrete",
                             default=False)),
        control_period=float(_expect(draw, "control_period", (int, float),
                                     "config.discrete", default=1.0)),
        quantization=_expect(draw, "quantization", int, "config.discrete",
                             default=1),
        capacity=_expect(draw, "capacity", int, "config.discrete", default=20),
        continue_on_fault=bool(_expect(draw, "continue_on_fault", bool,
                                       "config.discrete", default=False)))

    return ScenarioConfig(
        n=topology.n, k=k, omega_u=omega_u, topology_kind=kind, edges=edges,
        topology_seed=tseed, extra_edge_fraction=frac, lam=lam,
        beta_off=beta_off, q=q, theta0=theta0, controller=controller,
        reframe=reframe, integrator=integrator, discrete=discrete,
        seed=_expect(raw, "seed", int, "config", default=0))


def _optional_number(raw: dict, key: str, path: str):
    v = _expect(raw, key, (int, float), path)
    return None if v is None else float(v)


def parse_config(path, strict: bool = True) -> ScenarioConfig:
    """Load and validate a scenario config file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})") from exc
    return parse_config_dict(raw, strict=strict)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Fully resolved config as a JSON-ready dict that re-parses identically."""
    out: dict = {}
    if cfg.topology_kind is not None:
        out["topology"] = cfg.topology_kind
        out["n"] = cfg.n
        out["topology_seed"] = cfg.topology_seed
        out["extra_edge_fraction"] = cfg.extra_edge_fraction
    else:
        out["topology"] = {"n": cfg.n, "edges": [list(e) for e in cfg.edges]}
    out.update({
        "k": cfg.k,
        "omega_u": list(cfg.omega_u),
        "lambda": list(cfg.lam),
        "beta_off": (FEASIBLE if cfg.beta_off == FEASIBLE
                     else list(cfg.beta_off)),
        "q": list(cfg.q),
        "theta0": list(cfg.theta0),
        "controller": cfg.controller,
        "reframe": {k: v for k, v in asdict(cfg.reframe).items()
                    if v is not None},
        "integrator": {k: v for k, v in asdict(cfg.integrator).items()
                       if v is not None},
        "discrete": asdict(cfg.discrete),
        "seed": cfg.seed,
    })
    return out


def emit_config(cfg: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"
