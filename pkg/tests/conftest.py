import numpy as np
import pytest

from bittide_sim import (Topology, build_closed_loop, build_incidence,
                         make_system_params, metzler_eigenvector)


@pytest.fixture
def two_cycle():
    return Topology(n=2, edges=[(1, 2), (2, 1)])


@pytest.fixture
def ring3():
    return Topology(n=3, edges=[(1, 2), (2, 3), (3, 1)])


@pytest.fixture
def ring3_chord():
    # has a defective eigenvalue (-2 twice, one eigenvector) at k = 1
    return Topology(n=3, edges=[(1, 2), (2, 3), (3, 1), (1, 3)])


@pytest.fixture
def e1(two_cycle):
    """2-node hand-oracle scenario: k=0.1, omega_u=(1.00, 1.02), lambda=10,
    feasible offsets at theta0 = 0 (so beta_off = (10, 10) and r = 0)."""
    params = make_system_params(two_cycle, k=0.1, omega_u=[1.00, 1.02],
                                lam=10.0, beta_off=10.0)
    inc = build_incidence(two_cycle)
    clm = build_closed_loop(inc, params)
    sd = metzler_eigenvector(clm)
    return two_cycle, inc, params, clm, sd


def spectral_setup(topology, k, omega_u, lam=10.0, beta_off=None, theta0=0.0, q=0.0):
    """Build (inc, params-with-materialized-offsets, clm, sd) for a scenario."""
    from bittide_sim import init_state

    inc = build_incidence(topology)
    params = make_system_params(topology, k=k, omega_u=omega_u, lam=lam,
                                beta_off=beta_off, q=q)
    _, params = init_state(inc, params, theta0)
    clm = build_closed_loop(inc, params)
    sd = metzler_eigenvector(clm)
    return inc, params, clm, sd


def random_scenario(seed, n_range=(2, 8), k_range=(0.05, 1.0),
                    omega_range=(0.95, 1.05), extra_max=0.5):
    """Random strongly connected scenario with feasible offsets, q = 0."""
    from bittide_sim import generate_topology

    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    frac = float(rng.uniform(0.0, extra_max))
    topology = generate_topology("random-strong", n, seed=seed,
                                 extra_edge_fraction=frac)
    k = float(rng.uniform(*k_range))
    omega_u = rng.uniform(*omega_range, size=n)
    lam = rng.uniform(8.0, 12.0, size=topology.m)
    theta0 = rng.uniform(-1.0, 1.0, size=n)
    params = make_system_params(topology, k=k, omega_u=omega_u, lam=lam)
    return topology, params, theta0
