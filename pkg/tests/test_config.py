import json
from pathlib import Path

import numpy as np
import pytest

from bittide_sim.config import (ConfigError, emit_config, parse_config,
                                parse_config_dict)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = {"topology": "bidirectional-ring", "n": 2, "k": 0.1,
           "omega_u": [1.00, 1.02]}


def test_minimal_config_defaults():
    cfg = parse_config_dict(dict(MINIMAL))
    assert cfg.lam == (10.0, 10.0)          # lambda = 10 per edge
    assert cfg.beta_off == "feasible"
    assert cfg.integrator.method == "exact"
    assert cfg.controller == "reframing" and cfg.reframe.mode == "auto"
    assert cfg.q == (0.0, 0.0) and cfg.theta0 == (0.0, 0.0)
    topo = cfg.topology()
    assert topo.edges == ((1, 2), (2, 1))


def test_scalar_broadcasts():
    raw = dict(MINIMAL, omega_u=1.0, q=0.5, theta0=-1.0)
    cfg = parse_config_dict(raw)
    assert cfg.omega_u == (1.0, 1.0)
    assert cfg.q == (0.5, 0.5)
    assert cfg.theta0 == (-1.0, -1.0)


def test_explicit_edges_topology():
    raw = {"topology": {"edges": [[1, 2], [2, 3], [3, 1]]},
           "k": 1.0, "omega_u": 1.0}
    cfg = parse_config_dict(raw)
    assert cfg.n == 3 and cfg.edges == ((1, 2), (2, 3), (3, 1))
    assert cfg.lam == (10.0, 10.0, 10.0)


def test_dangling_node_named_in_error():
    raw = {"topology": {"edges": [[1, 2], [2, 1], [2, 3]]},
           "k": 1.0, "omega_u": 1.0}
    with pytest.raises(ConfigError, match="node 3"):
        parse_config_dict(raw)


def test_missing_required_keys():
    with pytest.raises(ConfigError, match="missing required key 'k'"):
        parse_config_dict({"topology": "ring", "n": 3, "omega_u": 1.0})
    with pytest.raises(ConfigError, match="missing required key 'omega_u'"):
        parse_config_dict({"topology": "ring", "n": 3, "k": 1.0})
    with pytest.raises(ConfigError, match="missing required key 'topology'"):
        parse_config_dict({"n": 3, "k": 1.0, "omega_u": 1.0})


def test_unknown_key_rejected_in_strict_mode():
    raw = dict(MINIMAL, gain=2.0)
    with pytest.raises(ConfigError, match="unknown key 'gain'"):
        parse_config_dict(raw)
    with pytest.warns(UserWarning, match="unknown key"):
        parse_config_dict(raw, strict=False)


def test_unknown_nested_key_has_path():
    raw = dict(MINIMAL, reframe={"mode": "auto", "epsilonn": 1e-9})
    with pytest.raises(ConfigError, match=r"config\.reframe.*epsilonn"):
        parse_config_dict(raw)


def test_type_mismatch_reports_key_path():
    with pytest.raises(ConfigError, match=r"config\.k"):
        parse_config_dict(dict(MINIMAL, k="strong"))
    with pytest.raises(ConfigError, match=r"config\.omega_u"):
        parse_config_dict(dict(MINIMAL, omega_u=[1.0, "fast"]))
    with pytest.raises(ConfigError, match=r"config\.lambda"):
        parse_config_dict(dict(MINIMAL, **{"lambda": [1.0]}))  # wrong length


def test_nonpositive_gain_rejected():
    with pytest.raises(ConfigError, match="positive"):
        parse_config_dict(dict(MINIMAL, k=0.0))


def test_bad_controller_and_modes():
    with pytest.raises(ConfigError, match="controller"):
        parse_config_dict(dict(MINIMAL, controller="integral"))
    with pytest.raises(ConfigError, match=r"reframe\.mode"):
        parse_config_dict(dict(MINIMAL, reframe={"mode": "eventually"}))
    with pytest.raises(ConfigError, match=r"integrator\.method"):
        parse_config_dict(dict(MINIMAL, integrator={"method": "leapfrog"}))


def test_round_trip_identity():
    for name in ("e1.json", "e1_discrete.json", "eight_node.json"):
        cfg = parse_config(CONFIG_DIR / name)
        again = parse_config_dict(json.loads(emit_config(cfg)))
        assert again == cfg


def test_round_trip_preserves_explicit_edges(tmp_path):
    raw = {"topology": {"edges": [[1, 2], [2, 1]]}, "k": 0.5, "omega_u": 1.0,
           "beta_off": [9.0, 11.0]}
    cfg = parse_config_dict(raw)
    text = emit_config(cfg)
    p = tmp_path / "cfg.json"
    p.write_text(text)
    assert parse_config(p) == cfg
    assert cfg.beta_off == (9.0, 11.0)


def test_config_builds_runtime_objects():
    cfg = parse_config(CONFIG_DIR / "e1.json")
    params = cfg.system_params()
    np.testing.assert_array_equal(params.omega_u, [1.00, 1.02])
    assert params.beta_off is None  # feasible tag materializes at init
    sched = cfg.schedule()
    assert sched.mode == "fixed-time" and sched.T1 == 250.0
    settings = cfg.integrator_settings()
    assert settings.horizon == 250.0

    dcfg = parse_config(CONFIG_DIR / "e1_discrete.json")
    scen = dcfg.discrete_scenario()
    assert scen.capacity == 20 and scen.dt == 0.2
    assert scen.horizon == 500.0


def test_not_json_is_config_error(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config(p)
