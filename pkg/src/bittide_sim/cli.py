"""Command-line entry points.

Subcommands: run, analyze, verify, plotdata, gen-topology.  Traces are CSV
(streamable, diffable), reports are JSON, plot data is labeled text series.
All numeric output uses 17 significant digits, so files round-trip doubles
exactly and repeated runs on the same config are byte-identical.
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .config import ConfigError, config_to_dict, parse_config
from .dynamics import init_state, run
from .framesim import fault_report, run_discrete
from .graph import TopologyError, build_incidence, generate_topology
from .spectral import (SpectralError, build_closed_loop, metzler_eigenvector,
                       predict_beta_ss, predict_omega_ss)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_INPUT = 2


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def trace_csv(times, modes, omega, correction, occupancy) -> str:
    n = omega.shape[1]
    m = occupancy.shape[1]
    header = (["t", "mode"]
              + [f"omega_{i}" for i in range(1, n + 1)]
              + [f"c_{i}" for i in range(1, n + 1)]
              + [f"beta_{j}" for j in range(1, m + 1)])
    lines = [",".join(header)]
    for i in range(len(times)):
        row = [_fmt(times[i]), modes[i]]
        row += [_fmt(v) for v in omega[i]]
        row += [_fmt(v) for v in correction[i]]
        row += [_fmt(v) for v in occupancy[i]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def read_trace_csv(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    n = sum(c.startswith("omega_") for c in header)
    m = sum(c.startswith("beta_") for c in header)
    times, modes, omega, corr, beta = [], [], [], [], []
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split(",")
        times.append(float(cells[0]))
        modes.append(cells[1])
        omega.append([float(x) for x in cells[2:2 + n]])
        corr.append([float(x) for x in cells[2 + n:2 + 2 * n]])
        beta.append([float(x) for x in cells[2 + 2 * n:2 + 2 * n + m]])
    shape = (len(times), n) if times else (0, n)
    bshape = (len(times), m) if times else (0, m)
    return (np.array(times), modes, np.array(omega).reshape(shape),
            np.array(corr).reshape(shape), np.array(beta).reshape(bshape))


def _analysis(cfg):
    topology = cfg.topology()
    inc = build_incidence(topology)
    _, params = init_state(inc, cfg.system_params(), np.array(cfg.theta0))
    clm = build_closed_loop(inc, params)
    sd = metzler_eigenvector(clm)
    return topology, inc, params, clm, sd


def cmd_run(cfg, out_dir: Path) -> int:
    discrete = cfg.discrete.enabled
    summary = {"mode": "discrete" if discrete else "continuous",
               "config": config_to_dict(cfg)}
    try:
        topology, inc, params, clm, sd = _analysis(cfg)
        summary["predicted"] = {
            "omega_ss": [float(v) for v in predict_omega_ss(sd, params)],
            "beta_ss_pre_reframe": [float(v) for v in
                                    predict_beta_ss(sd, clm, params)],
            "beta_ss_post_reframe": [float(v) for v in params.beta_off]
            if cfg.controller == "reframing" else None,
        }
    except SpectralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    if discrete:
        trace = run_discrete(cfg.discrete_scenario())
        csv_text = trace_csv(trace.times, trace.mode, trace.omega,
                             trace.correction, trace.occupancy)
        faults = [asdict(f) for f in fault_report(trace)]
        summary["faults"] = faults
        summary["aborted"] = trace.aborted
        fault_lines = ["edge,t,direction,occupancy"] + [
            f"{f['edge']},{_fmt(f['t'])},{f['direction']},{f['occupancy']}"
            for f in faults]
        _write(out_dir / "faults.csv", "\n".join(fault_lines) + "\n")
    else:
        trace = run(topology, cfg.system_params(), cfg.schedule(),
                    cfg.integrator_settings(), theta0=np.array(cfg.theta0))
        csv_text = trace_csv(trace.times, trace.mode, trace.omega,
                             trace.correction, trace.occupancy)

    summary["simulated"] = {
        "reframe_time": trace.reframe_time,
        "reframe_payload": [float(v) for v in trace.reframe_payload]
        if getattr(trace, "reframe_payload", None) is not None else None,
        "terminal_omega": [float(v) for v in trace.omega[-1]],
        "terminal_correction": [float(v) for v in trace.correction[-1]],
        "terminal_beta": [float(v) for v in trace.occupancy[-1]],
        "samples": len(trace.times),
    }
    _write(out_dir / "trace.csv", csv_text)
    _write(out_dir / "summary.json", _json_text(summary))
    print(f"wrote {out_dir / 'trace.csv'} ({len(trace.times)} samples)")
    return EXIT_OK


def cmd_analyze(cfg, out_dir: Path) -> int:
    try:
        topology, inc, params, clm, sd = _analysis(cfg)
    except SpectralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    eigs = sorted(sd.eigenvalues, key=lambda v: (v.real, v.imag))
    report = {
        "n": topology.n,
        "m": topology.m,
        "z": [float(v) for v in sd.z],
        "eigenvalues": [{"re": float(v.real), "im": float(v.imag)}
                        for v in eigs],
        "decay_rate": sd.decay_rate(),
        "recommended_horizon": sd.horizon(),
        "omega_ss": [float(v) for v in predict_omega_ss(sd, params)],
        "beta_ss_pre_reframe": [float(v) for v in predict_beta_ss(sd, clm, params)],
        "beta_off": [float(v) for v in params.beta_off],
    }
    text = _json_text(report)
    _write(out_dir / "analysis.json", text)
    print(text, end="")
    return EXIT_OK


def cmd_verify(args, out_dir: Path) -> int:
    report = verify_mod.run_battery(count=args.count, seed=args.seed,
                                    n_range=(args.n_min, args.n_max),
                                    infeasible_count=args.infeasible)
    _write(out_dir / "battery.json", _json_text(report))
    for name, stats in report["summary"]["checks"].items():
        worst = stats["worst_residual"]
        print(f"{name}: {stats['statuses']}"
              + (f" worst residual {worst:.3e}" if worst is not None else ""))
    print(f"negative controls uncentered: "
          f"{report['summary']['uncentered_negative_controls']}")
    print(f"non-diagonalizable case: {report['summary']['non_diagonalizable']}")
    print("all pass" if report["all_pass"] else "FAILURES (see battery.json)")
    return EXIT_OK if report["all_pass"] else EXIT_CHECK_FAILED


def cmd_plotdata(trace_path, quantity: str, cfg, out_path: Path | None) -> int:
    times, modes, omega, correction, occupancy = read_trace_csv(trace_path)
    chunks = []
    if quantity == "omega":
        series, label = omega, "omega node"
    else:
        if cfg is None:
            print("error: beta-rel needs --config to recover beta_off",
                  file=sys.stderr)
            return EXIT_BAD_INPUT
        _, _, params, _, _ = _analysis(cfg)
        if occupancy.shape[1] != len(params.beta_off):
            print("error: trace and config disagree on edge count",
                  file=sys.stderr)
            return EXIT_BAD_INPUT
        series, label = occupancy - params.beta_off, "beta-rel edge"
    for j in range(series.shape[1]):
        lines = [f"# {label}={j + 1}"]
        lines += [f"{_fmt(times[i])} {_fmt(series[i, j])}"
                  for i in range(len(times))]
        chunks.append("\n".join(lines))
    for i in range(1, len(modes)):
        if modes[i] != modes[i - 1] and times[i] == times[i - 1]:
            chunks.append(f"# reframe t={_fmt(times[i])}\n{_fmt(times[i])} 0")
            break
    text = "\n\n".join(chunks) + ("\n" if chunks else "")
    if out_path is None:
        print(text, end="")
    else:
        _write(out_path, text)
        print(f"wrote {out_path}")
    return EXIT_OK


def cmd_gen_topology(args, out_path: Path | None) -> int:
    topology = generate_topology(args.kind, args.n, seed=args.seed,
                                 extra_edge_fraction=args.extra_edge_fraction)
    doc = {"topology": {"n": topology.n,
                        "edges": [list(e) for e in topology.edges]}}
    text = _json_text(doc)
    if out_path is None:
        print(text, end="")
    else:
        _write(out_path, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bittide-sim",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="scenario config JSON")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--strict", action=argparse.BooleanOptionalAction,
                        default=True,
                        help="reject unknown config keys (default on)")

    sp = sub.add_parser("run", help="simulate a scenario, write trace + summary")
    add_common(sp)
    sp.add_argument("--discrete", action="store_true",
                    help="force frame-accurate discrete mode")
    sp.add_argument("--continue-on-fault", action="store_true",
                    help="record buffer faults instead of aborting")
    sp.add_argument("--seed", type=int, default=None,
                    help="override the config seed")

    sp = sub.add_parser("analyze", help="spectral report, no simulation")
    add_common(sp)

    sp = sub.add_parser("verify", help="run the convergence-check battery")
    sp.add_argument("--out", default="out")
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-min", type=int, default=2)
    sp.add_argument("--n-max", type=int, default=8)
    sp.add_argument("--infeasible", type=int, default=None,
                    help="number of infeasible negative controls")

    sp = sub.add_parser("plotdata", help="labeled (t, value) series from a trace")
    sp.add_argument("trace", help="trace CSV produced by run")
    sp.add_argument("--quantity", choices=["omega", "beta-rel"],
                    default="omega")
    sp.add_argument("--config", default=None,
                    help="config file (needed for beta-rel)")
    sp.add_argument("--out", default=None, help="output file (default stdout)")
    sp.add_argument("--strict", action=argparse.BooleanOptionalAction,
                    default=True)

    sp = sub.add_parser("gen-topology", help="emit a generated topology as JSON")
    sp.add_argument("--kind", required=True,
                    choices=["ring", "bidirectional-ring", "complete",
                             "random-strong"])
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--extra-edge-fraction", type=float, default=0.0)
    sp.add_argument("--out", default=None, help="output file (default stdout)")
    return p


def _apply_overrides(cfg, args):
    from dataclasses import replace as dc_replace

    if getattr(args, "discrete", False):
        cfg = dc_replace(cfg, discrete=dc_replace(cfg.discrete, enabled=True))
    if getattr(args, "continue_on_fault", False):
        cfg = dc_replace(cfg, discrete=dc_replace(cfg.discrete,
                                                  continue_on_fault=True))
    if getattr(args, "seed", None) is not None:
        cfg = dc_replace(cfg, seed=args.seed,
                         topology_seed=args.seed if cfg.topology_kind else
                         cfg.topology_seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-topology":
            return cmd_gen_topology(args, Path(args.out) if args.out else None)
        if args.command == "verify":
            return cmd_verify(args, Path(args.out))
        if args.command == "plotdata":
            cfg = (parse_config(args.config, strict=args.strict)
                   if args.config else None)
            return cmd_plotdata(args.trace, args.quantity, cfg,
                                Path(args.out) if args.out else None)
        cfg = parse_config(args.config, strict=args.strict)
        cfg = _apply_overrides(cfg, args)
        if args.command == "run":
            return cmd_run(cfg, Path(args.out))
        if args.command == "analyze":
            return cmd_analyze(cfg, Path(args.out))
    except (ConfigError, TopologyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
