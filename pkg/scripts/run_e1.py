#!/usr/bin/env python3
"""Run the 2-node hand-oracle scenario end to end.

Writes trace.csv, summary.json and plot-ready series for both quantities,
then prints predicted vs simulated steady states.
"""

import json
import sys
from pathlib import Path

from bittide_sim.cli import main

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "out" / "e1"


def run():
    config = ROOT / "configs" / "e1.json"
    rc = main(["run", "--config", str(config), "--out", str(OUT)])
    if rc != 0:
        return rc
    for quantity in ("omega", "beta-rel"):
        rc = main(["plotdata", str(OUT / "trace.csv"),
                   "--quantity", quantity, "--config", str(config),
                   "--out", str(OUT / f"{quantity}.txt")])
        if rc != 0:
            return rc
    summary = json.loads((OUT / "summary.json").read_text())
    print("predicted omega_ss:", summary["predicted"]["omega_ss"])
    print("terminal omega:    ", summary["simulated"]["terminal_omega"])
    print("predicted beta_ss (pre-reframe):",
          summary["predicted"]["beta_ss_pre_reframe"])
    print("terminal beta (post-reframe):   ",
          summary["simulated"]["terminal_beta"])
    print("reframe payload:", summary["simulated"]["reframe_payload"])
    return 0


if __name__ == "__main__":
    sys.exit(run())
