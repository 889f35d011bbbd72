#!/usr/bin/env python3
"""Generate the qualitative frequency / relative-occupancy traces on an
8-node random strongly connected graph: spread clocks converge to a common
frequency, jump at the reframe, reconverge to the same value while the
buffers move from their offset plateaus back to zero relative occupancy.

Emits plot-ready series (out/figure/omega.txt, out/figure/beta-rel.txt); any
plotting tool can draw them, e.g.

    gnuplot -e "plot for [i=0:7] 'out/figure/omega.txt' index i w l"
"""

import sys
from pathlib import Path

from bittide_sim.cli import main

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "out" / "figure"


def run():
    config = ROOT / "configs" / "eight_node.json"
    rc = main(["run", "--config", str(config), "--out", str(OUT)])
    if rc != 0:
        return rc
    for quantity in ("omega", "beta-rel"):
        rc = main(["plotdata", str(OUT / "trace.csv"), "--quantity", quantity,
                   "--config", str(config),
                   "--out", str(OUT / f"{quantity}.txt")])
        if rc != 0:
            return rc
    print(f"series written under {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
