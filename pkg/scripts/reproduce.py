#!/usr/bin/env python3
"""Run every preset sweep and the threshold curve into out/<name>/.

Usage: python scripts/reproduce.py [--workers N] [--out DIR]
Figures can then be rendered with the companion plotting package, e.g.
  figures figures_specs/<name>.cfg
"""

import argparse
import sys
from pathlib import Path

from dpre.cli import main as dpre_main

SWEEPS = ["fig_set_size", "fig_rb_budget", "fig_convergence", "fig_qos",
          "fig_baselines"]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--out", type=Path, default=Path("out"))
    args = parser.parse_args()
    here = Path(__file__).parent
    for name in SWEEPS:
        rc = dpre_main(["sweep", "--config", str(here / f"{name}.cfg"),
                        "--out", str(args.out / name),
                        "--workers", str(args.workers)])
        if rc != 0:
            return rc
        print(f"[reproduce] {name} done")
    rc = dpre_main(["threshold-curve", "--out", str(args.out / "threshold"),
                    "--collect-trials", "150"])
    if rc != 0:
        return rc
    print("[reproduce] threshold curve done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
