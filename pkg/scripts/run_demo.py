#!/usr/bin/env python3
"""Run the full built-in pipeline and drop all reports in one directory.

Equivalent to `coneflow demo chem`; kept as a script so experiment runs
live next to the other sweeps.
"""

import argparse
import sys

from coneflow.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rates", default="1,1,1,1")
    args = ap.parse_args()
    return cli_main(["demo", "chem", "--out", args.out,
                     "--seed", str(args.seed), "--rates", args.rates])


if __name__ == "__main__":
    sys.exit(main())
