"""Sample several design spaces in one flop regime, score them with the surrogate and
compare their error EDFs.

    python3 scripts/compare_design_spaces.py --out runs/compare --n 500
"""

import argparse
import sys
from pathlib import Path

from netspaces.cli import main as cli


def run(argv):
    code = cli(argv)
    if code:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/compare"))
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--flops", default="360e6:400e6")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--spaces", nargs="+", default=["regnetx", "anynetx-e", "anynetx-a"])
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    pops = []
    for k, name in enumerate(args.spaces):
        p = args.out / f"{name}.jsonl"
        run(["sample", "--space", name, "--n", str(args.n), "--flops", args.flops,
             "--workers", str(args.workers), "--seed", str(k), "--out", str(p)])
        run(["surrogate", str(p)])
        pops.append(str(p))
    run(["analyze", pops[0], "--compare", *pops[1:], "--svg", "--out", str(args.out / "analysis")])


if __name__ == "__main__":
    main()
