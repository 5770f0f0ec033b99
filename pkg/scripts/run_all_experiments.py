"""Run every config in configs/ and print one status line per experiment."""

import argparse
import sys
from pathlib import Path

from natprob import cli

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--configs", default=str(ROOT / "configs"))
    parser.add_argument("--out", default=str(ROOT / "results"))
    args = parser.parse_args()
    worst = cli.EXIT_OK
    for path in sorted(Path(args.configs).glob("*.json")):
        code = cli.main(["run", str(path), "--out", str(Path(args.out) / path.stem)])
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
