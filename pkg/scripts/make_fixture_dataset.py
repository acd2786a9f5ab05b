#!/usr/bin/env python3
"""Regenerate the bundled demo dataset under fixtures/demo.

The dataset is a pure function of the seed, so regeneration is byte-stable.
"""

import argparse
from pathlib import Path

from rcakit.fixtures import build_demo_dataset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out", type=Path, default=Path(__file__).resolve().parent.parent / "fixtures" / "demo",
        help="Target directory (default: fixtures/demo in the repo root).",
    )
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    config_path = build_demo_dataset(args.out, seed=args.seed)
    print(f"demo dataset written; run config at {config_path}")


if __name__ == "__main__":
    main()
