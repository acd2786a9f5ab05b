#!/usr/bin/env python3
"""Modality-holdout experiment over one dataset.

Runs the pipeline once with the full alert set, then once per withheld
modality (logs, metrics, traces), and prints the per-measure change in
Avg@3 with Wilcoxon significance on the per-sample scores.
"""

import argparse
from pathlib import Path

from rcakit.config import load_config
from rcakit.harness import cmd_extract, cmd_run, cmd_score, run_paths


def run_variant(config_path: Path, output_dir: str, withhold: str | None):
    overrides = {"output_dir": output_dir}
    if withhold:
        overrides["alerts.withhold"] = withhold
    config = load_config(config_path, overrides)
    cmd_extract(config)
    cmd_run(config)
    return config


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--config", type=Path,
        default=Path(__file__).resolve().parent.parent / "fixtures" / "demo" / "config.yaml",
    )
    parser.add_argument("--out-prefix", default="runs/holdout")
    args = parser.parse_args()

    full = run_variant(args.config, f"{args.out_prefix}/full", None)
    cmd_score(full)
    full_root = run_paths(full).root
    print(f"full run scored at {full_root}")

    for modality in ("LOG", "METRIC", "TRACE"):
        variant = run_variant(args.config, f"{args.out_prefix}/no_{modality.lower()}", modality)
        report = cmd_score(variant, baseline_run=full_root)
        print(f"\nwithhold {modality}:")
        for measure, delta in sorted(report["holdout_vs_baseline"].items()):
            flag = "significant" if delta["significant"] else "n.s."
            print(
                f"  {measure}: delta Avg@3 = {delta['delta_avg_at_3']:+.4f} "
                f"(p = {delta['p_value']:.4f}, {flag})"
            )


if __name__ == "__main__":
    main()
