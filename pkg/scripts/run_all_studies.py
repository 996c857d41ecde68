#!/usr/bin/env python3
"""Run every packaged study config through the CLI.

Equivalent to calling `sharpness-lab <command> --config configs/...` for each
entry below; output lands under ./out/ (or $SHARPNESS_LAB_OUT).
"""

import sys
from pathlib import Path

from sharpness_lab.cli import run_command

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

STUDIES = [
    ("oracle", "oracle_toys.json"),
    ("estimate", "estimate_convergence.json"),
    ("invariance-check", "invariance_rescale.json"),
    ("invariance-check", "invariance_rotation.json"),
    ("universality-demo", "universality_demo.json"),
    ("train", "train_quadratic.json"),
    ("bias-study", "bias_study_blobs.json"),  # ~10 minutes of CPU
]


def main(argv):
    only = argv[1] if len(argv) > 1 else None
    for command, name in STUDIES:
        if only and only not in name:
            continue
        print(f"== {command} {name}")
        for path in run_command(command, str(CONFIG_DIR / name)):
            print("  ", path)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
