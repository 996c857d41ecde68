#!/usr/bin/env python3
"""Write a small synthetic image dataset as an IDX file pair.

Useful for exercising the IDX reader and the `idx` dataset kind without
external downloads:

    python scripts/make_idx_fixture.py out/fixture
    sharpness-lab train --config ... (pointing dataset.images/labels there)
"""

import sys
from pathlib import Path

import numpy as np

from sharpness_lab import SeededStream, synth_blobs, write_idx


def main(argv):
    target = Path(argv[1]) if len(argv) > 1 else Path("out/idx_fixture")
    target.mkdir(parents=True, exist_ok=True)
    side = 28
    ds = synth_blobs(num_classes=10, per_class=100, dim=side * side,
                     spread=0.2, stream=SeededStream(42))
    # squash into [0, 1] so the byte quantization keeps the cluster structure
    feats = 1.0 / (1.0 + np.exp(-ds.features))
    from sharpness_lab import Dataset
    ds = Dataset(feats, ds.labels, ds.split, ds.num_classes)
    images = target / "images-idx3-ubyte"
    labels = target / "labels-idx1-ubyte"
    write_idx(images, labels, ds, rows=side, cols=side)
    print(images)
    print(labels)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
