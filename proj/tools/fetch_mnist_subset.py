#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Write a 5,000-sample MNIST subset as IDX files.

The samples come from the mnist_5k.csv.gz file shipped inside the mlxtend
wheel: 5,000 MNIST training digits, 500 per class, one row of 784 pixels
plus the label each.
"""

import argparse
import gzip
import io
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np


def fetch_csv() -> bytes:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "mlxtend==0.24.0", "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(Path(tmp).glob("mlxtend-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            return gzip.decompress(zf.read("mlxtend/data/data/mnist_5k.csv.gz"))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="output directory")
    args = parser.parse_args()

    table = np.loadtxt(io.BytesIO(fetch_csv()), delimiter=",", dtype=np.int64)
    pixels = table[:, :784].astype(np.uint8)
    labels = table[:, 784].astype(np.uint8)
    n = len(labels)

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(pixels.tobytes())
    with open(args.out / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.tobytes())
    print(f"wrote {n} samples to {args.out}")


if __name__ == "__main__":
    main()
