#!/usr/bin/env python3
"""Convert the digit JSON files shipped by the npm `mnist` package into IDX files.

Usage: mnist_from_npm.py <package>/src/digits <out_dir>

Writes digits-images-idx3-ubyte.gz and digits-labels-idx1-ubyte.gz. Items are
ordered by class, then by their order within the package file.
"""
import gzip
import json
import struct
import sys
from pathlib import Path


def main() -> int:
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    pixels = bytearray()
    labels = bytearray()
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        count = len(data) // 784
        pixels.extend(max(0, min(255, round(255 * float(v)))) for v in data[: count * 784])
        labels.extend([digit] * count)
    n = len(labels)
    with gzip.GzipFile(out / "digits-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(pixels)
    with gzip.GzipFile(out / "digits-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels)
    print(f"wrote {n} digits to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
