#!/usr/bin/env python3
"""Build an MNIST IDX image file from the digit dumps shipped in the npm `mnist` package.

The package stores ~1000 real MNIST digits per class as JSON arrays of
784 values in [0, 1] (three decimals). Classes are interleaved round-robin
so any prefix of the output is class-balanced.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_subset.py package/src/digits data/mnist/train-images-idx3-ubyte --count 2048
"""

import argparse
import json
import struct
from pathlib import Path


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("output", type=Path)
    ap.add_argument("--count", type=int, default=2048)
    args = ap.parse_args()

    per_class = []
    for digit in range(10):
        flat = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        per_class.append([flat[i : i + 784] for i in range(0, len(flat), 784)])

    images = []
    index = 0
    while len(images) < args.count:
        for digit in range(10):
            if index < len(per_class[digit]) and len(images) < args.count:
                images.append(per_class[digit][index])
        index += 1
        if all(index >= len(c) for c in per_class):
            break

    args.output.parent.mkdir(parents=True, exist_ok=True)
    with args.output.open("wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(min(255, max(0, round(v * 255))) for v in img))
    print(f"wrote {len(images)} images to {args.output}")


if __name__ == "__main__":
    main()
