#!/usr/bin/env python3
"""Convert the digits shipped in the npm `mnist` package into IDX files.

The package bundles 10,000 MNIST digits as JSON arrays of pixel intensities
rounded to three decimals. Each class is split 80/20 (in package order) into
a train and a test pair of IDX files:

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_idx_from_npm.py package/src/digits data/mnist
"""
import json
import struct
import sys
from pathlib import Path


def write_idx(path, magic, dims, payload):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    splits = {"train": ([], []), "t10k": ([], [])}
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        images = [flat[i:i + 784] for i in range(0, len(flat), 784)]
        cut = int(len(images) * 0.8)
        for name, part in (("train", images[:cut]), ("t10k", images[cut:])):
            for img in part:
                splits[name][0].append(bytes(min(255, round(v * 255)) for v in img))
                splits[name][1].append(digit)
    for name, (images, labels) in splits.items():
        n = len(images)
        write_idx(dst / f"{name}-images-idx3-ubyte", 0x00000803, (n, 28, 28), b"".join(images))
        write_idx(dst / f"{name}-labels-idx1-ubyte", 0x00000801, (n,), bytes(labels))
        print(f"{name}: {n} images")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
