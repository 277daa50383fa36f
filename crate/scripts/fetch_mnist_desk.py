#!/usr/bin/env python3
"""Build a desk-scale MNIST in the canonical IDX layout.

The `mnist` npm package ships 10,000 MNIST digits as JSON arrays of x/255
intensities rounded to three decimals. Three decimals are finer than the
1/255 byte step, so the original bytes are recovered exactly by rounding.

The digits are shuffled with a fixed seed and written as

    train-images-idx3-ubyte / train-labels-idx1-ubyte   (8000 digits)
    t10k-images-idx3-ubyte  / t10k-labels-idx1-ubyte    (2000 digits)

Usage: scripts/fetch_mnist_desk.py [OUT_DIR]   (default: data/mnist-desk)
"""

import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

TRAIN = 8000
SEED = 20170302


def fetch_package(workdir):
    out = subprocess.run(
        ["npm", "pack", "mnist@1.1.0"], cwd=workdir, check=True, capture_output=True, text=True
    )
    tgz = os.path.join(workdir, out.stdout.strip().splitlines()[-1])
    with tarfile.open(tgz) as tar:
        tar.extractall(workdir)
    return os.path.join(workdir, "package", "src", "digits")


def load_digits(digits_dir):
    samples = []
    for digit in range(10):
        with open(os.path.join(digits_dir, f"{digit}.json")) as fh:
            flat = json.load(fh)["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            px = bytes(round(v * 255) for v in flat[i * 784 : (i + 1) * 784])
            samples.append((px, digit))
    return samples


def write_idx(out_dir, stem, samples):
    with open(os.path.join(out_dir, f"{stem}-images-idx3-ubyte"), "wb") as fh:
        fh.write(struct.pack(">IIII", 0x803, len(samples), 28, 28))
        for px, _ in samples:
            fh.write(px)
    with open(os.path.join(out_dir, f"{stem}-labels-idx1-ubyte"), "wb") as fh:
        fh.write(struct.pack(">II", 0x801, len(samples)))
        fh.write(bytes(label for _, label in samples))


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join("data", "mnist-desk")
    os.makedirs(out_dir, exist_ok=True)
    with tempfile.TemporaryDirectory() as work:
        samples = load_digits(fetch_package(work))
    random.Random(SEED).shuffle(samples)
    write_idx(out_dir, "train", samples[:TRAIN])
    write_idx(out_dir, "t10k", samples[TRAIN:])
    print(f"wrote {TRAIN} train / {len(samples) - TRAIN} test digits to {out_dir}")


if __name__ == "__main__":
    main()
