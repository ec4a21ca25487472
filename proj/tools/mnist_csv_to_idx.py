#!/usr/bin/env python3
# Copyright 2026 The pbho Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Converts an MNIST CSV (784 pixel columns + label) into IDX files.

Rows are shuffled with a fixed seed, stratified by class, so that --train
rows (an equal share per class) become train-{images,labels} and the rest
become t10k-*. Used to build the small bundled subset under data/mnist.
"""
import argparse
import csv
import gzip
import random
import struct
from pathlib import Path


def write_images(path, rows):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(r))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    opener = gzip.open if args.csv.endswith(".gz") else open
    pixels, labels = [], []
    with opener(args.csv, "rt") as f:
        for row in csv.reader(f):
            if not row or not row[0].strip().isdigit():
                continue
            vals = [int(float(v)) for v in row]
            pixels.append(vals[:784])
            labels.append(vals[784])
    by_class = {}
    for i, y in enumerate(labels):
        by_class.setdefault(y, []).append(i)
    rng = random.Random(args.seed)
    per_class = args.train // len(by_class)
    train_idx, test_idx = [], []
    for y in sorted(by_class):
        idx = by_class[y]
        rng.shuffle(idx)
        train_idx += idx[:per_class]
        test_idx += idx[per_class:]
    rng.shuffle(train_idx)
    rng.shuffle(test_idx)
    order = train_idx + test_idx
    pixels = [pixels[i] for i in order]
    labels = [labels[i] for i in order]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(train_idx)
    write_images(out / "train-images-idx3-ubyte", pixels[:n])
    write_labels(out / "train-labels-idx1-ubyte", labels[:n])
    write_images(out / "t10k-images-idx3-ubyte", pixels[n:])
    write_labels(out / "t10k-labels-idx1-ubyte", labels[n:])
    print(f"wrote {n} train / {len(pixels) - n} test examples to {out}")


if __name__ == "__main__":
    main()
