# Copyright 2026 The PSG Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Regenerates the small datasets under tests/data.

Usage: make_fixtures.py MNIST_DIR OUT_DIR
"""

import struct
import sys
from pathlib import Path

import numpy as np


def read_idx(path):
    raw = Path(path).read_bytes()
    magic = struct.unpack(">I", raw[:4])[0]
    if magic == 0x803:
        n, h, w = struct.unpack(">III", raw[4:16])
        return np.frombuffer(raw[16:], dtype=np.uint8).reshape(n, h, w)
    n = struct.unpack(">I", raw[4:8])[0]
    return np.frombuffer(raw[8:], dtype=np.uint8)


def write_idx(images, labels, img_path, lab_path):
    n, h, w = images.shape
    Path(img_path).write_bytes(struct.pack(">IIII", 0x803, n, h, w) + images.tobytes())
    Path(lab_path).write_bytes(struct.pack(">II", 0x801, n) + labels.astype(np.uint8).tobytes())


def mnist_subset(images, labels, classes, per_class):
    idx = []
    for c in classes:
        idx.extend(np.flatnonzero(labels == c)[:per_class].tolist())
    idx.sort()
    return images[idx], labels[idx]


def blobs(rng, means, per_class, scale):
    xs, ys = [], []
    for c, m in enumerate(means):
        xs.append(m + scale * rng.standard_normal((per_class, means.shape[1])))
        ys.append(np.full(per_class, c))
    x, y = np.concatenate(xs), np.concatenate(ys)
    order = rng.permutation(len(y))
    return x[order], y[order]


def write_csv(path, x, y):
    with open(path, "w") as f:
        for row, label in zip(x, y):
            f.write(str(int(label)) + "," + ",".join(f"{v:.6f}" for v in row) + "\n")


def main():
    mnist, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)

    tr_x, tr_y = read_idx(mnist / "train-images-idx3-ubyte"), read_idx(mnist / "train-labels-idx1-ubyte")
    te_x, te_y = read_idx(mnist / "t10k-images-idx3-ubyte"), read_idx(mnist / "t10k-labels-idx1-ubyte")
    x, y = mnist_subset(tr_x, tr_y, [0, 1], 1000)
    write_idx(x, y, out / "mnist01-train-images.idx", out / "mnist01-train-labels.idx")
    x, y = mnist_subset(te_x, te_y, [0, 1], 500)
    write_idx(x, y, out / "mnist01-test-images.idx", out / "mnist01-test-labels.idx")

    rng = np.random.default_rng(20260417)
    means = 4.0 * rng.standard_normal((3, 16)) / np.sqrt(16) * 2.0
    x, y = blobs(rng, means, 200, 1.0)
    write_csv(out / "blobs3-train.csv", x, y)
    x, y = blobs(rng, means, 100, 1.0)
    write_csv(out / "blobs3-test.csv", x, y)

    means = 8.0 * rng.standard_normal((10, 16)) / np.sqrt(16)
    x, y = blobs(rng, means, 100, 1.0)
    write_csv(out / "blobs10-train.csv", x, y)
    x, y = blobs(rng, means, 50, 1.0)
    write_csv(out / "blobs10-test.csv", x, y)


if __name__ == "__main__":
    main()
