#!/usr/bin/env python3
"""Write a small MNIST corpus in IDX format for offline use.

Source: the 5000-image MNIST sample bundled in the `mlxtend` wheel
(500 images per digit, raw 0..255 pixels, label in the last CSV column).
The first 400 images of each digit go to the train files and the remaining
100 to the t10k files, so `make_subset` with up to (400, 100) per class works.

Usage: python3 scripts/mnist_subset_to_idx.py [--wheel PATH] [--out data/mnist]
Without --wheel the script runs `pip download mlxtend==0.24.0 --no-deps`.
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

TRAIN_PER_CLASS = 400


def fetch_wheel(dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "mlxtend==0.24.0", "-d", str(dest)],
        check=True,
    )
    return next(dest.glob("mlxtend-*.whl"))


def read_rows(wheel: Path):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    for line in raw.splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        yield vals[:-1], vals[-1]


def write_idx(out: Path, prefix: str, rows):
    images = bytearray(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
    labels = bytearray(struct.pack(">II", 0x00000801, len(rows)))
    for pixels, label in rows:
        images.extend(bytes(pixels))
        labels.append(label)
    (out / f"{prefix}-images-idx3-ubyte").write_bytes(images)
    (out / f"{prefix}-labels-idx1-ubyte").write_bytes(labels)


def interleave(by_class):
    # round-robin over digits so file order resembles the original corpus
    out = []
    longest = max(len(v) for v in by_class.values())
    for i in range(longest):
        for digit in sorted(by_class):
            if i < len(by_class[digit]):
                out.append(by_class[digit][i])
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", type=Path)
    ap.add_argument("--out", type=Path, default=Path("data/mnist"))
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(Path(tmp))
        by_class = {}
        for pixels, label in read_rows(wheel):
            by_class.setdefault(label, []).append((pixels, label))
    train = {d: rows[:TRAIN_PER_CLASS] for d, rows in by_class.items()}
    test = {d: rows[TRAIN_PER_CLASS:] for d, rows in by_class.items()}
    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out, "train", interleave(train))
    write_idx(args.out, "t10k", interleave(test))
    print(f"wrote {sum(map(len, train.values()))} train / {sum(map(len, test.values()))} test images to {args.out}")


if __name__ == "__main__":
    main()
