#!/usr/bin/env python3
"""Writes the 5 000-image MNIST sample bundled with mlxtend as gzipped IDX files.

usage: make_mnist5k.py OUT_DIR [--wheel PATH]

Without --wheel the mlxtend wheel is fetched with `pip download`.
"""
import argparse
import glob
import gzip
import struct
import subprocess
import tempfile
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_wheel(tmp):
    subprocess.run(["pip", "download", "--no-deps", "-q", "-d", tmp, "mlxtend"], check=True)
    return glob.glob(str(Path(tmp) / "mlxtend-*.whl"))[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--wheel")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(tmp)
        rows = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER)).decode().splitlines()

    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        fields = [int(v) for v in row.split(",")]
        pixels.extend(fields[:784])
        labels.append(fields[784])
    n = len(labels)

    # mtime=0 keeps the archives byte-reproducible
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28) + bytes(pixels))
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n) + bytes(labels))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
