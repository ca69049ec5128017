#!/usr/bin/env python3
"""Download the MNIST IDX files for use with `dataset = idx`.

Usage:
    python scripts/fetch_mnist.py [--out DIR] [--base-url URL]

Files are kept gzipped; the loader reads .gz transparently. Point the
campaign config at them:

    dataset = idx
    idx_images = data/train-images-idx3-ubyte.gz
    idx_labels = data/train-labels-idx1-ubyte.gz
"""

import argparse
import os
import urllib.request

FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]
DEFAULT_BASE = "https://ossci-datasets.s3.amazonaws.com/mnist/"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data", help="target directory")
    ap.add_argument("--base-url", default=DEFAULT_BASE,
                    help="mirror to download from")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for name in FILES:
        dest = os.path.join(args.out, name)
        if os.path.exists(dest):
            print(f"{dest}: already present")
            continue
        url = args.base_url.rstrip("/") + "/" + name
        print(f"fetching {url}")
        urllib.request.urlretrieve(url, dest)
    print(f"done; files in {args.out}/")


if __name__ == "__main__":
    main()
