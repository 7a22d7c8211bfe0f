#!/usr/bin/env python3
"""Export the scikit-image sample photographs used as the test corpus.

Each image is converted to 8-bit grayscale, downsampled 2x by box averaging,
and written as a binary PGM under tests/data/corpus/.
"""
import pathlib
import sys

import numpy as np
import skimage.data
from skimage.color import rgb2gray

NAMES = ["grass", "gravel", "brick", "moon", "chelsea",
         "coffee", "camera", "astronaut", "rocket", "immunohistochemistry"]


def to_gray(img):
    if img.ndim == 3:
        img = rgb2gray(img[..., :3]) * 255.0
    return img.astype(np.float64)


def downsample(img):
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def write_pgm(path, img):
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (data.shape[1], data.shape[0]))
        f.write(data.tobytes())


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data/corpus")
    out.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(NAMES):
        img = downsample(to_gray(getattr(skimage.data, name)()))
        write_pgm(out / f"{i:02d}_{name}.pgm", img)


if __name__ == "__main__":
    main()
