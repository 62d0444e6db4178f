#!/usr/bin/env python3
"""Builds the grayscale 256x256 image corpus under data/ from sample photos
shipped with scikit-image, scikit-learn and matplotlib.

train/   crops used for threshold calibration and filter training
heldout/ whole-scene photos never seen in training
"""
import argparse
import os

import matplotlib
import numpy as np
import skimage
import sklearn
from PIL import Image

SK = os.path.join(os.path.dirname(skimage.__file__), "data")
SL = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "images")
MP = os.path.join(matplotlib.get_data_path(), "sample_data")

SIZE = 256

# (source, scale applied before cropping, list of (left, top) crop origins)
TRAIN = [
    (f"{SK}/rocket.jpg", 1.0, [(40, 60), (330, 140)]),
    (f"{SK}/coins.png", 1.0, [(0, 0), (120, 40)]),
    (f"{SK}/moon.png", 1.0, [(0, 0), (256, 256)]),
    (f"{SK}/grass.png", 1.0, [(0, 0), (256, 256)]),
    (f"{SK}/gravel.png", 1.0, [(0, 0), (256, 256)]),
    (f"{SK}/brick.png", 1.0, [(0, 0), (256, 256)]),
    (f"{SK}/hubble_deep_field.jpg", 0.5, [(0, 0), (240, 180)]),
    (f"{SK}/hubble_deep_field.jpg", 1.0, [(600, 500)]),
    (f"{SK}/ihc.png", 1.0, [(0, 0), (256, 256)]),
    (f"{SK}/retina.jpg", 0.5, [(100, 100), (400, 350)]),
    (f"{SK}/retina.jpg", 1.0, [(500, 300)]),
    (f"{SK}/clock_motion.png", 1.0, [(60, 20)]),
    (f"{SK}/cell.png", 1.0, [(0, 0), (380, 280)]),
]

# Distinct sources from TRAIN.
HELDOUT = [
    f"{SK}/astronaut.png",
    f"{SK}/camera.png",
    f"{SK}/coffee.png",
    f"{SK}/chelsea.png",
    f"{SL}/china.jpg",
    f"{SL}/flower.jpg",
    f"{MP}/grace_hopper.jpg",
    f"{SK}/motorcycle_left.png",
]


def gray(path):
    im = Image.open(path).convert("RGB")
    a = np.asarray(im, dtype=np.float64)
    return 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]


def resize(a, scale):
    if scale == 1.0:
        return a
    h, w = a.shape
    im = Image.fromarray(a.astype(np.float32), mode="F")
    im = im.resize((int(w * scale), int(h * scale)), Image.LANCZOS)
    return np.asarray(im, dtype=np.float64)


def scene(a):
    """Whole-scene view: shrink so the short side is SIZE, center crop."""
    h, w = a.shape
    s = SIZE / min(h, w)
    a = resize(a, s)
    h, w = a.shape
    top, left = (h - SIZE) // 2, (w - SIZE) // 2
    return a[top:top + SIZE, left:left + SIZE]


def save(a, path):
    a = np.clip(np.rint(a), 0, 255).astype(np.uint8)
    Image.fromarray(a, mode="L").save(path)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = p.parse_args()
    os.makedirs(f"{args.out}/train", exist_ok=True)
    os.makedirs(f"{args.out}/heldout", exist_ok=True)
    n = 0
    for path, scale, origins in TRAIN:
        a = resize(gray(path), scale)
        for left, top in origins:
            h, w = a.shape
            left, top = min(left, w - SIZE), min(top, h - SIZE)
            crop = a[top:top + SIZE, left:left + SIZE]
            assert crop.shape == (SIZE, SIZE), (path, crop.shape)
            save(crop, f"{args.out}/train/train_{n:02d}.png")
            n += 1
    for i, path in enumerate(HELDOUT):
        save(scene(gray(path)), f"{args.out}/heldout/heldout_{i:02d}.png")
    print(f"{n} training images, {len(HELDOUT)} held-out images")


if __name__ == "__main__":
    main()
