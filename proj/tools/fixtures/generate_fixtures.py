#!/usr/bin/env python3
"""Regenerate the test fixtures under tests/data.

Needs scikit-image, Pillow and an OpenCV 4.x python build with the Haar
cascades (opencv-python-headless 4.10 was used). OpenCV only produces the
reference detections; nothing in the C++ build depends on it.

    PYTHONPATH=/path/to/opencv4 python3 tools/fixtures/generate_fixtures.py \
        --cascade /path/to/haarcascade_frontalface_default.xml
"""
import argparse
import json
import pathlib
import shutil

import cv2
import numpy as np
from PIL import Image
from skimage import data

ROOT = pathlib.Path(__file__).resolve().parents[2]
OUT = ROOT / "tests" / "data"

SCALE_FACTOR = 1.1
MIN_NEIGHBORS = 3
MIN_SIZE = 30


def lfw_mosaic():
    faces = data.lfw_subset()
    canvas = np.full((180, 620), 118, np.uint8)
    for slot, idx in enumerate((0, 20, 40, 60)):
        face = cv2.resize((faces[idx] * 255).round().astype(np.uint8), (130, 130),
                          interpolation=cv2.INTER_CUBIC)
        x = 20 + slot * 150
        canvas[25:155, x:x + 130] = face
    return canvas


def build_images():
    astronaut = data.astronaut()
    return {
        "astronaut.png": astronaut,
        "portrait.png": astronaut[20:220, 130:330].copy(),
        "astronaut_mirror.png": astronaut[:, ::-1].copy(),
        "lfw_mosaic.png": lfw_mosaic(),
        "camera.png": data.camera(),
        "coffee.png": data.coffee(),
        "chelsea.png": data.chelsea(),
        "rocket.png": data.rocket(),
        "coins.png": data.coins(),
    }


def to_gray(img):
    if img.ndim == 2:
        return img
    return cv2.cvtColor(img[..., :3], cv2.COLOR_RGB2GRAY)


def png_codec_fixtures(rng):
    # Small PNGs written by Pillow (an independent codec) plus their raw bytes.
    cases = []
    specs = [("gray", "L", (5, 7)), ("rgb", "RGB", (6, 4)), ("rgba", "RGBA", (9, 3))]
    for name, mode, (w, h) in specs:
        channels = len(mode)
        raw = rng.integers(0, 256, size=(h, w, channels), dtype=np.uint8)
        if channels == 1:
            raw = raw[..., 0]
        path = OUT / "png" / f"{name}.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(raw, mode).save(path, optimize=True)
        cases.append({"file": f"png/{name}.png", "width": w, "height": h,
                      "channels": channels, "bytes": raw.reshape(-1).tolist()})
    (OUT / "png" / "reference.json").write_text(json.dumps({"cases": cases}, indent=1))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cascade", required=True)
    args = ap.parse_args()

    OUT.mkdir(parents=True, exist_ok=True)
    shutil.copy(args.cascade, OUT / "haarcascade_frontalface_default.xml")
    classifier = cv2.CascadeClassifier(args.cascade)

    refs = []
    for name, img in build_images().items():
        Image.fromarray(img).save(OUT / name)
        gray = to_gray(np.asarray(Image.open(OUT / name)))
        boxes, _, weights = classifier.detectMultiScale3(
            gray, SCALE_FACTOR, MIN_NEIGHBORS, minSize=(MIN_SIZE, MIN_SIZE),
            outputRejectLevels=True)
        faces = [{"x": int(b[0]), "y": int(b[1]), "w": int(b[2]), "h": int(b[3]),
                  "weight": float(w)} for b, w in zip(boxes, weights)]
        refs.append({"image": name, "faces": faces})
        print(name, gray.shape, [tuple(int(v) for v in b) for b in boxes])

    (OUT / "reference_detections.json").write_text(json.dumps({
        "runtime": f"opencv {cv2.__version__}",
        "cascade": "haarcascade_frontalface_default.xml",
        "scale_factor": SCALE_FACTOR,
        "min_neighbors": MIN_NEIGHBORS,
        "min_size": MIN_SIZE,
        "images": refs,
    }, indent=1))

    png_codec_fixtures(np.random.default_rng(20240601))


if __name__ == "__main__":
    main()
