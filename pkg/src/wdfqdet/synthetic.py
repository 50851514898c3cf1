"""Deterministic toy RGB/IR pairs with box annotations."""
import json
import os

import numpy as np

from .imageio import encode_pgm, encode_ppm, write_bytes

SIZE = 64
PAIRS = 4


def _render(rng, boxes):
    yy, xx = np.mgrid[0:SIZE, 0:SIZE] / SIZE
    base = 0.25 + 0.2 * xx[..., None] * np.array([0.6, 0.8, 1.0]) + 0.05 * rng.standard_normal((SIZE, SIZE, 3))
    rgb = base.copy()
    ir = 0.15 + 0.1 * yy + 0.03 * rng.standard_normal((SIZE, SIZE))
    for cls, cx, cy, w, h in boxes:
        x0, x1 = int(round((cx - w / 2) * SIZE)), int(round((cx + w / 2) * SIZE))
        y0, y1 = int(round((cy - h / 2) * SIZE)), int(round((cy + h / 2) * SIZE))
        colour = np.array([0.9, 0.2, 0.2]) if cls == 0 else np.array([0.2, 0.3, 0.9])
        rgb[y0:y1, x0:x1] = 0.7 * colour + 0.3 * rgb[y0:y1, x0:x1]
        # warm objects: a smooth bump in the thermal channel
        gy, gx = np.mgrid[y0:y1, x0:x1]
        bump = np.exp(-(((gx + 0.5) / SIZE - cx) / (w / 2)) ** 2 - (((gy + 0.5) / SIZE - cy) / (h / 2)) ** 2)
        ir[y0:y1, x0:x1] += (0.8 if cls == 0 else 0.5) * bump
    to_u8 = lambda a: np.clip(np.rint(a * 255), 0, 255).astype(np.uint8)  # noqa: E731
    return to_u8(rgb), to_u8(ir)


def make_boxes(rng):
    boxes = []
    for _ in range(int(rng.integers(1, 3))):
        w, h = rng.uniform(0.15, 0.35, size=2)
        cx = rng.uniform(w / 2 + 0.02, 1 - w / 2 - 0.02)
        cy = rng.uniform(h / 2 + 0.02, 1 - h / 2 - 0.02)
        boxes.append((int(rng.integers(0, 2)), cx, cy, w, h))
    return boxes


def make_synthetic_dataset(out_dir, seed=0):
    """Write PAIRS image pairs plus ``dataset.json``; returns the JSON path."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for k in range(PAIRS):
        boxes = make_boxes(rng)
        rgb, ir = _render(rng, boxes)
        rgb_name, ir_name = f"pair{k}_rgb.ppm", f"pair{k}_ir.pgm"
        write_bytes(os.path.join(out_dir, rgb_name), encode_ppm(rgb))
        write_bytes(os.path.join(out_dir, ir_name), encode_pgm(ir))
        entries.append({
            "rgb": rgb_name, "ir": ir_name,
            "boxes": [{"cls": c, "cx": round(cx, 6), "cy": round(cy, 6), "w": round(w, 6), "h": round(h, 6)}
                      for c, cx, cy, w, h in boxes],
        })
    path = os.path.join(out_dir, "dataset.json")
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")
    return path


def bundled_dataset_path():
    return os.path.join(os.path.dirname(__file__), "data", "synthetic", "dataset.json")
