"""Compiled and fallback kernel backends agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from wdfqdet import kernels

BACKENDS = kernels.available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def test_backend_selection():
    assert kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


@needs_both
@pytest.mark.parametrize("stride,dilation", [(1, 1), (2, 1), (1, 2), (2, 3)])
def test_im2col_col2im_bitwise(rng, stride, dilation):
    c, py = BACKENDS["cython"], BACKENDS["python"]
    xp = rng.standard_normal((2, 3, 11, 9))
    kh, kw = 3, 2
    ho = (11 - dilation * (kh - 1) - 1) // stride + 1
    wo = (9 - dilation * (kw - 1) - 1) // stride + 1
    a = c.im2col(xp, kh, kw, stride, dilation, ho, wo)
    b = py.im2col(xp, kh, kw, stride, dilation, ho, wo)
    assert a.tobytes() == b.tobytes()
    cols = rng.standard_normal(a.shape)
    a = c.col2im(cols, 3, 11, 9, kh, kw, stride, dilation, ho, wo)
    b = py.col2im(cols, 3, 11, 9, kh, kw, stride, dilation, ho, wo)
    assert a.tobytes() == b.tobytes()


@needs_both
def test_bilinear_kernels_agree(rng):
    c, py = BACKENDS["cython"], BACKENDS["python"]
    x = rng.standard_normal((2, 3, 5, 1))
    pts = rng.uniform(-0.3, 1.3, size=(2, 9, 2))
    assert c.bilinear_forward(x, pts).tobytes() == py.bilinear_forward(x, pts).tobytes()
    g = rng.standard_normal((2, 9, 3))
    gx_c, gp_c = c.bilinear_backward(x, pts, g)
    gx_p, gp_p = py.bilinear_backward(x, pts, g)
    assert gx_c.tobytes() == gx_p.tobytes()
    assert np.max(np.abs(gp_c - gp_p)) <= 1e-13


@needs_both
def test_assignment_kernels_agree(rng):
    c, py = BACKENDS["cython"], BACKENDS["python"]
    for _ in range(200):
        rows = int(rng.integers(1, 7))
        cost = rng.uniform(0, 1, size=(rows, int(rng.integers(rows, 8))))
        assert np.array_equal(c.linear_assignment(cost), py.linear_assignment(cost))


FORWARD_SCRIPT = """
import sys
from wdfqdet import kernels, pipeline
from wdfqdet.config import profile
from wdfqdet.imageio import load_pair
from wdfqdet.synthetic import bundled_dataset_path
import os
base = os.path.dirname(bundled_dataset_path())
cfg = profile("test")
rgb, ir = load_pair(os.path.join(base, "pair1_rgb.ppm"), os.path.join(base, "pair1_ir.pgm"))
res = pipeline.forward(rgb, ir, pipeline.build_params(cfg), cfg)
sys.stdout.write(kernels.BACKEND + "\\n" + pipeline.detections_json(pipeline.detections(res)[0]))
"""


@needs_both
def test_full_forward_identical_across_backends():
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, WDFQDET_PURE_PYTHON=flag)
        proc = subprocess.run([sys.executable, "-c", FORWARD_SCRIPT], env=env, capture_output=True,
                              text=True, check=True)
        backend, body = proc.stdout.split("\n", 1)
        outs[backend] = body
    assert set(outs) == {"cython", "python"}
    assert outs["cython"] == outs["python"]
