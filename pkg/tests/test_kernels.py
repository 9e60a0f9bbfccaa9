import os
import subprocess
import sys

import numpy as np
import pytest

from fracshe import kernels


def _loop(fn):
    # the undecorated Python body when numba compiled it
    return getattr(fn, "py_func", fn)


def test_volterra_versions_agree(rng):
    w0, w1, h = rng.random(40), rng.random(40), rng.random(41)
    a = kernels.volterra_product_numpy(w0, w1, h)
    assert np.allclose(kernels.volterra_product_loop(w0, w1, h), a, rtol=1e-12)
    assert np.allclose(_loop(kernels.volterra_product_loop)(w0, w1, h), a, rtol=1e-12)
    assert a[0] == 0.0
    assert a[1] == pytest.approx(w0[0] * h[0] + w1[0] * h[1])


def test_lattice_image_sums_agree(rng):
    pts = rng.uniform(-4, 4, (70, 2))
    args = (pts, 8.0, np.array([1.0, 0.3]), np.array([3.5, 5.0]), 6)
    a = kernels.lattice_image_sum_numpy(*args)
    assert np.allclose(kernels.lattice_image_sum_loop(*args), a, rtol=1e-12)


def test_ball_fractions_agree():
    nodes = np.linspace(-4, 4, 64, endpoint=False)
    a = kernels.ball_fractions_2d_numpy(nodes, nodes[1] - nodes[0], 2.3, 8)
    b = kernels.ball_fractions_2d_loop(nodes, nodes[1] - nodes[0], 2.3, 8)
    assert np.array_equal(a, b)
    assert np.all((a >= 0) & (a <= 1))
    assert a.sum() * (nodes[1] - nodes[0]) ** 2 == pytest.approx(np.pi * 2.3 ** 2, rel=5e-3)


def test_mardia_versions_agree(rng):
    Z = rng.standard_normal((700, 3))
    Z -= Z.mean(axis=0)
    S_inv = np.linalg.inv(Z.T @ Z / len(Z))
    a = kernels.mardia_skewness_numpy(Z, S_inv)
    assert kernels.mardia_skewness_loop(Z, S_inv) == pytest.approx(a, rel=1e-10)


def test_disable_flag_selects_numpy():
    env = dict(os.environ, FRACSHE_DISABLE_NUMBA="1")
    code = ("from fracshe import kernels, _accel; "
            "print(_accel.USE_NUMBA, kernels.volterra_product is kernels.volterra_product_numpy)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]
