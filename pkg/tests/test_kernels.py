import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bargain_lab import _kernels
from bargain_lab._kernels import pykernels
from bargain_lab.stats import gauss_hermite

needs_c = pytest.mark.skipif(_kernels.ckernels is None, reason="compiled kernels not built")


def household_inputs(n, seed, nodes=16):
    rng = np.random.default_rng(seed)
    xi, w = gauss_hermite(nodes)
    return dict(
        m=rng.uniform(0.2, 0.8, n), mu=rng.normal(0.5, 0.1, n), sd=rng.uniform(0.05, 0.3, n),
        load=rng.uniform(0.0, 0.2, n), tau=rng.normal(0.0, 1.0, n), t_load=0.3,
        t_sign=rng.choice([-1, 0, 1], n).astype(np.int8), h_res=rng.normal(0.0, 0.5, n),
        has_h=(rng.uniform(size=n) < 0.7).astype(np.int8), h_sd=0.4, h_load=0.15, nodes=xi, logw=np.log(w),
    )


def call(mod, kw, grad):
    return mod.household_loglik(**kw, grad=grad)


@needs_c
@pytest.mark.parametrize("grad", [False, True])
def test_household_kernels_agree(grad):
    kw = household_inputs(500, 0)
    ll_c, G_c = call(_kernels.ckernels, kw, grad)
    ll_p, G_p = call(pykernels, kw, grad)
    assert np.allclose(ll_c, ll_p, rtol=0, atol=1e-11)
    if grad:
        assert np.allclose(G_c, G_p, rtol=1e-9, atol=1e-9)


@needs_c
@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.floats(0.05, 0.6), st.integers(0, 10_000))
def test_local_moment_kernels_agree(degree, h, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=300)
    y = np.sin(4 * x) + rng.normal(size=300)
    grid = np.linspace(0.0, 1.0, 23)
    for a, b in zip(_kernels.ckernels.local_moments(x, y, grid, h, degree),
                    pykernels.local_moments(x, y, grid, h, degree)):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-10)


def test_pure_backend_selected_by_environment():
    code = "import bargain_lab._kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"BARGAIN_LAB_PURE": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "numpy"
