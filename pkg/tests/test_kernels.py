import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import crandn
from robust_precoding import kernels

fallback = kernels.python
compiled = kernels._impl
needs_compiled = pytest.mark.skipif(kernels.BACKEND != "compiled", reason="compiled core not built")


@needs_compiled
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.5, 5.0))
def test_modulo_backends_agree(seed, D):
    rng = np.random.default_rng(seed)
    z = crandn(rng, 200) * 10
    z[:5] = np.array([-D / 2, D / 2, 0.0, 1.5 * D, -D]) * (1 + 1j)
    assert np.array_equal(compiled.modulo(z, D), fallback.modulo(z, D))


@needs_compiled
@given(st.integers(0, 2 ** 32 - 1))
def test_thp_backends_agree(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 5))
    S = crandn(rng, 300, K)
    B = np.tril(crandn(rng, K, K), -1)
    Vc, Ic = compiled.thp_precode(S, B, 2.0)
    Vp, Ip = fallback.thp_precode(S, B, 2.0)
    assert np.allclose(Vc, Vp, rtol=0, atol=1e-12)
    assert np.array_equal(Ic, Ip)


@needs_compiled
@given(st.integers(0, 2 ** 32 - 1))
def test_quadratic_kernels_agree(seed):
    rng = np.random.default_rng(seed)
    r, w = int(rng.integers(1, 7)), int(rng.integers(1, 8))
    Z = rng.standard_normal((50, r))
    M = rng.standard_normal((r, w))
    r0 = rng.standard_normal(w)
    A = rng.standard_normal((3, r, r))
    forms = np.einsum("lij,lkj->lik", A, A) + 0.1 * np.eye(r)
    assert np.allclose(compiled.quad_values(Z, M, r0), fallback.quad_values(Z, M, r0), rtol=1e-12)
    assert np.allclose(compiled.radial_limit(Z, forms), fallback.radial_limit(Z, forms), rtol=1e-12)


@needs_compiled
def test_ascent_backends_agree(rng):
    r, w = 4, 5
    M = rng.standard_normal((r, w))
    r0 = rng.standard_normal(w)
    forms = np.stack([np.eye(r), np.diag([4.0, 1.0, 1.0, 1.0])])
    Z0 = rng.standard_normal((6, r)) * 0.1
    Zc, vc = compiled.ascend(Z0, M, r0, forms, 100)
    Zp, vp = fallback.ascend(Z0, M, r0, forms, 100)
    assert np.allclose(vc, vp, rtol=1e-9)
    assert np.allclose(Zc, Zp, rtol=1e-9, atol=1e-12)


def test_ascent_stays_in_region(rng):
    r, w = 3, 4
    forms = np.stack([np.eye(r), np.diag([9.0, 1.0, 1.0])])
    Z0 = rng.standard_normal((5, r)) * 0.05
    M, r0 = rng.standard_normal((r, w)), rng.standard_normal(w)
    Z, vals = kernels.ascend(Z0, M, r0, forms, 50)
    assert np.all(np.einsum("ni,lij,nj->nl", Z, forms, Z) <= 1 + 1e-9)
    assert np.all(vals >= kernels.quad_values(Z0, M, r0) - 1e-12)


def test_read_only_inputs_accepted(rng):
    z = crandn(rng, 10)
    z.setflags(write=False)
    kernels.modulo(z, 1.0)


def test_pure_switch_selects_fallback():
    env = dict(os.environ, ROBUST_PRECODING_PURE="1")
    out = subprocess.run([sys.executable, "-c",
                          "from robust_precoding import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
