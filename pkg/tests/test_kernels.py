import numpy as np
import pytest
from hypothesis import given, strategies as st

from pairpurify import _kernels as k

needs_numba = pytest.mark.skipif(not k.NUMBA_AVAILABLE, reason="numba not installed")


def _coeffs(seed, n):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
    return (*c, rng.random(n))


def test_backend_name():
    assert k.backend() in ("numba", "numpy")


@given(st.integers(0, 2**32 - 1), st.integers(1, 50))
def test_pair_density_numpy_matches_loop(seed, n):
    a12, b12, a34, b34, w = _coeffs(seed, n)
    rho = k.pair_density_numpy(a12, b12, a34, b34, w)
    ref = np.zeros((4, 4), complex)
    for i in range(n):
        v = np.array([a12[i] * a34[i], a12[i] * b34[i], b12[i] * a34[i], b12[i] * b34[i]])
        ref += w[i] * np.outer(v, v.conj())
    assert np.allclose(rho, ref, atol=1e-12)
    assert np.allclose(rho, rho.conj().T)


@needs_numba
@given(st.integers(0, 2**32 - 1), st.integers(1, 200))
def test_pair_density_backends_agree(seed, n):
    args = _coeffs(seed, n)
    assert np.allclose(k.pair_density_numba(*args), k.pair_density_numpy(*args), rtol=1e-12, atol=1e-12)


@needs_numba
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 2))
def test_ou_backends_agree(seed, rho, scale):
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(20)
    noise = rng.standard_normal((20, 7))
    assert np.allclose(k.ou_paths_numba(x0, rho, scale, noise), k.ou_paths_numpy(x0, rho, scale, noise),
                       rtol=1e-13, atol=1e-13)


def test_ou_paths_are_stationary():
    rng = np.random.default_rng(3)
    rho = 0.8
    x0 = rng.standard_normal(40_000)
    paths = k.ou_paths(x0, rho, np.sqrt(1 - rho ** 2), rng.standard_normal((40_000, 5)))
    assert np.var(paths[:, -1]) == pytest.approx(1.0, abs=0.03)
    assert np.corrcoef(paths[:, 0], paths[:, -1])[0, 1] == pytest.approx(rho ** 5, abs=0.02)


def test_forcing_numpy_path():
    args = _coeffs(0, 5)
    assert np.allclose(k.pair_density(*args, use_numba=False), k.pair_density_numpy(*args))
