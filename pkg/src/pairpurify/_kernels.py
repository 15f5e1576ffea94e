"""Monte Carlo inner loops, with numba and pure-numpy implementations.

Set ``PAIRPURIFY_DISABLE_NUMBA=1`` to force the numpy path (also used when
numba is not importable). Both paths compute the same thing; the test suite
checks them against each other.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

__all__ = [
    "NUMBA_AVAILABLE",
    "backend",
    "pair_density",
    "ou_paths",
    "pair_density_numpy",
    "ou_paths_numpy",
    "pair_density_numba",
    "ou_paths_numba",
]

NUMBA_AVAILABLE = numba is not None
_DISABLED = os.environ.get("PAIRPURIFY_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")


def backend() -> str:
    return "numba" if NUMBA_AVAILABLE and not _DISABLED else "numpy"


def _use_numba(flag: bool | None) -> bool:
    if flag is None:
        return backend() == "numba"
    return bool(flag) and NUMBA_AVAILABLE


# -- numpy ------------------------------------------------------------------

def pair_density_numpy(a12, b12, a34, b34, w) -> np.ndarray:
    """sum_i w_i v_i v_i^dag with v = (a12 a34, a12 b34, b12 a34, b12 b34)."""
    v = np.stack([a12 * a34, a12 * b34, b12 * a34, b12 * b34], axis=1)
    return (v.T * w) @ v.conj()


def ou_paths_numpy(x0, rho, scale, noise) -> np.ndarray:
    """AR(1) recursion x[t+1] = rho x[t] + scale * noise[:, t], vectorized over paths."""
    n, steps = noise.shape
    out = np.empty((n, steps + 1))
    out[:, 0] = x0
    for t in range(steps):
        out[:, t + 1] = rho * out[:, t] + scale * noise[:, t]
    return out


# -- numba ------------------------------------------------------------------

if NUMBA_AVAILABLE:
    @numba.njit(cache=True)
    def _pair_density_nb(a12, b12, a34, b34, w):
        rho = np.zeros((4, 4), dtype=np.complex128)
        v = np.empty(4, dtype=np.complex128)
        for i in range(a12.shape[0]):
            v[0] = a12[i] * a34[i]
            v[1] = a12[i] * b34[i]
            v[2] = b12[i] * a34[i]
            v[3] = b12[i] * b34[i]
            wi = w[i]
            for r in range(4):
                vr = wi * v[r]
                for c in range(4):
                    rho[r, c] += vr * np.conj(v[c])
        return rho

    @numba.njit(cache=True)
    def _ou_paths_nb(x0, rho, scale, noise):
        n, steps = noise.shape
        out = np.empty((n, steps + 1))
        for i in range(n):
            x = x0[i]
            out[i, 0] = x
            for t in range(steps):
                x = rho * x + scale * noise[i, t]
                out[i, t + 1] = x
        return out


def pair_density_numba(a12, b12, a34, b34, w) -> np.ndarray:
    if not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    c = lambda x: np.ascontiguousarray(x, dtype=np.complex128)  # noqa: E731
    return _pair_density_nb(c(a12), c(b12), c(a34), c(b34), np.ascontiguousarray(w, dtype=np.float64))


def ou_paths_numba(x0, rho, scale, noise) -> np.ndarray:
    if not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    return _ou_paths_nb(np.ascontiguousarray(x0, dtype=np.float64), float(rho), float(scale),
                        np.ascontiguousarray(noise, dtype=np.float64))


# -- dispatch -----------------------------------------------------------------

def pair_density(a12, b12, a34, b34, w, use_numba: bool | None = None) -> np.ndarray:
    if _use_numba(use_numba):
        return pair_density_numba(a12, b12, a34, b34, w)
    return pair_density_numpy(a12, b12, a34, b34, w)


def ou_paths(x0, rho, scale, noise, use_numba: bool | None = None) -> np.ndarray:
    if _use_numba(use_numba):
        return ou_paths_numba(x0, rho, scale, noise)
    return ou_paths_numpy(np.asarray(x0, dtype=float), rho, scale, np.asarray(noise, dtype=float))
