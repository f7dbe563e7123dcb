"""Seeded gradient noise (classic improved Perlin) and fractal sums.

Two execution paths produce identical results: a numba @njit kernel for the
hot per-sample loop and a vectorized pure-numpy fallback. Selection is via
the WORLDSIM_NUMBA env var ("0" disables numba); the numpy path is also used
automatically when numba is unavailable.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .rng import Stream

_PERM_CACHE: dict[int, np.ndarray] = {}

# 8 unit gradients at 45-degree steps; |noise| stays well inside [-1, 1]
_SQ2 = math.sqrt(0.5)
_GRAD_X = np.array([1.0, _SQ2, 0.0, -_SQ2, -1.0, -_SQ2, 0.0, _SQ2])
_GRAD_Y = np.array([0.0, _SQ2, 1.0, _SQ2, 0.0, -_SQ2, -1.0, -_SQ2])


def _permutation(seed: int) -> np.ndarray:
    perm = _PERM_CACHE.get(seed)
    if perm is None:
        table = list(range(256))
        Stream(seed, "perlin-permutation").shuffle(table)
        perm = np.array(table + table, dtype=np.int64)
        if len(_PERM_CACHE) > 64:
            _PERM_CACHE.clear()
        _PERM_CACHE[seed] = perm
    return perm


def _perlin_numpy(perm, x, y):
    xi = np.floor(x).astype(np.int64)
    yi = np.floor(y).astype(np.int64)
    xf = x - xi
    yf = y - yi
    xi &= 255
    yi &= 255

    u = xf * xf * xf * (xf * (xf * 6.0 - 15.0) + 10.0)
    v = yf * yf * yf * (yf * (yf * 6.0 - 15.0) + 10.0)

    h00 = perm[perm[xi] + yi] & 7
    h10 = perm[perm[xi + 1] + yi] & 7
    h01 = perm[perm[xi] + yi + 1] & 7
    h11 = perm[perm[xi + 1] + yi + 1] & 7

    n00 = _GRAD_X[h00] * xf + _GRAD_Y[h00] * yf
    n10 = _GRAD_X[h10] * (xf - 1.0) + _GRAD_Y[h10] * yf
    n01 = _GRAD_X[h01] * xf + _GRAD_Y[h01] * (yf - 1.0)
    n11 = _GRAD_X[h11] * (xf - 1.0) + _GRAD_Y[h11] * (yf - 1.0)

    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    return nx0 + v * (nx1 - nx0)


def _fbm_numpy(perm, x, y, octaves, persistence, lacunarity):
    total = np.zeros_like(x)
    amp = 1.0
    freq = 1.0
    norm = 0.0
    for _ in range(octaves):
        total = total + amp * _perlin_numpy(perm, x * freq, y * freq)
        norm += amp
        amp *= persistence
        freq *= lacunarity
    return total / norm


_NUMBA_OK = False
if os.environ.get("WORLDSIM_NUMBA", "1") != "0":
    try:
        from numba import njit

        @njit(cache=True)
        def _perlin_numba(perm, gx, gy, x, y, out):  # pragma: no cover - jit
            for i in range(x.shape[0]):
                xi = int(math.floor(x[i]))
                yi = int(math.floor(y[i]))
                xf = x[i] - xi
                yf = y[i] - yi
                xi &= 255
                yi &= 255
                u = xf * xf * xf * (xf * (xf * 6.0 - 15.0) + 10.0)
                v = yf * yf * yf * (yf * (yf * 6.0 - 15.0) + 10.0)
                h00 = perm[perm[xi] + yi] & 7
                h10 = perm[perm[xi + 1] + yi] & 7
                h01 = perm[perm[xi] + yi + 1] & 7
                h11 = perm[perm[xi + 1] + yi + 1] & 7
                n00 = gx[h00] * xf + gy[h00] * yf
                n10 = gx[h10] * (xf - 1.0) + gy[h10] * yf
                n01 = gx[h01] * xf + gy[h01] * (yf - 1.0)
                n11 = gx[h11] * (xf - 1.0) + gy[h11] * (yf - 1.0)
                nx0 = n00 + u * (n10 - n00)
                nx1 = n01 + u * (n11 - n01)
                out[i] = nx0 + v * (nx1 - nx0)

        @njit(cache=True)
        def _fbm_numba(perm, gx, gy, x, y, octaves, persistence, lacunarity, out):  # pragma: no cover - jit
            for i in range(x.shape[0]):
                total = 0.0
                amp = 1.0
                freq = 1.0
                norm = 0.0
                for _ in range(octaves):
                    px = x[i] * freq
                    py = y[i] * freq
                    xi = int(math.floor(px))
                    yi = int(math.floor(py))
                    xf = px - xi
                    yf = py - yi
                    xi &= 255
                    yi &= 255
                    u = xf * xf * xf * (xf * (xf * 6.0 - 15.0) + 10.0)
                    v = yf * yf * yf * (yf * (yf * 6.0 - 15.0) + 10.0)
                    h00 = perm[perm[xi] + yi] & 7
                    h10 = perm[perm[xi + 1] + yi] & 7
                    h01 = perm[perm[xi] + yi + 1] & 7
                    h11 = perm[perm[xi + 1] + yi + 1] & 7
                    n00 = gx[h00] * xf + gy[h00] * yf
                    n10 = gx[h10] * (xf - 1.0) + gy[h10] * yf
                    n01 = gx[h01] * xf + gy[h01] * (yf - 1.0)
                    n11 = gx[h11] * (xf - 1.0) + gy[h11] * (yf - 1.0)
                    nx0 = n00 + u * (n10 - n00)
                    nx1 = n01 + u * (n11 - n01)
                    total += amp * (nx0 + v * (nx1 - nx0))
                    norm += amp
                    amp *= persistence
                    freq *= lacunarity
                out[i] = total / norm

        _NUMBA_OK = True
    except ImportError:
        _NUMBA_OK = False


def numba_enabled() -> bool:
    return _NUMBA_OK


def perlin2(seed: int, x, y, *, force_numpy: bool = False):
    """Gradient noise in [-1, 1]; zero at integer lattice points.

    x, y may be scalars or equal-shape arrays; returns matching shape.
    """
    perm = _permutation(seed)
    scalar = np.isscalar(x) and np.isscalar(y)
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    ya = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if xa.shape != ya.shape:
        raise ValueError("x and y shapes differ")
    if _NUMBA_OK and not force_numpy:
        flat_x = np.ascontiguousarray(xa.ravel())
        flat_y = np.ascontiguousarray(ya.ravel())
        out = np.empty_like(flat_x)
        _perlin_numba(perm, _GRAD_X, _GRAD_Y, flat_x, flat_y, out)
        out = out.reshape(xa.shape)
    else:
        out = _perlin_numpy(perm, xa, ya)
    return float(out[0]) if scalar else out


def fbm(seed: int, x, y, octaves: int = 4, persistence: float = 0.5,
        lacunarity: float = 2.0, *, force_numpy: bool = False):
    """Fractal (multi-octave) noise, normalized back into [-1, 1]."""
    if octaves < 1:
        raise ValueError("octaves must be >= 1")
    if not (0.0 < persistence < 1.0) and octaves > 1:
        raise ValueError("persistence must be in (0, 1)")
    if lacunarity <= 1.0 and octaves > 1:
        raise ValueError("lacunarity must be > 1")
    perm = _permutation(seed)
    scalar = np.isscalar(x) and np.isscalar(y)
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    ya = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if xa.shape != ya.shape:
        raise ValueError("x and y shapes differ")
    if _NUMBA_OK and not force_numpy:
        flat_x = np.ascontiguousarray(xa.ravel())
        flat_y = np.ascontiguousarray(ya.ravel())
        out = np.empty_like(flat_x)
        _fbm_numba(perm, _GRAD_X, _GRAD_Y, flat_x, flat_y,
                   octaves, persistence, lacunarity, out)
        out = out.reshape(xa.shape)
    else:
        out = _fbm_numpy(perm, xa, ya, octaves, persistence, lacunarity)
    return float(out[0]) if scalar else out


def sample_grid(seed: int, width: int, height: int, scale: float,
                octaves: int = 4, persistence: float = 0.5,
                lacunarity: float = 2.0) -> np.ndarray:
    """fbm sampled on a (height, width) tile grid at the given frequency."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return fbm(seed, xs * scale, ys * scale, octaves, persistence, lacunarity)
