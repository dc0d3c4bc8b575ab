"""Numeric kernels for the tone detector.

Two implementations of the Goertzel recurrence live here: a numba-compiled
scalar loop and a pure-numpy path that keeps the per-sample recursion but
vectorizes across bins. Both run the same arithmetic in the same order, so
they agree to the bit.

Selection: numba is used when importable unless DUTYSIM_NO_NUMBA is set to a
non-empty value, in which case the numpy path is used. ``USING_NUMBA`` tells
you which one won.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    numba = None
    _HAVE_NUMBA = False

_DISABLED = bool(os.environ.get("DUTYSIM_NO_NUMBA"))
USING_NUMBA = _HAVE_NUMBA and not _DISABLED


def goertzel_many_numpy(samples: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Squared DFT magnitudes at the bins encoded by ``coeffs``.

    coeffs[b] = 2*cos(2*pi*bin_b/N). The recurrence
        s0 = x[n] + c*s1 - s2
    runs once per sample with all bins in flight as a vector.
    """
    s1 = np.zeros_like(coeffs)
    s2 = np.zeros_like(coeffs)
    for n in range(samples.shape[0]):
        s0 = samples[n] + coeffs * s1 - s2
        s2 = s1
        s1 = s0
    return s1 * s1 + s2 * s2 - coeffs * s1 * s2


def _goertzel_many_scalar(samples, coeffs):
    out = np.empty(coeffs.shape[0])
    for b in range(coeffs.shape[0]):
        c = coeffs[b]
        s1 = 0.0
        s2 = 0.0
        for n in range(samples.shape[0]):
            s0 = samples[n] + c * s1 - s2
            s2 = s1
            s1 = s0
        out[b] = s1 * s1 + s2 * s2 - c * s1 * s2
    return out


def goertzel_batch_numpy(windows: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Bank powers for many windows at once; returns shape (M, B)."""
    m = windows.shape[0]
    b = coeffs.shape[0]
    s1 = np.zeros((m, b))
    s2 = np.zeros((m, b))
    for n in range(windows.shape[1]):
        s0 = windows[:, n, None] + coeffs * s1 - s2
        s2 = s1
        s1 = s0
    return s1 * s1 + s2 * s2 - coeffs * s1 * s2


def _goertzel_batch_scalar(windows, coeffs):
    m = windows.shape[0]
    nb = coeffs.shape[0]
    out = np.empty((m, nb))
    for i in range(m):
        for b in range(nb):
            c = coeffs[b]
            s1 = 0.0
            s2 = 0.0
            for n in range(windows.shape[1]):
                s0 = windows[i, n] + c * s1 - s2
                s2 = s1
                s1 = s0
            out[i, b] = s1 * s1 + s2 * s2 - c * s1 * s2
    return out


if _HAVE_NUMBA:
    goertzel_many_numba = numba.njit(cache=True)(_goertzel_many_scalar)
    goertzel_batch_numba = numba.njit(cache=True)(_goertzel_batch_scalar)
else:
    goertzel_many_numba = _goertzel_many_scalar
    goertzel_batch_numba = _goertzel_batch_scalar

if USING_NUMBA:
    goertzel_many = goertzel_many_numba
    goertzel_batch = goertzel_batch_numba
else:
    goertzel_many = goertzel_many_numpy
    goertzel_batch = goertzel_batch_numpy
