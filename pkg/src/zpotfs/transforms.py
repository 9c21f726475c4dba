"""
Unitary DFT helpers and the index maps between the three signal domains.

Layouts used throughout the package:

* delay-Doppler ``X``: M x N, row m is x_m.
* delay-time ``Xt``: M x N, row m is the N-point inverse DFT of x_m.
* time ``s``: length NM, ``s[m + n*M] = Xt[m, n]`` (N blocks of M samples).

All transforms use the symmetric 1/sqrt(N) normalisation.
"""

from __future__ import annotations

import numpy as np


def dft_n(v, direction: str = "fwd", axis: int = -1) -> np.ndarray:
    """Unitary DFT along ``axis``; ``direction`` is ``"fwd"`` or ``"inv"``."""
    if direction == "fwd":
        return np.fft.fft(v, axis=axis, norm="ortho")
    if direction == "inv":
        return np.fft.ifft(v, axis=axis, norm="ortho")
    raise ValueError(f"direction must be 'fwd' or 'inv', got {direction!r}")


def dft_matrix(N: int) -> np.ndarray:
    """Dense unitary DFT matrix F_N(i, k) = N^-1/2 exp(-j 2 pi i k / N)."""
    k = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(k, k) / N) / np.sqrt(N)


def _grid(X) -> np.ndarray:
    return X.X if hasattr(X, "X") else np.asarray(X)


def dd_to_dt(X) -> np.ndarray:
    """Delay-Doppler grid (array or OtfsFrame) to delay-time, row by row."""
    return dft_n(_grid(X), "inv", axis=1)


def dt_to_dd(Xt) -> np.ndarray:
    return dft_n(Xt, "fwd", axis=1)


def dt_to_time(Xt) -> np.ndarray:
    return np.asarray(Xt).reshape(-1, order="F")


def time_to_dt(s, M: int, N: int) -> np.ndarray:
    s = np.asarray(s)
    if s.size != M * N:
        raise ValueError(f"time vector has {s.size} samples, expected {M * N}")
    return s.reshape((M, N), order="F")


def dd_to_time(X) -> np.ndarray:
    return dt_to_time(dd_to_dt(X))


def time_to_dd(s, M: int, N: int) -> np.ndarray:
    return dt_to_dd(time_to_dt(s, M, N))


def perfect_shuffle(M: int, N: int) -> np.ndarray:
    """Index map of the perfect shuffle P with ``s = P @ xt``.

    ``xt`` stacks the M delay-time vectors (length N each); ``s`` stacks N
    time blocks of length M. The returned ``perm`` satisfies
    ``s[q] = xt[perm[q]]``, i.e. ``P[q, perm[q]] = 1``.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive")
    q = np.arange(M * N)
    m, n = q % M, q // M
    return m * N + n


def permutation_matrix(perm: np.ndarray) -> np.ndarray:
    """Dense 0/1 matrix of an index map (oracle use only)."""
    P = np.zeros((perm.size, perm.size))
    P[np.arange(perm.size), perm] = 1.0
    return P


def isfft(X) -> np.ndarray:
    """Delay-Doppler to time-frequency: F_M X F_N^H."""
    return dft_n(dft_n(_grid(X), "fwd", axis=0), "inv", axis=1)


def sfft(Xtf) -> np.ndarray:
    return dft_n(dft_n(Xtf, "inv", axis=0), "fwd", axis=1)
