"""
CP-OFDM comparison system with a single-tap MMSE equalizer.

The OFDM frame occupies the same N M samples as a ZP-OTFS frame: N symbols
of M' = M - l_max subcarriers, each preceded by an l_max-sample cyclic
prefix. Guard overhead and bits per frame therefore match the OTFS frame
exactly. The data grid is laid out like the OTFS data rows: column n is OFDM
symbol n, row k its subcarrier k.
"""

from __future__ import annotations

import numpy as np

from .channel import DopplerSpreadSet
from .grid import FrameDims, QamConstellation, demap, map_bits, slice_symbols
from .transforms import dft_n
from .turbo import bit_llrs


def ofdm_modulate(grid: np.ndarray, dims: FrameDims) -> np.ndarray:
    """Time samples of an M' x N subcarrier grid, prefix first in each block."""
    grid = np.asarray(grid, dtype=complex)
    if grid.shape != (dims.M_data, dims.N):
        raise ValueError(f"OFDM grid shape {grid.shape} != ({dims.M_data}, {dims.N})")
    body = dft_n(grid, "inv", axis=0)
    blocks = np.concatenate([body[dims.M_data - dims.l_max :], body], axis=0)
    return blocks.reshape(-1, order="F")


def ofdm_tx(bits, constellation: QamConstellation, dims: FrameDims) -> np.ndarray:
    return ofdm_modulate(map_bits(bits, constellation, dims).data, dims)


def symbol_responses(spread: DopplerSpreadSet) -> np.ndarray:
    """Per-symbol subcarrier response from a mid-symbol snapshot of the taps.

    Returns an M' x N array; column n uses the tap gains at sample
    ``n M + l_max + M' // 2``.
    """
    dims = spread.dims
    Md = dims.M_data
    q_mid = np.arange(dims.N) * dims.M + dims.l_max + Md // 2
    g = spread.time_gains()[:, q_mid]
    k = np.arange(Md)
    phase = np.exp(-2j * np.pi * np.outer(k, spread.taps) / Md)
    return phase @ g


def ofdm_equalize(r, spread: DopplerSpreadSet, sigma2: float):
    """Single-tap MMSE outputs and the per-subcarrier post-equalizer variance.

    Returns ``(x_mmse, x_unbiased, var)``; ``x_unbiased = Y / H`` carries
    noise variance ``sigma2 / |H|^2`` and feeds the soft demapper.
    """
    dims = spread.dims
    r = np.asarray(r, dtype=complex)
    if r.size != dims.size:
        raise ValueError(f"received {r.size} samples, frame has {dims.size}")
    blocks = r.reshape(dims.M, dims.N, order="F")[dims.l_max :]
    Y = dft_n(blocks, "fwd", axis=0)
    H = symbol_responses(spread)
    p = np.abs(H) ** 2
    den = p + sigma2
    x_mmse = np.divide(H.conj() * Y, den, out=np.zeros_like(Y), where=den > 0)
    x_unbiased = np.divide(Y, H, out=np.zeros_like(Y), where=p > 0)
    var = np.divide(sigma2, p, out=np.full(p.shape, np.inf), where=p > 0)
    return x_mmse, x_unbiased, np.maximum(var, 1e-12)


def ofdm_rx_mmse(r, spread: DopplerSpreadSet, sigma2: float,
                 constellation: QamConstellation) -> np.ndarray:
    """Hard-decision bits, in the same order :func:`ofdm_tx` consumed them."""
    x_mmse, _, _ = ofdm_equalize(r, spread, sigma2)
    return demap(slice_symbols(x_mmse, constellation), constellation)


def ofdm_llrs(r, spread: DopplerSpreadSet, sigma2: float, constellation: QamConstellation,
              exact: bool = False) -> np.ndarray:
    """Bit LLRs for the bit-interleaved coded variant, flattened like the bits."""
    _, x_u, var = ofdm_equalize(r, spread, sigma2)
    return bit_llrs(x_u, var, constellation, exact=exact).reshape(-1)
