"""
Delay-Doppler frame layout and square QAM mapping.

A frame is an M x N complex grid. Row m holds the symbol vector x_m
(Doppler index along the row). The last ``l_max`` rows are the zero-padded
guard and never carry data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64)


@dataclass(frozen=True)
class FrameDims:
    """Grid geometry of one zero-padded OTFS frame.

    Attributes:
        M: Number of delay bins.
        N: Number of Doppler bins.
        l_max: Largest discrete delay index; the last ``l_max`` rows are zero.
        delta_f: Subcarrier spacing in Hz. The symbol duration is ``1/delta_f``.
    """

    M: int
    N: int
    l_max: int
    delta_f: float = 15e3

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError(f"M and N must be positive, got M={self.M}, N={self.N}")
        if not 0 <= self.l_max < self.M:
            raise ValueError(f"need 0 <= l_max < M, got l_max={self.l_max}, M={self.M}")
        if self.delta_f <= 0:
            raise ValueError("delta_f must be positive")

    @property
    def T(self) -> float:
        return 1.0 / self.delta_f

    @property
    def M_data(self) -> int:
        """Number of data rows, M' = M - l_max."""
        return self.M - self.l_max

    @property
    def frame_duration(self) -> float:
        return self.N * self.T

    @property
    def bandwidth(self) -> float:
        return self.M * self.delta_f

    @property
    def size(self) -> int:
        return self.M * self.N


def gray_code(n_bits: int) -> np.ndarray:
    i = np.arange(1 << n_bits)
    return i ^ (i >> 1)


@dataclass(frozen=True)
class QamConstellation:
    """Square Gray-mapped QAM with unit average energy.

    Symbol index ``s`` has the bit label ``labels[s]`` (MSB first). The first
    half of the label selects the in-phase level, the second half the
    quadrature level; each axis uses reflected Gray coding.
    """

    order: int
    points: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    @property
    def bits_per_symbol(self) -> int:
        return int(self.labels.shape[1])


@lru_cache(maxsize=None)
def qam(order: int) -> QamConstellation:
    """Return the unit-energy Gray QAM constellation of the given order."""
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported QAM order {order}; choose from {SUPPORTED_ORDERS}")
    k = int(np.log2(order)) // 2
    side = 1 << k
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    # axis_level[label] = PAM level carrying that Gray label
    axis_level = np.empty(side)
    axis_level[gray_code(k)] = levels
    scale = 1.0 / np.sqrt(2.0 * (order - 1) / 3.0)
    idx = np.arange(order)
    points = (axis_level[idx >> k] + 1j * axis_level[idx & (side - 1)]) * scale
    nb = 2 * k
    labels = ((idx[:, None] >> np.arange(nb - 1, -1, -1)) & 1).astype(np.uint8)
    points.setflags(write=False)
    labels.setflags(write=False)
    return QamConstellation(order=order, points=points, labels=labels)


@dataclass
class OtfsFrame:
    dims: FrameDims
    X: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=complex)
        if self.X.shape != (self.dims.M, self.dims.N):
            raise ValueError(f"frame shape {self.X.shape} != ({self.dims.M}, {self.dims.N})")

    @property
    def data(self) -> np.ndarray:
        return self.X[: self.dims.M_data]

    def zp_is_zero(self) -> bool:
        return not np.any(self.X[self.dims.M_data :])


def bits_per_frame(dims: FrameDims, constellation: QamConstellation) -> int:
    return dims.M_data * dims.N * constellation.bits_per_symbol


def bits_to_indices(bits: np.ndarray, bps: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, bps)
    return bits @ (1 << np.arange(bps - 1, -1, -1))


def modulate(bits, constellation: QamConstellation) -> np.ndarray:
    """Map a flat bit array to symbols, ``bits_per_symbol`` bits per symbol."""
    bits = np.asarray(bits)
    if bits.size % constellation.bits_per_symbol:
        raise ValueError("bit count is not a multiple of bits per symbol")
    return constellation.points[bits_to_indices(bits, constellation.bits_per_symbol)]


def map_bits(bits, constellation: QamConstellation, dims: FrameDims) -> OtfsFrame:
    """Fill the data rows of a frame, Doppler index fastest within each row."""
    bits = np.asarray(bits)
    need = bits_per_frame(dims, constellation)
    if bits.size != need:
        raise ValueError(f"length mismatch: got {bits.size} bits, frame needs {need}")
    X = np.zeros((dims.M, dims.N), dtype=complex)
    X[: dims.M_data] = modulate(bits, constellation).reshape(dims.M_data, dims.N)
    return OtfsFrame(dims, X)


def nearest_index(values, constellation: QamConstellation) -> np.ndarray:
    """Index of the nearest point; ties go to the lowest index."""
    v = np.asarray(values, dtype=complex)
    dist = np.abs(v[..., None] - constellation.points) ** 2
    return np.argmin(dist, axis=-1)


def slice_symbols(values, constellation: QamConstellation) -> np.ndarray:
    return constellation.points[nearest_index(values, constellation)]


def slice(value: complex, constellation: QamConstellation):
    """Hard decision on a single value: ``(symbol, bits)``."""
    idx = int(nearest_index(value, constellation))
    return constellation.points[idx], constellation.labels[idx].copy()


def demap(values, constellation: QamConstellation) -> np.ndarray:
    """Hard-decision bits for an array of (soft) symbols, flattened in C order."""
    return constellation.labels[nearest_index(values, constellation)].reshape(-1)


def demap_frame(frame: OtfsFrame, constellation: QamConstellation) -> np.ndarray:
    return demap(frame.data, constellation)
