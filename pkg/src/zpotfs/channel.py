"""
Multipath channel generation, discretisation and application.

A physical channel is a list of paths (gain, normalised delay, normalised
Doppler). The detectors consume it as per-tap Doppler spread vectors on the
frame grid:

* ``nu_t[li, m, n]``  delay-time gain of tap ``taps[li]`` seen at row m,
  time slot n; equal to g^s(l, m + n M).
* ``nu[li, m, k]``    its Doppler-domain counterpart. For integer Doppler the
  only nonzero entry is ``h * z**(kappa (m - l))`` at ``k = kappa mod N``.

The pair is related by ``nu = F_N nu_t / sqrt(N)`` so that the circulant
block ``circ(nu[li, m])`` equals ``F_N diag(nu_t[li, m]) F_N^H``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import FrameDims

EVA_POWER_DB = (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)
EVA_DELAY_TAPS = (0, 1, 2, 3, 4, 5, 8, 13, 19)


@dataclass
class PathSet:
    """Physical paths of one channel realisation on a given frame grid."""

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray
    dims: FrameDims

    def __post_init__(self):
        self.gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        self.delays = np.atleast_1d(np.asarray(self.delays, dtype=float))
        self.dopplers = np.atleast_1d(np.asarray(self.dopplers, dtype=float))
        if not (self.gains.shape == self.delays.shape == self.dopplers.shape):
            raise ValueError("gains, delays and dopplers must have the same length")
        if self.gains.size == 0:
            raise ValueError("a PathSet needs at least one path")
        if np.any(self.delays < 0) or np.any(self.delays > self.dims.l_max):
            raise ValueError(f"path delays must lie in [0, l_max={self.dims.l_max}]")
        if np.any(np.abs(self.dopplers) >= self.dims.N / 2):
            raise ValueError(f"|doppler| must be < N/2 = {self.dims.N / 2}")

    @property
    def P(self) -> int:
        return self.gains.size

    def normalized(self) -> PathSet:
        power = np.sum(np.abs(self.gains) ** 2)
        return PathSet(self.gains / np.sqrt(power), self.delays, self.dopplers, self.dims)

    def to_json(self) -> dict:
        return {
            "paths": [
                {"re": float(g.real), "im": float(g.imag), "delay": float(d), "doppler": float(k)}
                for g, d, k in zip(self.gains, self.delays, self.dopplers)
            ],
            "M": self.dims.M,
            "N": self.dims.N,
            "l_max": self.dims.l_max,
            "delta_f": self.dims.delta_f,
        }

    @classmethod
    def from_json(cls, doc: dict) -> PathSet:
        try:
            dims = FrameDims(int(doc["M"]), int(doc["N"]), int(doc["l_max"]),
                             float(doc.get("delta_f", 15e3)))
            paths = doc["paths"]
            gains = [complex(p["re"], p["im"]) for p in paths]
            delays = [p["delay"] for p in paths]
            dopplers = [p["doppler"] for p in paths]
        except KeyError as exc:
            raise ValueError(f"PathSet document is missing key {exc}") from None
        return cls(gains, delays, dopplers, dims)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> PathSet:
        return cls.from_json(json.loads(Path(path).read_text()))


def flat_paths(dims: FrameDims) -> PathSet:
    return PathSet([1.0], [0], [0.0], dims)


def doppler_hz_to_normalized(nu_hz: float, dims: FrameDims) -> float:
    """kappa = nu N T."""
    return nu_hz * dims.N / dims.delta_f


def _complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def eva_delays(l_max: int) -> tuple[np.ndarray, np.ndarray]:
    """EVA tap delays fitted to ``l_max`` and linear powers merged per tap.

    Returns ``(delays, powers)`` with powers normalised to unit sum.
    """
    if l_max < 1:
        raise ValueError("EVA profile needs l_max >= 1")
    taps = np.asarray(EVA_DELAY_TAPS, dtype=float)
    powers = 10.0 ** (np.asarray(EVA_POWER_DB) / 10.0)
    if l_max < EVA_DELAY_TAPS[-1]:
        taps = np.round(taps * l_max / EVA_DELAY_TAPS[-1])
    delays = np.unique(taps)
    merged = np.array([powers[taps == d].sum() for d in delays])
    return delays.astype(int), merged / merged.sum()


def eva_paths(dims: FrameDims, max_doppler_hz: float, rng_seed=None,
              normalize: str = "realization") -> PathSet:
    """Rayleigh EVA-profile channel with one Doppler-shifted path per tap.

    Dopplers are drawn from U(0, max_doppler_hz). ``normalize="realization"``
    scales the drawn gains to unit total power; ``"average"`` keeps the
    Rayleigh power fluctuation with unit mean.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    delays, powers = eva_delays(dims.l_max)
    gains = np.sqrt(powers) * _complex_normal(rng, delays.size)
    kappa_max = doppler_hz_to_normalized(max_doppler_hz, dims)
    dopplers = rng.uniform(0.0, 1.0, delays.size) * kappa_max
    paths = PathSet(gains, delays, dopplers, dims)
    if normalize == "realization":
        return paths.normalized()
    if normalize != "average":
        raise ValueError(f"normalize must be 'realization' or 'average', got {normalize!r}")
    return paths


def random_paths(dims: FrameDims, n_paths: int, rng, max_doppler: float = 1.0,
                 integer_doppler: bool = False, include_zero_delay: bool = True) -> PathSet:
    """Random test channel: distinct integer delays, Rayleigh gains.

    ``max_doppler`` is in normalised units (kappa); Dopplers are uniform in
    [-max_doppler, max_doppler].
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if n_paths > dims.l_max + 1:
        raise ValueError("more paths than available delay taps")
    if include_zero_delay:
        rest = rng.choice(np.arange(1, dims.l_max + 1), n_paths - 1, replace=False)
        delays = np.concatenate([[0], rest])
    else:
        delays = rng.choice(np.arange(dims.l_max + 1), n_paths, replace=False)
    gains = _complex_normal(rng, n_paths)
    dopplers = rng.uniform(-max_doppler, max_doppler, n_paths)
    if integer_doppler:
        dopplers = np.round(dopplers)
    return PathSet(gains, np.sort(delays), dopplers, dims).normalized()


@dataclass
class DopplerSpreadSet:
    """Per-tap Doppler spread vectors of a discretised channel."""

    dims: FrameDims
    taps: np.ndarray
    nu_t: np.ndarray = field(repr=False)
    nu: np.ndarray = field(repr=False)
    d_t: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return int(self.taps.size)

    def tap_index(self, l: int) -> int | None:
        hits = np.flatnonzero(self.taps == l)
        return int(hits[0]) if hits.size else None

    def time_gains(self) -> np.ndarray:
        """g^s(l, q) for every tap as an (L, NM) array indexed by q = m + n M."""
        return self.nu_t.reshape(self.L, -1, order="F")


def zeta(x, N: int) -> np.ndarray:
    """Periodic sinc N^-1/2 sum_n exp(j 2 pi x n / N), evaluated in closed form."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape, dtype=complex)
    near_int = np.abs(x - np.round(x)) < 1e-12
    # the closed form is 0/0 at integers; its limit there is sqrt(N) or 0
    xi = np.round(x[near_int]).astype(int)
    out[near_int] = np.where(xi % N == 0, np.sqrt(N), 0.0)
    xf = x[~near_int]
    out[~near_int] = (np.sin(np.pi * xf) / np.sin(np.pi * xf / N)
                      * np.exp(1j * np.pi * xf * (N - 1) / N) / np.sqrt(N))
    return out


def discretize(paths: PathSet, mode: str = "fractional") -> DopplerSpreadSet:
    """Sample a PathSet onto the frame grid.

    ``mode="integer"`` rounds each Doppler to the nearest bin and places the
    Doppler-domain entries directly; ``mode="fractional"`` evaluates the
    delay-time gains exactly and transforms them.
    """
    dims = paths.dims
    M, N = dims.M, dims.N
    if np.any(paths.delays != np.round(paths.delays)):
        raise ValueError("only integer path delays are supported")
    if mode not in ("integer", "fractional"):
        raise ValueError(f"mode must be 'integer' or 'fractional', got {mode!r}")
    delays = paths.delays.astype(int)
    taps = np.unique(delays)
    MN = M * N
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    nu_t = np.zeros((taps.size, M, N), dtype=complex)
    nu = np.zeros((taps.size, M, N), dtype=complex)
    for li, l in enumerate(taps):
        for h, kappa in zip(paths.gains[delays == l], paths.dopplers[delays == l]):
            if mode == "integer":
                k = int(np.round(kappa))
                nu[li, :, k % N] += h * np.exp(2j * np.pi * k * (np.arange(M) - l) / MN)
            else:
                nu_t[li] += h * np.exp(2j * np.pi * kappa * ((m - l) + n * M) / MN)
        if mode == "integer":
            nu_t[li] = np.fft.ifft(nu[li], axis=1) * N
        else:
            nu[li] = np.fft.fft(nu_t[li], axis=1) / N
    d_t = np.zeros((dims.M_data, N))
    for li, l in enumerate(taps):
        rows = nu_t[li, l : l + dims.M_data]
        d_t += rows.real**2 + rows.imag**2
    return DopplerSpreadSet(dims, taps, nu_t, nu, d_t)


def delay_time_gain(spread: DopplerSpreadSet, l: int, q: int) -> complex:
    """g^s(l, q): gain of delay tap ``l`` at time sample ``q = m + n M``."""
    dims = spread.dims
    if not 0 <= q < dims.size:
        raise ValueError(f"time index q={q} outside [0, {dims.size})")
    if not 0 <= l <= dims.l_max:
        raise ValueError(f"delay index l={l} outside [0, {dims.l_max}]")
    li = spread.tap_index(l)
    if li is None:
        return 0j
    return complex(spread.nu_t[li, q % dims.M, q // dims.M])


def noise_variance(snr_db: float) -> float:
    return 0.0 if np.isinf(snr_db) and snr_db > 0 else float(10.0 ** (-snr_db / 10.0))


def propagate(s, spread: DopplerSpreadSet) -> np.ndarray:
    """Noiseless r(q) = sum_l g^s(l, q) s(q - l); terms with q - l < 0 vanish."""
    s = np.asarray(s, dtype=complex)
    if s.size != spread.dims.size:
        raise ValueError(f"signal has {s.size} samples, frame has {spread.dims.size}")
    g = spread.time_gains()
    r = np.zeros_like(s)
    for li, l in enumerate(spread.taps):
        r[l:] += g[li, l:] * s[: s.size - l]
    return r


def apply_channel(s, spread: DopplerSpreadSet, snr_db: float, rng_seed=None):
    """Pass ``s`` through the channel and add complex AWGN.

    Returns ``(r, sigma2)`` with per-sample noise variance
    ``sigma2 = 10**(-snr_db/10)``; ``snr_db = inf`` gives a noiseless output.
    """
    r = propagate(s, spread)
    sigma2 = noise_variance(snr_db)
    if sigma2 > 0:
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        r = r + np.sqrt(sigma2) * _complex_normal(rng, r.size)
    return r, sigma2
