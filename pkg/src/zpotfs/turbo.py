"""
Turbo rake receiver: soft demapping, LDPC decoding and hard feedback.

Each turbo iteration runs one delay-time MRC sweep, estimates the
post-combining noise variance per delay row, computes bit LLRs, decodes
every codeword in the frame and feeds the re-encoded, re-modulated symbols
back as the next detector estimate.

LLR sign convention: positive means bit 0 is more likely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .channel import DopplerSpreadSet
from .detect import DelayTimeSweeper, OpCount, tf_mmse_init
from .grid import FrameDims, OtfsFrame, QamConstellation, bits_per_frame, map_bits
from .transforms import dd_to_dt, dt_to_dd, time_to_dt

VARIANCE_FLOOR = 1e-12
MIN_SUM_SCALE = 0.75
DEFAULT_CODE = "ldpc_512_256.alist"


# ---------------------------------------------------------------------------
# LDPC code


@dataclass
class LdpcCode:
    """Binary LDPC code given by its parity-check adjacency.

    ``check_vars[i]`` lists the variable nodes of check ``i``. The encoder is
    systematic on ``info_cols``.
    """

    n: int
    check_vars: list = field(repr=False)
    k: int = 0
    info_cols: np.ndarray = field(default=None, repr=False)
    parity_cols: np.ndarray = field(default=None, repr=False)
    parity_map: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        m = len(self.check_vars)
        for row in self.check_vars:
            if len(row) == 0 or min(row) < 0 or max(row) >= self.n:
                raise ValueError("check adjacency refers to variables outside [0, n)")
        # padded check-to-variable table for vectorized decoding
        dmax = max(len(r) for r in self.check_vars)
        self.edge_var = np.full((m, dmax), -1, dtype=np.int64)
        for i, row in enumerate(self.check_vars):
            self.edge_var[i, : len(row)] = sorted(row)
        self.edge_mask = self.edge_var >= 0
        if self.info_cols is None:
            self._build_encoder()

    @property
    def m(self) -> int:
        return len(self.check_vars)

    @property
    def rate(self) -> float:
        return self.k / self.n

    def dense(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        for i, row in enumerate(self.check_vars):
            H[i, row] = 1
        return H

    def _build_encoder(self):
        R, pivots = gf2_rref(self.dense())
        free = np.setdiff1d(np.arange(self.n), pivots)
        self.k = free.size
        self.info_cols = free
        self.parity_cols = np.asarray(pivots, dtype=np.int64)
        # parity bit at pivots[i] = sum_j R[i, free_j] u_j (mod 2)
        self.parity_map = R[: len(pivots)][:, free]

    def encode(self, info_bits) -> np.ndarray:
        u = np.asarray(info_bits, dtype=np.uint8)
        if u.shape[-1] != self.k:
            raise ValueError(f"need {self.k} information bits per codeword, got {u.shape[-1]}")
        c = np.zeros(u.shape[:-1] + (self.n,), dtype=np.uint8)
        c[..., self.info_cols] = u
        c[..., self.parity_cols] = (u.astype(np.int64) @ self.parity_map.T.astype(np.int64)) % 2
        return c

    def info_bits(self, codeword) -> np.ndarray:
        return np.asarray(codeword)[..., self.info_cols]

    def syndrome_ok(self, bits) -> bool:
        b = np.asarray(bits, dtype=np.int64)
        pad = np.append(b, 0)
        return not np.any(pad[self.edge_var].sum(axis=1) % 2)


def gf2_rref(H: np.ndarray):
    """Reduced row echelon form over GF(2); returns ``(R, pivot_columns)``."""
    R = np.array(H, dtype=np.uint8) % 2
    m, n = R.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        hits = np.flatnonzero(R[row:, col])
        if hits.size == 0:
            continue
        p = row + hits[0]
        if p != row:
            R[[row, p]] = R[[p, row]]
        others = np.flatnonzero(R[:, col])
        others = others[others != row]
        R[others] ^= R[row]
        pivots.append(col)
        row += 1
    return R, pivots


def read_alist(path) -> LdpcCode:
    """Parse a parity-check matrix in alist format (1-indexed, zero padded)."""
    try:
        tokens = [int(t) for t in Path(path).read_text().split()]
        n, m = tokens[0], tokens[1]
        pos = 4
        col_deg = tokens[pos : pos + n]
        pos += n
        row_deg = tokens[pos : pos + m]
        pos += m
        dcol, drow = tokens[2], tokens[3]
        cols = []
        for j in range(n):
            cols.append([v - 1 for v in tokens[pos : pos + dcol] if v > 0])
            pos += dcol
        rows = []
        for i in range(m):
            rows.append([v - 1 for v in tokens[pos : pos + drow] if v > 0])
            pos += drow
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed alist file {path}: {exc}") from None
    if [len(c) for c in cols] != col_deg or [len(r) for r in rows] != row_deg:
        raise ValueError(f"malformed alist file {path}: degree lists disagree with adjacency")
    from_cols = sorted((i, j) for j, c in enumerate(cols) for i in c)
    from_rows = sorted((i, j) for i, r in enumerate(rows) for j in r)
    if from_cols != from_rows:
        raise ValueError(f"malformed alist file {path}: row and column lists disagree")
    return LdpcCode(n=n, check_vars=rows)


def write_alist(code: LdpcCode, path) -> None:
    cols = [[] for _ in range(code.n)]
    for i, row in enumerate(code.check_vars):
        for j in row:
            cols[j].append(i)
    dcol = max(len(c) for c in cols)
    drow = max(len(r) for r in code.check_vars)

    def padded(v, d):
        return " ".join(str(x + 1) for x in sorted(v)) + " 0" * (d - len(v))

    lines = [f"{code.n} {code.m}", f"{dcol} {drow}",
             " ".join(str(len(c)) for c in cols),
             " ".join(str(len(r)) for r in code.check_vars)]
    lines += [padded(c, dcol) for c in cols]
    lines += [padded(r, drow) for r in code.check_vars]
    Path(path).write_text("\n".join(lines) + "\n")


def regular_ldpc(n: int, col_weight: int = 3, row_weight: int = 6, seed: int = 0,
                 max_tries: int = 200) -> LdpcCode:
    """Random regular code by socket matching, retried until H has full rank."""
    if (n * col_weight) % row_weight:
        raise ValueError("n * col_weight must be divisible by row_weight")
    m = n * col_weight // row_weight
    rng = np.random.default_rng(seed)
    sockets = np.repeat(np.arange(n), col_weight)
    for _ in range(max_tries):
        perm = rng.permutation(sockets).reshape(m, row_weight)
        if any(len(set(r)) < row_weight for r in perm):
            continue
        code = LdpcCode(n=n, check_vars=[list(map(int, r)) for r in perm])
        if code.k == n - m:
            return code
    raise RuntimeError("could not draw a full-rank regular code")


def default_code() -> LdpcCode:
    """The shipped rate-1/2 (3,6)-regular code with n = 512."""
    with resources.as_file(resources.files("zpotfs.data") / DEFAULT_CODE) as p:
        return read_alist(p)


def ldpc_min_sum(llrs, code: LdpcCode, max_iters: int = 50, scale: float = MIN_SUM_SCALE):
    """Normalized min-sum decoding.

    Returns ``(hard_bits, parity_ok, posterior_llrs)``.
    """
    llr = np.asarray(llrs, dtype=float)
    if llr.size != code.n:
        raise ValueError(f"need {code.n} LLRs, got {llr.size}")
    ev, mask = code.edge_var, code.edge_mask
    ev_safe = np.where(mask, ev, 0)
    c2v = np.zeros(ev.shape)
    total = llr.copy()
    hard = (total < 0).astype(np.uint8)
    if code.syndrome_ok(hard):
        return hard, True, total
    for _ in range(max_iters):
        v2c = np.where(mask, total[ev_safe] - c2v, np.inf)
        sign = np.where(v2c < 0, -1.0, 1.0)
        mag = np.abs(v2c)
        sign_prod = np.prod(sign, axis=1, keepdims=True)
        order = np.argsort(mag, axis=1)
        min1 = np.take_along_axis(mag, order[:, :1], axis=1)
        min2 = np.take_along_axis(mag, order[:, 1:2], axis=1)
        is_min = np.arange(ev.shape[1])[None, :] == order[:, :1]
        c2v = scale * sign_prod * sign * np.where(is_min, min2, min1)
        c2v[~mask] = 0.0
        total = llr + np.bincount(ev_safe[mask], weights=c2v[mask], minlength=code.n)
        hard = (total < 0).astype(np.uint8)
        if code.syndrome_ok(hard):
            return hard, True, total
    return hard, False, total


# ---------------------------------------------------------------------------
# soft demapping


def npi_variance(dy: np.ndarray, spread: DopplerSpreadSet) -> np.ndarray:
    """Per-row post-combining noise-plus-interference variance.

    ``dy`` is the M x N RNPI. Each term weights the residual power of row
    m + l, taken about its mean, by the post-combining gain of branch l.
    """
    dims = spread.dims
    N, Md = dims.N, dims.M_data
    dm = dy - dy.mean(axis=1, keepdims=True)
    trace = np.sum(dm.real**2 + dm.imag**2, axis=1)
    d = spread.d_t
    inv_d = np.divide(1.0, d, out=np.zeros_like(d), where=d >= VARIANCE_FLOOR)
    var = np.zeros(Md)
    for li, l in enumerate(spread.taps):
        eta = np.sum(np.abs(spread.nu_t[li, l : l + Md] * inv_d) ** 2, axis=1)
        var += eta * trace[l : l + Md]
    return np.maximum(var / N**2, VARIANCE_FLOOR)


def _sq_dist(c, constellation: QamConstellation) -> np.ndarray:
    c = np.asarray(c, dtype=complex)
    return np.abs(c[..., None] - constellation.points) ** 2


def bit_llrs(c, sigma2, constellation: QamConstellation, exact: bool = False) -> np.ndarray:
    """Bit LLRs of soft symbols ``c`` with noise variance ``sigma2``.

    Output has shape ``c.shape + (bits_per_symbol,)``. ``sigma2`` must
    broadcast against ``c``.
    """
    d = _sq_dist(c, constellation) / np.asarray(sigma2, dtype=float)[..., None]
    out = np.empty(np.shape(c) + (constellation.bits_per_symbol,))
    for b in range(constellation.bits_per_symbol):
        zero = constellation.labels[:, b] == 0
        if exact:
            out[..., b] = logsumexp(-d[..., zero], axis=-1) - logsumexp(-d[..., ~zero], axis=-1)
        else:
            out[..., b] = d[..., ~zero].min(axis=-1) - d[..., zero].min(axis=-1)
    return out


# ---------------------------------------------------------------------------
# frame coding


@dataclass
class CodedFrameLayout:
    """How codewords fill one frame: interleaved coded bits, then zero padding."""

    dims: FrameDims
    constellation: QamConstellation
    code: LdpcCode
    interleaver: np.ndarray = field(repr=False)

    @property
    def n_codewords(self) -> int:
        return self.interleaver.size // self.code.n

    @property
    def frame_bits(self) -> int:
        return bits_per_frame(self.dims, self.constellation)

    @property
    def info_bits_per_frame(self) -> int:
        return self.n_codewords * self.code.k


def make_layout(dims: FrameDims, constellation: QamConstellation, code: LdpcCode,
                rng) -> CodedFrameLayout:
    """Seeded uniform interleaver over all coded bits of the frame."""
    total = bits_per_frame(dims, constellation)
    n_cw = total // code.n
    if n_cw < 1:
        raise ValueError(f"frame holds {total} bits, fewer than one {code.n}-bit codeword")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return CodedFrameLayout(dims, constellation, code, rng.permutation(n_cw * code.n))


def interleave(coded: np.ndarray, perm: np.ndarray) -> np.ndarray:
    return np.asarray(coded)[perm]


def deinterleave(values: np.ndarray, perm: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    out[perm] = values
    return out


def frame_from_codewords(codewords: np.ndarray, layout: CodedFrameLayout) -> OtfsFrame:
    coded = np.asarray(codewords, dtype=np.uint8).reshape(-1)
    bits = np.zeros(layout.frame_bits, dtype=np.uint8)
    bits[: coded.size] = interleave(coded, layout.interleaver)
    return map_bits(bits, layout.constellation, layout.dims)


def encode_frame(info_bits, layout: CodedFrameLayout):
    """Encode ``n_codewords * k`` info bits; returns ``(frame, codewords)``."""
    u = np.asarray(info_bits, dtype=np.uint8).reshape(layout.n_codewords, layout.code.k)
    cw = layout.code.encode(u)
    return frame_from_codewords(cw, layout), cw


# ---------------------------------------------------------------------------
# turbo loop


@dataclass(frozen=True)
class TurboConfig:
    turbo_iterations: int = 8
    decoder_iterations: int = 50
    omega: float = 1.0
    exact_llr: bool = False


@dataclass
class TurboResult:
    decoded_info: np.ndarray = field(repr=False)
    parity_ok: np.ndarray
    iterations_used: int
    frame: OtfsFrame = field(repr=False)
    sigma2_history: list = field(default_factory=list, repr=False)
    op_count: OpCount = field(default_factory=OpCount)

    @property
    def all_parity_ok(self) -> bool:
        return bool(np.all(self.parity_ok))


def turbo_detect(r, spread: DopplerSpreadSet, layout: CodedFrameLayout, sigma2: float,
                 config: TurboConfig = TurboConfig()) -> TurboResult:
    """Alternate one MRC sweep with LDPC decoding until every codeword checks."""
    dims = spread.dims
    code, const = layout.code, layout.constellation
    n_coded = layout.n_codewords * code.n
    yt = time_to_dt(r, dims.M, dims.N)
    sweeper = DelayTimeSweeper(yt, spread, tf_mmse_init(r, spread, sigma2))
    ops = OpCount()
    history = []
    cw_hat = np.zeros((layout.n_codewords, code.n), dtype=np.uint8)
    ok = np.zeros(layout.n_codewords, dtype=bool)
    it = 0
    for it in range(1, config.turbo_iterations + 1):
        soft_dd = dt_to_dd(sweeper.sweep(config.omega, const, ops))
        var = npi_variance(sweeper.dy, spread)
        history.append(var)
        llr = bit_llrs(soft_dd, var[:, None], const, exact=config.exact_llr).reshape(-1)
        coded_llr = deinterleave(llr[:n_coded], layout.interleaver).reshape(layout.n_codewords, code.n)
        for j in range(layout.n_codewords):
            cw_hat[j], ok[j], _ = ldpc_min_sum(coded_llr[j], code, config.decoder_iterations)
        if ok.all():
            break
        fb = frame_from_codewords(cw_hat, layout)
        sweeper.set_estimate(dd_to_dt(fb.X))
    return TurboResult(
        decoded_info=code.info_bits(cw_hat).reshape(-1),
        parity_ok=ok.copy(),
        iterations_used=it,
        frame=frame_from_codewords(cw_hat, layout),
        sigma2_history=history,
        op_count=ops,
    )
