"""
Iterative rake (maximal ratio combining) detectors for ZP-OTFS.

Four detectors share one configuration and output type:

``mrc_dd``
    Reference implementation in the delay-Doppler domain with explicit
    circulant blocks. Slow; exists to cross-check ``mrc_dt``.
``mrc_dt``
    The fast path. Keeps the residual noise-plus-interference (RNPI) per
    delay row and updates it in place after every symbol-vector decision,
    so each iteration costs N M' (2L + 1) multiplies plus the transforms
    needed for hard decisions.
``gs_time``
    The same sweep written as N independent Gauss-Seidel (or SOR) solves on
    the dense time-domain blocks. Needs :mod:`zpotfs.linsys` matrices.
``jacobi``
    Parallel-update counterpart of ``gs_time``.

In ``decision="linear"`` mode nothing is sliced, and the first three
detectors produce identical states iteration by iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import DopplerSpreadSet
from .grid import FrameDims, OtfsFrame, QamConstellation, slice_symbols
from .transforms import dd_to_dt, dft_n, dt_to_dd, dt_to_time, time_to_dt

ALGORITHMS = ("mrc_dd", "mrc_dt", "gs_time", "jacobi")
INITIALIZERS = ("zero", "tf_mmse")
DECISIONS = ("hard", "linear")
DEFAULT_SOR_OMEGA = 1.25
DIVISION_FLOOR = 1e-12


@dataclass(frozen=True)
class DetectorConfig:
    """Detector selection and iteration control.

    The sweep exits when the RNPI norm stops decreasing (``stop_on_residual``)
    or falls below ``tol`` times the received-signal norm.
    """

    algorithm: str = "mrc_dt"
    max_iterations: int = 20
    omega: float = 1.0
    initializer: str = "zero"
    decision: str = "hard"
    tol: float = 1e-12
    stop_on_residual: bool = True
    keep_states: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.initializer not in INITIALIZERS:
            raise ValueError(f"unknown initializer {self.initializer!r}")
        if self.decision not in DECISIONS:
            raise ValueError(f"unknown decision mode {self.decision!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.omega < 2.0:
            raise ValueError(f"relaxation omega must lie in (0, 2), got {self.omega}")

    @classmethod
    def sor(cls, omega: float | None = None, **kwargs) -> DetectorConfig:
        return cls(omega=DEFAULT_SOR_OMEGA if omega is None else omega, **kwargs)


@dataclass
class OpCount:
    """Complex multiplies spent inside detector iterations."""

    core: int = 0
    transforms: int = 0

    @property
    def total(self) -> int:
        return self.core + self.transforms


@dataclass
class DetectorOutput:
    x_hat: OtfsFrame
    soft: np.ndarray = field(repr=False)
    x_dt: np.ndarray = field(repr=False)
    iterations_used: int
    residual_history: list
    op_count: OpCount
    skipped: int = 0
    states: list = field(default_factory=list, repr=False)
    rnpi: np.ndarray | None = field(default=None, repr=False)


def _fft_mults(N: int) -> int:
    # one length-N transform is booked as N log2 N multiplies
    return int(round(N * np.log2(N))) if N > 1 else 0


def _finish(dims: FrameDims, constellation: QamConstellation, x_dt: np.ndarray, soft_dd: np.ndarray,
            config: DetectorConfig, history, ops, skipped, states, rnpi=None) -> DetectorOutput:
    X = np.zeros((dims.M, dims.N), dtype=complex)
    X[: dims.M_data] = slice_symbols(soft_dd, constellation)
    return DetectorOutput(
        x_hat=OtfsFrame(dims, X),
        soft=soft_dd,
        x_dt=x_dt,
        iterations_used=len(history) - 1,
        residual_history=history,
        op_count=ops,
        skipped=skipped,
        states=states,
        rnpi=rnpi,
    )


def _should_stop(history, config: DetectorConfig, ref_norm: float) -> bool:
    if history[-1] <= config.tol * ref_norm:
        return True
    return config.stop_on_residual and history[-1] >= history[-2]


# ---------------------------------------------------------------------------
# initial estimate


def tf_mmse_init(r, spread: DopplerSpreadSet, sigma2: float) -> np.ndarray:
    """Single-tap time-frequency MMSE estimate under the ideal-pulse model.

    Returns the M x N delay-time estimate with zero-padded rows cleared.
    """
    dims = spread.dims
    M, N = dims.M, dims.N
    V = np.zeros((M, N), dtype=complex)
    for li, l in enumerate(spread.taps):
        V[l] = spread.nu_t[li, l]
    H_tf = np.fft.fft(V, axis=0)
    Y_tf = dft_n(time_to_dt(r, M, N), "fwd", axis=0)
    den = np.abs(H_tf) ** 2 + sigma2
    X_tf = np.divide(H_tf.conj() * Y_tf, den, out=np.zeros_like(Y_tf), where=den > 0)
    x0 = dft_n(X_tf, "inv", axis=0)
    x0[dims.M_data :] = 0
    return x0


def initial_estimate(config: DetectorConfig, r, spread: DopplerSpreadSet, sigma2: float) -> np.ndarray:
    if config.initializer == "tf_mmse":
        return tf_mmse_init(r, spread, sigma2)
    return np.zeros((spread.dims.M, spread.dims.N), dtype=complex)


# ---------------------------------------------------------------------------
# delay-time MRC (fast path)


class DelayTimeSweeper:
    """State of the delay-time MRC sweep: estimates and RNPI rows.

    ``x`` is the M x N delay-time estimate (rows >= M' stay zero) and ``dy``
    the M x N RNPI. One call to :meth:`sweep` is one detector iteration.
    """

    def __init__(self, yt: np.ndarray, spread: DopplerSpreadSet, x0: np.ndarray | None = None):
        dims = spread.dims
        self.dims = dims
        self.spread = spread
        self.yt = np.asarray(yt, dtype=complex)
        Md = dims.M_data
        taps = spread.taps
        # branch[m, li] = nu_t of tap li at receive row m + l
        self.branch = np.stack([spread.nu_t[li, l:l + Md] for li, l in enumerate(taps)], axis=1)
        self.branch_conj = self.branch.conj()
        self.rows = np.arange(Md)[:, None] + taps[None, :]
        d = spread.d_t
        self.skip_mask = d < DIVISION_FLOOR
        self.inv_d = np.divide(1.0, d, out=np.zeros_like(d), where=~self.skip_mask)
        self.n_skip_per_sweep = int(self.skip_mask.sum())
        self.set_estimate(np.zeros_like(self.yt) if x0 is None else x0)

    def set_estimate(self, x: np.ndarray) -> None:
        """Replace the estimate and recompute the RNPI from scratch."""
        dims = self.dims
        self.x = np.array(x, dtype=complex)
        self.x[dims.M_data :] = 0
        self.dy = self.yt.copy()
        for li, l in enumerate(self.spread.taps):
            self.dy[l:] -= self.spread.nu_t[li, l:] * self.x[: dims.M - l]

    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.dy))

    def sweep(self, omega: float, constellation: QamConstellation | None, ops: OpCount) -> np.ndarray:
        """One sequential pass over the data rows; returns the soft rows c_t."""
        dims = self.dims
        N, L = dims.N, self.spread.L
        x, dy = self.x, self.dy
        branch, branch_conj, inv_d, rows = self.branch, self.branch_conj, self.inv_d, self.rows
        soft = np.empty((dims.M_data, N), dtype=complex)
        fft_cost = 2 * _fft_mults(N)
        for m in range(dims.M_data):
            idx = rows[m]
            dg = np.einsum("ln,ln->n", branch_conj[m], dy[idx])
            c = x[m] + omega * dg * inv_d[m]
            soft[m] = c
            if constellation is None:
                xn = c
            else:
                xn = dft_n(slice_symbols(dft_n(c, "fwd"), constellation), "inv")
                ops.transforms += fft_cost
            dy[idx] -= branch[m] * (xn - x[m])
            x[m] = xn
            ops.core += (2 * L + 1) * N
        return soft


def detect_mrc_dt(yt, spread: DopplerSpreadSet, config: DetectorConfig,
                  constellation: QamConstellation, sigma2: float = 0.0,
                  x0: np.ndarray | None = None) -> DetectorOutput:
    """Delay-time MRC with decision feedback and optional over-relaxation.

    ``yt`` is the M x N received delay-time matrix. ``x0`` overrides the
    configured initializer (delay-time, M x N).
    """
    dims = spread.dims
    yt = np.asarray(yt, dtype=complex)
    if yt.shape != (dims.M, dims.N):
        raise ValueError(f"received matrix shape {yt.shape} != ({dims.M}, {dims.N})")
    if x0 is None:
        x0 = initial_estimate(config, dt_to_time(yt), spread, sigma2)
    sw = DelayTimeSweeper(yt, spread, x0)
    hard = constellation if config.decision == "hard" else None
    ops = OpCount()
    history = [sw.residual_norm()]
    ref = float(np.linalg.norm(yt))
    states = []
    soft = sw.x[: dims.M_data].copy()
    skipped = 0
    for _ in range(config.max_iterations):
        soft = sw.sweep(config.omega, hard, ops)
        skipped += sw.n_skip_per_sweep
        history.append(sw.residual_norm())
        if config.keep_states:
            states.append(sw.x[: dims.M_data].copy())
        if _should_stop(history, config, ref):
            break
    soft_dd = dt_to_dd(soft) if hard is not None else dt_to_dd(sw.x[: dims.M_data])
    return _finish(dims, constellation, sw.x, soft_dd, config, history, ops, skipped, states, sw.dy)


# ---------------------------------------------------------------------------
# delay-Doppler MRC (reference)


def detect_mrc_dd(y, spread: DopplerSpreadSet, config: DetectorConfig,
                  constellation: QamConstellation, sigma2: float = 0.0,
                  x0: np.ndarray | None = None) -> DetectorOutput:
    """Delay-Doppler MRC with explicit circulant blocks and DFE ordering.

    ``y`` is the received M x N delay-Doppler grid; ``x0`` a delay-Doppler
    initial estimate. Doppler bins whose combined channel power falls below
    the division floor keep their previous value.
    """
    from .linsys import circulant

    dims = spread.dims
    M, N, Md = dims.M, dims.N, dims.M_data
    y = np.asarray(y, dtype=complex)
    taps = [int(t) for t in spread.taps]
    K = {(m, l): circulant(spread.nu[li, m]) for li, l in enumerate(taps) for m in range(l, M)}
    if x0 is None:
        x0 = dt_to_dd(initial_estimate(config, dt_to_time(dd_to_dt(y)), spread, sigma2))
    x = np.array(x0, dtype=complex)
    x[Md:] = 0
    skip = spread.d_t < DIVISION_FLOOR
    D = [sum(K[m + l, l].conj().T @ K[m + l, l] for l in taps) for m in range(Md)]

    def xhat(k):
        return x[k] if 0 <= k < Md else None

    def residual():
        dy = y.copy()
        for (m, l), Kml in K.items():
            if m - l < Md:
                dy[m] -= Kml @ x[m - l]
        return float(np.linalg.norm(dy))

    def combine(m, g):
        if not skip[m].any():
            return np.linalg.solve(D[m], g)
        # restricted inverse on the Doppler-time bins with usable power
        dt = spread.d_t[m]
        step = dft_n(g - D[m] @ x[m], "inv")
        step = np.divide(step, dt, out=np.zeros_like(step), where=~skip[m])
        return x[m] + dft_n(step, "fwd")

    history = [residual()]
    ref = float(np.linalg.norm(y))
    states, soft = [], x[:Md].copy()
    skipped = 0
    for _ in range(config.max_iterations):
        soft = np.empty((Md, N), dtype=complex)
        for m in range(Md):
            g = np.zeros(N, dtype=complex)
            for l in taps:
                b = y[m + l].copy()
                for p in taps:
                    k = m + l - p
                    if p != l and xhat(k) is not None:
                        b -= K[m + l, p] @ x[k]
                g += K[m + l, l].conj().T @ b
            c = combine(m, g)
            c = x[m] + config.omega * (c - x[m])
            soft[m] = c
            x[m] = c if config.decision == "linear" else slice_symbols(c, constellation)
        skipped += int(skip.sum())
        history.append(residual())
        if config.keep_states:
            states.append(dd_to_dt(x[:Md]))
        if _should_stop(history, config, ref):
            break
    soft_dd = soft if config.decision == "hard" else x[:Md].copy()
    return _finish(dims, constellation, dd_to_dt(x), soft_dd, config, history,
                   OpCount(), skipped, states)


# ---------------------------------------------------------------------------
# time-domain Gauss-Seidel / Jacobi on dense blocks


def _time_iterate(r, matrices, config: DetectorConfig, constellation, x0_dt, update):
    M, N, Md = matrices.M, matrices.N, matrices.M_data
    r = np.asarray(r, dtype=complex)
    rb = r.reshape(N, M)
    z = matrices.z(r)
    if x0_dt is None:
        s = np.zeros((N, Md), dtype=complex)
    else:
        s = np.asarray(x0_dt, dtype=complex)[:Md].T.copy()

    def residual():
        return float(np.sqrt(sum(np.linalg.norm(rb[n] - matrices.Gd[n] @ s[n]) ** 2 for n in range(N))))

    history = [residual()]
    ref = float(np.linalg.norm(r))
    states = []
    for _ in range(config.max_iterations):
        for n in range(N):
            s[n] = update(n, s[n], z[n])
        history.append(residual())
        if config.keep_states:
            states.append(s.T.copy())
        if _should_stop(history, config, ref):
            break
    x_dt = np.zeros((M, N), dtype=complex)
    x_dt[:Md] = s.T
    dims = FrameDims(M, N, M - Md)
    return _finish(dims, constellation, x_dt, dt_to_dd(x_dt[:Md]), config, history,
                   OpCount(), 0, states)


def detect_gs_time(r, matrices, config: DetectorConfig, constellation: QamConstellation,
                   x0_dt: np.ndarray | None = None) -> DetectorOutput:
    """Blockwise Gauss-Seidel (SOR when omega != 1) on R_n s_n = z_n.

    The blocks never slice, so this matches ``mrc_dt`` only in linear mode.
    """
    omega = config.omega
    T, Q = [], []
    for n in range(matrices.N):
        diag = np.diag(matrices.D[n])
        if np.any(np.abs(diag) < DIVISION_FLOOR):
            raise np.linalg.LinAlgError(f"D_n + omega L_n is singular for block n={n}")
        T.append(matrices.T_sor(n, omega))
        Q.append(matrices.Q_sor(n, omega))
    return _time_iterate(r, matrices, config, constellation, x0_dt,
                         lambda n, s, z: -T[n] @ s + Q[n] @ z)


def detect_jacobi(r, matrices, config: DetectorConfig, constellation: QamConstellation,
                  x0_dt: np.ndarray | None = None) -> DetectorOutput:
    """Parallel-update (Jacobi) counterpart; ``omega`` damps the step."""
    inv_diag = []
    for n in range(matrices.N):
        diag = np.diag(matrices.D[n]).real
        if np.any(diag < DIVISION_FLOOR):
            raise np.linalg.LinAlgError(f"D_n is singular for block n={n}")
        inv_diag.append(1.0 / diag)
    omega = config.omega
    return _time_iterate(r, matrices, config, constellation, x0_dt,
                         lambda n, s, z: s + omega * inv_diag[n] * (z - matrices.R[n] @ s))


def detect(r, spread: DopplerSpreadSet, config: DetectorConfig, constellation: QamConstellation,
           sigma2: float = 0.0, matrices=None) -> DetectorOutput:
    """Run the configured detector on a received time-domain vector."""
    dims = spread.dims
    if config.algorithm == "mrc_dt":
        return detect_mrc_dt(time_to_dt(r, dims.M, dims.N), spread, config, constellation, sigma2)
    if config.algorithm == "mrc_dd":
        return detect_mrc_dd(dt_to_dd(time_to_dt(r, dims.M, dims.N)), spread, config,
                             constellation, sigma2)
    if matrices is None:
        from .linsys import assemble, iteration_matrices

        matrices = iteration_matrices(assemble(spread))
    x0 = initial_estimate(config, r, spread, sigma2)
    fn = detect_gs_time if config.algorithm == "gs_time" else detect_jacobi
    return fn(r, matrices, config, constellation, x0)


# ---------------------------------------------------------------------------
# complexity model


@dataclass(frozen=True)
class OpPrediction:
    core_per_iteration: int
    transforms_per_iteration: int
    init_channel: int
    init_tf_mmse: int

    @property
    def per_iteration(self) -> int:
        return self.core_per_iteration + self.transforms_per_iteration


def _log2_exact(v: int, name: str) -> int:
    k = int(round(np.log2(v)))
    if v < 1 or (1 << k) != v:
        raise ValueError(f"{name}={v} must be a power of two for the complexity model")
    return k


def count_ops(config: DetectorConfig, dims: FrameDims, L: int, P: int | None = None) -> OpPrediction:
    """Closed-form multiply counts of the delay-time MRC detector.

    Per iteration: N M' (2L + 1) core multiplies plus 2 N log2(N) per row for
    hard decisions. Initial work: N M' (P + 2L) for channel vectors,
    residuals and combining weights, and N M (L + 2 log2(M) + 3) for the
    time-frequency initial estimate when it is enabled.
    """
    log_n = _log2_exact(dims.N, "N")
    log_m = _log2_exact(dims.M, "M")
    P = L if P is None else P
    NMd = dims.N * dims.M_data
    transforms = 2 * NMd * log_n if config.decision == "hard" else 0
    tf = dims.N * dims.M * (L + 2 * log_m + 3) if config.initializer == "tf_mmse" else 0
    return OpPrediction(NMd * (2 * L + 1), transforms, NMd * (P + 2 * L), tf)

