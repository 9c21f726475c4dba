"""
Monte-Carlo sweeps, audits and result persistence.

Randomness: every frame draws from its own Philox stream keyed by
``(seed << 64) | stream`` with ``stream = (snr_index << 32) | frame_index``.
Streams are therefore independent of frame order and of other SNR points,
and a run is reproducible from (config, seed) alone. Each frame consumes
its stream in a fixed order: channel, info bits, interleaver (coded modes
only), noise.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baseline_ofdm import ofdm_rx_mmse, ofdm_tx
from .channel import PathSet, apply_channel, discretize, eva_paths, flat_paths
from .detect import DetectorConfig, count_ops, detect, detect_gs_time, detect_mrc_dd, detect_mrc_dt
from .grid import FrameDims, bits_per_frame, demap_frame, map_bits, qam
from .linsys import assemble, is_singular, iteration_matrices, spectral_radius
from .transforms import dd_to_time, time_to_dd, time_to_dt
from .turbo import (TurboConfig, deinterleave, default_code, encode_frame, make_layout, read_alist,
                    turbo_detect)

MODES = ("uncoded-ber", "turbo-fer", "ofdm-baseline", "equivalence-audit", "radius-audit")
CHANNELS = ("eva", "file", "flat")
CSV_COLUMNS = ("snr_db", "ber", "fer", "ber_ci_lo", "ber_ci_hi", "mean_iters", "ops_per_frame")


class ConfigError(ValueError):
    """Invalid sweep configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class SweepConfig:
    """Flat sweep description, loadable from a single JSON document."""

    mode: str = "uncoded-ber"
    M: int = 64
    N: int = 16
    l_max: int = 7
    delta_f: float = 15e3
    channel: str = "eva"
    channel_file: str | None = None
    max_doppler_hz: float = 1875.0
    doppler_mode: str = "fractional"
    qam: int = 4
    algorithm: str = "mrc_dt"
    omega: tuple = (1.0,)
    initializer: str = "tf_mmse"
    decision: str = "hard"
    max_iterations: int = 50
    snr_db: tuple = (10.0, 15.0, 20.0)
    min_frames: int = 100
    max_frames: int = 1000
    target_frame_errors: int = 100
    seed: int = 0
    turbo_iterations: int = 8
    decoder_iterations: int = 50
    ldpc_file: str | None = None
    audit_channels: int = 20
    audit_iterations: int = 15
    radius_omegas: tuple = (0.5, 1.0, 1.25, 1.5, 1.9)

    def __post_init__(self):
        for name in ("omega", "snr_db", "radius_omegas"):
            value = getattr(self, name)
            if not isinstance(value, (list, tuple)):
                value = [value]
            try:
                object.__setattr__(self, name, tuple(float(v) for v in value))
            except (TypeError, ValueError):
                raise ConfigError(name, f"expected a number or list of numbers, got {value!r}") from None
        checks = [
            ("mode", self.mode in MODES, f"must be one of {MODES}"),
            ("channel", self.channel in CHANNELS, f"must be one of {CHANNELS}"),
            ("channel_file", self.channel != "file" or bool(self.channel_file),
             "required when channel is 'file'"),
            ("doppler_mode", self.doppler_mode in ("integer", "fractional"), "must be integer or fractional"),
            ("qam", self.qam in (4, 16, 64), "must be 4, 16 or 64"),
            ("omega", len(self.omega) > 0 and all(0 < w < 2 for w in self.omega), "values must lie in (0, 2)"),
            ("min_frames", 0 <= self.min_frames <= self.max_frames, "need 0 <= min_frames <= max_frames"),
            ("max_frames", self.max_frames >= 1, "must be >= 1"),
            ("seed", 0 <= self.seed < 2**64, "must be an unsigned 64-bit integer"),
            ("max_doppler_hz", self.max_doppler_hz >= 0, "must be non-negative"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)
        try:
            self.dims
        except ValueError as exc:
            raise ConfigError("dims", str(exc)) from None
        try:
            self.detector(self.omega[0])
        except ValueError as exc:
            raise ConfigError("detector", str(exc)) from None

    @property
    def dims(self) -> FrameDims:
        return FrameDims(self.M, self.N, self.l_max, self.delta_f)

    def detector(self, omega: float) -> DetectorConfig:
        return DetectorConfig(algorithm=self.algorithm, max_iterations=self.max_iterations,
                              omega=omega, initializer=self.initializer, decision=self.decision)

    @classmethod
    def from_dict(cls, doc: dict) -> SweepConfig:
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
        kwargs = {}
        for f in fields(cls):
            if f.name not in doc:
                continue
            value = doc[f.name]
            if f.type == "int" and not isinstance(value, int):
                raise ConfigError(f.name, f"expected an integer, got {value!r}")
            if f.type == "float" and not isinstance(value, (int, float)):
                raise ConfigError(f.name, f"expected a number, got {value!r}")
            if f.type == "str" and not isinstance(value, str):
                raise ConfigError(f.name, f"expected a string, got {value!r}")
            kwargs[f.name] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> SweepConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for name in ("omega", "snr_db", "radius_omegas"):
            doc[name] = [_json_float(v) for v in doc[name]]
        return doc

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _json_float(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def frame_rng(seed: int, snr_index: int, frame_index: int) -> np.random.Generator:
    stream = (snr_index << 32) | frame_index
    return np.random.Generator(np.random.Philox(key=(seed << 64) | stream))


def wilson_interval(errors: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    if trials == 0:
        return 0.0, 1.0
    p = errors / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    # at 0 or all errors the bound is exact in theory; do not let roundoff move it
    lo = 0.0 if errors == 0 else max(0.0, centre - half)
    hi = 1.0 if errors == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class PointResult:
    snr_db: float
    frames: int = 0
    bits: int = 0
    bit_errors: int = 0
    frame_errors: int = 0
    iterations: int = 0
    max_iterations: int = 0
    ops: int = 0
    ref_frame_errors: int = 0
    undetected_frame_errors: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0

    @property
    def ref_fer(self) -> float:
        return self.ref_frame_errors / self.frames if self.frames else 0.0

    @property
    def ber_ci(self) -> tuple[float, float]:
        return wilson_interval(self.bit_errors, self.bits)

    @property
    def fer_ci(self) -> tuple[float, float]:
        return wilson_interval(self.frame_errors, self.frames)

    @property
    def mean_iters(self) -> float:
        return self.iterations / self.frames if self.frames else 0.0

    @property
    def ops_per_frame(self) -> float:
        return self.ops / self.frames if self.frames else 0.0


@dataclass
class SweepResult:
    config: SweepConfig
    omega: float
    points: list = field(default_factory=list)
    wall_time: float = 0.0

    def metadata(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_sha256": self.config.digest(),
            "seed": self.config.seed,
            "omega": self.omega,
            "wall_time_s": self.wall_time,
            "points": [dict(asdict(p), snr_db=_json_float(p.snr_db)) for p in self.points],
        }


# ---------------------------------------------------------------------------
# per-frame simulation


def _draw_channel(config: SweepConfig, rng, fixed: PathSet | None):
    dims = config.dims
    if config.channel == "flat":
        paths = flat_paths(dims)
    elif config.channel == "file":
        paths = fixed
    else:
        paths = eva_paths(dims, config.max_doppler_hz, rng)
    return discretize(paths, config.doppler_mode)


def _frame_uncoded(config, det, const, spread, rng, snr, point):
    dims = config.dims
    bits = rng.integers(0, 2, bits_per_frame(dims, const), dtype=np.uint8)
    frame = map_bits(bits, const, dims)
    r, sigma2 = apply_channel(dd_to_time(frame), spread, snr, rng)
    out = detect(r, spread, det, const, sigma2)
    errs = int(np.count_nonzero(demap_frame(out.x_hat, const) != bits))
    point.bits += bits.size
    point.bit_errors += errs
    point.frame_errors += errs > 0
    point.iterations += out.iterations_used
    point.max_iterations = max(point.max_iterations, out.iterations_used)
    point.ops += out.op_count.total


def _frame_ofdm(config, const, spread, rng, snr, point):
    dims = config.dims
    bits = rng.integers(0, 2, bits_per_frame(dims, const), dtype=np.uint8)
    r, sigma2 = apply_channel(ofdm_tx(bits, const, dims), spread, snr, rng)
    errs = int(np.count_nonzero(ofdm_rx_mmse(r, spread, sigma2, const) != bits))
    point.bits += bits.size
    point.bit_errors += errs
    point.frame_errors += errs > 0


def _frame_turbo(config, det, const, code, spread, rng, snr, omega, point):
    dims = config.dims
    n_cw = bits_per_frame(dims, const) // code.n
    info = rng.integers(0, 2, n_cw * code.k, dtype=np.uint8)
    layout = make_layout(dims, const, code, rng)
    frame, _ = encode_frame(info, layout)
    r, sigma2 = apply_channel(dd_to_time(frame), spread, snr, rng)
    res = turbo_detect(r, spread, layout, sigma2,
                       TurboConfig(config.turbo_iterations, config.decoder_iterations, omega))
    errs = int(np.count_nonzero(res.decoded_info != info))
    point.bits += info.size
    point.bit_errors += errs
    point.frame_errors += errs > 0
    point.undetected_frame_errors += bool(res.all_parity_ok and errs > 0)
    point.iterations += res.iterations_used
    point.max_iterations = max(point.max_iterations, res.iterations_used)
    point.ops += res.op_count.total
    # reference: uncoded slicing of the same received frame
    ref = detect(r, spread, det, const, sigma2)
    coded_hat = demap_frame(ref.x_hat, const)[: n_cw * code.n]
    cw_hat = deinterleave(coded_hat, layout.interleaver).reshape(n_cw, code.n)
    point.ref_frame_errors += bool(np.any(code.info_bits(cw_hat).reshape(-1) != info))


def run_sweep(config: SweepConfig, omega: float | None = None, progress=None) -> SweepResult:
    """Simulate every SNR point of ``config`` for one relaxation value."""
    if config.mode not in ("uncoded-ber", "turbo-fer", "ofdm-baseline"):
        raise ConfigError("mode", f"{config.mode!r} is an audit, not a sweep")
    omega = config.omega[0] if omega is None else omega
    det = config.detector(omega)
    const = qam(config.qam)
    fixed = PathSet.load(config.channel_file) if config.channel == "file" else None
    if fixed is not None and fixed.dims != config.dims:
        raise ConfigError("channel_file", "channel grid does not match M, N, l_max, delta_f")
    code = None
    if config.mode == "turbo-fer":
        code = read_alist(config.ldpc_file) if config.ldpc_file else default_code()
        if bits_per_frame(config.dims, const) < code.n:
            raise ConfigError("dims", "frame too small for one codeword")
    result = SweepResult(config=config, omega=omega)
    t0 = time.perf_counter()
    for si, snr in enumerate(config.snr_db):
        point = PointResult(snr_db=snr)
        while point.frames < config.max_frames and not (
            point.frames >= config.min_frames and point.frame_errors >= config.target_frame_errors
        ):
            rng = frame_rng(config.seed, si, point.frames)
            spread = _draw_channel(config, rng, fixed)
            if config.mode == "uncoded-ber":
                _frame_uncoded(config, det, const, spread, rng, snr, point)
            elif config.mode == "ofdm-baseline":
                _frame_ofdm(config, const, spread, rng, snr, point)
            else:
                _frame_turbo(config, det, const, code, spread, rng, snr, omega, point)
            point.frames += 1
        result.points.append(point)
        if progress is not None:
            progress(point)
    result.wall_time = time.perf_counter() - t0
    return result


def run_sweeps(config: SweepConfig, progress=None) -> list[SweepResult]:
    return [run_sweep(config, w, progress) for w in config.omega]


# ---------------------------------------------------------------------------
# CSV


def _fmt(v: float) -> str:
    return "inf" if v == math.inf else f"{v:.10g}"


def emit_csv(result: SweepResult | None) -> str:
    """Plot-ready CSV text, one row per SNR point in sweep order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in result.points if result is not None else []:
        lo, hi = p.ber_ci
        w.writerow([_fmt(p.snr_db), _fmt(p.ber), _fmt(p.fer), _fmt(lo), _fmt(hi),
                    _fmt(p.mean_iters), _fmt(p.ops_per_frame)])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [{k: float(v) for k, v in row.items()} for row in rows]


def output_paths(out: Path, omegas, index: int) -> tuple[Path, Path]:
    """CSV and sidecar paths; multi-omega sweeps get one file per value."""
    out = Path(out)
    if len(omegas) > 1:
        out = out.with_name(f"{out.stem}_omega{omegas[index]:g}{out.suffix or '.csv'}")
    return out, out.with_suffix(".json")


def write_results(results: list[SweepResult], out) -> list[Path]:
    written = []
    omegas = [r.omega for r in results]
    for i, res in enumerate(results):
        csv_path, meta_path = output_paths(Path(out), omegas, i)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(emit_csv(res))
        meta_path.write_text(json.dumps(res.metadata(), indent=2) + "\n")
        written += [csv_path, meta_path]
    return written


# ---------------------------------------------------------------------------
# audits


def _audit_channel(config: SweepConfig, rng):
    fixed = PathSet.load(config.channel_file) if config.channel == "file" else None
    return _draw_channel(config, rng, fixed)


def equivalence_audit(config: SweepConfig) -> dict:
    """Linear-mode state deviation between mrc_dd, mrc_dt and gs_time."""
    dims = config.dims
    const = qam(config.qam)
    det = DetectorConfig(max_iterations=config.audit_iterations, omega=config.omega[0],
                         decision="linear", tol=0.0, stop_on_residual=False, keep_states=True)
    deviations = []
    for ci in range(config.audit_channels):
        rng = frame_rng(config.seed, 0, ci)
        spread = _audit_channel(config, rng)
        bits = rng.integers(0, 2, bits_per_frame(dims, const), dtype=np.uint8)
        r, sigma2 = apply_channel(dd_to_time(map_bits(bits, const, dims)), spread,
                                  config.snr_db[0], rng)
        mats = iteration_matrices(assemble(spread))
        dt = detect_mrc_dt(time_to_dt(r, dims.M, dims.N), spread, det, const, sigma2)
        dd = detect_mrc_dd(time_to_dd(r, dims.M, dims.N), spread, det, const, sigma2)
        gs = detect_gs_time(r, mats, det, const)
        dev = 0.0
        for a, b, c in zip(dt.states, dd.states, gs.states):
            dev = max(dev, float(np.abs(a - b).max()), float(np.abs(a - c).max()))
        deviations.append(dev)
    return {"mode": "equivalence-audit", "channels": len(deviations),
            "iterations": config.audit_iterations, "max_deviation": max(deviations),
            "deviations": deviations}


def radius_audit(config: SweepConfig) -> dict:
    """Spectral radii of the Jacobi, Gauss-Seidel and SOR iteration matrices.

    Channels whose blocks are singular are redrawn so every reported
    instance is nonsingular.
    """
    records = []
    draw = 0
    while len(records) < config.audit_channels:
        rng = frame_rng(config.seed, 1, draw)
        draw += 1
        mats = iteration_matrices(assemble(_audit_channel(config, rng)))
        if any(is_singular(R) for R in mats.R):
            continue
        rec = {
            "gs": max(spectral_radius(mats.T_gs(n)) for n in range(mats.N)),
            "jacobi": max(spectral_radius(mats.T_jacobi(n)) for n in range(mats.N)),
            "sor": {f"{w:g}": max(spectral_radius(mats.T_sor(n, w)) for n in range(mats.N))
                    for w in config.radius_omegas},
            "sor_gs_gap": max(float(np.abs(mats.T_sor(n, 1.0) - mats.T_gs(n)).max())
                              for n in range(mats.N)),
        }
        records.append(rec)
    return {
        "mode": "radius-audit",
        "channels": len(records),
        "redrawn": draw - len(records),
        "max_gs": max(r["gs"] for r in records),
        "max_jacobi": max(r["jacobi"] for r in records),
        "jacobi_divergent": sum(r["jacobi"] >= 1 for r in records),
        "max_sor": {k: max(r["sor"][k] for r in records) for k in records[0]["sor"]},
        "all_converge": all(r["gs"] < 1 and all(v < 1 for v in r["sor"].values()) for r in records),
        "records": records,
    }


def ops_report(config: SweepConfig) -> dict:
    """Predicted and measured multiplies for one frame of the configured grid."""
    dims = config.dims
    const = qam(config.qam)
    det = replace(config.detector(config.omega[0]), algorithm="mrc_dt")
    rng = frame_rng(config.seed, 0, 0)
    spread = _draw_channel(config, rng, PathSet.load(config.channel_file)
                           if config.channel == "file" else None)
    pred = count_ops(det, dims, spread.L)
    bits = rng.integers(0, 2, bits_per_frame(dims, const), dtype=np.uint8)
    r, sigma2 = apply_channel(dd_to_time(map_bits(bits, const, dims)), spread, config.snr_db[-1], rng)
    out = detect(r, spread, det, const, sigma2)
    it = out.iterations_used
    return {
        "L": spread.L,
        "predicted": {**asdict(pred), "per_iteration": pred.per_iteration},
        "measured": {"iterations": it, "core": out.op_count.core,
                     "transforms": out.op_count.transforms,
                     "core_per_iteration": out.op_count.core / it,
                     "total_per_iteration": out.op_count.total / it},
    }
