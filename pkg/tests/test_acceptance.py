"""
Acceptance suite: one test per criterion, each printing a PASS/FAIL line
in the terminal summary (see conftest.py).

Desk-scale settings are used throughout; every test is seeded.
"""

import time

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from zpotfs import harness
from zpotfs.channel import apply_channel, discretize, eva_paths, random_paths
from zpotfs.cli import main as cli_main
from zpotfs.detect import DetectorConfig, count_ops, detect, detect_mrc_dt
from zpotfs.grid import FrameDims, bits_per_frame, map_bits, qam
from zpotfs.harness import SweepConfig
from zpotfs.linsys import assemble, direct_solve, is_singular, iteration_matrices
from zpotfs.transforms import dd_to_time, dft_matrix, dt_to_time, permutation_matrix, time_to_dt

SMALL = dict(M=16, N=8, l_max=3)
DESK = dict(M=64, N=16, l_max=7)


@pytest.fixture(scope="module")
def radius_report():
    config = SweepConfig(mode="radius-audit", **DESK, audit_channels=50,
                         radius_omegas=(0.5, 1.0, 1.25, 1.5, 1.9), seed=2)
    t0 = time.perf_counter()
    report = harness.radius_audit(config)
    report["elapsed"] = time.perf_counter() - t0
    return report


def test_c01_equivalence(record_property):
    """C01 algorithm equivalence: mrc_dd / mrc_dt / gs_time linear-mode states < 1e-8"""
    config = SweepConfig(mode="equivalence-audit", **SMALL, audit_channels=20,
                         audit_iterations=15, snr_db=(10.0,), seed=1)
    t0 = time.perf_counter()
    report = harness.equivalence_audit(config)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"max dev {report['max_deviation']:.2e}, {elapsed:.1f} s")
    assert report["channels"] == 20
    assert report["max_deviation"] < 1e-8
    assert elapsed < 60


def test_c02_gauss_seidel_radius(radius_report, record_property):
    """C02 Gauss-Seidel radius < 1 on 50 desk channels, with a Jacobi radius >= 1 instance"""
    recs = radius_report["records"]
    witness = [r for r in recs if r["jacobi"] >= 1 and r["gs"] < 1]
    record_property("detail", f"max rho_GS {radius_report['max_gs']:.6f}, "
                              f"{len(witness)} Jacobi-divergent, {radius_report['elapsed']:.1f} s")
    assert len(recs) == 50
    assert all(r["gs"] < 1 for r in recs)
    assert witness
    assert radius_report["elapsed"] < 120


def test_c03_sor_radius(radius_report, record_property):
    """C03 SOR radius < 1 for omega in {0.5,1,1.25,1.5,1.9}; T(omega=1) equals T_GS to 1e-12"""
    worst = radius_report["max_sor"]
    gap = max(r["sor_gs_gap"] for r in radius_report["records"])
    record_property("detail", "max rho " + ", ".join(f"w={k}: {v:.6f}" for k, v in worst.items())
                    + f"; gap {gap:.1e}")
    assert all(v < 1 for v in worst.values())
    assert gap < 1e-12


def test_c04_fixed_point():
    """C04 converged linear detector matches the least-squares oracle to 1e-6 per block"""
    dims = FrameDims(**SMALL)
    const = qam(4)
    config = DetectorConfig(decision="linear", max_iterations=50_000, tol=1e-14)
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng(400 + i)
        spread = discretize(random_paths(dims, 3, rng, max_doppler=1.5))
        frame = map_bits(rng.integers(0, 2, bits_per_frame(dims, const)), const, dims)
        r, _ = apply_channel(dd_to_time(frame), spread, np.inf)
        mats = iteration_matrices(assemble(spread))
        out = detect_mrc_dt(time_to_dt(r, dims.M, dims.N), spread, config, const)
        s_hat = dt_to_time(out.x_dt).reshape(dims.N, dims.M)
        s_ls = dd_to_time(direct_solve(mats, r)).reshape(dims.N, dims.M)
        for n in range(dims.N):
            rel = np.linalg.norm(s_hat[n] - s_ls[n]) / np.linalg.norm(s_ls[n])
            worst = max(worst, rel)
    assert worst < 1e-6, f"worst relative block deviation {worst:.2e}"


def test_c05_structure():
    """C05 structural identities of H, H~, G, K blocks and eigenvalue similarity"""
    dims = FrameDims(**SMALL)
    M, N = dims.M, dims.N
    F = dft_matrix(N)
    IF = np.kron(np.eye(M), F)
    P = permutation_matrix(np.arange(M * N) % M * N + np.arange(M * N) // M)
    for i in range(5):
        spread = discretize(random_paths(dims, 3, np.random.default_rng(500 + i), max_doppler=1.5))
        d = assemble(spread)
        assert np.abs(d.Ht - IF.conj().T @ d.H @ IF).max() < 1e-10
        assert np.array_equal(d.G, P @ d.Ht @ P.T)
        band = np.zeros((M * N, M * N), dtype=bool)
        for n in range(N):
            i_, j_ = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
            blk = (i_ - j_ >= 0) & (i_ - j_ <= dims.l_max)
            band[n * M:(n + 1) * M, n * M:(n + 1) * M] = blk
        assert not np.any(d.G[~band])
        for li, l in enumerate(spread.taps):
            for m in range(l, M):
                K = d.K(m, l)
                assert np.array_equal(K, np.column_stack([np.roll(K[:, 0], j) for j in range(N)]))
                Kt = F.conj().T @ K @ F
                assert np.abs(Kt - np.diag(np.diag(Kt))).max() < 1e-10
        eg, eh = np.linalg.eigvals(d.G), np.linalg.eigvals(d.Ht)
        cost = np.abs(eg[:, None] - eh[None, :])
        rows, cols = linear_sum_assignment(cost)
        assert cost[rows, cols].max() < 1e-8


def test_c06_noiseless_recovery(record_property):
    """C06 noiseless hard-mode MRC-DT recovers 4/16/64-QAM frames exactly within 50 iterations"""
    dims = FrameDims(**DESK)
    config = DetectorConfig(max_iterations=50, initializer="tf_mmse")
    summary = []
    failures = 0
    for order in (4, 16, 64):
        const = qam(order)
        ok = tried = 0
        seed = 600 * order
        while tried < 20:
            rng = np.random.default_rng(seed)
            seed += 1
            spread = discretize(eva_paths(dims, 1875.0, rng))
            if any(is_singular(R) for R in iteration_matrices(assemble(spread)).R):
                continue
            frame = map_bits(rng.integers(0, 2, bits_per_frame(dims, const)), const, dims)
            r, _ = apply_channel(dd_to_time(frame), spread, np.inf)
            out = detect(r, spread, config, const, 0.0)
            ok += bool(np.array_equal(out.x_hat.X, frame.X))
            tried += 1
        summary.append(f"{order}-QAM {ok}/{tried}")
        failures += tried - ok
    record_property("detail", ", ".join(summary))
    assert failures == 0, "frames not recovered: " + ", ".join(summary)


def test_c07_complexity(record_property):
    """C07 measured core multiplies equal NM'(2L+1) exactly and the total is within 5%"""
    dims = FrameDims(M=32, N=16, l_max=4)
    const = qam(4)
    rng = np.random.default_rng(7)
    spread = discretize(random_paths(dims, 3, rng, max_doppler=1.0))
    assert spread.L == 3
    frame = map_bits(rng.integers(0, 2, bits_per_frame(dims, const)), const, dims)
    r, s2 = apply_channel(dd_to_time(frame), spread, 12.0, rng)
    config = DetectorConfig(max_iterations=10)
    out = detect(r, spread, config, const, s2)
    pred = count_ops(config, dims, spread.L)
    it = out.iterations_used
    core = out.op_count.core / it
    total = out.op_count.total / it
    record_property("detail", f"core {core:.0f}/iter, total {total:.0f} vs {pred.per_iteration}")
    assert pred.core_per_iteration == 3136
    assert out.op_count.core == 3136 * it
    assert abs(total - pred.per_iteration) <= 0.05 * pred.per_iteration


def test_c08_sor_iterations(record_property):
    """C08 SOR omega=1.25 needs fewer mean iterations than omega=1.0 (16-QAM, 500 frames)"""
    config = SweepConfig(**DESK, qam=16, initializer="zero", omega=(1.0, 1.25), snr_db=(20.0,),
                         min_frames=500, max_frames=500, seed=8)
    plain, sor = harness.run_sweeps(config)
    p, s = plain.points[0], sor.points[0]
    record_property("detail", f"iters {p.mean_iters:.3f} vs {s.mean_iters:.3f}; "
                              f"BER {p.ber:.2e} / {s.ber:.2e}")
    assert p.frames == s.frames == 500
    assert 3e-3 < p.ber < 5e-2
    assert s.mean_iters < p.mean_iters


def test_c09_otfs_vs_ofdm(record_property):
    """C09 OTFS-MRC BER below OFDM-MMSE BER with disjoint 95% intervals at the top two SNRs"""
    common = dict(**DESK, snr_db=(15.0, 20.0, 25.0), min_frames=1000, max_frames=1000, seed=9)
    otfs = harness.run_sweep(SweepConfig(mode="uncoded-ber", initializer="tf_mmse", **common))
    ofdm = harness.run_sweep(SweepConfig(mode="ofdm-baseline", **common))
    details = []
    for a, b in zip(otfs.points[-2:], ofdm.points[-2:]):
        details.append(f"{a.snr_db:g} dB: {a.ber:.2e} [{a.ber_ci[1]:.2e}] vs {b.ber:.2e} [{b.ber_ci[0]:.2e}]")
    record_property("detail", "; ".join(details))
    for a, b in zip(otfs.points[-2:], ofdm.points[-2:]):
        assert a.frames >= 1000 and b.frames >= 1000
        assert a.ber < b.ber
        assert a.ber_ci[1] < b.ber_ci[0]


def test_c10_turbo_gain(record_property):
    """C10 turbo-rake FER below uncoded-slicing FER; parity-clean frames carry no bit errors"""
    config = SweepConfig(mode="turbo-fer", **DESK, snr_db=(3.0, 14.0), min_frames=500,
                         max_frames=500, seed=10)
    result = harness.run_sweep(config)
    record_property("detail", "; ".join(
        f"{p.snr_db:g} dB: FER {p.fer:.3f} vs {p.ref_fer:.3f}, undetected {p.undetected_frame_errors}"
        for p in result.points))
    for p in result.points:
        assert p.frames >= 500
        assert p.fer < p.ref_fer
        assert p.undetected_frame_errors == 0


def test_c11_noise_calibration(record_property):
    """C11 empirical variance of r - G s within 2% of the configured noise variance"""
    dims = FrameDims(**DESK)
    const = qam(4)
    rng = np.random.default_rng(11)
    spread = discretize(eva_paths(dims, 1875.0, rng))
    G = assemble(spread).G
    snr = 7.0
    residuals = []
    while sum(x.size for x in residuals) < 100_000:
        s = dd_to_time(map_bits(rng.integers(0, 2, bits_per_frame(dims, const)), const, dims))
        r, sigma2 = apply_channel(s, spread, snr, rng)
        residuals.append(r - G @ s)
    w = np.concatenate(residuals)
    ratio = np.mean(np.abs(w) ** 2) / sigma2
    record_property("detail", f"{w.size} samples, ratio {ratio:.4f}")
    assert abs(ratio - 1) < 0.02


def test_c12_reproducible_csv(tmp_path, record_property):
    """C12 identical config and seed give byte-identical CSV"""
    sizes = []
    for mode in ("uncoded-ber", "ofdm-baseline", "turbo-fer"):
        cfg = tmp_path / f"{mode}.json"
        cfg.write_text(f'{{"mode": "{mode}", "snr_db": [6, 12], "max_frames": 12, "min_frames": 12}}')
        outs = []
        for k in range(2):
            out = tmp_path / f"{mode}_{k}.csv"
            assert cli_main(["sweep", "--config", str(cfg), "--seed", "77", "--out", str(out),
                             "--no-plot", "--quiet"]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1], mode
        assert outs[0].count(b"\n") == 3
        sizes.append(f"{mode} {len(outs[0])} B")
    record_property("detail", ", ".join(sizes))
