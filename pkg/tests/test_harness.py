import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zpotfs import harness
from zpotfs.harness import (
    CSV_COLUMNS,
    ConfigError,
    PointResult,
    SweepConfig,
    SweepResult,
    emit_csv,
    frame_rng,
    output_paths,
    parse_csv,
    run_sweep,
    run_sweeps,
    wilson_interval,
    write_results,
)

TINY = dict(M=16, N=8, l_max=3)


class TestConfig:
    def test_defaults_are_desk_profile(self):
        c = SweepConfig()
        assert (c.N, c.M, c.l_max, c.qam, c.channel) == (16, 64, 7, 4, "eva")

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as err:
            SweepConfig.from_dict({"M": 16, "colour": "blue"})
        assert err.value.key == "colour"

    @pytest.mark.parametrize("doc,key", [
        ({"M": "sixteen"}, "M"),
        ({"mode": "fast"}, "mode"),
        ({"qam": 8}, "qam"),
        ({"omega": [1.0, 2.5]}, "omega"),
        ({"M": 8, "l_max": 8}, "dims"),
        ({"channel": "file"}, "channel_file"),
        ({"min_frames": 10, "max_frames": 5}, "min_frames"),
        ({"algorithm": "mpa"}, "detector"),
        ({"snr_db": ["loud"]}, "snr_db"),
    ])
    def test_bad_values_name_the_key(self, doc, key):
        with pytest.raises(ConfigError) as err:
            SweepConfig.from_dict(doc)
        assert err.value.key == key

    def test_scalar_lists_normalized(self):
        c = SweepConfig.from_dict({"omega": 1.25, "snr_db": 12})
        assert c.omega == (1.25,) and c.snr_db == (12.0,)

    def test_load_and_dict_round_trip(self, tmp_path):
        c = SweepConfig(**TINY, snr_db=(5.0, math.inf), seed=9)
        (tmp_path / "c.json").write_text(json.dumps(c.to_dict()))
        back = SweepConfig.load(tmp_path / "c.json")
        assert back == c and back.digest() == c.digest()

    def test_invalid_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            SweepConfig.load(tmp_path / "c.json")


class TestRandomStreams:
    def test_streams_are_keyed(self):
        a = frame_rng(7, 0, 3).standard_normal(4)
        assert np.array_equal(a, frame_rng(7, 0, 3).standard_normal(4))
        assert not np.array_equal(a, frame_rng(7, 0, 4).standard_normal(4))
        assert not np.array_equal(a, frame_rng(7, 1, 3).standard_normal(4))
        assert not np.array_equal(a, frame_rng(8, 0, 3).standard_normal(4))


class TestWilson:
    @given(trials=st.integers(1, 10**6), frac=st.floats(0, 1))
    def test_bounds(self, trials, frac):
        errors = int(frac * trials)
        lo, hi = wilson_interval(errors, trials)
        assert 0 <= lo <= errors / trials <= hi <= 1

    def test_known_value(self):
        lo, hi = wilson_interval(10, 100)
        assert lo == pytest.approx(0.0552, abs=1e-4) and hi == pytest.approx(0.1744, abs=1e-4)

    def test_no_trials(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)


class TestSweeps:
    def test_noiseless_is_error_free(self):
        c = SweepConfig(**TINY, channel="flat", snr_db=(math.inf,), min_frames=5, max_frames=5)
        p = run_sweep(c).points[0]
        assert p.frames == 5 and p.bit_errors == 0 and p.fer == 0

    def test_stops_at_error_target(self):
        c = SweepConfig(**TINY, snr_db=(0.0,), min_frames=3, max_frames=50, target_frame_errors=4)
        p = run_sweep(c).points[0]
        assert p.frame_errors >= 4 and p.frames == max(3, p.frame_errors)
        assert p.bit_errors <= p.bits

    def test_three_points_and_monotone_snr(self):
        c = SweepConfig(**TINY, snr_db=(0.0, 10.0, 20.0), min_frames=20, max_frames=20)
        res = run_sweep(c)
        rows = parse_csv(emit_csv(res))
        assert [r["snr_db"] for r in rows] == [0.0, 10.0, 20.0]
        assert rows[0]["ber"] > rows[2]["ber"]

    def test_ofdm_mode(self):
        c = SweepConfig(**TINY, mode="ofdm-baseline", snr_db=(30.0,), channel="flat",
                        min_frames=4, max_frames=4)
        p = run_sweep(c).points[0]
        assert p.bit_errors == 0 and p.iterations == 0

    def test_turbo_mode_needs_room_for_a_codeword(self):
        with pytest.raises(ConfigError, match="codeword"):
            run_sweep(SweepConfig(**TINY, mode="turbo-fer"))

    def test_turbo_mode_counts(self):
        c = SweepConfig(mode="turbo-fer", snr_db=(12.0,), min_frames=3, max_frames=3)
        p = run_sweep(c).points[0]
        assert p.bits == 3 * 3 * 256
        assert p.undetected_frame_errors == 0

    def test_audit_mode_is_not_a_sweep(self):
        with pytest.raises(ConfigError):
            run_sweep(SweepConfig(**TINY, mode="radius-audit"))

    def test_file_channel_must_match_grid(self, tmp_path):
        from zpotfs.channel import flat_paths
        from zpotfs.grid import FrameDims

        flat_paths(FrameDims(M=32, N=8, l_max=3)).save(tmp_path / "ch.json")
        c = SweepConfig(**TINY, channel="file", channel_file=str(tmp_path / "ch.json"))
        with pytest.raises(ConfigError, match="grid"):
            run_sweep(c)

    def test_one_result_per_omega(self):
        c = SweepConfig(**TINY, omega=(1.0, 1.25), snr_db=(10.0,), min_frames=2, max_frames=2)
        assert [r.omega for r in run_sweeps(c)] == [1.0, 1.25]


class TestCsv:
    def test_empty_sweep_is_header_only(self):
        assert emit_csv(None) == ",".join(CSV_COLUMNS) + "\n"
        assert emit_csv(SweepResult(SweepConfig(), 1.0)).count("\n") == 1

    def test_round_trip(self):
        res = SweepResult(SweepConfig(), 1.0, points=[
            PointResult(5.0, frames=3, bits=300, bit_errors=7, frame_errors=2, iterations=11, ops=999),
            PointResult(math.inf, frames=2, bits=200),
        ])
        rows = parse_csv(emit_csv(res))
        assert len(rows) == 2
        p = res.points[0]
        assert rows[0]["ber"] == pytest.approx(p.ber, rel=1e-9)
        assert rows[0]["ber_ci_hi"] == pytest.approx(p.ber_ci[1], rel=1e-9)
        assert rows[0]["mean_iters"] == pytest.approx(11 / 3, rel=1e-9)
        assert rows[1]["snr_db"] == math.inf and rows[1]["ber"] == 0

    def test_reproducible_bytes(self):
        c = SweepConfig(**TINY, snr_db=(5.0, 10.0), min_frames=4, max_frames=4, seed=3)
        assert emit_csv(run_sweep(c)) == emit_csv(run_sweep(c))

    def test_output_paths(self, tmp_path):
        assert output_paths(tmp_path / "r.csv", [1.0], 0) == (tmp_path / "r.csv", tmp_path / "r.json")
        assert output_paths(tmp_path / "r.csv", [1.0, 1.25], 1)[0] == tmp_path / "r_omega1.25.csv"

    def test_write_results_sidecar(self, tmp_path):
        c = SweepConfig(**TINY, snr_db=(10.0,), min_frames=2, max_frames=2, seed=5)
        paths = write_results(run_sweeps(c), tmp_path / "out" / "r.csv")
        meta = json.loads(paths[1].read_text())
        assert meta["seed"] == 5 and meta["config_sha256"] == c.digest()
        assert meta["wall_time_s"] >= 0 and meta["points"][0]["frames"] == 2


class TestAudits:
    def test_equivalence(self):
        c = SweepConfig(**TINY, audit_channels=3, audit_iterations=5, snr_db=(10.0,))
        doc = harness.equivalence_audit(c)
        assert doc["channels"] == 3 and doc["max_deviation"] < 1e-8

    def test_radius(self):
        c = SweepConfig(**TINY, audit_channels=4, radius_omegas=(1.0, 1.5))
        doc = harness.radius_audit(c)
        assert doc["channels"] == 4 and doc["all_converge"]
        assert set(doc["max_sor"]) == {"1", "1.5"}
        assert all(r["sor_gs_gap"] < 1e-12 for r in doc["records"])

    def test_ops_report(self):
        doc = harness.ops_report(SweepConfig(M=32, N=16, l_max=4))
        m, p = doc["measured"], doc["predicted"]
        assert m["core_per_iteration"] == p["core_per_iteration"]
