"""Command-line entry point: ``zpotfs <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .channel import eva_paths
from .harness import ConfigError, SweepConfig


def _load_config(args) -> SweepConfig:
    config = SweepConfig.load(args.config) if args.config else SweepConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.frames is not None:
        overrides["min_frames"] = overrides["max_frames"] = args.frames
    if getattr(args, "mode_override", None):
        overrides["mode"] = args.mode_override
    return replace(config, **overrides) if overrides else config


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_sweep(args) -> int:
    config = _load_config(args)
    if config.mode in ("equivalence-audit", "radius-audit"):
        doc = (harness.equivalence_audit if config.mode == "equivalence-audit"
               else harness.radius_audit)(config)
        _emit(doc, args.out)
        return 0

    def report(point):
        if not args.quiet:
            print(f"snr={point.snr_db:g} dB frames={point.frames} ber={point.ber:.3e} "
                  f"fer={point.fer:.3e} iters={point.mean_iters:.2f}", file=sys.stderr)

    results = harness.run_sweeps(config, progress=report)
    out = Path(args.out or "sweep.csv")
    written = harness.write_results(results, out)
    if not args.no_plot:
        from .plotting import plot_sweeps

        plot_path = Path(args.plot) if args.plot else out.with_suffix(".png")
        written.append(plot_sweeps(results, plot_path))
    for path in written:
        print(path)
    return 0


def cmd_audit_equivalence(args) -> int:
    config = replace(_load_config(args), mode="equivalence-audit")
    doc = harness.equivalence_audit(config)
    _emit(doc, args.out)
    return 0 if doc["max_deviation"] < 1e-8 else 1


def cmd_audit_radius(args) -> int:
    config = replace(_load_config(args), mode="radius-audit")
    doc = harness.radius_audit(config)
    _emit(doc, args.out)
    return 0 if doc["all_converge"] else 1


def cmd_count_ops(args) -> int:
    _emit(harness.ops_report(_load_config(args)), args.out)
    return 0


def cmd_gen_channel(args) -> int:
    config = _load_config(args)
    paths = eva_paths(config.dims, config.max_doppler_hz, harness.frame_rng(config.seed, 0, 0))
    doc = paths.to_json()
    _emit(doc, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zpotfs", description="ZP-OTFS rake detector simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON sweep configuration")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output path")
    common.add_argument("--frames", type=int, help="fixed frame count per SNR point")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="Monte-Carlo BER/FER sweep")
    p.add_argument("--mode", dest="mode_override", choices=harness.MODES)
    p.add_argument("--plot", help="figure path (default: CSV path with .png)")
    p.add_argument("--no-plot", action="store_true", help="skip the figure")
    p.add_argument("--quiet", action="store_true", help="no progress lines")
    p.set_defaults(func=cmd_sweep)

    sub.add_parser("audit-equivalence", parents=[common],
                   help="cross-check detector states in linear mode").set_defaults(func=cmd_audit_equivalence)
    sub.add_parser("audit-radius", parents=[common],
                   help="spectral radii of iteration matrices").set_defaults(func=cmd_audit_radius)
    sub.add_parser("count-ops", parents=[common],
                   help="predicted and measured multiply counts").set_defaults(func=cmd_count_ops)
    sub.add_parser("gen-channel", parents=[common],
                   help="write one EVA channel realization as JSON").set_defaults(func=cmd_gen_channel)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["key"] = exc.key
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
