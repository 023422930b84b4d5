"""
STBC-MIMO LoRa experiment runner
Usage: python cli.py run <manifest> | validate <manifest> | preset list | preset show <name>
"""

import argparse
import logging
import sys
from pathlib import Path

from components.channel import CeemModel, effective_sigma_e_sq
from utils.analytic import analytic_curve, system_params
from utils.errors import AccuracyError, ManifestError, StbcLoraError
from utils.manifest import env_defaults, expand_preset, list_presets, load_manifest, validate_manifest
from utils.mc_engine import run_sweep
from utils.numerics import db_to_linear, gauss_hermite
from utils.records import curve_records, partial_path, records_frame, write_records

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MANIFEST = 2
EXIT_ACCURACY = 3

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def run_manifest(manifest, progress=False):
    """
    Simulate and evaluate every curve of a manifest.

    Args:
        manifest (RunManifest): Validated manifest
        progress (bool): Show tqdm bars over SNR points

    Returns:
        pd.DataFrame: Records sorted by (curve_id, snr_db)
    """
    rule = gauss_hermite(manifest.quadrature_order)
    rows = []
    for spec in manifest.curves:
        logger.info("Curve %s: %d SNR points", spec.curve_id, len(spec.snr_db))
        t_values = [db_to_linear(s) for s in spec.snr_db]
        sigma_e_sq = [effective_sigma_e_sq(spec.ceem, t, spec.sf) for t in t_values]

        analytic_rows = None
        if manifest.toggles.any:
            params = [
                system_params(spec.sf, spec.code, spec.n, s, t)
                for s, t in zip(sigma_e_sq, t_values)
            ]
            fixed_error = spec.ceem.model is CeemModel.FIXED_VARIANCE
            analytic_rows = analytic_curve(params, manifest.toggles, rule, fixed_error)

        estimates = None
        if not manifest.analytic_only:
            estimates = run_sweep(spec, workers=manifest.workers, progress=progress)

        rows.extend(curve_records(spec, sigma_e_sq, estimates, analytic_rows))
    return records_frame(rows)


def _overrides(args):
    return {
        "seed": args.seed,
        "workers": args.workers,
        "format": args.format,
        "out": str(args.out) if args.out else None,
        "analytic_only": True if args.analytic_only else None,
    }


def _print_diagnostics(diagnostics, stream):
    for line, key, message in diagnostics:
        where = f"line {line}: " if line is not None else ""
        print(f"{where}{key}: {message}", file=stream)


def cmd_run(args):
    try:
        manifest = load_manifest(args.manifest, _overrides(args))
    except ManifestError as exc:
        _print_diagnostics(exc.diagnostics, sys.stderr)
        return EXIT_MANIFEST

    out = Path(manifest.out)
    progress = not args.quiet and sys.stderr.isatty()
    logger.info("Running %s (%d curves) -> %s", manifest.preset, len(manifest.curves), out)
    try:
        df = run_manifest(manifest, progress=progress)
        write_records(df, out, manifest.format)
    except AccuracyError as exc:
        estimate = "" if exc.best_estimate is None else f" (best estimate {exc.best_estimate:.6g})"
        print(f"accuracy error: {exc}{estimate}", file=sys.stderr)
        return EXIT_ACCURACY
    except (StbcLoraError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        _discard_partial(out)

    logger.info("Done: %d records", len(df))
    return EXIT_OK


def _discard_partial(out):
    partial = partial_path(out)
    if partial.exists():
        logger.warning("Removing incomplete output %s", partial)
        partial.unlink()


def cmd_validate(args):
    diagnostics = validate_manifest(args.manifest, _overrides(args))
    if diagnostics:
        _print_diagnostics(diagnostics, sys.stdout)
        return EXIT_MANIFEST
    print(f"{args.manifest}: ok")
    return EXIT_OK


def cmd_preset(args):
    if args.preset_command == "list":
        for name, description, curves in list_presets():
            print(f"{name:<8} {curves:>2} curves  {description}")
        return EXIT_OK
    try:
        curves = expand_preset(args.name)
    except StbcLoraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    for index, curve in enumerate(curves, start=1):
        settings = " ".join(f"{k}={v}" for k, v in curve.items())
        print(f"curve {index}: {settings}")
    return EXIT_OK


def _add_overrides(parser):
    parser.add_argument("manifest", type=Path, help="Manifest file (KEY=value lines)")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--workers", type=int, help="joblib workers, -1 for all cores")
    parser.add_argument("--format", choices=("csv", "json"), help="Output format")
    parser.add_argument("--analytic-only", action="store_true", help="Skip Monte Carlo simulation")
    parser.add_argument("--out", type=Path, help="Output file")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stbc-lora",
        description="Simulated and analytic BER curves for STBC-MIMO LoRa",
    )
    parser.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS, help="Logging level")
    parser.add_argument("--quiet", action="store_true", help="No progress bars, warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a manifest and write its records")
    _add_overrides(run)
    run.set_defaults(handler=cmd_run)

    validate = sub.add_parser("validate", help="Check a manifest without running it")
    _add_overrides(validate)
    validate.set_defaults(handler=cmd_validate)

    preset = sub.add_parser("preset", help="Inspect figure presets")
    preset_sub = preset.add_subparsers(dest="preset_command", required=True)
    preset_sub.add_parser("list", help="List presets")
    show = preset_sub.add_parser("show", help="Show the curves of one preset")
    show.add_argument("name")
    preset.set_defaults(handler=cmd_preset)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = args.log_level or ("WARNING" if args.quiet else env_defaults()["log_level"].upper())
    if level not in LOG_LEVELS:
        parser.error(f"STBC_LORA_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
