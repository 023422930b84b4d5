"""
Run manifests for the experiment runner
Flat KEY=value files parsed with python-dotenv, figure presets and validation
"""

import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from dotenv import dotenv_values, load_dotenv

from components.channel import CeemConfig, CeemModel, parse_ceem_model
from components.lora_modem import SF_RANGE, ModulationConfig
from components.stbc import CODE_NAMES, code_for_antennas, code_matrix
from utils.analytic import AnalyticToggles
from utils.errors import DomainError, ManifestError
from utils.mc_engine import DEFAULT_MAX_BLOCKS, DEFAULT_MIN_BIT_ERRORS, DEFAULT_SEED, ExperimentSpec
from utils.numerics import DEFAULT_HERMITE_ORDER, MAX_HERMITE_ORDER

logger = logging.getLogger(__name__)

# data/ and results/ sit beside utils/
PROJECT_ROOT = Path(__file__).parent.parent
PRESETS_PATH = PROJECT_ROOT / "data" / "presets.json"
RESULTS_DIR = PROJECT_ROOT / "results"

KNOWN_KEYS = (
    "preset", "sf", "es", "code", "m", "n", "ceem", "sigma_e_sq", "pilot_count",
    "snr_db", "min_bit_errors", "max_blocks", "seed", "workers", "format", "out",
    "analytic_closed_form", "analytic_quadrature", "analytic_asymptote",
    "analytic_floor", "analytic_only", "quadrature_order", "curves",
)
CURVE_KEYS = ("sf", "es", "code", "m", "n", "ceem", "sigma_e_sq", "pilot_count", "snr_db")
FORMATS = ("csv", "json")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

# presets.json is parsed once per process
_cached_presets = None


def load_presets():
    """
    Load the figure presets from data/presets.json.
    The parsed file is kept in _cached_presets after the first call.

    Returns:
        dict: Preset name -> preset definition
    """
    global _cached_presets

    if _cached_presets is None:
        if not PRESETS_PATH.exists():
            raise FileNotFoundError(f"Preset file not found at {PRESETS_PATH}")
        with open(PRESETS_PATH) as f:
            _cached_presets = json.load(f)
        logger.debug("Loaded %d presets from %s", len(_cached_presets), PRESETS_PATH)

    return json.loads(json.dumps(_cached_presets))


def list_presets():
    """Return (name, description, curve count) for every preset."""
    return [
        (name, preset.get("description", ""), len(preset.get("curves", [{}])))
        for name, preset in load_presets().items()
    ]


def expand_preset(name):
    """
    Expand a preset into one flat key/value dict per curve.

    Raises:
        DomainError: Unknown preset name
    """
    presets = load_presets()
    if name not in presets:
        raise DomainError(f"unknown preset {name!r}, expected one of {', '.join(presets)}")
    preset = presets[name]
    base = {k: v for k, v in preset.items() if k not in ("curves", "description")}
    return [{**base, **curve} for curve in preset.get("curves", [{}])]


def env_defaults():
    """Defaults taken from the environment (and a .env file if present)."""
    load_dotenv(override=False)
    return {
        "workers": os.environ.get("STBC_LORA_WORKERS", "1"),
        "seed": os.environ.get("STBC_LORA_SEED", str(DEFAULT_SEED)),
        "log_level": os.environ.get("STBC_LORA_LOG_LEVEL", "INFO"),
    }


@dataclass(frozen=True)
class RunManifest:
    """A validated run: curves to simulate plus output and analytic settings."""
    path: str
    preset: str
    curves: tuple
    toggles: AnalyticToggles
    analytic_only: bool
    quadrature_order: int
    out: str
    format: str
    workers: int
    seed: int


def parse_snr_grid(value):
    """
    Parse "0,2,4" or "start:stop:step" (stop inclusive) into a list of dB values.

    Raises:
        ValueError: Malformed grid
    """
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError(f"range step must be positive, got {step:g}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(max(count, 0))]
    return [float(p) for p in text.split(",") if p.strip()]


def _parse_curves(value):
    """'code=G2,n=1;code=G4,n=2' -> list of override dicts."""
    curves = []
    for chunk in str(value).split(";"):
        if not chunk.strip():
            continue
        entry = {}
        for pair in chunk.split(","):
            if "=" not in pair:
                raise ValueError(f"curve entry {pair!r} is not key=value")
            key, val = (s.strip() for s in pair.split("=", 1))
            if key.lower() not in CURVE_KEYS:
                raise ValueError(f"curve key {key!r} is not one of {', '.join(CURVE_KEYS)}")
            entry[key.lower()] = val
        curves.append(entry)
    return curves


def _key_lines(path):
    """Line number of each key's last assignment, found by scanning the file."""
    lines = {}
    pattern = re.compile(r"^\s*(?:export\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=")
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            match = pattern.match(line)
            if match:
                lines[match.group(1).lower()] = number
    return lines


class _Collector:
    """Accumulates (line, key, message) diagnostics while coercing values."""

    def __init__(self, lines, explicit):
        self.lines = lines
        self.explicit = explicit
        self.diagnostics = []

    def add(self, key, message, where=""):
        line = self.lines.get(key) if key in self.explicit else None
        label = f"{where}{key}" if where else key
        self.diagnostics.append((line, label, message))

    def integer(self, values, key, default, low=None, high=None, where="", allowed=()):
        raw = values.get(key, default)
        if raw is None:
            self.add(key, "is required", where)
            return None
        try:
            number = int(str(raw).strip())
        except ValueError:
            self.add(key, f"expected an integer, got {raw!r}", where)
            return None
        if number in allowed:
            return number
        if (low is not None and number < low) or (high is not None and number > high):
            bounds = f"[{low if low is not None else '-inf'}, {high if high is not None else 'inf'}]"
            self.add(key, f"value {number} outside {bounds}", where)
            return None
        return number

    def real(self, values, key, default, low=None, strict=False, where=""):
        raw = values.get(key, default)
        if raw is None:
            self.add(key, "is required", where)
            return None
        try:
            number = float(str(raw).strip())
        except ValueError:
            self.add(key, f"expected a number, got {raw!r}", where)
            return None
        if low is not None and (number <= low if strict else number < low):
            self.add(key, f"value {number:g} must be {'>' if strict else '>='} {low:g}", where)
            return None
        return number

    def boolean(self, values, key, default):
        raw = values.get(key, default)
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        self.add(key, f"expected true/false, got {raw!r}")
        return default


def _build_curve(values, index, collector):
    where = f"curve {index + 1}: " if index is not None else ""
    sf = collector.integer(values, "sf", None, where=where)
    if sf is not None and sf not in SF_RANGE:
        collector.add("sf", f"spreading factor {sf} outside {{7..12}}", where)
        sf = None
    es = collector.real(values, "es", 1.0, low=0.0, strict=True, where=where)

    code = None
    m = collector.integer(values, "m", None, low=1, where=where) if values.get("m") is not None else None
    code_name = values.get("code")
    if code_name is None and m is not None:
        try:
            code = code_for_antennas(m)
        except DomainError as exc:
            collector.add("m", str(exc), where)
    elif code_name is None:
        collector.add("code", f"is required, one of {', '.join(CODE_NAMES)}", where)
    else:
        try:
            code = code_matrix(str(code_name).strip())
        except DomainError:
            collector.add("code", f"unknown code {code_name!r}, expected one of {', '.join(CODE_NAMES)}", where)
        if code is not None and m is not None and m != code.antennas:
            collector.add("code", f"{code.name} requires M={code.antennas}, got m={m}", where)
            code = None

    n = collector.integer(values, "n", None, low=1, where=where)

    ceem = None
    try:
        model = parse_ceem_model(values.get("ceem", "perfect"))
    except DomainError as exc:
        collector.add("ceem", str(exc), where)
        model = None
    if model is CeemModel.PERFECT:
        ceem = CeemConfig.perfect()
    elif model is CeemModel.FIXED_VARIANCE:
        sigma_e_sq = collector.real(values, "sigma_e_sq", None, low=0.0, where=where)
        ceem = CeemConfig.fixed(sigma_e_sq) if sigma_e_sq is not None else None
    elif model is CeemModel.PILOT_DECAYING:
        pilots = collector.integer(values, "pilot_count", None, low=1, where=where)
        ceem = CeemConfig.pilot(pilots) if pilots is not None else None

    grid = None
    raw_grid = values.get("snr_db")
    if raw_grid is None:
        collector.add("snr_db", "is required", where)
    else:
        try:
            grid = parse_snr_grid(raw_grid)
        except ValueError as exc:
            collector.add("snr_db", str(exc), where)
        if grid is not None:
            if not grid:
                collector.add("snr_db", "grid is empty", where)
                grid = None
            elif any(b <= a for a, b in zip(grid, grid[1:])):
                collector.add("snr_db", "grid must be strictly increasing", where)
                grid = None

    return sf, es, code, n, ceem, grid


def _resolve(path, overrides):
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    path = Path(path)
    if not path.exists():
        return None, [(None, "path", f"manifest not found: {path}")]

    raw = {k.lower(): v for k, v in dotenv_values(path).items()}
    lines = _key_lines(path)
    collector = _Collector(lines, set(raw))

    for key, value in raw.items():
        if key not in KNOWN_KEYS:
            collector.add(key, "unknown key")
        elif value is None or str(value).strip() == "":
            collector.add(key, "has no value")
    raw = {k: v for k, v in raw.items() if k in KNOWN_KEYS and v is not None and str(v).strip() != ""}

    preset = raw.get("preset")
    curve_values = [{}]
    if preset:
        try:
            curve_values = expand_preset(preset)
        except DomainError as exc:
            collector.add("preset", str(exc))
            curve_values = [{}]
    explicit = {k: v for k, v in raw.items() if k in CURVE_KEYS}
    merged_curves = [{**curve, **explicit} for curve in curve_values]
    if "curves" in raw:
        try:
            custom = _parse_curves(raw["curves"])
        except ValueError as exc:
            collector.add("curves", str(exc))
            custom = []
        if custom:
            # custom curves replace the preset curves and inherit from the first one
            merged_curves = [{**merged_curves[0], **entry} for entry in custom]

    env = env_defaults()
    settings = {**env, **raw, **overrides}

    seed = collector.integer(settings, "seed", DEFAULT_SEED, low=0, high=2**63 - 1)
    workers = collector.integer(settings, "workers", 1, low=1, allowed=(-1,))
    min_errors = collector.integer(settings, "min_bit_errors", DEFAULT_MIN_BIT_ERRORS, low=50)
    max_blocks = collector.integer(settings, "max_blocks", DEFAULT_MAX_BLOCKS, low=1)
    order = collector.integer(settings, "quadrature_order", DEFAULT_HERMITE_ORDER, low=1, high=MAX_HERMITE_ORDER)
    fmt = str(settings.get("format", "csv")).strip().lower()
    if fmt not in FORMATS:
        collector.add("format", f"expected csv or json, got {fmt!r}")
        fmt = "csv"
    toggles = AnalyticToggles(
        closed_form=collector.boolean(settings, "analytic_closed_form", True),
        quadrature=collector.boolean(settings, "analytic_quadrature", True),
        asymptote=collector.boolean(settings, "analytic_asymptote", True),
        floor=collector.boolean(settings, "analytic_floor", True),
    )
    analytic_only = collector.boolean(settings, "analytic_only", False)

    where_curves = len(merged_curves) > 1
    specs = []
    for index, values in enumerate(merged_curves):
        sf, es, code, n, ceem, grid = _build_curve(values, index if where_curves else None, collector)
        if None in (sf, es, code, n, ceem, grid, seed, min_errors, max_blocks):
            continue
        try:
            specs.append(ExperimentSpec(
                modulation=ModulationConfig(sf, symbol_energy=es),
                code_name=code.name,
                n=n,
                ceem=ceem,
                snr_db=tuple(grid),
                min_bit_errors=min_errors,
                max_blocks=max_blocks,
                seed=seed,
                curve_index=index,
            ))
        except DomainError as exc:
            collector.add("curve", str(exc), f"curve {index + 1}: " if where_curves else "")

    if collector.diagnostics:
        return None, collector.diagnostics

    ids = [spec.curve_id for spec in specs]
    if len(set(ids)) != len(ids):
        return None, [(None, "curves", f"duplicate curve ids {sorted({i for i in ids if ids.count(i) > 1})}")]

    out = settings.get("out") or str(RESULTS_DIR / f"{preset or path.stem}.{fmt}")
    manifest = RunManifest(
        path=str(path),
        preset=preset or "custom",
        curves=tuple(specs),
        toggles=toggles,
        analytic_only=analytic_only,
        quadrature_order=order,
        out=str(out),
        format=fmt,
        workers=workers,
        seed=seed,
    )
    return manifest, []


def validate_manifest(path, overrides=None):
    """
    Report every constraint violation of a manifest without running it.

    Returns:
        list: (line, key, message) tuples, empty for a valid manifest
    """
    _, diagnostics = _resolve(path, overrides)
    return diagnostics


def load_manifest(path, overrides=None):
    """
    Parse, expand and validate a manifest.

    Args:
        path: Manifest file
        overrides (dict): CLI values (seed, workers, format, out, analytic_only)

    Returns:
        RunManifest

    Raises:
        ManifestError: Carries every diagnostic found
    """
    manifest, diagnostics = _resolve(path, overrides)
    if diagnostics:
        raise ManifestError(diagnostics)
    logger.debug("Manifest %s: %d curves, preset=%s", path, len(manifest.curves), manifest.preset)
    return manifest
