"""
Curve records for the experiment runner
One row per (curve, SNR point), written as CSV or JSON and read back with validation
"""

import logging
import math
import os
from pathlib import Path

import pandas as pd

from components.channel import CeemModel
from components.stbc import CODE_NAMES
from utils.errors import DomainError

logger = logging.getLogger(__name__)

COLUMNS = (
    "curve_id", "sf", "m", "n", "code", "ceem", "sigma_e_sq", "snr_db",
    "ber_sim", "ci95", "ber_analytic", "ber_asymptotic", "ber_floor",
    "bits", "blocks", "seed",
)
CSV_HEADER = ",".join(COLUMNS)

INTEGER_COLUMNS = ("sf", "m", "n", "seed")
COUNT_COLUMNS = ("bits", "blocks")
FLOAT_COLUMNS = ("sigma_e_sq", "snr_db", "ber_sim", "ci95", "ber_analytic", "ber_asymptotic", "ber_floor")


def curve_records(spec, sigma_e_sq, estimates=None, analytic_rows=None):
    """
    Records of one curve.

    Args:
        spec (ExperimentSpec): Curve definition
        sigma_e_sq (list): Effective error variance per SNR point
        estimates (list): BerEstimate per point, None for analytic-only runs
        analytic_rows (list): Dicts from analytic_curve, None when disabled

    Returns:
        list: One dict per SNR point with every column of COLUMNS
    """
    rows = []
    for i, snr_db in enumerate(spec.snr_db):
        est = estimates[i] if estimates else None
        analytic = analytic_rows[i] if analytic_rows else {}
        rows.append({
            "curve_id": spec.curve_id,
            "sf": spec.sf,
            "m": spec.m,
            "n": spec.n,
            "code": spec.code_name,
            "ceem": spec.ceem.label,
            "sigma_e_sq": sigma_e_sq[i],
            "snr_db": snr_db,
            "ber_sim": est.ber if est else math.nan,
            "ci95": est.ci_halfwidth if est else math.nan,
            "ber_analytic": analytic.get("ber_analytic", math.nan),
            "ber_asymptotic": analytic.get("ber_asymptotic", math.nan),
            "ber_floor": analytic.get("ber_floor", math.nan),
            "bits": est.bits_total if est else None,
            "blocks": est.blocks_run if est else None,
            "seed": spec.seed,
        })
    return rows


def records_frame(rows):
    """Assemble rows into a DataFrame with fixed column order, sorted by (curve_id, snr_db)."""
    df = pd.DataFrame(rows, columns=list(COLUMNS))
    for column in COUNT_COLUMNS:
        df[column] = pd.array(df[column], dtype="Int64")
    for column in INTEGER_COLUMNS:
        df[column] = df[column].astype("int64") if len(df) else df[column]
    return df.sort_values(["curve_id", "snr_db"], kind="mergesort").reset_index(drop=True)


def write_records(df, path, fmt="csv"):
    """
    Write records atomically: the file appears only once fully written.

    Args:
        df (pd.DataFrame): Records from records_frame
        path: Output file
        fmt (str): csv or json

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = partial_path(path)
    if fmt == "csv":
        df.to_csv(partial, index=False, na_rep="", lineterminator="\n")
    elif fmt == "json":
        df.to_json(partial, orient="records", indent=2, double_precision=15)
    else:
        raise DomainError(f"unknown output format {fmt!r}, expected csv or json")
    os.replace(partial, path)
    logger.info("Wrote %d records to %s", len(df), path)
    return path


def partial_path(path):
    path = Path(path)
    return path.with_name(path.name + ".partial")


def load_records(path):
    """
    Read a CSV or JSON record file and check its columns and types.

    Returns:
        pd.DataFrame: Records with the column order of COLUMNS

    Raises:
        DomainError: Missing or extra columns, or values of the wrong type
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Record file not found at {path}")
    if path.suffix == ".json":
        df = pd.read_json(path, orient="records", dtype=False)
    else:
        df = pd.read_csv(path, keep_default_na=True)

    problems = []
    if path.suffix != ".json" and tuple(df.columns) != COLUMNS:
        problems.append(f"header {','.join(df.columns)} differs from {CSV_HEADER}")
    missing = [c for c in COLUMNS if c not in df.columns]
    extra = [c for c in df.columns if c not in COLUMNS]
    if missing:
        problems.append(f"missing columns {missing}")
    if extra:
        problems.append(f"unexpected columns {extra}")
    if problems:
        raise DomainError("; ".join(problems))

    df = df[list(COLUMNS)].copy()
    for column in FLOAT_COLUMNS:
        converted = pd.to_numeric(df[column], errors="coerce")
        if converted.isna().sum() != df[column].isna().sum():
            problems.append(f"column {column} holds non-numeric values")
        df[column] = converted.astype(float)
    for column in INTEGER_COLUMNS + COUNT_COLUMNS:
        converted = pd.to_numeric(df[column], errors="coerce")
        if column in INTEGER_COLUMNS and converted.isna().any():
            problems.append(f"column {column} must be filled")
        elif (converted.dropna() % 1 != 0).any():
            problems.append(f"column {column} holds non-integer values")
        else:
            df[column] = pd.array(converted, dtype="Int64")
    bad_codes = sorted(set(df["code"]) - set(CODE_NAMES))
    if bad_codes:
        problems.append(f"unknown codes {bad_codes}")
    bad_ceem = sorted(set(df["ceem"]) - {m.value for m in CeemModel})
    if bad_ceem:
        problems.append(f"unknown estimation models {bad_ceem}")
    # the asymptote is a high-SNR expression and may exceed 1 at low SNR
    probabilities = df[["ber_sim", "ber_analytic", "ber_floor"]]
    if ((probabilities < 0) | (probabilities > 1)).any().any():
        problems.append("BER values must lie in [0, 1]")
    if problems:
        raise DomainError("; ".join(problems))
    return df
