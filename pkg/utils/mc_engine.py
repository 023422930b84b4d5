"""
Monte Carlo BER engine for STBC-MIMO LoRa
Seeded, chunked block simulation over SNR grids with a joblib worker pool
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm.auto import tqdm

from components.channel import (
    CeemConfig,
    effective_sigma_e_sq,
    estimate_channel_batch,
    frobenius_sq_batch,
    sample_channel_batch,
    transmit_batch,
)
from components.lora_modem import ModulationConfig, bit_errors, demod_dft_batch
from components.stbc import code_matrix, combine_batch, derive_combining_plan, encode_batch
from utils.errors import AccuracyError, DomainError
from utils.numerics import db_to_linear, fit_diversity_slope

logger = logging.getLogger(__name__)

DEFAULT_MIN_BIT_ERRORS = 200
DEFAULT_MAX_BLOCKS = 1_000_000
DEFAULT_SEED = 20201

# complex samples per chunk, bounds the working set at roughly 16 MiB per array
CHUNK_SAMPLES = 1 << 20

Z_95 = 1.959963984540054


@dataclass(frozen=True)
class ExperimentSpec:
    """
    One simulated curve: a link configuration swept over an SNR grid.

    Attributes:
        modulation: ModulationConfig (SF and Es)
        code_name: SISO, G2, G3 or G4
        n: Receive antennas
        ceem: Channel-estimation-error model
        snr_db: Strictly increasing SNR grid, dB of T
        min_bit_errors: Stop once this many bit errors are counted
        max_blocks: Stop after this many blocks regardless
        seed: Master seed
        curve_id: Label carried into every record
        curve_index: Position of the curve in its run, part of the seed key
    """
    modulation: ModulationConfig
    code_name: str
    n: int
    ceem: CeemConfig = field(default_factory=CeemConfig.perfect)
    snr_db: tuple = ()
    min_bit_errors: int = DEFAULT_MIN_BIT_ERRORS
    max_blocks: int = DEFAULT_MAX_BLOCKS
    seed: int = DEFAULT_SEED
    curve_id: str = ""
    curve_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "code_name", code_matrix(self.code_name).name)
        if not self.snr_db:
            raise DomainError("SNR grid must not be empty")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise DomainError(f"SNR grid must be strictly increasing, got {list(self.snr_db)}")
        if self.min_bit_errors < 50:
            raise DomainError(f"min_bit_errors must be at least 50, got {self.min_bit_errors!r}")
        if self.max_blocks < 1:
            raise DomainError(f"max_blocks must be positive, got {self.max_blocks!r}")
        if self.n < 1:
            raise DomainError(f"receive antennas must be positive, got {self.n!r}")
        if self.seed < 0:
            raise DomainError(f"seed must be non-negative, got {self.seed!r}")
        if not self.curve_id:
            object.__setattr__(self, "curve_id", default_curve_id(self))

    @property
    def sf(self):
        return self.modulation.spreading_factor

    @property
    def code(self):
        return code_matrix(self.code_name)

    @property
    def plan(self):
        return derive_combining_plan(self.code)

    @property
    def m(self):
        return self.code.antennas


def default_curve_id(spec):
    ceem = spec.ceem
    if ceem.label == "ceem1":
        tail = f"ceem1-{ceem.sigma_e_sq:g}"
    elif ceem.label == "ceem2":
        tail = f"ceem2-lp{ceem.pilot_count}"
    else:
        tail = "perfect"
    return f"sf{spec.sf}-{spec.code_name.lower()}-{spec.m}x{spec.n}-{tail}"


@dataclass(frozen=True)
class BerEstimate:
    """Error counters of one SNR point; ratios and intervals are derived."""
    snr_db: float
    bit_errors: int
    bits_total: int
    symbol_errors: int
    symbols_total: int
    seed: int
    blocks_run: int
    sigma_e_sq: float = 0.0
    stopped_by: str = "blocks"
    curve_id: str = ""

    @property
    def ber(self):
        return self.bit_errors / self.bits_total if self.bits_total else math.nan

    @property
    def ser(self):
        return self.symbol_errors / self.symbols_total if self.symbols_total else math.nan

    @property
    def ci_halfwidth(self):
        """95% normal-approximation half-width of the BER."""
        return _normal_halfwidth(self.ber, self.bits_total)

    @property
    def ser_ci_halfwidth(self):
        return _normal_halfwidth(self.ser, self.symbols_total)


def _normal_halfwidth(p, trials):
    if not trials:
        return math.nan
    return Z_95 * math.sqrt(p * (1.0 - p) / trials)


def merge_counts(a, b):
    """
    Sum the counters of two estimates of the same point.

    Associative and commutative; stopped_by is "errors" if either side
    reached the error target.
    """
    if a.snr_db != b.snr_db or a.seed != b.seed or a.curve_id != b.curve_id:
        raise DomainError("can only merge estimates of the same curve, point and seed")
    return BerEstimate(
        snr_db=a.snr_db,
        bit_errors=a.bit_errors + b.bit_errors,
        bits_total=a.bits_total + b.bits_total,
        symbol_errors=a.symbol_errors + b.symbol_errors,
        symbols_total=a.symbols_total + b.symbols_total,
        seed=a.seed,
        blocks_run=a.blocks_run + b.blocks_run,
        sigma_e_sq=a.sigma_e_sq,
        stopped_by="errors" if "errors" in (a.stopped_by, b.stopped_by) else "blocks",
        curve_id=a.curve_id,
    )


def chunk_blocks(spec):
    """Blocks per chunk, a fixed function of SF, U, M and N."""
    code = spec.code
    per_block = code.slots * max(code.antennas, spec.n) * spec.modulation.chips_per_symbol
    return max(1, CHUNK_SAMPLES // per_block)


def point_rng(seed, curve_index, snr_index, chunk_index):
    """Counter-based generator keyed by (seed, curve, point, chunk)."""
    sequence = np.random.SeedSequence(seed, spawn_key=(curve_index, snr_index, chunk_index))
    return np.random.Generator(np.random.Philox(sequence))


def _snr_setup(spec, snr_index):
    if not 0 <= snr_index < len(spec.snr_db):
        raise DomainError(f"snr_index {snr_index} outside grid of {len(spec.snr_db)} points")
    t_linear = db_to_linear(spec.snr_db[snr_index])
    n0 = spec.modulation.n0_for_snr(t_linear)
    return t_linear, n0


def _simulate_chunk(spec, t_linear, n0, blocks, rng, h=None):
    """Draw order: symbols, channel, estimation error, noise."""
    cfg = spec.modulation
    code = spec.code
    symbols = rng.integers(0, cfg.chips_per_symbol, size=(blocks, code.symbols_per_block))
    if h is None:
        h = sample_channel_batch(blocks, code.antennas, spec.n, rng)
    else:
        h = np.broadcast_to(np.asarray(h, dtype=complex), (blocks, code.antennas, spec.n))
    h_hat = h + estimate_channel_batch(h, spec.ceem, t_linear, rng, spec.sf)
    tx = encode_batch(symbols, code, cfg)
    rx = transmit_batch(tx, h, n0, rng)
    combined = combine_batch(rx, h_hat, spec.plan)
    decided, metrics = demod_dft_batch(combined, cfg)
    return symbols, decided, metrics, h_hat


def run_point(spec, snr_index):
    """
    Simulate independent code blocks at one SNR until the stop rule fires.

    Blocks run in fixed-size chunks, each with its own generator, and the
    stop rule is checked after every chunk in chunk order, so the counters
    depend only on (spec, snr_index).

    Args:
        spec (ExperimentSpec): Curve definition
        snr_index (int): Position in spec.snr_db

    Returns:
        BerEstimate: Counters for the point
    """
    t_linear, n0 = _snr_setup(spec, snr_index)
    sf = spec.sf
    chunk = chunk_blocks(spec)
    sigma_e_sq = effective_sigma_e_sq(spec.ceem, t_linear, sf) if math.isfinite(t_linear) else 0.0

    bit_count = symbol_count = blocks_run = 0
    chunk_index = 0
    stopped_by = "blocks"
    while blocks_run < spec.max_blocks:
        blocks = min(chunk, spec.max_blocks - blocks_run)
        rng = point_rng(spec.seed, spec.curve_index, snr_index, chunk_index)
        symbols, decided, _, _ = _simulate_chunk(spec, t_linear, n0, blocks, rng)
        bit_count += int(bit_errors(symbols, decided, sf).sum())
        symbol_count += int(np.count_nonzero(symbols != decided))
        blocks_run += blocks
        chunk_index += 1
        logger.debug("%s snr=%.2f dB chunk %d: %d blocks, %d bit errors",
                     spec.curve_id, spec.snr_db[snr_index], chunk_index, blocks_run, bit_count)
        if bit_count >= spec.min_bit_errors:
            stopped_by = "errors"
            break

    if stopped_by == "blocks":
        logger.warning("%s snr=%.2f dB hit max_blocks=%d with %d bit errors (< %d)",
                       spec.curve_id, spec.snr_db[snr_index], spec.max_blocks,
                       bit_count, spec.min_bit_errors)

    symbols_total = blocks_run * spec.code.symbols_per_block
    estimate = BerEstimate(
        snr_db=spec.snr_db[snr_index],
        bit_errors=bit_count,
        bits_total=symbols_total * sf,
        symbol_errors=symbol_count,
        symbols_total=symbols_total,
        seed=spec.seed,
        blocks_run=blocks_run,
        sigma_e_sq=sigma_e_sq,
        stopped_by=stopped_by,
        curve_id=spec.curve_id,
    )
    logger.info("%s snr=%.2f dB: ber=%.3e (%d errors, %d blocks)",
                spec.curve_id, estimate.snr_db, estimate.ber, bit_count, blocks_run)
    return estimate


def run_sweep(spec, workers=1, progress=False):
    """
    One BerEstimate per grid point, identical for any worker count.

    Args:
        spec (ExperimentSpec): Curve definition
        workers (int): joblib worker count, 1 runs in-process
        progress (bool): Show a tqdm bar over SNR points

    Returns:
        list: BerEstimate sorted by SNR
    """
    points = len(spec.snr_db)
    pending = Parallel(n_jobs=workers, return_as="generator")(
        delayed(run_point)(spec, i) for i in range(points)
    )
    # the bar advances as finished points come back, not as they are dispatched
    done = tqdm(pending, total=points, desc=spec.curve_id, unit="pt", disable=not progress, leave=False)
    return sorted(done, key=lambda est: est.snr_db)


def estimate_diversity_slope(curve, window=None, min_bit_errors=50):
    """
    Empirical diversity order from the last `window` points of a curve.

    Raises:
        AccuracyError: A windowed point has too few errors or zero BER
    """
    points = list(curve)[-window:] if window else list(curve)
    if len(points) < 2:
        raise AccuracyError("need at least two points to fit a slope")
    for est in points:
        if est.bit_errors < min_bit_errors or not est.ber > 0:
            raise AccuracyError(
                f"point at {est.snr_db} dB has {est.bit_errors} bit errors, "
                f"need {min_bit_errors} for a slope estimate"
            )
    return fit_diversity_slope([p.snr_db for p in points], [p.ber for p in points])


def _noise_bins(symbols, chips):
    """One bin per block holding none of the block's symbols."""
    candidate = (symbols[:, 0] + chips // 2) % chips
    for _ in range(symbols.shape[1] + 1):
        taken = np.any(symbols == candidate[:, None], axis=1)
        if not taken.any():
            break
        candidate = np.where(taken, (candidate + 1) % chips, candidate)
    return candidate


def collect_metrics(spec, snr_index, blocks, h=None):
    """
    Decision metrics of the first combined symbol of each block.

    Args:
        spec (ExperimentSpec): Curve definition
        snr_index (int): Position in spec.snr_db
        blocks (int): Number of blocks
        h: Optional fixed M x N channel held for every block

    Returns:
        pd.DataFrame: Columns x (||H_hat||_F^2), desired (bin of g1), noise
                      (a bin holding no symbol) and iai_1..iai_{J-1} (bins of
                      the co-transmitted symbols, NaN where they hit g1's bin)
    """
    t_linear, n0 = _snr_setup(spec, snr_index)
    chips = spec.modulation.chips_per_symbol
    interferers = spec.code.symbols_per_block - 1
    chunk = chunk_blocks(spec)

    frames = []
    done = 0
    chunk_index = 0
    while done < blocks:
        count = min(chunk, blocks - done)
        rng = point_rng(spec.seed, spec.curve_index, snr_index, chunk_index)
        symbols, _, metrics, h_hat = _simulate_chunk(spec, t_linear, n0, count, rng, h)
        first = metrics[:, 0, :]
        rows = np.arange(count)
        table = {
            "x": frobenius_sq_batch(h_hat),
            "desired": first[rows, symbols[:, 0]],
            "noise": first[rows, _noise_bins(symbols, chips)],
        }
        for k in range(1, interferers + 1):
            values = first[rows, symbols[:, k]]
            table[f"iai_{k}"] = np.where(symbols[:, k] == symbols[:, 0], np.nan, values)
        frames.append(pd.DataFrame(table))
        done += count
        chunk_index += 1
    return pd.concat(frames, ignore_index=True)
