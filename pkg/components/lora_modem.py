"""
LoRa chirp spread spectrum modem
Modulation, dechirp + DFT demodulation and the correlator-bank reference demodulator
"""

import logging
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from utils.errors import DomainError

logger = logging.getLogger(__name__)

SF_RANGE = range(7, 13)
DEFAULT_BANDWIDTH_HZ = 125_000.0

# popcount of every value a 12-bit symbol XOR can take
_POPCOUNT = np.array([bin(v).count("1") for v in range(1 << max(SF_RANGE))], dtype=np.int64)


@dataclass(frozen=True)
class ModulationConfig:
    """
    Modulation parameters of one LoRa link.

    The bandwidth only fixes the chip and symbol durations; the discrete-time
    model runs at one sample per chip and never uses it.
    """
    spreading_factor: int
    symbol_energy: float = 1.0
    noise_density: float = 0.0
    bandwidth: float = DEFAULT_BANDWIDTH_HZ

    def __post_init__(self):
        if self.spreading_factor not in SF_RANGE:
            raise DomainError(
                f"spreading factor must be in {{7..12}}, got {self.spreading_factor!r}"
            )
        if not self.symbol_energy > 0:
            raise DomainError(f"symbol energy must be positive, got {self.symbol_energy!r}")
        if not self.noise_density >= 0:
            raise DomainError(f"noise density must be non-negative, got {self.noise_density!r}")
        if not self.bandwidth > 0:
            raise DomainError(f"bandwidth must be positive, got {self.bandwidth!r}")

    @property
    def chips_per_symbol(self):
        return 1 << self.spreading_factor

    @property
    def sample_interval(self):
        return 1.0 / self.bandwidth

    @property
    def symbol_duration(self):
        return self.chips_per_symbol * self.sample_interval

    def n0_for_snr(self, t_linear):
        """Noise density giving SNR T = Es / (N0 * 2^SF)."""
        if not t_linear > 0:
            raise DomainError(f"SNR must be positive, got {t_linear!r}")
        return self.symbol_energy / (t_linear * self.chips_per_symbol)

    def with_noise(self, noise_density):
        return replace(self, noise_density=noise_density)


def _chirp_phase(shifted, chips):
    # exp(j*2*pi*q^2/(2K)) is periodic in q^2 with period 2K, reduce before scaling
    q = np.asarray(shifted, dtype=np.int64)
    return 2.0 * np.pi * ((q * q) % (2 * chips)) / (2 * chips)


def _check_symbols(symbols, cfg):
    arr = np.asarray(symbols)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DomainError("LoRa symbols must be integers")
        arr = arr.astype(np.int64)
    if np.any(arr < 0) or np.any(arr >= cfg.chips_per_symbol):
        raise DomainError(
            f"LoRa symbol out of range [0, {cfg.chips_per_symbol - 1}] for SF={cfg.spreading_factor}"
        )
    return arr.astype(np.int64)


def _check_frame_length(frames, cfg):
    arr = np.asarray(frames)
    if arr.ndim == 0 or arr.shape[-1] != cfg.chips_per_symbol:
        length = None if arr.ndim == 0 else arr.shape[-1]
        raise DomainError(
            f"frame length {length} does not match 2^SF = {cfg.chips_per_symbol}"
        )
    return arr


def modulate(p, cfg):
    """
    Baseband chirp frame of symbol p.

    Args:
        p (int): Symbol value in [0, 2^SF - 1]
        cfg (ModulationConfig): Modulation parameters

    Returns:
        np.ndarray: Complex frame of 2^SF chips, each of magnitude sqrt(Es/2^SF)
    """
    symbol = _check_symbols(p, cfg)
    if symbol.ndim != 0:
        raise DomainError("modulate takes a single symbol, use modulate_batch for arrays")
    return modulate_batch(symbol, cfg)


def modulate_batch(symbols, cfg):
    """Modulate an integer array of symbols; the chip axis is appended last."""
    symbols = _check_symbols(symbols, cfg)
    chips = cfg.chips_per_symbol
    kappa = np.arange(chips, dtype=np.int64)
    shifted = (symbols[..., None] + kappa) % chips
    amplitude = np.sqrt(cfg.symbol_energy / chips)
    return amplitude * np.exp(1j * _chirp_phase(shifted, chips))


@lru_cache(maxsize=None)
def _downchirp(sf):
    chips = 1 << sf
    kappa = np.arange(chips, dtype=np.int64)
    frame = np.exp(-1j * _chirp_phase(kappa, chips)) / np.sqrt(chips)
    frame.flags.writeable = False
    return frame


def downchirp(cfg):
    """Unit-energy conjugate of the base upchirp, shared read-only per SF."""
    return _downchirp(cfg.spreading_factor)


def demod_dft(received, cfg):
    """
    Dechirp and take the unnormalized DFT.

    Args:
        received: Complex frame of length 2^SF
        cfg (ModulationConfig): Modulation parameters

    Returns:
        tuple: (symbol, metrics) with metrics[i] = |DFT(received * downchirp)[i]|
               and symbol the first index of the largest metric
    """
    received = _check_frame_length(received, cfg)
    if received.ndim != 1:
        raise DomainError("demod_dft takes a single frame, use demod_dft_batch for arrays")
    symbols, metrics = demod_dft_batch(received, cfg)
    return int(symbols), metrics


def demod_dft_batch(frames, cfg):
    """Vectorized demod_dft over every leading axis of frames."""
    frames = _check_frame_length(frames, cfg)
    metrics = np.abs(np.fft.fft(frames * _downchirp(cfg.spreading_factor), axis=-1))
    return np.argmax(metrics, axis=-1), metrics


@lru_cache(maxsize=2)
def _basis_matrix(sf):
    chips = 1 << sf
    kappa = np.arange(chips, dtype=np.int64)
    shifted = (kappa[:, None] + kappa[None, :]) % chips
    table = np.exp(1j * _chirp_phase(shifted, chips)) / np.sqrt(chips)
    table.flags.writeable = False
    return table


def basis_matrix(cfg):
    """
    Table of the 2^SF unit-energy basis chirps, row i holding symbol i.

    Only the two most recent spreading factors are kept; the SF=12 table
    alone takes 256 MiB.
    """
    return _basis_matrix(cfg.spreading_factor)


def correlate(received, cfg):
    """Correlator outputs against every basis chirp, conj-weighted inner products."""
    received = _check_frame_length(received, cfg)
    return received @ basis_matrix(cfg).conj().T


def demod_correlator(received, cfg):
    """
    Slow reference demodulator: argmax of |correlation| over the basis bank.

    Decisions match demod_dft, including the lowest-index tie-break.
    """
    received = _check_frame_length(received, cfg)
    if received.ndim != 1:
        raise DomainError("demod_correlator takes a single frame")
    return int(np.argmax(np.abs(correlate(received, cfg))))


def symbol_to_bits(p, sf):
    """Natural-binary bits of p, most significant first, on a trailing axis of length sf."""
    p = np.asarray(p, dtype=np.int64)
    shifts = np.arange(sf - 1, -1, -1, dtype=np.int64)
    return ((p[..., None] >> shifts) & 1).astype(np.uint8)


def bit_errors(p, p_hat, sf):
    """Hamming weight of p XOR p_hat under the natural-binary mapping."""
    p = np.asarray(p, dtype=np.int64)
    p_hat = np.asarray(p_hat, dtype=np.int64)
    limit = 1 << sf
    if np.any((p < 0) | (p >= limit)) or np.any((p_hat < 0) | (p_hat >= limit)):
        raise DomainError(f"symbols must lie in [0, {limit - 1}] for SF={sf}")
    return _POPCOUNT[np.bitwise_xor(p, p_hat)]
