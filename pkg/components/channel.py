"""
Quasi-static flat Rayleigh MIMO channel
Channel draws, estimation-error models (perfect, fixed variance, pilot decaying) and AWGN
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from utils.analytic import rice_factor_diagnostic
from utils.errors import DomainError

logger = logging.getLogger(__name__)


class CeemModel(str, Enum):
    PERFECT = "perfect"
    FIXED_VARIANCE = "ceem1"
    PILOT_DECAYING = "ceem2"


_MODEL_ALIASES = {
    "perfect": CeemModel.PERFECT,
    "none": CeemModel.PERFECT,
    "ceem1": CeemModel.FIXED_VARIANCE,
    "fixed": CeemModel.FIXED_VARIANCE,
    "fixedvariance": CeemModel.FIXED_VARIANCE,
    "ceem2": CeemModel.PILOT_DECAYING,
    "pilot": CeemModel.PILOT_DECAYING,
    "pilotdecaying": CeemModel.PILOT_DECAYING,
}


@dataclass(frozen=True)
class CeemConfig:
    """
    Channel-estimation-error model.

    Attributes:
        model: PERFECT, FIXED_VARIANCE (ceem1) or PILOT_DECAYING (ceem2)
        sigma_e_sq: Error variance, FIXED_VARIANCE only
        pilot_count: Number of pilot symbols Lp, PILOT_DECAYING only
    """
    model: CeemModel = CeemModel.PERFECT
    sigma_e_sq: float = 0.0
    pilot_count: int = None

    def __post_init__(self):
        object.__setattr__(self, "model", parse_ceem_model(self.model))
        if self.model is CeemModel.FIXED_VARIANCE:
            if not self.sigma_e_sq >= 0:
                raise DomainError(f"sigma_e_sq must be non-negative, got {self.sigma_e_sq!r}")
        elif self.sigma_e_sq:
            raise DomainError(f"sigma_e_sq is only set for the fixed-variance model, got {self.sigma_e_sq!r}")
        if self.model is CeemModel.PILOT_DECAYING:
            if self.pilot_count is None or int(self.pilot_count) != self.pilot_count or self.pilot_count < 1:
                raise DomainError(f"pilot_count must be a positive integer, got {self.pilot_count!r}")

    @classmethod
    def perfect(cls):
        return cls(CeemModel.PERFECT)

    @classmethod
    def fixed(cls, sigma_e_sq):
        return cls(CeemModel.FIXED_VARIANCE, sigma_e_sq=sigma_e_sq)

    @classmethod
    def pilot(cls, pilot_count):
        return cls(CeemModel.PILOT_DECAYING, pilot_count=pilot_count)

    @property
    def label(self):
        return self.model.value

    def effective_sigma_e_sq(self, t_linear, sf):
        return effective_sigma_e_sq(self, t_linear, sf)


def parse_ceem_model(value):
    """Accept a CeemModel or any of its textual aliases."""
    if isinstance(value, CeemModel):
        return value
    key = str(value).strip().lower().replace("_", "").replace("-", "").replace(" ", "")
    if key not in _MODEL_ALIASES:
        raise DomainError(f"unknown estimation-error model {value!r}, expected perfect, ceem1 or ceem2")
    return _MODEL_ALIASES[key]


def effective_sigma_e_sq(ceem, t_linear, sf):
    """
    Error variance seen at SNR T.

    Pilot-decaying estimation gives 1/(1 + Lp * 2^SF * T).
    """
    if ceem.model is CeemModel.PERFECT:
        return 0.0
    if ceem.model is CeemModel.FIXED_VARIANCE:
        return float(ceem.sigma_e_sq)
    if not t_linear > 0:
        raise DomainError(f"pilot-decaying estimation needs a positive SNR, got {t_linear!r}")
    if sf is None:
        raise DomainError("pilot-decaying estimation needs the spreading factor")
    return 1.0 / (1.0 + ceem.pilot_count * (1 << sf) * t_linear)


def _complex_gaussian(rng, shape, variance):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class ChannelRealization:
    """True gains H (M x N) and estimation errors E_h; the receiver sees H + E_h."""
    h: np.ndarray
    e_h: np.ndarray = field(default=None)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        e_h = np.zeros_like(h) if self.e_h is None else np.asarray(self.e_h, dtype=complex)
        if e_h.shape != h.shape:
            raise DomainError(f"estimation error shape {e_h.shape} does not match channel {h.shape}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "e_h", e_h)

    @property
    def shape(self):
        return self.h.shape

    @property
    def h_hat(self):
        return self.h + self.e_h

    @property
    def frobenius_sq(self):
        return float(np.sum(np.abs(self.h_hat) ** 2))


def sample_channel(m, n, rng):
    """
    Draw M x N i.i.d. CN(0, 1) gains, variance 0.5 per dimension.

    Args:
        m (int): Transmit antennas, >= 1
        n (int): Receive antennas, >= 1
        rng (np.random.Generator): Random source

    Returns:
        ChannelRealization: Realization with zero estimation error
    """
    return ChannelRealization(sample_channel_batch(1, m, n, rng)[0])


def sample_channel_batch(blocks, m, n, rng):
    """One independent M x N gain matrix per block, shape (blocks, M, N)."""
    if m < 1 or n < 1:
        raise DomainError(f"antenna counts must be positive, got M={m!r}, N={n!r}")
    return _complex_gaussian(rng, (blocks, m, n), 1.0)


def estimate_channel(real, ceem, t_linear, rng, sf=None):
    """
    Attach estimation errors E_h ~ CN(0, sigma_e^2), independent of H.

    Args:
        real (ChannelRealization): True channel
        ceem (CeemConfig): Error model
        t_linear (float): SNR T, used by the pilot-decaying model
        rng (np.random.Generator): Random source, untouched for perfect CSI
        sf (int): Spreading factor, required by the pilot-decaying model

    Returns:
        ChannelRealization: Same H with E_h filled in
    """
    e_h = estimate_channel_batch(real.h[None], ceem, t_linear, rng, sf)[0]
    return ChannelRealization(real.h, e_h)


def estimate_channel_batch(h, ceem, t_linear, rng, sf=None):
    """Estimation errors for a (blocks, M, N) batch of gains."""
    sigma_e_sq = effective_sigma_e_sq(ceem, t_linear, sf)
    if sigma_e_sq == 0.0:
        return np.zeros_like(h)
    return _complex_gaussian(rng, h.shape, sigma_e_sq)


def transmit(tx_slots, real, n0, rng):
    """
    Pass one block through the channel: r[u, n] = sum_m h[m, n] x[u, m] + noise.

    Args:
        tx_slots: Frames of shape (U, M, K)
        real (ChannelRealization): Channel held constant over the U slots
        n0 (float): Noise density, variance per complex sample
        rng (np.random.Generator): Random source, untouched when n0 is zero

    Returns:
        np.ndarray: Received frames of shape (U, N, K)
    """
    return transmit_batch(np.asarray(tx_slots)[None], real.h[None], n0, rng)[0]


def transmit_batch(tx_slots, h, n0, rng):
    """Vectorized transmit: (B, U, M, K) frames through (B, M, N) gains."""
    if n0 < 0:
        raise DomainError(f"noise density must be non-negative, got {n0!r}")
    if tx_slots.shape[0] != h.shape[0] or tx_slots.shape[2] != h.shape[1]:
        raise DomainError(f"tx shape {tx_slots.shape} does not match channel shape {h.shape}")
    received = np.einsum("bumk,bmn->bunk", tx_slots, h)
    if n0 > 0:
        received = received + _complex_gaussian(rng, received.shape, n0)
    return received


def frobenius_sq_batch(h_hat):
    """X = ||H_hat||_F^2 per block."""
    return np.sum(np.abs(h_hat) ** 2, axis=(-2, -1))


def rice_factor_samples(params, rng, count):
    """
    Draw X = ||H + E_h||_F^2 and map each draw to its Rice factor.

    Args:
        params: analytic.SystemParams of the link
        rng (np.random.Generator): Random source
        count (int): Number of draws

    Returns:
        np.ndarray: Rice factors K_alpha, linear scale
    """
    h = sample_channel_batch(count, params.m, params.n, rng)
    if params.sigma_e_sq > 0:
        h = h + _complex_gaussian(rng, h.shape, params.sigma_e_sq)
    return rice_factor_diagnostic(params, frobenius_sq_batch(h))
