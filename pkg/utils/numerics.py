"""
Special functions and quadrature for the BER analysis
Q-function, harmonic numbers, Gauss-Hermite rules and adaptive integration
"""

import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import comb, erfc, gammainc, gammaincc, gammaln, log_ndtr, roots_hermite

from utils.errors import AccuracyError, DomainError, InternalError

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)

# Upper bound on the Gauss-Hermite order accepted from manifests
MAX_HERMITE_ORDER = 128

DEFAULT_HERMITE_ORDER = 30

# QUADPACK rejects relative tolerances below 50 machine epsilons
MIN_RELATIVE_TOL = 1.2e-14


@dataclass(frozen=True)
class HarmonicPair:
    """Partial sums h_k = sum 1/q and l_k = sum 1/q^2 for q = 1..k."""
    k: int
    h_k: float
    l_k: float


@dataclass(frozen=True)
class QuadratureRule:
    """
    Gauss-Hermite rule for integrals of the form
    integral f(xi) exp(-xi^2) d xi ~= sum w_i f(xi_i).

    Nodes are sorted ascending. Arrays are read-only so a cached rule can be
    shared between threads and worker processes.
    """
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def log_weights(self):
        return np.log(self.weights)

    def integrate(self, f):
        """
        Apply the rule to a vectorized function.

        Args:
            f: Callable taking an array of nodes and returning an array

        Returns:
            float: sum of weights * f(nodes)
        """
        return float(np.dot(self.weights, f(self.nodes)))


def _require_finite(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def q_function(x):
    """
    Gaussian tail probability Q(x) = P[N(0,1) > x].

    Args:
        x: Real scalar or array, finite

    Returns:
        float or np.ndarray: Q(x) in [0, 1]
    """
    arr = _require_finite(x, "x")
    value = 0.5 * erfc(arr / math.sqrt(2.0))
    return float(value) if value.ndim == 0 else value


def log_q_function(x):
    """Natural log of Q(x), accurate far into the upper tail."""
    arr = _require_finite(x, "x")
    value = log_ndtr(-arr)
    return float(value) if value.ndim == 0 else value


@lru_cache(maxsize=None)
def harmonic_numbers(k):
    """
    Harmonic number h_k and second-order partial sum l_k.

    Both sums run in ascending q so consecutive values differ by exactly the
    added term.

    Args:
        k (int): Number of terms, k >= 1

    Returns:
        HarmonicPair: (k, h_k, l_k)
    """
    if int(k) != k or k < 1:
        raise DomainError(f"harmonic_numbers needs a positive integer k, got {k!r}")
    h_k = 0.0
    l_k = 0.0
    for q in range(1, int(k) + 1):
        h_k += 1.0 / q
        l_k += 1.0 / (q * q)
    return HarmonicPair(int(k), h_k, l_k)


@lru_cache(maxsize=None)
def gauss_hermite(order):
    """
    Nodes and weights of the order-rho Gauss-Hermite rule.

    Taken from scipy.special.roots_hermite, sorted ascending and frozen.

    Args:
        order (int): Number of nodes, 1 <= order <= 128

    Returns:
        QuadratureRule: Cached, read-only rule
    """
    if int(order) != order or not 1 <= order <= MAX_HERMITE_ORDER:
        raise DomainError(
            f"Gauss-Hermite order must be an integer in [1, {MAX_HERMITE_ORDER}], got {order!r}"
        )
    n = int(order)
    nodes, weights = roots_hermite(n)
    if not (np.all(np.isfinite(nodes)) and np.all(weights > 0.0)):
        raise InternalError(f"Gauss-Hermite rule of order {n} has non-finite nodes or non-positive weights")

    nodes = np.array(nodes, dtype=float)
    weights = np.array(weights, dtype=float)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(n, nodes, weights)


def adaptive_integrate(f, lower, upper, tol=1e-10, points=None, abs_tol=0.0):
    """
    Adaptive Gauss-Kronrod integration with infinite-limit support.

    A semi-infinite range [a, inf) is mapped onto [0, 1) with x = a + t/(1-t);
    the whole real line is split at zero and both halves mapped the same way.

    Args:
        f: Scalar callable, finite on (lower, upper)
        lower (float): Lower limit, may be -inf
        upper (float): Upper limit, may be +inf
        tol (float): Requested relative error
        points: Optional breakpoints inside a finite interval
        abs_tol (float): Absolute error accepted whatever the relative error

    Returns:
        float: Integral estimate

    Raises:
        AccuracyError: The integrator could not reach tol; carries best_estimate
    """
    if math.isnan(lower) or math.isnan(upper):
        raise DomainError("integration limits must not be NaN")
    if lower == upper:
        return 0.0
    if lower > upper:
        return -adaptive_integrate(f, upper, lower, tol, points, abs_tol)

    if math.isinf(lower) and math.isinf(upper):
        right = adaptive_integrate(f, 0.0, math.inf, tol, abs_tol=abs_tol)
        left = adaptive_integrate(lambda x: f(-x), 0.0, math.inf, tol, abs_tol=abs_tol)
        return left + right
    if math.isinf(lower):
        return adaptive_integrate(lambda x: f(-x), -upper, math.inf, tol, abs_tol=abs_tol)
    if math.isinf(upper):
        def mapped(t):
            s = 1.0 - t
            return f(lower + t / s) / (s * s)
        mapped_points = None
        if points is not None:
            mapped_points = [(p - lower) / (1.0 + p - lower) for p in points if p > lower]
        return _quad(mapped, 0.0, 1.0, tol, mapped_points, abs_tol)
    return _quad(f, lower, upper, tol, points, abs_tol)


def _quad(f, a, b, tol, points, abs_tol=0.0):
    inner_points = None
    if points:
        inner_points = sorted(p for p in points if a < p < b) or None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, abserr = integrate.quad(
            f, a, b, epsabs=abs_tol, epsrel=max(tol, MIN_RELATIVE_TOL), limit=500, points=inner_points
        )
    if caught and abserr > 10.0 * max(tol * abs(value), abs_tol):
        raise AccuracyError(
            f"adaptive integration on [{a}, {b}] stopped at error {abserr:.3e} "
            f"for value {value:.6e}: {caught[0].message}",
            best_estimate=value,
        )
    return value


def log_gamma(x):
    """Natural log of the Gamma function for x > 0."""
    if not x > 0 or not math.isfinite(x):
        raise DomainError(f"log_gamma needs a finite x > 0, got {x!r}")
    return float(gammaln(x))


def power_exp_integral(n, rate, lower, upper):
    """
    Integral of X^n exp(-rate X) over [lower, upper].

    Written as n!/rate^(n+1) times a difference of regularized incomplete
    gamma functions, taken on whichever side of the mode keeps both terms
    small so short intervals near zero keep their relative accuracy.

    Args:
        n (int): Non-negative integer power
        rate (float): Positive decay rate
        lower (float): Lower limit, >= 0
        upper (float): Upper limit, may be inf

    Returns:
        float: Value of the integral
    """
    if rate <= 0:
        raise DomainError(f"rate must be positive, got {rate!r}")
    if min(lower, upper) < 0:
        raise DomainError(f"limits must be non-negative, got {lower!r}, {upper!r}")
    if upper < lower:
        return -power_exp_integral(n, rate, upper, lower)
    shape = n + 1
    lo, hi = rate * lower, rate * upper
    if lo >= shape:
        mass = gammaincc(shape, lo) - gammaincc(shape, hi)
    else:
        mass = gammainc(shape, hi) - gammainc(shape, lo)
    return float(math.exp(gammaln(shape) - shape * math.log(rate)) * mass)


def binomial_series_tail(mu, order):
    """
    Closed-form fading average of a Gaussian tail,
        1/2 [1 - mu * sum_{k<L} C(2k, k) ((1-mu^2)/4)^k].

    Evaluated in the equivalent cancellation-free form
        ((1-mu)/2)^L * sum_{k<L} C(L-1+k, k) ((1+mu)/2)^k
    so that mu close to one keeps its relative accuracy.

    Args:
        mu (float): Correlation-like parameter in [0, 1]
        order (int): Positive integer number of diversity branches L

    Returns:
        float: The averaged tail probability
    """
    if not 0.0 <= mu <= 1.0:
        raise DomainError(f"mu must lie in [0, 1], got {mu!r}")
    if int(order) != order or order < 1:
        raise DomainError(f"order must be a positive integer, got {order!r}")
    k = np.arange(int(order))
    series = np.sum(comb(order - 1 + k, k) * ((1.0 + mu) / 2.0) ** k)
    return float(((1.0 - mu) / 2.0) ** order * series)


def fit_diversity_slope(snr_db, ber):
    """
    Empirical diversity order of a BER curve.

    Args:
        snr_db: SNR grid in dB
        ber: Matching positive error rates

    Returns:
        float: Negated least-squares slope of log10(ber) against snr_db/10
    """
    snr_db = np.asarray(snr_db, dtype=float)
    ber = np.asarray(ber, dtype=float)
    if snr_db.shape != ber.shape or snr_db.size < 2:
        raise DomainError("need at least two matching (snr, ber) points")
    if np.any(ber <= 0):
        raise DomainError("every BER value in the fit window must be positive")
    slope, _ = np.polyfit(snr_db / 10.0, np.log10(ber), 1)
    return float(-slope)


def db_to_linear(value_db):
    """10^(dB/10), element-wise."""
    value = np.power(10.0, np.asarray(value_db, dtype=float) / 10.0)
    return float(value) if value.ndim == 0 else value


def linear_to_db(value):
    """10*log10(value) for positive values, element-wise."""
    arr = np.asarray(value, dtype=float)
    if np.any(arr <= 0):
        raise DomainError(f"dB conversion needs positive values, got {value!r}")
    result = 10.0 * np.log10(arr)
    return float(result) if result.ndim == 0 else result
