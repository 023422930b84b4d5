"""
Analytic BER of STBC-MIMO LoRa over quasi-static Rayleigh fading
Closed forms, Gauss-Hermite evaluation, asymptotes, error floors and numeric oracles
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize
from scipy.special import comb, gammaln, i0e, logsumexp

from components.stbc import code_matrix
from utils.errors import DomainError, ValidityError
from utils.numerics import (
    DEFAULT_HERMITE_ORDER,
    adaptive_integrate,
    binomial_series_tail,
    gauss_hermite,
    harmonic_numbers,
    log_q_function,
    power_exp_integral,
    q_function,
)

logger = logging.getLogger(__name__)

SQRT_8PI = math.sqrt(8.0 * math.pi)
Q_OF_2 = q_function(2.0)

# Nested integration gets slow beyond this, the oracle is a test tool
ORACLE_MAX_SF = 9

# log X range searched for the peak of the noise-driven integrand
GH_SEARCH_BOUNDS = (-60.0, 10.0)

# distance of the tail map singularities from the real axis, at most
GH_MAX_BEND_RADIUS = 2.0

# absolute floor for the inner Rice expectations, which are probabilities
RICE_ABS_TOL = 1e-18

# share of tol * (outer magnitude) each nested integral may spend absolutely
INNER_ABS_SHARE = 1e-3
OUTER_ABS_SHARE = 1e-2

# below exp(-745) doubles underflow to zero
LOG_TINY = -745.0


@dataclass(frozen=True)
class SystemParams:
    """
    Link parameters seen by the analysis, with Es normalized to 1.

    Attributes:
        sf: Spreading factor
        m: Transmit antennas
        n: Receive antennas
        j: Symbols per code block
        rate: Code rate r = J/U
        sigma_e_sq: Effective channel-estimation error variance
        t_linear: SNR T = Es / (N0 * 2^SF)
    """
    sf: int
    m: int
    n: int
    j: int
    rate: float
    sigma_e_sq: float
    t_linear: float

    def __post_init__(self):
        if not 7 <= self.sf <= 12:
            raise DomainError(f"spreading factor must be in {{7..12}}, got {self.sf!r}")
        if self.m < 1 or self.n < 1 or self.j < 1:
            raise DomainError(f"M, N and J must be positive, got M={self.m}, N={self.n}, J={self.j}")
        if self.j >= self.chips:
            raise DomainError(f"J={self.j} leaves no noise-only bins at SF={self.sf}")
        if not self.rate > 0:
            raise DomainError(f"code rate must be positive, got {self.rate!r}")
        if not self.sigma_e_sq >= 0:
            raise DomainError(f"sigma_e_sq must be non-negative, got {self.sigma_e_sq!r}")
        if not self.t_linear > 0 or not math.isfinite(self.t_linear):
            raise DomainError(f"SNR T must be positive and finite, got {self.t_linear!r}")

    @property
    def chips(self):
        return 1 << self.sf

    @property
    def mn(self):
        return self.m * self.n

    @property
    def effective_snr(self):
        return self.chips * self.t_linear

    @property
    def n0(self):
        return 1.0 / self.effective_snr

    @property
    def prefactor(self):
        """Symbol-to-bit error conversion 2^(SF-1) / (2^SF - 1)."""
        return (self.chips / 2) / (self.chips - 1)

    def with_snr(self, t_linear):
        return replace(self, t_linear=t_linear)

    def with_sigma_e_sq(self, sigma_e_sq):
        return replace(self, sigma_e_sq=sigma_e_sq)

    def m_alpha(self, x):
        return np.asarray(x) * math.sqrt(1.0 / (self.rate * self.m))

    def sigma_alpha(self, x):
        return np.sqrt(np.asarray(x) * (self.sigma_e_sq / (self.rate * self.m) + self.n0) / 2.0)

    def sigma_beta(self, x):
        return self.sigma_alpha(x)

    def sigma_tau(self, x):
        return np.sqrt(np.asarray(x) * self.n0 / 2.0)


def system_params(sf, code, n, sigma_e_sq, t_linear):
    """
    Build SystemParams from a code.

    Args:
        sf (int): Spreading factor
        code: StbcCode or code name
        n (int): Receive antennas
        sigma_e_sq (float): Effective estimation error variance
        t_linear (float): SNR T, linear

    Returns:
        SystemParams
    """
    if isinstance(code, str):
        code = code_matrix(code)
    return SystemParams(
        sf=sf,
        m=code.antennas,
        n=n,
        j=code.symbols_per_block,
        rate=code.rate,
        sigma_e_sq=float(sigma_e_sq),
        t_linear=float(t_linear),
    )


@dataclass(frozen=True)
class AnalyticConstants:
    """
    Constants of the Gaussian-approximated noise-driven error probability and
    the breakpoints of its piecewise-linear Q approximation.

    The approximation is 1 on [0, a1], L1 on (a1, b1], L2 on (b1, b2] and 0
    beyond b2.
    """
    a: float
    b: float
    c: float
    d: float
    log_d: float
    e: float
    a1: float
    b1: float
    b2: float
    l1_slope: float
    l1_intercept: float
    l2_slope: float
    l2_intercept: float

    def l1(self, x):
        return self.l1_slope * np.asarray(x) + self.l1_intercept

    def l2(self, x):
        return self.l2_slope * np.asarray(x) + self.l2_intercept

    def q_argument(self, x):
        return (self.a * np.sqrt(x) - self.b) / self.c

    def linear_q(self, x):
        """Piecewise-linear stand-in for Q(q_argument(x))."""
        x = np.asarray(x, dtype=float)
        value = np.select(
            [x <= self.a1, x <= self.b1, x <= self.b2],
            [np.ones_like(x), self.l1(x), self.l2(x)],
            default=0.0,
        )
        return float(value) if value.ndim == 0 else value

    def log_density(self, x, mn):
        """log(D * X^(MN-1) * exp(E X)), the density of X."""
        return self.log_d + (mn - 1) * np.log(x) + self.e * x


def constants(params):
    """
    Constants A..E and breakpoints a1, b1, b2.

    A = sqrt(T 2^SF / (rM)), B = sqrt(h_{2^SF - J}),
    C = sqrt(sigma_e^2 T 2^SF / (2rM) + 1/2),
    D = 1 / (Gamma(MN) (1 + sigma_e^2)^MN), E = -1 / (1 + sigma_e^2).
    """
    rm = params.rate * params.m
    a = math.sqrt(params.effective_snr / rm)
    b = math.sqrt(harmonic_numbers(params.chips - params.j).h_k)
    c = math.sqrt(params.sigma_e_sq * params.effective_snr / (2.0 * rm) + 0.5)
    log_d = -gammaln(params.mn) - params.mn * math.log1p(params.sigma_e_sq)
    e = -1.0 / (1.0 + params.sigma_e_sq)

    a_sq = a * a
    l1_slope = -a_sq / (SQRT_8PI * b * c)
    l1_intercept = b / (SQRT_8PI * c) + 0.5
    l2_slope = -a_sq / (math.e * SQRT_8PI * c * (b + 2.0 * c))
    l2_intercept = (b + 2.0 * c) / (math.e * SQRT_8PI * c) + Q_OF_2

    a1 = (2.0 * b * b - SQRT_8PI * b * c) / (2.0 * a_sq)
    b1 = (l2_intercept - l1_intercept) / (l1_slope - l2_slope)
    b2 = (math.e * SQRT_8PI * c * (b + 2.0 * c) * Q_OF_2 + (b + 2.0 * c) ** 2) / a_sq

    return AnalyticConstants(
        a=a, b=b, c=c, d=math.exp(log_d), log_d=float(log_d), e=e,
        a1=a1, b1=b1, b2=b2,
        l1_slope=l1_slope, l1_intercept=l1_intercept,
        l2_slope=l2_slope, l2_intercept=l2_intercept,
    )


def p_err_n_perfect_closed(params):
    """
    Closed-form noise-driven error probability under perfect CSI.

    D * (I1 + I2 + I3): the density integrated against 1 on [0, a1], L1 on
    (a1, b1] and L2 on (b1, b2].

    Raises:
        DomainError: sigma_e^2 is not zero
        ValidityError: a1 < 0, the linear approximation does not hold
    """
    if params.sigma_e_sq != 0:
        raise DomainError(f"closed form needs perfect CSI, got sigma_e_sq={params.sigma_e_sq!r}")
    k = constants(params)
    if k.a1 < 0:
        raise ValidityError(
            f"a1={k.a1:.4g} < 0 at T={params.t_linear:.4g}, use the Gauss-Hermite path"
        )
    order = params.mn - 1
    rate = -k.e
    i1 = power_exp_integral(order, rate, 0.0, k.a1)
    i2 = (k.l1_intercept * power_exp_integral(order, rate, k.a1, k.b1)
          + k.l1_slope * power_exp_integral(order + 1, rate, k.a1, k.b1))
    i3 = (k.l2_intercept * power_exp_integral(order, rate, k.b1, k.b2)
          + k.l2_slope * power_exp_integral(order + 1, rate, k.b1, k.b2))
    return _probability(k.d * (i1 + i2 + i3))


def _log_noise_integrand(params, k, xi):
    """Log of the noise-driven integrand after X = e^xi, without D."""
    xi = np.asarray(xi, dtype=float)
    return params.mn * xi + k.e * np.exp(xi) + log_q_function((k.a * np.exp(xi / 2.0) - k.b) / k.c)


def _gh_mode(params, k):
    """Peak of the log integrand in xi (concave, so the peak is unique)."""
    found = optimize.minimize_scalar(
        lambda xi: -float(_log_noise_integrand(params, k, xi)),
        bounds=GH_SEARCH_BOUNDS,
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(found.x)


def _gh_curvature(params, k, xi):
    """Second derivative of the log integrand in xi, always negative."""
    u = k.a * math.exp(xi / 2.0) / k.c
    arg = u - k.b / k.c
    # inverse Mills ratio phi(arg) / Q(arg)
    mills = math.exp(-0.5 * arg * arg - 0.5 * math.log(2.0 * math.pi) - log_q_function(arg))
    return k.e * math.exp(xi) - mills * (mills - arg) * (u / 2.0) ** 2 - mills * u / 4.0


def _tail_map(s, mode, slope, bend, radius):
    """
    xi(s) = mode + slope*s + bend*(s*sqrt(radius^2 + s^2) - s^2) and dxi/ds.

    Linear for s > 0, quadratic with leading term -2*bend*s^2 for s < 0, and
    analytic for |Im s| < radius.
    """
    s = np.asarray(s, dtype=float)
    r_sq = radius * radius
    root = np.sqrt(r_sq + s * s)
    positive = s > 0
    curve = np.where(positive, s * r_sq / (root + np.abs(s)), s * root - s * s)
    bend_slope = np.where(
        positive,
        r_sq * r_sq / (root * (r_sq + 2.0 * s * s + 2.0 * np.abs(s) * root)),
        (r_sq + 2.0 * s * s) / root - 2.0 * s,
    )
    return mode + slope * s + bend * curve, slope + bend * bend_slope


def p_err_n_gh(params, rule=None):
    """
    Noise-driven error probability by Gauss-Hermite quadrature after X = e^xi.

    The rule is centred on the peak of the integrand in xi and scaled to its
    curvature there. Below the peak the integrand only falls off like
    e^(MN xi), so xi is bent quadratically on that side (see _tail_map) with
    the bend chosen to turn the tail into exp(-s^2), the rule's own weight.

    Args:
        params (SystemParams): Link parameters, any sigma_e^2
        rule (QuadratureRule): Defaults to the order-30 rule

    Returns:
        float: Probability, accumulated in the log domain
    """
    rule = rule or gauss_hermite(DEFAULT_HERMITE_ORDER)
    k = constants(params)
    mode = _gh_mode(params, k)
    scale = math.sqrt(-2.0 / _gh_curvature(params, k, mode))
    bend = 1.0 / (2.0 * params.mn)
    # keeps slope >= scale / 2
    radius = min(GH_MAX_BEND_RADIUS, params.mn * scale)
    slope = scale - bend * radius

    t = rule.nodes
    xi, dxi = _tail_map(t, mode, slope, bend, radius)
    log_terms = rule.log_weights + t * t + np.log(dxi) + _log_noise_integrand(params, k, xi)
    return _probability(math.exp(k.log_d + logsumexp(log_terms)))


def p_err_n_numeric(params, shifted=True, tol=1e-10):
    """
    Adaptive integration of the noise-driven error probability with the exact Q.

    Args:
        params (SystemParams): Link parameters
        shifted (bool): False drops B from the Q argument
        tol (float): Relative tolerance

    Returns:
        float: D * integral of Q((A sqrt(X) - B)/C) X^(MN-1) e^(EX)
    """
    k = constants(params)
    b = k.b if shifted else 0.0

    def integrand(x):
        if x <= 0.0:
            return 0.0
        return math.exp(k.log_density(x, params.mn) + log_q_function((k.a * math.sqrt(x) - b) / k.c))

    # the Q argument crosses zero at (B/A)^2
    points = [(b / k.a) ** 2] if b > 0 else None
    return _probability(adaptive_integrate(integrand, 0.0, math.inf, tol, points))


def p_err_n_la_numeric(params, tol=1e-12):
    """Adaptive integration of the density against the piecewise-linear Q."""
    k = constants(params)
    breaks = sorted(p for p in (k.a1, k.b1) if 0.0 < p < k.b2)

    def integrand(x):
        if x <= 0.0:
            return 0.0
        return k.linear_q(x) * math.exp(k.log_density(x, params.mn))

    return _probability(adaptive_integrate(integrand, 0.0, k.b2, tol, breaks))


def _iai_kappa(params, t_linear=None):
    if t_linear is None:
        return 1.0 / params.sigma_e_sq
    eff = (1 << params.sf) * t_linear
    return eff / (params.sigma_e_sq * eff + params.rate * params.m)


def _iai_sum(params, kappa):
    terms = []
    signs = []
    for ell in range(1, params.j):
        shrink = ell / (ell + 1.0)
        terms.append(
            math.log(comb(params.j - 1, ell, exact=True)) - math.log(ell + 1.0)
            - params.mn * math.log1p((1.0 + params.sigma_e_sq) * shrink * kappa)
        )
        signs.append(1.0 if ell % 2 == 1 else -1.0)
    if not terms:
        return 0.0
    value, sign = logsumexp(terms, b=signs, return_sign=True)
    return _probability(sign * math.exp(value))


def p_err_iai_closed(params):
    """
    Closed-form IAI-driven error probability.

    Sum over l = 1..J-1 of (-1)^(l+1) C(J-1, l) / (l+1) * D * (MN-1)! *
    (l/(l+1) * kappa - E)^(-MN), kappa = T 2^SF / (sigma_e^2 T 2^SF + rM).
    D * (MN-1)! cancels against the bracket so every term is a plain power.
    A single-symbol code has no co-transmitted symbol and returns 0.
    """
    return _iai_sum(params, _iai_kappa(params, params.t_linear))


def p_err_iai_limit(params):
    """High-SNR limit of p_err_iai_closed at fixed sigma_e^2 > 0."""
    if not params.sigma_e_sq > 0:
        raise DomainError("the IAI limit needs sigma_e_sq > 0")
    return _iai_sum(params, _iai_kappa(params))


def _log_rice_pdf(a, nu, scale):
    z = a * nu / (scale * scale)
    return (math.log(a) - 2.0 * math.log(scale)
            - (a - nu) ** 2 / (2.0 * scale * scale) + math.log(i0e(z)))


def _log_rayleigh_cdf(a, scale):
    # log(1 - exp(-a^2 / (2 s^2)))
    return math.log(-math.expm1(-a * a / (2.0 * scale * scale)))


def _max_exceeds(a, competitors, scale):
    """P[max of `competitors` Rayleigh(scale) variables > a]."""
    if competitors == 0:
        return 0.0
    if a <= 0.0:
        return 1.0
    return -math.expm1(competitors * _log_rayleigh_cdf(a, scale))


def _rice_expectation(g, nu, scale, tol, abs_tol=RICE_ABS_TOL):
    """E[g(a)] for a ~ Rice(nu, scale)."""
    # the density is negligible more than 40 scales away from nu
    lower = max(0.0, nu - 40.0 * scale)
    upper = nu + 40.0 * scale

    def integrand(a):
        if a <= 0.0:
            return 0.0
        return g(a) * math.exp(_log_rice_pdf(a, nu, scale))

    points = [nu] if lower < nu < upper else None
    return adaptive_integrate(integrand, lower, upper, tol, points, abs_tol=max(abs_tol, RICE_ABS_TOL))


def _rice_parameters(k, x):
    """Rice (nu, scale) of the desired bin after normalizing by sigma_tau."""
    return math.sqrt(2.0 * x) * k.a, math.sqrt(2.0) * k.c


def _gamma_average(params, k, g, tol, abs_tol=0.0):
    def integrand(x):
        if x <= 0.0:
            return 0.0
        log_weight = k.log_density(x, params.mn)
        if log_weight < LOG_TINY:
            return 0.0
        return g(x) * math.exp(log_weight)

    return adaptive_integrate(integrand, 0.0, math.inf, tol, abs_tol=abs_tol)


def _nested_tolerances(estimate, tol):
    """
    Absolute tolerances (inner, outer) for a nested integral of size ~estimate.

    Inner values are weighted by a probability density, so an absolute error
    in each of them moves the outer result by at most the same amount.
    Round-off far below tol * estimate then no longer counts as a failure.
    """
    return INNER_ABS_SHARE * tol * estimate, OUTER_ABS_SHARE * tol * estimate


def p_err_iai_numeric(params, tol=1e-8):
    """
    Double numeric integral of the IAI-driven error probability.

    Inner: P[max of J-1 interference bins > desired bin] for a Rice desired
    amplitude; outer: average over X ~ Gamma(MN, 1 + sigma_e^2).
    """
    if params.j < 2:
        return 0.0
    k = constants(params)
    scale = math.sqrt(2.0) * k.c
    inner_abs, outer_abs = _nested_tolerances(p_err_iai_closed(params), tol)

    def conditional(x):
        nu, _ = _rice_parameters(k, x)
        return _rice_expectation(
            lambda a: _max_exceeds(a, params.j - 1, scale), nu, scale, tol * 1e-2, inner_abs
        )

    return _probability(_gamma_average(params, k, conditional, tol, outer_abs))


def _check_oracle_sf(params):
    if params.sf > ORACLE_MAX_SF:
        raise DomainError(f"numeric oracle runs up to SF={ORACLE_MAX_SF}, got SF={params.sf}")


def oracle_ber_numeric(params, tol=1e-7):
    """
    Ground-truth BER with exact Rice/Rayleigh densities.

    The noise-driven and IAI-driven probabilities are each integrated directly
    (no Gaussian approximation of the maximum, no linearized Q) and combined
    as prefactor * [P_N + (1 - P_N) * P_IAI].

    Raises:
        DomainError: SF above the oracle's runtime guard
        AccuracyError: Nested integration did not converge
    """
    _check_oracle_sf(params)
    k = constants(params)
    noise_bins = params.chips - params.j
    inner_abs, outer_abs = _nested_tolerances(p_err_n_gh(params), tol)

    def noise_conditional(x):
        nu, scale = _rice_parameters(k, x)
        return _rice_expectation(
            lambda a: _max_exceeds(a, noise_bins, 1.0), nu, scale, tol * 1e-2, inner_abs
        )

    p_noise = _probability(_gamma_average(params, k, noise_conditional, tol, outer_abs))
    p_iai = p_err_iai_numeric(params, tol) if params.j > 1 else 0.0
    return _probability(params.prefactor * (p_noise + (1.0 - p_noise) * p_iai))


def oracle_ber_exact(params, tol=1e-7):
    """
    BER from the joint competition of all 2^SF - 1 wrong bins, no decomposition.

    Probability that any noise or interference bin exceeds the desired one,
    averaged over X, times the symbol-to-bit prefactor.
    """
    _check_oracle_sf(params)
    k = constants(params)
    noise_bins = params.chips - params.j
    iai_scale = math.sqrt(2.0) * k.c
    inner_abs, outer_abs = _nested_tolerances(p_err_n_gh(params) + p_err_iai_closed(params), tol)

    def any_exceeds(a):
        if a <= 0.0:
            return 1.0
        log_cdf = noise_bins * _log_rayleigh_cdf(a, 1.0)
        if params.j > 1:
            log_cdf += (params.j - 1) * _log_rayleigh_cdf(a, iai_scale)
        return -math.expm1(log_cdf)

    def conditional(x):
        nu, scale = _rice_parameters(k, x)
        return _rice_expectation(any_exceeds, nu, scale, tol * 1e-2, inner_abs)

    return _probability(params.prefactor * _gamma_average(params, k, conditional, tol, outer_abs))


def ber_perfect(params, rule=None, method="auto"):
    """
    BER under perfect CSI, prefactor * P_N.

    Args:
        params (SystemParams): Link parameters
        rule (QuadratureRule): Rule for the quadrature path
        method (str): "closed", "quadrature" or "auto"; auto takes the closed
                      form while a1 >= 0 and quadrature otherwise

    Returns:
        float: Bit error rate
    """
    if method == "closed":
        p_noise = p_err_n_perfect_closed(params)
    elif method == "quadrature":
        p_noise = p_err_n_gh(params, rule)
    elif method == "auto":
        k = constants(params)
        if params.sigma_e_sq == 0 and k.a1 >= 0:
            p_noise = p_err_n_perfect_closed(params)
        elif params.sigma_e_sq != 0:
            logger.debug("sigma_e_sq=%.4g > 0, no closed form, using Gauss-Hermite", params.sigma_e_sq)
            p_noise = p_err_n_gh(params, rule)
        else:
            logger.warning(
                "a1=%.4g < 0 at SF=%d T=%.4g dB, closed form invalid, using Gauss-Hermite",
                k.a1, params.sf, 10.0 * math.log10(params.t_linear),
            )
            p_noise = p_err_n_gh(params, rule)
    else:
        raise DomainError(f"unknown method {method!r}, expected auto, closed or quadrature")
    return _probability(params.prefactor * p_noise)


def ber_imperfect(params, rule=None):
    """BER with estimation error: prefactor * [P_N + (1 - P_N) * P_IAI], P_N by quadrature."""
    p_noise = p_err_n_gh(params, rule)
    p_iai = p_err_iai_closed(params)
    return _probability(params.prefactor * (p_noise + (1.0 - p_noise) * p_iai))


def _mu_perfect(params):
    twice_eff = 2.0 * params.effective_snr
    return math.sqrt(twice_eff / (2.0 * params.rate * params.m + twice_eff))


def ber_perfect_unshifted(params):
    """
    Exact BER of the perfect-CSI integral with B dropped from the Q argument.

    prefactor * 1/2 [1 - mu * sum_{k<MN} C(2k, k) ((1 - mu^2)/4)^k],
    mu = sqrt(T 2^(SF+1) / (2rM + T 2^(SF+1))).
    """
    return _probability(params.prefactor * binomial_series_tail(_mu_perfect(params), params.mn))


def ber_asymptotic_perfect(params):
    """High-SNR perfect-CSI BER, prefactor * (rM / (2^(SF+2) T))^MN * C(2MN-1, MN)."""
    base = params.rate * params.m / (4.0 * params.effective_snr)
    log_value = (math.log(params.prefactor) + params.mn * math.log(base)
                 + math.log(comb(2 * params.mn - 1, params.mn, exact=True)))
    return math.exp(log_value)


def p_err_n_limit(params):
    """High-SNR limit of the noise-driven error probability at fixed sigma_e^2 > 0."""
    if not params.sigma_e_sq > 0:
        raise DomainError("the noise-driven limit needs sigma_e_sq > 0")
    mu = math.sqrt((1.0 + params.sigma_e_sq) / (1.0 + 2.0 * params.sigma_e_sq))
    return binomial_series_tail(mu, params.mn)


def error_floor(params):
    """
    BER floor under a fixed estimation error variance.

    1/2 [P_N + (1 - P_N) P_IAI] with both terms at their high-SNR limits;
    depends on M, N, J and sigma_e^2 only.

    Raises:
        DomainError: sigma_e^2 is zero, perfect CSI has no floor
    """
    if not params.sigma_e_sq > 0:
        raise DomainError("perfect CSI has no error floor, sigma_e_sq must be > 0")
    p_noise = p_err_n_limit(params)
    p_iai = p_err_iai_limit(params)
    return _probability(0.5 * (p_noise + (1.0 - p_noise) * p_iai))


def rice_factor_diagnostic(params, x):
    """
    Rice factor of the desired decision metric given X.

    K = X T 2^SF / (sigma_e^2 T 2^SF + rM)
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise DomainError("X must be non-negative")
    eff = params.effective_snr
    value = x_arr * eff / (params.sigma_e_sq * eff + params.rate * params.m)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class AnalyticToggles:
    closed_form: bool = True
    quadrature: bool = True
    asymptote: bool = True
    floor: bool = True

    @property
    def any(self):
        return self.closed_form or self.quadrature or self.asymptote or self.floor


def analytic_point(params, toggles, rule=None, fixed_error=False):
    """
    Analytic columns of one curve point.

    ber_analytic is the perfect-CSI BER (closed form when enabled, falling
    back to quadrature) or, with estimation error, the quadrature-based
    imperfect-CSI BER. The asymptote is reported under perfect CSI only and
    the floor under a fixed error variance only.

    Returns:
        dict: ber_analytic, ber_asymptotic, ber_floor; NaN where disabled
    """
    row = {"ber_analytic": math.nan, "ber_asymptotic": math.nan, "ber_floor": math.nan}
    perfect = params.sigma_e_sq == 0
    if perfect and toggles.closed_form:
        row["ber_analytic"] = ber_perfect(params, rule, method="auto")
    elif perfect and toggles.quadrature:
        row["ber_analytic"] = ber_perfect(params, rule, method="quadrature")
    elif toggles.quadrature or toggles.closed_form:
        row["ber_analytic"] = ber_imperfect(params, rule)
    if perfect and toggles.asymptote:
        row["ber_asymptotic"] = ber_asymptotic_perfect(params)
    if fixed_error and not perfect and toggles.floor:
        row["ber_floor"] = error_floor(params)
    return row


def analytic_curve(params_list, toggles, rule=None, fixed_error=False):
    """Evaluate analytic_point over a list of SystemParams (one per SNR)."""
    return [analytic_point(params, toggles, rule, fixed_error) for params in params_list]


def _probability(value):
    # quadrature noise may step a hair outside [0, 1]
    return float(min(1.0, max(0.0, value)))
