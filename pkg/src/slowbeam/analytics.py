"""Closed-form performance measures and reporting helpers.

For the matched-filter-only digital stage (single-user groups) the output
signal and interference powers have exact expressions in terms of effective
covariances, because the projected channels stay jointly Gaussian.  The
slow-time filtering of noisily re-estimated covariances also admits exact
per-entry mean/variance formulas in the static single-arrival setting.
"""

from __future__ import annotations

import math

import numpy as np

from .channel import steering_vector
from .receiver import EffectiveChannelSet
from .scenario import ScenarioConfig


def cmf_power_terms(eff: EffectiveChannelSet, config: ScenarioConfig,
                    group: int) -> dict[str, float]:
    """Expected output term powers for the matched-filter path with the
    instantaneous channel perfectly known.

    Signal power:  Es * [ (tr Rsum)^2 + sum_l tr(R_l R_l) ].
    The remaining terms follow from Gaussian fourth-moment identities;
    their sum plus the signal power reproduces the total output power
    Es*(tr Rsum)^2 + sum_g K_g Es_g tr(Rsum Rsum_g) + N0 tr(Rsum S^H S).
    """
    grp = config.groups[group]
    es = grp.symbol_energy
    r_list = list(eff.r_eff[group].values())
    r_sum = eff.r_eff_sum(group)
    tr_sum = np.trace(r_sum).real
    tr_sq = sum(np.trace(r @ r).real for r in r_list)
    tr_sum_sq = np.trace(r_sum @ r_sum).real

    p_signal = es * (tr_sum ** 2 + tr_sq)
    p_isi = es * (tr_sum_sq - tr_sq)
    p_mui = es * (grp.num_users - 1) * tr_sum_sq
    p_igi = 0.0
    for gp, other in enumerate(config.groups):
        if gp == group:
            continue
        r_other = eff.r_eff_sum(gp)
        p_igi += other.num_users * other.symbol_energy * np.trace(
            r_sum @ r_other).real
    if eff.gram is None:
        raise ValueError("effective set lacks the combiner gram")
    p_noise = config.noise_power * np.trace(r_sum @ eff.gram).real
    return {
        "signal": p_signal,
        "sicee": 0.0,
        "isi": p_isi,
        "mui": p_mui,
        "igi": p_igi,
        "noise": p_noise,
    }


def cmf_sinr_analytical(eff: EffectiveChannelSet, config: ScenarioConfig,
                        group: int) -> float:
    """Closed-form output SINR (dB) for the matched-filter path."""
    terms = cmf_power_terms(eff, config, group)
    p_signal = terms["signal"]
    p_in = terms["isi"] + terms["mui"] + terms["igi"] + terms["noise"]
    if p_in <= 0:
        raise ValueError("interference-plus-noise power must be positive; "
                         "upstream covariances are inconsistent")
    return 10.0 * math.log10(p_signal / p_in)


def filtering_variance_factor(beta: float, n: int | None = None) -> float:
    """Variance shrink of the slow-time filter after n steps.

    beta^(2n) + (1-beta)/(1+beta) * (1 - beta^(2n)); the n -> inf limit is
    (1-beta)/(1+beta).
    """
    limit = (1.0 - beta) / (1.0 + beta)
    if n is None:
        return limit
    b2n = beta ** (2 * n)
    return b2n + limit * (1.0 - b2n)


def recursive_filter_asymptotics(ccm: np.ndarray, sigma_e: float, beta: float,
                                 n: int | None = None
                                 ) -> tuple[np.ndarray, np.ndarray, float]:
    """Mean and per-entry variance of the filtered covariance re-estimated
    each step at a center angle offset by zero-mean Gaussian error.

    Entry (a, b) of the estimate is the true entry rotated by
    e^{j(a-b)e}; the filter preserves the mean envelope
    (R)_ab * exp(-(a-b)^2 sigma_e^2 / 2) and shrinks the per-entry variance
    |R_ab|^2 (1 - exp(-(a-b)^2 sigma_e^2)) by the filtering factor.
    Returns (mean matrix, variance map, limit ratio).
    """
    n_ant = ccm.shape[0]
    k = np.subtract.outer(np.arange(n_ant), np.arange(n_ant))
    envelope = np.exp(-0.5 * (k ** 2) * sigma_e ** 2)
    mean = ccm * envelope
    single_var = (np.abs(ccm) ** 2) * (1.0 - np.exp(-(k ** 2) * sigma_e ** 2))
    factor = filtering_variance_factor(beta, n)
    return mean, single_var * factor, filtering_variance_factor(beta)


def spread_spectrum_profile(mean_matrix: np.ndarray,
                            phi_grid_rad: np.ndarray) -> np.ndarray:
    """Beamspace profile u(phi)^H M u(phi) of a (mean) covariance."""
    n = mean_matrix.shape[0]
    out = np.empty(len(phi_grid_rad))
    for i, phi in enumerate(phi_grid_rad):
        if abs(phi) >= math.pi / 2:
            raise ValueError("grid angle outside (-pi/2, pi/2)")
        u = steering_vector(math.pi * math.sin(phi), n)
        out[i] = (u.conj() @ mean_matrix @ u).real
    return out


def theta_error_std(mu_phi: float, sigma_est_phi: float) -> float:
    """Phase-domain error spread from an azimuth error spread, linearized
    at the arrival center (small-error approximation)."""
    return math.pi * math.cos(mu_phi) * sigma_est_phi


def outage_probability(sinr_series, threshold_db: float = 20.0) -> float:
    """Fraction of slow-time-expected SINR values below the threshold."""
    arr = np.asarray(list(sinr_series), dtype=float)
    if arr.size == 0:
        raise ValueError("empty SINR series")
    return float(np.mean(arr < threshold_db))
