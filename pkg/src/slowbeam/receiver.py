"""Uplink receive chain: observation synthesis, analog projection, matched
filtering, spatial zero forcing, and the per-term output decomposition.

Symbol streams carry a preamble: a matrix of shape (users, T + L - 1) holds
the symbol at time n in column n + L - 1, so taps reaching back L - 1
instants are always defined.  The matched filter is anticausal (it combines
the next L projected samples), so streams are synthesized with L - 1 extra
trailing samples relative to the instants being detected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamformers import BeamformerMatrix
from .scenario import ScenarioConfig

TERMS = ("signal", "sicee", "isi", "mui", "igi", "noise")


def _weights(s) -> np.ndarray:
    return s.weights if isinstance(s, BeamformerMatrix) else np.asarray(s)


def symbol_at(symbols: np.ndarray, n: int, memory: int) -> np.ndarray:
    """Column of a preamble-carrying symbol matrix at time index n."""
    return symbols[:, n + memory - 1]


def synthesize_observation(channels: list[dict[int, np.ndarray]],
                           symbols: list[np.ndarray],
                           noise: np.ndarray,
                           config: ScenarioConfig,
                           horizon: int | None = None) -> np.ndarray:
    """Antenna-domain observation stream over `horizon` instants.

    `symbols[g]` must cover times [-(L-1), horizon) i.e. have at least
    horizon + L - 1 columns (preamble included).
    """
    memory = config.memory
    if horizon is None:
        horizon = noise.shape[1]
    if noise.shape[1] < horizon:
        raise ValueError("noise stream shorter than horizon")
    for g, x in enumerate(symbols):
        if x.shape[1] < horizon + memory - 1:
            raise ValueError(
                f"symbol stream for group {g} lacks preamble: needs "
                f"{horizon + memory - 1} columns, got {x.shape[1]}")
    y = noise[:, :horizon].astype(complex).copy()
    for per_delay, x in zip(channels, symbols):
        for l, h in per_delay.items():
            start = memory - 1 - l
            y += h @ x[:, start:start + horizon]
    return y


def project(y: np.ndarray, s) -> np.ndarray:
    """Analog stage output: combiner applied to the observation stream."""
    w = _weights(s)
    if w.shape[0] != y.shape[0]:
        raise ValueError("beamformer/observation dimension mismatch")
    return w.conj().T @ y


@dataclass
class EffectiveChannelSet:
    """Reduced-dimension channel quantities seen through one group's
    combiner."""

    h_eff: list[dict[int, np.ndarray]]      # per group: delay -> (D, K_g)
    r_eff: list[dict[int, np.ndarray]]      # per group: delay -> (D, D)
    r_eff_eta: list[np.ndarray]             # per group: (D, D)
    gram: np.ndarray | None = None          # combiner gram S^H S

    def r_eff_sum(self, group: int) -> np.ndarray:
        mats = list(self.r_eff[group].values())
        return np.sum(mats, axis=0)


def effective_set(s, channels: list[dict[int, np.ndarray]] | None,
                  ccms: list[dict[int, np.ndarray]] | None,
                  config: ScenarioConfig,
                  with_eta: bool = True) -> EffectiveChannelSet:
    """Exact linear maps of channels and covariances through a combiner."""
    from .channel import assemble_r_eta, assemble_ry

    w = _weights(s)
    h_eff = []
    if channels is not None:
        for per_delay in channels:
            h_eff.append({l: w.conj().T @ h for l, h in per_delay.items()})
    r_eff: list[dict[int, np.ndarray]] = []
    r_eff_eta: list[np.ndarray] = []
    if ccms is not None:
        for per_delay in ccms:
            r_eff.append({l: w.conj().T @ m @ w for l, m in per_delay.items()})
        if with_eta:
            ry = assemble_ry(ccms, config)
            for g in range(len(ccms)):
                r_eta = assemble_r_eta(ry, g, ccms, config)
                r_eff_eta.append(w.conj().T @ r_eta @ w)
    return EffectiveChannelSet(h_eff, r_eff, r_eff_eta, gram=w.conj().T @ w)


def cmf(s_stream: np.ndarray, h_eff_est: dict[int, np.ndarray],
        memory: int) -> np.ndarray:
    """Channel matched filter across delays (anticausal combination).

    Valid output covers s_stream columns minus L - 1 trailing instants;
    shorter streams raise.
    """
    t_out = s_stream.shape[1] - (memory - 1)
    if t_out < 1:
        raise ValueError("stream too short for the matched-filter span")
    k = next(iter(h_eff_est.values())).shape[1]
    r = np.zeros((k, t_out), dtype=complex)
    for l, h in h_eff_est.items():
        r += h.conj().T @ s_stream[:, l:l + t_out]
    return r


def zero_lag_gram(h_eff_est: dict[int, np.ndarray]) -> np.ndarray:
    """Zero-lag correlation of the estimated effective channel."""
    mats = [h.conj().T @ h for h in h_eff_est.values()]
    return np.sum(mats, axis=0)


def szf(h_eff_est: dict[int, np.ndarray],
        ridge_scale: float = 1e-10) -> np.ndarray:
    """Spatial zero-forcing matrix: unit-diagonal decoupling at lag zero.

    Scalar one for a single user.  A rank-deficient normal matrix falls
    back to a ridge-regularized solve.
    """
    r0 = zero_lag_gram(h_eff_est)
    k = r0.shape[0]
    if k == 1:
        return np.ones((1, 1), dtype=complex)
    gram = r0.conj().T @ r0
    try:
        sol = np.linalg.solve(gram, np.eye(k, dtype=complex))
    except np.linalg.LinAlgError:
        ridge = ridge_scale * np.trace(gram).real
        sol = np.linalg.solve(gram + ridge * np.eye(k), np.eye(k, dtype=complex))
    return r0 @ sol


@dataclass
class OutputDecomposition:
    """Per-user expected powers of the six output terms."""

    powers: dict[str, np.ndarray]  # term -> (K,)

    def total(self) -> np.ndarray:
        return np.sum([self.powers[t] for t in TERMS], axis=0)

    def error_power(self) -> np.ndarray:
        return np.sum([self.powers[t] for t in TERMS if t != "signal"], axis=0)

    def sinr_db(self) -> np.ndarray:
        sig = self.powers["signal"]
        err = self.error_power()
        out = np.full_like(sig, np.inf)
        nz = err > 0
        out[nz] = 10.0 * np.log10(sig[nz] / err[nz])
        return out


def sinr(decomp: OutputDecomposition) -> np.ndarray:
    """Output SINR in dB per user (+inf when the error power vanishes)."""
    return decomp.sinr_db()


def _cross_correlations(h_eff_est: dict[int, np.ndarray],
                        h_eff_true: dict[int, np.ndarray]
                        ) -> dict[int, np.ndarray]:
    """Lagged correlations sum_l1 est_l1^H true_(l1+lag), keyed by lag."""
    out: dict[int, np.ndarray] = {}
    for l1, he in h_eff_est.items():
        for l2, ht in h_eff_true.items():
            lag = l2 - l1
            term = he.conj().T @ ht
            out[lag] = out.get(lag, 0) + term
    return out


def _igi_coefficients(g_cols: dict[int, np.ndarray],
                      h_other: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    """Per-lag coefficients coupling one interferer group's symbols into the
    output; g_cols maps delay -> (N, K) back-projected digital weights."""
    out: dict[int, np.ndarray] = {}
    for l, g in g_cols.items():
        for l2, h in h_other.items():
            u = l2 - l
            out[u] = out.get(u, 0) + g.conj().T @ h
    return out


def expected_decomposition(channels: list[dict[int, np.ndarray]],
                           s, h_eff_est: dict[int, np.ndarray],
                           y_szf: np.ndarray,
                           config: ScenarioConfig,
                           group: int) -> OutputDecomposition:
    """Exact symbol/noise expectation of the six term powers, conditioned on
    the given channel realization.

    This is the closed-form limit of Monte Carlo averaging over symbols and
    noise with channels held fixed.
    """
    w = _weights(s)
    es = config.groups[group].symbol_energy
    k = y_szf.shape[0]
    h_eff_true = {l: w.conj().T @ h for l, h in channels[group].items()}
    r_hh_hat0 = zero_lag_gram(h_eff_est)
    r_hath = _cross_correlations(h_eff_est, h_eff_true)

    a_s = np.diag(y_szf.conj().T @ r_hh_hat0)
    a_e = np.diag(y_szf.conj().T @ (r_hath.get(0, np.zeros((k, k)))
                                    - r_hh_hat0))
    p_sig = es * np.abs(a_s) ** 2
    p_sicee = es * np.abs(a_e) ** 2

    p_isi = np.zeros(k)
    p_mui = np.zeros(k)
    for lag, mat in r_hath.items():
        c = y_szf.conj().T @ mat  # (K, K): rows users, cols symbol streams
        mag = np.abs(c) ** 2
        if lag != 0:
            p_isi += es * np.diag(mag)
        p_mui += es * (mag.sum(axis=1) - np.diag(mag))

    # Back-projected digital weights per estimated delay: S Hhat_l Y.
    g_cols = {l: w @ h @ y_szf for l, h in h_eff_est.items()}
    p_noise = config.noise_power * np.array(
        [sum(np.linalg.norm(g[:, i]) ** 2 for g in g_cols.values())
         for i in range(k)])

    p_igi = np.zeros(k)
    for gp, per_delay in enumerate(channels):
        if gp == group:
            continue
        es_o = config.groups[gp].symbol_energy
        coeff = _igi_coefficients(g_cols, per_delay)
        for mat in coeff.values():
            p_igi += es_o * (np.abs(mat) ** 2).sum(axis=1)

    return OutputDecomposition({
        "signal": p_sig.real, "sicee": p_sicee.real, "isi": p_isi,
        "mui": p_mui, "igi": p_igi, "noise": p_noise,
    })


def decompose_output(channels: list[dict[int, np.ndarray]],
                     symbols: list[np.ndarray],
                     noise: np.ndarray,
                     s, h_eff_est: dict[int, np.ndarray],
                     y_szf: np.ndarray,
                     config: ScenarioConfig,
                     group: int) -> tuple[OutputDecomposition, np.ndarray]:
    """Monte Carlo estimate of the six term powers from simulated streams.

    Builds each term's time series from the ground truth (channels, symbols,
    noise, combiner) and averages instantaneous powers; the series sum to
    the digital-stage output exactly, which callers can verify against the
    pipeline.  Returns (decomposition, stacked term streams (6, K, T)).
    """
    w = _weights(s)
    memory = config.memory
    es_own = config.groups[group].symbol_energy  # noqa: F841  (clarity)
    t_out = noise.shape[1] - (memory - 1)
    if t_out < 1:
        raise ValueError("streams too short for the matched-filter span")
    k = y_szf.shape[0]
    x_own = symbols[group]
    h_eff_true = {l: w.conj().T @ h for l, h in channels[group].items()}
    r_hh_hat0 = zero_lag_gram(h_eff_est)
    r_hath = _cross_correlations(h_eff_est, h_eff_true)
    a_s = np.diag(y_szf.conj().T @ r_hh_hat0)
    a_e = np.diag(y_szf.conj().T @ (r_hath.get(0, np.zeros((k, k)))
                                    - r_hh_hat0))

    def own_at_lag(lag: int) -> np.ndarray:
        start = memory - 1 - lag
        return x_own[:, start:start + t_out]

    x0 = own_at_lag(0)
    streams = np.zeros((len(TERMS), k, t_out), dtype=complex)
    streams[0] = a_s[:, None] * x0
    streams[1] = a_e[:, None] * x0
    for lag, mat in r_hath.items():
        c = y_szf.conj().T @ mat
        xs = own_at_lag(lag)
        full = c @ xs
        diag_part = np.diag(c)[:, None] * xs
        if lag != 0:
            streams[2] += diag_part
        streams[3] += full - diag_part

    g_cols = {l: w @ h @ y_szf for l, h in h_eff_est.items()}
    xi = np.zeros((w.shape[0], noise.shape[1]), dtype=complex)
    for gp, per_delay in enumerate(channels):
        if gp == group:
            continue
        for l, h in per_delay.items():
            start = memory - 1 - l
            xi += h @ symbols[gp][:, start:start + noise.shape[1]]
    for l, g in g_cols.items():
        streams[4] += g.conj().T @ xi[:, l:l + t_out]
        streams[5] += g.conj().T @ noise[:, l:l + t_out]

    powers = {t: (np.abs(streams[i]) ** 2).mean(axis=1)
              for i, t in enumerate(TERMS)}
    return OutputDecomposition(powers), streams
