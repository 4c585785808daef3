"""Channel statistics, sampling, and slow-time angular dynamics.

Covariance matrices of the multipath arrivals are rectangular-profile
integrals over the phase variable theta = pi*sin(phi); the closed form
factors into a rank-one steering outer product Hadamard-multiplied by a
real Toeplitz sinc kernel.  A midpoint-rule quadrature of the defining
integral is kept alongside as an independent cross-check.

All randomness flows through explicitly passed numpy Generators; nothing
in here owns global state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz

from .scenario import ScenarioConfig

TWO_PI = 2.0 * math.pi


def steering_vector(theta: float, n_antennas: int) -> np.ndarray:
    """Unit-norm array response in the phase domain.

    Returns (1/sqrt(N)) * [1, e^{j theta}, ..., e^{j (N-1) theta}].
    """
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    n = np.arange(n_antennas)
    return np.exp(1j * theta * n) / math.sqrt(n_antennas)


def phi_to_theta(phi: float) -> float:
    """Map azimuth (radians, broadside reference) to phase: pi*sin(phi).

    Monotone on (-pi/2, pi/2); outside that the array response aliases,
    so the domain is enforced.
    """
    if abs(phi) >= math.pi / 2:
        raise ValueError(f"phi must lie in (-pi/2, pi/2), got {phi}")
    return math.pi * math.sin(phi)


def theta_interval(mu_phi: float, sigma_phi: float) -> tuple[float, float]:
    """Phase-domain (center, width) of an azimuth sector.

    The azimuth interval [mu - sigma/2, mu + sigma/2] maps endpoint-wise;
    the phase-domain profile is the rectangle between the mapped endpoints.
    """
    th1 = phi_to_theta(mu_phi - sigma_phi / 2)
    th2 = phi_to_theta(mu_phi + sigma_phi / 2)
    return 0.5 * (th1 + th2), th2 - th1


def sinc_kernel(n_antennas: int, sigma_theta: float) -> np.ndarray:
    """Real symmetric Toeplitz kernel with entries sinc((m-n)*sigma/(2*pi))."""
    offsets = np.arange(n_antennas) * (sigma_theta / TWO_PI)
    return toeplitz(np.sinc(offsets))


@lru_cache(maxsize=None)
def sinc_kernel_eig(n_antennas: int, sigma_theta: float
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of the sinc kernel, descending eigenvalues.

    Eigenvalues are clipped at zero (the kernel is PSD up to roundoff) and
    eigenvector signs are fixed so the first non-negligible entry is
    positive.  Cached: the kernel depends only on (N, sigma).
    """
    vals, vecs = np.linalg.eigh(sinc_kernel(n_antennas, sigma_theta))
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order].copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            vecs[:, j] = -col
    vals = np.clip(vals, 0.0, None)
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return vals, vecs


@lru_cache(maxsize=None)
def _gl_nodes(points: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(points)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def ccm_factor(mu_theta: float, sigma_theta: float, n: int,
               mass: float = 1.0, points: int | None = None) -> np.ndarray:
    """A thin factor A with A A^H equal to mass * hadamard_ccm(mu, sigma, n).

    Gauss-Legendre discretization of the defining profile integral: columns
    are steering vectors at the quadrature nodes scaled by the weights.
    The integrands are bandlimited, so a few dozen nodes reach machine
    precision; no eigensolve is involved, which keeps per-step factor
    construction cheap as the center angle moves.
    """
    if sigma_theta < 0:
        raise ValueError("sigma_theta must be >= 0")
    if sigma_theta == 0.0:
        return math.sqrt(mass) * steering_vector(mu_theta, n)[:, None]
    if points is None:
        # GL is exact past ~phase-span/2 nodes; pad generously.
        points = max(24, int((n - 1) * sigma_theta / 4) + 12)
    x, w = _gl_nodes(points)
    thetas = mu_theta + 0.5 * sigma_theta * x
    cols = np.exp(1j * np.outer(np.arange(n), thetas)) / math.sqrt(n)
    return cols * np.sqrt(mass * w / 2)


def hadamard_ccm(mu_theta: float, sigma_theta: float, n: int) -> np.ndarray:
    """Closed-form unit-trace covariance of a rectangular phase profile.

    (q(mu) q(mu)^H) elementwise-multiplied by the sinc kernel of width
    sigma.  sigma = 0 degenerates to the rank-one steering outer product.
    """
    if sigma_theta < 0:
        raise ValueError("sigma_theta must be >= 0")
    q = steering_vector(mu_theta, n)
    return np.outer(q, q.conj()) * sinc_kernel(n, sigma_theta)


def ccm_from_profile_integral(mu_theta: float, sigma_theta: float, n: int,
                              quadrature_points: int = 20000) -> np.ndarray:
    """Midpoint-rule quadrature of the defining covariance integral.

    Integrates rho(theta) q(theta) q(theta)^H over the rectangular profile
    of mass 1.  The integrand for entry (m, n') depends only on m - n', so
    the midpoint sum is evaluated once per Toeplitz offset; the arithmetic
    is identical to accumulating full outer products.  Serves as the
    independent oracle for hadamard_ccm.
    """
    if quadrature_points < 2:
        raise ValueError("quadrature_points must be >= 2")
    if sigma_theta < 0:
        raise ValueError("sigma_theta must be >= 0")
    if sigma_theta == 0.0:
        q = steering_vector(mu_theta, n)
        return np.outer(q, q.conj())
    m = quadrature_points
    thetas = mu_theta - sigma_theta / 2 + (np.arange(m) + 0.5) * (sigma_theta / m)
    z = np.exp(1j * thetas)
    g = np.empty(n, dtype=complex)
    g[0] = 1.0
    w = np.ones(m, dtype=complex)
    for k in range(1, n):
        w *= z
        g[k] = w.mean()
    # Hermitian Toeplitz fill: entry (a, b) = g[a-b]/N, g[-k] = conj(g[k]).
    g_full = np.concatenate([g[:0:-1].conj(), g])
    idx = np.subtract.outer(np.arange(n), np.arange(n)) + (n - 1)
    return g_full[idx] / n


def group_ccms(config: ScenarioConfig) -> list[dict[int, np.ndarray]]:
    """Per-group {delay: covariance} maps from the scenario's true angles.

    Traces per group sum to one: each MPC carries its power-split weight.
    """
    return ccms_at_angles(
        config,
        [[m.center_angle_rad for m in g.mpcs] for g in config.groups],
    )


def ccms_at_angles(config: ScenarioConfig,
                   center_angles_rad: list[list[float]]
                   ) -> list[dict[int, np.ndarray]]:
    """Covariance maps with per-MPC center azimuths overridden.

    Used both for true (mobile) angles and for noisy estimates; spreads are
    always the scenario's nominal values.
    """
    out = []
    n = config.num_antennas
    for g, group in enumerate(config.groups):
        weights = group.mpc_power_weights()
        per_delay: dict[int, np.ndarray] = {}
        for m, mpc in enumerate(group.mpcs):
            mu_t, sig_t = theta_interval(center_angles_rad[g][m],
                                         mpc.angular_spread_rad)
            per_delay[mpc.delay] = weights[m] * hadamard_ccm(mu_t, sig_t, n)
        out.append(per_delay)
    return out


def assemble_ry(ccms: list[dict[int, np.ndarray]],
                config: ScenarioConfig) -> np.ndarray:
    """Observation covariance: sum of user-count- and energy-weighted group
    covariances plus the white noise floor."""
    n = config.num_antennas
    ry = config.noise_power * np.eye(n, dtype=complex)
    for group, per_delay in zip(config.groups, ccms):
        scale = group.num_users * group.symbol_energy
        for mat in per_delay.values():
            if mat.shape != (n, n):
                raise ValueError("covariance dimension mismatch")
            ry = ry + scale * mat
    return ry


def assemble_r_eta(ry: np.ndarray, group: int,
                   ccms: list[dict[int, np.ndarray]],
                   config: ScenarioConfig) -> np.ndarray:
    """Interference-plus-noise covariance seen by one group: the observation
    covariance with that group's own contribution removed."""
    g = config.groups[group]
    out = ry.copy()
    scale = g.num_users * g.symbol_energy
    for mat in ccms[group].values():
        out = out - scale * mat
    return out


def _psd_factor(ccm: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """A (not necessarily Hermitian) factor A with A A^H = ccm.

    Eigendecomposition square root; small negative eigenvalues from
    roundoff are clipped at zero, genuinely indefinite input is rejected.
    """
    vals, vecs = np.linalg.eigh((ccm + ccm.conj().T) / 2)
    if vals.min() < -tol * max(vals.max(), 1.0):
        raise np.linalg.LinAlgError(
            f"covariance is not PSD (min eigenvalue {vals.min():.3e})")
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


class CcmFactors:
    """Precomputed sampling factors for repeated channel draws."""

    def __init__(self, factors: list[dict[int, np.ndarray]]):
        self.factors = factors

    @classmethod
    def from_ccms(cls, ccms: list[dict[int, np.ndarray]]) -> "CcmFactors":
        return cls([{l: _psd_factor(mat) for l, mat in per_delay.items()}
                    for per_delay in ccms])

    @classmethod
    def from_angles(cls, config: ScenarioConfig,
                    center_angles_rad: list[list[float]]) -> "CcmFactors":
        """Quadrature factors straight from angles (no eigensolve)."""
        factors = []
        for g, group in enumerate(config.groups):
            weights = group.mpc_power_weights()
            per_delay = {}
            for m, mpc in enumerate(group.mpcs):
                mu_t, sig_t = theta_interval(center_angles_rad[g][m],
                                             mpc.angular_spread_rad)
                per_delay[mpc.delay] = ccm_factor(
                    mu_t, sig_t, config.num_antennas, weights[m])
            factors.append(per_delay)
        return cls(factors)

    def sample(self, config: ScenarioConfig, rng: np.random.Generator
               ) -> list[dict[int, np.ndarray]]:
        out = []
        for group, per_delay in zip(config.groups, self.factors):
            k = group.num_users
            drawn = {}
            for l, a in per_delay.items():
                w = (rng.standard_normal((a.shape[1], k))
                     + 1j * rng.standard_normal((a.shape[1], k))) / math.sqrt(2)
                drawn[l] = a @ w
            out.append(drawn)
        return out


def sample_channels(ccms: list[dict[int, np.ndarray]],
                    config: ScenarioConfig,
                    rng: np.random.Generator) -> list[dict[int, np.ndarray]]:
    """Draw one channel realization: per group and delay an N x K_g matrix
    whose columns are i.i.d. circular Gaussian with the given covariance."""
    return CcmFactors.from_ccms(ccms).sample(config, rng)


@dataclass(frozen=True)
class MpcState:
    """Slow-time state of one MPC's center angle (all angles in radians)."""

    mu_phi_init: float
    sigma_phi: float
    delay: int
    delta_mu: float = 0.0
    mu_phi_est: float = 0.0

    @property
    def mu_phi_true(self) -> float:
        return self.mu_phi_init + self.delta_mu


def init_mpc_states(config: ScenarioConfig) -> list[list[MpcState]]:
    return [
        [MpcState(mu_phi_init=m.center_angle_rad,
                  sigma_phi=m.angular_spread_rad,
                  delay=m.delay,
                  mu_phi_est=m.center_angle_rad)
         for m in g.mpcs]
        for g in config.groups
    ]


def step_mobility(state: MpcState, config: ScenarioConfig,
                  rng: np.random.Generator) -> MpcState:
    """One first-order autoregressive step of the center-angle wander.

    The innovation scaling sqrt(1 - alpha^2) keeps the stationary standard
    deviation equal to the configured asymptotic wander.
    """
    alpha = config.mobility_alpha
    v = rng.normal(0.0, config.mobility_sigma_v_rad)
    delta = alpha * state.delta_mu + math.sqrt(1.0 - alpha * alpha) * v
    return replace(state, delta_mu=delta)


def observe_aoa(state: MpcState, config: ScenarioConfig,
                rng: np.random.Generator) -> MpcState:
    """Attach a fresh noisy center-angle estimate to the state."""
    err = rng.normal(0.0, config.aoa_error_std_rad)
    return replace(state, mu_phi_est=state.mu_phi_true + err)


def generate_symbols(config: ScenarioConfig, group: int, count: int,
                     rng: np.random.Generator) -> np.ndarray:
    """I.i.d. QPSK symbol matrix (users x count) scaled to the group energy."""
    if count < 1:
        raise ValueError("count must be >= 1")
    g = config.groups[group]
    bits = rng.integers(0, 2, size=(2, g.num_users, count))
    sym = ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / math.sqrt(2)
    return math.sqrt(g.symbol_energy) * sym


def sample_noise(config: ScenarioConfig, count: int,
                 rng: np.random.Generator) -> np.ndarray:
    """White circular Gaussian noise matrix (antennas x count)."""
    n = config.num_antennas
    scale = math.sqrt(config.noise_power / 2)
    return scale * (rng.standard_normal((n, count))
                    + 1j * rng.standard_normal((n, count)))
