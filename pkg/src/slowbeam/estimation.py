"""Reduced-dimension instantaneous channel estimation.

While one group trains, the other groups keep sending data; the projected
training-window observations stack into a single linear model
s_bar = (X (x) I_D) h_bar + interference + noise with Kronecker-structured
second-order statistics, so the linear MMSE estimate and its normalized MSE
are both closed-form in the effective covariances.

Stacking order is user-major, then delay, then beam dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .beamformers import BeamformerMatrix
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class TrainingBlock:
    """Known training for one group: symbols with preamble and the stacked
    convolution matrix."""

    group: int
    length: int                 # T
    memory: int                 # L
    symbols: np.ndarray         # (K, T + L - 1), time n in column n + L - 1
    x_matrix: np.ndarray        # (T, K * L), user-major blocks

    @property
    def num_users(self) -> int:
        return self.symbols.shape[0]


def _qpsk(shape, rng: np.random.Generator) -> np.ndarray:
    bits = rng.integers(0, 2, size=(2, *shape))
    return ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / math.sqrt(2)


def convolution_matrix(symbols: np.ndarray, t_len: int,
                       memory: int) -> np.ndarray:
    """Stack per-user Toeplitz blocks: entry (i, (k, j)) = x_k[i - j]."""
    k = symbols.shape[0]
    x = np.empty((t_len, k * memory), dtype=complex)
    for ku in range(k):
        for j in range(memory):
            # time i - j lives in column i - j + memory - 1
            x[:, ku * memory + j] = symbols[
                ku, memory - 1 - j:memory - 1 - j + t_len]
    return x


def build_training(config: ScenarioConfig, group: int, t_len: int,
                   rng: np.random.Generator,
                   kind: str = "qpsk") -> TrainingBlock:
    """Deterministic (seeded) unit-energy training, scaled to the group
    symbol energy.

    kind="qpsk" draws i.i.d. QPSK per user; kind="shifted" derives each
    user's sequence as a cyclic shift of user 0's (near-orthogonal across
    users for long enough windows).
    """
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    grp = config.groups[group]
    memory = config.memory
    total = t_len + memory - 1
    if kind == "qpsk":
        sym = _qpsk((grp.num_users, total), rng)
    elif kind == "shifted":
        base = _qpsk((total,), rng)
        sym = np.stack([np.roll(base, ku * max(1, total // grp.num_users))
                        for ku in range(grp.num_users)])
    else:
        raise ValueError(f"unknown training kind '{kind}'")
    sym = math.sqrt(grp.symbol_energy) * sym
    return TrainingBlock(group=group, length=t_len, memory=memory,
                         symbols=sym,
                         x_matrix=convolution_matrix(sym, t_len, memory))


def stack_channel(h_eff: dict[int, np.ndarray], num_users: int,
                  memory: int, dim: int) -> np.ndarray:
    """Vectorize a group's effective channels: user-major, delays within
    user, beams within delay."""
    out = np.zeros(num_users * memory * dim, dtype=complex)
    for l, mat in h_eff.items():
        for k in range(num_users):
            start = (k * memory + l) * dim
            out[start:start + dim] = mat[:, k]
    return out


def unstack_channel(vec: np.ndarray, num_users: int, memory: int,
                    dim: int) -> dict[int, np.ndarray]:
    """Inverse of stack_channel (returns all delays, including zeros)."""
    out = {}
    for l in range(memory):
        mat = np.empty((dim, num_users), dtype=complex)
        for k in range(num_users):
            start = (k * memory + l) * dim
            mat[:, k] = vec[start:start + dim]
        out[l] = mat
    return out


def stacked_observation(training: TrainingBlock,
                        channels: list[dict[int, np.ndarray]],
                        s, data_symbols: list[np.ndarray | None],
                        noise: np.ndarray,
                        config: ScenarioConfig) -> np.ndarray:
    """Projected training-window observations stacked into one vector.

    `data_symbols[g]` carries the interfering groups' random data (with
    preamble); the trained group's entry is ignored in favour of the
    training block.  `noise` is the antenna-domain noise (N, T).
    Equals running the sample-by-sample synthesis + projection.
    """
    w = s.weights if isinstance(s, BeamformerMatrix) else np.asarray(s)
    dim = w.shape[1]
    t_len = training.length
    memory = training.memory
    out = np.zeros(t_len * dim, dtype=complex)
    for g, per_delay in enumerate(channels):
        if g == training.group:
            x = training.x_matrix
        else:
            if data_symbols[g] is None:
                continue
            x = convolution_matrix(data_symbols[g], t_len, memory)
        h_eff = {l: w.conj().T @ h for l, h in per_delay.items()}
        h_bar = stack_channel(h_eff, config.groups[g].num_users, memory, dim)
        out += np.kron(x, np.eye(dim)) @ h_bar
    out += (w.conj().T @ noise[:, :t_len]).T.reshape(-1)
    return out


def stacked_prior(r_eff: dict[int, np.ndarray], num_users: int,
                  memory: int) -> np.ndarray:
    """Covariance of the stacked group channel: block-diagonal over users,
    delay-block-diagonal within a user."""
    dim = next(iter(r_eff.values())).shape[0]
    per_user = np.zeros((memory * dim, memory * dim), dtype=complex)
    for l, mat in r_eff.items():
        per_user[l * dim:(l + 1) * dim, l * dim:(l + 1) * dim] = mat
    return np.kron(np.eye(num_users), per_user)


def observation_covariance(training: TrainingBlock,
                           r_eff: dict[int, np.ndarray],
                           r_eff_eta: np.ndarray,
                           num_users: int) -> np.ndarray:
    """Second moment of the stacked observations under the symbol model."""
    dim = r_eff_eta.shape[0]
    xk = np.kron(training.x_matrix, np.eye(dim))
    prior = stacked_prior(r_eff, num_users, training.memory)
    return xk @ prior @ xk.conj().T + np.kron(np.eye(training.length),
                                              r_eff_eta)


def mmse_estimator(training: TrainingBlock,
                   r_eff: dict[int, np.ndarray],
                   r_eff_eta: np.ndarray,
                   num_users: int,
                   ridge_scale: float = 1e-10) -> np.ndarray:
    """Linear MMSE estimator matrix for the stacked model.

    Built from (possibly estimated) effective covariances; sized
    (K L D) x (T D).  A singular observation covariance falls back to a
    ridge-regularized solve.
    """
    dim = r_eff_eta.shape[0]
    xk = np.kron(training.x_matrix, np.eye(dim))
    prior = stacked_prior(r_eff, num_users, training.memory)
    cross = prior @ xk.conj().T
    cov = xk @ cross + np.kron(np.eye(training.length), r_eff_eta)
    try:
        return np.linalg.solve(cov.conj().T, cross.conj().T).conj().T
    except np.linalg.LinAlgError:
        ridge = ridge_scale * np.trace(cov).real
        cov = cov + ridge * np.eye(cov.shape[0])
        return np.linalg.solve(cov.conj().T, cross.conj().T).conj().T


def nmse_analytical(z: np.ndarray, training: TrainingBlock,
                    true_r_eff: dict[int, np.ndarray],
                    true_r_eff_eta: np.ndarray,
                    num_users: int) -> float:
    """Normalized MSE of an arbitrary linear estimator under the true
    statistics.

    nMSE = (tr prior + tr(Z Rs Z^H) - 2 Re tr(Z Xk prior)) / tr prior,
    with the observation covariance and prior built from the true
    effective covariances while Z may come from estimates.
    """
    dim = true_r_eff_eta.shape[0]
    xk = np.kron(training.x_matrix, np.eye(dim))
    prior = stacked_prior(true_r_eff, num_users, training.memory)
    tr_prior = np.trace(prior).real
    if tr_prior <= 0:
        raise ValueError("prior trace must be positive")
    cov = xk @ prior @ xk.conj().T + np.kron(np.eye(training.length),
                                             true_r_eff_eta)
    phi = z @ cov @ z.conj().T
    psi = z @ xk @ prior
    return float((tr_prior + np.trace(phi).real
                  - 2.0 * np.trace(psi).real) / tr_prior)
