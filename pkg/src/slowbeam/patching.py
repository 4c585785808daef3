"""Angular patching, patch-power quantization, and incremental inverse upkeep.

Power profiles live on a fixed grid of N angular patches of width 2*pi/N
centered on the DFT grid.  A covariance is rebuilt from patch powers as
(Q diag(p) Q^H) elementwise-multiplied with a (possibly rank-truncated)
sinc kernel; equivalently V Pbar V^H where V holds DFT columns Hadamard-
weighted by the kernel's scaled eigenvectors.  That form is what lets the
inverse of the observation covariance be maintained across slow time with
inner inversions sized by the number of patches whose quantized power
actually changed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import sinc_kernel_eig
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


def patch_width(n: int) -> float:
    return TWO_PI / n


def patch_profile(mu_theta: float, sigma_theta: float, mass: float,
                  n: int) -> np.ndarray:
    """Spread `mass` equally over the patches the profile interval touches.

    A patch k (center k*2*pi/N, width 2*pi/N) is occupied when the open
    interval (mu - sigma/2, mu + sigma/2) overlaps its open cell; both
    comparisons are strict, so an interval whose edge exactly meets a cell
    boundary does not claim the neighbouring cell.  Comparison happens on
    the circle: each cell center is shifted by a multiple of 2*pi into the
    window around mu.
    """
    if sigma_theta <= 0:
        raise ValueError("sigma_theta must be > 0")
    w = patch_width(n)
    centers = np.arange(n) * w
    # Representative of each center within (mu - pi, mu + pi].
    shifted = centers - TWO_PI * np.round((centers - mu_theta) / TWO_PI)
    lo = mu_theta - sigma_theta / 2
    hi = mu_theta + sigma_theta / 2
    occupied = (hi > shifted - w / 2) & (lo < shifted + w / 2)
    count = int(occupied.sum())
    p = np.zeros(n)
    if count:
        p[occupied] = mass / count
    return p


@lru_cache(maxsize=None)
def dft_grid(n: int) -> np.ndarray:
    """Unitary DFT-grid matrix whose k-th column is the steering vector at
    the k-th patch center."""
    m = np.arange(n)
    return np.exp(1j * TWO_PI / n * np.outer(m, m)) / math.sqrt(n)


@dataclass(frozen=True)
class DKernelBasis:
    """Rank-truncated eigenbasis of the sinc kernel.

    vectors holds the r most dominant eigenvectors scaled by the square
    root of their eigenvalues, so the kernel is approximated by
    vectors @ vectors.T.  Deterministic ordering: descending eigenvalue,
    each vector's first non-negligible entry made positive.
    """

    n_antennas: int
    rank: int
    sigma: float
    vectors: np.ndarray  # (n, r), real
    eigenvalues: np.ndarray  # (r,)

    def kernel(self) -> np.ndarray:
        return self.vectors @ self.vectors.T


def d_kernel_eigenbasis(n: int, r: int, sigma: float | None = None
                        ) -> DKernelBasis:
    """Dominant scaled eigenvectors of the sinc kernel of width `sigma`
    (defaults to one patch, 2*pi/N)."""
    if not (1 <= r <= n):
        raise ValueError(f"rank must lie in [1, {n}], got {r}")
    if sigma is None:
        sigma = patch_width(n)
    vals, vecs = sinc_kernel_eig(n, float(sigma))
    d = vecs[:, :r] * np.sqrt(vals[:r])
    return DKernelBasis(n_antennas=n, rank=r, sigma=float(sigma),
                        vectors=d, eigenvalues=vals[:r].copy())


def steering_from_basis(mu_theta: float, basis: DKernelBasis,
                        count: int = 1) -> list[np.ndarray]:
    """Dominant covariance eigenvector surrogates: q(mu) (.) d_i.

    The i-th most dominant eigenvector of a rectangular-profile covariance
    is the steering vector at its center Hadamard-multiplied with the i-th
    scaled kernel eigenvector.
    """
    n = basis.n_antennas
    q = np.exp(1j * mu_theta * np.arange(n)) / math.sqrt(n)
    return [q * basis.vectors[:, i] for i in range(count)]


def quantized_sigma_basis(n: int, sigma_theta: float, r: int) -> DKernelBasis:
    """Kernel basis at the patch-quantized spread: ceil(sigma / patch width)
    patches.  Keeps the cache small while the spread estimate floats."""
    w = patch_width(n)
    patches = max(1, math.ceil(sigma_theta / w - 1e-12))
    return d_kernel_eigenbasis(n, r, sigma=patches * w)


def reconstruct_ccm(p: np.ndarray, basis: DKernelBasis | np.ndarray
                    ) -> np.ndarray:
    """Covariance from patch powers: (Q diag(p) Q^H) (.) kernel."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    q = dft_grid(n)
    kernel = basis.kernel() if isinstance(basis, DKernelBasis) else basis
    return ((q * p) @ q.conj().T) * kernel


def quantize_powers(p: np.ndarray, h: float, n_q: int) -> np.ndarray:
    """Snap each level to the nearest multiple of h/n_q (ties to even)."""
    if h <= 0:
        raise ValueError("h must be > 0")
    if n_q < 1:
        raise ValueError("n_q must be >= 1")
    step = h / n_q
    return np.round(np.asarray(p, dtype=float) / step) * step


def recursive_filter_powers(prev: np.ndarray, new: np.ndarray,
                            beta: float) -> np.ndarray:
    if not (0.0 <= beta < 1.0):
        raise ValueError("beta must lie in [0, 1)")
    prev = np.asarray(prev, dtype=float)
    new = np.asarray(new, dtype=float)
    if prev.shape != new.shape:
        raise ValueError("profile length mismatch")
    return beta * prev + (1.0 - beta) * new


def expected_patch_power(trace: float, sigma_theta: float, n: int) -> float:
    """Quantizer scale: the MPC's trace split over its nominal patch count."""
    patches = max(1, math.ceil(sigma_theta / patch_width(n) - 1e-12))
    return trace / patches


def assemble_py(p_per_mpc: list[tuple[int, np.ndarray]],
                config: ScenarioConfig) -> np.ndarray:
    """Observation patch powers: user-count- and energy-weighted sum of the
    per-MPC quantized profiles plus the (unquantized) noise floor.

    `p_per_mpc` pairs each profile with its group index.
    """
    n = config.num_antennas
    p_y = np.full(n, config.noise_power)
    for g, p in p_per_mpc:
        if p.shape != (n,):
            raise ValueError("profile length mismatch")
        grp = config.groups[g]
        p_y = p_y + grp.num_users * grp.symbol_energy * p
    return p_y


def _v_columns(support: np.ndarray, basis: DKernelBasis) -> np.ndarray:
    """Columns q_k (.) d_i for k in `support`, i = 1..r (k-major order)."""
    q = dft_grid(basis.n_antennas)[:, support]  # (n, s)
    d = basis.vectors  # (n, r)
    # (n, s, r) -> (n, s*r)
    cols = q[:, :, None] * d[:, None, :]
    return cols.reshape(basis.n_antennas, -1)


@dataclass
class QuantizedInverseState:
    """Maintained inverse of the quantized observation covariance.

    Single-writer: one state per simulated receiver.  `n_delta_last`
    records the number of patches whose power changed in the last update
    (the complexity driver); `fallbacks` counts dense re-inversions forced
    by a singular inner system.
    """

    p_y_q: np.ndarray
    inv: np.ndarray
    basis: DKernelBasis
    n_delta_last: int = 0
    fallbacks: int = 0

    def reconstruct(self) -> np.ndarray:
        return reconstruct_ccm(self.p_y_q, self.basis)


def _apply_woodbury(inv: np.ndarray, delta_p: np.ndarray,
                    basis: DKernelBasis) -> tuple[np.ndarray, int]:
    """One low-rank inverse update; returns (new inverse, patches changed).

    Raises LinAlgError when the inner system is singular (a power change
    that drives the matrix non-invertible); callers fall back to a dense
    inversion.
    """
    support = np.flatnonzero(delta_p)
    n_delta = int(support.size)
    if n_delta == 0:
        return inv, 0
    u = _v_columns(support, basis)                      # (n, m)
    dp_rep = np.repeat(delta_p[support], basis.rank)    # (m,)
    au = inv @ u                                        # (n, m)
    inner = np.diag(1.0 / dp_rep).astype(complex) + u.conj().T @ au
    sol = np.linalg.solve(inner, au.conj().T)           # (m, n)
    new = inv - au @ sol
    new = (new + new.conj().T) / 2
    if not np.isfinite(new).all():
        raise np.linalg.LinAlgError("non-finite inverse update")
    return new, n_delta


def init_inverse_state(p_y_q: np.ndarray, basis: DKernelBasis,
                       noise_power: float) -> QuantizedInverseState:
    """Build the initial inverse.

    The noise-only covariance on the patch grid is diagonal (the kernel's
    diagonal scaled by the noise power), so its inverse is closed-form; the
    initial patch powers then enter through one Woodbury update whose inner
    size is set by the occupied-patch count, not the array size.
    """
    n = basis.n_antennas
    kernel_diag = np.einsum("ij,ij->i", basis.vectors, basis.vectors)
    base_inv = np.diag(1.0 / (noise_power * kernel_diag)).astype(complex)
    delta = np.asarray(p_y_q, dtype=float) - noise_power
    support = np.flatnonzero(delta)
    if support.size * basis.rank >= n:
        inv = np.linalg.inv(reconstruct_ccm(p_y_q, basis))
        inv = (inv + inv.conj().T) / 2
        return QuantizedInverseState(np.asarray(p_y_q, float).copy(), inv,
                                     basis, n_delta_last=int(support.size))
    try:
        inv, n_delta = _apply_woodbury(base_inv, delta, basis)
    except np.linalg.LinAlgError:
        log.warning("initial low-rank inverse failed; dense fallback")
        inv = np.linalg.inv(reconstruct_ccm(p_y_q, basis))
        inv = (inv + inv.conj().T) / 2
        return QuantizedInverseState(np.asarray(p_y_q, float).copy(), inv,
                                     basis, n_delta_last=int(support.size),
                                     fallbacks=1)
    return QuantizedInverseState(np.asarray(p_y_q, float).copy(), inv, basis,
                                 n_delta_last=n_delta)


def woodbury_update(state: QuantizedInverseState, delta_p: np.ndarray,
                    basis: DKernelBasis | None = None) -> QuantizedInverseState:
    """Advance the maintained inverse by a signed patch-power change.

    The inner inversion is sized (patches changed) x rank; the result
    matches a direct dense inversion of the reconstructed covariance up to
    roundoff.  A zero delta is a no-op.  Negative entries (power decreases)
    are handled by the same identity.  On a singular inner system the
    state falls back to a dense inversion and logs.
    """
    basis = basis or state.basis
    delta_p = np.asarray(delta_p, dtype=float)
    new_p = state.p_y_q + delta_p
    support = np.flatnonzero(delta_p)
    if support.size == 0:
        return QuantizedInverseState(state.p_y_q, state.inv, basis,
                                     n_delta_last=0,
                                     fallbacks=state.fallbacks)
    try:
        inv, n_delta = _apply_woodbury(state.inv, delta_p, basis)
        fallbacks = state.fallbacks
    except np.linalg.LinAlgError:
        log.warning("singular inner system in inverse update; dense fallback")
        inv = np.linalg.inv(reconstruct_ccm(new_p, basis))
        inv = (inv + inv.conj().T) / 2
        n_delta = int(support.size)
        fallbacks = state.fallbacks + 1
    return QuantizedInverseState(new_p, inv, basis, n_delta_last=n_delta,
                                 fallbacks=fallbacks)


def downdated_inverse(inv: np.ndarray, remove_p: np.ndarray,
                      basis: DKernelBasis) -> tuple[np.ndarray, int]:
    """Inverse with a patch-power contribution subtracted.

    Used to strip one MPC's own quantized powers from the maintained
    observation inverse (whitening construction).  Returns the new inverse
    and the subtracted-support patch count.
    """
    remove_p = np.asarray(remove_p, dtype=float)
    try:
        return _apply_woodbury(inv, -remove_p, basis)
    except np.linalg.LinAlgError:
        log.warning("singular inner system in inverse downdate; "
                    "dense fallback")
        # Reconstruct the downdated matrix from scratch.
        base = np.linalg.inv(inv)
        mat = (base + base.conj().T) / 2 - reconstruct_ccm(remove_p, basis)
        out = np.linalg.inv(mat)
        return (out + out.conj().T) / 2, int(np.count_nonzero(remove_p))


def complexity_measure(method: str, n_delta_p: int = 0, n_patch_g: int = 0,
                       r: int = 1, n: int = 0) -> int:
    """Size-of-inversion complexity charge per construction step."""
    if method == "wiener":
        return n_delta_p * r
    if method == "whitening":
        return (n_delta_p + n_patch_g) * r
    if method in ("geb", "geb-filtered", "geb-ideal"):
        return n
    raise ValueError(f"unknown method '{method}'")
