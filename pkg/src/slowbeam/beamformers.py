"""Analog beamformer constructions.

All methods produce per-MPC column blocks that are concatenated into one
N x D combiner per group.  The reference construction takes dominant
generalized eigenvectors of (per-MPC covariance, observation covariance);
the low-complexity variants replace the eigensolve with an inverse applied
to filtered steering surrogates, with the inverse maintained incrementally
on the quantized patch grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .channel import steering_vector
from .patching import (DKernelBasis, QuantizedInverseState, downdated_inverse,
                       steering_from_basis)
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class BeamformerMatrix:
    """Analog combiner with per-MPC column bookkeeping."""

    weights: np.ndarray  # (n_antennas, total columns), unit-norm columns
    block_map: dict[int, list[int]]  # MPC index -> column indices

    @property
    def n_columns(self) -> int:
        return self.weights.shape[1]

    def block(self, mpc: int) -> np.ndarray:
        return self.weights[:, self.block_map[mpc]]


def assemble(blocks: list[tuple[int, np.ndarray]]) -> BeamformerMatrix:
    """Concatenate per-MPC column blocks, recording the column map.

    Columns are normalized to unit norm; output SINR is invariant to
    per-column scaling once the digital stage adapts, so normalization
    only fixes conditioning.
    """
    seen = set()
    cols = []
    block_map: dict[int, list[int]] = {}
    idx = 0
    for mpc, mat in blocks:
        if mpc in seen:
            raise ValueError(f"duplicate MPC index {mpc}")
        seen.add(mpc)
        mat = np.atleast_2d(np.asarray(mat))
        if mat.shape[0] == 1:
            mat = mat.T
        norms = np.linalg.norm(mat, axis=0)
        if not np.isfinite(mat).all() or (norms == 0).any():
            raise ValueError("beamformer block has non-finite or zero columns")
        cols.append(mat / norms)
        block_map[mpc] = list(range(idx, idx + mat.shape[1]))
        idx += mat.shape[1]
    return BeamformerMatrix(np.hstack(cols), block_map)


def geb(ccm: np.ndarray, ry: np.ndarray, d: int,
        ry_chol: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Most dominant generalized eigenvectors of the pair (ccm, ry).

    Solved by whitening: Cholesky-factor the observation covariance,
    ordinary Hermitian eigensolve on the whitened matrix, back-transform.
    Returned vectors are orthonormal in the ry metric, ordered by
    descending eigenvalue, with a deterministic phase (first significant
    entry real positive).  Returns (vectors, eigenvalues).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if ry_chol is None:
        try:
            ry_chol = sla.cholesky(ry, lower=True)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "observation covariance is not positive definite") from exc
    a = sla.solve_triangular(ry_chol, ccm, lower=True, check_finite=False)
    b = sla.solve_triangular(ry_chol, a.conj().T, lower=True,
                             check_finite=False).conj().T
    b = np.ascontiguousarray((b + b.conj().T) / 2)
    vals, vecs = np.linalg.eigh(b)
    sel = np.ascontiguousarray(vecs[:, ::-1][:, :d])
    top = vals[::-1][:d].copy()
    out = sla.solve_triangular(ry_chol.conj().T, sel, lower=False,
                               check_finite=False)
    return _fix_phases(out), top


def _fix_phases(mat: np.ndarray) -> np.ndarray:
    mat = np.array(mat)
    for j in range(mat.shape[1]):
        col = mat[:, j]
        mags = np.abs(col)
        nz = np.flatnonzero(mags > 1e-12 * mags.max())
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            mat[:, j] = col / ph
    return mat


def geb_suboptimal(ry_inv: np.ndarray, w1: np.ndarray) -> np.ndarray:
    """Rank-one shortcut: observation-inverse applied to the dominant
    covariance eigenvector surrogate."""
    return ry_inv @ w1


def geb_from_factor(factor: np.ndarray, ry: np.ndarray, d: int,
                    ry_chol: np.ndarray | None = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Generalized eigensolve exploiting a factored covariance A A^H.

    With X = L^{-1} A (L the observation Cholesky factor), the nonzero
    generalized eigenvalues of (A A^H, ry) are the eigenvalues of the
    small Gram matrix X^H X, and the eigenvectors back out as
    ry^{-1} A u.  Equivalent to geb() up to the factor's truncation,
    at a fraction of the dense eigensolve cost.
    """
    rank = factor.shape[1]
    if d > rank:
        return geb(factor @ factor.conj().T, ry, d, ry_chol=ry_chol)
    if ry_chol is None:
        ry_chol = sla.cholesky(ry, lower=True)
    x = sla.solve_triangular(ry_chol, factor, lower=True,
                             check_finite=False)
    gram = x.conj().T @ x
    vals, vecs = np.linalg.eigh((gram + gram.conj().T) / 2)
    sel = np.ascontiguousarray(vecs[:, ::-1][:, :d])
    top = vals[::-1][:d].copy()
    out = sla.solve_triangular(ry_chol.conj().T, x @ sel, lower=False,
                               check_finite=False)
    return _fix_phases(out), top


@dataclass
class FilteredCcmState:
    """Recursively filtered per-MPC covariances plus the implied observation
    covariance (recomputed from the filtered parts, so the two stay
    consistent by construction)."""

    per_group: list[dict[int, np.ndarray]]
    ry: np.ndarray


def filter_ccms(state: FilteredCcmState | None,
                new_ccms: list[dict[int, np.ndarray]],
                beta: float, config: ScenarioConfig) -> FilteredCcmState:
    """One recursion step: convex combination per MPC, observation
    covariance reassembled from the filtered covariances."""
    from .channel import assemble_ry

    if not (0.0 <= beta < 1.0):
        raise ValueError("beta must lie in [0, 1)")
    if state is None:
        filtered = [{l: m.copy() for l, m in per.items()} for per in new_ccms]
    else:
        filtered = [
            {l: beta * state.per_group[g][l] + (1.0 - beta) * per[l]
             for l in per}
            for g, per in enumerate(new_ccms)
        ]
    return FilteredCcmState(filtered, assemble_ry(filtered, config))


@dataclass
class FilteredCcmFactors:
    """Factor-form equivalent of FilteredCcmState.

    Each slow-time step appends the new estimate's factor columns (scaled
    by the recursion weights) and recompresses with an economy SVD at a
    tight relative tolerance, so F F^H tracks the dense recursion while
    the column count stays near the union subspace dimension.  The
    observation covariance follows the same scalar recursion densely (the
    two are equal by linearity).
    """

    factors: dict[tuple[int, int], np.ndarray]
    ry: np.ndarray
    tol: float = 3e-8  # singular-value cut: ~1e-15 on covariance eigenvalues

    @classmethod
    def initial(cls, factors: dict[tuple[int, int], np.ndarray],
                ry: np.ndarray, tol: float = 3e-8) -> "FilteredCcmFactors":
        return cls({k: f.copy() for k, f in factors.items()}, ry.copy(), tol)

    def update(self, new_factors: dict[tuple[int, int], np.ndarray],
               new_ry: np.ndarray, beta: float) -> "FilteredCcmFactors":
        merged = {}
        for key, f_new in new_factors.items():
            stacked = np.hstack([math.sqrt(beta) * self.factors[key],
                                 math.sqrt(1.0 - beta) * f_new])
            u, s, _ = np.linalg.svd(stacked, full_matrices=False)
            keep = s > self.tol * s[0]
            merged[key] = u[:, keep] * s[keep]
        ry = beta * self.ry + (1.0 - beta) * new_ry
        return FilteredCcmFactors(merged, ry, self.tol)


@dataclass
class FilteredSteering:
    """Recursively filtered steering surrogates, keyed (mpc, order)."""

    vectors: dict[tuple[int, int], np.ndarray]


def filter_steering(state: FilteredSteering | None,
                    new: dict[tuple[int, int], np.ndarray],
                    beta: float) -> FilteredSteering:
    if not (0.0 <= beta < 1.0):
        raise ValueError("beta must lie in [0, 1)")
    if state is None:
        return FilteredSteering({k: v.copy() for k, v in new.items()})
    return FilteredSteering({
        k: beta * state.vectors[k] + (1.0 - beta) * v for k, v in new.items()
    })


def wiener_type(inv_state: QuantizedInverseState,
                w_filt: FilteredSteering, mpc: int,
                d: int = 1) -> np.ndarray:
    """Observation-inverse applied to the MPC's filtered steering
    surrogates; one column per RF chain."""
    cols = [inv_state.inv @ w_filt.vectors[(mpc, i)] for i in range(d)]
    return np.column_stack(cols)


def whitening_type(inv_state: QuantizedInverseState,
                   p_l_q: np.ndarray,
                   w_filt: FilteredSteering, mpc: int,
                   config: ScenarioConfig, group: int,
                   d: int = 1) -> tuple[np.ndarray, int]:
    """Interference-whitening variant.

    The MPC's own quantized patch powers (scaled by user count and symbol
    energy) are stripped from the maintained observation inverse by a
    second low-rank update before applying it to the filtered steering
    surrogates.  Returns (columns, own-support patch count).
    """
    grp = config.groups[group]
    scale = grp.num_users * grp.symbol_energy
    eta_inv, n_own = downdated_inverse(inv_state.inv, scale * p_l_q,
                                       inv_state.basis)
    cols = [eta_inv @ w_filt.vectors[(mpc, i)] for i in range(d)]
    return np.column_stack(cols), n_own


def dft_baseline(mu_thetas: list[float], n: int,
                 d_per_mpc: list[int]) -> BeamformerMatrix:
    """DFT-column combiner: per MPC the columns nearest in beamspace.

    Collisions resolve to the next-nearest unused column, in MPC order.
    """
    from .patching import dft_grid

    q = dft_grid(n)
    taken: set[int] = set()
    blocks = []
    for mpc, (mu, d) in enumerate(zip(mu_thetas, d_per_mpc)):
        # Circular beamspace distance of each column center to mu.
        dist = np.abs((np.arange(n) * (2 * math.pi / n) - mu + math.pi)
                      % (2 * math.pi) - math.pi)
        order = np.argsort(dist, kind="stable")
        chosen = [k for k in order if k not in taken][:d]
        if len(chosen) < d:
            raise ValueError("not enough DFT columns for the requested chains")
        taken.update(chosen)
        blocks.append((mpc, q[:, chosen]))
    return assemble(blocks)


def steering_surrogates(mu_theta: float, basis: DKernelBasis,
                        d: int) -> dict[int, np.ndarray]:
    """First d eigenvector surrogates q(mu) (.) d_i, indexed by order."""
    vecs = steering_from_basis(mu_theta, basis, count=d)
    return {i: v for i, v in enumerate(vecs)}


def beam_pattern(s: BeamformerMatrix | np.ndarray,
                 phi_grid_rad: np.ndarray) -> np.ndarray:
    """Per-column power response |s^H u(phi)|^2 over an azimuth grid.

    Returns an array (grid, columns); a single weight vector is treated
    as one column.
    """
    weights = s.weights if isinstance(s, BeamformerMatrix) else np.asarray(s)
    if weights.ndim == 1:
        weights = weights[:, None]
    n = weights.shape[0]
    resp = np.empty((len(phi_grid_rad), weights.shape[1]))
    for i, phi in enumerate(phi_grid_rad):
        u = steering_vector(math.pi * math.sin(phi), n)
        resp[i] = np.abs(weights.conj().T @ u) ** 2
    return resp
