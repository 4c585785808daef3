import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowbeam.channel import hadamard_ccm, sinc_kernel, theta_interval
from slowbeam.patching import (DKernelBasis, assemble_py, complexity_measure,
                               d_kernel_eigenbasis, dft_grid,
                               downdated_inverse, expected_patch_power,
                               init_inverse_state, patch_profile, patch_width,
                               quantize_powers, quantized_sigma_basis,
                               reconstruct_ccm, recursive_filter_powers,
                               steering_from_basis, woodbury_update)
from slowbeam.scenario import small_scenario

TWO_PI = 2 * math.pi


# --- patch profiles -----------------------------------------------------------

def test_single_patch_on_grid_point():
    n = 32
    w = patch_width(n)
    p = patch_profile(5 * w, 0.5 * w, mass=2.0, n=n)
    assert p[5] == pytest.approx(2.0)
    assert np.count_nonzero(p) == 1


def test_boundary_occupancy_strict():
    # width exactly two patches, centered between grid points k and k+1:
    # the strict inequalities exclude the touching neighbours.
    n = 32
    w = patch_width(n)
    p = patch_profile(4.5 * w, 2 * w, mass=1.0, n=n)
    assert set(np.flatnonzero(p)) == {4, 5}
    np.testing.assert_allclose(p[p > 0], 0.5)


def test_patch_count_consistent_with_ceiling():
    cfg = small_scenario()
    n = cfg.num_antennas
    mpc = cfg.groups[0].mpcs[0]
    mu, sig = theta_interval(mpc.center_angle_rad, mpc.angular_spread_rad)
    p = patch_profile(mu, sig, mass=1.0, n=n)
    count = np.count_nonzero(p)
    assert count in (math.ceil(sig / patch_width(n)),
                     math.ceil(sig / patch_width(n)) + 1)


def test_patch_profile_wraps_negative_angles():
    n = 32
    p = patch_profile(-0.3, 0.25, mass=1.0, n=n)
    assert p.sum() == pytest.approx(1.0)
    # occupied patches sit near k = N - 0.3/(2pi/N)
    occupied = np.flatnonzero(p)
    assert all(k > n / 2 for k in occupied)


@given(st.floats(-1.2, 1.2), st.floats(0.01, 0.5), st.floats(0.1, 4.0))
@settings(max_examples=60, deadline=None)
def test_patch_mass_conserved(mu, sig, mass):
    p = patch_profile(mu, sig, mass, 24)
    assert p.sum() == pytest.approx(mass, rel=1e-12)
    assert (p >= 0).all()


# --- kernel eigenbasis ---------------------------------------------------------

def test_full_basis_reconstructs_kernel():
    n = 24
    basis = d_kernel_eigenbasis(n, n)
    np.testing.assert_allclose(basis.kernel(), sinc_kernel(n, patch_width(n)),
                               atol=1e-10)


def test_kernel_eigenvalues_range():
    n = 24
    basis = d_kernel_eigenbasis(n, n)
    assert basis.eigenvalues.min() >= 0
    assert basis.eigenvalues.max() <= n + 1e-9
    assert basis.eigenvalues.sum() == pytest.approx(n, rel=1e-9)


def test_rank_energy_monotone():
    basis1 = d_kernel_eigenbasis(100, 1)
    basis2 = d_kernel_eigenbasis(100, 2)
    assert basis2.eigenvalues.sum() > basis1.eigenvalues.sum()


def test_truncation_error_decreases_with_rank():
    n = 24
    d_full = sinc_kernel(n, patch_width(n))
    errs = [np.linalg.norm(d_kernel_eigenbasis(n, r).kernel() - d_full)
            for r in range(1, n + 1)]
    assert all(e1 >= e2 - 1e-12 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < 1e-10


def test_rank_bounds_checked():
    with pytest.raises(ValueError):
        d_kernel_eigenbasis(8, 0)
    with pytest.raises(ValueError):
        d_kernel_eigenbasis(8, 9)


def test_steering_surrogate_narrow_spread_collinear():
    # As the spread vanishes the kernel tends to all-ones, whose dominant
    # eigenvector is constant, so the first surrogate aligns with the
    # steering vector at the center.
    n = 32
    q = np.exp(1j * 0.7 * np.arange(n)) / math.sqrt(n)
    basis = d_kernel_eigenbasis(n, 1, sigma=1e-6)
    vec = steering_from_basis(0.7, basis, count=1)[0]
    cos = abs(np.vdot(q, vec)) / np.linalg.norm(vec)
    assert cos == pytest.approx(1.0, abs=1e-9)
    # The patch-quantized basis tapers the surrogate but keeps it nearly
    # aligned for a one-patch spread.
    basis_q = quantized_sigma_basis(n, 0.4 * patch_width(n), r=1)
    vec_q = steering_from_basis(0.7, basis_q, count=1)[0]
    cos_q = abs(np.vdot(q, vec_q)) / np.linalg.norm(vec_q)
    assert cos_q > 0.99


# --- reconstruction -------------------------------------------------------------

def test_reconstruct_single_patch_equals_closed_form():
    n = 24
    w = patch_width(n)
    p = np.zeros(n)
    p[3] = 1.0
    full = sinc_kernel(n, w)
    np.testing.assert_allclose(reconstruct_ccm(p, full),
                               hadamard_ccm(3 * w, w, n), atol=1e-12)


def test_reconstruct_trace_equals_mass():
    n = 24
    rng = np.random.default_rng(3)
    p = rng.uniform(0, 1, n)
    rec = reconstruct_ccm(p, sinc_kernel(n, patch_width(n)))
    assert np.trace(rec).real == pytest.approx(p.sum())
    assert np.linalg.eigvalsh(rec).min() > -1e-12


def test_reconstruct_matches_factor_identity():
    # (Q diag(p) Q^H) (.) D_r == V Pbar V^H with V the Hadamard-weighted
    # DFT columns.
    n, r = 16, 3
    rng = np.random.default_rng(5)
    p = rng.uniform(0, 1, n)
    basis = d_kernel_eigenbasis(n, r)
    q = dft_grid(n)
    v = np.hstack([(q[:, [k]] * basis.vectors) for k in range(n)])
    pbar = np.kron(np.diag(p), np.eye(r))
    np.testing.assert_allclose(reconstruct_ccm(p, basis),
                               v @ pbar @ v.conj().T, atol=1e-12)


# --- quantizer -------------------------------------------------------------------

def test_quantizer_zero_stays_zero():
    np.testing.assert_allclose(quantize_powers(np.zeros(8), 1.0, 2),
                               np.zeros(8))


def test_quantizer_nearest_multiple():
    p = np.array([0.7, 0.8])
    out = quantize_powers(p, 1.0, 2)
    np.testing.assert_allclose(out, [0.5, 1.0])


def test_quantizer_ties_to_even():
    # 0.75 with step 0.5 sits exactly between 1 and 2 steps: even wins.
    out = quantize_powers(np.array([0.75, 0.25]), 1.0, 2)
    np.testing.assert_allclose(out, [1.0, 0.0])


@given(st.lists(st.floats(0, 10), min_size=1, max_size=20),
       st.floats(0.1, 3.0), st.integers(1, 5))
@settings(max_examples=80, deadline=None)
def test_quantizer_idempotent(levels, h, n_q):
    p = np.array(levels)
    once = quantize_powers(p, h, n_q)
    twice = quantize_powers(once, h, n_q)
    np.testing.assert_allclose(once, twice)
    assert (once >= 0).all()


def test_quantizer_mass_error_bound():
    rng = np.random.default_rng(11)
    p = rng.uniform(0, 2, 50)
    h, n_q = 0.8, 2
    q = quantize_powers(p, h, n_q)
    per_patch = np.abs(q - p)
    assert (per_patch <= h / (2 * n_q) + 1e-12).all()


def test_expected_patch_power_reference_values():
    cfg = small_scenario(num_antennas=100)
    mpc = cfg.groups[0].mpcs[0]
    mu, sig = theta_interval(mpc.center_angle_rad, mpc.angular_spread_rad)
    h = expected_patch_power(1 / 3, sig, 100)
    patches = math.ceil(sig / patch_width(100))
    assert h == pytest.approx((1 / 3) / patches)
    assert patches == 3


# --- recursive filtering ----------------------------------------------------------

def test_filter_beta_zero_passthrough():
    prev, new = np.ones(4), np.full(4, 2.0)
    np.testing.assert_allclose(recursive_filter_powers(prev, new, 0.0), new)


def test_filter_geometric_convergence():
    target = np.array([1.0, 2.0, 0.5])
    state = np.zeros(3)
    beta = 0.9
    for n in range(1, 120):
        state = recursive_filter_powers(state, target, beta)
        expected_err = beta ** n * np.linalg.norm(target)
        assert np.linalg.norm(state - target) == pytest.approx(
            expected_err, rel=1e-9)


def test_filter_validates():
    with pytest.raises(ValueError):
        recursive_filter_powers(np.ones(3), np.ones(3), 1.0)
    with pytest.raises(ValueError):
        recursive_filter_powers(np.ones(3), np.ones(4), 0.5)


# --- observation profile -----------------------------------------------------------

def test_assemble_py_no_groups_noise_floor():
    cfg = small_scenario()
    p_y = assemble_py([], cfg)
    np.testing.assert_allclose(p_y, cfg.noise_power)


def test_assemble_py_weights_groups():
    cfg = small_scenario()
    n = cfg.num_antennas
    p = np.zeros(n)
    p[4] = 1.0
    p_y = assemble_py([(2, p)], cfg)
    grp = cfg.groups[2]
    assert p_y[4] == pytest.approx(
        grp.num_users * grp.symbol_energy + cfg.noise_power)
    assert p_y[0] == pytest.approx(cfg.noise_power)


# --- incremental inverse -------------------------------------------------------------

def _random_quantized_sequence(rng, n, n_q, steps):
    h = 1.0
    p = quantize_powers(rng.uniform(0, 2, n), h, n_q)
    yield p
    for _ in range(steps):
        raw = p / 1.0
        idx = rng.choice(n, size=rng.integers(1, 6), replace=False)
        raw = raw.copy()
        raw[idx] = np.clip(raw[idx] + rng.uniform(-1, 1, len(idx)), 0, None)
        p = quantize_powers(raw, h, n_q)
        yield p


@pytest.mark.parametrize("r", [1, 2, 3])
def test_woodbury_matches_dense_inverse(r, rng):
    n, noise = 32, 0.5
    basis = d_kernel_eigenbasis(n, r)
    seq = list(_random_quantized_sequence(rng, n, 2, 25))
    state = init_inverse_state(seq[0] + noise, basis, noise)
    for p in seq[1:]:
        state = woodbury_update(state, (p + noise) - state.p_y_q)
        dense = np.linalg.inv(reconstruct_ccm(state.p_y_q, basis))
        assert np.linalg.norm(state.inv - dense, 2) < 1e-7


def test_woodbury_zero_delta_noop():
    n, r = 16, 2
    basis = d_kernel_eigenbasis(n, r)
    p = np.zeros(n)
    p[2:5] = 1.0
    state = init_inverse_state(p + 0.1, basis, 0.1)
    before = state.inv.copy()
    state2 = woodbury_update(state, np.zeros(n))
    assert state2.n_delta_last == 0
    np.testing.assert_array_equal(state2.inv, before)


def test_woodbury_scalar_sanity():
    # One-patch change against an identity-like base reproduces the scalar
    # rank-one identity (I + c vv^H)^-1 = I - (c/(1+c|v|^2)) vv^H.
    n = 8
    basis = DKernelBasis(n_antennas=n, rank=1, sigma=patch_width(n),
                         vectors=np.ones((n, 1)), eigenvalues=np.ones(1))
    p0 = np.ones(n)  # reconstruct = Q Q^H = I
    state = init_inverse_state(p0, basis, 1.0)
    np.testing.assert_allclose(state.inv, np.eye(n), atol=1e-12)
    delta = np.zeros(n)
    delta[0] = 1.0
    state = woodbury_update(state, delta)
    q0 = dft_grid(n)[:, 0]
    expected = np.eye(n) - np.outer(q0, q0.conj()) / 2
    np.testing.assert_allclose(state.inv, expected, atol=1e-12)


def test_woodbury_consistency_invariant_over_sequence(rng):
    n, r, noise = 32, 2, 0.3
    basis = d_kernel_eigenbasis(n, r)
    seq = list(_random_quantized_sequence(rng, n, 2, 40))
    state = init_inverse_state(seq[0] + noise, basis, noise)
    for p in seq[1:]:
        state = woodbury_update(state, (p + noise) - state.p_y_q)
        resid = state.inv @ reconstruct_ccm(state.p_y_q, basis) \
            - np.eye(n)
        assert np.linalg.norm(resid, 2) < 1e-7
    assert state.fallbacks == 0


def test_downdated_inverse_matches_dense(rng):
    n, r, noise = 32, 2, 0.2
    basis = d_kernel_eigenbasis(n, r)
    p = quantize_powers(rng.uniform(0, 2, n), 1.0, 2) + noise
    state = init_inverse_state(p, basis, noise)
    remove = np.zeros(n)
    remove[5:8] = 0.5
    eta_inv, n_own = downdated_inverse(state.inv, remove, basis)
    dense = np.linalg.inv(reconstruct_ccm(p - remove, basis))
    assert n_own == 3
    assert np.linalg.norm(eta_inv - dense, 2) < 1e-8


# --- complexity ----------------------------------------------------------------------

def test_complexity_measures():
    assert complexity_measure("geb", n=100) == 100
    assert complexity_measure("whitening", n_delta_p=5, n_patch_g=3,
                              r=2) == 16
    assert complexity_measure("wiener", n_delta_p=0, r=2) == 0
    with pytest.raises(ValueError):
        complexity_measure("unknown")
