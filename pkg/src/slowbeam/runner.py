"""Slow-time simulation loop, parameter sweeps, aggregation, CSV output.

Every run is deterministic given (config, seed): per-trial generator
streams are derived from the config seed with fixed purpose tags, and the
mobility / angle-estimate / channel draws are shared across methods so
method comparisons are paired.  Methods never consume randomness
themselves, so adding one to a run cannot change another's results.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
from threadpoolctl import threadpool_limits

from . import analytics, beamformers, channel, estimation, patching, receiver
from .scenario import ScenarioConfig

RESULTS_SCHEMA = "slowbeam.results.v1"
SUMMARY_SCHEMA = "slowbeam.summary.v1"
PATTERN_SCHEMA = "slowbeam.pattern.v1"
SERIES_SCHEMA = "slowbeam.series.v1"

RESULT_COLUMNS = [
    "trial", "step", "group", "user", "method", "alpha", "beta",
    "sigma_est_deg", "nq", "rank", "snr_db", "t_len", "eval", "sinr_db",
    "p_signal", "p_sicee", "p_isi", "p_mui", "p_igi", "p_noise",
    "nmse", "n_delta_p", "n_patch_own", "complexity",
]

SUMMARY_COLUMNS = [
    "method", "alpha", "beta", "sigma_est_deg", "nq", "rank", "snr_db",
    "group", "mean_sinr_db", "mean_sinr_db_linavg", "outage_prob",
    "mean_nmse", "mean_n_delta_p", "mean_complexity", "trials", "steps",
]

METHODS = ("geb-ideal", "geb", "geb-filtered", "wiener", "whitening", "dft")


@dataclass
class RunOptions:
    group: int = 0                      # 0-based group index
    methods: tuple[str, ...] = ("geb",)
    mc_draws: int = 64                  # channel draws per step (multi-user)
    with_nmse: bool = False
    t_len: int = 6
    npl_complexity: int = 3             # representative own-patch count
    burn_in: int = 0
    outage_threshold_db: float = 20.0

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method '{m}'")


# ---------------------------------------------------------------------------
# Per-method slow-time state machines
# ---------------------------------------------------------------------------

class _StepContext:
    """Per-step quantities shared across methods (computed lazily once).

    Sharing keeps method comparisons paired and avoids recomputing the
    nine covariance estimates for every method.
    """

    def __init__(self, config: ScenarioConfig, group: int,
                 true_angles, est_angles):
        self.config = config
        self.group = group
        self.true_angles = true_angles
        self.est_angles = est_angles
        self._cache: dict = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def true_ccms(self):
        return self._get("true_ccms", lambda: channel.ccms_at_angles(
            self.config, self.true_angles))

    @property
    def est_ccms(self):
        return self._get("est_ccms", lambda: channel.ccms_at_angles(
            self.config, self.est_angles))

    @property
    def est_ry(self):
        return self._get("est_ry", lambda: channel.assemble_ry(
            self.est_ccms, self.config))

    @property
    def true_ry(self):
        return self._get("true_ry", lambda: channel.assemble_ry(
            self.true_ccms, self.config))

    def _group_factors(self, angles) -> dict[tuple[int, int], np.ndarray]:
        cfg = self.config
        grp = cfg.groups[self.group]
        weights = grp.mpc_power_weights()
        out = {}
        for m, mpc in enumerate(grp.mpcs):
            mu_t, sig_t = channel.theta_interval(angles[self.group][m],
                                                 mpc.angular_spread_rad)
            out[(self.group, m)] = channel.ccm_factor(
                mu_t, sig_t, cfg.num_antennas, weights[m])
        return out

    @property
    def est_factors(self):
        return self._get("est_factors",
                         lambda: self._group_factors(self.est_angles))

    @property
    def true_factors(self):
        return self._get("true_factors",
                         lambda: self._group_factors(self.true_angles))


class _GebMethod:
    """Eigen-beamformer on per-step covariance estimates.

    mode "ideal" uses the true angles, "raw" the noisy estimates, and
    "filtered" a slow-time recursion over the estimated covariances
    (kept in compressed factor form; equal to the dense recursion by
    linearity).
    """

    def __init__(self, name: str, mode: str, config: ScenarioConfig,
                 group: int):
        self.name = name
        self.mode = mode
        self.config = config
        self.group = group
        self.filt: beamformers.FilteredCcmFactors | None = None

    def step(self, ctx: _StepContext) -> dict:
        cfg = self.config
        if self.mode == "ideal":
            factors = ctx.true_factors
            ry = ctx.true_ry
            ccms_used = ctx.true_ccms
        elif self.mode == "raw":
            factors = ctx.est_factors
            ry = ctx.est_ry
            ccms_used = ctx.est_ccms
        else:
            if self.filt is None:
                self.filt = beamformers.FilteredCcmFactors.initial(
                    ctx.est_factors, ctx.est_ry)
            else:
                self.filt = self.filt.update(ctx.est_factors, ctx.est_ry,
                                             cfg.recursion_beta)
            factors = self.filt.factors
            ry = self.filt.ry
            ccms_used = None
        ry_chol = sla.cholesky(ry, lower=True)
        grp = cfg.groups[self.group]
        blocks = []
        for m in range(len(grp.mpcs)):
            vecs, _ = beamformers.geb_from_factor(
                factors[(self.group, m)], ry, grp.rf_chains_per_mpc[m],
                ry_chol=ry_chol)
            blocks.append((m, vecs))
        s = beamformers.assemble(blocks)
        return {
            "s": s,
            "complexity": patching.complexity_measure(
                "geb", n=cfg.num_antennas),
            "est_ccms": ccms_used,
            "est_ry": ry,
            "est_factors": factors,
        }


class _DftMethod:
    def __init__(self, config: ScenarioConfig, group: int):
        self.name = "dft"
        self.config = config
        self.group = group

    def step(self, ctx: _StepContext) -> dict:
        cfg = self.config
        grp = cfg.groups[self.group]
        thetas = []
        for m, mpc in enumerate(grp.mpcs):
            mu_t, _ = channel.theta_interval(ctx.est_angles[self.group][m],
                                             mpc.angular_spread_rad)
            thetas.append(mu_t)
        s = beamformers.dft_baseline(thetas, cfg.num_antennas,
                                     list(grp.rf_chains_per_mpc))
        return {
            "s": s,
            "complexity": 0,
            "est_ccms": None,
            "est_ry": None,
        }


class _PatchMethod:
    """Shared pipeline of the patched low-complexity constructions.

    Tracks filtered patch powers for every arrival, the quantized
    observation profile, the incrementally maintained inverse, and the
    filtered steering surrogates of the intended group.
    """

    def __init__(self, name: str, config: ScenarioConfig, group: int,
                 whitening: bool, npl_complexity: int):
        self.name = name
        self.config = config
        self.group = group
        self.whitening = whitening
        self.npl_complexity = npl_complexity
        n = config.num_antennas
        self.basis = patching.d_kernel_eigenbasis(n, config.d_rank)
        self.p_filt: dict[tuple[int, int], np.ndarray] = {}
        self.p_quant: dict[tuple[int, int], np.ndarray] = {}
        self.h_const: dict[tuple[int, int], float] = {}
        for g, grp in enumerate(config.groups):
            weights = grp.mpc_power_weights()
            for m, mpc in enumerate(grp.mpcs):
                _, sig_t = channel.theta_interval(mpc.center_angle_rad,
                                                  mpc.angular_spread_rad)
                self.h_const[(g, m)] = patching.expected_patch_power(
                    weights[m], sig_t, n)
        self.inv_state: patching.QuantizedInverseState | None = None
        self.w_filt: beamformers.FilteredSteering | None = None

    def step(self, ctx: _StepContext) -> dict:
        cfg = self.config
        est_angles = ctx.est_angles
        n = cfg.num_antennas
        beta = cfg.recursion_beta
        quantized = []
        for g, grp in enumerate(cfg.groups):
            weights = grp.mpc_power_weights()
            for m, mpc in enumerate(grp.mpcs):
                mu_t, sig_t = channel.theta_interval(
                    est_angles[g][m], mpc.angular_spread_rad)
                p = patching.patch_profile(mu_t, sig_t, weights[m], n)
                prev = self.p_filt.get((g, m))
                p_f = p if prev is None else patching.recursive_filter_powers(
                    prev, p, beta)
                self.p_filt[(g, m)] = p_f
                p_q = patching.quantize_powers(
                    p_f, self.h_const[(g, m)], cfg.quantizer_depth)
                self.p_quant[(g, m)] = p_q
                quantized.append((g, p_q))
        p_y = patching.assemble_py(quantized, cfg)
        if self.inv_state is None:
            self.inv_state = patching.init_inverse_state(
                p_y, self.basis, cfg.noise_power)
        else:
            delta = p_y - self.inv_state.p_y_q
            self.inv_state = patching.woodbury_update(self.inv_state, delta)
        n_delta = self.inv_state.n_delta_last

        grp = cfg.groups[self.group]
        new_steering: dict[tuple[int, int], np.ndarray] = {}
        for m, mpc in enumerate(grp.mpcs):
            mu_t, sig_t = channel.theta_interval(
                est_angles[self.group][m], mpc.angular_spread_rad)
            sbasis = patching.quantized_sigma_basis(
                n, sig_t, grp.rf_chains_per_mpc[m])
            for i, vec in enumerate(patching.steering_from_basis(
                    mu_t, sbasis, count=grp.rf_chains_per_mpc[m])):
                new_steering[(m, i)] = vec
        self.w_filt = beamformers.filter_steering(self.w_filt, new_steering,
                                                  beta)

        blocks = []
        n_patch_own = 0
        for m, mpc in enumerate(grp.mpcs):
            d = grp.rf_chains_per_mpc[m]
            if self.whitening:
                cols, n_own = beamformers.whitening_type(
                    self.inv_state, self.p_quant[(self.group, m)],
                    self.w_filt, m, cfg, self.group, d=d)
                n_patch_own = max(n_patch_own, n_own)
            else:
                cols = beamformers.wiener_type(self.inv_state, self.w_filt,
                                               m, d=d)
            blocks.append((m, cols))
        s = beamformers.assemble(blocks)
        method = "whitening" if self.whitening else "wiener"
        complexity = patching.complexity_measure(
            method, n_delta_p=n_delta,
            n_patch_g=self.npl_complexity, r=cfg.d_rank)
        return {
            "s": s,
            "complexity": complexity,
            "n_delta_p": n_delta,
            "n_patch_own": n_patch_own if self.whitening else "",
            "est_ccms": None,  # built lazily for nMSE via reconstruction
            "est_ry": None,
        }

    def estimated_ccms(self) -> tuple[dict[int, np.ndarray], np.ndarray]:
        """Quantized-patch reconstructions of the intended group's per-MPC
        covariances plus the maintained observation covariance (for the
        estimator stage)."""
        grp = self.config.groups[self.group]
        per = {mpc.delay: patching.reconstruct_ccm(
                   self.p_quant[(self.group, m)], self.basis)
               for m, mpc in enumerate(grp.mpcs)}
        return per, self.inv_state.reconstruct()


def _make_method(name: str, config: ScenarioConfig, options: RunOptions):
    group = options.group
    if name == "geb-ideal":
        return _GebMethod(name, "ideal", config, group)
    if name == "geb":
        return _GebMethod(name, "raw", config, group)
    if name == "geb-filtered":
        return _GebMethod(name, "filtered", config, group)
    if name == "dft":
        return _DftMethod(config, group)
    if name == "wiener":
        return _PatchMethod(name, config, group, whitening=False,
                            npl_complexity=options.npl_complexity)
    if name == "whitening":
        return _PatchMethod(name, config, group, whitening=True,
                            npl_complexity=options.npl_complexity)
    raise ValueError(f"unknown method '{name}'")


# ---------------------------------------------------------------------------
# Evaluation helpers
# ---------------------------------------------------------------------------

def _analytic_row(s, true_ccms, config: ScenarioConfig, group: int) -> dict:
    eff = receiver.effective_set(s, None, true_ccms, config, with_eta=False)
    terms = analytics.cmf_power_terms(eff, config, group)
    p_err = terms["isi"] + terms["mui"] + terms["igi"] + terms["noise"]
    return {
        "eval": "analytic",
        "sinr_db": 10.0 * math.log10(terms["signal"] / p_err),
        **{f"p_{k}": v for k, v in terms.items()},
    }


def _mc_rows(s, channel_draws, config: ScenarioConfig, group: int) -> list[dict]:
    k = config.groups[group].num_users
    acc = {t: np.zeros(k) for t in receiver.TERMS}
    for channels in channel_draws:
        w = s.weights
        h_eff_est = {l: w.conj().T @ h for l, h in channels[group].items()}
        y = receiver.szf(h_eff_est)
        decomp = receiver.expected_decomposition(
            channels, s, h_eff_est, y, config, group)
        for t in receiver.TERMS:
            acc[t] += decomp.powers[t]
    for t in acc:
        acc[t] /= len(channel_draws)
    decomp = receiver.OutputDecomposition(acc)
    sinrs = decomp.sinr_db()
    rows = []
    for u in range(k):
        rows.append({
            "user": u + 1,
            "eval": "mc",
            "sinr_db": sinrs[u],
            **{f"p_{t}": acc[t][u] for t in receiver.TERMS},
        })
    return rows


def _nmse_for_method(method, s, ctx: _StepContext, training,
                     config: ScenarioConfig, group: int, info: dict) -> float:
    """Analytical nMSE of the estimator built from the method's current
    covariance estimates, evaluated under the true statistics."""
    w = s.weights
    grp = config.groups[group]
    k = grp.num_users
    scale = grp.num_users * grp.symbol_energy
    delays = [mpc.delay for mpc in grp.mpcs]
    if isinstance(method, _PatchMethod):
        est_group_ccms, est_ry = method.estimated_ccms()
        r_eff_est = {l: w.conj().T @ m @ w
                     for l, m in est_group_ccms.items()}
    else:
        factors = info.get("est_factors") or ctx.est_factors
        est_ry = info["est_ry"] if info["est_ry"] is not None else ctx.est_ry
        r_eff_est = {}
        for m, delay in enumerate(delays):
            wf = w.conj().T @ factors[(group, m)]
            r_eff_est[delay] = wf @ wf.conj().T
    r_eta_eff_est = w.conj().T @ est_ry @ w - scale * np.sum(
        [r_eff_est[l] for l in delays], axis=0)
    z = estimation.mmse_estimator(training, r_eff_est, r_eta_eff_est, k)
    r_eta_true = channel.assemble_r_eta(ctx.true_ry, group, ctx.true_ccms,
                                        config)
    r_eff_true = {l: w.conj().T @ m @ w
                  for l, m in ctx.true_ccms[group].items()}
    r_eta_eff_true = w.conj().T @ r_eta_true @ w
    return estimation.nmse_analytical(z, training, r_eff_true,
                                      r_eta_eff_true, k)


# ---------------------------------------------------------------------------
# Main loops
# ---------------------------------------------------------------------------

def _trial_rngs(config: ScenarioConfig, trial: int
                ) -> tuple[np.random.Generator, np.random.Generator]:
    mob = np.random.default_rng(
        np.random.SeedSequence([config.rng_seed, trial, 1]))
    chan = np.random.default_rng(
        np.random.SeedSequence([config.rng_seed, trial, 2]))
    return mob, chan


def run_slow_time(config: ScenarioConfig, options: RunOptions) -> list[dict]:
    """Run all configured trials and return per-step result rows."""
    with threadpool_limits(limits=1, user_api="blas"):
        return _run_slow_time(config, options)


def _run_slow_time(config: ScenarioConfig, options: RunOptions) -> list[dict]:
    group = options.group
    if not (0 <= group < config.num_groups):
        raise ValueError(f"group index {group} out of range")
    k_users = config.groups[group].num_users
    analytic = k_users == 1
    training = None
    if options.with_nmse:
        t_rng = np.random.default_rng(
            np.random.SeedSequence([config.rng_seed, 0, 99]))
        training = estimation.build_training(config, group, options.t_len,
                                             t_rng)
    rows: list[dict] = []
    base = {
        "group": group + 1,
        "alpha": config.mobility_alpha,
        "beta": config.recursion_beta,
        "sigma_est_deg": config.aoa_error_std_deg,
        "nq": config.quantizer_depth,
        "rank": config.d_rank,
        "snr_db": round(config.snr_db(group), 6),
        "t_len": options.t_len if options.with_nmse else "",
    }
    for trial in range(config.monte_carlo_trials):
        mob_rng, chan_rng = _trial_rngs(config, trial)
        methods = [_make_method(m, config, options) for m in options.methods]
        states = channel.init_mpc_states(config)
        for step in range(config.slow_time_steps):
            if step > 0:
                states = [[channel.step_mobility(st, config, mob_rng)
                           for st in per_group] for per_group in states]
            states = [[channel.observe_aoa(st, config, mob_rng)
                       for st in per_group] for per_group in states]
            true_angles = [[st.mu_phi_true for st in per] for per in states]
            est_angles = [[st.mu_phi_est for st in per] for per in states]
            ctx = _StepContext(config, group, true_angles, est_angles)
            channel_draws = None
            if not analytic:
                factors = channel.CcmFactors.from_angles(
                    config, true_angles)
                channel_draws = [factors.sample(config, chan_rng)
                                 for _ in range(options.mc_draws)]
            for method in methods:
                info = method.step(ctx)
                s = info["s"]
                common = {
                    **base,
                    "trial": trial,
                    "step": step,
                    "method": method.name,
                    "n_delta_p": info.get("n_delta_p", ""),
                    "n_patch_own": info.get("n_patch_own", ""),
                    "complexity": info["complexity"],
                    "nmse": "",
                }
                if options.with_nmse:
                    common["nmse"] = _nmse_for_method(
                        method, s, ctx, training, config, group, info)
                if analytic:
                    rows.append({**common, "user": 1, **_analytic_row(
                        s, ctx.true_ccms, config, group)})
                else:
                    for row in _mc_rows(s, channel_draws, config, group):
                        rows.append({**common, **row})
    return rows


def patch_change_stats(config: ScenarioConfig, trials: int | None = None,
                       steps: int | None = None) -> float:
    """Mean per-step count of changed quantized observation patch powers.

    Runs only the estimate -> patch -> filter -> quantize pipeline (no
    beamformers), counting nonzero entries of the per-step change in the
    quantized observation profile; step 0 initializes and is not counted.
    """
    with threadpool_limits(limits=1, user_api="blas"):
        return _patch_change_stats(config, trials, steps)


def _patch_change_stats(config: ScenarioConfig, trials: int | None,
                        steps: int | None) -> float:
    trials = trials if trials is not None else config.monte_carlo_trials
    steps = steps if steps is not None else config.slow_time_steps
    n = config.num_antennas
    total = 0
    count = 0
    for trial in range(trials):
        mob_rng, _ = _trial_rngs(config, trial)
        states = channel.init_mpc_states(config)
        p_filt: dict[tuple[int, int], np.ndarray] = {}
        h_const: dict[tuple[int, int], float] = {}
        for g, grp in enumerate(config.groups):
            weights = grp.mpc_power_weights()
            for m, mpc in enumerate(grp.mpcs):
                _, sig_t = channel.theta_interval(mpc.center_angle_rad,
                                                  mpc.angular_spread_rad)
                h_const[(g, m)] = patching.expected_patch_power(
                    weights[m], sig_t, n)
        prev_py = None
        for step in range(steps):
            if step > 0:
                states = [[channel.step_mobility(st, config, mob_rng)
                           for st in per] for per in states]
            states = [[channel.observe_aoa(st, config, mob_rng)
                       for st in per] for per in states]
            quantized = []
            for g, grp in enumerate(config.groups):
                weights = grp.mpc_power_weights()
                for m, mpc in enumerate(grp.mpcs):
                    mu_t, sig_t = channel.theta_interval(
                        states[g][m].mu_phi_est, mpc.angular_spread_rad)
                    p = patching.patch_profile(mu_t, sig_t, weights[m], n)
                    prev = p_filt.get((g, m))
                    p_f = p if prev is None else \
                        patching.recursive_filter_powers(
                            prev, p, config.recursion_beta)
                    p_filt[(g, m)] = p_f
                    quantized.append((g, patching.quantize_powers(
                        p_f, h_const[(g, m)], config.quantizer_depth)))
            p_y = patching.assemble_py(quantized, config)
            if prev_py is not None:
                total += int(np.count_nonzero(p_y - prev_py))
                count += 1
            prev_py = p_y
    return total / count if count else 0.0


# ---------------------------------------------------------------------------
# Sweeps and aggregation
# ---------------------------------------------------------------------------

AXIS_FIELDS = {
    "alpha": "mobility_alpha",
    "beta": "recursion_beta",
    "sigma-est": "aoa_error_std_deg",
    "sigma_est": "aoa_error_std_deg",
    "nq": "quantizer_depth",
    "rank": "d_rank",
    "seed": "rng_seed",
    "trials": "monte_carlo_trials",
    "steps": "slow_time_steps",
    "noise-power": "noise_power",
    "noise_power": "noise_power",
}


def _axis_points(axes: dict[str, list]) -> list[dict]:
    points = [{}]
    for name, values in axes.items():
        points = [{**p, name: v} for p in points for v in values]
    return points


def sweep(config: ScenarioConfig, axes: dict[str, list],
          options: RunOptions) -> list[dict]:
    """Cross-product sweep; each point runs with an independent derived seed
    so results are deterministic given the master seed."""
    rows = []
    for idx, point in enumerate(_axis_points(axes)):
        cfg = config
        opt = options
        for name, value in point.items():
            if name == "snr":
                es = config.groups[options.group].symbol_energy
                cfg = replace(cfg, noise_power=es / (10.0 ** (value / 10.0)))
            elif name == "t":
                opt = replace(opt, t_len=int(value))
            elif name in AXIS_FIELDS:
                cfg = replace(cfg, **{AXIS_FIELDS[name]: value})
            else:
                raise ValueError(f"unknown sweep axis '{name}'")
        cfg = replace(cfg, rng_seed=int(
            np.random.SeedSequence([config.rng_seed, 1000 + idx])
            .generate_state(1)[0]))
        rows.extend(run_slow_time(cfg, opt))
    return rows


def summarize(rows: list[dict], burn_in: int = 0,
              outage_threshold_db: float = 20.0) -> list[dict]:
    """Aggregate per-step rows into per-(method, parameter point) summaries.

    The slow-time-expected SINR behind the outage measure is the linear
    mean over steps within a trial; the headline mean_sinr_db averages the
    per-step dB values (both are reported).
    """
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["method"], row["alpha"], row["beta"],
               row["sigma_est_deg"], row["nq"], row["rank"], row["snr_db"],
               row["group"])
        groups.setdefault(key, []).append(row)
    out = []
    for key, items in groups.items():
        items = [r for r in items if r["step"] >= burn_in]
        by_trial: dict[int, list[dict]] = {}
        for r in items:
            by_trial.setdefault(r["trial"], []).append(r)
        trial_lin_means = []
        for rs in by_trial.values():
            lin = [10.0 ** (r["sinr_db"] / 10.0) for r in rs
                   if np.isfinite(r["sinr_db"])]
            trial_lin_means.append(np.mean(lin) if lin else np.nan)
        db_vals = [r["sinr_db"] for r in items if np.isfinite(r["sinr_db"])]
        nmse_vals = [r["nmse"] for r in items
                     if isinstance(r["nmse"], float)]
        nd_vals = [r["n_delta_p"] for r in items
                   if isinstance(r["n_delta_p"], (int, float))
                   and r["step"] >= 1]
        cx_vals = [r["complexity"] for r in items
                   if isinstance(r["complexity"], (int, float))]
        out.append({
            "method": key[0], "alpha": key[1], "beta": key[2],
            "sigma_est_deg": key[3], "nq": key[4], "rank": key[5],
            "snr_db": key[6], "group": key[7],
            "mean_sinr_db": float(np.mean(db_vals)) if db_vals else "",
            "mean_sinr_db_linavg": (
                10.0 * math.log10(np.nanmean(trial_lin_means))
                if trial_lin_means else ""),
            "outage_prob": analytics.outage_probability(
                [10.0 * math.log10(v) for v in trial_lin_means],
                outage_threshold_db) if trial_lin_means else "",
            "mean_nmse": float(np.mean(nmse_vals)) if nmse_vals else "",
            "mean_n_delta_p": float(np.mean(nd_vals)) if nd_vals else "",
            "mean_complexity": float(np.mean(cx_vals)) if cx_vals else "",
            "trials": len(by_trial),
            "steps": max((r["step"] for r in items), default=0) + 1,
        })
    out.sort(key=lambda r: tuple(str(r[c]) for c in SUMMARY_COLUMNS[:8]))
    return out


# ---------------------------------------------------------------------------
# Figure-ready exports
# ---------------------------------------------------------------------------

def pattern_rows(config: ScenarioConfig, methods: tuple[str, ...],
                 group: int = 0, step_deg: float = 0.25) -> list[dict]:
    """Beam-pattern export at the nominal (noise-free) angles."""
    opts = RunOptions(group=group, methods=methods)
    true_angles = [[m.center_angle_rad for m in g.mpcs]
                   for g in config.groups]
    rows = []
    phi_deg = np.arange(-90.0 + step_deg, 90.0, step_deg)
    phi_rad = np.deg2rad(phi_deg)
    for name in methods:
        method = _make_method(name, config, opts)
        ctx = _StepContext(config, group, true_angles, true_angles)
        info = method.step(ctx)
        gains = beamformers.beam_pattern(info["s"], phi_rad)
        for c in range(gains.shape[1]):
            for i, phi in enumerate(phi_deg):
                rows.append({"method": name, "column": c,
                             "phi_deg": round(float(phi), 6),
                             "gain": gains[i, c]})
    return rows


def spread_rows(config: ScenarioConfig, sigma_e_deg: list[float],
                beta: float | None = None, mpc: tuple[int, int] = (0, 0),
                step_deg: float = 0.1) -> list[dict]:
    """Beamspace profiles of the mean filtered covariance for a grid of
    angle-error levels (series rows keyed by figure/curve)."""
    g, m = mpc
    grp = config.groups[g]
    spec = grp.mpcs[m]
    mu_t, sig_t = channel.theta_interval(spec.center_angle_rad,
                                         spec.angular_spread_rad)
    ccm = channel.hadamard_ccm(mu_t, sig_t, config.num_antennas)
    if beta is None:
        beta = config.recursion_beta
    phi_deg = np.arange(-30.0, 30.0 + step_deg / 2, step_deg)
    phi_rad = np.deg2rad(phi_deg)
    rows = []
    for se in sigma_e_deg:
        mean, _, _ = analytics.recursive_filter_asymptotics(
            ccm, math.radians(se), beta)
        prof = analytics.spread_spectrum_profile(mean, phi_rad)
        for x, y in zip(phi_deg, prof):
            rows.append({"figure_id": "spread", "curve_id": f"sigma_e={se}",
                         "x": round(float(x), 6), "y": y})
    return rows


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _format_value(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".12g")
    return str(v)


def render_csv(rows: list[dict], columns: list[str], schema: str) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={schema}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_value(row.get(c, "")) for c in columns])
    return buf.getvalue()


def emit_csv(rows: list[dict], path, columns: list[str] | None = None,
             schema: str = RESULTS_SCHEMA) -> None:
    """Write rows with a schema marker line and a stable column order.

    Reruns with identical inputs produce byte-identical files; an empty
    row list yields a schema line plus the header only.
    """
    if columns is None:
        columns = RESULT_COLUMNS
    with open(path, "w", newline="") as fh:
        fh.write(render_csv(rows, columns, schema))
