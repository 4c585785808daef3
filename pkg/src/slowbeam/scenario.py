"""Simulation scenario: user groups, multipath geometry, mobility and run controls.

A scenario fully determines a simulation run: the antenna count, the groups of
users with their multipath components (center angle, angular spread, delay),
per-group symbol energies, the mobility / angle-estimation noise model, and
the knobs of the adaptive beamformers (filter coefficient, quantizer depth,
kernel rank).  Angles are stored in degrees in the config file and converted
to radians at the module boundary.

Scenarios are immutable after loading and safe to share across parallel
Monte Carlo workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict, replace

import yaml

DEG = math.pi / 180.0


class ScenarioError(ValueError):
    """Raised when a scenario violates a structural invariant."""


@dataclass(frozen=True)
class MpcSpec:
    """One resolvable multipath component of a group.

    center_angle_deg: azimuth of the arrival, degrees from broadside.
    angular_spread_deg: width of the (rectangular) angular power profile.
    delay: discrete channel tap this arrival occupies.
    """

    center_angle_deg: float
    angular_spread_deg: float
    delay: int

    @property
    def center_angle_rad(self) -> float:
        return self.center_angle_deg * DEG

    @property
    def angular_spread_rad(self) -> float:
        return self.angular_spread_deg * DEG

    def validate(self) -> None:
        if self.angular_spread_deg <= 0:
            raise ScenarioError(
                f"angular_spread_deg must be > 0, got {self.angular_spread_deg}")
        if abs(self.center_angle_deg) + self.angular_spread_deg / 2 >= 90.0:
            raise ScenarioError(
                "center_angle_deg +/- angular_spread_deg/2 must stay inside "
                f"(-90, 90) degrees; got center {self.center_angle_deg}, "
                f"spread {self.angular_spread_deg}")
        if self.delay < 0:
            raise ScenarioError(f"delay must be >= 0, got {self.delay}")


@dataclass(frozen=True)
class GroupSpec:
    """A group of co-located users sharing multipath statistics."""

    mpcs: tuple[MpcSpec, ...]
    num_users: int
    symbol_energy: float
    rf_chains_per_mpc: tuple[int, ...]
    # Relative per-MPC power weights before the unit-total normalization.
    # None means equal split.
    power_split: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mpcs", tuple(
            m if isinstance(m, MpcSpec) else MpcSpec(**m) for m in self.mpcs))
        object.__setattr__(self, "rf_chains_per_mpc",
                           tuple(int(d) for d in self.rf_chains_per_mpc))
        if self.power_split is not None:
            object.__setattr__(self, "power_split",
                               tuple(float(w) for w in self.power_split))

    @property
    def num_mpcs(self) -> int:
        return len(self.mpcs)

    @property
    def num_rf_chains(self) -> int:
        return sum(self.rf_chains_per_mpc)

    @property
    def delays(self) -> tuple[int, ...]:
        return tuple(m.delay for m in self.mpcs)

    def mpc_power_weights(self) -> tuple[float, ...]:
        """Per-MPC share of the group's unit total covariance trace."""
        if self.power_split is None:
            return tuple(1.0 / self.num_mpcs for _ in self.mpcs)
        total = sum(self.power_split)
        return tuple(w / total for w in self.power_split)

    def validate(self) -> None:
        if not self.mpcs:
            raise ScenarioError("group must have at least one MPC")
        for m in self.mpcs:
            m.validate()
        if self.num_users < 1:
            raise ScenarioError(f"num_users must be >= 1, got {self.num_users}")
        if self.symbol_energy <= 0:
            raise ScenarioError(
                f"symbol_energy must be > 0, got {self.symbol_energy}")
        if len(self.rf_chains_per_mpc) != len(self.mpcs):
            raise ScenarioError("rf_chains_per_mpc must have one entry per MPC")
        if any(d < 1 for d in self.rf_chains_per_mpc):
            raise ScenarioError("rf_chains_per_mpc entries must be >= 1")
        if len(set(self.delays)) != len(self.delays):
            raise ScenarioError(f"MPC delays within a group must be distinct, "
                                f"got {self.delays}")
        if self.power_split is not None:
            if len(self.power_split) != len(self.mpcs):
                raise ScenarioError("power_split must have one entry per MPC")
            if any(w <= 0 for w in self.power_split):
                raise ScenarioError("power_split entries must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete scenario: geometry, statistics, and simulation controls."""

    num_antennas: int
    groups: tuple[GroupSpec, ...]
    noise_power: float
    channel_memory: int | None = None  # derived as 1 + max delay when None
    mobility_alpha: float = 0.999
    mobility_sigma_v_deg: float = 3.0
    aoa_error_std_deg: float = 0.5
    recursion_beta: float = 0.9
    quantizer_depth: int = 2
    d_rank: int = 2
    slow_time_steps: int = 200
    monte_carlo_trials: int = 50
    rng_seed: int = 12345

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(
            g if isinstance(g, GroupSpec) else GroupSpec(**g)
            for g in self.groups))
        self.validate()

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    @property
    def memory(self) -> int:
        """Channel memory L (number of taps)."""
        if self.channel_memory is not None:
            return self.channel_memory
        return 1 + max(m.delay for g in self.groups for m in g.mpcs)

    @property
    def mobility_sigma_v_rad(self) -> float:
        return self.mobility_sigma_v_deg * DEG

    @property
    def aoa_error_std_rad(self) -> float:
        return self.aoa_error_std_deg * DEG

    def snr_db(self, group: int) -> float:
        return 10.0 * math.log10(self.groups[group].symbol_energy
                                 / self.noise_power)

    def validate(self) -> None:
        if self.num_antennas < 1:
            raise ScenarioError(
                f"num_antennas must be >= 1, got {self.num_antennas}")
        if not self.groups:
            raise ScenarioError("at least one group is required")
        for g in self.groups:
            g.validate()
            if g.num_rf_chains > self.num_antennas:
                raise ScenarioError(
                    f"group RF chain total {g.num_rf_chains} exceeds "
                    f"num_antennas {self.num_antennas}")
        if self.noise_power <= 0:
            raise ScenarioError(
                f"noise_power must be > 0, got {self.noise_power}")
        max_delay = max(m.delay for g in self.groups for m in g.mpcs)
        if self.channel_memory is not None:
            if self.channel_memory < 1 + max_delay:
                raise ScenarioError(
                    f"channel_memory {self.channel_memory} must be >= "
                    f"1 + max delay ({1 + max_delay})")
        if not (0.0 < self.mobility_alpha < 1.0):
            raise ScenarioError(
                f"mobility_alpha must lie in (0, 1), got {self.mobility_alpha}")
        if self.mobility_sigma_v_deg < 0:
            raise ScenarioError("mobility_sigma_v_deg must be >= 0")
        if self.aoa_error_std_deg < 0:
            raise ScenarioError("aoa_error_std_deg must be >= 0")
        if not (0.0 <= self.recursion_beta < 1.0):
            raise ScenarioError(
                f"recursion_beta must lie in [0, 1), got {self.recursion_beta}")
        if self.quantizer_depth < 1:
            raise ScenarioError("quantizer_depth must be >= 1")
        if not (1 <= self.d_rank <= self.num_antennas):
            raise ScenarioError(
                f"d_rank must lie in [1, num_antennas], got {self.d_rank}")
        if self.slow_time_steps < 1:
            raise ScenarioError("slow_time_steps must be >= 1")
        if self.monte_carlo_trials < 1:
            raise ScenarioError("monte_carlo_trials must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["groups"] = [
            {
                "num_users": g.num_users,
                "symbol_energy": g.symbol_energy,
                "rf_chains_per_mpc": list(g.rf_chains_per_mpc),
                **({"power_split": list(g.power_split)}
                   if g.power_split is not None else {}),
                "mpcs": [asdict(m) for m in g.mpcs],
            }
            for g in self.groups
        ]
        for g in d["groups"]:
            if "power_split" in g and g["power_split"] is None:
                del g["power_split"]
        return d


def _coerce_group(raw: dict) -> GroupSpec:
    try:
        return GroupSpec(
            mpcs=tuple(MpcSpec(**m) for m in raw["mpcs"]),
            num_users=int(raw["num_users"]),
            symbol_energy=float(raw["symbol_energy"]),
            rf_chains_per_mpc=tuple(int(d) for d in raw["rf_chains_per_mpc"]),
            power_split=(tuple(float(w) for w in raw["power_split"])
                         if raw.get("power_split") is not None else None),
        )
    except KeyError as exc:
        raise ScenarioError(f"group block is missing field {exc}") from exc


def from_dict(raw: dict) -> ScenarioConfig:
    """Build a validated config from a plain mapping (parsed config file)."""
    if not isinstance(raw, dict):
        raise ScenarioError("config root must be a mapping")
    raw = dict(raw)
    raw.pop("num_groups", None)  # derived; tolerated on input
    try:
        groups = tuple(_coerce_group(g) for g in raw.pop("groups"))
    except KeyError as exc:
        raise ScenarioError("config is missing the 'groups' block") from exc
    known = {f.name for f in ScenarioConfig.__dataclass_fields__.values()}
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError(f"unknown config fields: {sorted(unknown)}")
    return ScenarioConfig(groups=groups, **raw)


def load_scenario(path) -> ScenarioConfig:
    """Load and validate a scenario from a YAML config file."""
    with open(path, "r") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"cannot parse scenario file {path}: {exc}")
    return from_dict(raw)


def save_scenario(config: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def apply_overrides(config: ScenarioConfig, overrides: dict[str, str]
                    ) -> ScenarioConfig:
    """Apply `key=value` overrides to top-level scalar fields.

    Values are parsed with YAML scalar rules so `0.9`, `2`, and `true`
    all coerce sensibly.  Used by the CLI `--set` flag for sweeps.
    """
    updates = {}
    for key, value in overrides.items():
        if key not in ScenarioConfig.__dataclass_fields__ or key == "groups":
            raise ScenarioError(f"cannot override unknown field '{key}'")
        updates[key] = yaml.safe_load(value)
    return replace(config, **updates)


def default_scenario(*,
                     num_antennas: int = 100,
                     mobility_alpha: float = 0.999,
                     aoa_error_std_deg: float = 0.5,
                     recursion_beta: float = 0.9,
                     quantizer_depth: int = 2,
                     d_rank: int = 2,
                     slow_time_steps: int = 200,
                     monte_carlo_trials: int = 50,
                     rng_seed: int = 12345) -> ScenarioConfig:
    """Reference four-group scenario used throughout the test campaign.

    Ten users in four angularly separated groups with 9 multipath arrivals
    total; group symbol energies span 30 dB to exercise the near-far effect,
    and the noise floor puts group 1 at 30 dB input SNR.  One RF chain per
    MPC.  Asymptotic center-angle wander is 3 degrees.
    """
    groups = (
        GroupSpec(
            mpcs=(MpcSpec(0.0, 3.0, 0),
                  MpcSpec(9.75, 2.5, 5),
                  MpcSpec(22.0, 3.5, 11)),
            num_users=1, symbol_energy=1.0, rf_chains_per_mpc=(1, 1, 1)),
        GroupSpec(
            mpcs=(MpcSpec(27.5, 3.0, 3),
                  MpcSpec(15.25, 2.0, 9)),
            num_users=2, symbol_energy=10.0, rf_chains_per_mpc=(1, 1)),
        GroupSpec(
            mpcs=(MpcSpec(-6.25, 3.5, 8),
                  MpcSpec(-13.5, 3.0, 17)),
            num_users=3, symbol_energy=100.0, rf_chains_per_mpc=(1, 1)),
        GroupSpec(
            mpcs=(MpcSpec(-20.25, 3.0, 20),
                  MpcSpec(-27.0, 3.5, 29)),
            num_users=4, symbol_energy=1000.0, rf_chains_per_mpc=(1, 1)),
    )
    return ScenarioConfig(
        num_antennas=num_antennas,
        groups=groups,
        noise_power=1e-3,
        mobility_alpha=mobility_alpha,
        mobility_sigma_v_deg=3.0,
        aoa_error_std_deg=aoa_error_std_deg,
        recursion_beta=recursion_beta,
        quantizer_depth=quantizer_depth,
        d_rank=d_rank,
        slow_time_steps=slow_time_steps,
        monte_carlo_trials=monte_carlo_trials,
        rng_seed=rng_seed,
    )


def small_scenario(**kwargs) -> ScenarioConfig:
    """Scaled-down preset (N=32) for fast property suites and smoke runs."""
    kwargs.setdefault("num_antennas", 32)
    kwargs.setdefault("slow_time_steps", 50)
    kwargs.setdefault("monte_carlo_trials", 8)
    return default_scenario(**kwargs)
