"""Scenario generation, cooperation-mode ablations, and Monte-Carlo SPEB
sweeps.

Trials are fully deterministic: every random draw derives from the master
seed plus the trial's own entropy, so results are independent of scheduling
and byte-reproducible. The joint mode runs through the carry-over recursion;
one audit trial per sweep cross-checks that path against direct
marginalization of the fully assembled matrix.
"""

import hashlib
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import navinfo
from .blockfim import SingularBlockError, block_diag
from .models import (
    GeometryError,
    MobilityModel,
    RangeModel,
    Scenario,
    ScenarioGeometry,
    VelocityModel,
    full_pairs,
    radius_pairs,
)

# Entropy word mixed into the audit trial's seed so it never collides with a
# numbered trial.
_AUDIT_ENTROPY = 0xA0D17

# Fraction of failed trials beyond which a sweep refuses to report means.
FAILURE_BUDGET = 0.01

AUDIT_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid scenario or sweep configuration."""


class SweepNumericalError(RuntimeError):
    """Too many trials failed numerically for the sweep to be trustworthy."""


class AuditError(RuntimeError):
    """The carry-over recursion disagreed with direct marginalization."""


class CoopMode(Enum):
    """Which cooperation ingredients enter the EFIM.

    SPATIAL_ONLY drops all velocity links. TEMPORAL_ONLY drops agent-agent
    ranging but keeps anchor links: without any absolute reference every
    bound is infinite and the curve is vacuous, so the ablated ingredient is
    inter-agent cooperation specifically. JOINT keeps everything.
    """

    SPATIAL_ONLY = "spatial_only"
    TEMPORAL_ONLY = "temporal_only"
    JOINT = "joint"


ALL_MODES = (CoopMode.SPATIAL_ONLY, CoopMode.TEMPORAL_ONLY, CoopMode.JOINT)
_MODE_RANK = {mode: i for i, mode in enumerate(ALL_MODES)}


@dataclass(frozen=True)
class ScenarioConfig:
    """Random-scenario recipe.

    Agents start uniformly in `area` (meters) and follow a Gaussian random
    walk with per-step covariance `step_cov` (m^2, scalar means isotropic);
    anchors are placed uniformly and stay put. Intensities are in m^-2.
    `connectivity` is None for a fully measured network or a ranging radius
    in meters.
    """

    area: tuple[float, float] = (20.0, 20.0)
    num_agents: int = 5
    num_anchors: int = 4
    num_steps: int = 20
    vel_along: float = 5.0
    vel_across: float = 5.0
    vel_couple: float = 0.0
    range_intensity: float = 5.0
    step_cov: float = 1.0
    connectivity: float | None = None
    seed: int = 0

    def __post_init__(self):
        if len(self.area) != 2 or self.area[0] <= 0 or self.area[1] <= 0:
            raise ConfigError("area must be positive (width, height)")
        if self.num_agents < 0 or self.num_anchors < 0:
            raise ConfigError("node counts must be >= 0")
        if self.num_steps < 1:
            raise ConfigError("num_steps must be >= 1")
        if min(self.vel_along, self.vel_across, self.range_intensity) < 0:
            raise ConfigError("intensities must be >= 0")
        if self.vel_along * self.vel_across - self.vel_couple**2 < 0:
            raise ConfigError("velocity intensity triple must be PSD")
        if np.ndim(self.step_cov) == 0:
            if self.step_cov <= 0:
                raise ConfigError("step_cov must be positive")
        else:
            cov = np.asarray(self.step_cov, dtype=float)
            if cov.shape != (2, 2) or np.linalg.eigvalsh(cov).min() <= 0:
                raise ConfigError("step_cov must be PD")
        if self.connectivity is not None and self.connectivity <= 0:
            raise ConfigError("connectivity radius must be positive")

    def step_cov_matrix(self) -> np.ndarray:
        if np.ndim(self.step_cov) == 0:
            return float(self.step_cov) * np.eye(2)
        return np.asarray(self.step_cov, dtype=float)


@dataclass(frozen=True)
class SpebRow:
    mode: str
    sweep_value: int
    mean_speb: float
    std_error: float
    trials: int


@dataclass
class SpebTable:
    rows: list[SpebRow] = field(default_factory=list)
    failed_trials: int = 0

    def sorted_rows(self) -> list[SpebRow]:
        rank = {mode.value: i for mode, i in _MODE_RANK.items()}
        return sorted(self.rows, key=lambda r: (rank.get(r.mode, 99), r.sweep_value))

    def lookup(self, mode: CoopMode, sweep_value: int) -> SpebRow:
        for row in self.rows:
            if row.mode == mode.value and row.sweep_value == sweep_value:
                return row
        raise KeyError((mode, sweep_value))


@dataclass(frozen=True)
class TrialRecord:
    """Per-trial SPEB values: spebs[mode] has shape (num_steps, num_agents),
    row n holding final-step bounds for the horizon of n+1 steps."""

    trial_index: int
    scenario_hash: str
    spebs: dict[str, np.ndarray]


def generate_scenario(cfg: ScenarioConfig, extra_entropy: tuple[int, ...] = ()) -> Scenario:
    """Draw a scenario. Draw order is fixed (anchors, agent starts, walk
    steps) so identical seeds give identical scenarios."""
    rng = np.random.default_rng([cfg.seed, *extra_entropy])
    w, h = cfg.area
    anchors = rng.uniform((0.0, 0.0), (w, h), size=(cfg.num_anchors, 2))
    starts = rng.uniform((0.0, 0.0), (w, h), size=(cfg.num_agents, 2))
    chol = np.linalg.cholesky(cfg.step_cov_matrix())
    steps = rng.standard_normal((cfg.num_agents, cfg.num_steps - 1, 2)) @ chol.T
    agent_paths = np.concatenate(
        [starts[:, None, :], starts[:, None, :] + np.cumsum(steps, axis=1)], axis=1
    )
    anchor_paths = np.repeat(anchors[:, None, :], cfg.num_steps, axis=1)
    geometry = ScenarioGeometry(
        np.concatenate([agent_paths, anchor_paths], axis=0), cfg.num_agents
    )
    if cfg.connectivity is None:
        pairs = full_pairs(geometry)
    else:
        pairs = radius_pairs(geometry, cfg.connectivity)
    return Scenario(
        geometry=geometry,
        pairs=pairs,
        range_model=RangeModel(intensity=cfg.range_intensity),
        velocity_model=VelocityModel(cfg.vel_along, cfg.vel_across, cfg.vel_couple),
        mobility=MobilityModel(cfg.step_cov_matrix()),
    )


def scenario_hash(scenario: Scenario) -> str:
    digest = hashlib.sha256()
    digest.update(scenario.geometry.paths.tobytes())
    digest.update(str(scenario.geometry.num_agents).encode())
    digest.update(repr(scenario.pairs).encode())
    return digest.hexdigest()


def _spatial_matrix(
    positions: np.ndarray, pairs: np.ndarray, intensity: float, num_agents: int
) -> np.ndarray:
    """Single-step ranging matrix over all agents, vectorized over pairs."""
    out4 = np.zeros((num_agents, num_agents, 2, 2))
    if pairs.size:
        k, j = pairs[:, 0], pairs[:, 1]
        diff = positions[j] - positions[k]
        dist = np.linalg.norm(diff, axis=1)
        if (dist <= 1e-12).any():
            raise GeometryError("coincident nodes in ranging pair")
        u = diff / dist[:, None]
        blocks = intensity * np.einsum("pi,pj->pij", u, u)
        np.add.at(out4, (k, k), blocks)
        agent_peer = j < num_agents
        if agent_peer.any():
            ka, ja, ba = k[agent_peer], j[agent_peer], blocks[agent_peer]
            np.add.at(out4, (ja, ja), ba)
            np.add.at(out4, (ka, ja), -ba)
            np.add.at(out4, (ja, ka), -ba.transpose(0, 2, 1))
    return out4.transpose(0, 2, 1, 3).reshape(2 * num_agents, 2 * num_agents)


def _temporal_blocks(displacements: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """Per-agent velocity blocks for one transition, shape (num_agents, 2, 2)."""
    if cfg.vel_couple == 0.0 and cfg.vel_along == cfg.vel_across:
        # Isotropic intensities: the rotated block is the same in any frame.
        return np.broadcast_to(
            cfg.vel_along * np.eye(2), (len(displacements), 2, 2)
        ).copy()
    dist = np.linalg.norm(displacements, axis=1)
    if (dist <= 1e-12).any():
        raise GeometryError("zero displacement with direction-dependent intensities")
    c, s = displacements[:, 0] / dist, displacements[:, 1] / dist
    rot = np.stack(
        [np.stack([c, -s], axis=1), np.stack([s, c], axis=1)], axis=1
    )
    local = np.array(
        [[cfg.vel_along, cfg.vel_couple], [cfg.vel_couple, cfg.vel_across]]
    )
    blocks = np.einsum("nij,jk,nlk->nil", rot, local, rot)
    return 0.5 * (blocks + blocks.transpose(0, 2, 1))


def _trial_spebs(scenario: Scenario, cfg: ScenarioConfig, modes) -> dict[str, np.ndarray]:
    """Final-step network SPEBs for every horizon 1..T and mode."""
    geom = scenario.geometry
    na, t = geom.num_agents, geom.num_steps
    positions = geom.paths
    s_full, s_anchor = [], []
    for n in range(t):
        pair_arr = np.array(scenario.pairs[n], dtype=int).reshape(-1, 2)
        anchor_arr = pair_arr[pair_arr[:, 1] >= na] if pair_arr.size else pair_arr
        s_full.append(
            _spatial_matrix(positions[:, n], pair_arr, cfg.range_intensity, na)
        )
        s_anchor.append(
            _spatial_matrix(positions[:, n], anchor_arr, cfg.range_intensity, na)
        )
    k_blocks = [
        _temporal_blocks(positions[:na, n] - positions[:na, n - 1], cfg)
        for n in range(1, t)
    ]

    out: dict[str, np.ndarray] = {}
    for mode in modes:
        spebs = np.empty((t, na))
        if mode is CoopMode.SPATIAL_ONLY:
            for n in range(t):
                spebs[n] = navinfo.block_spebs(s_full[n])
        else:
            s_steps = s_full if mode is CoopMode.JOINT else s_anchor
            carry = np.zeros((2 * na, 2 * na))
            spebs[0] = navinfo.block_spebs(s_steps[0])
            for n in range(1, t):
                k_full = block_diag(list(k_blocks[n - 1]))
                carry = navinfo.carry_over_step(k_full, s_steps[n - 1], carry)
                spebs[n] = navinfo.block_spebs(s_steps[n] + carry)
        out[mode.value] = spebs
    return out


def run_trial(cfg: ScenarioConfig, trial_index: int, modes=ALL_MODES) -> TrialRecord:
    """One reproducible trial: scenario + SPEB curves for every mode."""
    scenario = generate_scenario(cfg, (trial_index,))
    return TrialRecord(
        trial_index=trial_index,
        scenario_hash=scenario_hash(scenario),
        spebs=_trial_spebs(scenario, cfg, modes),
    )


def _truncated(scenario: Scenario, num_steps: int) -> Scenario:
    geometry = ScenarioGeometry(
        scenario.geometry.paths[:, :num_steps], scenario.geometry.num_agents
    )
    return replace(scenario, geometry=geometry, pairs=scenario.pairs[:num_steps])


def _audit_recursion(cfg: ScenarioConfig) -> None:
    """Check recursion-vs-marginalization agreement on one small joint trial."""
    if cfg.num_agents == 0:
        return
    small = replace(
        cfg,
        num_agents=min(cfg.num_agents, 3),
        num_anchors=max(min(cfg.num_anchors, 3), 1),
        num_steps=min(cfg.num_steps, 4),
        connectivity=None,
    )
    scenario = generate_scenario(small, (_AUDIT_ENTROPY,))
    spebs = _trial_spebs(scenario, small, (CoopMode.JOINT,))[CoopMode.JOINT.value]
    na = small.num_agents
    for horizon in range(1, small.num_steps + 1):
        sub = _truncated(scenario, horizon)
        full = navinfo.assemble_position_efim(sub)
        final = navinfo.marginal_efim(full, [(k, horizon - 1) for k in range(na)])
        direct = navinfo.block_spebs(final.matrix)
        rel = np.abs(direct - spebs[horizon - 1]) / np.maximum(np.abs(direct), 1e-30)
        if not (rel < AUDIT_TOL).all():
            raise AuditError(
                f"carry-over recursion disagrees with marginalization "
                f"(seed={cfg.seed}, horizon={horizon}, rel={rel.max():.3e})"
            )


def _aggregate(values: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over trials; any non-finite trial makes the
    mean infinite and the error undefined."""
    stacked = np.stack(values)
    n = stacked.shape[0]
    finite = np.isfinite(stacked).all(axis=0)
    mean = np.full(stacked.shape[1:], np.inf)
    err = np.full(stacked.shape[1:], np.nan)
    if finite.any():
        sub = stacked[:, finite]
        mean[finite] = sub.mean(axis=0)
        err[finite] = sub.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else 0.0
    return mean, err


_TRIAL_FAILURES = (np.linalg.LinAlgError, GeometryError, SingularBlockError)


def sweep_time(
    cfg: ScenarioConfig,
    steps=None,
    modes=ALL_MODES,
    trials: int = 500,
) -> SpebTable:
    """Network-average SPEB at the final step, per horizon length and mode.

    One trajectory of cfg.num_steps serves every horizon: the carry-over
    state after n steps is exactly the marginalized history of the n-step
    problem, so each trial yields the whole curve in a single pass.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    step_list = list(steps) if steps is not None else list(range(1, cfg.num_steps + 1))
    if not step_list or min(step_list) < 1 or max(step_list) > cfg.num_steps:
        raise ConfigError("step counts must fall in 1..num_steps")
    table = SpebTable()
    if cfg.num_agents == 0:
        return table
    per_mode: dict[str, list[np.ndarray]] = {m.value: [] for m in modes}
    failed = 0
    for trial in range(trials):
        try:
            record = run_trial(cfg, trial, modes)
        except _TRIAL_FAILURES:
            failed += 1
            continue
        for mode in modes:
            per_mode[mode.value].append(record.spebs[mode.value].mean(axis=1))
    table.failed_trials = failed
    if failed > FAILURE_BUDGET * trials:
        raise SweepNumericalError(
            f"{failed}/{trials} trials failed numerically (seed={cfg.seed})"
        )
    _audit_recursion(cfg)
    for mode in modes:
        if not per_mode[mode.value]:
            continue
        mean, err = _aggregate(per_mode[mode.value])
        for value in step_list:
            table.rows.append(
                SpebRow(
                    mode.value,
                    value,
                    float(mean[value - 1]),
                    float(err[value - 1]),
                    len(per_mode[mode.value]),
                )
            )
    return table


def sweep_nodes(
    cfg: ScenarioConfig,
    agent_counts,
    modes=ALL_MODES,
    trials: int = 500,
) -> SpebTable:
    """Network-average SPEB at the final step of a fixed horizon, per agent
    count and mode."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    counts = list(agent_counts)
    if not counts or min(counts) < 1:
        raise ConfigError("agent counts must be >= 1")
    table = SpebTable()
    failed = 0
    for count in counts:
        cfg_n = replace(cfg, num_agents=count)
        per_mode: dict[str, list[float]] = {m.value: [] for m in modes}
        for trial in range(trials):
            try:
                scenario = generate_scenario(cfg_n, (count, trial))
                spebs = _trial_spebs(scenario, cfg_n, modes)
            except _TRIAL_FAILURES:
                failed += 1
                continue
            for mode in modes:
                per_mode[mode.value].append(float(spebs[mode.value][-1].mean()))
        for mode in modes:
            if not per_mode[mode.value]:
                continue
            arr = [np.array([v]) for v in per_mode[mode.value]]
            mean, err = _aggregate(arr)
            table.rows.append(
                SpebRow(
                    mode.value, count, float(mean[0]), float(err[0]), len(arr)
                )
            )
    table.failed_trials = failed
    if failed > FAILURE_BUDGET * trials * len(counts):
        raise SweepNumericalError(
            f"{failed} trials failed numerically (seed={cfg.seed})"
        )
    _audit_recursion(cfg)
    return table


def format_value(x: float) -> str:
    return format(x, ".17g")


def persist(table: SpebTable, path) -> None:
    """Write the sweep table as CSV, atomically, in a bit-stable order."""
    lines = ["mode,sweep_value,mean_speb_m2,std_error_m2,trials"]
    for row in table.sorted_rows():
        lines.append(
            f"{row.mode},{row.sweep_value},{format_value(row.mean_speb)},"
            f"{format_value(row.std_error)},{row.trials}"
        )
    write_atomic(path, "\n".join(lines) + "\n")


def write_atomic(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
