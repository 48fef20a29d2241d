"""Joint position-information assembly, carry-over recursion, and the
geometric decompositions of 2-D carry-over information.

The central object is the joint EFIM over agent positions across time steps,
a symmetric matrix of 2x2 blocks indexed by (agent, step). Ranging links
contribute within a time step; velocity measurements couple consecutive
steps, making the joint matrix block-tridiagonal in time. Marginalizing past
steps compresses their entire contribution into a per-step carry-over block,
which the recursion propagates forward without ever touching the full
matrix.
"""

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .blockfim import (
    BlockLayout,
    BlockSymMatrix,
    ChainBlocks,
    ParamId,
    ParamKind,
    block_diag,
    eliminate_block,
    eliminate_hmm_chain,
    schur_complement,
)
from .geom2d import Eigen2, eigen2, r_cross, r_dir, unit_vector
from .models import (
    MobilityModel,
    Scenario,
    mobility_blocks,
    range_intensity_via_reduction,
    spatial_block,
    temporal_block,
)

# Joint-EFIM eigenvalues below 4 * dim * eps * lambda_max count as null
# directions (positions touching them have an infinite bound). The cutoff
# tracks eigh's backward-error scale rather than a fixed relative factor:
# assembled null spaces land near 1e-15 absolute even at dim ~500, while a
# deliberate 1e12 pinning prior must not swallow ordinary m^-2 eigenvalues.
_SPEB_NULL_FACTOR = 4.0 * np.finfo(float).eps

# Squared eigenvector mass on a position block below which a null direction
# is considered not to touch that block.
NULL_SUPPORT_TOL = 1e-12


def position_coords(
    num_agents: int, num_steps: int, start_step: int = 0
) -> tuple[tuple[int, int], ...]:
    """(agent, step) coordinates in time-major order."""
    return tuple(
        (k, n) for n in range(start_step, num_steps) for k in range(num_agents)
    )


@dataclass(frozen=True, eq=False)
class JointEfim:
    """Joint EFIM over 2-D positions, one 2x2 block per (agent, step)."""

    coords: tuple[tuple[int, int], ...]
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.shape != (2 * len(self.coords), 2 * len(self.coords)):
            raise ValueError("matrix size does not match coordinate list")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(
            self, "_pos", {c: i for i, c in enumerate(self.coords)}
        )

    def rows(self, agent: int, step: int) -> slice:
        i = self._pos[(agent, step)]
        return slice(2 * i, 2 * i + 2)

    def block(
        self, agent: int, step: int, agent2: int | None = None, step2: int | None = None
    ) -> np.ndarray:
        r = self.rows(agent, step)
        c = self.rows(
            agent if agent2 is None else agent2, step if step2 is None else step2
        )
        return self.matrix[r, c].copy()


def _scatter(matrix: np.ndarray, ri: slice, ci: slice, block: np.ndarray) -> None:
    matrix[ri, ci] += block
    if ri != ci:
        matrix[ci, ri] += block.T


def assemble_position_efim(
    scenario: Scenario,
    start_step: int = 0,
    carry: np.ndarray | None = None,
) -> JointEfim:
    """Joint position EFIM of the ranging + velocity measurement set.

    Per time step, each measured pair adds its ranging block to both member
    diagonals and its negative between them (anchor sides have no rows and
    contribute to the agent diagonal only). Each velocity measurement couples
    an agent's two consecutive steps with the +/+/- pattern of a relative
    measurement, so cross-information exists only between adjacent steps.

    `start_step` restricts the window to steps start_step..T-1; `carry`
    (2*Na x 2*Na) is added to the window's first diagonal block, which is how
    marginalized history re-enters.
    """
    geom = scenario.geometry
    na, t = geom.num_agents, geom.num_steps
    if not 0 <= start_step < t:
        raise ValueError("start_step out of range")
    coords = position_coords(na, t, start_step)
    matrix = np.zeros((2 * len(coords), 2 * len(coords)))
    j = JointEfim(coords, matrix)

    if scenario.range_model is not None:
        for n in range(start_step, t):
            for k, peer in scenario.pairs[n]:
                blk = spatial_block(geom, k, peer, n, scenario.range_model)
                _scatter(matrix, j.rows(k, n), j.rows(k, n), blk)
                if peer < na:
                    _scatter(matrix, j.rows(peer, n), j.rows(peer, n), blk)
                    _scatter(matrix, j.rows(k, n), j.rows(peer, n), -blk)

    if scenario.velocity_model is not None:
        for n in range(max(start_step + 1, 1), t):
            for k in range(na):
                blk = temporal_block(geom, k, n, scenario.velocity_model)
                _scatter(matrix, j.rows(k, n - 1), j.rows(k, n - 1), blk)
                _scatter(matrix, j.rows(k, n), j.rows(k, n), blk)
                _scatter(matrix, j.rows(k, n - 1), j.rows(k, n), -blk)

    for k, n, blk in scenario.priors:
        if n >= start_step:
            _scatter(matrix, j.rows(k, n), j.rows(k, n), np.asarray(blk, dtype=float))

    if carry is not None:
        carry = np.asarray(carry, dtype=float)
        if carry.shape != (2 * na, 2 * na):
            raise ValueError("carry block must cover all agents of one step")
        matrix[: 2 * na, : 2 * na] += carry
    return j


def independent_params_efim(
    scenario: Scenario,
    state_info: Mapping[tuple[int, int], np.ndarray] | None = None,
) -> JointEfim:
    """Joint position EFIM when measurement parameters are independent across
    time and of the positions.

    Every measurement then contributes only within its own time step: the
    ranging intensity of each pair is obtained by eliminating the
    prior-augmented bias from the pair's (distance, bias) information, and
    intra-node measurements enter as ready per-(agent, step) 2x2 blocks in
    `state_info`. The mobility prior, when present, keeps its usual
    consecutive-step stripe.

    Velocity measurements spanning two steps do not fit this reduction; use
    `assemble_position_efim` for those.
    """
    if scenario.velocity_model is not None:
        raise ValueError(
            "velocity measurements couple consecutive steps; "
            "this reduction handles single-step measurements only"
        )
    geom = scenario.geometry
    na, t = geom.num_agents, geom.num_steps
    coords = position_coords(na, t)
    matrix = np.zeros((2 * len(coords), 2 * len(coords)))
    j = JointEfim(coords, matrix)

    model = scenario.range_model
    if model is not None:
        for n in range(t):
            for k, peer in scenario.pairs[n]:
                key = (min(k, peer), max(k, peer), n)
                if model.table is not None and key in model.table:
                    lam = model.table[key]
                elif model.sigma_range is not None:
                    lam = range_intensity_via_reduction(
                        model.sigma_range, model.sigma_bias
                    )
                else:
                    lam = model.intensity_at(k, peer, n)
                blk = lam * r_dir(geom.pair_angle(k, peer, n)) if lam else np.zeros((2, 2))
                _scatter(matrix, j.rows(k, n), j.rows(k, n), blk)
                if peer < na:
                    _scatter(matrix, j.rows(peer, n), j.rows(peer, n), blk)
                    _scatter(matrix, j.rows(k, n), j.rows(peer, n), -blk)

    for (k, n), blk in (state_info or {}).items():
        _scatter(matrix, j.rows(k, n), j.rows(k, n), np.asarray(blk, dtype=float))

    if scenario.mobility is not None:
        for k in range(na):
            for n, m, blk in mobility_blocks(scenario.mobility, t):
                _scatter(matrix, j.rows(k, n), j.rows(k, m), blk)

    for k, n, blk in scenario.priors:
        _scatter(matrix, j.rows(k, n), j.rows(k, n), np.asarray(blk, dtype=float))
    return j


@dataclass(frozen=True, eq=False)
class BayesianEfim:
    """Additive split of the joint EFIM: mobility prior + intra-node
    (temporal) + inter-node (spatial) parts, all over the same coordinates."""

    coords: tuple[tuple[int, int], ...]
    mobility: np.ndarray
    temporal: np.ndarray
    spatial: np.ndarray

    @property
    def total(self) -> JointEfim:
        return JointEfim(self.coords, self.mobility + self.temporal + self.spatial)


def bayesian_efim(
    num_agents: int,
    num_steps: int,
    mobility: MobilityModel | None = None,
    intra_chains: Mapping[int, ChainBlocks] | None = None,
    pair_chains: Mapping[tuple[int, int], ChainBlocks] | None = None,
) -> BayesianEfim:
    """Joint position EFIM with hidden-Markov measurement-parameter chains.

    Each intra-node chain (key: agent) couples that agent's positions across
    all step pairs once its nuisance sequence is eliminated. Each pairwise
    chain (key: (agent, peer)) acts on the difference coordinate of the pair:
    its contributions scatter positively onto both members' diagonals and
    negatively between them; when the peer is an anchor only the agent side
    has rows. Chain state slots must be 2-dimensional (positions).
    """
    coords = position_coords(num_agents, num_steps)
    dim = 2 * len(coords)
    mob = np.zeros((dim, dim))
    temp = np.zeros((dim, dim))
    spat = np.zeros((dim, dim))
    ref = JointEfim(coords, np.zeros((dim, dim)))

    if mobility is not None:
        for k in range(num_agents):
            for n, m, blk in mobility_blocks(mobility, num_steps):
                _scatter(mob, ref.rows(k, n), ref.rows(k, m), blk)

    for k, chain in (intra_chains or {}).items():
        _check_chain(chain, num_agents, num_steps, k)
        for (n, m), g in eliminate_hmm_chain(chain).items():
            _scatter(temp, ref.rows(k, n), ref.rows(k, m), g)

    for (k, peer), chain in (pair_chains or {}).items():
        _check_chain(chain, num_agents, num_steps, k)
        if peer == k:
            raise ValueError("pair chain needs two distinct nodes")
        for (n, m), g in eliminate_hmm_chain(chain).items():
            _scatter(spat, ref.rows(k, n), ref.rows(k, m), g)
            if peer < num_agents:
                _scatter(spat, ref.rows(peer, n), ref.rows(peer, m), g)
                _scatter(spat, ref.rows(k, n), ref.rows(peer, m), -g)
                if n != m:
                    _scatter(spat, ref.rows(peer, n), ref.rows(k, m), -g)
    return BayesianEfim(coords, mob, temp, spat)


def _check_chain(chain: ChainBlocks, num_agents: int, num_steps: int, agent: int) -> None:
    if not 0 <= agent < num_agents:
        raise ValueError(f"chain references unknown agent {agent}")
    if chain.length != num_steps:
        raise ValueError("chain length must equal the number of steps")
    for n in range(chain.length):
        if chain.state_dim(n) != 2:
            raise ValueError("chain state slots must be 2-D positions")


def marginal_efim(j: JointEfim, keep: Iterable[tuple[int, int]]) -> JointEfim:
    """Reduce the joint EFIM onto a subset of (agent, step) coordinates,
    preserving their inverse-information block."""
    keep_set = set(keep)
    unknown = keep_set.difference(j.coords)
    if unknown:
        raise ValueError(f"unknown coordinates: {sorted(unknown)}")
    layout = BlockLayout(
        (ParamId(ParamKind.POSITION, agent=k, time=n), 2) for (k, n) in j.coords
    )
    full = BlockSymMatrix(layout, j.matrix.copy())
    kept_ids = [
        ParamId(ParamKind.POSITION, agent=k, time=n)
        for (k, n) in j.coords
        if (k, n) in keep_set
    ]
    reduced = schur_complement(full, kept_ids)
    kept_coords = tuple((c.agent, c.time) for c in reduced.layout.ids)
    return JointEfim(kept_coords, reduced.data)


def carry_over_step(
    k_now: np.ndarray,
    s_prev: np.ndarray,
    carry_prev: np.ndarray | None = None,
) -> np.ndarray:
    """One step of the carry-over recursion.

    Given the velocity information K linking the previous step to the current
    one, and the previous step's total position information S + carry, the
    information surviving into the current step is
    K - K (S + carry + K)^-1 K: PSD and never exceeding K, with equality in
    the limit of a perfectly known previous position. The seed carry is zero.

    The subtraction cannot resolve below round-off relative to K, so
    eigenvalues under that noise floor are returned as exact zeros; an
    uninformed past then carries exactly nothing instead of eps-scale noise
    that later stages could mistake for information.
    """
    k = np.asarray(k_now, dtype=float)
    total = np.asarray(s_prev, dtype=float) + k
    if carry_prev is not None:
        total = total + np.asarray(carry_prev, dtype=float)
    out = eliminate_block(k, k, total, k)
    out = 0.5 * (out + out.T)
    if out.size == 0:
        return out
    w, v = np.linalg.eigh(out)
    floor = 32.0 * len(w) * np.finfo(float).eps * float(np.abs(k).max(initial=0.0))
    w = np.where(w > floor, w, 0.0)
    return (v * w) @ v.T


def individual_efims(total: np.ndarray) -> list[np.ndarray]:
    """Per-agent 2x2 position information inside a one-step network matrix:
    the inverse of each agent's block of the network-wide inverse."""
    total = np.asarray(total, dtype=float)
    na = total.shape[0] // 2
    out = []
    for k in range(na):
        rows = np.arange(2 * k, 2 * k + 2)
        rest = np.setdiff1d(np.arange(2 * na), rows)
        out.append(
            eliminate_block(
                total[np.ix_(rows, rows)],
                total[np.ix_(rows, rest)],
                total[np.ix_(rest, rest)],
                total[np.ix_(rest, rows)],
            )
        )
    return out


def distributed_carry_over(
    s_prev_full: np.ndarray,
    carry_prev: Sequence[np.ndarray],
    k_now: Sequence[np.ndarray],
) -> list[np.ndarray]:
    """Per-agent carry-over for distributed operation.

    Each agent first extracts its individual position information after the
    previous step's spatial cooperation (the inverse of its own block of the
    network-wide inverse), then runs the scalar carry-over step against it.
    Correlation between agents is deliberately dropped; the result is one 2x2
    block per agent.
    """
    na = len(k_now)
    if len(carry_prev) != na:
        raise ValueError("carry_prev and k_now must list the same agents")
    total = np.asarray(s_prev_full, dtype=float) + block_diag(list(carry_prev))
    if total.shape != (2 * na, 2 * na):
        raise ValueError("s_prev_full must cover all agents of one step")
    return [
        carry_over_step(np.asarray(k_now[k], dtype=float), individual)
        for k, individual in enumerate(individual_efims(total))
    ]


def spatial_step_matrix(scenario: Scenario, n: int) -> np.ndarray:
    """Network ranging matrix of one time step (2*Na x 2*Na): pair blocks on
    both member diagonals, their negatives between agent pairs."""
    geom = scenario.geometry
    na = geom.num_agents
    out = np.zeros((2 * na, 2 * na))
    if scenario.range_model is None:
        return out
    for k, peer in scenario.pairs[n]:
        blk = spatial_block(geom, k, peer, n, scenario.range_model)
        rk = slice(2 * k, 2 * k + 2)
        out[rk, rk] += blk
        if peer < na:
            rp = slice(2 * peer, 2 * peer + 2)
            out[rp, rp] += blk
            out[rk, rp] -= blk
            out[rp, rk] -= blk.T
    for k, step, blk in scenario.priors:
        if step == n:
            rk = slice(2 * k, 2 * k + 2)
            out[rk, rk] += np.asarray(blk, dtype=float)
    return out


def temporal_step_blocks(scenario: Scenario, n: int) -> list[np.ndarray]:
    """Per-agent velocity blocks for the transition into step n (n >= 1)."""
    if scenario.velocity_model is None:
        return [np.zeros((2, 2)) for _ in range(scenario.geometry.num_agents)]
    return [
        temporal_block(scenario.geometry, k, n, scenario.velocity_model)
        for k in range(scenario.geometry.num_agents)
    ]


@dataclass(frozen=True)
class WeightedSplit:
    """Carry-over as a weighted sum of its two ingredient matrices."""

    w_spatial: float
    w_temporal: float


def decompose_weighted_sum(k: np.ndarray, s: np.ndarray) -> WeightedSplit:
    """Express K - K (S + K)^-1 K as w_s * S + w_k * K (2x2 only).

    The weights are determinant ratios: w_s = |K| / |S+K|, w_k = |S| / |S+K|.
    """
    k = np.asarray(k, dtype=float)
    s = np.asarray(s, dtype=float)
    det_sum = float(np.linalg.det(s + k))
    if det_sum == 0.0:
        raise ValueError("singular sum: |S + K| = 0")
    return WeightedSplit(
        w_spatial=float(np.linalg.det(k)) / det_sum,
        w_temporal=float(np.linalg.det(s)) / det_sum,
    )


@dataclass(frozen=True)
class AxesCouplingSplit:
    """Carry-over split along the temporal information's own axes.

    `along` and `across` are the rank-1 pieces of the temporal information on
    its eigen-axes; zeta1/zeta2 in (0, 1] down-weight them by the directional
    position uncertainty, and `coupling` (on the trace-free cross matrix of
    the same axes) captures eigen-axis misalignment with the spatial
    information.
    """

    zeta1: float
    zeta2: float
    coupling: float
    along: np.ndarray
    across: np.ndarray
    angle: float

    def reconstruct(self) -> np.ndarray:
        return (
            self.zeta1 * self.along
            + self.zeta2 * self.across
            + self.coupling * r_cross(self.angle)
        )


def decompose_axes_coupling(k_eigen: Eigen2, s: np.ndarray) -> AxesCouplingSplit:
    """Split the carry-over of K = lam*R(angle) + nu*R(angle+pi/2) against S.

    Uses the resolvent forms: zeta1 = (1 + lam * u' (S+D)^-1 u)^-1 and its
    mirror for zeta2, and coupling = -2*lam*nu * u' (S+C+D)^-1 u_perp. These
    extend beyond 2-D; the determinant shortcuts live in
    `axes_coupling_closed_form`.
    """
    lam, nu, angle = k_eigen.lambda1, k_eigen.lambda2, k_eigen.angle1
    s = np.asarray(s, dtype=float)
    u = unit_vector(angle)
    u_perp = unit_vector(angle + 0.5 * math.pi)
    along = lam * r_dir(angle)
    across = nu * r_dir(angle + 0.5 * math.pi)
    zeta1 = 1.0 / (1.0 + lam * float(u @ np.linalg.inv(s + across) @ u))
    zeta2 = 1.0 / (1.0 + nu * float(u_perp @ np.linalg.inv(s + along) @ u_perp))
    coupling = -2.0 * lam * nu * float(
        u @ np.linalg.inv(s + along + across) @ u_perp
    )
    return AxesCouplingSplit(zeta1, zeta2, coupling, along, across, angle)


def axes_coupling_closed_form(
    k_eigen: Eigen2, s: np.ndarray
) -> tuple[float, float, float]:
    """2-D determinant closed forms of the axes-coupling split.

    zeta1 = |S+D| / |S+D+C|, zeta2 = |S+C| / |S+C+D|, and the coupling equals
    lam * nu * (eigenvalue spread of S) * sin(2 * angle offset) / |S+C+D|.
    """
    lam, nu, angle = k_eigen.lambda1, k_eigen.lambda2, k_eigen.angle1
    s = np.asarray(s, dtype=float)
    along = lam * r_dir(angle)
    across = nu * r_dir(angle + 0.5 * math.pi)
    det_all = float(np.linalg.det(s + along + across))
    if det_all == 0.0:
        raise ValueError("singular sum")
    s_eig = eigen2(s)
    zeta1 = float(np.linalg.det(s + across)) / det_all
    zeta2 = float(np.linalg.det(s + along)) / det_all
    coupling = (
        lam
        * nu
        * (s_eig.lambda2 - s_eig.lambda1)
        * math.sin(2.0 * (angle - s_eig.angle1))
        / det_all
    )
    return zeta1, zeta2, coupling


def _scaled_eigh(matrix: np.ndarray):
    """Eigendecomposition after two-sided diagonal scaling.

    The congruence J -> D^-1 J D^-1 with D = sqrt(diag(J)) preserves the null
    space but removes artificial conditioning from scale imbalance (a 1e12
    pinning prior next to ordinary m^-2 information would otherwise drown the
    small eigenvalues in round-off). Returns (eigenvalues, eigenvectors,
    scale, null cutoff).
    """
    matrix = 0.5 * (matrix + matrix.T)
    diag = np.clip(np.diag(matrix), 0.0, None)
    scale = np.sqrt(np.where(diag > 0.0, diag, 1.0))
    scaled = matrix / scale[:, None] / scale[None, :]
    w, v = np.linalg.eigh(scaled)
    cutoff = _SPEB_NULL_FACTOR * max(len(w), 1) * float(np.abs(w).max(initial=0.0))
    return w, v, scale, cutoff


def _block_speb(
    w: np.ndarray, v: np.ndarray, scale: np.ndarray, rows: slice, cutoff: float
) -> float:
    mass = ((v[rows, :] / scale[rows, None]) ** 2).sum(axis=0)
    null = w <= cutoff
    if bool((null & (mass > NULL_SUPPORT_TOL)).any()):
        return math.inf
    keep = ~null
    return float((mass[keep] / w[keep]).sum())


def speb_with_rank(j: JointEfim, agent: int, step: int) -> tuple[float, int]:
    """Squared position error bound plus the EFIM's null-space dimension.

    The bound is the trace of the (agent, step) 2x2 block of the inverse
    EFIM. A singular EFIM yields +inf for positions its null space touches
    (no exception: unanchored scenarios are legitimate); the second value
    reports how many null directions the matrix has.
    """
    w, v, scale, cutoff = _scaled_eigh(j.matrix)
    value = _block_speb(w, v, scale, j.rows(agent, step), cutoff)
    return value, int((w <= cutoff).sum())


def speb(j: JointEfim, agent: int, step: int) -> float:
    """Squared position error bound (m^2) of one agent at one step."""
    return speb_with_rank(j, agent, step)[0]


def block_spebs(matrix: np.ndarray) -> np.ndarray:
    """Per-block SPEB of a symmetric matrix of consecutive 2x2 blocks.

    Used on single-step network matrices (2*Na x 2*Na): returns one value per
    agent, +inf where the null space touches the agent.
    """
    matrix = np.asarray(matrix, dtype=float)
    na = matrix.shape[0] // 2
    w, v, scale, cutoff = _scaled_eigh(matrix)
    return np.array(
        [_block_speb(w, v, scale, slice(2 * k, 2 * k + 2), cutoff) for k in range(na)]
    )
