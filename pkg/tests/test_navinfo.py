import math

import numpy as np
import pytest

from navlim import navinfo
from navlim.blockfim import ChainBlocks, block_diag, eliminate_block
from navlim.geom2d import Eigen2, r_dir
from navlim.models import (
    MobilityModel,
    RangeModel,
    Scenario,
    ScenarioGeometry,
    VelocityModel,
    full_pairs,
    mobility_blocks,
    velocity_intensities,
)
from navlim.navinfo import (
    assemble_position_efim,
    axes_coupling_closed_form,
    bayesian_efim,
    block_spebs,
    carry_over_step,
    decompose_axes_coupling,
    decompose_weighted_sum,
    distributed_carry_over,
    independent_params_efim,
    individual_efims,
    marginal_efim,
    spatial_step_matrix,
    speb,
    speb_with_rank,
    temporal_step_blocks,
)
from navlim.simkit import ScenarioConfig, generate_scenario
from oracles import (
    GaussianCase,
    dense_position_fim,
    random_gaussian_case,
    random_chain,
    ranging_local_info,
    rel_frobenius,
    velocity_local_info,
)


def scenario_from_case(case: GaussianCase) -> Scenario:
    """Package-side view of an oracle case: per-measurement intensities via
    the local-information reductions, everything else from geometry."""
    t = case.paths.shape[1]
    geometry = ScenarioGeometry(case.paths, case.num_agents)
    pairs = [[] for _ in range(t)]
    range_table = {}
    for spec in case.rangings:
        local = ranging_local_info(spec)
        lam = eliminate_block(local[0, 0], local[0, 1], local[1, 1])
        pairs[spec.n].append((spec.k, spec.j))
        range_table[(spec.k, spec.j, spec.n)] = lam
    vel_table = {}
    for spec in case.velocities:
        local = velocity_local_info(spec)
        reduced = eliminate_block(local[:2, :2], local[:2, 2:], local[2:, 2:])
        dist = float(
            np.linalg.norm(case.paths[spec.k, spec.n] - case.paths[spec.k, spec.n - 1])
        )
        vel_table[(spec.k, spec.n)] = velocity_intensities(reduced, dist)
    return Scenario(
        geometry=geometry,
        pairs=tuple(tuple(p) for p in pairs),
        range_model=RangeModel(intensity=0.0, table=range_table),
        velocity_model=VelocityModel(0.0, 0.0, 0.0, table=vel_table),
    )


def simple_scenario(seed=0, num_agents=2, num_anchors=2, num_steps=3, **kw):
    cfg = ScenarioConfig(
        num_agents=num_agents,
        num_anchors=num_anchors,
        num_steps=num_steps,
        seed=seed,
        **kw,
    )
    return generate_scenario(cfg)


# ---------------------------------------------------------------------------
# assembly


def test_single_agent_single_anchor_single_step():
    paths = np.array([[[0.0, 0.0]], [[3.0, 4.0]]])
    geom = ScenarioGeometry(paths, num_agents=1)
    scenario = Scenario(
        geometry=geom,
        pairs=(((0, 1),),),
        range_model=RangeModel(intensity=5.0),
    )
    j = assemble_position_efim(scenario)
    angle = math.atan2(4.0, 3.0)
    np.testing.assert_allclose(j.matrix, 5.0 * r_dir(angle), rtol=1e-12)


def test_temporal_only_two_agents_two_steps_pattern():
    rng = np.random.default_rng(1)
    paths = np.cumsum(rng.uniform(0.5, 1.5, size=(2, 2, 2)), axis=1)
    geom = ScenarioGeometry(paths, num_agents=2)
    scenario = Scenario(
        geometry=geom,
        pairs=((), ()),
        velocity_model=VelocityModel(3.0, 1.0, 0.5),
    )
    j = assemble_position_efim(scenario)
    k_full = block_diag(temporal_step_blocks(scenario, 1))
    np.testing.assert_allclose(j.matrix[:4, :4], k_full, atol=1e-14)
    np.testing.assert_allclose(j.matrix[4:, 4:], k_full, atol=1e-14)
    np.testing.assert_allclose(j.matrix[:4, 4:], -k_full, atol=1e-14)


def test_assemble_matches_dense_gaussian_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        case = random_gaussian_case(rng)
        scenario = scenario_from_case(case)
        ours = assemble_position_efim(scenario).matrix
        oracle = dense_position_fim(case)
        assert rel_frobenius(ours, oracle) < 1e-9


def test_row_structure_and_banding():
    scenario = simple_scenario(seed=5, num_agents=3, num_anchors=2, num_steps=3)
    j = assemble_position_efim(scenario)
    na, t = 3, 3
    for n in range(t):
        s_n = spatial_step_matrix(scenario, n)
        # diagonal agent block = sum over peers, off-diagonal = -pair block
        for k in range(na):
            total = np.zeros((2, 2))
            for k2, peer in scenario.pairs[n]:
                from navlim.models import spatial_block

                if k2 == k:
                    total += spatial_block(scenario.geometry, k, peer, n, scenario.range_model)
                elif peer == k:
                    total += spatial_block(scenario.geometry, k2, peer, n, scenario.range_model)
            np.testing.assert_allclose(
                s_n[2 * k : 2 * k + 2, 2 * k : 2 * k + 2], total, atol=1e-12
            )
        for m in range(t):
            blk = j.matrix[2 * na * n : 2 * na * (n + 1), 2 * na * m : 2 * na * (m + 1)]
            if abs(n - m) > 1:
                assert not blk.any()  # exact zero pattern beyond the band


def test_assemble_symmetry():
    scenario = simple_scenario(seed=6)
    j = assemble_position_efim(scenario)
    np.testing.assert_array_equal(j.matrix, j.matrix.T)


# ---------------------------------------------------------------------------
# marginalization and the carry-over recursion


def test_marginal_keep_everything_is_identity():
    scenario = simple_scenario(seed=7)
    j = assemble_position_efim(scenario)
    out = marginal_efim(j, j.coords)
    np.testing.assert_allclose(out.matrix, j.matrix)


def test_two_step_suffix_closed_form():
    scenario = simple_scenario(seed=8, num_agents=1, num_anchors=2, num_steps=2)
    j = assemble_position_efim(scenario)
    s0 = spatial_step_matrix(scenario, 0)
    s1 = spatial_step_matrix(scenario, 1)
    k = temporal_step_blocks(scenario, 1)[0]
    carry = k - k @ np.linalg.inv(s0 + k) @ k
    out = marginal_efim(j, [(0, 1)])
    np.testing.assert_allclose(out.matrix, s1 + carry, rtol=1e-10, atol=1e-12)


def test_recursion_matches_marginalization_all_suffixes():
    rng = np.random.default_rng(31)
    for _ in range(10):
        na = int(rng.integers(1, 4))
        scenario = simple_scenario(
            seed=int(rng.integers(1 << 30)),
            num_agents=na,
            num_anchors=int(rng.integers(1, 4)),
            num_steps=int(rng.integers(2, 5)),
        )
        t = scenario.geometry.num_steps
        j = assemble_position_efim(scenario)
        carry = np.zeros((2 * na, 2 * na))
        for n in range(1, t):
            k_full = block_diag(temporal_step_blocks(scenario, n))
            carry = carry_over_step(k_full, spatial_step_matrix(scenario, n - 1), carry)
            suffix = assemble_position_efim(scenario, start_step=n, carry=carry)
            marg = marginal_efim(j, [(k, m) for k in range(na) for m in range(n, t)])
            assert rel_frobenius(suffix.matrix, marg.matrix) < 1e-9


def test_carry_over_uninformed_past_gives_zero():
    k = np.array([[4.0, 1.0], [1.0, 2.0]])
    out = carry_over_step(k, np.zeros((2, 2)))
    np.testing.assert_allclose(out, np.zeros((2, 2)), atol=1e-12)


def test_carry_over_perfect_past_approaches_k():
    k = np.diag([5.0, 5.0])
    out = carry_over_step(k, 1e8 * np.eye(2))
    assert np.linalg.norm(out - k) / np.linalg.norm(k) < 1e-5


def test_carry_over_harmonic_mean_case():
    k = 2.0 * np.eye(2)
    s = 2.0 * np.eye(2)
    np.testing.assert_allclose(carry_over_step(k, s), np.eye(2), rtol=1e-12)


def test_carry_over_is_psd_and_below_k():
    rng = np.random.default_rng(32)
    for _ in range(200):
        k = _random_spd2(rng)
        s = _random_spd2(rng)
        carry = carry_over_step(k, s)
        assert np.linalg.eigvalsh(carry).min() >= -1e-10
        assert np.linalg.eigvalsh(k - carry).min() >= -1e-10


def _random_spd2(rng, lo=0.1, hi=10.0):
    l1, l2 = rng.uniform(lo, hi, size=2)
    ang = rng.uniform(0, 2 * math.pi)
    return l1 * r_dir(ang) + l2 * r_dir(ang + math.pi / 2)


# ---------------------------------------------------------------------------
# distributed carry-over


def test_distributed_single_agent_equals_centralized():
    rng = np.random.default_rng(33)
    k = _random_spd2(rng)
    s = _random_spd2(rng)
    central = carry_over_step(k, s)
    dist = distributed_carry_over(s, [np.zeros((2, 2))], [k])
    np.testing.assert_allclose(dist[0], central, rtol=1e-10)


def test_distributed_block_diagonal_equals_centralized():
    rng = np.random.default_rng(34)
    ks = [_random_spd2(rng) for _ in range(3)]
    ss = [_random_spd2(rng) for _ in range(3)]
    s_full = block_diag(ss)
    carries = [np.zeros((2, 2))] * 3
    dist = distributed_carry_over(s_full, carries, ks)
    central = carry_over_step(block_diag(ks), s_full, np.zeros((6, 6)))
    for k in range(3):
        np.testing.assert_allclose(
            dist[k], central[2 * k : 2 * k + 2, 2 * k : 2 * k + 2], rtol=1e-9
        )


def test_distributed_carries_less_per_agent_information():
    # Dropping inter-agent correlation discards information per agent: each
    # distributed carry block sits below the corresponding diagonal block of
    # the centralized carry (Loewner), so the SPEB read off an agent's own
    # carried information can only grow. (The *fused* network bound is a
    # different story: stacking correlation-free marginals overstates joint
    # information, so the distributed final bound comes out optimistic.)
    rng = np.random.default_rng(35)
    for _ in range(100):
        na = 3
        scenario = simple_scenario(
            seed=int(rng.integers(1 << 30)), num_agents=na, num_anchors=2, num_steps=3
        )
        t = scenario.geometry.num_steps
        carry_c = np.zeros((2 * na, 2 * na))
        carry_d = [np.zeros((2, 2))] * na
        for n in range(1, t):
            k_blocks = temporal_step_blocks(scenario, n)
            s_prev = spatial_step_matrix(scenario, n - 1)
            carry_c = carry_over_step(block_diag(k_blocks), s_prev, carry_c)
            carry_d = distributed_carry_over(s_prev, carry_d, k_blocks)
        for k in range(na):
            central_blk = carry_c[2 * k : 2 * k + 2, 2 * k : 2 * k + 2]
            gap = central_blk - carry_d[k]
            assert np.linalg.eigvalsh(gap).min() >= -1e-10
            # per-agent carry SPEB: distributed >= centralized
            speb_d = np.trace(np.linalg.inv(carry_d[k]))
            speb_c = np.trace(np.linalg.inv(central_blk))
            assert speb_d >= speb_c * (1 - 1e-9)


# ---------------------------------------------------------------------------
# decompositions


def test_weighted_sum_rank1_temporal():
    rng = np.random.default_rng(36)
    lam = 3.0
    psi_angle = 0.7
    c = lam * r_dir(psi_angle)
    s = _random_spd2(rng)
    split = decompose_weighted_sum(c, s)
    direct = carry_over_step(c, s)
    assert split.w_spatial == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(split.w_temporal * c, direct, rtol=1e-10, atol=1e-12)
    expect_weight = np.linalg.det(s) / np.linalg.det(c + s)
    assert split.w_temporal == pytest.approx(expect_weight, rel=1e-12)


def test_weighted_sum_equal_matrices_halves():
    rng = np.random.default_rng(37)
    k = _random_spd2(rng)
    split = decompose_weighted_sum(k, k)
    recon = split.w_spatial * k + split.w_temporal * k
    np.testing.assert_allclose(recon, 0.5 * k, rtol=1e-10)


def test_weighted_sum_random_reconstruction():
    rng = np.random.default_rng(38)
    for _ in range(1000):
        k = _random_spd2(rng)
        s = _random_spd2(rng)
        split = decompose_weighted_sum(k, s)
        recon = split.w_spatial * s + split.w_temporal * k
        direct = carry_over_step(k, s)
        assert rel_frobenius(recon, direct) < 1e-10


def test_axes_coupling_vanishes_for_isotropic_spatial():
    rng = np.random.default_rng(39)
    k_eigen = Eigen2(4.0, 1.5, 0.9)
    s = 2.5 * np.eye(2)
    split = decompose_axes_coupling(k_eigen, s)
    assert abs(split.coupling) < 1e-12
    _, _, closed = axes_coupling_closed_form(k_eigen, s)
    assert abs(closed) < 1e-12


def test_axes_coupling_vanishes_for_aligned_axes():
    beta = 1.1
    s = 3.0 * r_dir(beta) + 1.0 * r_dir(beta + math.pi / 2)
    for offset in (0.0, math.pi / 2):
        k_eigen = Eigen2(5.0, 2.0, beta + offset)
        split = decompose_axes_coupling(k_eigen, s)
        assert abs(split.coupling) < 1e-12


def test_axes_coupling_vanishes_for_rank1_temporal():
    rng = np.random.default_rng(40)
    s = _random_spd2(rng)
    split = decompose_axes_coupling(Eigen2(3.0, 0.0, 0.3), s)
    assert abs(split.coupling) < 1e-12


def test_axes_coupling_random_reconstruction_and_closed_forms():
    rng = np.random.default_rng(41)
    for _ in range(1000):
        lam, nu = sorted(rng.uniform(0.1, 10.0, size=2))[::-1]
        angle = rng.uniform(0, 2 * math.pi)
        k_eigen = Eigen2(float(lam), float(nu), float(angle))
        s = _random_spd2(rng)
        split = decompose_axes_coupling(k_eigen, s)
        direct = carry_over_step(k_eigen.reconstruct(), s)
        assert rel_frobenius(split.reconstruct(), direct) < 1e-10
        z1, z2, coupling = axes_coupling_closed_form(k_eigen, s)
        assert split.zeta1 == pytest.approx(z1, rel=1e-10)
        assert split.zeta2 == pytest.approx(z2, rel=1e-10)
        assert split.coupling == pytest.approx(coupling, rel=1e-10, abs=1e-12)
        assert 0 < split.zeta1 <= 1 and 0 < split.zeta2 <= 1


# ---------------------------------------------------------------------------
# SPEB


def test_speb_isotropic():
    j = navinfo.JointEfim(((0, 0),), 5.0 * np.eye(2))
    assert speb(j, 0, 0) == pytest.approx(0.4)


def test_speb_diagonal():
    j = navinfo.JointEfim(((0, 0),), np.diag([4.0, 1.0]))
    assert speb(j, 0, 0) == pytest.approx(1.25)


def test_speb_matches_dense_inverse():
    scenario = simple_scenario(seed=42, num_agents=2, num_anchors=3, num_steps=3)
    j = assemble_position_efim(scenario)
    inv = np.linalg.inv(j.matrix)
    for k in range(2):
        for n in range(3):
            r = j.rows(k, n)
            assert speb(j, k, n) == pytest.approx(np.trace(inv[r, r]), rel=1e-9)


def test_speb_singular_reports_infinity_with_rank():
    k = np.array([[2.0, 0.3], [0.3, 1.0]])
    matrix = np.block([[k, -k], [-k, k]])
    j = navinfo.JointEfim(((0, 0), (0, 1)), matrix)
    value, null_dim = speb_with_rank(j, 0, 0)
    assert value == math.inf
    assert null_dim == 2


def test_speb_partial_observability():
    # One pinned agent, one floating: only the floater is unbounded.
    pinned = 10.0 * np.eye(2)
    matrix = block_diag([pinned, np.zeros((2, 2))])
    j = navinfo.JointEfim(((0, 0), (1, 0)), matrix)
    assert speb(j, 0, 0) == pytest.approx(0.2)
    assert speb(j, 1, 0) == math.inf


def test_loewner_monotonicity_under_augmentation():
    rng = np.random.default_rng(43)
    scenario = simple_scenario(seed=44, num_agents=2, num_anchors=2, num_steps=3)
    j = assemble_position_efim(scenario)
    before = [speb(j, k, n) for (k, n) in j.coords]
    for _ in range(25):
        k0, n0 = j.coords[rng.integers(len(j.coords))]
        extra = _random_spd2(rng, lo=0.0, hi=3.0)
        aug = Scenario(
            geometry=scenario.geometry,
            pairs=scenario.pairs,
            range_model=scenario.range_model,
            velocity_model=scenario.velocity_model,
            priors=((k0, n0, extra),),
        )
        j_aug = assemble_position_efim(aug)
        after = [speb(j_aug, k, n) for (k, n) in j.coords]
        assert all(a <= b * (1 + 1e-9) + 1e-12 for a, b in zip(after, before))


# ---------------------------------------------------------------------------
# Bayesian assembly with parameter chains


def test_bayesian_mobility_only_rank_deficiency():
    na, t = 2, 3
    out = bayesian_efim(na, t, mobility=MobilityModel(np.eye(2)))
    total = out.total
    assert not out.temporal.any() and not out.spatial.any()
    w = np.linalg.eigvalsh(total.matrix)
    assert (np.abs(w) < 1e-10).sum() == 2 * na


def test_bayesian_additivity_and_psd_parts():
    rng = np.random.default_rng(45)
    na, t = 2, 3
    intra = {}
    for k in range(na):
        blocks, _, _, _ = random_chain(rng, steps=t, state_dim=2)
        intra[k] = ChainBlocks(**blocks)
    pair = {}
    blocks, _, _, _ = random_chain(rng, steps=t, state_dim=2)
    pair[(0, 1)] = ChainBlocks(**blocks)
    out = bayesian_efim(na, t, mobility=MobilityModel(np.eye(2)), intra_chains=intra, pair_chains=pair)
    np.testing.assert_allclose(
        out.total.matrix, out.mobility + out.temporal + out.spatial, atol=1e-12
    )
    for part in (out.mobility, out.temporal, out.spatial):
        assert np.linalg.eigvalsh(part).min() > -1e-9
        np.testing.assert_allclose(part, part.T, atol=1e-12)


def test_bayesian_intra_chain_matches_dense_oracle():
    rng = np.random.default_rng(46)
    na, t = 1, 3
    blocks, dense_chain, s_slices, n_slices = random_chain(rng, steps=t, state_dim=2)
    chain = ChainBlocks(**blocks)
    mobility = MobilityModel(0.5 * np.eye(2))
    # dense oracle: chain matrix plus the mobility stripe on the state side
    dense = dense_chain_matrix_with_mobility(dense_chain, s_slices, mobility, t)
    state_idx = np.concatenate([np.arange(s.start, s.stop) for s in s_slices])
    nuis_idx = np.concatenate([np.arange(s.start, s.stop) for s in n_slices])
    a = dense[np.ix_(state_idx, state_idx)]
    b = dense[np.ix_(state_idx, nuis_idx)]
    c = dense[np.ix_(nuis_idx, nuis_idx)]
    oracle = a - b @ np.linalg.inv(c) @ b.T
    ours = bayesian_efim(na, t, mobility=mobility, intra_chains={0: chain}).total
    assert rel_frobenius(ours.matrix, oracle) < 1e-9


def dense_chain_matrix_with_mobility(dense_chain, s_slices, mobility, t):
    dense = dense_chain.copy()
    for n, m, blk in mobility_blocks(mobility, t):
        rn, rm = s_slices[n], s_slices[m]
        dense[rn, rm] += blk
        if n != m:
            dense[rm, rn] += blk.T
    return dense


def test_bayesian_zero_cross_collapses_to_independent_params():
    # Chains whose nuisances have no dynamics reduce step by step; the result
    # must match the independent-parameter assembly fed the same reductions.
    sigma_range, sigma_bias = 0.5, 0.4
    paths = np.array(
        [
            [[0.0, 0.0], [1.0, 0.5]],
            [[4.0, 0.0], [4.5, 1.0]],
            [[2.0, 5.0], [2.0, 5.0]],
        ]
    )
    geom = ScenarioGeometry(paths, num_agents=2)
    pairs = full_pairs(geom)
    t = 2
    info = 1.0 / sigma_range**2
    prior = 1.0 / sigma_bias**2

    pair_chains = {}
    for k, j in pairs[0]:
        state_direct, cross_same, nuis_diag = [], [], []
        for n in range(t):
            u = paths[j, n] - paths[k, n]
            u = u / np.linalg.norm(u)
            state_direct.append(info * np.outer(u, u))
            cross_same.append(info * u[:, None])
            nuis_diag.append(np.array([[info + prior]]))
        pair_chains[(k, j)] = ChainBlocks(
            state_direct=tuple(state_direct),
            nuis_diag=tuple(nuis_diag),
            nuis_offdiag=(np.zeros((1, 1)),),
            cross_same=tuple(cross_same),
            cross_next=(np.zeros((2, 1)),),
        )
    out = bayesian_efim(2, t, pair_chains=pair_chains)

    scenario = Scenario(
        geometry=geom,
        pairs=pairs,
        range_model=RangeModel(sigma_range=sigma_range, sigma_bias=sigma_bias),
    )
    expect = independent_params_efim(scenario)
    assert rel_frobenius(out.total.matrix, expect.matrix) < 1e-10
    # no nuisance dynamics: strictly time-block-diagonal
    assert not out.total.matrix[:4, 4:].any()


# ---------------------------------------------------------------------------
# independent-parameter assembly


def test_independent_params_no_nuisance_reduces_to_assembler():
    scenario = simple_scenario(seed=47, num_agents=2, num_anchors=2, num_steps=2)
    spatial_only = Scenario(
        geometry=scenario.geometry,
        pairs=scenario.pairs,
        range_model=RangeModel(sigma_range=0.5),  # no bias: raw likelihood
    )
    direct = Scenario(
        geometry=scenario.geometry,
        pairs=scenario.pairs,
        range_model=RangeModel(intensity=4.0),
    )
    np.testing.assert_allclose(
        independent_params_efim(spatial_only).matrix,
        assemble_position_efim(direct).matrix,
        rtol=1e-12,
    )


def test_independent_params_bias_prior_intensity():
    paths = np.array([[[0.0, 0.0]], [[2.0, 0.0]]])
    geom = ScenarioGeometry(paths, num_agents=1)
    scenario = Scenario(
        geometry=geom,
        pairs=(((0, 1),),),
        range_model=RangeModel(sigma_range=0.4, sigma_bias=0.3),
    )
    j = independent_params_efim(scenario)
    np.testing.assert_allclose(j.matrix, 4.0 * r_dir(0.0), rtol=1e-12)


def test_independent_params_unobservable_bias():
    paths = np.array([[[0.0, 0.0]], [[2.0, 0.0]]])
    geom = ScenarioGeometry(paths, num_agents=1)
    scenario = Scenario(
        geometry=geom,
        pairs=(((0, 1),),),
        range_model=RangeModel(sigma_range=0.4, sigma_bias=math.inf),
    )
    np.testing.assert_allclose(
        independent_params_efim(scenario).matrix, 0.0, atol=1e-12
    )


def test_independent_params_rejects_velocity():
    scenario = simple_scenario(seed=48)
    with pytest.raises(ValueError, match="consecutive steps"):
        independent_params_efim(scenario)


def test_independent_params_state_info_and_mobility():
    paths = np.zeros((1, 2, 2))
    paths[0, 1] = [1.0, 0.0]
    geom = ScenarioGeometry(paths, num_agents=1)
    scenario = Scenario(
        geometry=geom, pairs=((), ()), mobility=MobilityModel(np.eye(2))
    )
    state_info = {(0, 0): 3.0 * np.eye(2)}
    j = independent_params_efim(scenario, state_info=state_info)
    expect = np.zeros((4, 4))
    expect[:2, :2] = 3.0 * np.eye(2) + np.eye(2)
    expect[2:, 2:] = np.eye(2)
    expect[:2, 2:] = expect[2:, :2] = -np.eye(2)
    np.testing.assert_allclose(j.matrix, expect)


# ---------------------------------------------------------------------------
# anchors vs pinned agents


def test_anchor_equivalence_small():
    for trial in range(5):
        na, nb, t = 3, 2, 2
        scenario = simple_scenario(
            seed=100 + trial, num_agents=na, num_anchors=nb, num_steps=t
        )
        pinned = Scenario(
            geometry=scenario.geometry,
            pairs=scenario.pairs,
            range_model=scenario.range_model,
            velocity_model=scenario.velocity_model,
            priors=tuple((na - 1, n, 1e12 * np.eye(2)) for n in range(t)),
        )
        as_anchor = Scenario(
            geometry=ScenarioGeometry(scenario.geometry.paths, na - 1),
            # pairs of the converted node keep their agent side only
            pairs=tuple(
                tuple(p for p in step if p[0] < na - 1) for step in scenario.pairs
            ),
            range_model=scenario.range_model,
            velocity_model=scenario.velocity_model,
        )
        j_pinned = assemble_position_efim(pinned)
        j_anchor = assemble_position_efim(as_anchor)
        for k in range(na - 1):
            for n in range(t):
                a = speb(j_pinned, k, n)
                b = speb(j_anchor, k, n)
                assert abs(a - b) <= 1e-4 * abs(b)


# ---------------------------------------------------------------------------
# step helpers


def test_assemble_argument_validation():
    scenario = simple_scenario(seed=52, num_agents=2, num_anchors=1, num_steps=2)
    with pytest.raises(ValueError, match="start_step"):
        assemble_position_efim(scenario, start_step=2)
    with pytest.raises(ValueError, match="carry"):
        assemble_position_efim(scenario, carry=np.eye(2))


def test_marginal_rejects_unknown_coordinates():
    scenario = simple_scenario(seed=53, num_agents=1, num_anchors=1, num_steps=2)
    j = assemble_position_efim(scenario)
    with pytest.raises(ValueError, match="unknown coordinates"):
        marginal_efim(j, [(7, 0)])


def test_individual_efims_match_inverse_blocks():
    rng = np.random.default_rng(50)
    from oracles import random_spd

    total = random_spd(rng, 6)
    inv = np.linalg.inv(total)
    outs = individual_efims(total)
    for k in range(3):
        blk = inv[2 * k : 2 * k + 2, 2 * k : 2 * k + 2]
        np.testing.assert_allclose(outs[k], np.linalg.inv(blk), rtol=1e-9)


def test_spatial_step_matrix_consistent_with_assembler():
    scenario = simple_scenario(seed=51, num_agents=2, num_anchors=1, num_steps=1)
    j = assemble_position_efim(scenario)
    np.testing.assert_allclose(spatial_step_matrix(scenario, 0), j.matrix)
