import math

import numpy as np
import pytest

from conftest import random_dist_pair
from dcpkit.divergence import DistPair, hockey_stick, optimal_epsilon
from dcpkit.model import MechanismKernel, World, default_adjacency
from dcpkit.pld import (
    Pld,
    convolve,
    decompose_plrv,
    epsilon_for_delta,
    pld_from_pair,
    privacy_profile,
    read_pld_csv,
    write_pld_csv,
)

RR = DistPair(np.array([0.75, 0.25]), np.array([0.25, 0.75]))


def test_pld_from_identical_pair():
    pld = pld_from_pair(DistPair(np.array([0.3, 0.7]), np.array([0.3, 0.7])))
    assert pld.losses.size == 1
    assert pld.losses[0] == 0.0 and pld.masses[0] == pytest.approx(1.0)
    assert pld.inf_mass == 0.0


def test_pld_from_rr_pair():
    pld = pld_from_pair(RR)
    assert np.allclose(pld.losses, [-math.log(3), math.log(3)])
    assert np.allclose(pld.masses, [0.25, 0.75])


def test_pld_with_infinity_atom():
    pld = pld_from_pair(DistPair(np.array([0.5, 0.5]), np.array([1.0, 0.0])))
    assert np.allclose(pld.losses, [-math.log(2)])
    assert np.allclose(pld.masses, [0.5])
    assert pld.inf_mass == pytest.approx(0.5)


def test_convolve_point_masses():
    a = Pld.point(1.5)
    b = Pld.point(-0.5)
    c = convolve(a, b)
    assert np.allclose(c.losses, [1.0]) and np.allclose(c.masses, [1.0])


def test_convolve_identity_element():
    pld = pld_from_pair(RR)
    out = convolve(pld, Pld.point(0.0))
    assert np.allclose(out.losses, pld.losses)
    assert np.allclose(out.masses, pld.masses)


def test_convolve_rr_with_itself():
    # oracle: 4-term expansion of the two-atom distribution
    out = convolve(pld_from_pair(RR), pld_from_pair(RR))
    l3 = math.log(3)
    assert np.allclose(out.losses, [-2 * l3, 0.0, 2 * l3])
    assert np.allclose(out.masses, [0.0625, 0.375, 0.5625])


def test_convolve_commutative_associative():
    rng = np.random.default_rng(21)
    for _ in range(20):
        plds = [pld_from_pair(DistPair(*random_dist_pair(rng, 6))) for _ in range(3)]
        a, b, c = plds
        ab = convolve(a, b)
        ba = convolve(b, a)
        assert np.allclose(ab.losses, ba.losses, atol=1e-12)
        assert np.allclose(ab.masses, ba.masses, atol=1e-12)
        left = convolve(ab, c)
        right = convolve(a, convolve(b, c))
        for eps in (0.0, 0.5, 1.0):
            assert privacy_profile(left, eps) == pytest.approx(
                privacy_profile(right, eps), abs=1e-12
            )


def test_privacy_profile_examples():
    assert privacy_profile(Pld.point(0.0), 0.0) == 0.0
    assert privacy_profile(pld_from_pair(RR), 0.0) == pytest.approx(0.5, abs=1e-15)
    heavy = Pld(losses=np.array([-1.0, 0.5]), masses=np.array([0.3, 0.4]), inf_mass=0.3)
    assert privacy_profile(heavy, 2.0) == pytest.approx(0.3)


def test_profile_matches_hockey_stick():
    rng = np.random.default_rng(22)
    for _ in range(200):
        p, q = random_dist_pair(rng)
        pair = DistPair(p, q)
        pld = pld_from_pair(pair)
        for eps in (0.0, 0.5, 1.0, 2.0):
            assert abs(privacy_profile(pld, eps) - hockey_stick(pair, eps)) <= 1e-12


def test_epsilon_for_delta_matches_direct_route():
    rng = np.random.default_rng(23)
    for _ in range(100):
        p, q = random_dist_pair(rng)
        pair = DistPair(p, q)
        delta = float(rng.uniform(0, 0.4))
        via_pld = epsilon_for_delta(pld_from_pair(pair), delta)
        direct = optimal_epsilon(pair, delta)
        if math.isinf(direct):
            assert math.isinf(via_pld)
        else:
            assert via_pld == pytest.approx(direct, abs=1e-12)


def test_convolution_equals_product_law_on_invertible_world():
    # independent mechanisms on an invertible world: the convolved loss
    # profile equals the composed joint's divergence at every eps
    from dcpkit.composition import composed_joint
    from dcpkit.model import effective_kernel

    world = _world([[0.5, 0.0], [0.0, 0.5]])
    rng = np.random.default_rng(26)
    mechs = [
        MechanismKernel(f"m{i}", ("0", "1", "2"), rng.dirichlet(np.ones(3), size=2))
        for i in range(3)
    ]
    effs = [effective_kernel(world, m) for m in mechs]
    pld = pld_from_pair(DistPair(*effs[0].pair(0, 1)))
    for eff in effs[1:]:
        pld = convolve(pld, pld_from_pair(DistPair(*eff.pair(0, 1))))
    cj = composed_joint(world, mechs, [])
    for eps in (0.0, 0.3, 0.8, 1.5):
        assert privacy_profile(pld, eps) == pytest.approx(
            hockey_stick(cj.pair(0, 1), eps), abs=1e-12
        )


def test_negative_infinity_atoms_are_inert():
    pld = Pld(losses=np.array([-np.inf, 1.0]), masses=np.array([0.25, 0.75]))
    assert privacy_profile(pld, 0.0) == pytest.approx(0.75 * (1 - math.exp(-1.0)))


def test_csv_round_trip(tmp_path):
    pld = pld_from_pair(DistPair(np.array([0.5, 0.4, 0.1]), np.array([0.2, 0.8, 0.0])))
    path = tmp_path / "pld.csv"
    write_pld_csv(pld, path)
    back = read_pld_csv(path)
    assert np.array_equal(back.losses, pld.losses)
    assert np.array_equal(back.masses, pld.masses)
    assert back.inf_mass == pld.inf_mass


def _world(joint):
    joint = np.asarray(joint, dtype=float)
    return World(
        tuple(f"s{i}" for i in range(joint.shape[0])),
        tuple(f"x{j}" for j in range(joint.shape[1])),
        joint,
        default_adjacency(joint),
    )


def test_decomposition_invertible_world(rr_mechanism):
    world = _world([[0.5, 0.0], [0.0, 0.5]])
    dec = decompose_plrv(world, [rr_mechanism, rr_mechanism], [], 0, 1)
    fin = dec.finite
    assert np.abs(dec.world_term[fin]).max() <= 1e-12
    assert np.abs(dec.dependence_term[fin]).max() == 0.0


def test_decomposition_single_mechanism(rr_mechanism, mixing_world_2x2):
    dec = decompose_plrv(mixing_world_2x2, [rr_mechanism], [], 0, 1)
    fin = dec.finite
    assert np.abs(dec.total[fin] - dec.independent_term[fin]).max() <= 1e-12
    assert np.abs(dec.world_term[fin]).max() <= 1e-12


def test_decomposition_mixing_world_nonzero(rr_mechanism, mixing_world_2x2):
    dec = decompose_plrv(mixing_world_2x2, [rr_mechanism, rr_mechanism], [], 0, 1)
    fin = dec.finite
    assert np.abs(dec.world_term[fin]).max() > 1e-3
    # brute-force comparison: world term equals joint-vs-product log ratio
    from dcpkit.composition import composed_joint, product_pair

    cj = composed_joint(mixing_world_2x2, [rr_mechanism, rr_mechanism], [])
    prod0 = product_pair(mixing_world_2x2, [rr_mechanism, rr_mechanism], 0, 0).p
    prod1 = product_pair(mixing_world_2x2, [rr_mechanism, rr_mechanism], 1, 1).p
    expect = np.log(cj.rows(0) / prod0) - np.log(cj.rows(1) / prod1)
    assert np.allclose(dec.world_term, expect, atol=1e-12)


def test_decomposition_pointwise_identity():
    rng = np.random.default_rng(24)
    for _ in range(20):
        ns, nx = 2, int(rng.integers(2, 4))
        joint = rng.dirichlet(np.ones(ns * nx)).reshape(ns, nx)
        world = _world(joint)
        mechs = [
            MechanismKernel(f"m{i}", ("0", "1"), rng.dirichlet(np.ones(2), size=nx))
            for i in range(2)
        ]
        dec = decompose_plrv(world, mechs, [], 0, 1)
        fin = dec.finite
        lhs = dec.total[fin]
        rhs = (dec.world_term + dec.dependence_term + dec.independent_term)[fin]
        assert np.abs(lhs - rhs).max() <= 1e-9


def test_decomposition_with_dependence_group():
    world = _world([[0.4, 0.1], [0.1, 0.4]])
    kernel = np.array([[0.9, 0.1], [0.2, 0.8]])
    mechs = [MechanismKernel("a", ("0", "1"), kernel), MechanismKernel("b", ("0", "1"), kernel)]
    from dcpkit.model import DependenceGroup

    group = DependenceGroup(members=(0, 1), joint_kernel=np.array(
        [[0.9, 0.0, 0.0, 0.1], [0.2, 0.0, 0.0, 0.8]]))
    dec = decompose_plrv(world, mechs, [group], 0, 1)
    fin = dec.finite
    assert np.abs(dec.dependence_term[fin]).max() > 0.1
    identity_gap = np.abs(
        dec.total[fin]
        - (dec.world_term + dec.dependence_term + dec.independent_term)[fin]
    ).max()
    assert identity_gap <= 1e-9


def test_decomposition_requires_adjacent_pair(invertible_world, rr_mechanism):
    world = World(
        invertible_world.secrets, invertible_world.datasets, invertible_world.joint,
        frozenset({(0, 1), (1, 0)}),
    )
    with pytest.raises(ValueError, match="adjacent"):
        decompose_plrv(world, [rr_mechanism], [], 0, 0)
