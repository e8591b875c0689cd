import math

import numpy as np
import pytest

from conftest import random_dist_pair
from dcpkit.divergence import (
    DistPair,
    check_dcp,
    hockey_stick,
    optimal_epsilon,
    total_variation,
    tradeoff_curve,
)
from dcpkit.model import MechanismKernel, World, default_adjacency

RR = DistPair(np.array([0.75, 0.25]), np.array([0.25, 0.75]))


def brute_force_hockey_stick(p, q, eps):
    # oracle: explicit sup over all subsets
    n = len(p)
    best = 0.0
    for mask in range(1 << n):
        pw = sum(p[i] for i in range(n) if mask >> i & 1)
        qw = sum(q[i] for i in range(n) if mask >> i & 1)
        best = max(best, pw - math.exp(eps) * qw)
    return best


def test_hockey_stick_identical():
    pair = DistPair(np.array([0.3, 0.7]), np.array([0.3, 0.7]))
    assert hockey_stick(pair, 0.0) == 0.0
    assert hockey_stick(pair, 2.0) == 0.0


def test_hockey_stick_disjoint():
    pair = DistPair(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert hockey_stick(pair, 5.0) == 1.0


def test_hockey_stick_rr_at_ln3():
    # oracle: per-outcome sum max(p - 3q, 0) = max(0.75-0.75,0) + 0
    assert hockey_stick(RR, math.log(3)) == pytest.approx(0.0, abs=1e-15)


def test_hockey_stick_matches_subset_sup():
    rng = np.random.default_rng(11)
    for _ in range(40):
        p, q = random_dist_pair(rng, max_outcomes=8)
        eps = rng.uniform(0, 2)
        pair = DistPair(p, q)
        assert hockey_stick(pair, eps) == pytest.approx(
            brute_force_hockey_stick(p, q, eps), abs=1e-12
        )


def test_hockey_stick_monotone_and_tv():
    rng = np.random.default_rng(12)
    for _ in range(40):
        p, q = random_dist_pair(rng)
        pair = DistPair(p, q)
        vals = [hockey_stick(pair, e) for e in (0.0, 0.5, 1.0, 2.0)]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
        tv = 0.5 * np.abs(pair.p - pair.q).sum()
        assert abs(total_variation(pair) - tv) <= 1e-12


def test_optimal_epsilon_zero_when_delta_covers_tv():
    assert optimal_epsilon(RR, 0.5) == 0.0
    assert optimal_epsilon(RR, 0.7) == 0.0


def test_optimal_epsilon_rr_delta_zero():
    assert optimal_epsilon(RR, 0.0) == pytest.approx(math.log(3), abs=1e-12)


def test_optimal_epsilon_unachievable_atom():
    pair = DistPair(np.array([0.1, 0.9, 0.0]), np.array([0.0, 0.5, 0.5]))
    assert optimal_epsilon(pair, 0.05) == math.inf
    assert math.isfinite(optimal_epsilon(pair, 0.1))


def test_optimal_epsilon_round_trip():
    rng = np.random.default_rng(13)
    for _ in range(200):
        p, q = random_dist_pair(rng)
        pair = DistPair(p, q)
        delta = float(rng.uniform(0, 0.5))
        eps = optimal_epsilon(pair, delta)
        if math.isinf(eps):
            inf_mass = pair.p[pair.q == 0].sum()
            assert inf_mass > delta
            continue
        assert hockey_stick(pair, eps) <= delta + 1e-12
        if eps > 0:
            assert hockey_stick(pair, eps - 1e-9) > delta


def test_optimal_epsilon_rejects_bad_delta():
    with pytest.raises(ValueError):
        optimal_epsilon(RR, 1.5)


def test_optimal_epsilon_at_breakpoint_values():
    # delta exactly equal to the profile at a breakpoint: the solve lands
    # on the breakpoint itself
    pair = DistPair(np.array([0.5, 0.3, 0.2]), np.array([0.1, 0.3, 0.6]))
    losses = np.log(pair.p / pair.q)
    top = float(losses.max())
    delta_at_top = hockey_stick(pair, top)
    assert optimal_epsilon(pair, delta_at_top) == pytest.approx(top, abs=1e-12)


def test_optimal_epsilon_duplicate_losses_merge():
    # two outcomes with identical ratios behave as one atom
    pair = DistPair(np.array([0.3, 0.3, 0.4]), np.array([0.1, 0.1, 0.8]))
    merged = DistPair(np.array([0.6, 0.4]), np.array([0.2, 0.8]))
    for delta in (0.0, 0.05, 0.2):
        assert optimal_epsilon(pair, delta) == pytest.approx(
            optimal_epsilon(merged, delta), abs=1e-12
        )


def test_optimal_epsilon_inf_mass_exactly_delta():
    # the unabsorbable atom exactly equals delta: the remaining atoms still
    # force a finite epsilon at the largest finite loss
    pair = DistPair(np.array([0.1, 0.6, 0.3]), np.array([0.0, 0.3, 0.7]))
    eps = optimal_epsilon(pair, 0.1)
    assert eps == pytest.approx(math.log(0.6 / 0.3), abs=1e-12)
    assert hockey_stick(pair, eps) <= 0.1 + 1e-15


def test_check_dcp(invertible_world, rr_mechanism):
    ident = MechanismKernel("id", ("0", "1"), np.eye(2))
    rep = check_dcp(invertible_world, ident, 0.0, 1.0)
    assert rep.holds  # delta = 1 always holds

    rep = check_dcp(invertible_world, rr_mechanism, math.log(3), 0.0)
    assert rep.holds and rep.worst_delta <= 1e-15

    rep = check_dcp(invertible_world, rr_mechanism, 1.0, 0.0)
    assert not rep.holds
    # oracle: hockey stick of the RR pair at eps=1
    assert rep.worst_delta == pytest.approx(0.75 - math.e * 0.25, abs=1e-12)


def test_check_dcp_empty_adjacency(rr_mechanism):
    joint = np.array([[0.5, 0.0], [0.0, 0.5]])
    world = World(("a", "b"), ("x", "y"), joint, frozenset())
    with pytest.raises(ValueError, match="nothing to certify"):
        check_dcp(world, rr_mechanism, 1.0, 0.1)


def test_tradeoff_curve_diagonal():
    pair = DistPair(np.array([0.4, 0.6]), np.array([0.4, 0.6]))
    curve = tradeoff_curve(pair)
    assert np.allclose(curve.alphas, [0.0, 1.0])
    assert np.allclose(curve.betas, [1.0, 0.0])
    assert curve.beta(0.3) == pytest.approx(0.7)


def test_tradeoff_curve_disjoint():
    pair = DistPair(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    curve = tradeoff_curve(pair)
    assert curve.beta(0.5) == 0.0
    assert curve.beta(1e-9) <= 1.0 - 1e-9 + 1e-12


def test_tradeoff_curve_rr_vertices():
    curve = tradeoff_curve(RR)
    assert np.allclose(curve.alphas, [0.0, 0.25, 1.0])
    assert np.allclose(curve.betas, [1.0, 0.25, 0.0])


def test_tradeoff_curve_convex_below_diagonal():
    rng = np.random.default_rng(14)
    for _ in range(60):
        p, q = random_dist_pair(rng)
        curve = tradeoff_curve(DistPair(p, q))
        assert np.all(curve.betas <= 1.0 - curve.alphas + 1e-12)
        slopes = np.diff(curve.betas) / np.diff(curve.alphas)
        assert np.all(np.diff(slopes) >= -1e-9)  # convex
        assert curve.alphas[0] == 0.0 and curve.alphas[-1] == 1.0
        assert np.all(np.diff(curve.alphas) > 0)
        assert np.all(np.diff(curve.betas) <= 1e-15)
