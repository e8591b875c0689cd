"""Seeded desk-scale experiment runners.

Two experiment shapes: budget filling with an added independent
secret channel, and budget filling through a calibrated Gaussian-copula
coupling of two noise mechanisms.  Each grid point calibrates every
mechanism tightly, attempts the inverse-composition design, fills the
remaining budget subject to the direct divergence check, and audits the
result against a single mechanism calibrated to the same budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ic
from .audit import roc_bound_check, worst_pair_roc
from .composition import composed_joint
from .copula import GaussianCopulaSpec, LaplaceMarginal, coupled_block_law
from .divergence import DistPair, hockey_stick, optimal_epsilon
from .model import World, effective_kernel
from .synth import (
    binned_laplace_kernel,
    calibrate_alpha_fill,
    calibrate_gaussian_mechanism,
    mixing_world,
)

INDEPENDENT_EPS_G = (0.25, 0.5, 1.5, 3.0, 5.0)
INDEPENDENT_EPS_I = (0.05, 0.1, 0.3, 0.6, 1.0)
COPULA_EPS_G = (0.4, 0.6, 1.0, 2.0, 4.0, 6.0)
COPULA_EPS_I = (0.05, 0.1, 0.18, 0.3, 0.6, 1.0)
DEFAULT_DELTA = 0.02
DEFAULT_RHO = 0.5

# query patterns over the four synthetic datasets; every pattern separates
# the first two datasets, which dominate the two secrets at small mixing
_QUERY_MAPS = (
    (0.0, 1.0, 0.0, 1.0),
    (0.0, 1.0, 1.0, 0.0),
    (0.0, 0.5, 1.0, 0.25),
    (0.0, 1.0, 0.25, 0.75),
)


@dataclass(frozen=True)
class ExperimentRow:
    eps_g: float
    eps_i: float
    delta_g: float
    auc_composed: float
    auc_single: float
    gap: float
    ic_flag: str
    fill_parameter: float
    composed_delta: float
    single_delta: float
    roc_violation_composed: float
    roc_violation_single: float


@dataclass(frozen=True)
class ExperimentResult:
    name: str
    seed: int
    rows: list = field(default_factory=list)


def _single_setup(world: World, eps_g: float, delta_g: float, bins: int = 33) -> np.ndarray:
    """One Gaussian query mechanism calibrated tight at the full budget."""
    mech = calibrate_gaussian_mechanism(world, _QUERY_MAPS[3], eps_g, delta_g, bins=bins, name="single")
    return effective_kernel(world, mech).matrix


def _ic_attempt(world, mechs, eps_g, delta_g, seed) -> str:
    """Run the design solver when the constraint set can be nonempty."""
    tau_g = ic.tau_of_epsilon(eps_g, world)
    if not ic.pi_set_nonempty(tau_g, delta_g):
        return "pi-empty"
    problem = ic.IcProblem(
        world=world, mechs=mechs, delta_g=delta_g, tau_g=tau_g,
        alpha_size=3, outer_rounds=4, max_inner=80, seed=seed,
    )
    sol = ic.solve_task1(problem)
    return "certified" if sol.certified else "uncertified"


def run_independent_experiment(
    seed: int = 0,
    eps_gs=INDEPENDENT_EPS_G,
    eps_is=INDEPENDENT_EPS_I,
    delta: float = DEFAULT_DELTA,
    lam: float = 0.005,
    mech_bins: int = 7,
    alpha_bins: int = 9,
) -> ExperimentResult:
    """Four calibrated noise mechanisms plus an added secret channel that
    fills the remaining budget under the direct check."""
    if len(eps_gs) != len(eps_is):
        raise ValueError("eps_g and eps_i grids must have equal length")
    world = mixing_world(lam)
    rows = []
    for j, (eps_g, eps_i) in enumerate(zip(eps_gs, eps_is)):
        mechs = [
            calibrate_gaussian_mechanism(world, fmap, eps_i, delta, bins=mech_bins, name=f"m{i}")
            for i, fmap in enumerate(_QUERY_MAPS)
        ]
        base_law = composed_joint(world, mechs).matrix
        flag = _ic_attempt(world, mechs, eps_g, delta, seed + j)
        alpha, sigma = calibrate_alpha_fill(
            world, base_law, eta=(0.0, 1.0), eps_g=eps_g, delta_g=delta, bins=alpha_bins
        )
        if math.isinf(sigma):
            law = base_law
            flag = flag + "+fill-infeasible"
        else:
            law = np.einsum("sy,sa->sya", base_law, alpha).reshape(base_law.shape[0], -1)
        rows.append(_audit_row(world, law, eps_g, eps_i, delta, flag, sigma))
    return ExperimentResult(name="independent", seed=seed, rows=rows)


def run_copula_experiment(
    seed: int = 0,
    eps_gs=COPULA_EPS_G,
    eps_is=COPULA_EPS_I,
    delta: float = DEFAULT_DELTA,
    rho: float = DEFAULT_RHO,
    lam: float = 0.005,
    block_bins: int = 17,
    mech_bins: int = 7,
) -> ExperimentResult:
    """Two Laplace queries coupled by a calibrated Gaussian copula, three
    further calibrated noise mechanisms, audited against a single one."""
    if len(eps_gs) != len(eps_is):
        raise ValueError("eps_g and eps_i grids must have equal length")
    world = mixing_world(lam)
    w = 2.0 * math.log(2.0 / delta)
    eta = {world.secrets[0]: 0.0, world.secrets[1]: 1.0}
    rows = []
    for j, (eps_g, eps_i) in enumerate(zip(eps_gs, eps_is)):
        f1, f2 = _QUERY_MAPS[0], _QUERY_MAPS[1]
        scale1 = _calibrate_laplace_scale(world, f1, eps_i, delta, mech_bins * 3)
        scale2 = _calibrate_laplace_scale(world, f2, eps_i, delta, mech_bins * 3)
        others = [
            calibrate_gaussian_mechanism(world, fmap, eps_i, delta, bins=mech_bins, name=f"m{i}")
            for i, fmap in enumerate(_QUERY_MAPS[2:])
        ]
        rest_law = composed_joint(world, others).matrix

        def law_at(eps_c):
            spec = GaussianCopulaSpec(
                rho=rho, eta=eta, eps_c=eps_c, delta_c=delta, w=w,
                xi1=LaplaceMarginal(scale1), xi2=LaplaceMarginal(scale2),
                adjacency_labels=frozenset(
                    (world.secrets[a], world.secrets[b]) for (a, b) in world.adjacency
                ),
            )
            block, _, _ = coupled_block_law(spec, world, (f1, f2), bins=block_bins)
            return np.einsum("sb,sy->sby", block, rest_law).reshape(len(world.secrets), -1)

        def achieved(eps_c):
            law = law_at(eps_c)
            return max(
                hockey_stick(DistPair(law[s0], law[s1]), eps_g)
                for (s0, s1) in sorted(world.adjacency)
            )

        lo, hi = 1e-4, 64.0
        if achieved(lo) > delta:
            law, eps_c, flag = law_at(lo), math.inf, "fill-infeasible"
        else:
            if achieved(hi) <= delta:
                lo = hi
            else:
                for _ in range(60):
                    mid = math.sqrt(lo * hi)
                    if achieved(mid) > delta:
                        hi = mid
                    else:
                        lo = mid
                    if hi / lo < 1.0 + 1e-9:
                        break
            eps_c, law, flag = lo, law_at(lo), "coupling-filled"
        rows.append(_audit_row(world, law, eps_g, eps_i, delta, flag, eps_c))
    return ExperimentResult(name="copula", seed=seed, rows=rows)


def _calibrate_laplace_scale(world, values, eps_target, delta, bins) -> float:
    lo, hi = 1e-3, 1e4

    def tight(scale):
        mech = binned_laplace_kernel(values, scale, bins)
        eff = effective_kernel(world, mech)
        return max(
            optimal_epsilon(DistPair(*eff.pair(s0, s1)), delta)
            for (s0, s1) in sorted(world.adjacency)
        )

    for _ in range(80):
        mid = math.sqrt(lo * hi)
        if tight(mid) > eps_target:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-12:
            break
    return hi


def _audit_row(world, law, eps_g, eps_i, delta, flag, fill_param) -> ExperimentRow:
    single = _single_setup(world, eps_g, delta)
    pairs = sorted(world.adjacency)
    d_comp = max(hockey_stick(DistPair(law[a], law[b]), eps_g) for (a, b) in pairs)
    d_single = max(hockey_stick(DistPair(single[a], single[b]), eps_g) for (a, b) in pairs)
    roc_c, _ = worst_pair_roc(world, law)
    roc_s, _ = worst_pair_roc(world, single)
    return ExperimentRow(
        eps_g=eps_g,
        eps_i=eps_i,
        delta_g=delta,
        auc_composed=roc_c.auc,
        auc_single=roc_s.auc,
        gap=roc_c.auc - roc_s.auc,
        ic_flag=flag,
        fill_parameter=fill_param,
        composed_delta=d_comp,
        single_delta=d_single,
        roc_violation_composed=roc_bound_check(roc_c, eps_g, delta),
        roc_violation_single=roc_bound_check(roc_s, eps_g, delta),
    )
