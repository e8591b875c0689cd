"""Exact (epsilon, delta) computations between finite distributions.

Everything here works directly on probability vectors: the hockey-stick
divergence, its inversion to the smallest feasible epsilon, certification of
a mechanism against a world's adjacency, and Neyman-Pearson trade-off
curves.  The privacy-loss-distribution route in ``dcpkit.pld`` computes the
same quantities through loss atoms; the two routes stay independent so each
can serve as the other's oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import PROB_ATOL
from .model import MechanismKernel, World, effective_kernel


@dataclass(frozen=True)
class DistPair:
    """Two probability vectors over a shared finite outcome alphabet."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != q.shape or p.ndim != 1:
            raise ValueError(f"p and q must be equal-length vectors, got {p.shape} and {q.shape}")
        for name, v in (("p", p), ("q", q)):
            if np.any(v < -PROB_ATOL):
                raise ValueError(f"{name} has a negative entry: {v.min()}")
            if abs(v.sum() - 1.0) > PROB_ATOL:
                raise ValueError(f"{name} sums to {v.sum()}, not 1")
        p = np.clip(p, 0.0, None)
        q = np.clip(q, 0.0, None)
        # outcomes carrying no mass on either side are dropped up front
        live = (p > 0.0) | (q > 0.0)
        object.__setattr__(self, "p", p[live])
        object.__setattr__(self, "q", q[live])


def hockey_stick(pair: DistPair, eps: float) -> float:
    """Sum of (p - e^eps q)+ over outcomes; the delta achieved at this eps."""
    if not math.isfinite(eps):
        raise ValueError(f"eps must be finite, got {eps}")
    gap = pair.p - math.exp(eps) * pair.q
    return float(np.maximum(gap, 0.0).sum())


def total_variation(pair: DistPair) -> float:
    return hockey_stick(pair, 0.0)


def optimal_epsilon(pair: DistPair, delta: float) -> float:
    """Smallest eps >= 0 with hockey_stick(pair, eps) <= delta.

    Returns ``math.inf`` when no finite eps works, i.e. when the p-mass on
    outcomes with q = 0 strictly exceeds delta.  Otherwise the answer is
    found on the sorted log-ratio breakpoints by solving ``A - B e^eps =
    delta`` on the bracketing segment; no iterative search is involved.
    """
    if delta > 1.0 or delta < 0.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    p, q = pair.p, pair.q
    inf_mass = float(p[(q == 0.0) & (p > 0.0)].sum())

    both = (p > 0.0) & (q > 0.0)
    losses = np.log(p[both]) - np.log(q[both])
    masses = p[both]
    # only atoms with positive loss contribute for eps >= 0
    pos = losses > 0.0
    losses, masses = losses[pos], masses[pos]

    delta0 = inf_mass + float((masses * (1.0 - np.exp(-losses))).sum())
    if delta0 <= delta:
        return 0.0
    if inf_mass > delta:
        return math.inf

    # merge duplicate losses, sort ascending
    order = np.argsort(losses)
    losses, masses = losses[order], masses[order]
    uniq, inverse = np.unique(losses, return_inverse=True)
    umass = np.zeros_like(uniq)
    np.add.at(umass, inverse, masses)

    # profile at each breakpoint: atoms strictly above it still contribute
    strict_mass = np.concatenate([np.cumsum(umass[::-1])[::-1][1:], [0.0]])
    strict_b = np.concatenate([np.cumsum((umass * np.exp(-uniq))[::-1])[::-1][1:], [0.0]])
    delta_bp = inf_mass + strict_mass - strict_b * np.exp(uniq)

    j = int(np.searchsorted(-delta_bp, -delta))  # first breakpoint with profile <= delta
    # segment (l_{j-1}, l_j]: active atoms are those with loss >= l_j
    a = inf_mass + float(umass[j:].sum())
    b = float((umass[j:] * np.exp(-uniq[j:])).sum())
    eps = math.log((a - delta) / b)
    return float(max(eps, 0.0))


@dataclass(frozen=True)
class DcpReport:
    holds: bool
    worst_pair: tuple[int, int]
    worst_delta: float
    eps: float
    delta: float


def check_dcp(world: World, mech: MechanismKernel, eps: float, delta: float) -> DcpReport:
    """Certify one mechanism at (eps, delta) over every adjacent secret pair."""
    if not world.adjacency:
        raise ValueError("nothing to certify: world has an empty adjacency relation")
    eff = effective_kernel(world, mech)
    worst_pair, worst_delta = None, -1.0
    for (s0, s1) in sorted(world.adjacency):
        d = hockey_stick(DistPair(*eff.pair(s0, s1)), eps)
        if d > worst_delta:
            worst_pair, worst_delta = (s0, s1), d
    return DcpReport(
        holds=worst_delta <= delta + PROB_ATOL,
        worst_pair=worst_pair,
        worst_delta=worst_delta,
        eps=eps,
        delta=delta,
    )


@dataclass(frozen=True)
class TradeoffCurve:
    """Vertices of the optimal type-I/type-II error trade-off.

    ``alphas`` rise from 0 to 1, ``betas`` fall from 1 - (q-mass outside
    p's support) down to 0; randomized tests interpolate linearly between
    vertices, so the curve is the lower convex envelope.
    """

    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=float))

    def beta(self, alpha) -> np.ndarray:
        """Evaluate the curve at arbitrary type-I levels by interpolation."""
        return np.interp(alpha, self.alphas, self.betas)


def tradeoff_curve(pair: DistPair) -> TradeoffCurve:
    """Neyman-Pearson curve: reject in decreasing order of q/p, accumulate errors.

    Likelihood-ratio ties are merged into a single vertex, which makes the
    vertex list canonical; outcomes with p = 0 collapse into the alpha = 0
    vertex and outcomes with q = 0 into the final beta = 0 segment.
    """
    p, q = pair.p, pair.q
    with np.errstate(divide="ignore"):
        ratio = np.where(p > 0.0, q / np.where(p > 0.0, p, 1.0), np.inf)
    order = np.argsort(-ratio, kind="stable")
    p_sorted, q_sorted, r_sorted = p[order], q[order], ratio[order]

    alphas = [0.0]
    betas = [1.0]
    acc_a, acc_b = 0.0, 1.0
    i = 0
    n = p_sorted.size
    while i < n:
        j = i
        while j < n and r_sorted[j] == r_sorted[i]:
            j += 1
        acc_a += float(p_sorted[i:j].sum())
        acc_b -= float(q_sorted[i:j].sum())
        if acc_a > alphas[-1]:
            alphas.append(acc_a)
            betas.append(max(acc_b, 0.0))
        else:
            # zero p-mass group (infinite ratio): move the starting vertex down
            betas[-1] = max(acc_b, 0.0)
        i = j
    alphas[-1] = 1.0
    betas[-1] = 0.0
    return TradeoffCurve(alphas=np.array(alphas), betas=np.array(betas))
