"""Privacy-loss random variables and their discrete distributions.

A ``Pld`` holds finite loss atoms plus a mass at +infinity.  Construction
from a distribution pair, exact convolution, the privacy profile delta(eps),
and the copula decomposition of a composed loss variable into the
world-induced, mechanism-dependence, and independent terms all live here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import PROB_ATOL
from .divergence import DistPair
from .model import DependenceGroup, MechanismKernel, World, effective_kernel, group_effective_joint

# losses closer than this are merged into one atom (mass-weighted mean)
MERGE_ATOL = 1e-12


def _merge_atoms(losses: np.ndarray, masses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = masses > 0.0
    losses, masses = losses[keep], masses[keep]
    if losses.size == 0:
        return losses, masses
    order = np.argsort(losses)
    losses, masses = losses[order], masses[order]
    # group runs of losses within MERGE_ATOL of their predecessor
    new_group = np.empty(losses.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(losses) > MERGE_ATOL
    gid = np.cumsum(new_group) - 1
    n = gid[-1] + 1
    gmass = np.zeros(n)
    gloss = np.zeros(n)
    np.add.at(gmass, gid, masses)
    finite = np.isfinite(losses)
    # -inf atoms merge to -inf; finite atoms to their mass-weighted mean
    np.add.at(gloss, gid[finite], (losses * masses)[finite])
    with np.errstate(invalid="ignore"):
        out_loss = np.where(gmass > 0, gloss / np.where(gmass > 0, gmass, 1.0), 0.0)
    neg_inf_groups = np.zeros(n, dtype=bool)
    np.logical_or.at(neg_inf_groups, gid, ~finite)
    out_loss = np.where(neg_inf_groups, -np.inf, out_loss)
    return out_loss, gmass


@dataclass(frozen=True)
class Pld:
    """Discrete privacy-loss distribution: sorted loss atoms + mass at +inf.

    Losses of -inf (outcomes impossible under the reference measure's
    opposite side) are kept as a single sentinel atom; they contribute
    nothing to any privacy profile.
    """

    losses: np.ndarray
    masses: np.ndarray
    inf_mass: float = 0.0

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if losses.shape != masses.shape or losses.ndim != 1:
            raise ValueError("losses and masses must be equal-length vectors")
        if np.any(masses < -PROB_ATOL) or self.inf_mass < -PROB_ATOL:
            raise ValueError("negative probability mass in Pld")
        losses, masses = _merge_atoms(losses, masses)
        total = float(masses.sum()) + self.inf_mass
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"Pld total mass is {total}, not 1")
        losses.flags.writeable = False
        masses.flags.writeable = False
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "inf_mass", float(self.inf_mass))

    @staticmethod
    def point(loss: float) -> "Pld":
        return Pld(losses=np.array([loss]), masses=np.array([1.0]))


def pld_from_pair(pair: DistPair) -> Pld:
    """Loss atoms log(p/q) with mass p; p-mass where q = 0 goes to +inf."""
    p, q = pair.p, pair.q
    support = p > 0.0
    inf_mass = float(p[support & (q == 0.0)].sum())
    both = support & (q > 0.0)
    losses = np.log(p[both]) - np.log(q[both])
    return Pld(losses=losses, masses=p[both], inf_mass=inf_mass)


def convolve(a: Pld, b: Pld) -> Pld:
    """Distribution of the sum of two independent loss variables."""
    losses = np.add.outer(a.losses, b.losses).ravel()
    masses = np.multiply.outer(a.masses, b.masses).ravel()
    inf_mass = a.inf_mass + b.inf_mass - a.inf_mass * b.inf_mass
    return Pld(losses=losses, masses=masses, inf_mass=inf_mass)


def privacy_profile(pld: Pld, eps: float) -> float:
    """delta(eps) = E[(1 - e^(eps - L))+] plus the mass at +inf."""
    with np.errstate(over="ignore"):
        terms = 1.0 - np.exp(eps - pld.losses)
    return float((pld.masses * np.maximum(terms, 0.0)).sum()) + pld.inf_mass


def epsilon_for_delta(pld: Pld, delta: float) -> float:
    """Smallest eps >= 0 with privacy_profile(pld, eps) <= delta (inf if none)."""
    if delta > 1.0 or delta < 0.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    pos = pld.losses > 0.0
    losses, masses = pld.losses[pos], pld.masses[pos]
    delta0 = pld.inf_mass + float((masses * (1.0 - np.exp(-losses))).sum())
    if delta0 <= delta:
        return 0.0
    if pld.inf_mass > delta:
        return math.inf
    strict_mass = np.concatenate([np.cumsum(masses[::-1])[::-1][1:], [0.0]])
    strict_b = np.concatenate([np.cumsum((masses * np.exp(-losses))[::-1])[::-1][1:], [0.0]])
    delta_bp = pld.inf_mass + strict_mass - strict_b * np.exp(losses)
    j = int(np.searchsorted(-delta_bp, -delta))
    a = pld.inf_mass + float(masses[j:].sum())
    b = float((masses[j:] * np.exp(-losses[j:])).sum())
    return float(max(math.log((a - delta) / b), 0.0))


def write_pld_csv(pld: Pld, path) -> None:
    """Serialize as ``loss,mass`` rows with a final ``inf,<mass>`` row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("loss,mass\n")
        for loss, mass in zip(pld.losses, pld.masses):
            fh.write(f"{float(loss)!r},{float(mass)!r}\n")
        fh.write(f"inf,{float(pld.inf_mass)!r}\n")


def read_pld_csv(path) -> Pld:
    losses, masses, inf_mass = [], [], 0.0
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "loss,mass":
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            loss_s, mass_s = line.strip().split(",")
            if loss_s == "inf":
                inf_mass = float(mass_s)
            else:
                losses.append(float(loss_s))
                masses.append(float(mass_s))
    return Pld(losses=np.array(losses), masses=np.array(masses), inf_mass=inf_mass)


@dataclass(frozen=True)
class PlrvDecomposition:
    """Per-outcome split of the composed loss into world, dependence, and
    independent terms, with the reference masses under the first secret.

    Entries can be +-inf where a joint outcome is impossible under one
    secret; those are excluded from the pointwise-sum identity but their
    reference mass is retained.
    """

    total: np.ndarray
    world_term: np.ndarray       # loss induced by the secret/dataset coupling
    dependence_term: np.ndarray  # loss induced by declared mechanism dependence
    independent_term: np.ndarray
    ref_masses: np.ndarray       # composed joint under s0, per outcome

    @property
    def finite(self) -> np.ndarray:
        return (
            np.isfinite(self.total)
            & np.isfinite(self.world_term)
            & np.isfinite(self.dependence_term)
            & np.isfinite(self.independent_term)
        )

    def world_pld(self) -> Pld:
        """Pushforward of world_term + dependence_term under the s0 law."""
        combined = self.world_term + self.dependence_term
        mass = self.ref_masses
        live = mass > 0.0
        combined, mass = combined[live], mass[live]
        inf_mass = float(mass[np.isposinf(combined)].sum())
        keep = ~np.isposinf(combined)
        return Pld(losses=combined[keep], masses=mass[keep], inf_mass=inf_mass)


def decompose_plrv(
    world: World,
    mechs: list[MechanismKernel],
    dependence: list[DependenceGroup],
    s0: int,
    s1: int,
) -> PlrvDecomposition:
    """Split the composed loss log(b_s0/b_s1) into its three sources.

    The world term is computed directly as the log-ratio of discrete copula
    masses (joint over group-product), so the identity total = world +
    dependence + independent is a genuine floating-point check rather than
    a definition.
    """
    from .composition import composed_joint  # deferred: composition builds on this module

    if (s0, s1) not in world.adjacency:
        raise ValueError(f"({s0},{s1}) is not an adjacent pair")
    cj = composed_joint(world, mechs, dependence)
    b0, b1 = cj.rows(s0), cj.rows(s1)
    dims = cj.dims

    effs = [effective_kernel(world, m) for m in mechs]
    # per-mechanism marginal factors aligned with the product alphabet
    log_id = np.zeros(b0.size)
    log_m0 = np.zeros(b0.size)  # log of group-product density under s0
    log_m1 = np.zeros(b0.size)

    def _log_mass_ratio(log_num, log_den):
        # log(num/den) with the 0/0 case neutral: an outcome the reference
        # density already forbids carries no coupling information, and its
        # infinity lives in the marginal terms instead
        out = log_num - log_den
        out[np.isneginf(log_num) & np.isneginf(log_den)] = 0.0
        return out

    with np.errstate(divide="ignore", invalid="ignore"):
        for i, eff in enumerate(effs):
            shape = [1] * len(dims)
            shape[i] = dims[i]
            l0 = np.broadcast_to(np.log(eff.matrix[s0]).reshape(shape), dims).ravel()
            l1 = np.broadcast_to(np.log(eff.matrix[s1]).reshape(shape), dims).ravel()
            log_id = log_id + (l0 - l1)
            log_m0 = log_m0 + l0
            log_m1 = log_m1 + l1

        dep_term = np.zeros(b0.size)
        for group in dependence:
            gj = group_effective_joint(world, group)
            gdims = tuple(dims[i] for i in group.members)
            shape = [1] * len(dims)
            for pos, i in enumerate(group.members):
                shape[i] = dims[i]
            g0 = np.broadcast_to(np.log(gj[s0]).reshape(gdims).reshape(shape), dims).ravel()
            g1 = np.broadcast_to(np.log(gj[s1]).reshape(gdims).reshape(shape), dims).ravel()
            # members' marginal factors inside this group
            p0 = np.zeros(b0.size)
            p1 = np.zeros(b0.size)
            for i in group.members:
                mshape = [1] * len(dims)
                mshape[i] = dims[i]
                p0 = p0 + np.broadcast_to(np.log(effs[i].matrix[s0]).reshape(mshape), dims).ravel()
                p1 = p1 + np.broadcast_to(np.log(effs[i].matrix[s1]).reshape(mshape), dims).ravel()
            dep_term = dep_term + _log_mass_ratio(g0, p0) - _log_mass_ratio(g1, p1)
            # the group's joint replaces its members' product in the reference density
            log_m0 = log_m0 + (g0 - p0)
            log_m1 = log_m1 + (g1 - p1)

        log_b0 = np.where(b0 > 0.0, np.log(np.where(b0 > 0.0, b0, 1.0)), -np.inf)
        log_b1 = np.where(b1 > 0.0, np.log(np.where(b1 > 0.0, b1, 1.0)), -np.inf)

    with np.errstate(invalid="ignore"):
        total = log_b0 - log_b1
        # copula mass ratio: joint over the group-product reference, s0 vs s1
        world_term = _log_mass_ratio(log_b0, log_m0) - _log_mass_ratio(log_b1, log_m1)
        # one-sided impossibilities report as +-inf like the total does
        world_term = np.where(np.isnan(world_term) & (b0 > 0.0) & (b1 == 0.0), np.inf, world_term)
        world_term = np.where(np.isnan(world_term) & (b0 == 0.0) & (b1 > 0.0), -np.inf, world_term)
    # outcomes impossible under both secrets are undefined everywhere
    dead = (b0 == 0.0) & (b1 == 0.0)
    total[dead] = np.nan
    world_term[dead] = np.nan
    dep_term[dead] = np.nan
    return PlrvDecomposition(
        total=total,
        world_term=world_term,
        dependence_term=dep_term,
        independent_term=log_id,
        ref_masses=b0,
    )
