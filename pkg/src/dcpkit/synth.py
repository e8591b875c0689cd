"""Synthetic worlds, mechanisms, and budget calibrations for experiments
and property tests."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .divergence import DistPair, hockey_stick, optimal_epsilon
from .model import MechanismKernel, World, default_adjacency, effective_kernel, is_invertible


def mixing_world(lam: float, n_secrets: int = 2, n_datasets: int = 4,
                 prior=None) -> World:
    """Interpolate dataset conditionals between one-hot (lam=0) and uniform.

    Secret i pins dataset i at lam = 0; lam = 1 erases all dataset
    information about the secret.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixing parameter must lie in [0, 1], got {lam}")
    if n_datasets < n_secrets:
        raise ValueError("need at least one dataset per secret")
    prior = np.full(n_secrets, 1.0 / n_secrets) if prior is None else np.asarray(prior, float)
    cond = np.full((n_secrets, n_datasets), lam / n_datasets)
    for s in range(n_secrets):
        cond[s, s] += 1.0 - lam
    joint = prior[:, None] * cond
    return World(
        secrets=tuple(f"s{i}" for i in range(n_secrets)),
        datasets=tuple(f"x{j}" for j in range(n_datasets)),
        joint=joint,
        adjacency=default_adjacency(joint),
    )


def dirichlet_world(rng: np.random.Generator, n_secrets: int, n_datasets: int,
                    require_noninvertible: bool = True, max_tries: int = 200) -> World:
    for _ in range(max_tries):
        joint = rng.dirichlet(np.ones(n_secrets * n_datasets)).reshape(n_secrets, n_datasets)
        world = World(
            secrets=tuple(f"s{i}" for i in range(n_secrets)),
            datasets=tuple(f"x{j}" for j in range(n_datasets)),
            joint=joint,
            adjacency=default_adjacency(joint),
        )
        if world.adjacency and (not require_noninvertible or not is_invertible(world)[0]):
            return world
    raise RuntimeError("could not draw a usable world")


def invertible_world(rng: np.random.Generator, n_secrets: int, n_datasets: int | None = None) -> World:
    """Random prior, one-hot dataset conditionals."""
    n_datasets = n_secrets if n_datasets is None else n_datasets
    prior = rng.dirichlet(np.ones(n_secrets) * 5.0)
    perm = rng.permutation(n_datasets)[:n_secrets]
    joint = np.zeros((n_secrets, n_datasets))
    for s in range(n_secrets):
        joint[s, perm[s]] = prior[s]
    return World(
        secrets=tuple(f"s{i}" for i in range(n_secrets)),
        datasets=tuple(f"x{j}" for j in range(n_datasets)),
        joint=joint,
        adjacency=default_adjacency(joint),
    )


def rr_style_mechanism(rng: np.random.Generator, n_datasets: int, name: str = "rr") -> MechanismKernel:
    """Binary kernel with a random per-dataset flip probability."""
    c = rng.uniform(0.05, 0.45, size=n_datasets)
    side = rng.integers(0, 2, size=n_datasets)
    rows = np.where(side[:, None], np.stack([c, 1 - c], axis=1), np.stack([1 - c, c], axis=1))
    return MechanismKernel(name, ("0", "1"), rows)


def random_mechanisms(rng: np.random.Generator, n_datasets: int, k: int,
                      n_outputs: tuple[int, int] = (2, 3)) -> list[MechanismKernel]:
    mechs = []
    for i in range(k):
        ny = int(rng.integers(n_outputs[0], n_outputs[1] + 1))
        kern = rng.dirichlet(np.ones(ny), size=n_datasets)
        mechs.append(MechanismKernel(f"m{i}", tuple(map(str, range(ny))), kern))
    return mechs


def triangulating_instance(noise: float = 0.15) -> tuple[World, list[MechanismKernel]]:
    """Mechanisms individually fuzzy that jointly pin down the dataset.

    This is the composition regime where ignoring the secret/dataset
    coupling strictly underestimates the loss.
    """
    joint = 0.5 * np.array([[0.2, 0.3, 0.3, 0.2], [0.05, 0.3, 0.3, 0.35]])
    world = World(("s0", "s1"), ("x0", "x1", "x2", "x3"), joint, default_adjacency(joint))
    hard1 = np.array([[0, 1], [0, 1], [1, 0], [1, 0]], dtype=float)
    hard2 = np.array([[0, 1], [1, 0], [0, 1], [1, 0]], dtype=float)
    soft = lambda k: k * (1 - 2 * noise) + noise
    m1 = MechanismKernel("half1", ("0", "1"), soft(hard1) if noise > 0 else hard1)
    m2 = MechanismKernel("half2", ("0", "1"), soft(hard2) if noise > 0 else hard2)
    return world, [m1, m2]


def binned_gaussian_kernel(values, sigma: float, bins: int = 33, span: float = 6.0,
                           name: str = "gauss") -> MechanismKernel:
    """Additive Gaussian noise on per-dataset query values, binned.

    Edge bins absorb the tails so every row is exactly stochastic.
    """
    values = np.asarray(values, dtype=float)
    lo = values.min() - span * sigma
    hi = values.max() + span * sigma
    edges = np.linspace(lo, hi, bins + 1)
    rows = []
    for v in values:
        cdf = stats.norm.cdf(edges, loc=v, scale=sigma)
        row = np.diff(cdf)
        row[0] += cdf[0]
        row[-1] += 1.0 - cdf[-1]
        rows.append(row)
    return MechanismKernel(name, tuple(f"b{i}" for i in range(bins)), np.array(rows))


def binned_laplace_kernel(values, scale: float, bins: int = 33, span: float = 8.0,
                          name: str = "laplace") -> MechanismKernel:
    values = np.asarray(values, dtype=float)
    lo = values.min() - span * scale
    hi = values.max() + span * scale
    edges = np.linspace(lo, hi, bins + 1)
    rows = []
    for v in values:
        cdf = stats.laplace.cdf(edges, loc=v, scale=scale)
        row = np.diff(cdf)
        row[0] += cdf[0]
        row[-1] += 1.0 - cdf[-1]
        rows.append(row)
    return MechanismKernel(name, tuple(f"b{i}" for i in range(bins)), np.array(rows))


def _worst_pair_epsilon(world: World, mech: MechanismKernel, delta: float) -> float:
    eff = effective_kernel(world, mech)
    return max(
        optimal_epsilon(DistPair(*eff.pair(s0, s1)), delta) for (s0, s1) in sorted(world.adjacency)
    )


def calibrate_gaussian_mechanism(
    world: World, values, eps_target: float, delta: float,
    bins: int = 33, name: str = "gauss",
    sigma_bounds: tuple[float, float] = (1e-3, 1e4),
) -> MechanismKernel:
    """Scale the noise so the worst-pair tight epsilon at ``delta`` hits
    ``eps_target`` (bisection; epsilon decreases in sigma)."""
    lo, hi = sigma_bounds

    def tight(sigma):
        return _worst_pair_epsilon(world, binned_gaussian_kernel(values, sigma, bins, name=name), delta)

    if tight(lo) < eps_target or tight(hi) > eps_target:
        raise ValueError("eps_target outside the reachable range for these bounds")
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        if tight(mid) > eps_target:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-12:
            break
    return binned_gaussian_kernel(values, hi, bins, name=name)


def secret_gaussian_channel(world: World, eta, sigma: float, bins: int = 33) -> np.ndarray:
    """Row-stochastic secret-to-output kernel: binned Gaussian around eta(s)."""
    eta = np.asarray(eta, dtype=float)
    kern = binned_gaussian_kernel(eta, sigma, bins, name="alpha")
    return np.asarray(kern.kernel)


def calibrate_alpha_fill(
    world: World,
    base_law: np.ndarray,
    eta,
    eps_g: float,
    delta_g: float,
    bins: int = 33,
    sigma_bounds: tuple[float, float] = (1e-3, 1e4),
) -> tuple[np.ndarray, float]:
    """Most informative secret-channel fill that keeps the full composition
    inside (eps_g, delta_g) by the direct divergence check.

    ``base_law`` is the composed per-secret law of the existing mechanisms;
    returns (alpha, sigma); sigma = inf means even the widest channel in
    bounds cannot be certified.
    """
    pairs = sorted(world.adjacency)

    def achieved(sigma):
        alpha = secret_gaussian_channel(world, eta, sigma, bins)
        law = np.einsum("sy,sa->sya", base_law, alpha).reshape(base_law.shape[0], -1)
        return max(hockey_stick(DistPair(law[s0], law[s1]), eps_g) for (s0, s1) in pairs)

    lo, hi = sigma_bounds
    if achieved(hi) > delta_g:
        return secret_gaussian_channel(world, eta, hi, bins), math.inf
    if achieved(lo) <= delta_g:
        return secret_gaussian_channel(world, eta, lo, bins), lo
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        if achieved(mid) > delta_g:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-12:
            break
    return secret_gaussian_channel(world, eta, hi, bins), hi
