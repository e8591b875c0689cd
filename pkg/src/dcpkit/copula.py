"""Gaussian-copula noise coupling: sampling, CDFs, and loss accounting.

The sampling pipeline draws a correlated latent Gaussian pair, pushes it
through probability-integral transforms, and inverts the target marginal
CDFs, so the delivered noise pair has exactly the requested marginals with
a Gaussian dependence structure.  The accounting side discretizes the
coupling's state-dependent loss variable and the coupled output pair so the
exact finite-alphabet machinery can run on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate, stats

from .divergence import DistPair, optimal_epsilon
from .model import World
from .pld import Pld, pld_from_pair

_SQRT2PI = math.sqrt(2.0 * math.pi)


# ----------------------------------------------------------------------
# marginal noise distributions


class LaplaceMarginal:
    """Laplace(loc, scale) noise marginal."""

    family = "laplace"

    def __init__(self, scale: float, loc: float = 0.0):
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        self.scale = float(scale)
        self.loc = float(loc)

    def cdf(self, v):
        return stats.laplace.cdf(v, loc=self.loc, scale=self.scale)

    def ppf(self, u):
        return stats.laplace.ppf(u, loc=self.loc, scale=self.scale)

    def pdf(self, v):
        return stats.laplace.pdf(v, loc=self.loc, scale=self.scale)

    def logpdf(self, v):
        return stats.laplace.logpdf(v, loc=self.loc, scale=self.scale)

    @property
    def spread(self) -> float:
        return self.scale


class GaussianMarginal:
    """Normal(loc, sigma^2) noise marginal."""

    family = "gaussian"

    def __init__(self, sigma: float, loc: float = 0.0):
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)
        self.loc = float(loc)

    def cdf(self, v):
        return stats.norm.cdf(v, loc=self.loc, scale=self.sigma)

    def ppf(self, u):
        return stats.norm.ppf(u, loc=self.loc, scale=self.sigma)

    def pdf(self, v):
        return stats.norm.pdf(v, loc=self.loc, scale=self.sigma)

    def logpdf(self, v):
        return stats.norm.logpdf(v, loc=self.loc, scale=self.sigma)

    @property
    def spread(self) -> float:
        return self.sigma


class EmpiricalMarginal:
    """Piecewise-linear CDF through the given (value, cdf) points."""

    family = "empirical"

    def __init__(self, values, cdf_values):
        xs = np.asarray(values, dtype=float)
        cs = np.asarray(cdf_values, dtype=float)
        if xs.ndim != 1 or xs.shape != cs.shape or xs.size < 2:
            raise ValueError("need matching 1-d value/cdf arrays with >= 2 points")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(cs) < 0):
            raise ValueError("values must increase strictly and cdf must be non-decreasing")
        if abs(cs[0]) > 1e-9 or abs(cs[-1] - 1.0) > 1e-9:
            raise ValueError("cdf must start at 0 and end at 1")
        self.xs, self.cs = xs, cs

    def cdf(self, v):
        return np.interp(v, self.xs, self.cs)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(np.diff(self.cs) == 0):
            # flat segments invert to their left endpoint
            keep = np.concatenate([[True], np.diff(self.cs) > 0])
            return np.interp(u, self.cs[keep], self.xs[keep])
        return np.interp(u, self.cs, self.xs)

    @property
    def spread(self) -> float:
        return float(self.xs[-1] - self.xs[0]) / 4.0


def invert_cdf_by_bisection(cdf: Callable[[float], float], u: float,
                            lo: float = -1e8, hi: float = 1e8, tol: float = 1e-12) -> float:
    """Monotone bisection fallback for marginals supplied as bare callables."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol:
            return mid
        if cdf(mid) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def marginal_from_spec(spec: Mapping):
    family = spec.get("family")
    if family == "laplace":
        return LaplaceMarginal(scale=float(spec["scale"]), loc=float(spec.get("loc", 0.0)))
    if family == "gaussian":
        return GaussianMarginal(sigma=float(spec["sigma"]), loc=float(spec.get("loc", 0.0)))
    if family == "empirical":
        pts = np.asarray(spec["points"], dtype=float)
        return EmpiricalMarginal(pts[:, 0], pts[:, 1])
    raise ValueError(f"unknown marginal family {family!r}")


# ----------------------------------------------------------------------
# copula specification


@dataclass(frozen=True)
class GaussianCopulaSpec:
    """Parameters of the state-dependent Gaussian noise coupling.

    ``eta`` maps state labels to real values; its sensitivity over the
    adjacency (or over all label pairs when no world is in play) sets the
    latent variance var1 = w^2 (c_sen / eps_c)^2.  ``rho_prime`` overrides
    the bivariate-normal correlation used on the CDF side; by default the
    correlation implied by the sampling pipeline is used.
    """

    rho: float
    eta: Mapping[str, float]
    eps_c: float
    delta_c: float
    w: float
    xi1: object = field(default_factory=lambda: GaussianMarginal(1.0))
    xi2: object = field(default_factory=lambda: GaussianMarginal(1.0))
    c_sen: float | None = None
    rho_prime: float | None = None
    var1_floor: float | None = None
    adjacency_labels: frozenset[tuple[str, str]] | None = None

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0 or self.rho == 0.0:
            raise ValueError(f"rho must lie in (-1, 1) excluding 0, got {self.rho}")
        if self.rho_prime is not None and not -1.0 < self.rho_prime < 1.0:
            raise ValueError(f"rho_prime must lie in (-1, 1), got {self.rho_prime}")
        if self.eps_c < 0:
            raise ValueError(f"eps_c must be >= 0, got {self.eps_c}")
        if not 0.0 < self.delta_c < 1.0:
            raise ValueError(f"delta_c must lie in (0, 1), got {self.delta_c}")
        if self.w < 2.0 * math.log(2.0 / self.delta_c) - 1e-12:
            raise ValueError(
                f"w = {self.w} violates w >= 2 log(2/delta_c) = {2.0 * math.log(2.0 / self.delta_c)}"
            )
        computed = self._computed_sensitivity()
        if self.c_sen is None:
            object.__setattr__(self, "c_sen", computed)
        elif abs(self.c_sen - computed) > 1e-12:
            raise ValueError(
                f"declared c_sen = {self.c_sen} does not match the eta sensitivity {computed}"
            )

    def _computed_sensitivity(self) -> float:
        labels = list(self.eta)
        if self.adjacency_labels is not None:
            pairs = self.adjacency_labels
        else:
            pairs = [(a, b) for a in labels for b in labels if a != b]
        if not pairs:
            return 0.0
        return max(abs(self.eta[a] - self.eta[b]) for a, b in pairs)

    @property
    def var1(self) -> float:
        if self.c_sen == 0.0:
            if self.var1_floor is None:
                raise ValueError(
                    "eta is constant over the adjacency (c_sen = 0); supply var1_floor"
                )
            return self.var1_floor
        if self.eps_c == 0.0:
            return math.inf
        v = self.w**2 * (self.c_sen / self.eps_c) ** 2
        # latent states a million sigmas apart are numerically disjoint
        if not math.isfinite(v) or math.sqrt(v) < 1e-6 * self.c_sen:
            raise ValueError(f"degenerate variance var1 = {v}")
        return v

    @property
    def effective_correlation(self) -> float:
        """Correlation of the standardized latent pair the pipeline produces."""
        if self.rho_prime is not None:
            return self.rho_prime
        v = self.var1
        return self.rho * math.sqrt(v) / math.sqrt(self.rho**2 * v + (1.0 - self.rho**2))

    def eta_of(self, label: str) -> float:
        try:
            return float(self.eta[label])
        except KeyError:
            raise ValueError(f"eta has no value for state {label!r}") from None


def copula_spec_from_mapping(raw: Mapping, adjacency_labels=None) -> GaussianCopulaSpec:
    """Build a spec from the model file's ``copula`` section."""
    return GaussianCopulaSpec(
        rho=float(raw["rho"]),
        eta={str(k): float(v) for k, v in raw["eta"].items()},
        eps_c=float(raw["eps_c"]),
        delta_c=float(raw["delta_c"]),
        w=float(raw["w"]),
        xi1=marginal_from_spec(raw["xi1"]),
        xi2=marginal_from_spec(raw["xi2"]),
        c_sen=raw.get("c_sen"),
        rho_prime=raw.get("rho_prime"),
        var1_floor=raw.get("var1_floor"),
        adjacency_labels=adjacency_labels,
    )


# ----------------------------------------------------------------------
# bivariate normal CDF


def bivariate_gaussian_cdf(a: float, b: float, rho: float) -> float:
    """P[Z_a <= a, Z_b <= b] for standard bivariate normal, |rho| < 1.

    Adaptive quadrature of phi(z) * Phi((b - rho z)/sqrt(1 - rho^2)) over
    z <= a; absolute error well below 1e-10.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")
    if math.isinf(a) and a > 0:
        return float(stats.norm.cdf(b))
    if math.isinf(b) and b > 0:
        return float(stats.norm.cdf(a))
    if (math.isinf(a) and a < 0) or (math.isinf(b) and b < 0):
        return 0.0
    root = math.sqrt(1.0 - rho * rho)

    def integrand(z):
        return math.exp(-0.5 * z * z) / _SQRT2PI * stats.norm.cdf((b - rho * z) / root)

    val, _ = integrate.quad(integrand, -np.inf, a, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(min(max(val, 0.0), 1.0))


# ----------------------------------------------------------------------
# pseudo-random correlated sample generation


@dataclass(frozen=True)
class NoiseSamplePair:
    v1: float
    v2: float
    z1: float
    z2: float


def psedr_map(spec: GaussianCopulaSpec, state: str, z1, z2):
    """Deterministic (z1, z2) -> (u1, u2, v1, v2) transform for one state.

    Standardization is state-dependent: u1 comes from the CDF of
    N(eta(state), var1), so the delivered marginals are exactly xi1, xi2.
    """
    eta = spec.eta_of(state)
    v = spec.var1
    sd1 = math.sqrt(v)
    sd2 = math.sqrt(spec.rho**2 * v + (1.0 - spec.rho**2))
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    u1 = stats.norm.cdf((z1 - eta) / sd1)
    zhat = spec.rho * z1 + math.sqrt(1.0 - spec.rho**2) * z2
    u2 = stats.norm.cdf((zhat - spec.rho * eta) / sd2)
    return u1, u2, np.asarray(spec.xi1.ppf(u1)), np.asarray(spec.xi2.ppf(u2))


def psedr_samples(spec: GaussianCopulaSpec, state: str, rng: np.random.Generator, n: int):
    """Draw n correlated noise pairs; returns arrays z1, z2, u1, u2, v1, v2."""
    if n <= 0:
        raise ValueError(f"sample count must be positive, got {n}")
    eta = spec.eta_of(state)
    z1 = eta + math.sqrt(spec.var1) * rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    u1, u2, v1, v2 = psedr_map(spec, state, z1, z2)
    return {"z1": z1, "z2": z2, "u1": u1, "u2": u2, "v1": v1, "v2": v2}


def psedr_sample(spec: GaussianCopulaSpec, state: str, rng: np.random.Generator) -> NoiseSamplePair:
    out = psedr_samples(spec, state, rng, 1)
    return NoiseSamplePair(
        v1=float(out["v1"][0]), v2=float(out["v2"][0]),
        z1=float(out["z1"][0]), z2=float(out["z2"][0]),
    )


def copula_cdf(spec: GaussianCopulaSpec, v1: float, v2: float) -> float:
    """Joint CDF of the delivered noise pair at (v1, v2).

    The pipeline's latent pair is standard bivariate normal at the
    effective correlation, so the joint CDF is that normal's CDF taken at
    the normal scores of the marginal CDF values.
    """
    u1 = float(np.clip(spec.xi1.cdf(v1), 0.0, 1.0))
    u2 = float(np.clip(spec.xi2.cdf(v2), 0.0, 1.0))
    if u1 in (0.0, 1.0) or u2 in (0.0, 1.0):
        # rectangle degenerates: grounded / marginal limits
        if u1 == 0.0 or u2 == 0.0:
            return 0.0
        if u1 == 1.0:
            return u2
        return u1
    t1 = float(stats.norm.ppf(u1))
    t2 = float(stats.norm.ppf(u2))
    return bivariate_gaussian_cdf(t1, t2, spec.effective_correlation)


def perturb_pair(
    world: World,
    query_maps: tuple,
    spec: GaussianCopulaSpec,
    rng: np.random.Generator,
    n: int,
    state: str | None = None,
):
    """Coupled output samples (y1, y2) per dataset for two additive queries.

    ``query_maps`` are two arrays of per-dataset query values.  The noise
    pair's joint law is state-free under the exact-marginal pipeline, so a
    single reference state (default: the first secret) drives the draw.
    """
    if n <= 0:
        raise ValueError(f"sample count must be positive, got {n}")
    f1, f2 = (np.asarray(q, dtype=float) for q in query_maps)
    if f1.size != len(world.datasets) or f2.size != len(world.datasets):
        raise ValueError("query maps must have one value per dataset")
    state = state if state is not None else world.secrets[0]
    out = psedr_samples(spec, state, rng, n)
    clouds = {}
    for x, label in enumerate(world.datasets):
        clouds[label] = (f1[x] + out["v1"], f2[x] + out["v2"])
    return clouds


# ----------------------------------------------------------------------
# loss accounting


def copula_plrv(
    spec: GaussianCopulaSpec,
    world: World,
    s0: int,
    s1: int,
    bins: int = 512,
    span: float = 8.0,
    mass_tol: float = 1e-3,
) -> Pld:
    """Loss distribution contributed by the state-dependent coupling.

    The coupling's loss variable between adjacent states reduces to the
    Gaussian mean-shift loss on the first latent coordinate (the second
    coordinate's contribution cancels identically), discretized on a
    ``bins``-cell grid spanning ``span`` standard deviations around the two
    state means.  Tail mass is folded into the edge cells after the
    coverage check.
    """
    if (s0, s1) not in world.adjacency:
        raise ValueError(f"({s0},{s1}) is not an adjacent pair")
    eta0 = spec.eta_of(world.secrets[s0])
    eta1 = spec.eta_of(world.secrets[s1])
    if eta0 == eta1:
        return Pld.point(0.0)
    sd = math.sqrt(spec.var1)
    lo = min(eta0, eta1) - span * sd
    hi = max(eta0, eta1) + span * sd
    edges = np.linspace(lo, hi, bins + 1)
    cdf0 = stats.norm.cdf(edges, loc=eta0, scale=sd)
    cdf1 = stats.norm.cdf(edges, loc=eta1, scale=sd)
    if (cdf0[-1] - cdf0[0]) < 1.0 - mass_tol or (cdf1[-1] - cdf1[0]) < 1.0 - mass_tol:
        raise ValueError(f"grid too coarse: interior mass below {1.0 - mass_tol}")
    p = np.diff(cdf0)
    q = np.diff(cdf1)
    p[0] += cdf0[0]
    p[-1] += 1.0 - cdf0[-1]
    q[0] += cdf1[0]
    q[-1] += 1.0 - cdf1[-1]
    return pld_from_pair(DistPair(p, q))


@dataclass(frozen=True)
class PerturbedDecomposition:
    """Pointwise loss split for the coupled pair on an output grid."""

    total: np.ndarray
    unperturbed: np.ndarray
    copula_term: np.ndarray
    grid1: np.ndarray
    grid2: np.ndarray
    pair: DistPair            # discretized coupled outputs under s0 vs s1
    marginal_pairs: tuple     # discretized per-mechanism output pairs


def _shift_pair(spec: GaussianCopulaSpec, eta: float, mu_ref: float) -> tuple[float, float]:
    v = spec.var1
    a = (eta - mu_ref) / math.sqrt(v)
    return a, spec.effective_correlation * a


def _coupled_log_density(spec, t1, t2, m1, m2):
    r = spec.effective_correlation
    d1 = t1 - m1
    d2 = t2 - m2
    quad = (d1 * d1 - 2.0 * r * d1 * d2 + d2 * d2) / (1.0 - r * r)
    return -0.5 * quad - math.log(2.0 * math.pi) - 0.5 * math.log(1.0 - r * r)


def perturbed_decomposition(
    spec: GaussianCopulaSpec,
    world: World,
    query_maps: tuple,
    s0: int,
    s1: int,
    bins: int = 64,
    span: float = 8.0,
    mu_ref: float | None = None,
) -> PerturbedDecomposition:
    """Discretized accounting model of the coupled pair between two secrets.

    Requires each of s0, s1 to pin down a dataset (conditional one-hot);
    the joint output density then factorizes as the state-shifted coupling
    factor times the independent noise product, and the three loss
    functions are evaluated on the grid from separate code paths so their
    additivity is a genuine numerical check.
    """
    f1, f2 = (np.asarray(q, dtype=float) for q in query_maps)
    shifts_f = {}
    for s in (s0, s1):
        cond = world.conditional_dataset(s)
        x = int(np.argmax(cond))
        if cond[x] < 1.0 - 1e-9:
            raise ValueError("perturbed decomposition needs secrets that pin down a dataset")
        shifts_f[s] = (f1[x], f2[x])
    eta0 = spec.eta_of(world.secrets[s0])
    eta1 = spec.eta_of(world.secrets[s1])
    if mu_ref is None:
        mu_ref = 0.5 * (eta0 + eta1)
    m0 = _shift_pair(spec, eta0, mu_ref)
    m1v = _shift_pair(spec, eta1, mu_ref)

    spread1, spread2 = spec.xi1.spread, spec.xi2.spread
    g1 = np.linspace(min(f1) - span * spread1, max(f1) + span * spread1, bins)
    g2 = np.linspace(min(f2) - span * spread2, max(f2) + span * spread2, bins)
    y1, y2 = np.meshgrid(g1, g2, indexing="ij")

    def state_logs(s, shifts):
        v1 = y1 - shifts_f[s][0]
        v2 = y2 - shifts_f[s][1]
        lp = spec.xi1.logpdf(v1) + spec.xi2.logpdf(v2)
        t1 = stats.norm.ppf(np.clip(spec.xi1.cdf(v1), 1e-300, 1 - 1e-16))
        t2 = stats.norm.ppf(np.clip(spec.xi2.cdf(v2), 1e-300, 1 - 1e-16))
        log_cop = _coupled_log_density(spec, t1, t2, *shifts) - (
            stats.norm.logpdf(t1) + stats.norm.logpdf(t2)
        )
        return lp, log_cop

    unp0, cop0 = state_logs(s0, m0)
    unp1, cop1 = state_logs(s1, m1v)

    unperturbed = unp0 - unp1
    copula_term = cop0 - cop1
    # independent route for the total: full joint log-density per state
    total = (unp0 + cop0) - (unp1 + cop1)

    d0 = np.exp(unp0 + cop0)
    d1 = np.exp(unp1 + cop1)
    pair = DistPair((d0 / d0.sum()).ravel(), (d1 / d1.sum()).ravel())

    # per-mechanism marginals under the shift model: xi density times the
    # normal-score tilt from the latent shift (the latent is standard
    # normal marginally, shifted by the state)
    marginal_pairs = []
    for axis, (xi, grid) in enumerate(zip((spec.xi1, spec.xi2), (g1, g2))):
        rows = []
        for s, latent in ((s0, m0), (s1, m1v)):
            v = grid - shifts_f[s][axis]
            t = stats.norm.ppf(np.clip(xi.cdf(v), 1e-300, 1 - 1e-16))
            dens = xi.pdf(v) * np.exp(stats.norm.logpdf(t - latent[axis]) - stats.norm.logpdf(t))
            rows.append(dens / dens.sum())
        marginal_pairs.append(DistPair(*rows))

    return PerturbedDecomposition(
        total=total,
        unperturbed=unperturbed,
        copula_term=copula_term,
        grid1=g1,
        grid2=g2,
        pair=pair,
        marginal_pairs=tuple(marginal_pairs),
    )


def coupled_block_law(
    spec: GaussianCopulaSpec,
    world: World,
    query_maps: tuple,
    bins: int = 17,
    span: float = 8.0,
    mu_ref: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-secret cell-mass law of the coupled pair on a shared 2-D grid.

    General worlds: the per-dataset coupled density (state-shifted copula
    factor times the noise product) is mixed over P(x|s).  Cell masses are
    midpoint-density approximations, renormalized per secret.
    """
    f1, f2 = (np.asarray(q, dtype=float) for q in query_maps)
    etas = np.array([spec.eta_of(lbl) for lbl in world.secrets])
    if mu_ref is None:
        mu_ref = float(etas.mean())
    g1 = np.linspace(f1.min() - span * spec.xi1.spread, f1.max() + span * spec.xi1.spread, bins)
    g2 = np.linspace(f2.min() - span * spec.xi2.spread, f2.max() + span * spec.xi2.spread, bins)
    y1, y2 = np.meshgrid(g1, g2, indexing="ij")

    per_dataset = []
    for x in range(len(world.datasets)):
        v1 = y1 - f1[x]
        v2 = y2 - f2[x]
        lp = spec.xi1.logpdf(v1) + spec.xi2.logpdf(v2)
        t1 = stats.norm.ppf(np.clip(spec.xi1.cdf(v1), 1e-300, 1 - 1e-16))
        t2 = stats.norm.ppf(np.clip(spec.xi2.cdf(v2), 1e-300, 1 - 1e-16))
        base = lp - stats.norm.logpdf(t1) - stats.norm.logpdf(t2)
        per_dataset.append((base, t1, t2))

    laws = []
    for s in range(len(world.secrets)):
        m1, m2 = _shift_pair(spec, etas[s], mu_ref)
        cond = world.conditional_dataset(s)
        dens = np.zeros_like(y1)
        for x, (base, t1, t2) in enumerate(per_dataset):
            if cond[x] == 0.0:
                continue
            dens += cond[x] * np.exp(base + _coupled_log_density(spec, t1, t2, m1, m2))
        laws.append((dens / dens.sum()).ravel())
    return np.array(laws), g1, g2


def conservative_bound(
    spec: GaussianCopulaSpec,
    eps1: float, delta1: float,
    eps2: float, delta2: float,
    delta_g: float,
) -> float:
    """Budget-level upper bound: optimal composition of the coupling cost
    with the two mechanisms' own budgets."""
    from .composition import dp_optcomp

    return dp_optcomp([(spec.eps_c, spec.delta_c), (eps1, delta1), (eps2, delta2)], delta_g)


def marginal_tight_budget(pair: DistPair, delta: float) -> tuple[float, float]:
    """Tight (eps, delta) tag of a discretized mechanism pair."""
    return optimal_epsilon(pair, delta), delta
