"""Bayes-optimal membership-inference auditing.

The exact likelihood-ratio attacker's ROC between two adjacent secrets,
region bounds implied by an (eps, delta) certificate, and the protocol
comparing a composed setup against a single mechanism at matched budgets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .divergence import DistPair
from .model import World


@dataclass(frozen=True)
class RocCurve:
    """Vertices (fpr, tpr) of the optimal attacker's ROC, plus its area.

    Curves that come out below the diagonal are flipped (the attacker may
    invert its decision); ``flipped`` records that.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    flipped: bool = False

    def tpr_at(self, fpr) -> np.ndarray:
        return np.interp(fpr, self.fpr, self.tpr)


def _np_vertices(p: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate (q-mass, p-mass) over outcomes sorted by decreasing p/q."""
    with np.errstate(divide="ignore"):
        ratio = np.where(q > 0.0, p / np.where(q > 0.0, q, 1.0), np.inf)
    order = np.argsort(-ratio, kind="stable")
    ps, qs, rs = p[order], q[order], ratio[order]
    fpr = [0.0]
    tpr = [0.0]
    i = 0
    n = ps.size
    while i < n:
        j = i
        while j < n and rs[j] == rs[i]:
            j += 1
        f = fpr[-1] + float(qs[i:j].sum())
        t = tpr[-1] + float(ps[i:j].sum())
        if f > fpr[-1]:
            fpr.append(f)
            tpr.append(t)
        else:
            tpr[-1] = t  # zero-fpr group (q = 0): raise the starting vertex
        i = j
    fpr[-1], tpr[-1] = 1.0, 1.0
    return np.array(fpr), np.array(tpr)


def lr_attack_roc(pair: DistPair) -> RocCurve:
    """ROC of the likelihood-ratio attacker distinguishing p from q."""
    fpr, tpr = _np_vertices(pair.p, pair.q)
    auc = float(np.trapezoid(tpr, fpr))
    flipped = False
    if auc < 0.5:
        fpr, tpr = 1.0 - tpr[::-1], 1.0 - fpr[::-1]
        auc = float(np.trapezoid(tpr, fpr))
        flipped = True
    return RocCurve(fpr=fpr, tpr=tpr, auc=auc, flipped=flipped)


def roc_bound_check(roc: RocCurve, eps: float, delta: float) -> float:
    """Largest violation of the ROC region implied by an (eps, delta) bound.

    A certificate constrains every operating point by tpr <= e^eps fpr +
    delta and, through complements, (1 - fpr) <= e^eps (1 - tpr) + delta;
    linearity makes checking the vertices sufficient.
    """
    e = math.exp(eps)
    direct = roc.tpr - e * roc.fpr - delta
    complement = (1.0 - roc.fpr) - e * (1.0 - roc.tpr) - delta
    return float(max(direct.max(), complement.max()))


def worst_pair_roc(world: World, law: np.ndarray, pairs=None) -> tuple[RocCurve, tuple[int, int]]:
    """Highest-AUC adjacent pair for a per-secret outcome law."""
    candidates = sorted(world.adjacency) if pairs is None else list(pairs)
    if not candidates:
        raise ValueError("no adjacent pairs to audit")
    best, best_pair = None, None
    for (s0, s1) in candidates:
        roc = lr_attack_roc(DistPair(law[s0], law[s1]))
        if best is None or roc.auc > best.auc:
            best, best_pair = roc, (s0, s1)
    return best, best_pair


def compare_protocol(
    world: World,
    setup_composed,
    setup_single,
    grid: list[tuple[float, float]],
    require_certified: bool = True,
) -> list[dict]:
    """Worst-pair attacker AUC of a composed setup vs a single mechanism.

    Each setup is a callable (eps_g, delta_g) -> per-secret outcome law
    (rows = secrets), letting callers recalibrate per grid point; fixed
    laws may be passed directly.  Both setups must actually satisfy their
    certificate at each grid point unless ``require_certified`` is off.
    """
    from .divergence import hockey_stick

    rows = []
    for eps_g, delta_g in grid:
        out = []
        for name, setup in (("composed", setup_composed), ("single", setup_single)):
            law = setup(eps_g, delta_g) if callable(setup) else setup
            law = np.asarray(law, dtype=float)
            worst_delta = max(
                hockey_stick(DistPair(law[s0], law[s1]), eps_g)
                for (s0, s1) in sorted(world.adjacency)
            )
            if require_certified and worst_delta > delta_g + 1e-9:
                raise ValueError(
                    f"{name} setup is not certified at (eps={eps_g}, delta={delta_g}): "
                    f"achieved delta {worst_delta}"
                )
            roc, pair = worst_pair_roc(world, law)
            out.append((roc, pair, worst_delta))
        roc_a, pair_a, d_a = out[0]
        roc_b, pair_b, d_b = out[1]
        rows.append(
            {
                "eps_g": eps_g,
                "delta_g": delta_g,
                "auc_composed": roc_a.auc,
                "auc_single": roc_b.auc,
                "gap": roc_a.auc - roc_b.auc,
                "pair_composed": pair_a,
                "pair_single": pair_b,
                "delta_composed": d_a,
                "delta_single": d_b,
                "roc_composed": roc_a,
                "roc_single": roc_b,
            }
        )
    return rows
