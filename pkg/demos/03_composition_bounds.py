"""Composition bounds: when the naive accountant under- or over-shoots.

Three epsilons per composition: the dependence-ignoring value (product of
the secret-facing marginals), the true value (joint law through the shared
dataset), and a conservative value that books the coupling loss as one
extra independent mechanism.  The direction of the naive error depends on
the instance: mechanisms that jointly triangulate the dataset amplify the
loss, redundant mechanisms attenuate it.  Basic budget summation can fail
outright.
"""

import numpy as np

from dcpkit import (
    MechanismKernel,
    World,
    basic_composition_check,
    cel_compare,
    default_adjacency,
    dominating_pair,
    dp_optcomp,
    hockey_stick,
    overline_opt,
    tradeoff_dominance,
    true_opt,
    underline_opt,
)
from dcpkit.synth import triangulating_instance


def show(world, mechs, label):
    print(f"\n{label}")
    for dg in (0.0, 0.02):
        u = underline_opt(world, mechs, dg)
        t = true_opt(world, mechs, [], dg)
        o = overline_opt(world, mechs, [], dg)
        print(f"  delta_g={dg}: naive={u:.4f}  true={t:.4f}  conservative={o:.4f}")


# Triangulating regime: individually fuzzy half-space queries that jointly
# pin the dataset down; the naive accountant underestimates.
world_t, mechs_t = triangulating_instance(noise=0.15)
show(world_t, mechs_t, "triangulating mechanisms (naive underestimates)")

# Redundant regime: two copies of the same mechanism; the composition is a
# garbling of the independent product, so the naive accountant OVERstates.
joint = np.array([[0.45, 0.05], [0.05, 0.45]])
world_r = World(("s0", "s1"), ("x0", "x1"), joint, default_adjacency(joint))
rr = MechanismKernel("rr", ("0", "1"), np.array([[0.75, 0.25], [0.25, 0.75]]))
show(world_r, [rr, rr], "redundant mechanisms (naive overestimates)")

# Basic composition failure: summed per-mechanism budgets do not cover the
# composed divergence on the triangulating instance.
world_h, mechs_h = triangulating_instance(noise=0.0)
out = basic_composition_check(world_h, mechs_h, [], delta_is=[0.0, 0.0])
print("\nbasic budget summation holds?", out["holds"])
print(f"  summed budget ({out['eps_sum']:.4f}, {out['delta_sum']})"
      f" vs composed delta {out['composed_delta']:.4f}")

# Informativeness comparisons: the posterior built on the true joint never
# scores worse than the one that pretends independence, but the trade-off
# curves may cross in either direction.
cel = cel_compare(world_r, [rr, rr])
print(f"\nexpected cross-entropy: joint-aware {cel['cel_joint']:.4f}"
      f" <= product {cel['cel_product']:.4f}")
td = tradeoff_dominance(world_r, [rr, rr])
print("trade-off curves cross on the redundant instance:"
      f" max violation {td['max_violation']:.4f}")

# Worst-case budget composition via dominating pairs.
print("\ndominating pair for (1.0, 0.1): delta at eps=1 =",
      hockey_stick(dominating_pair(1.0, 0.1), 1.0))
print("optimal composition of two (1.0, 0.01) budgets at delta_g=0.05:",
      dp_optcomp([(1.0, 0.01), (1.0, 0.01)], 0.05))
