"""Global numerical tolerances and size guards.

All probability validation in the package goes through these constants so
that the tolerance story stays in one place.
"""

# Absolute tolerance for "is a probability vector" checks (row sums, total
# mass, nonnegativity slack).
PROB_ATOL = 1e-12

# Tolerance for dependence-group kernels marginalizing back onto their
# member kernels.
MARGINAL_ATOL = 1e-9

# Hard cap on the product output space; exhaustive enumeration beyond this
# is refused.
OUTCOME_CAP = 10**7
