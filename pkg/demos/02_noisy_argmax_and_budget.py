"""
Noisy argmax over teacher votes and what it costs
=================================================

Each query adds Laplace noise of scale b to every vote count and releases
the argmax. Moving one vote changes two counts by one, so a query is
(2/b)-DP and K queries compose to 2K/b.
"""

import numpy as np

from pate_forge.accountant import PrivacyBudget, assert_budget, per_query_epsilon, scale_for_budget, spent_epsilon
from pate_forge.pate import LabelingLog, noisy_argmax_batch

rng = np.random.default_rng(0)
trials = 200_000

# two neighbouring histograms of 10 votes over 3 classes
h1, h2 = np.array([5, 3, 2]), np.array([4, 4, 2])
for b in (1.0, 2.0, 5.0):
    p1 = np.bincount(noisy_argmax_batch(np.tile(h1, (trials, 1)), b, rng, LabelingLog(b)), minlength=3) / trials
    p2 = np.bincount(noisy_argmax_batch(np.tile(h2, (trials, 1)), b, rng, LabelingLog(b)), minlength=3) / trials
    ratio = np.max(np.maximum(p1 / p2, p2 / p1))
    print(f"b={b}: P1={p1.round(3)} P2={p2.round(3)} worst ratio {ratio:.3f} <= e^(2/b) = {np.exp(2 / b):.3f}")

# mapping a target epsilon over K queries to a noise scale
K = 300
for eps in (0.01, 1.0, 100.0):
    strict = scale_for_budget(eps, K, "strict")
    paper = scale_for_budget(eps, K, "paper")
    print(
        f"eps={eps:<6} strict b={strict:<10g} spends {spent_epsilon(strict, K):g}; "
        f"paper b={paper:<8g} spends {spent_epsilon(paper, K):g}"
    )

print("per-query epsilon at b=2:", per_query_epsilon(2.0))

# a labeling run is audited against the budget it was planned under
budget = PrivacyBudget(1.0, K)
log = LabelingLog(budget.scale_b)
noisy_argmax_batch(np.tile(h1, (K, 1)), budget.scale_b, rng, log)
print(assert_budget(log, budget).to_dict())

# one query too many is caught
noisy_argmax_batch(np.tile(h1, (1, 1)), budget.scale_b, rng, log)
print(assert_budget(log, budget).problems)
