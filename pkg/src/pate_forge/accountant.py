"""Privacy budget arithmetic for Laplace noisy-argmax labeling.

Moving one teacher vote changes two counts by one each, so a single
noisy-argmax release with Laplace scale ``b`` is ``2/b``-DP; ``K`` releases
compose naively to ``2K/b``.

Two conventions map a target ``epsilon`` over ``K`` queries to a scale:

* ``strict``: ``b = 2K / epsilon``, so the composed spend is exactly ``epsilon``.
* ``paper``:  ``b = K / (2 epsilon)``, the ``lambda = K / 2 epsilon`` setting read
  as a noise scale. Its naive spend is ``4 epsilon``; use it to reproduce that
  parameterization, not to claim a guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .pate import LabelingLog

CONVENTIONS = ("strict", "paper")
DEFAULT_DELTA = 1e-5
NON_PRIVATE = math.inf


def scale_for_budget(epsilon: float, K: int, convention: str = "strict") -> float:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if convention == "strict":
        return 2.0 * K / epsilon
    if convention == "paper":
        return K / (2.0 * epsilon)
    raise ValueError(f"unknown convention {convention!r}")


def per_query_epsilon(scale_b: float) -> float:
    """``2/b``; ``NON_PRIVATE`` (infinity) when there is no noise."""
    if scale_b < 0:
        raise ValueError("Laplace scale must be non-negative")
    if scale_b == 0:
        return NON_PRIVATE
    return 2.0 / scale_b


def spent_epsilon(scale_b: float, K: int) -> float:
    if K < 0:
        raise ValueError("K must be non-negative")
    if K == 0:
        return 0.0
    return K * per_query_epsilon(scale_b)


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon_target: float
    K: int
    convention: str = "strict"
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        if not self.epsilon_target > 0 or self.K < 0 or self.delta < 0:
            raise ValueError("need epsilon_target > 0, K >= 0 and delta >= 0")

    @property
    def scale_b(self) -> float:
        return scale_for_budget(self.epsilon_target, max(self.K, 1), self.convention)


@dataclass(frozen=True)
class BudgetReport:
    convention: str
    epsilon_target: float
    delta: float
    K_budget: int
    K_used: int
    scale_b: float
    epsilon_spent: float
    verdict: str
    problems: tuple = field(default=())

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "convention": self.convention,
            "epsilon_target": self.epsilon_target,
            "delta": self.delta,
            "delta_note": f"<= {self.delta:g} (slack unused)",
            "K_budget": self.K_budget,
            "K_used": self.K_used,
            "scale_b": self.scale_b,
            "epsilon_spent": "non-private" if math.isinf(self.epsilon_spent) else self.epsilon_spent,
            "verdict": self.verdict,
            "problems": list(self.problems),
        }


def assert_budget(log: LabelingLog, budget: PrivacyBudget) -> BudgetReport:
    """Check a finished labeling log against the budget it was meant to honour."""
    problems = []
    if log.K > budget.K:
        problems.append(f"budget overage: K_used={log.K} exceeds K_budget={budget.K} by {log.K - budget.K}")
    if log.scale_b < budget.scale_b:
        problems.append(f"insufficient noise: scale_b={log.scale_b!r} < required {budget.scale_b!r}")
    return BudgetReport(
        convention=budget.convention,
        epsilon_target=budget.epsilon_target,
        delta=budget.delta,
        K_budget=budget.K,
        K_used=log.K,
        scale_b=log.scale_b,
        epsilon_spent=spent_epsilon(log.scale_b, log.K),
        verdict="fail" if problems else "pass",
        problems=tuple(problems),
    )
