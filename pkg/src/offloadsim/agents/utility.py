"""Bidder valuation and round utility.

Valuations are linear in the request's estimated resource needs and capped
by the budget. Round utility per service type combines the win/lose payoff
with the lost-bid cost, zeroes the gain of a free (uncontended) win, and
pays the backoff reward when the bid was deferred; the round total adds the
weighted idle-capacity term.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass
class AgentConfig:
    bidder_id: str
    budget: float
    valuation_slope: float = 1.0
    valuation_intercept: float = 0.0
    lost_bid_cost: float = 1.0
    backoff_cost: float = 0.1  # reward collected when deferring a bid
    utilization_weight: float = 1.0
    backoff_threshold: float = 0.5
    max_backoff_ms: int = 100
    active: bool = True

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.lost_bid_cost < 0:
            raise ValueError("lost_bid_cost must be >= 0")
        if self.utilization_weight < 0:
            raise ValueError("utilization_weight must be >= 0")
        if not (0.0 < self.backoff_threshold < 1.0):
            raise ValueError("backoff_threshold must be in (0,1)")
        if self.max_backoff_ms <= 0:
            raise ValueError("max_backoff_ms must be positive")


def valuation(resource_estimate: float, config: AgentConfig) -> float:
    """v = min(slope * estimate + intercept, budget); always positive."""
    if resource_estimate <= 0:
        raise ValueError("resource_estimate must be positive")
    v = min(config.valuation_slope * resource_estimate + config.valuation_intercept, config.budget)
    if v <= 0:
        raise ValueError(f"valuation {v} is not positive; check slope/intercept")
    return v


def utility_per_type(x: int, v: float, p: float, c: float, q: float, submitted: bool) -> float:
    """One service type's round utility.

    Submitted: the win/lose payoff x*(v-p) - (1-x)*c, minus v again when the
    final price was zero (a free win carries no competitive gain). Deferred:
    the backoff reward q.
    """
    if x not in (0, 1):
        raise ValueError("bidding outcome x must be 0 or 1")
    if not submitted:
        return q
    gain = x * (v - p) - (1 - x) * c
    if p == 0:
        gain -= v
    return gain


def utility_total(per_type_utilities, beta: float, w: float) -> float:
    """Round utility: sum over types plus w * (1 - beta)."""
    if not (0.0 <= beta <= 1.0):
        raise ValueError("beta must be in [0,1]")
    return sum(per_type_utilities) + w * (1.0 - beta)
