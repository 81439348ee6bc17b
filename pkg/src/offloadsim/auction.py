"""Per-type sealed-bid clearing: winners are the highest n_k bids of each
service type and everyone admitted pays the (n_k+1)-th highest price.

Feedback deliberately exposes nothing about competitors beyond the final
per-type price: that is the mechanism's information-sharing boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .engine import RngStream, SimTime


class DuplicateBidError(ValueError):
    pass


class UnknownBidderError(KeyError):
    pass


@dataclass
class Bid:
    bidder_id: str
    service_type: str
    price: float
    resource_estimate: float  # aggregate time-resource units for the request
    deadline_ms: SimTime
    rebid_count: int = 0
    request_key: object = None  # opaque handle threaded through to decisions

    def __post_init__(self):
        if self.price < 0:
            raise ValueError(f"bid price must be >= 0, got {self.price}")
        if self.resource_estimate <= 0:
            raise ValueError("resource_estimate must be positive")
        if self.rebid_count < 0:
            raise ValueError("rebid_count must be >= 0")


@dataclass
class AuctionOutcome:
    round_time: SimTime
    winners: dict[str, set[str]]
    payment_vector: dict[str, float]
    slots_offered: dict[str, int]
    participants: dict[str, tuple[str, ...]]  # bidder -> types bid on this round
    roster: frozenset[str]


@dataclass
class FeedbackSignal:
    """What one bidder learns from a round: its own outcomes, the final
    price of each type it bid on, and the system utilization signal."""

    bidder_id: str
    outcomes: dict[str, int]  # service_type -> 0/1
    prices: dict[str, float]  # service_type -> payment for that type
    beta: float


def clear_auction(
    bids: Iterable[Bid],
    slots: Mapping[str, int],
    rng: RngStream,
    roster: Optional[Iterable[str]] = None,
) -> AuctionOutcome:
    """Clear one round: each service type independently, boundary ties random.

    Winners per type are the n_k highest prices; when several bids tie at the
    boundary price the remaining slots go to a uniform random subset of them.
    The payment is the (n_k+1)-th highest submitted price, or 0 when there
    were no more than n_k bids.
    """
    by_type: dict[str, list[Bid]] = {}
    seen: set[tuple[str, str]] = set()
    participants: dict[str, list[str]] = {}
    for bid in bids:
        key = (bid.bidder_id, bid.service_type)
        if key in seen:
            raise DuplicateBidError(f"bidder {bid.bidder_id} bid twice for {bid.service_type}")
        seen.add(key)
        by_type.setdefault(bid.service_type, []).append(bid)
        participants.setdefault(bid.bidder_id, []).append(bid.service_type)

    winners: dict[str, set[str]] = {}
    payments: dict[str, float] = {}
    slots_offered: dict[str, int] = {}
    for service_type, type_bids in by_type.items():
        n = int(slots.get(service_type, 0))
        if n < 0:
            raise ValueError(f"negative slot count for {service_type}")
        slots_offered[service_type] = n
        prices = sorted((b.price for b in type_bids), reverse=True)
        if len(type_bids) <= n:
            winners[service_type] = {b.bidder_id for b in type_bids}
            payments[service_type] = 0.0
            continue
        payments[service_type] = prices[n]
        if n == 0:
            winners[service_type] = set()
            continue
        threshold = prices[n - 1]
        outright = [b for b in type_bids if b.price > threshold]
        tied = [b for b in type_bids if b.price == threshold]
        remaining = n - len(outright)
        chosen = set(b.bidder_id for b in outright)
        if remaining > 0:
            if len(tied) > remaining:
                order = rng.permutation(len(tied))
                for i in order[:remaining]:
                    chosen.add(tied[int(i)].bidder_id)
            else:
                chosen.update(b.bidder_id for b in tied)
        winners[service_type] = chosen

    if roster is None:
        roster_set = frozenset(participants)
    else:
        roster_set = frozenset(roster) | frozenset(participants)
    return AuctionOutcome(
        round_time=0,
        winners=winners,
        payment_vector=payments,
        slots_offered=slots_offered,
        participants={b: tuple(ts) for b, ts in participants.items()},
        roster=roster_set,
    )


def feedback_for(outcome: AuctionOutcome, bidder_id: str, utilization_report: float) -> FeedbackSignal:
    """Assemble one bidder's round feedback.

    Contains exactly: per bid type, the 0/1 outcome and that type's final
    price, plus the utilization signal. A bidder that backed off everything
    this round receives the utilization signal only.
    """
    if bidder_id not in outcome.roster:
        raise UnknownBidderError(bidder_id)
    outcomes: dict[str, int] = {}
    prices: dict[str, float] = {}
    for service_type in outcome.participants.get(bidder_id, ()):
        won = bidder_id in outcome.winners.get(service_type, ())
        outcomes[service_type] = 1 if won else 0
        prices[service_type] = outcome.payment_vector.get(service_type, 0.0)
    return FeedbackSignal(bidder_id=bidder_id, outcomes=outcomes, prices=prices, beta=utilization_report)
