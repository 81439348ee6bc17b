"""Operating side: admission control and assignment over delayed, noisy
site state, plus the computing sites that execute task chains.

Sites run each admitted request on one resource unit at unit rate (a task of
w units completes in w ms) and hold excess admissions in a FIFO queue, so a
site's busy units never exceed its capacity. Slot availability, assignment
and pricing all work on the controller's *believed* free capacity, which is
derived from the most recently arrived utilization reports and is stale by
design.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .auction import AuctionOutcome, Bid, clear_auction
from .engine import RngStream, SimTime
from .workload import ServiceTypeSpec


class NoFeasibleSiteError(RuntimeError):
    pass


@dataclass
class UtilizationReport:
    site_id: str
    measured_at: SimTime
    arrives_at: SimTime
    utilization: float  # reported (noisy, clamped) value
    true_utilization: float
    noise_applied: float

    def __post_init__(self):
        if self.arrives_at < self.measured_at:
            raise ValueError("report cannot arrive before it was measured")
        if not (0.0 <= self.utilization <= 1.0):
            raise ValueError("reported utilization must be clamped to [0,1]")


@dataclass
class AdmissionDecision:
    bid: Bid
    admitted: bool
    assigned_site: Optional[str]
    reason: str  # "Won" | "NoSlot" | "Rejected"


@dataclass
class ExecutionJob:
    request_key: object
    vehicle_id: str
    service_type: str
    task_units: tuple[float, ...]  # nominal per-task work
    deadline_abs: SimTime
    accepted_at: SimTime = 0
    started_at: Optional[SimTime] = None
    completes_at: Optional[SimTime] = None
    task_starts: tuple[SimTime, ...] = ()  # per-task start times within the chain
    observed_units: float = 0.0
    done: bool = False


class ComputingSite:
    """One computing site: unit-rate execution of admitted task chains.

    Tasks of a chain run back to back on a single resource unit; the actual
    work of each task execution is the nominal amount scaled by the site's
    per-service profile and a per-execution noise factor.
    """

    def __init__(
        self,
        site_id: str,
        capacity: float,
        rng: RngStream,
        resource_profile: Optional[Mapping[str, float]] = None,
        report_delay_ms: int = 0,
        sigma_delay_ms: float = 0.0,
        sigma_utilization: float = 0.0,
        sigma_work: float = 0.0,
        estimate_smoothing: float = 0.1,
    ):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if report_delay_ms < 0:
            raise ValueError("report_delay_ms must be >= 0")
        self.site_id = site_id
        self.capacity = float(capacity)
        self.servers = int(math.floor(capacity))
        self.rng = rng
        self.resource_profile = dict(resource_profile or {})
        self.report_delay_ms = int(report_delay_ms)
        self.sigma_delay_ms = float(sigma_delay_ms)
        self.sigma_utilization = float(sigma_utilization)
        self.sigma_work = float(sigma_work)
        self.estimate_smoothing = float(estimate_smoothing)
        self.queue: list[ExecutionJob] = []
        self._queue_head = 0
        self.running: dict[object, ExecutionJob] = {}
        self.estimates: dict[str, float] = {}
        self.price: float = 0.0

    # -- execution ----------------------------------------------------------

    @property
    def busy_units(self) -> int:
        return len(self.running)

    @property
    def utilization(self) -> float:
        return self.busy_units / self.capacity

    def queued_count(self) -> int:
        return len(self.queue) - self._queue_head

    def accept(self, job: ExecutionJob, now: SimTime) -> list[ExecutionJob]:
        """Take on an admitted request; returns jobs that started right away."""
        job.accepted_at = now
        self.queue.append(job)
        return self._fill_servers(now)

    def _fill_servers(self, now: SimTime) -> list[ExecutionJob]:
        started = []
        while self.busy_units < self.servers and self._queue_head < len(self.queue):
            job = self.queue[self._queue_head]
            self._queue_head += 1
            if job.done:  # dropped while queued
                continue
            self._start(job, now)
            started.append(job)
        if self._queue_head > 64 and self._queue_head * 2 > len(self.queue):
            del self.queue[: self._queue_head]
            self._queue_head = 0
        return started

    def _start(self, job: ExecutionJob, now: SimTime):
        profile = self.resource_profile.get(job.service_type, 1.0)
        total = 0
        observed = 0.0
        starts = []
        for units in job.task_units:
            starts.append(now + total)
            actual = units * profile
            if self.sigma_work > 0:
                actual *= max(0.05, 1.0 + self.rng.normal(0.0, self.sigma_work))
            observed += actual
            total += max(1, math.ceil(actual))
        job.started_at = now
        job.completes_at = now + total
        job.task_starts = tuple(starts)
        job.observed_units = observed
        self.running[job.request_key] = job

    def finish(self, request_key, now: SimTime) -> tuple[Optional[ExecutionJob], list[ExecutionJob]]:
        """Complete a running job (no-op if it was dropped earlier)."""
        job = self.running.get(request_key)
        if job is None or job.completes_at != now:
            return None, []
        del self.running[request_key]
        job.done = True
        self.update_service_estimate(job.service_type, job.observed_units)
        return job, self._fill_servers(now)

    def drop(self, request_key, now: SimTime) -> tuple[bool, list[ExecutionJob]]:
        """Deadline drop: abandon the request wherever it is."""
        job = self.running.pop(request_key, None)
        if job is not None:
            job.done = True
            return True, self._fill_servers(now)
        for queued in self.queue[self._queue_head :]:
            if queued.request_key == request_key and not queued.done:
                queued.done = True
                return True, []
        return False, []

    # -- learned estimates and reports --------------------------------------

    def update_service_estimate(self, service_type: str, observed_units: float):
        if observed_units <= 0:
            raise ValueError("observed_units must be positive")
        current = self.estimates.get(service_type)
        if current is None:
            self.estimates[service_type] = observed_units
        else:
            rate = self.estimate_smoothing
            self.estimates[service_type] = (1.0 - rate) * current + rate * observed_units

    def report_utilization(self, now: SimTime) -> UtilizationReport:
        true_util = self.utilization
        noise = self.rng.normal(0.0, self.sigma_utilization) if self.sigma_utilization > 0 else 0.0
        reported = min(1.0, max(0.0, true_util + noise))
        delay = float(self.report_delay_ms)
        if self.sigma_delay_ms > 0:
            delay += self.rng.normal(0.0, self.sigma_delay_ms)
        arrives = now + max(0, int(round(delay)))
        return UtilizationReport(
            site_id=self.site_id,
            measured_at=now,
            arrives_at=arrives,
            utilization=reported,
            true_utilization=true_util,
            noise_applied=noise,
        )


@dataclass
class _SiteBelief:
    utilization: float = 0.0
    measured_at: SimTime = -1
    pending: list[tuple[SimTime, float]] = field(default_factory=list)  # (assigned_at, est units)


class AdmissionController:
    """Orders and admits bids, prices sites by believed load, assigns
    admitted requests to the cheapest feasible site."""

    def __init__(self, sites: Sequence[ComputingSite], gamma_price: float = 2.0):
        if not sites:
            raise ValueError("need at least one computing site")
        self.sites = {s.site_id: s for s in sites}
        self.site_order = sorted(self.sites)
        self.gamma_price = float(gamma_price)
        self.beliefs = {sid: _SiteBelief() for sid in self.sites}
        self.prices = {sid: 0.0 for sid in self.sites}

    # -- belief maintenance --------------------------------------------------

    def on_report(self, report: UtilizationReport):
        belief = self.beliefs[report.site_id]
        if report.measured_at < belief.measured_at:
            return  # out-of-order stale report
        belief.utilization = report.utilization
        belief.measured_at = report.measured_at
        belief.pending = [(t, u) for t, u in belief.pending if t > report.measured_at]

    def note_assignment(self, site_id: str, now: SimTime, estimate: float):
        self.beliefs[site_id].pending.append((now, estimate))

    def believed_free(self, site_id: str) -> float:
        site = self.sites[site_id]
        belief = self.beliefs[site_id]
        free = site.capacity * (1.0 - belief.utilization)
        free -= sum(u for _, u in belief.pending)
        return max(0.0, free)

    def believed_beta(self) -> float:
        """Capacity-weighted mean utilization over the latest arrived reports."""
        total = sum(s.capacity for s in self.sites.values())
        return sum(self.sites[sid].capacity * b.utilization for sid, b in self.beliefs.items()) / total

    # -- service-demand estimates -------------------------------------------

    def type_estimate(self, service_type: str, fallback: float) -> float:
        """Capacity-weighted mean of the sites' learned estimates; bidder
        estimate for services no site has executed yet."""
        num = 0.0
        den = 0.0
        for site in self.sites.values():
            est = site.estimates.get(service_type)
            if est is not None:
                num += site.capacity * est
                den += site.capacity
        return num / den if den > 0 else fallback

    def compute_slots(self, demand_estimates: Mapping[str, float]) -> dict[str, int]:
        free_total = sum(self.believed_free(sid) for sid in self.sites)
        slots = {}
        for service_type, estimate in demand_estimates.items():
            if estimate <= 0:
                raise ValueError(f"estimate for {service_type} must be positive")
            slots[service_type] = int(free_total // estimate)
        return slots

    # -- pricing and assignment ----------------------------------------------

    def rial_update_prices(self):
        for sid, belief in self.beliefs.items():
            self.prices[sid] = belief.utilization ** self.gamma_price

    def rial_assign(self, estimate: float, now: SimTime) -> str:
        """Cheapest believed-feasible site; ties to the lowest site id."""
        best = None
        for sid in self.site_order:
            if self.believed_free(sid) >= estimate:
                if best is None or self.prices[sid] < self.prices[best]:
                    best = sid
        if best is None:
            raise NoFeasibleSiteError(f"no site with believed free capacity >= {estimate}")
        self.note_assignment(best, now, estimate)
        return best

    def decide_round(
        self,
        ordered_bids: Sequence[Bid],
        slots: Mapping[str, int],
        rng: RngStream,
        demand_estimates: Mapping[str, float],
        now: SimTime,
        outcome: Optional[AuctionOutcome] = None,
    ) -> list[AdmissionDecision]:
        """Admission plus assignment for one round.

        Winners are walked in priority order and placed on the cheapest
        believed-feasible site, each placement shrinking the believed free
        capacity; winners that no longer fit anywhere are Rejected.
        """
        decisions = admit(ordered_bids, slots, rng, outcome)
        for decision in decisions:
            if not decision.admitted:
                continue
            estimate = demand_estimates.get(decision.bid.service_type, decision.bid.resource_estimate)
            try:
                decision.assigned_site = self.rial_assign(estimate, now)
            except NoFeasibleSiteError:
                decision.admitted = False
                decision.reason = "Rejected"
        return decisions


def admit(
    ordered_bids: Sequence[Bid],
    slots: Mapping[str, int],
    rng: RngStream,
    outcome: Optional[AuctionOutcome] = None,
) -> list[AdmissionDecision]:
    """Admit the top n_k bids of each type; the rest are turned away.

    Decisions come back in priority order (price descending, submission
    order within equal prices), so constant-priority bidders see first-in,
    first-out handling. Boundary ties for the last slot of a type are
    resolved by the clearing's uniform random draw.
    """
    if outcome is None:
        outcome = clear_auction(ordered_bids, slots, rng)
    order = sorted(range(len(ordered_bids)), key=lambda i: (-ordered_bids[i].price, i))
    decisions = []
    for i in order:
        bid = ordered_bids[i]
        won = bid.bidder_id in outcome.winners.get(bid.service_type, ())
        decisions.append(
            AdmissionDecision(bid=bid, admitted=won, assigned_site=None, reason="Won" if won else "NoSlot")
        )
    return decisions
