"""Desk-scale static-game oracles.

Verifies, on small instances, the claims the simulator's mechanism rests
on: the uncontended game is an exact potential game (unilateral utility
differences equal potential differences), clearing admits pure equilibria
found by brute-force enumeration, best responses against a linear opponent
are linear in the interior, and the induced allocation rule is welfare
optimal under a fairness ratio constraint.

Everything here is deterministic: expected utilities integrate tie breaks
and opponent valuations by direct weighting and quadrature, never by Monte
Carlo, so oracle results are seed independent.
"""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

IDENTITY_TOL = 1e-9


class TooLargeError(ValueError):
    pass


class InfeasibleFairnessError(RuntimeError):
    pass


@dataclass
class StaticPlayer:
    backoff_rewards: dict[str, float]  # per service type
    work: dict[str, float]
    values: dict[str, float]
    lost_bid_cost: float
    budget: float

    def __post_init__(self):
        for t, v in self.values.items():
            if v > self.budget + 1e-12:
                raise ValueError(f"value {v} for {t} exceeds budget {self.budget}")


@dataclass
class StaticGame:
    players: list[StaticPlayer]
    capacity: float
    utilization_weight: float
    alpha_levels: tuple[float, ...] = (0.0, 1.0)
    price_levels: tuple[float, ...] = (0.0,)
    slots: Optional[dict[str, int]] = None  # None: every submitted bid is accepted

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if not self.alpha_levels or not self.price_levels:
            raise ValueError("action grids must be non-empty")

    @property
    def type_ids(self) -> tuple[str, ...]:
        seen = []
        for p in self.players:
            for t in p.work:
                if t not in seen:
                    seen.append(t)
        return tuple(sorted(seen))


# -- potential function (uncontended case) -------------------------------------


def _as_alpha_matrix(game: StaticGame, profile) -> np.ndarray:
    types = game.type_ids
    out = np.zeros((len(game.players), len(types)))
    for i, per_player in enumerate(profile):
        for j, t in enumerate(types):
            out[i, j] = per_player.get(t, 0.0) if isinstance(per_player, dict) else per_player[j]
    return out


def potential_value(game: StaticGame, profile) -> float:
    """phi = sum q - sum alpha*q + W * (1 - sum alpha.omega / C)."""
    types = game.type_ids
    alphas = _as_alpha_matrix(game, profile)
    total_q = sum(p.backoff_rewards.get(t, 0.0) for p in game.players for t in types)
    chosen_q = sum(
        alphas[i, j] * p.backoff_rewards.get(t, 0.0)
        for i, p in enumerate(game.players)
        for j, t in enumerate(types)
    )
    load = sum(
        alphas[i, j] * p.work.get(t, 0.0)
        for i, p in enumerate(game.players)
        for j, t in enumerate(types)
    )
    return total_q - chosen_q + game.utilization_weight * (1.0 - load / game.capacity)


def uncontended_utility(game: StaticGame, profile, player: int) -> float:
    """Player utility in the all-bids-accepted reduction (prices are moot)."""
    types = game.type_ids
    alphas = _as_alpha_matrix(game, profile)
    p = game.players[player]
    own_q = sum(p.backoff_rewards.get(t, 0.0) for t in types)
    chosen_q = sum(alphas[player, j] * p.backoff_rewards.get(t, 0.0) for j, t in enumerate(types))
    load = sum(
        alphas[i, j] * q.work.get(t, 0.0)
        for i, q in enumerate(game.players)
        for j, t in enumerate(types)
    )
    return own_q - chosen_q + game.utilization_weight * (1.0 - load / game.capacity)


def check_potential_identity(game: StaticGame, profile, player: int, new_alpha) -> bool:
    """Does the deviating player's utility change equal the potential change?"""
    deviated = list(profile)
    deviated[player] = new_alpha
    du = uncontended_utility(game, deviated, player) - uncontended_utility(game, profile, player)
    dphi = potential_value(game, deviated) - potential_value(game, profile)
    return abs(du - dphi) <= IDENTITY_TOL


# -- pure-equilibrium enumeration ------------------------------------------------


def _expected_round_utilities(game: StaticGame, actions) -> list[float]:
    """Expected utility per player for one joint action.

    actions[i] = (alpha_vec, price_vec) over game.type_ids. Tie breaks at the
    slot boundary are integrated exactly (each tied bidder wins the leftover
    slots with equal probability).
    """
    types = game.type_ids
    n_players = len(game.players)
    win_prob = np.zeros((n_players, len(types)))
    payment = np.zeros(len(types))
    for j, t in enumerate(types):
        submitted = [
            (i, actions[i][1][j])
            for i in range(n_players)
            if t in game.players[i].work and actions[i][0][j] >= 0.5
        ]
        if not submitted:
            continue
        n = len(submitted) if game.slots is None else game.slots.get(t, 0)
        prices = sorted((price for _, price in submitted), reverse=True)
        if len(submitted) <= n:
            for i, _ in submitted:
                win_prob[i, j] = 1.0
            continue
        payment[j] = prices[n] if n < len(prices) else 0.0
        if n == 0:
            continue
        boundary = prices[n - 1]
        above = [(i, pr) for i, pr in submitted if pr > boundary]
        tied = [(i, pr) for i, pr in submitted if pr == boundary]
        for i, _ in above:
            win_prob[i, j] = 1.0
        leftover = n - len(above)
        for i, _ in tied:
            win_prob[i, j] = leftover / len(tied)

    expected_load = sum(
        win_prob[i, j] * game.players[i].work.get(t, 0.0)
        for i in range(n_players)
        for j, t in enumerate(types)
    )
    beta = min(1.0, expected_load / game.capacity)

    utilities = []
    for i, player in enumerate(game.players):
        total = 0.0
        for j, t in enumerate(types):
            if t not in player.work:
                continue
            alpha = actions[i][0][j]
            if alpha >= 0.5:
                pr_win = win_prob[i, j]
                p = payment[j]
                gain = pr_win * (player.values[t] - p) - (1.0 - pr_win) * player.lost_bid_cost
                if p == 0.0:
                    gain -= player.values[t]
                total += gain
            else:
                total += player.backoff_rewards.get(t, 0.0)
        total += game.utilization_weight * (1.0 - beta)
        utilities.append(total)
    return utilities


def player_action_space(game: StaticGame, player: int) -> list[tuple[tuple, tuple]]:
    types = game.type_ids
    demanded = [t in game.players[player].work for t in types]
    alpha_choices = [game.alpha_levels if d else (0.0,) for d in demanded]
    price_levels = tuple(p for p in game.price_levels if p <= game.players[player].budget)
    price_choices = [price_levels if d else (0.0,) for d in demanded]
    space = []
    for alphas in itertools.product(*alpha_choices):
        for prices in itertools.product(*price_choices):
            space.append((alphas, prices))
    return space


def enumerate_pure_ne(game: StaticGame, tol: float = 1e-12) -> list[tuple]:
    """All joint grid actions from which no unilateral deviation profits."""
    spaces = [player_action_space(game, i) for i in range(len(game.players))]
    total = math.prod(len(s) for s in spaces)
    if total > 1_000_000:
        raise TooLargeError(f"{total} joint actions exceed the enumeration budget")
    cache: dict[tuple, list[float]] = {}

    def utilities(profile):
        if profile not in cache:
            cache[profile] = _expected_round_utilities(game, profile)
        return cache[profile]

    equilibria = []
    for profile in itertools.product(*spaces):
        base = utilities(profile)
        stable = True
        for i, space in enumerate(spaces):
            for alt in space:
                if alt == profile[i]:
                    continue
                deviated = profile[:i] + (alt,) + profile[i + 1 :]
                if utilities(deviated)[i] > base[i] + tol:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            equilibria.append(profile)
    return equilibria


# -- best-response curve (two bidders, one commodity) ------------------------------


@dataclass
class LinearOpponent:
    """Increasing linear bid strategy over a uniform valuation range."""

    v_low: float
    v_high: float
    bid_low: float  # f(v_low)
    bid_high: float  # f(v_high)

    def bids(self, quad_points: int) -> np.ndarray:
        # midpoint rule keeps quadrature nodes off the price grid
        h = (self.v_high - self.v_low) / quad_points
        v = self.v_low + h * (np.arange(quad_points) + 0.5)
        if self.v_high == self.v_low:
            return np.full(quad_points, self.bid_low)
        frac = (v - self.v_low) / (self.v_high - self.v_low)
        return self.bid_low + frac * (self.bid_high - self.bid_low)


def best_response_curve(
    opponent: LinearOpponent,
    valuation_grid: Sequence[float],
    price_grid: Sequence[float],
    lost_bid_cost: float = 0.0,
    budget: float = math.inf,
    quad_points: int = 4001,
) -> list[tuple[float, float]]:
    """Grid argmax bid for each own valuation against the linear opponent.

    Expected utility of bid b: win against all opponent draws below b and
    pay the opponent's bid (the second price); pay the lost-bid cost
    otherwise. Expectation by midpoint quadrature over the opponent's
    uniform valuation draw; argmax ties resolve to the lowest price.
    """
    opp_bids = opponent.bids(quad_points)
    prices = np.array([p for p in price_grid if p <= budget])
    if prices.size == 0:
        raise ValueError("price grid is empty after the budget cap")
    win = prices[:, None] > opp_bids[None, :]  # (P, Q)
    mean_win = win.mean(axis=1)
    mean_paid = (win * opp_bids[None, :]).mean(axis=1)
    curve = []
    for v in valuation_grid:
        expected = v * mean_win - mean_paid - lost_bid_cost * (1.0 - mean_win)
        best = int(np.argmax(expected))
        curve.append((float(v), float(prices[best])))
    return curve


def linear_fit_interior(
    curve: Sequence[tuple[float, float]], bid_low: float, bid_high: float, margin: float = 0.0
) -> tuple[float, float, float, int]:
    """Least-squares line through the curve points strictly inside the
    opponent's bid range; returns (slope, intercept, r_squared, n_points)."""
    pts = [(v, b) for v, b in curve if bid_low + margin < b < bid_high - margin]
    if len(pts) < 3:
        return math.nan, math.nan, math.nan, len(pts)
    v = np.array([p[0] for p in pts])
    b = np.array([p[1] for p in pts])
    slope, intercept = np.polyfit(v, b, 1)
    fitted = slope * v + intercept
    ss_res = float(((b - fitted) ** 2).sum())
    ss_tot = float(((b - b.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2, len(pts)


# -- welfare -------------------------------------------------------------------


def welfare(
    outcome,
    valuations: dict[str, dict[str, float]],
    lost_bid_costs: dict[str, float],
    backoff_rewards: Optional[dict[str, float]] = None,
) -> float:
    """Sum of realized bidder utilities for one cleared round.

    outcome is an auction clearing result; backoff_rewards maps bidders that
    deferred everything to their collected backoff reward.
    """
    total = 0.0
    for bidder, types in outcome.participants.items():
        for t in types:
            p = outcome.payment_vector.get(t, 0.0)
            if bidder in outcome.winners.get(t, ()):
                gain = valuations[bidder][t] - p
                if p == 0.0:
                    gain -= valuations[bidder][t]
                total += gain
            else:
                total -= lost_bid_costs[bidder]
                if p == 0.0:
                    total -= valuations[bidder][t]
    for bidder, reward in (backoff_rewards or {}).items():
        total += reward
    return total


# -- fairness-constrained allocation check -----------------------------------------


@dataclass
class AllocationRule:
    """Linear-form allocation: bidder 1 wins when j1*v1 + d1 >= j2*v2 + d2.

    gamma is the fairness ratio the rule is meant to hold; lambda_star the
    multiplier that ties valuations to resource amounts:
        g1 = (1 + lambda) / j1,        k1 = -d1 / j1
        g2 = (1 - gamma * lambda) / j2, k2 = -d2 / j2
    with v_i = g_i * omega_i + k_i.
    """

    j1: float
    d1: float
    j2: float
    d2: float
    gamma: float
    lambda_star: float

    def __post_init__(self):
        if self.j1 <= 0 or self.j2 <= 0:
            raise ValueError("slopes j must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if 1.0 - self.gamma * self.lambda_star <= 0:
            raise ValueError("need gamma * lambda < 1 for positive g2")

    @property
    def g1(self) -> float:
        return (1.0 + self.lambda_star) / self.j1

    @property
    def k1(self) -> float:
        return -self.d1 / self.j1

    @property
    def g2(self) -> float:
        return (1.0 - self.gamma * self.lambda_star) / self.j2

    @property
    def k2(self) -> float:
        return -self.d2 / self.j2

    def allocates_to_first(self, v1, v2):
        return self.j1 * np.asarray(v1) + self.d1 >= self.j2 * np.asarray(v2) + self.d2


@dataclass
class FairnessReport:
    achieved_welfare: float
    best_welfare: float
    achieved_ratio: float
    target_ratio: float
    candidates_checked: int
    feasible_candidates: int
    passed: bool


def _allocation_stats(assign_first: np.ndarray, omega1: np.ndarray, omega2: np.ndarray):
    n1 = int(assign_first.sum())
    n2 = len(assign_first) - n1
    welfare_value = float(np.where(assign_first, omega1, omega2).mean())
    if n1 == 0 or n2 == 0:
        return welfare_value, math.nan
    ratio = float(omega1[assign_first].mean() / omega2[~assign_first].mean())
    return welfare_value, ratio


def pareto_fairness_check(
    rule: AllocationRule,
    v1_samples: np.ndarray,
    v2_samples: np.ndarray,
    ratio_tol: float = 0.05,
    welfare_tol: float = 0.01,
    slope_grid: int = 60,
    offset_grid: int = 41,
) -> FairnessReport:
    """Compare the rule's allocated resource against the best linear
    threshold rule meeting (approximately) the same fairness ratio.

    The candidate family 'first wins when v1 >= s*v2 + o' always includes
    the rule itself, so best >= achieved; the check passes when the rule is
    within welfare_tol of the constrained best.
    """
    v1 = np.asarray(v1_samples, dtype=float)
    v2 = np.asarray(v2_samples, dtype=float)
    omega1 = (v1 - rule.k1) / rule.g1
    omega2 = (v2 - rule.k2) / rule.g2
    if np.any(omega1 <= 0) or np.any(omega2 <= 0):
        raise ValueError("samples imply non-positive resource amounts")

    rule_assign = np.asarray(rule.allocates_to_first(v1, v2))
    achieved, achieved_ratio = _allocation_stats(rule_assign, omega1, omega2)
    degenerate = math.isnan(achieved_ratio)
    target = rule.gamma if not degenerate else math.nan

    slopes = np.linspace(0.25, 4.0, slope_grid)
    spread = max(v2.max() - v2.min(), v1.max() - v1.min(), 1.0)
    offsets = np.linspace(-spread, spread, offset_grid)
    candidates = [(rule.j2 / rule.j1, (rule.d2 - rule.d1) / rule.j1)]
    candidates += [(s, o) for s in slopes for o in offsets]

    best = -math.inf
    feasible = 0
    for s, o in candidates:
        assign = v1 >= s * v2 + o
        w, ratio = _allocation_stats(assign, omega1, omega2)
        if degenerate:
            feasible += 1
            best = max(best, w)
            continue
        if math.isnan(ratio):
            continue
        if abs(ratio - target) <= ratio_tol * max(1.0, abs(target)):
            feasible += 1
            best = max(best, w)
    if feasible == 0:
        raise InfeasibleFairnessError("no candidate allocation meets the fairness band")
    passed = achieved >= best * (1.0 - welfare_tol)
    return FairnessReport(
        achieved_welfare=achieved,
        best_welfare=best,
        achieved_ratio=achieved_ratio,
        target_ratio=target,
        candidates_checked=len(candidates),
        feasible_candidates=feasible,
        passed=passed,
    )


# -- randomized sweeps with structured reports ---------------------------------------


@dataclass
class OracleRecord:
    name: str
    inputs_digest: str
    passed: bool
    residual: float
    detail: str = ""

    def render(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{self.name} digest={self.inputs_digest} {status} residual={self.residual:.3e} {self.detail}"


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode())
    return h.hexdigest()[:12]


def random_uncontended_game(rng) -> StaticGame:
    """Small random game in the everything-admitted regime."""
    n_players = 2 + rng.integers(0, 3)
    n_types = 1 + rng.integers(0, 3)
    types = [f"T{j}" for j in range(n_types)]
    players = []
    for _ in range(n_players):
        players.append(
            StaticPlayer(
                backoff_rewards={t: rng.uniform(0.05, 2.0) for t in types},
                work={t: rng.uniform(0.5, 5.0) for t in types},
                values={t: rng.uniform(1.0, 5.0) for t in types},
                lost_bid_cost=rng.uniform(0.0, 1.0),
                budget=10.0,
            )
        )
    capacity = rng.uniform(10.0, 60.0)
    w = rng.uniform(0.1, 3.0)
    return StaticGame(players=players, capacity=capacity, utilization_weight=w)


def potential_identity_sweep(n_games: int, rng) -> list[OracleRecord]:
    records = []
    for g in range(n_games):
        game = random_uncontended_game(rng)
        types = game.type_ids
        profile = tuple(
            tuple(float(rng.uniform() < 0.5) for _ in types) for _ in game.players
        )
        player = rng.integers(0, len(game.players))
        new_alpha = tuple(float(rng.uniform() < 0.5) for _ in types)
        deviated = list(profile)
        deviated[player] = new_alpha
        du = uncontended_utility(game, deviated, player) - uncontended_utility(game, profile, player)
        dphi = potential_value(game, deviated) - potential_value(game, profile)
        residual = abs(du - dphi)
        records.append(
            OracleRecord(
                name=f"potential-identity[{g}]",
                inputs_digest=_digest(game.capacity, game.utilization_weight, profile, player, new_alpha),
                passed=residual <= IDENTITY_TOL,
                residual=residual,
            )
        )
    return records
