"""Budgeted reverse auction mechanisms.

The buyer holds budget B and wants task coverage; each vehicle i offers its
task subset T_i at bid b_i. For a winner set W the coverage value A(W) is the
appraisement sum over the union of subsets, the reduced profit is
Pbar(W) = A(W) - sum(b_i), and a vehicle's unit marginal gain against a
partial selection X is Phat(v|X) = (A(v|X) - b_v) / b_v.

Two mechanisms share the greedy core but differ in the stop rule, and the
difference is deliberate:

* ``greedy_heuristic`` filters: it keeps a candidate pool restricted to bids
  that still fit the remaining budget and continues until the pool is empty
  or the best unit gain turns negative. Winners are paid their bids. High
  profit, not truthful.
* ``tbsap`` breaks: it always considers every unselected vehicle and stops
  outright when the best candidate has negative unit gain or does not fit
  the budget. Winners are paid their critical bid, the supremum of bids at
  which they would still win with everyone else fixed, which makes truthful
  bidding a dominant strategy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from trafficmarket.model import (
    AuctionInstance,
    AuctionOutcome,
    coverage_value,
    validate_instance,
)

__all__ = [
    "MarginalGain",
    "PaymentStep",
    "PaymentTrace",
    "NotWinnerError",
    "SizeLimitError",
    "reduced_profit",
    "marginal_gain",
    "greedy_heuristic",
    "tbsap_allocate",
    "tbsap_payment",
    "tbsap",
    "brute_force_optimum",
    "outcome_csv_rows",
    "write_outcome_csv",
]

#: brute_force_optimum enumerates all subsets; beyond this it refuses to run.
BRUTE_FORCE_MAX_VEHICLES = 20


class NotWinnerError(ValueError):
    """Raised when a payment is requested for a vehicle that did not win."""


class SizeLimitError(ValueError):
    """Raised when the exhaustive oracle is asked for an oversized instance."""


@dataclass(frozen=True)
class MarginalGain:
    vehicle_id: int
    gain: float  # Pbar(v|X) = A(v|X) - b_v
    unit_gain: float  # Phat(v|X) = gain / b_v


@dataclass(frozen=True)
class PaymentStep:
    """One candidate position in the critical-bid scan over V minus i.

    ``replacement_bid`` is the bid at which the priced vehicle would tie the
    candidate's unit gain at this position; ``budget_slack`` is what the
    budget still admits here. The position supports winning bids up to the
    smaller of the two.
    """

    candidate_id: int
    replacement_bid: float
    budget_slack: float
    contribution: float


@dataclass(frozen=True)
class PaymentTrace:
    vehicle_id: int
    candidates: tuple[PaymentStep, ...]
    tail_value: float | None  # marginal coverage left for the priced vehicle
    tail_slack: float | None
    payment: float


def reduced_profit(winners: Iterable[int], instance: AuctionInstance) -> float:
    """Pbar(W): coverage value minus the winners' bid total."""
    ids = list(winners)
    total_bid = sum(instance.vehicle(v).bid for v in ids)
    return coverage_value(ids, instance) - total_bid


def marginal_gain(
    vehicle_id: int, selected: Iterable[int], instance: AuctionInstance
) -> MarginalGain:
    """Direct evaluation of Pbar(v|X) and Phat(v|X), no incremental state."""
    vehicle = instance.vehicle(vehicle_id)
    if vehicle.bid <= 0:
        raise ValueError("unit gain undefined for nonpositive bid")
    covered: set[int] = set()
    for vid in selected:
        covered.update(instance.vehicle(vid).task_subset)
    values = {t.id: t.appraisement for t in instance.tasks}
    added = sum(values[t] for t in vehicle.task_subset - covered)
    gain = added - vehicle.bid
    return MarginalGain(vehicle_id, gain, gain / vehicle.bid)


class _CoverageState:
    """Per-vehicle marginal coverage, updated as vehicles are selected."""

    __slots__ = ("values", "subsets", "members", "bids", "gain", "covered")

    def __init__(self, instance: AuctionInstance):
        validate_instance(instance)
        n = len(instance.vehicles)
        m = len(instance.tasks)
        self.values = instance.task_values()
        self.bids = np.array([v.bid for v in instance.vehicles], dtype=float)
        if n and (self.bids <= 0).any():
            bad = int(np.argmax(self.bids <= 0))
            raise ValueError(f"vehicle {bad}: bids must be positive in auctions")
        self.subsets = [
            np.fromiter(sorted(v.task_subset), dtype=np.int64, count=len(v.task_subset))
            for v in instance.vehicles
        ]
        members: list[list[int]] = [[] for _ in range(m)]
        for v in instance.vehicles:
            for t in v.task_subset:
                members[t].append(v.id)
        self.members = [np.array(ids, dtype=np.int64) for ids in members]
        self.covered = np.zeros(m, dtype=bool)
        # initial marginal coverage = full subset value
        self.gain = np.array(
            [float(self.values[s].sum()) for s in self.subsets], dtype=float
        )

    def select(self, vehicle_id: int) -> None:
        for t in self.subsets[vehicle_id]:
            if not self.covered[t]:
                self.covered[t] = True
                self.gain[self.members[t]] -= self.values[t]


@dataclass
class _Pick:
    candidate: int
    bid: float
    candidate_gain: float  # A(c | Y) before selecting c
    tracked_gain: float  # A(i | Y) at the same moment, nan if untracked
    spent_before: float


@dataclass
class _BreakRun:
    order: list[int]
    picks: list[_Pick]
    ending: str  # 'exhausted' | 'negative' | 'budget'
    end_pick: _Pick | None  # the candidate that triggered a 'budget' break
    end_tracked_gain: float
    end_spent: float


def _break_run(
    state: _CoverageState,
    budget: float,
    exclude: int | None = None,
    track: int | None = None,
) -> _BreakRun:
    """Greedy by unit gain with break-on-stop semantics.

    Ties in the argmax go to the lowest vehicle id (np.argmax returns the
    first maximum and the array is id-indexed). With ``exclude`` set, that
    vehicle is never picked but its marginal coverage keeps being tracked.
    """
    n = len(state.bids)
    remaining = np.ones(n, dtype=bool)
    if exclude is not None:
        remaining[exclude] = False
    order: list[int] = []
    picks: list[_Pick] = []
    spent = 0.0

    def tracked() -> float:
        return float(state.gain[track]) if track is not None else float("nan")

    while remaining.any():
        unit = np.where(remaining, (state.gain - state.bids) / state.bids, -np.inf)
        k = int(np.argmax(unit))
        if unit[k] < 0:
            return _BreakRun(order, picks, "negative", None, tracked(), spent)
        if spent + state.bids[k] > budget:
            end = _Pick(k, float(state.bids[k]), float(state.gain[k]), tracked(), spent)
            return _BreakRun(order, picks, "budget", end, tracked(), spent)
        picks.append(
            _Pick(k, float(state.bids[k]), float(state.gain[k]), tracked(), spent)
        )
        order.append(k)
        remaining[k] = False
        state.select(k)
        spent += float(state.bids[k])
    return _BreakRun(order, picks, "exhausted", None, tracked(), spent)


def greedy_heuristic(instance: AuctionInstance) -> AuctionOutcome:
    """Filter-and-continue greedy; winners are paid their bids.

    Each iteration restricts candidates to bids within the remaining budget,
    picks the best unit gain among them, and stops only when the pool is
    empty or the best remaining unit gain is negative.
    """
    state = _CoverageState(instance)
    budget = instance.budget
    n = len(state.bids)
    remaining = np.ones(n, dtype=bool)
    order: list[int] = []
    spent = 0.0
    while True:
        feasible = remaining & (state.bids <= budget - spent)
        if not feasible.any():
            break
        unit = np.where(feasible, (state.gain - state.bids) / state.bids, -np.inf)
        k = int(np.argmax(unit))
        if unit[k] < 0:
            break
        order.append(k)
        remaining[k] = False
        state.select(k)
        spent += float(state.bids[k])
    payments = {v: float(instance.vehicle(v).bid) for v in order}
    profit = coverage_value(order, instance) - sum(payments.values())
    return AuctionOutcome(
        winners=tuple(order), payments=payments, profit=profit, total_bid=spent
    )


def tbsap_allocate(instance: AuctionInstance) -> list[int]:
    """Winner selection stage: greedy by unit gain, break on first stop."""
    run = _break_run(_CoverageState(instance), instance.budget)
    return run.order


def _critical_payment(instance: AuctionInstance, vehicle_id: int) -> PaymentTrace:
    state = _CoverageState(instance)
    budget = instance.budget
    run = _break_run(state, budget, exclude=vehicle_id, track=vehicle_id)

    # Each position j the priced vehicle could have been picked at supports
    # bids up to min(replacement bid, remaining budget): the replacement bid
    # ties the candidate's unit gain, and anything above the slack makes the
    # allocation loop break on budget before the vehicle is in.
    steps: list[PaymentStep] = []

    def add_step(pick: _Pick) -> None:
        raw = pick.bid * pick.tracked_gain / pick.candidate_gain
        slack = budget - pick.spent_before
        steps.append(PaymentStep(pick.candidate, raw, slack, min(raw, slack)))

    for pick in run.picks:
        add_step(pick)

    tail_value = tail_slack = None
    contributions = [s.contribution for s in steps]
    if run.ending == "budget":
        # The breaking candidate's position is still reachable by outbidding
        # it; positions beyond it are not, since the loop stops there.
        assert run.end_pick is not None
        add_step(run.end_pick)
        contributions.append(steps[-1].contribution)
    else:
        # Run ended with every remaining unit gain negative (or nobody
        # left): the priced vehicle can also append at the end with any bid
        # that keeps its own unit gain nonnegative and fits the budget.
        tail_value = run.end_tracked_gain
        tail_slack = budget - run.end_spent
        contributions.append(min(tail_value, tail_slack))

    assert contributions, "a winner always has at least one feasible position"
    payment = max(contributions)
    return PaymentTrace(
        vehicle_id=vehicle_id,
        candidates=tuple(steps),
        tail_value=tail_value,
        tail_slack=tail_slack,
        payment=payment,
    )


def tbsap_payment(vehicle_id: int, instance: AuctionInstance) -> PaymentTrace:
    """Critical bid for a winner: the threshold above which it loses.

    Scans the selection order over the other vehicles. Position by position
    it records the bid that would tie the candidate picked there, clamped by
    the budget slack at that point; when the scan ends for a reason other
    than a budget break, the vehicle could also be appended at the end, so
    its leftover marginal coverage (clamped the same way) joins the pool.
    The payment is the maximum over these feasible positions. It never
    depends on the winner's own bid.
    """
    winners = tbsap_allocate(instance)
    if vehicle_id not in winners:
        raise NotWinnerError(f"vehicle {vehicle_id} is not a winner")
    return _critical_payment(instance, vehicle_id)


def tbsap(instance: AuctionInstance) -> AuctionOutcome:
    """Truthful budgeted auction: break-greedy allocation, critical payments."""
    winners = tbsap_allocate(instance)
    payments = {
        v: _critical_payment(instance, v).payment for v in winners
    }
    total_bid = float(sum(instance.vehicle(v).bid for v in winners))
    profit = coverage_value(winners, instance) - sum(payments.values())
    return AuctionOutcome(
        winners=tuple(winners), payments=payments, profit=profit, total_bid=total_bid
    )


def brute_force_optimum(instance: AuctionInstance) -> AuctionOutcome:
    """Exhaustive maximizer of Pbar(W) subject to the budget.

    Reference oracle for small instances; refuses more than
    ``BRUTE_FORCE_MAX_VEHICLES`` vehicles. Payments equal bids. Ties keep
    the first maximum found with vehicles considered in id order,
    include-branch first, so tied optima resolve toward lower ids.
    """
    validate_instance(instance)
    n = len(instance.vehicles)
    if n > BRUTE_FORCE_MAX_VEHICLES:
        raise SizeLimitError(
            f"brute force limited to {BRUTE_FORCE_MAX_VEHICLES} vehicles, got {n}"
        )
    values = {t.id: t.appraisement for t in instance.tasks}
    subsets = [sorted(v.task_subset) for v in instance.vehicles]
    bids = [v.bid for v in instance.vehicles]
    budget = instance.budget

    counts: dict[int, int] = {t.id: 0 for t in instance.tasks}
    best_profit = 0.0
    best_set: tuple[int, ...] = ()
    chosen: list[int] = []

    def recurse(idx: int, value: float, spent: float) -> None:
        nonlocal best_profit, best_set
        if idx == n:
            profit = value - spent
            if profit > best_profit:
                best_profit = profit
                best_set = tuple(chosen)
            return
        if spent + bids[idx] <= budget:
            added = 0.0
            for t in subsets[idx]:
                if counts[t] == 0:
                    added += values[t]
                counts[t] += 1
            chosen.append(idx)
            recurse(idx + 1, value + added, spent + bids[idx])
            chosen.pop()
            for t in subsets[idx]:
                counts[t] -= 1
        recurse(idx + 1, value, spent)

    recurse(0, 0.0, 0.0)
    payments = {v: float(bids[v]) for v in best_set}
    total_bid = float(sum(bids[v] for v in best_set))
    return AuctionOutcome(
        winners=best_set, payments=payments, profit=best_profit, total_bid=total_bid
    )


def outcome_csv_rows(
    outcome: AuctionOutcome, instance: AuctionInstance
) -> list[tuple[int, float, float, float]]:
    """One row per winner: (vehicle_id, bid, payment, profit of the outcome)."""
    return [
        (v, float(instance.vehicle(v).bid), outcome.payments[v], outcome.profit)
        for v in outcome.winners
    ]


def write_outcome_csv(outcome: AuctionOutcome, instance: AuctionInstance, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vehicle_id", "bid", "payment", "profit"])
        for row in outcome_csv_rows(outcome, instance):
            writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
