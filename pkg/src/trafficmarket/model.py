"""Core domain types and scenario generation.

A scenario lives on a square city map: sensing tasks with appraised values,
and vehicles that can each observe the tasks inside their detection circle.
Vehicles sell their observations to the traffic authority through a budgeted
reverse auction, so every vehicle carries a task subset, a true cost, and a
bid (equal to the cost unless a test deviates it).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

__all__ = [
    "Task",
    "Vehicle",
    "AuctionInstance",
    "AuctionOutcome",
    "ScenarioConfig",
    "generate_scenario",
    "coverage_value",
    "validate_instance",
    "paper_example",
    "dumps_scenario",
    "loads_scenario",
    "save_scenario",
    "load_scenario",
]


@dataclass(frozen=True)
class Task:
    """A sensing task at a fixed map position with appraisement > 0."""

    id: int
    x: float
    y: float
    appraisement: float


@dataclass(frozen=True)
class Vehicle:
    """A seller: the tasks it can observe, what observing costs it, its bid.

    ``task_subset`` holds task ids. When built from geometry it equals
    { t : dist(vehicle, t) < detection_distance }, strict inequality.
    """

    id: int
    x: float
    y: float
    detection_distance: float
    true_cost: float
    task_subset: frozenset[int]
    bid: float


@dataclass(frozen=True)
class AuctionInstance:
    """Immutable auction input: tasks, vehicles, and the buyer's budget."""

    tasks: tuple[Task, ...]
    vehicles: tuple[Vehicle, ...]
    budget: float
    city_side: float = 1000.0

    def task_values(self) -> np.ndarray:
        return np.array([t.appraisement for t in self.tasks], dtype=float)

    def vehicle(self, vehicle_id: int) -> Vehicle:
        v = self.vehicles[vehicle_id]
        if v.id != vehicle_id:
            raise KeyError(f"vehicle ids are not dense: {vehicle_id}")
        return v

    def with_budget(self, budget: float) -> "AuctionInstance":
        # zero is allowed and buys nothing; only negative budgets are invalid
        if budget < 0:
            raise ValueError("budget must be nonnegative")
        return replace(self, budget=budget)

    def with_bid(self, vehicle_id: int, bid: float) -> "AuctionInstance":
        """Copy of the instance with one vehicle's bid replaced."""
        vehicles = tuple(
            replace(v, bid=bid) if v.id == vehicle_id else v for v in self.vehicles
        )
        if not any(v.id == vehicle_id for v in self.vehicles):
            raise KeyError(f"no vehicle with id {vehicle_id}")
        return replace(self, vehicles=vehicles)


@dataclass(frozen=True)
class AuctionOutcome:
    """Result of running a mechanism: winner order, payments, profit.

    ``winners`` preserves selection order where the mechanism is sequential.
    ``profit`` is coverage value of the winner set minus total payments.
    """

    winners: tuple[int, ...]
    payments: dict[int, float]
    profit: float
    total_bid: float


#: Sampling intervals below follow the scenario model: appraisements and the
#: cost factor kappa are drawn from half-open (0, hi] so zero values cannot
#: occur; detection distances are uniform on [lo, hi).
@dataclass(frozen=True)
class ScenarioConfig:
    n_tasks: int
    n_vehicles: int
    budget: float
    rng_seed: int = 0
    city_side: float = 1000.0
    detection_range: tuple[float, float] = (10.0, 30.0)
    appraisement_max: float = 10.0
    kappa_max: float = 5.0

    def __post_init__(self) -> None:
        if self.n_tasks < 0 or self.n_vehicles < 0:
            raise ValueError("counts must be nonnegative")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.city_side <= 0:
            raise ValueError("city_side must be positive")
        lo, hi = self.detection_range
        if not (0 < lo <= hi):
            raise ValueError("detection_range must satisfy 0 < lo <= hi")
        if self.appraisement_max <= 0 or self.kappa_max <= 0:
            raise ValueError("sampling upper bounds must be positive")


def _upper_half_open(rng: np.random.Generator, hi: float) -> float:
    # uniform on (0, hi]: rng.uniform(0, hi) covers [0, hi), flip it.
    return hi - rng.uniform(0.0, hi)


def generate_scenario(config: ScenarioConfig) -> AuctionInstance:
    """Sample a scenario deterministically from the config seed.

    Tasks first, then vehicles, each consuming a fixed number of draws so a
    placement never shifts another's randomness. A placement whose detection
    circle covers no task would have cost 0 and nothing to sell; it is
    dropped and the surviving vehicles are re-indexed densely.
    """
    rng = np.random.default_rng(config.rng_seed)
    side = config.city_side

    tasks = []
    for j in range(config.n_tasks):
        x = rng.uniform(0.0, side)
        y = rng.uniform(0.0, side)
        a = _upper_half_open(rng, config.appraisement_max)
        tasks.append(Task(id=j, x=x, y=y, appraisement=a))

    lo, hi = config.detection_range
    vehicles = []
    for _ in range(config.n_vehicles):
        x = rng.uniform(0.0, side)
        y = rng.uniform(0.0, side)
        d = rng.uniform(lo, hi)
        kappa = _upper_half_open(rng, config.kappa_max)
        d2 = d * d
        subset = frozenset(
            t.id for t in tasks if (t.x - x) ** 2 + (t.y - y) ** 2 < d2
        )
        if not subset:
            continue
        cost = kappa * len(subset)
        vehicles.append(
            Vehicle(
                id=len(vehicles),
                x=x,
                y=y,
                detection_distance=d,
                true_cost=cost,
                task_subset=subset,
                bid=cost,
            )
        )

    return AuctionInstance(
        tasks=tuple(tasks),
        vehicles=tuple(vehicles),
        budget=config.budget,
        city_side=side,
    )


def coverage_value(winners: Iterable[int], instance: AuctionInstance) -> float:
    """Total appraisement over the union of the winners' task subsets."""
    covered: set[int] = set()
    for vid in winners:
        covered.update(instance.vehicle(vid).task_subset)
    values = {t.id: t.appraisement for t in instance.tasks}
    unknown = covered - values.keys()
    if unknown:
        raise ValueError(f"task ids not in instance: {sorted(unknown)}")
    return float(sum(values[t] for t in covered))


def validate_instance(instance: AuctionInstance) -> None:
    """Structural checks: dense ids, valid subsets, positive values."""
    task_ids = {t.id for t in instance.tasks}
    if task_ids != set(range(len(instance.tasks))):
        raise ValueError("task ids must be dense 0..m-1")
    if [v.id for v in instance.vehicles] != list(range(len(instance.vehicles))):
        raise ValueError("vehicle ids must be dense 0..n-1")
    if instance.budget < 0:
        raise ValueError("budget must be nonnegative")
    for t in instance.tasks:
        if t.appraisement <= 0:
            raise ValueError(f"task {t.id} appraisement must be positive")
    for v in instance.vehicles:
        if v.bid < 0 or v.true_cost < 0:
            raise ValueError(f"vehicle {v.id} cost and bid must be nonnegative")
        if not v.task_subset <= task_ids:
            raise ValueError(f"vehicle {v.id} references unknown tasks")


def paper_example() -> AuctionInstance:
    """The bundled three-vehicle, five-task example scenario.

    Task subsets and costs are fixed by hand (positions are placeholders and
    do not derive the subsets). Appraisements (2,3,4,2,5), budget 5, every
    cost and bid 2. Exposed on the CLI as scenario name ``paper-example``.
    """
    values = (2.0, 3.0, 4.0, 2.0, 5.0)
    tasks = tuple(
        Task(id=j, x=100.0 * j, y=0.0, appraisement=a) for j, a in enumerate(values)
    )
    subsets = (frozenset({0, 2, 4}), frozenset({0, 1, 4}), frozenset({2, 3, 4}))
    vehicles = tuple(
        Vehicle(
            id=i,
            x=100.0 * i,
            y=50.0,
            detection_distance=0.0,
            true_cost=2.0,
            task_subset=subset,
            bid=2.0,
        )
        for i, subset in enumerate(subsets)
    )
    return AuctionInstance(tasks=tasks, vehicles=vehicles, budget=5.0)


# Scenario files are line oriented: one record per line, fields separated by
# single spaces, floats written with repr so parsing round-trips exactly.
#   scenario v1
#   city <side>
#   budget <B>
#   task <id> <x> <y> <appraisement>
#   vehicle <id> <x> <y> <detection_distance> <true_cost> <bid> <t,t,...|->
_HEADER = "scenario v1"


def dumps_scenario(instance: AuctionInstance) -> str:
    lines = [_HEADER]
    lines.append(f"city {instance.city_side!r}")
    lines.append(f"budget {instance.budget!r}")
    for t in instance.tasks:
        lines.append(f"task {t.id} {t.x!r} {t.y!r} {t.appraisement!r}")
    for v in instance.vehicles:
        subset = ",".join(str(t) for t in sorted(v.task_subset)) or "-"
        lines.append(
            f"vehicle {v.id} {v.x!r} {v.y!r} {v.detection_distance!r} "
            f"{v.true_cost!r} {v.bid!r} {subset}"
        )
    return "\n".join(lines) + "\n"


def loads_scenario(text: str) -> AuctionInstance:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _HEADER:
        raise ValueError(f"expected header {_HEADER!r}")
    city = 1000.0
    budget = None
    tasks: list[Task] = []
    vehicles: list[Vehicle] = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "city":
                city = float(parts[1])
            elif kind == "budget":
                budget = float(parts[1])
            elif kind == "task":
                tasks.append(
                    Task(
                        id=int(parts[1]),
                        x=float(parts[2]),
                        y=float(parts[3]),
                        appraisement=float(parts[4]),
                    )
                )
            elif kind == "vehicle":
                subset = (
                    frozenset()
                    if parts[7] == "-"
                    else frozenset(int(s) for s in parts[7].split(","))
                )
                vehicles.append(
                    Vehicle(
                        id=int(parts[1]),
                        x=float(parts[2]),
                        y=float(parts[3]),
                        detection_distance=float(parts[4]),
                        true_cost=float(parts[5]),
                        bid=float(parts[6]),
                        task_subset=subset,
                    )
                )
            else:
                raise ValueError(f"unknown record {kind!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if budget is None:
        raise ValueError("missing budget record")
    instance = AuctionInstance(
        tasks=tuple(tasks), vehicles=tuple(vehicles), budget=budget, city_side=city
    )
    validate_instance(instance)
    return instance


def save_scenario(instance: AuctionInstance, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps_scenario(instance))


def load_scenario(path) -> AuctionInstance:
    with open(path, "r", encoding="ascii") as fh:
        return loads_scenario(fh.read())
