"""Reputation-weighted delegated-proof-of-stake consensus simulator.

Full nodes vote each epoch; the top-|M| voting results form the committee,
whose top-|D| members become active witnesses taking leader turns in a
seeded random order, the rest standing by. A produced block goes on chain
when strictly more than two thirds of the committee confirm it. Every round
every node's reputation moves by

    delta = w_vote * alpha + w_lead * beta + w_verify * gamma

with alpha = +-1 for voting/abstaining this epoch, beta = +-1 for a leader
whose block was accepted/rejected (0 for everyone else), gamma = +-1 for a
committee verifier judging the block correctly/incorrectly (0 otherwise),
and the result clamped to [0, 1].
"""

from __future__ import annotations

import csv
import enum
import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "VotingMode",
    "Behavior",
    "NORMAL_BEHAVIOR",
    "ABNORMAL_BEHAVIOR",
    "FullNode",
    "ReputationParams",
    "VotingBallot",
    "Committee",
    "BlockRecord",
    "BehaviorRecord",
    "ConsensusState",
    "ConsensusHistory",
    "cast_votes",
    "elect_witnesses",
    "run_round",
    "update_reputation",
    "run_epochs",
    "write_history_csv",
]


class VotingMode(enum.Enum):
    REPUTATION_WEIGHTED = "reputation"
    EQUAL_WEIGHT = "equal"


@dataclass(frozen=True)
class Behavior:
    """What a node does when voting, leading, and verifying.

    The default is a well-behaved node. The adversarial preset votes for
    low-reputation peers, produces invalid blocks, and verifies wrongly;
    scripts can override single fields round by round.
    """

    votes: bool = True
    supports_low_reputation: bool = False
    produces_block: bool = True
    produces_valid_block: bool = True
    verifies_correctly: bool = True


NORMAL_BEHAVIOR = Behavior()
ABNORMAL_BEHAVIOR = Behavior(
    supports_low_reputation=True,
    produces_valid_block=False,
    verifies_correctly=False,
)


@dataclass
class FullNode:
    id: int
    reputation: float = 0.5
    behavior: Behavior = NORMAL_BEHAVIOR
    #: optional per-round overrides keyed by global round index
    script: dict[int, Behavior] | None = None

    def behavior_at(self, global_round: int) -> Behavior:
        if self.script and global_round in self.script:
            return self.script[global_round]
        return self.behavior


@dataclass(frozen=True)
class ReputationParams:
    w_vote: float = 0.005
    w_lead: float = 0.05
    w_verify: float = 0.01
    theta: float = 0.5

    def __post_init__(self) -> None:
        if not (self.w_lead > self.w_verify > self.w_vote > 0):
            raise ValueError("weights must satisfy w_lead > w_verify > w_vote > 0")
        if not (0 < self.theta < 1):
            raise ValueError("theta must lie strictly between 0 and 1")


@dataclass(frozen=True)
class VotingBallot:
    voter_id: int
    supported: frozenset[int]


@dataclass(frozen=True)
class Committee:
    """One epoch's witness assignment, ranked by voting result."""

    members: tuple[int, ...]  # M, rank order
    active_order: tuple[int, ...]  # D, shuffled leader order
    standby: tuple[int, ...]  # E = M minus D, rank order
    voting_result: dict[int, float]


@dataclass(frozen=True)
class BlockRecord:
    """An accepted block; rejected attempts only show up as beta = -1."""

    epoch: int
    round_index: int
    producer_id: int
    payload_hash: str
    confirmations: int


@dataclass(frozen=True)
class BehaviorRecord:
    node_id: int
    alpha: int
    beta: int
    gamma: int
    delta: float
    reputation: float  # after applying delta
    role: str  # leader | witness | standby | none


@dataclass
class ConsensusState:
    epoch: int = -1
    round_in_epoch: int = 0
    global_round: int = 0
    committee: Committee | None = None
    leader_cursor: int = 0
    skipped: set[int] = field(default_factory=set)
    voted: frozenset[int] = frozenset()
    chain: list[BlockRecord] = field(default_factory=list)

    def start_epoch(self, committee: Committee, voted: frozenset[int]) -> None:
        self.epoch += 1
        self.round_in_epoch = 0
        self.committee = committee
        self.leader_cursor = 0
        self.skipped = set()
        self.voted = voted

    def next_leader(self) -> int | None:
        """Next unskipped node in leader order, None when exhausted."""
        assert self.committee is not None
        order = self.committee.active_order
        while self.leader_cursor < len(order):
            candidate = order[self.leader_cursor]
            if candidate not in self.skipped:
                return candidate
            self.leader_cursor += 1
        return None


def cast_votes(nodes: Sequence[FullNode], params: ReputationParams) -> list[VotingBallot]:
    """Epoch election ballots. Nothing here depends on the voting mode:
    weighting happens at tally time. Nodes with ``votes=False`` abstain.

    A well-behaved voter supports every other node at or above theta; the
    adversarial rule supports everyone strictly below it.
    """
    ballots = []
    for voter in nodes:
        if not voter.behavior.votes:
            continue
        if voter.behavior.supports_low_reputation:
            supported = frozenset(
                n.id for n in nodes if n.id != voter.id and n.reputation < params.theta
            )
        else:
            supported = frozenset(
                n.id for n in nodes if n.id != voter.id and n.reputation >= params.theta
            )
        ballots.append(VotingBallot(voter_id=voter.id, supported=supported))
    return ballots


def elect_witnesses(
    ballots: Sequence[VotingBallot],
    nodes: Sequence[FullNode],
    committee_size: int,
    active_size: int,
    mode: VotingMode,
    rng: np.random.Generator,
) -> Committee:
    """Tally ballots, rank nodes, and seat the committee.

    A supporter contributes its reputation under the reputation-weighted
    mode and exactly 1 under equal weighting. Ranking ties break on the
    lower id. The |D| leaders are shuffled into a random order by ``rng``.
    """
    if not (0 < active_size <= committee_size <= len(nodes)):
        raise ValueError("need 0 < active_size <= committee_size <= population")
    reputations = {n.id: n.reputation for n in nodes}
    result = {n.id: 0.0 for n in nodes}
    for ballot in ballots:
        weight = (
            reputations[ballot.voter_id]
            if mode is VotingMode.REPUTATION_WEIGHTED
            else 1.0
        )
        for target in ballot.supported:
            result[target] += weight
    ranking = sorted(result, key=lambda a: (-result[a], a))
    members = tuple(ranking[:committee_size])
    active = list(ranking[:active_size])
    order = tuple(int(active[i]) for i in rng.permutation(len(active)))
    standby = tuple(ranking[active_size:committee_size])
    return Committee(
        members=members, active_order=order, standby=standby, voting_result=result
    )


def update_reputation(node: FullNode, delta: float) -> float:
    """Apply a reputation delta, clamped so the value stays inside [0, 1]."""
    rep = node.reputation + delta
    if rep > 1.0:
        rep = 1.0
    elif rep < 0.0:
        rep = 0.0
    node.reputation = rep
    return rep


def _role_of(node_id: int, committee: Committee, leader_id: int) -> str:
    if node_id == leader_id:
        return "leader"
    if node_id in committee.active_order:
        return "witness"
    if node_id in committee.standby:
        return "standby"
    return "none"


def run_round(
    state: ConsensusState,
    nodes: Sequence[FullNode],
    params: ReputationParams,
    payload_hash: str | None = None,
) -> list[BehaviorRecord]:
    """One consensus round: leader attempt, verification, reputation sweep.

    The scheduled leader either produces nothing (it is skipped for the
    rest of the epoch and the round records no block) or produces a block
    that every other committee member verifies. Reputations of all nodes
    update afterwards, abstainers included.
    """
    committee = state.committee
    if committee is None:
        raise RuntimeError("no committee elected")
    leader_id = state.next_leader()
    if leader_id is None:
        raise RuntimeError("leader order exhausted for this epoch")
    state.leader_cursor += 1
    rnd = state.global_round
    by_id = {n.id: n for n in nodes}
    leader_behavior = by_id[leader_id].behavior_at(rnd)

    gamma: dict[int, int] = {n.id: 0 for n in nodes}
    accepted = False
    confirmations = 0
    if not leader_behavior.produces_block:
        state.skipped.add(leader_id)
    else:
        valid = leader_behavior.produces_valid_block
        for member_id in committee.members:
            if member_id == leader_id:
                continue
            correct = by_id[member_id].behavior_at(rnd).verifies_correctly
            gamma[member_id] = 1 if correct else -1
            if (valid and correct) or (not valid and not correct):
                confirmations += 1
        accepted = confirmations > (2.0 / 3.0) * len(committee.members)
        if accepted:
            if payload_hash is None:
                payload_hash = hashlib.sha256(
                    f"{state.epoch}:{rnd}".encode()
                ).hexdigest()
            state.chain.append(
                BlockRecord(
                    epoch=state.epoch,
                    round_index=rnd,
                    producer_id=leader_id,
                    payload_hash=payload_hash,
                    confirmations=confirmations,
                )
            )

    records = []
    for node in nodes:
        alpha = 1 if node.id in state.voted else -1
        beta = (1 if accepted else -1) if node.id == leader_id else 0
        delta = params.w_vote * alpha + params.w_lead * beta + params.w_verify * gamma[node.id]
        reputation = update_reputation(node, delta)
        records.append(
            BehaviorRecord(
                node_id=node.id,
                alpha=alpha,
                beta=beta,
                gamma=gamma[node.id],
                delta=delta,
                reputation=reputation,
                role=_role_of(node.id, committee, leader_id),
            )
        )
    state.round_in_epoch += 1
    state.global_round += 1
    return records


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    round_index: int
    node_id: int
    reputation: float
    role: str
    delta: float


@dataclass
class ConsensusHistory:
    rows: list[HistoryRow]
    chain: list[BlockRecord]
    committees: list[Committee]

    def rows_for(self, node_id: int) -> list[HistoryRow]:
        return [r for r in self.rows if r.node_id == node_id]


def run_epochs(
    nodes: Sequence[FullNode],
    params: ReputationParams,
    committee_size: int,
    active_size: int,
    n_epochs: int,
    mode: VotingMode = VotingMode.REPUTATION_WEIGHTED,
    seed: int = 0,
    committee_schedule: Sequence[Committee | None] | None = None,
    payload_provider: Callable[[int, int], str] | None = None,
) -> ConsensusHistory:
    """Full simulation: elect, run |D| rounds, update, re-elect.

    ``committee_schedule`` forces seating for the epochs where it is not
    None (ballots still flow, so voting reputation effects stay genuine);
    experiments use it to pin narratives that depend on who gets elected
    when. An epoch ends early only if every remaining leader was skipped.
    """
    if sorted(n.id for n in nodes) != list(range(len(nodes))):
        raise ValueError("node ids must be dense 0..n-1")
    rng = np.random.default_rng(seed)
    state = ConsensusState()
    history = ConsensusHistory(rows=[], chain=state.chain, committees=[])
    for epoch in range(n_epochs):
        ballots = cast_votes(nodes, params)
        voted = frozenset(b.voter_id for b in ballots)
        forced = committee_schedule[epoch] if committee_schedule is not None else None
        if forced is not None:
            committee = forced
            rng.permutation(active_size)  # keep the stream aligned
        else:
            committee = elect_witnesses(
                ballots, nodes, committee_size, active_size, mode, rng
            )
        state.start_epoch(committee, voted)
        history.committees.append(committee)
        for _ in range(len(committee.active_order)):
            if state.next_leader() is None:
                break  # fully skipped epoch ends early
            payload = (
                payload_provider(epoch, state.global_round)
                if payload_provider
                else None
            )
            for record in run_round(state, nodes, params, payload):
                history.rows.append(
                    HistoryRow(
                        epoch=epoch,
                        round_index=state.global_round - 1,
                        node_id=record.node_id,
                        reputation=record.reputation,
                        role=record.role,
                        delta=record.delta,
                    )
                )
    return history


def write_history_csv(history: ConsensusHistory, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "round", "node_id", "reputation", "role", "delta"])
        for row in history.rows:
            writer.writerow(
                [
                    row.epoch,
                    row.round_index,
                    row.node_id,
                    repr(row.reputation),
                    row.role,
                    repr(row.delta),
                ]
            )
