"""Signed information-trading rounds between the authority and vehicles.

One round walks the eight-step exchange: the authority publishes its task
list, vehicles answer with encrypted bid requests, the auction picks
winners, each winner gets an order, delivers sensed data, is paid exactly
once, and confirms, after which the confirmed trades are sealed into a
hash-chained block. Balances are Fractions so money is conserved exactly;
every verification failure aborts only the session it happened in.

Message security rides on a pluggable scheme from :mod:`trafficmarket.crypto`.
Randomness for each participant's key material and ciphertexts comes from
generators derived from (seed, role, vehicle id), which keeps a round's
bytes independent of processing order and reproducible end to end.
"""

from __future__ import annotations

import ast
import csv
import enum
import hashlib
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from trafficmarket.auction import tbsap
from trafficmarket.crypto import (
    DecryptionError,
    KeyPair,
    SignatureScheme,
)
from trafficmarket.model import AuctionInstance, AuctionOutcome

__all__ = [
    "ProtocolError",
    "MessageKind",
    "ProtocolMessage",
    "Certificate",
    "CertificateAuthority",
    "Account",
    "Participant",
    "TradingWorld",
    "SessionState",
    "TradingSession",
    "TransactionRecord",
    "TradeBlock",
    "RoundResult",
    "build_world",
    "verify_message",
    "pay_winner",
    "run_trading_round",
    "write_ledger_csv",
]

GENESIS_HASH = "0" * 64


class ProtocolError(Exception):
    """A party tried a step its session state does not allow."""


class MessageKind(enum.Enum):
    PUBLISH = "PUB"
    REQUEST = "REQ"
    ORDER = "ORD"
    DATA = "RES"
    CONFIRM = "CON"


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    sender: str
    session_id: str
    timestamp: int
    body: bytes  # ciphertext when encrypted, plaintext for broadcasts
    signature: bytes
    encrypted: bool


@dataclass(frozen=True)
class Certificate:
    subject: str
    public_key: bytes
    signature: bytes


def _certificate_bytes(subject: str, public_key: bytes) -> bytes:
    return b"cert:" + subject.encode() + b":" + public_key


class CertificateAuthority:
    def __init__(self, scheme: SignatureScheme, rng: np.random.Generator):
        self.scheme = scheme
        self.keys = scheme.generate_keypair(rng)

    def issue(self, subject: str, public_key: bytes) -> Certificate:
        signature = self.scheme.sign(
            self.keys.private, _certificate_bytes(subject, public_key)
        )
        return Certificate(subject=subject, public_key=public_key, signature=signature)

    def check(self, certificate: Certificate) -> bool:
        return self.scheme.verify(
            self.keys.public,
            _certificate_bytes(certificate.subject, certificate.public_key),
            certificate.signature,
        )


@dataclass
class Account:
    owner: str
    balance: Fraction


@dataclass
class Participant:
    name: str
    keys: KeyPair
    certificate: Certificate
    account: Account


@dataclass(frozen=True)
class TransactionRecord:
    session_id: str
    authority: str
    vehicle_id: int
    amount: str  # exact fraction, stringified for hashing
    data_digest: str
    confirmed_at: int

    def canonical(self) -> str:
        return (
            f"{self.session_id}:{self.authority}:{self.vehicle_id}:"
            f"{self.amount}:{self.data_digest}:{self.confirmed_at}"
        )


@dataclass(frozen=True)
class TradeBlock:
    index: int
    previous_hash: str
    records: tuple[TransactionRecord, ...]
    hash: str


def _block_hash(index: int, previous_hash: str, records) -> str:
    payload = f"{index}|{previous_hash}|" + "|".join(r.canonical() for r in records)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class TradingWorld:
    scheme: SignatureScheme
    ca: CertificateAuthority
    authority: Participant
    vehicles: dict[int, Participant]
    seed: int
    clock: int = 0
    ledger: list[TradeBlock] = field(default_factory=list)

    def next_timestamp(self) -> int:
        self.clock += 1
        return self.clock

    def append_block(self, records: Sequence[TransactionRecord]) -> TradeBlock:
        previous = self.ledger[-1].hash if self.ledger else GENESIS_HASH
        index = len(self.ledger)
        block = TradeBlock(
            index=index,
            previous_hash=previous,
            records=tuple(records),
            hash=_block_hash(index, previous, records),
        )
        self.ledger.append(block)
        return block

    def total_balance(self) -> Fraction:
        total = self.authority.account.balance
        for participant in self.vehicles.values():
            total += participant.account.balance
        return total


def build_world(
    instance: AuctionInstance,
    scheme: SignatureScheme,
    seed: int = 0,
    authority_balance: Fraction | float | None = None,
) -> TradingWorld:
    """Mint keys, certificates, and accounts for one authority and all vehicles.

    The authority's account is funded with the auction budget unless told
    otherwise; vehicles start empty.
    """
    ca = CertificateAuthority(scheme, np.random.default_rng([seed, 0]))
    authority_keys = scheme.generate_keypair(np.random.default_rng([seed, 1]))
    if authority_balance is None:
        authority_balance = instance.budget
    authority = Participant(
        name="authority",
        keys=authority_keys,
        certificate=ca.issue("authority", authority_keys.public),
        account=Account(owner="authority", balance=Fraction(authority_balance)),
    )
    vehicles = {}
    for vehicle in instance.vehicles:
        name = f"vehicle-{vehicle.id}"
        keys = scheme.generate_keypair(np.random.default_rng([seed, 2, vehicle.id]))
        vehicles[vehicle.id] = Participant(
            name=name,
            keys=keys,
            certificate=ca.issue(name, keys.public),
            account=Account(owner=name, balance=Fraction(0)),
        )
    return TradingWorld(
        scheme=scheme, ca=ca, authority=authority, vehicles=vehicles, seed=seed
    )


class SessionState(enum.Enum):
    PUBLISHED = "published"
    REQUESTED = "requested"
    ALLOCATED = "allocated"
    ORDERED = "ordered"
    DATA_DELIVERED = "data-delivered"
    PAID = "paid"
    CONFIRMED = "confirmed"
    ABORTED = "aborted"


@dataclass
class TradingSession:
    vehicle_id: int
    state: SessionState = SessionState.PUBLISHED
    transcript: list[ProtocolMessage] = field(default_factory=list)
    last_timestamp: int = 0
    failure: str | None = None
    paid_amount: Fraction | None = None
    data_digest: str | None = None
    confirmed_at: int | None = None

    def abort(self, reason: str) -> None:
        self.state = SessionState.ABORTED
        self.failure = reason


def _signing_bytes(
    kind: MessageKind, sender: str, session_id: str, timestamp: int, body: bytes
) -> bytes:
    header = f"{kind.value}|{sender}|{session_id}|{timestamp}|".encode()
    return header + hashlib.sha256(body).digest()


def _make_message(
    world: TradingWorld,
    kind: MessageKind,
    sender: Participant,
    session_id: str,
    plaintext: bytes,
    recipient: Participant | None = None,
    rng: np.random.Generator | None = None,
) -> ProtocolMessage:
    if recipient is not None:
        body = world.scheme.encrypt(recipient.keys.public, plaintext, rng)
    else:
        body = plaintext
    timestamp = world.next_timestamp()
    signature = world.scheme.sign(
        sender.keys.private,
        _signing_bytes(kind, sender.name, session_id, timestamp, body),
    )
    return ProtocolMessage(
        kind=kind,
        sender=sender.name,
        session_id=session_id,
        timestamp=timestamp,
        body=body,
        signature=signature,
        encrypted=recipient is not None,
    )


def verify_message(
    world: TradingWorld,
    message: ProtocolMessage,
    sender_certificate: Certificate,
    recipient_private: bytes | None = None,
    last_timestamp: int = 0,
) -> tuple[bytes | None, str | None]:
    """Check certificate, signature, decryptability, and freshness, in that
    order, stopping at the first failure. Returns (plaintext, None) on
    success and (None, reason) otherwise.
    """
    if not world.ca.check(sender_certificate):
        return None, "bad certificate"
    if sender_certificate.subject != message.sender:
        return None, "certificate subject mismatch"
    signed = _signing_bytes(
        message.kind, message.sender, message.session_id, message.timestamp,
        message.body,
    )
    if not world.scheme.verify(
        sender_certificate.public_key, signed, message.signature
    ):
        return None, "bad signature"
    if message.encrypted:
        if recipient_private is None:
            return None, "no decryption key"
        try:
            plaintext = world.scheme.decrypt(recipient_private, message.body)
        except DecryptionError:
            return None, "undecryptable"
    else:
        plaintext = message.body
    if message.timestamp <= last_timestamp:
        return None, "stale timestamp"
    return plaintext, None


def pay_winner(world: TradingWorld, session: TradingSession, amount: Fraction) -> None:
    """Move the payment to the vehicle, exactly once per session."""
    if session.state is not SessionState.DATA_DELIVERED:
        raise ProtocolError(
            f"vehicle {session.vehicle_id}: cannot pay from state {session.state.value}"
        )
    payer = world.authority.account
    if payer.balance < amount:
        raise ProtocolError("authority balance insufficient")
    payer.balance -= amount
    world.vehicles[session.vehicle_id].account.balance += amount
    session.paid_amount = amount
    session.state = SessionState.PAID


def _sensor_readings(vehicle_id: int, task_ids) -> tuple:
    """Deterministic stand-in for sensed data, one digest per covered task."""
    return tuple(
        (t, hashlib.sha256(f"reading:{vehicle_id}:{t}".encode()).hexdigest())
        for t in task_ids
    )


def _default_data_check(vehicle_id: int, task_ids, readings) -> bool:
    return tuple(readings) == _sensor_readings(vehicle_id, task_ids)


def _surviving_instance(
    instance: AuctionInstance, excluded: set[int]
) -> tuple[AuctionInstance, dict[int, int]]:
    """Re-index the non-excluded vehicles densely; map new ids back to old."""
    remap = {}
    vehicles = []
    for vehicle in instance.vehicles:
        if vehicle.id in excluded:
            continue
        remap[len(vehicles)] = vehicle.id
        vehicles.append(replace(vehicle, id=len(vehicles)))
    survived = AuctionInstance(
        tasks=instance.tasks,
        vehicles=tuple(vehicles),
        budget=instance.budget,
        city_side=instance.city_side,
    )
    return survived, remap


@dataclass
class RoundResult:
    outcome: AuctionOutcome
    sessions: dict[int, TradingSession]
    excluded: frozenset[int]
    records: tuple[TransactionRecord, ...]
    block: TradeBlock | None


def run_trading_round(
    world: TradingWorld,
    instance: AuctionInstance,
    mechanism: Callable[[AuctionInstance], AuctionOutcome] = tbsap,
    data_check: Callable[[int, tuple, tuple], bool] | None = None,
    tamper: Callable[[ProtocolMessage], ProtocolMessage] | None = None,
) -> RoundResult:
    """Run one complete trading round over ``instance``.

    Vehicles whose request leg fails verification are excluded and the
    auction runs on the survivors. ``tamper`` intercepts requests and data
    deliveries in flight (it receives every such message and returns the
    possibly altered one). If the authority cannot cover all payments the
    round aborts before any transfer.
    """
    if data_check is None:
        data_check = _default_data_check
    authority = world.authority
    scheme = world.scheme
    round_index = len(world.ledger)
    sessions = {v.id: TradingSession(v.id) for v in instance.vehicles}
    subset_of = {v.id: tuple(sorted(v.task_subset)) for v in instance.vehicles}
    vehicle_rng = {
        v.id: np.random.default_rng([world.seed, 3, round_index, v.id])
        for v in instance.vehicles
    }
    authority_rng = {
        v.id: np.random.default_rng([world.seed, 4, round_index, v.id])
        for v in instance.vehicles
    }

    # step 1: signed broadcast of the task catalogue
    publish_body = repr(
        (
            "publish",
            tuple((t.id, t.x, t.y, t.appraisement) for t in instance.tasks),
            instance.budget,
        )
    ).encode()
    publish = _make_message(
        world, MessageKind.PUBLISH, authority, f"round-{round_index}", publish_body
    )

    # step 2: vehicles validate the broadcast and submit encrypted requests
    requests: dict[int, ProtocolMessage] = {}
    for vid in sorted(sessions):
        session = sessions[vid]
        _, reason = verify_message(
            world, publish, authority.certificate, None, session.last_timestamp
        )
        if reason:
            session.abort(f"broadcast: {reason}")
            continue
        session.last_timestamp = publish.timestamp
        session.transcript.append(publish)
        body = repr(
            ("request", vid, subset_of[vid], instance.vehicle(vid).bid)
        ).encode()
        message = _make_message(
            world,
            MessageKind.REQUEST,
            world.vehicles[vid],
            f"round-{round_index}/vehicle-{vid}",
            body,
            recipient=authority,
            rng=vehicle_rng[vid],
        )
        if tamper is not None:
            message = tamper(message)
        session.transcript.append(message)
        session.state = SessionState.REQUESTED
        requests[vid] = message

    # step 3: the authority vets every request before allocating
    for vid in sorted(requests):
        session = sessions[vid]
        plaintext, reason = verify_message(
            world,
            requests[vid],
            world.vehicles[vid].certificate,
            authority.keys.private,
            session.last_timestamp,
        )
        if reason:
            session.abort(f"request: {reason}")
            continue
        session.last_timestamp = requests[vid].timestamp
        tag, claimed_id, claimed_subset, _bid = ast.literal_eval(plaintext.decode())
        if tag != "request" or claimed_id != vid or tuple(claimed_subset) != subset_of[vid]:
            session.abort("request: inconsistent payload")

    excluded = frozenset(
        vid for vid, s in sessions.items() if s.state is SessionState.ABORTED
    )
    survivors, remap = _surviving_instance(instance, set(excluded))
    sub_outcome = mechanism(survivors)
    winners = tuple(remap[w] for w in sub_outcome.winners)
    payments = {remap[w]: p for w, p in sub_outcome.payments.items()}
    outcome = AuctionOutcome(
        winners=winners,
        payments=payments,
        profit=sub_outcome.profit,
        total_bid=sub_outcome.total_bid,
    )
    for vid, session in sessions.items():
        if session.state is SessionState.REQUESTED:
            if vid in payments:
                session.state = SessionState.ALLOCATED
            else:
                session.abort("lost auction")

    # the authority must be able to cover every quoted payment before
    # anything moves
    total_due = sum((Fraction(payments[w]) for w in winners), Fraction(0))
    if authority.account.balance < total_due:
        for vid in winners:
            sessions[vid].abort("authority balance insufficient")
        return RoundResult(
            outcome=outcome,
            sessions=sessions,
            excluded=excluded,
            records=(),
            block=None,
        )

    # steps 4-8 per winner: order, deliver, check, pay, confirm
    records = []
    for vid in sorted(winners):
        session = sessions[vid]
        participant = world.vehicles[vid]
        session_id = f"round-{round_index}/vehicle-{vid}"

        order = _make_message(
            world,
            MessageKind.ORDER,
            authority,
            session_id,
            repr(("order", vid, subset_of[vid], repr(payments[vid]))).encode(),
            recipient=participant,
            rng=authority_rng[vid],
        )
        _, reason = verify_message(
            world, order, authority.certificate, participant.keys.private,
            session.last_timestamp,
        )
        if reason:
            session.abort(f"order: {reason}")
            continue
        session.last_timestamp = order.timestamp
        session.transcript.append(order)
        session.state = SessionState.ORDERED

        readings = _sensor_readings(vid, subset_of[vid])
        delivery = _make_message(
            world,
            MessageKind.DATA,
            participant,
            session_id,
            repr(("data", vid, readings)).encode(),
            recipient=authority,
            rng=vehicle_rng[vid],
        )
        if tamper is not None:
            delivery = tamper(delivery)
        session.transcript.append(delivery)
        plaintext, reason = verify_message(
            world, delivery, participant.certificate, authority.keys.private,
            session.last_timestamp,
        )
        if reason:
            session.abort(f"data: {reason}")
            continue
        session.last_timestamp = delivery.timestamp
        _, _, delivered = ast.literal_eval(plaintext.decode())
        if not data_check(vid, subset_of[vid], tuple(delivered)):
            session.abort("data rejected")
            continue
        session.data_digest = hashlib.sha256(plaintext).hexdigest()
        session.state = SessionState.DATA_DELIVERED

        pay_winner(world, session, Fraction(payments[vid]))

        confirm = _make_message(
            world,
            MessageKind.CONFIRM,
            participant,
            session_id,
            repr(("confirm", vid, str(session.paid_amount))).encode(),
            recipient=authority,
            rng=vehicle_rng[vid],
        )
        session.transcript.append(confirm)
        _, reason = verify_message(
            world, confirm, participant.certificate, authority.keys.private,
            session.last_timestamp,
        )
        if reason:
            session.abort(f"confirm: {reason}")
            continue
        session.last_timestamp = confirm.timestamp
        session.state = SessionState.CONFIRMED
        session.confirmed_at = confirm.timestamp
        records.append(
            TransactionRecord(
                session_id=session_id,
                authority=authority.name,
                vehicle_id=vid,
                amount=str(session.paid_amount),
                data_digest=session.data_digest,
                confirmed_at=confirm.timestamp,
            )
        )

    block = world.append_block(records) if records else None
    return RoundResult(
        outcome=outcome,
        sessions=sessions,
        excluded=excluded,
        records=tuple(records),
        block=block,
    )


def write_ledger_csv(world: TradingWorld, path) -> None:
    """Append-only view of confirmed trades, one record per line."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "ta_id", "vehicle_id", "payment", "block_id"])
        for block in world.ledger:
            for record in block.records:
                writer.writerow(
                    [record.session_id, record.authority, record.vehicle_id,
                     record.amount, block.index]
                )
