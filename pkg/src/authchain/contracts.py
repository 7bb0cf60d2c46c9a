"""The decision engine's two smart contracts and the priority-rule store.

Authentication checks that the requesting key is registered in chain
memory, that the request is fresh, and that its signature verifies; on
success it encodes the registered user metadata and the request into bit
vectors and hands an in-process verified payload to authorization.  The
payload is never read back from the mempool, which closes the forgery
hole an unsigned hand-off would otherwise open.

Authorization runs the learned model over (user bits, resource bits),
thresholds the four scores into a grant mask, then filters the mask
through the ordered priority rules: the first matching rule wins, DENY
clears the operations it names, ALLOW sets them, and no match leaves the
model's mask untouched.  Banning a user inserts a DENY-all rule at the
front of the order, so every later decision for that user fails closed.

All functions here are pure over their inputs; rule-store mutation is
serialized by the caller through the single ledger writer.
"""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from . import crypto
from .ledger import AccReqTx, VerifiedTx, resource_key, tx_signing_bytes, user_key
from .model import (
    DecisionModel,
    N_OPERATIONS,
    OPERATIONS,
    binary_repr,
    infer,
    operation_index,
    threshold_decide,
)

DEFAULT_FRESHNESS_WINDOW = 120
RESOURCE_ID_BITS = 32
OPERATION_BITS = 4


class DenialReason(Enum):
    UNAUTHENTICATED = "unauthenticated"
    MODEL_DENIED = "model-denied"
    POLICY_DENIED = "policy-denied"
    STALE = "stale"
    WRONG_RESOURCE = "wrong-resource"
    REPLAY = "replay"


#: Denial reasons that count toward the repeated-misuse ban threshold.
BAN_COUNTED_REASONS = frozenset(
    {DenialReason.WRONG_RESOURCE, DenialReason.MODEL_DENIED, DenialReason.POLICY_DENIED}
)


@dataclass(frozen=True)
class Denial:
    reason: DenialReason
    detail: str = ""
    mask: tuple[bool, ...] | None = None  # final mask when authorization computed one


@dataclass(frozen=True)
class VerifiedPayload:
    """Successful authentication result, input to authorization."""

    timestamp: int
    user_bits: tuple[int, ...]
    request_bits: tuple[int, ...]
    user_pk: bytes
    resource_id: int
    operation: str

    def to_tx(self) -> VerifiedTx:
        return VerifiedTx(
            timestamp=self.timestamp,
            user_bits="".join(str(b) for b in self.user_bits),
            request_bits="".join(str(b) for b in self.request_bits),
            user_pk=self.user_pk,
        )


@dataclass(frozen=True)
class AccessList:
    """Final grant mask with its provenance."""

    grants: tuple[bool, ...]
    scores: tuple[float, ...]
    rule: "PriorityRule | None"
    requested: str


ALLOW = "ALLOW"
DENY = "DENY"
WILDCARD = "*"


@dataclass(frozen=True)
class PriorityRule:
    """Organizational override applied after model inference.

    ``subject`` is a user public-key hash (hex) or ``*``; ``resource`` is a
    decimal resource id or ``*``.  Rules are evaluated in ordinal order and
    the first match wins.
    """

    ordinal: int
    subject: str
    resource: str
    operations: tuple[bool, ...]
    effect: str

    def __post_init__(self) -> None:
        if self.effect not in (ALLOW, DENY):
            raise ValueError(f"effect must be ALLOW or DENY, got {self.effect!r}")
        if len(self.operations) != N_OPERATIONS:
            raise ValueError(f"operations mask must have {N_OPERATIONS} entries")

    def matches(self, subject_hash: str, resource_id: int) -> bool:
        if self.subject != WILDCARD and self.subject != subject_hash:
            return False
        if self.resource != WILDCARD and self.resource != str(int(resource_id)):
            return False
        return True

    def to_dict(self) -> dict:
        return {
            "ordinal": self.ordinal,
            "subject": self.subject,
            "resource": self.resource,
            "operations": [bool(o) for o in self.operations],
            "effect": self.effect,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorityRule":
        return cls(
            ordinal=int(d["ordinal"]),
            subject=str(d["subject"]),
            resource=str(d["resource"]),
            operations=tuple(bool(o) for o in d["operations"]),
            effect=str(d["effect"]),
        )


class RuleStore:
    """Ordered priority rules plus the set of banned user key hashes."""

    def __init__(self, rules: tuple[PriorityRule, ...] = ()) -> None:
        self._rules: list[PriorityRule] = []
        self.banned: set[str] = set()
        for rule in rules:
            self.add(rule)

    @property
    def rules(self) -> tuple[PriorityRule, ...]:
        return tuple(self._rules)

    def __len__(self) -> int:
        return len(self._rules)

    def add(self, rule: PriorityRule) -> None:
        if any(r.ordinal == rule.ordinal for r in self._rules):
            raise ValueError(f"duplicate rule ordinal {rule.ordinal}")
        self._rules.append(rule)
        self._rules.sort(key=lambda r: r.ordinal)

    def next_ordinal(self) -> int:
        return max((r.ordinal for r in self._rules), default=-1) + 1

    def first_match(self, subject_hash: str, resource_id: int) -> PriorityRule | None:
        for rule in self._rules:
            if rule.matches(subject_hash, resource_id):
                return rule
        return None

    # -- persistence --------------------------------------------------------

    def to_state(self) -> dict:
        return {
            "rules": [r.to_dict() for r in self._rules],
            "banned": sorted(self.banned),
        }

    @classmethod
    def from_state(cls, state: dict) -> "RuleStore":
        store = cls(tuple(PriorityRule.from_dict(d) for d in state.get("rules", [])))
        store.banned = set(state.get("banned", []))
        return store

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["ordinal", "subject", "resource", "ops", "effect"])
            for r in self._rules:
                ops = WILDCARD if all(r.operations) else "|".join(
                    name for name, on in zip(OPERATIONS, r.operations) if on
                )
                writer.writerow([r.ordinal, r.subject, r.resource, ops, r.effect])

    @classmethod
    def from_csv(cls, path) -> "RuleStore":
        store = cls()
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = _csv.DictReader(fh)
            for row in reader:
                store.add(
                    PriorityRule(
                        ordinal=int(row["ordinal"]),
                        subject=row["subject"],
                        resource=row["resource"],
                        operations=parse_ops(row["ops"]),
                        effect=row["effect"].strip().upper(),
                    )
                )
        return store


def parse_ops(text: str) -> tuple[bool, ...]:
    """Operation mask from a pipe-separated list of names, or ``*`` for all."""
    text = text.strip()
    if text == WILDCARD:
        return (True,) * N_OPERATIONS
    wanted = {part.strip() for part in text.split("|") if part.strip()}
    unknown = wanted - set(OPERATIONS)
    if unknown:
        raise ValueError(f"unknown operations {sorted(unknown)}")
    return tuple(name in wanted for name in OPERATIONS)


# ---------------------------------------------------------------------------
# Contract functions
# ---------------------------------------------------------------------------

def access_verification(
    tx: AccReqTx,
    memory: Mapping[str, Any],
    now: int,
    window: int = DEFAULT_FRESHNESS_WINDOW,
) -> bool:
    """Membership, freshness, and signature check for an access request.

    Defaults to False; True only when the requesting key hash is registered
    in chain memory, the timestamp is inside the freshness window, and the
    signature verifies over the request's canonical bytes.
    """
    if user_key(tx.user_pk) not in memory:
        return False
    if abs(now - tx.timestamp) > window:
        return False
    return crypto.verify_sig(tx.user_pk, tx_signing_bytes(tx), tx.sig)


def _metadata_bits(attrs) -> tuple[int, ...]:
    bits: list[int] = []
    for a in attrs:
        bits.extend(binary_repr(int(a), 4))
    return tuple(bits)


def authenticate(
    tx: AccReqTx,
    memory: Mapping[str, Any],
    now: int,
    window: int = DEFAULT_FRESHNESS_WINDOW,
) -> VerifiedPayload | Denial:
    """Authentication contract: verify the requester, emit the hand-off.

    The user bits encode the metadata registered for the key at setup time,
    not the key itself; the request bits encode the resource id and the
    requested operation.
    """
    if not access_verification(tx, memory, now, window):
        return Denial(DenialReason.UNAUTHENTICATED, "access verification failed")
    record = memory[user_key(tx.user_pk)]
    try:
        request_bits = binary_repr(tx.resource_id, RESOURCE_ID_BITS) + binary_repr(
            operation_index(tx.operation), OPERATION_BITS
        )
    except ValueError:
        return Denial(DenialReason.WRONG_RESOURCE, "unencodable request info")
    return VerifiedPayload(
        timestamp=tx.timestamp,
        user_bits=_metadata_bits(record["metadata"]),
        request_bits=request_bits,
        user_pk=tx.user_pk,
        resource_id=tx.resource_id,
        operation=tx.operation,
    )


def apply_priority_rules(
    mask: tuple[bool, ...],
    rules: RuleStore,
    subject_hash: str,
    resource_id: int,
) -> tuple[bool, ...]:
    """First matching rule applied: DENY clears its operations, ALLOW sets
    them; no match leaves the mask unchanged."""
    rule = rules.first_match(subject_hash, resource_id)
    return _apply_rule(mask, rule)


def _apply_rule(mask: tuple[bool, ...], rule: PriorityRule | None) -> tuple[bool, ...]:
    if rule is None:
        return tuple(mask)
    if rule.effect == DENY:
        return tuple(m and not r for m, r in zip(mask, rule.operations))
    return tuple(m or r for m, r in zip(mask, rule.operations))


def authorize(
    payload: VerifiedPayload,
    memory: Mapping[str, Any],
    model: DecisionModel,
    rules: RuleStore,
    now: int,
    window: int = DEFAULT_FRESHNESS_WINDOW,
    threshold: float = 0.5,
) -> AccessList | Denial:
    """Authorization contract: model inference, threshold, rule filter."""
    if abs(now - payload.timestamp) > window:
        return Denial(DenialReason.STALE, "verified payload expired")
    resource = memory.get(resource_key(payload.resource_id))
    if resource is None:
        return Denial(
            DenialReason.WRONG_RESOURCE, f"no such resource {payload.resource_id}"
        )
    resource_bits = _metadata_bits(resource["metadata"])
    scores = infer(model, payload.user_bits + resource_bits)
    mask = threshold_decide(scores, threshold)
    subject_hash = crypto.hash_bytes(payload.user_pk).hex()
    rule = rules.first_match(subject_hash, payload.resource_id)
    final = _apply_rule(mask, rule)
    op = operation_index(payload.operation)
    if final[op]:
        return AccessList(grants=final, scores=scores, rule=rule, requested=payload.operation)
    if rule is not None and rule.effect == DENY and rule.operations[op]:
        reason = DenialReason.POLICY_DENIED
    else:
        reason = DenialReason.MODEL_DENIED
    return Denial(reason, f"operation {payload.operation!r} not granted", mask=final)


def register_ban(rules: RuleStore, subject_hash: str) -> None:
    """Insert a front-of-order DENY-all rule for the subject; idempotent."""
    if subject_hash in rules.banned:
        return
    front = min((r.ordinal for r in rules.rules), default=0) - 1
    rules.add(
        PriorityRule(
            ordinal=front,
            subject=subject_hash,
            resource=WILDCARD,
            operations=(True,) * N_OPERATIONS,
            effect=DENY,
        )
    )
    rules.banned.add(subject_hash)
