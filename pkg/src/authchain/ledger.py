"""Permissioned ledger: transactions, hash-chained blocks, chain memory.

Serialization is canonical everywhere: JSON with lexicographically sorted
keys, no whitespace, UTF-8, byte values as lowercase hex.  Digests and
signatures are computed over these bytes, so two processes that build the
same world produce byte-identical chain files.

Consensus is proof-of-authority realized as a round-robin proposer
schedule: the validator at index ``height mod v`` signs the block at that
height, and every block is re-verified on receipt.  There are no view
changes or forks; the chain is a single-writer, append-only list.

Chain memory ``M`` is the key-value state derived purely from applying
blocks: ``user/<pk-hash>`` records registered users (written by setup
transactions) and ``resource/<id>`` records the resource catalog carried
in the genesis payload.  Contract state that does not originate in blocks
(priority rules, the malicious-log root mirror) lives in a separate
``contract_state`` map updated through the same single writer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, ClassVar, Union

from . import crypto
from .errors import ConfigError, FormatError, ScheduleError
from .model import check_metadata

DEFAULT_FRESHNESS_WINDOW = 120  # seconds
DEFAULT_BATCH_SIZE = 100
ZERO_DIGEST = b"\x00" * crypto.DIGEST_SIZE

USER_KEY_PREFIX = "user/"
RESOURCE_KEY_PREFIX = "resource/"


def canonical_bytes(value: Any) -> bytes:
    """Canonical serialization of a JSON-able value."""
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def user_key(public_key: bytes) -> str:
    """Memory key of a registered user: hash of the public key, hex."""
    return USER_KEY_PREFIX + crypto.hash_bytes(public_key).hex()


def resource_key(resource_id: int) -> str:
    return RESOURCE_KEY_PREFIX + str(int(resource_id))


@dataclass
class LogicalClock:
    """Injected simulation clock; POSIX seconds, advanced by the script."""

    t: int = 1_700_000_000

    def now(self) -> int:
        return self.t

    def tick(self, seconds: int = 1) -> int:
        self.t += int(seconds)
        return self.t


def merkle_root(digests: list[bytes]) -> bytes:
    """Binary Merkle root over leaf digests; odd layers duplicate the last
    node; a single leaf is its own root; an empty list hashes to zero.
    """
    if not digests:
        return ZERO_DIGEST
    layer = list(digests)
    while len(layer) > 1:
        paired = []
        for i in range(0, len(layer), 2):
            left = layer[i]
            right = layer[i + 1] if i + 1 < len(layer) else layer[i]
            paired.append(crypto.hash_bytes(left + right))
        layer = paired
    return layer[0]


# ---------------------------------------------------------------------------
# Transactions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SetupTx:
    """Registration of a user by the admin (carries the user's metadata)."""

    kind: ClassVar[str] = "setup"
    admin_pk: bytes
    user_pk: bytes
    metadata: tuple[int, ...]
    timestamp: int
    sig: bytes = b""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "admin_pk": self.admin_pk.hex(),
            "user_pk": self.user_pk.hex(),
            "metadata": list(self.metadata),
            "timestamp": self.timestamp,
            "sig": self.sig.hex(),
        }


@dataclass(frozen=True)
class AccReqTx:
    """A user's request to perform one operation on one resource.

    Carries a per-request nonce so a captured request cannot be replayed
    even inside the freshness window.
    """

    kind: ClassVar[str] = "accreq"
    user_pk: bytes
    timestamp: int
    resource_id: int
    operation: str
    nonce: bytes
    sig: bytes = b""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "user_pk": self.user_pk.hex(),
            "timestamp": self.timestamp,
            "req_info": {"resource_id": self.resource_id, "operation": self.operation},
            "nonce": self.nonce.hex(),
            "sig": self.sig.hex(),
        }


@dataclass(frozen=True)
class LinkTx:
    """Encrypted access link issued by storage for one granted request.

    The recipient key is carried in clear so the ledger can route and
    index the transaction; the link, nonce, and issue time are inside the
    ciphertext, readable only by the holder of the recipient's secret key.
    """

    kind: ClassVar[str] = "link"
    recipient: bytes
    ciphertext: bytes
    timestamp: int
    sig: bytes = b""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "recipient": self.recipient.hex(),
            "ciphertext": self.ciphertext.hex(),
            "timestamp": self.timestamp,
            "sig": self.sig.hex(),
        }


@dataclass(frozen=True)
class StorageTx:
    """Storage's log of a completed access (one per redeemed link)."""

    kind: ClassVar[str] = "storage"
    nonce: bytes
    timestamp: int
    user_pk: bytes
    sig: bytes = b""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "nonce": self.nonce.hex(),
            "timestamp": self.timestamp,
            "user_pk": self.user_pk.hex(),
            "sig": self.sig.hex(),
        }


@dataclass(frozen=True)
class VerifiedTx:
    """Unsigned hand-off from authentication to authorization.

    Recorded on chain for the audit trail; the authorization contract only
    ever consumes the in-process payload produced by authentication, never
    a transaction read back from the mempool.
    """

    kind: ClassVar[str] = "verified"
    timestamp: int
    user_bits: str
    request_bits: str
    user_pk: bytes

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "timestamp": self.timestamp,
            "user_bits": self.user_bits,
            "request_bits": self.request_bits,
            "user_pk": self.user_pk.hex(),
        }


Transaction = Union[SetupTx, AccReqTx, LinkTx, StorageTx, VerifiedTx]

_TX_KINDS = {"setup", "accreq", "link", "storage", "verified"}


def tx_signing_bytes(tx: Transaction) -> bytes:
    """Canonical bytes of the transaction minus its signature field."""
    d = tx.to_dict()
    d.pop("sig", None)
    return canonical_bytes(d)


def tx_canonical_bytes(tx: Transaction) -> bytes:
    return canonical_bytes(tx.to_dict())


def tx_digest(tx: Transaction) -> bytes:
    return crypto.hash_bytes(tx_canonical_bytes(tx))


def tx_from_dict(d: dict) -> Transaction:
    try:
        kind = d["kind"]
        if kind == "setup":
            return SetupTx(
                admin_pk=bytes.fromhex(d["admin_pk"]),
                user_pk=bytes.fromhex(d["user_pk"]),
                metadata=tuple(int(a) for a in d["metadata"]),
                timestamp=int(d["timestamp"]),
                sig=bytes.fromhex(d["sig"]),
            )
        if kind == "accreq":
            return AccReqTx(
                user_pk=bytes.fromhex(d["user_pk"]),
                timestamp=int(d["timestamp"]),
                resource_id=int(d["req_info"]["resource_id"]),
                operation=str(d["req_info"]["operation"]),
                nonce=bytes.fromhex(d["nonce"]),
                sig=bytes.fromhex(d["sig"]),
            )
        if kind == "link":
            return LinkTx(
                recipient=bytes.fromhex(d["recipient"]),
                ciphertext=bytes.fromhex(d["ciphertext"]),
                timestamp=int(d["timestamp"]),
                sig=bytes.fromhex(d["sig"]),
            )
        if kind == "storage":
            return StorageTx(
                nonce=bytes.fromhex(d["nonce"]),
                timestamp=int(d["timestamp"]),
                user_pk=bytes.fromhex(d["user_pk"]),
                sig=bytes.fromhex(d["sig"]),
            )
        if kind == "verified":
            return VerifiedTx(
                timestamp=int(d["timestamp"]),
                user_bits=str(d["user_bits"]),
                request_bits=str(d["request_bits"]),
                user_pk=bytes.fromhex(d["user_pk"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed transaction: {exc}") from exc
    raise FormatError(f"unknown transaction kind {d.get('kind')!r}")


def make_setup(admin: crypto.KeyPair, user_pk: bytes, metadata, timestamp: int) -> SetupTx:
    tx = SetupTx(
        admin_pk=admin.public_key,
        user_pk=user_pk,
        metadata=check_metadata(metadata),
        timestamp=timestamp,
    )
    return SetupTx(
        admin_pk=tx.admin_pk,
        user_pk=tx.user_pk,
        metadata=tx.metadata,
        timestamp=tx.timestamp,
        sig=crypto.sign(admin.secret_key, tx_signing_bytes(tx)),
    )


def make_accreq(
    user: crypto.KeyPair, resource_id: int, operation: str, nonce: bytes, timestamp: int
) -> AccReqTx:
    tx = AccReqTx(
        user_pk=user.public_key,
        timestamp=timestamp,
        resource_id=int(resource_id),
        operation=operation,
        nonce=nonce,
    )
    return AccReqTx(
        user_pk=tx.user_pk,
        timestamp=tx.timestamp,
        resource_id=tx.resource_id,
        operation=tx.operation,
        nonce=tx.nonce,
        sig=crypto.sign(user.secret_key, tx_signing_bytes(tx)),
    )


def make_link(
    storage: crypto.KeyPair, recipient: bytes, ciphertext: bytes, timestamp: int
) -> LinkTx:
    tx = LinkTx(recipient=recipient, ciphertext=ciphertext, timestamp=timestamp)
    return LinkTx(
        recipient=tx.recipient,
        ciphertext=tx.ciphertext,
        timestamp=tx.timestamp,
        sig=crypto.sign(storage.secret_key, tx_signing_bytes(tx)),
    )


def make_storage(
    storage: crypto.KeyPair, nonce: bytes, user_pk: bytes, timestamp: int
) -> StorageTx:
    tx = StorageTx(nonce=nonce, timestamp=timestamp, user_pk=user_pk)
    return StorageTx(
        nonce=tx.nonce,
        timestamp=tx.timestamp,
        user_pk=tx.user_pk,
        sig=crypto.sign(storage.secret_key, tx_signing_bytes(tx)),
    )


# ---------------------------------------------------------------------------
# Blocks and the chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    tx_root: bytes
    transactions: tuple[Transaction, ...]
    timestamp: int
    proposer: bytes
    payload: dict | None = None  # genesis configuration, height 0 only
    sig: bytes = b""

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "tx_root": self.tx_root.hex(),
            "transactions": [t.to_dict() for t in self.transactions],
            "timestamp": self.timestamp,
            "proposer": self.proposer.hex(),
            "payload": self.payload,
            "sig": self.sig.hex(),
        }


def block_signing_bytes(block: Block) -> bytes:
    d = block.to_dict()
    d.pop("sig")
    return canonical_bytes(d)


def block_canonical_bytes(block: Block) -> bytes:
    return canonical_bytes(block.to_dict())


def block_hash(block: Block) -> bytes:
    return crypto.hash_bytes(block_canonical_bytes(block))


def block_from_dict(d: dict) -> Block:
    try:
        return Block(
            height=int(d["height"]),
            prev_hash=bytes.fromhex(d["prev_hash"]),
            tx_root=bytes.fromhex(d["tx_root"]),
            transactions=tuple(tx_from_dict(t) for t in d["transactions"]),
            timestamp=int(d["timestamp"]),
            proposer=bytes.fromhex(d["proposer"]),
            payload=d.get("payload"),
            sig=bytes.fromhex(d["sig"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed block: {exc}") from exc


@dataclass(frozen=True)
class ValidatorSet:
    members: tuple[bytes, ...]

    def __post_init__(self) -> None:
        if len(self.members) <= 2:
            raise ConfigError(
                f"validator count must exceed 2, got {len(self.members)}"
            )
        if len(set(self.members)) != len(self.members):
            raise ConfigError("validator keys must be distinct")

    def __len__(self) -> int:
        return len(self.members)

    def scheduled(self, height: int) -> bytes:
        """Round-robin proposer for the given height."""
        return self.members[height % len(self.members)]


class Chain:
    """Append-only block list plus the memory map derived from it."""

    def __init__(self) -> None:
        self.blocks: list[Block] = []
        self.memory: dict[str, Any] = {}
        self.contract_state: dict[str, Any] = {}
        self._seen_nonces: set[bytes] = set()

    # -- genesis-derived configuration ------------------------------------

    @property
    def genesis_payload(self) -> dict:
        if not self.blocks:
            raise ValueError("chain has no genesis block")
        payload = self.blocks[0].payload
        if not isinstance(payload, dict):
            raise FormatError("genesis block carries no payload")
        return payload

    @property
    def validator_set(self) -> ValidatorSet:
        return ValidatorSet(
            tuple(bytes.fromhex(v) for v in self.genesis_payload["validators"])
        )

    @property
    def admin_pk(self) -> bytes:
        return bytes.fromhex(self.genesis_payload["admin_pk"])

    @property
    def storage_pk(self) -> bytes | None:
        value = self.genesis_payload.get("storage_pk")
        return bytes.fromhex(value) if value else None

    @property
    def height(self) -> int:
        return len(self.blocks)

    def tip_hash(self) -> bytes:
        return block_hash(self.blocks[-1]) if self.blocks else ZERO_DIGEST

    def nonce_seen(self, nonce: bytes) -> bool:
        return nonce in self._seen_nonces

    # -- memory effects ----------------------------------------------------

    def _apply_effects(self, block: Block) -> None:
        if block.height == 0 and isinstance(block.payload, dict):
            for rid, attrs in block.payload.get("resources", {}).items():
                self.memory[resource_key(int(rid))] = {
                    "metadata": [int(a) for a in attrs]
                }
        for tx in block.transactions:
            if isinstance(tx, SetupTx):
                self.memory[user_key(tx.user_pk)] = {
                    "metadata": list(tx.metadata),
                    "registered_at": tx.timestamp,
                }
            elif isinstance(tx, AccReqTx):
                self._seen_nonces.add(tx.nonce)

    # -- state writes outside blocks (single writer) -----------------------

    def put_contract_state(self, key: str, value: Any) -> None:
        self.contract_state[key] = value

    @classmethod
    def replay(cls, blocks: list[Block]) -> "Chain":
        """Rebuild a chain by validating and applying every block in order."""
        chain = cls()
        for block in blocks:
            append_block(chain, block)
        return chain

    @classmethod
    def from_blocks_unchecked(cls, blocks: list[Block]) -> "Chain":
        """Load blocks applying effects without validation (for inspection
        of possibly tampered files; run validate_chain for the verdict)."""
        chain = cls()
        for block in blocks:
            chain.blocks.append(block)
            try:
                chain._apply_effects(block)
            except (FormatError, ValueError, KeyError):
                continue
        return chain


def genesis(
    validators: ValidatorSet,
    admin_pk: bytes,
    proposer: crypto.KeyPair,
    timestamp: int,
    storage_pk: bytes | None = None,
    resources: dict[int, Any] | None = None,
) -> Chain:
    """Create a chain whose genesis block carries the network configuration.

    The genesis block is signed by the validator scheduled for height 0.
    The optional resource catalog maps resource id to its 8 metadata
    attributes and seeds ``resource/<id>`` entries in chain memory.
    """
    if proposer.public_key != validators.scheduled(0):
        raise ScheduleError("genesis must be proposed by the validator at index 0")
    payload = {
        "validators": [v.hex() for v in validators.members],
        "admin_pk": admin_pk.hex(),
        "storage_pk": storage_pk.hex() if storage_pk else None,
        "resources": {
            str(int(rid)): list(check_metadata(attrs))
            for rid, attrs in (resources or {}).items()
        },
    }
    block = Block(
        height=0,
        prev_hash=ZERO_DIGEST,
        tx_root=merkle_root([]),
        transactions=(),
        timestamp=timestamp,
        proposer=proposer.public_key,
        payload=payload,
    )
    block = _sign_block(block, proposer)
    chain = Chain()
    append_block(chain, block)
    return chain


def _sign_block(block: Block, proposer: crypto.KeyPair) -> Block:
    return Block(
        height=block.height,
        prev_hash=block.prev_hash,
        tx_root=block.tx_root,
        transactions=block.transactions,
        timestamp=block.timestamp,
        proposer=block.proposer,
        payload=block.payload,
        sig=crypto.sign(proposer.secret_key, block_signing_bytes(block)),
    )


# ---------------------------------------------------------------------------
# Mempool and admission
# ---------------------------------------------------------------------------

class Mempool:
    """FIFO queue of admitted transactions awaiting block inclusion."""

    def __init__(self) -> None:
        self._queue: list[Transaction] = []
        self._pending_nonces: set[bytes] = set()

    def __len__(self) -> int:
        return len(self._queue)

    def submit(
        self,
        chain: Chain,
        tx: Transaction,
        now: int,
        window: int = DEFAULT_FRESHNESS_WINDOW,
    ) -> bool:
        """Admit the transaction if it is fresh and correctly signed.

        Rejection is a value, not an error; callers that need the cause for
        the malicious-activity log use :func:`rejection_reason`.
        """
        if rejection_reason(chain, tx, now, window, pending=self._pending_nonces):
            return False
        self._queue.append(tx)
        if isinstance(tx, AccReqTx):
            self._pending_nonces.add(tx.nonce)
        return True

    def drain(self, max_count: int = DEFAULT_BATCH_SIZE) -> list[Transaction]:
        taken = self._queue[:max_count]
        self._queue = self._queue[max_count:]
        for tx in taken:
            if isinstance(tx, AccReqTx):
                self._pending_nonces.discard(tx.nonce)
        return taken


def rejection_reason(
    chain: Chain,
    tx: Transaction,
    now: int,
    window: int = DEFAULT_FRESHNESS_WINDOW,
    pending: set[bytes] | None = None,
) -> str | None:
    """Why a transaction would be refused admission, or None if acceptable."""
    if abs(now - tx.timestamp) > window:
        return "stale"
    if isinstance(tx, SetupTx):
        if tx.admin_pk != chain.admin_pk:
            return "not-admin"
        if not crypto.verify_sig(tx.admin_pk, tx_signing_bytes(tx), tx.sig):
            return "bad-signature"
        try:
            check_metadata(tx.metadata)
        except ValueError:
            return "malformed"
    elif isinstance(tx, AccReqTx):
        if not crypto.verify_sig(tx.user_pk, tx_signing_bytes(tx), tx.sig):
            return "bad-signature"
        if chain.nonce_seen(tx.nonce) or (pending and tx.nonce in pending):
            return "replayed-nonce"
    elif isinstance(tx, (LinkTx, StorageTx)):
        storage_pk = chain.storage_pk
        if storage_pk is None or not crypto.verify_sig(
            storage_pk, tx_signing_bytes(tx), tx.sig
        ):
            return "bad-signature"
    elif isinstance(tx, VerifiedTx):
        pass  # unsigned by design; freshness already checked
    else:
        return "unknown-kind"
    return None


def produce_block(
    chain: Chain,
    mempool: Mempool,
    proposer: crypto.KeyPair,
    timestamp: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> Block:
    """Drain the mempool into a signed block; proposer must be scheduled."""
    height = chain.height
    scheduled = chain.validator_set.scheduled(height)
    if proposer.public_key != scheduled:
        raise ScheduleError(
            f"validator not scheduled for height {height} "
            f"(expected index {height % len(chain.validator_set)})"
        )
    transactions = tuple(mempool.drain(batch_size))
    block = Block(
        height=height,
        prev_hash=chain.tip_hash(),
        tx_root=merkle_root([tx_digest(t) for t in transactions]),
        transactions=transactions,
        timestamp=timestamp,
        proposer=proposer.public_key,
    )
    return _sign_block(block, proposer)


def _tx_signature_valid(chain_or_payload: dict, tx: Transaction) -> bool:
    payload = chain_or_payload
    if isinstance(tx, SetupTx):
        if tx.admin_pk.hex() != payload.get("admin_pk"):
            return False
        return crypto.verify_sig(tx.admin_pk, tx_signing_bytes(tx), tx.sig)
    if isinstance(tx, AccReqTx):
        return crypto.verify_sig(tx.user_pk, tx_signing_bytes(tx), tx.sig)
    if isinstance(tx, (LinkTx, StorageTx)):
        storage_hex = payload.get("storage_pk")
        if not storage_hex:
            return False
        return crypto.verify_sig(
            bytes.fromhex(storage_hex), tx_signing_bytes(tx), tx.sig
        )
    return isinstance(tx, VerifiedTx)


def validate_block(chain: Chain, block: Block) -> bool:
    """Full structural check of a candidate for the chain's next height."""
    if block.height != chain.height:
        return False
    if block.height == 0:
        payload = block.payload
        if not isinstance(payload, dict):
            return False
        try:
            validators = ValidatorSet(
                tuple(bytes.fromhex(v) for v in payload["validators"])
            )
        except (ConfigError, KeyError, TypeError, ValueError):
            return False
        if block.prev_hash != ZERO_DIGEST or block.transactions:
            return False
        if block.proposer != validators.scheduled(0):
            return False
    else:
        if block.payload is not None:
            return False
        try:
            validators = chain.validator_set
        except (FormatError, ValueError):
            return False
        if block.prev_hash != chain.tip_hash():
            return False
        if block.proposer != validators.scheduled(block.height):
            return False
    if block.tx_root != merkle_root([tx_digest(t) for t in block.transactions]):
        return False
    if not crypto.verify_sig(block.proposer, block_signing_bytes(block), block.sig):
        return False
    payload = block.payload if block.height == 0 else chain.genesis_payload
    return all(_tx_signature_valid(payload, tx) for tx in block.transactions)


def append_block(chain: Chain, block: Block) -> None:
    """Validate and append; an invalid block leaves the chain unchanged."""
    if not validate_block(chain, block):
        raise FormatError(f"invalid block at height {block.height}")
    chain.blocks.append(block)
    chain._apply_effects(block)


def validate_chain(chain: Chain) -> bool:
    """Re-validate every block from genesis."""
    try:
        Chain.replay(chain.blocks)
    except (FormatError, ValueError):
        return False
    return True


def query_history(
    chain: Chain,
    user_pk: bytes | None = None,
    resource_id: int | None = None,
    kind: str | None = None,
    nonce: bytes | None = None,
) -> list[tuple[int, Transaction]]:
    """All transactions matching the given filters, in chain order."""
    if kind is not None and kind not in _TX_KINDS:
        raise ValueError(f"unknown transaction kind {kind!r}")
    out: list[tuple[int, Transaction]] = []
    for block in chain.blocks:
        for tx in block.transactions:
            if kind is not None and tx.kind != kind:
                continue
            if user_pk is not None and _tx_user(tx) != user_pk:
                continue
            if resource_id is not None and not (
                isinstance(tx, AccReqTx) and tx.resource_id == resource_id
            ):
                continue
            if nonce is not None and getattr(tx, "nonce", None) != nonce:
                continue
            out.append((block.height, tx))
    return out


def _tx_user(tx: Transaction) -> bytes | None:
    if isinstance(tx, (AccReqTx, StorageTx, VerifiedTx)):
        return tx.user_pk
    if isinstance(tx, SetupTx):
        return tx.user_pk
    if isinstance(tx, LinkTx):
        return tx.recipient
    return None


def memory_get(chain: Chain, key: str) -> Any | None:
    """Lookup in block-derived memory, falling back to contract state."""
    if key in chain.memory:
        return chain.memory[key]
    return chain.contract_state.get(key)


# ---------------------------------------------------------------------------
# Persistence: JSON lines, one canonical block per line
# ---------------------------------------------------------------------------

def save_chain(chain: Chain, path) -> None:
    with open(path, "wb") as fh:
        for block in chain.blocks:
            fh.write(block_canonical_bytes(block))
            fh.write(b"\n")


def parse_chain_lines(data: bytes) -> list[Block]:
    """Parse persisted blocks, insisting on canonical encoding.

    Every line must be byte-identical to the canonical serialization of
    the block it parses to; otherwise a flipped byte that happens to
    decode to the same value (hex case, number forms) would go unnoticed.
    """
    blocks: list[Block] = []
    for line_no, raw in enumerate(data.split(b"\n"), start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            block = block_from_dict(json.loads(raw.decode("utf-8")))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise FormatError(f"chain line {line_no}: {exc}") from exc
        if block_canonical_bytes(block) != raw:
            raise FormatError(f"chain line {line_no}: non-canonical encoding")
        blocks.append(block)
    return blocks


def load_chain(path) -> Chain:
    """Parse a persisted chain without validating block linkage.

    Memory effects are applied best-effort so lookups work; call
    :func:`validate_chain` for the integrity verdict.
    """
    with open(path, "rb") as fh:
        blocks = parse_chain_lines(fh.read())
    return Chain.from_blocks_unchecked(blocks)
