"""Simulated world: wires users, validators, contracts, and storage.

The network is synchronous and in-process.  Time is a logical clock
advanced by the script, randomness comes from one seeded stream, and all
key material derives from the world seed, so a whole run (chain file,
log export, outcomes) is byte-reproducible.

A request walks the full pipeline: the signed access request is admitted
to the mempool and mined; authentication verifies membership, freshness,
and the signature; the verified hand-off drives authorization (model
inference filtered by priority rules); a grant becomes an encrypted
single-use link issued by storage; redeeming the link returns the content
and logs the access on chain.  Every refusal at any stage lands exactly
once in storage's malicious-activity log, the log's rolling root is
mirrored into contract state, and repeated misuse trips the ban rule.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field

import numpy as np

from . import crypto
from .contracts import (
    Denial,
    DenialReason,
    RuleStore,
    PriorityRule,
    DENY,
    authenticate,
    authorize,
    register_ban,
)
from .errors import ConfigError, DecryptError, FormatError, ScheduleError
from .ledger import (
    Block,
    Chain,
    LogicalClock,
    Mempool,
    ValidatorSet,
    append_block,
    block_canonical_bytes,
    block_signing_bytes,
    canonical_bytes,
    genesis,
    make_accreq,
    make_setup,
    merkle_root,
    parse_chain_lines,
    produce_block,
    query_history,
    rejection_reason,
    save_chain,
    tx_canonical_bytes,
    validate_block,
    validate_chain,
)
from .model import (
    DecisionModel,
    OPERATIONS,
    SyntheticDataset,
    TrainConfig,
    _forward_all,
    encode_pair,
    generate_dataset,
    train,
)
from .storage import (
    Resource,
    StorageNode,
    UNKNOWN_SUBJECT,
    check_ban_threshold,
    export_log,
    parse_log_lines,
    verify_log,
)

STATE_RULES_KEY = "rules"
STATE_ROOT_KEY = "malicious_root"
STATE_ROOT_HISTORY_KEY = "malicious_roots"

SCENARIO_EXPECTATIONS = {
    1: "denied:unauthenticated",
    2: "denied:model-denied",
    3: "denied:policy-denied",
    4: "allowed",
}


@dataclass(frozen=True)
class WorldConfig:
    freshness_window: int = 120
    ban_threshold: int = 3
    ban_window: int = 600
    batch_size: int = 100
    link_ttl: int = 120
    threshold: float = 0.5
    learning_rate: float = 1.0
    epochs: int = 800
    hidden: tuple[int, ...] = (32, 16)
    resource_content_size: int = 64

    def __post_init__(self) -> None:
        for name in ("freshness_window", "ban_threshold", "ban_window", "batch_size", "link_ttl"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class World:
    seed: int
    config: WorldConfig
    clock: LogicalClock
    rng: crypto.RandomSource
    chain: Chain
    mempool: Mempool
    validators: list[crypto.KeyPair]
    admin: crypto.KeyPair
    storage_node: StorageNode
    rules: RuleStore
    model: DecisionModel
    dataset: SyntheticDataset
    users: list[crypto.KeyPair]
    _outsiders: dict[int, crypto.KeyPair] = field(default_factory=dict)
    _mask_cache: dict | None = field(default=None, repr=False)
    _lock: threading.RLock = field(default_factory=threading.RLock)

    def now(self) -> int:
        return self.clock.now()

    def user_keypair(self, index: int) -> crypto.KeyPair:
        """Registered user for 0 <= index < n_users, otherwise a derived
        keypair that was never registered (scenario 1 material)."""
        if 0 <= index < len(self.users):
            return self.users[index]
        if index not in self._outsiders:
            self._outsiders[index] = crypto.keygen(derive_seed(self.seed, f"outsider/{index}"))
        return self._outsiders[index]

    def user_attrs(self, index: int) -> tuple[int, ...]:
        return self.dataset.users[index][1]

    def scheduled_proposer(self) -> crypto.KeyPair:
        want = self.chain.validator_set.scheduled(self.chain.height)
        for kp in self.validators:
            if kp.public_key == want:
                return kp
        raise ScheduleError("scheduled validator key not held by this world")


@dataclass(frozen=True)
class RequestOutcome:
    verdict: str  # "allowed" or "denied:<reason>"
    reason: DenialReason | None
    content_hash: bytes | None
    heights: tuple[int, ...]
    user_index: int
    resource_id: int
    operation: str

    @property
    def allowed(self) -> bool:
        return self.verdict == "allowed"


@dataclass(frozen=True)
class ScenarioReport:
    scenario_id: int
    expected: str
    observed: str
    passed: bool
    transcript: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "expected": self.expected,
            "observed": self.observed,
            "passed": self.passed,
            "transcript": list(self.transcript),
        }


@dataclass(frozen=True)
class TamperOutcome:
    mutation: str
    caught: bool
    detail: str


def derive_seed(seed: int, tag: str) -> bytes:
    return hashlib.sha256(f"{seed}/{tag}".encode("utf-8")).digest()


def setup_world(
    n_validators: int,
    n_users: int,
    n_resources: int,
    seed: int,
    config: WorldConfig | None = None,
) -> World:
    """Deterministic world: genesis, user registration, trained model."""
    if n_validators <= 2:
        raise ConfigError(f"validator count must exceed 2, got {n_validators}")
    if n_users < 1 or n_resources < 1:
        raise ConfigError("need at least one user and one resource")
    config = config or WorldConfig()

    dataset = generate_dataset(n_users, n_resources, seed)
    model = train(
        dataset,
        TrainConfig(
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            seed=seed,
            hidden=config.hidden,
            threshold=config.threshold,
        ),
    )

    validators = [
        crypto.keygen(derive_seed(seed, f"validator/{i}")) for i in range(n_validators)
    ]
    admin = crypto.keygen(derive_seed(seed, "admin"))
    storage_keys = crypto.keygen(derive_seed(seed, "storage"))
    users = [crypto.keygen(derive_seed(seed, f"user/{uid}")) for uid, _ in dataset.users]

    clock = LogicalClock()
    chain = genesis(
        ValidatorSet(tuple(kp.public_key for kp in validators)),
        admin.public_key,
        proposer=validators[0],
        timestamp=clock.now(),
        storage_pk=storage_keys.public_key,
        resources={rid: attrs for rid, attrs in dataset.resources},
    )

    storage_node = StorageNode(storage_keys, link_ttl=config.link_ttl)
    content_rng = crypto.seeded_rng(derive_seed(seed, "content"))
    for rid, attrs in dataset.resources:
        storage_node.put_resource(
            Resource(id=rid, metadata=attrs, content=content_rng.read(config.resource_content_size))
        )

    world = World(
        seed=seed,
        config=config,
        clock=clock,
        rng=crypto.seeded_rng(derive_seed(seed, "sim")),
        chain=chain,
        mempool=Mempool(),
        validators=validators,
        admin=admin,
        storage_node=storage_node,
        rules=RuleStore(),
        model=model,
        dataset=dataset,
        users=users,
    )

    for kp, (_, attrs) in zip(users, dataset.users):
        accepted = world.mempool.submit(
            chain, make_setup(admin, kp.public_key, attrs, clock.now()), clock.now(),
            config.freshness_window,
        )
        if not accepted:
            raise ConfigError("setup transaction rejected during world bootstrap")
    while len(world.mempool):
        _produce(world)

    _mirror_rules(world)
    _mirror_root(world)
    return world


def _produce(world: World) -> Block:
    world.clock.tick(1)
    block = produce_block(
        world.chain,
        world.mempool,
        world.scheduled_proposer(),
        world.clock.now(),
        world.config.batch_size,
    )
    append_block(world.chain, block)
    return block


def _mirror_rules(world: World) -> None:
    world.chain.put_contract_state(STATE_RULES_KEY, world.rules.to_state())


def _mirror_root(world: World) -> None:
    world.chain.put_contract_state(STATE_ROOT_KEY, world.storage_node.log.root.hex())
    world.chain.put_contract_state(
        STATE_ROOT_HISTORY_KEY, [dict(h) for h in world.storage_node.log.history]
    )


def _after_denial(world: World, subject_hash: str) -> None:
    """Roll the new record into the log root, mirror it, maybe ban."""
    world.storage_node.roll_log()
    _mirror_root(world)
    if subject_hash != UNKNOWN_SUBJECT and check_ban_threshold(
        world.storage_node.log,
        subject_hash,
        world.now(),
        threshold=world.config.ban_threshold,
        window=world.config.ban_window,
    ):
        register_ban(world.rules, subject_hash)
        _mirror_rules(world)


def _record_denial(
    world: World, offending_bytes: bytes, denial: Denial, subject_hash: str
) -> None:
    world.storage_node.record_malicious(
        offending_bytes,
        denial.reason,
        denial.mask,
        subject_hash,
        world.chain.height,
        world.now(),
    )
    _after_denial(world, subject_hash)


def run_request(
    world: World, user_index: int, resource_id: int, operation: str
) -> RequestOutcome:
    """Execute the full data-retrieval pipeline for one request."""
    with world._lock:
        return _run_request_locked(world, user_index, resource_id, operation)


def _run_request_locked(
    world: World, user_index: int, resource_id: int, operation: str
) -> RequestOutcome:
    cfg = world.config
    heights: list[int] = []
    world.clock.tick(1)
    user = world.user_keypair(user_index)
    subject = crypto.hash_bytes(user.public_key).hex()

    def denied(reason: DenialReason) -> RequestOutcome:
        return RequestOutcome(
            verdict=f"denied:{reason.value}",
            reason=reason,
            content_hash=None,
            heights=tuple(heights),
            user_index=user_index,
            resource_id=resource_id,
            operation=operation,
        )

    nonce = crypto.gen_nonce(world.rng)
    accreq = make_accreq(user, resource_id, operation, nonce, world.now())
    if not world.mempool.submit(world.chain, accreq, world.now(), cfg.freshness_window):
        label = rejection_reason(world.chain, accreq, world.now(), cfg.freshness_window)
        reason = {
            "stale": DenialReason.STALE,
            "replayed-nonce": DenialReason.REPLAY,
        }.get(label or "", DenialReason.UNAUTHENTICATED)
        _record_denial(world, tx_canonical_bytes(accreq), Denial(reason, label or ""), subject)
        return denied(reason)

    heights.append(_produce(world).height)

    result = authenticate(
        accreq, world.chain.memory, world.now(), cfg.freshness_window
    )
    if isinstance(result, Denial):
        _record_denial(world, tx_canonical_bytes(accreq), result, subject)
        return denied(result.reason)

    payload = result
    world.mempool.submit(world.chain, payload.to_tx(), world.now(), cfg.freshness_window)

    decision = authorize(
        payload,
        world.chain.memory,
        world.model,
        world.rules,
        world.now(),
        cfg.freshness_window,
        cfg.threshold,
    )
    if isinstance(decision, Denial):
        heights.append(_produce(world).height)  # the verified tx still lands on chain
        _record_denial(world, tx_canonical_bytes(accreq), decision, subject)
        return denied(decision.reason)

    issued = world.storage_node.issue_link(
        decision,
        user.public_key,
        resource_id,
        world.now(),
        world.rng,
        block_height=world.chain.height,
    )
    if isinstance(issued, Denial):
        heights.append(_produce(world).height)
        _after_denial(world, subject)
        return denied(issued.reason)

    world.mempool.submit(world.chain, issued, world.now(), cfg.freshness_window)
    heights.append(_produce(world).height)

    try:
        secret_note = json.loads(crypto.decrypt(user.secret_key, issued.ciphertext))
        token = bytes.fromhex(secret_note["link"])
        link_nonce = bytes.fromhex(secret_note["nonce"])
    except (DecryptError, KeyError, ValueError) as exc:  # pragma: no cover
        raise FormatError(f"undecodable link payload: {exc}") from exc

    redeemed = world.storage_node.redeem_link(
        token, link_nonce, world.now(), block_height=world.chain.height
    )
    if isinstance(redeemed, Denial):
        _after_denial(world, subject)
        return denied(redeemed.reason)

    content, storage_tx = redeemed
    world.mempool.submit(world.chain, storage_tx, world.now(), cfg.freshness_window)
    heights.append(_produce(world).height)

    return RequestOutcome(
        verdict="allowed",
        reason=None,
        content_hash=crypto.hash_bytes(content),
        heights=tuple(heights),
        user_index=user_index,
        resource_id=resource_id,
        operation=operation,
    )


# ---------------------------------------------------------------------------
# Scenario suite
# ---------------------------------------------------------------------------

def _model_mask(world: World, user_index: int, resource_id: int) -> tuple[bool, ...]:
    # one batched forward pass over every (user, resource) pair, then cached
    if world._mask_cache is None:
        pairs = [
            (ui, rid)
            for ui in range(len(world.users))
            for rid, _ in world.dataset.resources
        ]
        resource_attrs = dict(world.dataset.resources)
        inputs = np.array(
            [
                encode_pair(world.dataset.users[ui][1], resource_attrs[rid])
                for ui, rid in pairs
            ],
            dtype=np.float64,
        )
        scores = _forward_all(world.model, inputs)[-1]
        masks = scores >= world.config.threshold
        world._mask_cache = {
            pair: tuple(bool(v) for v in masks[i]) for i, pair in enumerate(pairs)
        }
    return world._mask_cache[(user_index, resource_id)]


def find_case(
    world: World, want_grant: bool, skip: set[tuple[int, int]] = frozenset()
) -> tuple[int, int, str]:
    """First (user index, resource id, operation) whose model verdict matches
    ``want_grant`` and that no current priority rule touches."""
    for user_index in range(len(world.users)):
        subject = crypto.hash_bytes(world.users[user_index].public_key).hex()
        for resource_id, _ in world.dataset.resources:
            if (user_index, resource_id) in skip:
                continue
            if world.rules.first_match(subject, resource_id) is not None:
                continue
            mask = _model_mask(world, user_index, resource_id)
            for op_index, op in enumerate(OPERATIONS):
                if mask[op_index] == want_grant:
                    return user_index, resource_id, op
    raise LookupError(
        f"no {'granting' if want_grant else 'denying'} case in this world"
    )


def run_scenario(world: World, scenario_id: int) -> ScenarioReport:
    """Build the scenario's precondition, run the request, report."""
    if scenario_id not in SCENARIO_EXPECTATIONS:
        raise ValueError(f"unknown scenario id {scenario_id}")
    start_height = world.chain.height

    if scenario_id == 1:
        outsider = len(world.users)  # never registered
        resource_id = world.dataset.resources[0][0]
        outcome = run_request(world, outsider, resource_id, "read")
    elif scenario_id == 2:
        user_index, resource_id, op = find_case(world, want_grant=False)
        outcome = run_request(world, user_index, resource_id, op)
    elif scenario_id == 3:
        user_index, resource_id, op = find_case(world, want_grant=True)
        subject = crypto.hash_bytes(world.users[user_index].public_key).hex()
        ops = tuple(name == op for name in OPERATIONS)
        world.rules.add(
            PriorityRule(
                ordinal=world.rules.next_ordinal(),
                subject=subject,
                resource=str(resource_id),
                operations=ops,
                effect=DENY,
            )
        )
        _mirror_rules(world)
        outcome = run_request(world, user_index, resource_id, op)
    else:
        user_index, resource_id, op = find_case(world, want_grant=True)
        outcome = run_request(world, user_index, resource_id, op)

    transcript = tuple(
        {"height": block.height, "tx": tx.to_dict()}
        for block in world.chain.blocks[start_height:]
        for tx in block.transactions
    )
    expected = SCENARIO_EXPECTATIONS[scenario_id]
    return ScenarioReport(
        scenario_id=scenario_id,
        expected=expected,
        observed=outcome.verdict,
        passed=outcome.verdict == expected,
        transcript=transcript,
    )


def run_all_scenarios(world: World) -> list[ScenarioReport]:
    return [run_scenario(world, sid) for sid in sorted(SCENARIO_EXPECTATIONS)]


# ---------------------------------------------------------------------------
# Adversarial mutations
# ---------------------------------------------------------------------------

TAMPER_MUTATIONS = (
    "flip-chain-byte",
    "reuse-link",
    "replay-accreq",
    "wrong-validator-block",
    "mutate-malicious-record",
)


def tamper(world: World, mutation: str) -> TamperOutcome:
    """Apply one adversarial mutation and report whether defenses caught it."""
    if mutation == "flip-chain-byte":
        return _tamper_chain_byte(world)
    if mutation == "reuse-link":
        return _tamper_reuse_link(world)
    if mutation == "replay-accreq":
        return _tamper_replay_accreq(world)
    if mutation == "wrong-validator-block":
        return _tamper_wrong_validator(world)
    if mutation == "mutate-malicious-record":
        return _tamper_malicious_record(world)
    raise ValueError(f"unknown mutation {mutation!r}")


def _flip_byte(blob: bytes, rng: crypto.RandomSource) -> bytes:
    position = int.from_bytes(rng.read(8), "big") % len(blob)
    delta = (rng.read(1)[0] % 255) + 1  # never zero, so the byte changes
    mutated = bytearray(blob)
    mutated[position] ^= delta
    return bytes(mutated)


def _tamper_chain_byte(world: World) -> TamperOutcome:
    blob = b"\n".join(block_canonical_bytes(b) for b in world.chain.blocks)
    mutated = _flip_byte(blob, world.rng)
    try:
        blocks = parse_chain_lines(mutated)
    except FormatError as exc:
        return TamperOutcome("flip-chain-byte", True, f"rejected at parse: {exc}")
    candidate = Chain.from_blocks_unchecked(blocks)
    valid = validate_chain(candidate)
    return TamperOutcome(
        "flip-chain-byte",
        caught=not valid,
        detail="validate_chain rejected mutated chain" if not valid else "mutation undetected",
    )


def _granted_link_material(world: World) -> tuple[int, bytes, bytes]:
    """Run one granted request and recover its (user, token, nonce)."""
    user_index, resource_id, op = find_case(world, want_grant=True)
    outcome = run_request(world, user_index, resource_id, op)
    if not outcome.allowed:
        raise LookupError(f"expected a grant, got {outcome.verdict}")
    user = world.users[user_index]
    links = query_history(world.chain, user_pk=user.public_key, kind="link")
    _, link_tx = links[-1]
    note = json.loads(crypto.decrypt(user.secret_key, link_tx.ciphertext))
    return user_index, bytes.fromhex(note["link"]), bytes.fromhex(note["nonce"])


def _tamper_reuse_link(world: World) -> TamperOutcome:
    user_index, token, nonce = _granted_link_material(world)
    world.clock.tick(1)
    second = world.storage_node.redeem_link(
        token, nonce, world.now(), block_height=world.chain.height
    )
    if isinstance(second, Denial) and second.reason == DenialReason.REPLAY:
        subject = crypto.hash_bytes(world.users[user_index].public_key).hex()
        _after_denial(world, subject)
        return TamperOutcome("reuse-link", True, "second redemption denied as replay")
    return TamperOutcome("reuse-link", False, f"unexpected result {second!r}")


def _tamper_replay_accreq(world: World) -> TamperOutcome:
    user_index, resource_id, op = find_case(world, want_grant=True)
    outcome = run_request(world, user_index, resource_id, op)
    accreqs = query_history(
        world.chain, user_pk=world.users[user_index].public_key, kind="accreq"
    )
    _, captured = accreqs[-1]
    world.clock.tick(world.config.freshness_window + 1)
    accepted = world.mempool.submit(
        world.chain, captured, world.now(), world.config.freshness_window
    )
    if accepted:
        return TamperOutcome("replay-accreq", False, "replayed request admitted")
    label = rejection_reason(
        world.chain, captured, world.now(), world.config.freshness_window
    )
    return TamperOutcome(
        "replay-accreq", True, f"replayed request rejected ({label}); first run {outcome.verdict}"
    )


def _tamper_wrong_validator(world: World) -> TamperOutcome:
    height = world.chain.height
    v = len(world.chain.validator_set)
    wrong = world.validators[(height + 1) % v]
    try:
        produce_block(world.chain, world.mempool, wrong, world.now())
        return TamperOutcome("wrong-validator-block", False, "out-of-turn proposal allowed")
    except ScheduleError:
        pass
    # craft the block anyway, as a malicious validator would
    block = Block(
        height=height,
        prev_hash=world.chain.tip_hash(),
        tx_root=merkle_root([]),
        transactions=(),
        timestamp=world.now(),
        proposer=wrong.public_key,
    )
    block = Block(
        height=block.height,
        prev_hash=block.prev_hash,
        tx_root=block.tx_root,
        transactions=block.transactions,
        timestamp=block.timestamp,
        proposer=block.proposer,
        sig=crypto.sign(wrong.secret_key, block_signing_bytes(block)),
    )
    accepted = validate_block(world.chain, block)
    return TamperOutcome(
        "wrong-validator-block",
        caught=not accepted,
        detail="signed out-of-turn block rejected" if not accepted else "block accepted",
    )


def _tamper_malicious_record(world: World) -> TamperOutcome:
    if not world.storage_node.log.records:
        # cause one denial so there is something to tamper with
        run_request(world, 0, 10**6, "read")
    records = world.storage_node.log.records
    lines = b"\n".join(canonical_bytes(r.to_dict()) for r in records)
    mutated = _flip_byte(lines, world.rng)
    try:
        loaded = parse_log_lines(mutated)
    except FormatError as exc:
        return TamperOutcome("mutate-malicious-record", True, f"rejected at parse: {exc}")
    verdict = verify_log(
        loaded,
        world.storage_node.log.root,
        world.chain.contract_state.get(STATE_ROOT_HISTORY_KEY),
    )
    return TamperOutcome(
        "mutate-malicious-record",
        caught=not verdict.ok,
        detail=f"verify_log says {verdict.verdict}",
    )


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def find_malicious_users(world: World) -> list[tuple[str, int, bool]]:
    """(pk hash, record count, banned flag) per offender, most records first."""
    counts: dict[str, int] = {}
    for record in world.storage_node.log.records:
        counts[record.subject_hash] = counts.get(record.subject_hash, 0) + 1
    return sorted(
        ((subject, n, subject in world.rules.banned) for subject, n in counts.items()),
        key=lambda item: (-item[1], item[0]),
    )


# ---------------------------------------------------------------------------
# Persistence of a run's artifacts
# ---------------------------------------------------------------------------

def save_world_artifacts(
    world: World,
    chain_path=None,
    state_path=None,
    log_path=None,
) -> None:
    """Write the chain file, the contract-state sidecar, and the log export.

    All three are canonical-serialized, so two runs from the same seed
    produce byte-identical files.
    """
    if chain_path is not None:
        save_chain(world.chain, chain_path)
    if state_path is not None:
        with open(state_path, "wb") as fh:
            fh.write(canonical_bytes(world.chain.contract_state))
            fh.write(b"\n")
    if log_path is not None:
        export_log(world.storage_node.log.records, log_path)


def load_contract_state(path) -> dict:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return json.loads(data.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"state file: {exc}") from exc
