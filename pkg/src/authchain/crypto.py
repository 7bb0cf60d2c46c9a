"""Cryptographic primitives used by every other module.

Hashing is SHA-256.  Signatures are Ed25519 (32-byte verify keys, 64-byte
signatures).  Asymmetric encryption is a hybrid construction: an ephemeral
X25519 exchange feeding HKDF-SHA256 into ChaCha20-Poly1305, so ciphertexts
are randomized and decryption failures are detected by the AEAD tag.

A key pair bundles both capabilities: ``public_key`` is the 32-byte Ed25519
verify key followed by the 32-byte X25519 encryption key; ``secret_key`` is
the corresponding pair of 32-byte seeds.  Both halves derive
deterministically from one 32-byte seed, so worlds rebuilt from the same
seed carry identical identities.

Every operation is pure or draws from an explicitly injected
:class:`RandomSource`; there is no hidden global randomness.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import DecryptError

DIGEST_SIZE = 32
NONCE_SIZE = 16
SEED_SIZE = 32
PUBLIC_KEY_SIZE = 64
SECRET_KEY_SIZE = 64
SIGNATURE_SIZE = 64

_ZERO_AEAD_NONCE = b"\x00" * 12  # fresh key per message, so a fixed nonce is safe
_ECIES_INFO = b"authchain/ecies/v1"


def hash_bytes(message: bytes) -> bytes:
    """SHA-256 digest (32 bytes) of the exact input bytes."""
    return hashlib.sha256(message).digest()


class RandomSource:
    """Byte stream used for nonces, tokens, and ephemeral keys.

    ``RandomSource()`` reads the operating system CSPRNG.  A seeded source
    produces a reproducible stream (SHA-256 in counter mode over the seed),
    which the simulation harness uses so whole runs are replayable.
    """

    def __init__(self, seed: bytes | None = None) -> None:
        self._seed = seed
        self._counter = 0

    def read(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("cannot read a negative number of bytes")
        if self._seed is None:
            return os.urandom(n)
        out = bytearray()
        while len(out) < n:
            block = hashlib.sha256(
                self._seed + self._counter.to_bytes(8, "big")
            ).digest()
            self._counter += 1
            out.extend(block)
        return bytes(out[:n])


def system_rng() -> RandomSource:
    """Operating-system CSPRNG."""
    return RandomSource()


def seeded_rng(seed: bytes) -> RandomSource:
    """Deterministic stream for reproducible simulations and tests."""
    return RandomSource(seed=seed)


@dataclass(frozen=True)
class KeyPair:
    """Signing + encryption identity of one entity."""

    public_key: bytes
    secret_key: bytes

    def __post_init__(self) -> None:
        if len(self.public_key) != PUBLIC_KEY_SIZE:
            raise ValueError(f"public key must be {PUBLIC_KEY_SIZE} bytes")
        if len(self.secret_key) != SECRET_KEY_SIZE:
            raise ValueError(f"secret key must be {SECRET_KEY_SIZE} bytes")


def _raw_public(key: Ed25519PublicKey | X25519PublicKey) -> bytes:
    return key.public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )


def keygen(seed: bytes) -> KeyPair:
    """Derive a key pair deterministically from a 32-byte seed."""
    if len(seed) != SEED_SIZE:
        raise ValueError(f"seed must be {SEED_SIZE} bytes, got {len(seed)}")
    sign_seed = hashlib.sha256(seed + b"/sig").digest()
    enc_seed = hashlib.sha256(seed + b"/enc").digest()
    sign_pk = _raw_public(Ed25519PrivateKey.from_private_bytes(sign_seed).public_key())
    enc_pk = _raw_public(X25519PrivateKey.from_private_bytes(enc_seed).public_key())
    return KeyPair(public_key=sign_pk + enc_pk, secret_key=sign_seed + enc_seed)


def sign(secret_key: bytes, message: bytes) -> bytes:
    """Ed25519 signature over the message bytes."""
    if len(secret_key) != SECRET_KEY_SIZE:
        raise ValueError("malformed secret key")
    return Ed25519PrivateKey.from_private_bytes(secret_key[:32]).sign(message)


def verify_sig(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff the signature was produced by the paired secret key over
    exactly these bytes.  Malformed inputs verify false rather than raising.
    """
    if len(public_key) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key[:32]).verify(
            signature, message
        )
    except (InvalidSignature, ValueError):
        return False
    return True


def _session_key(shared: bytes, ephemeral_pk: bytes, recipient_pk: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=ephemeral_pk + recipient_pk,
        info=_ECIES_INFO,
    ).derive(shared)


def encrypt(public_key: bytes, plaintext: bytes, rng: RandomSource | None = None) -> bytes:
    """Encrypt so only the paired secret key can recover the plaintext.

    Randomized: every call draws a fresh ephemeral key, so two encryptions
    of the same plaintext differ.  The ciphertext layout is the 32-byte
    ephemeral public key followed by the AEAD box.
    """
    if len(public_key) != PUBLIC_KEY_SIZE:
        raise ValueError("malformed public key")
    rng = rng or system_rng()
    recipient = X25519PublicKey.from_public_bytes(public_key[32:])
    ephemeral = X25519PrivateKey.from_private_bytes(rng.read(32))
    ephemeral_pk = _raw_public(ephemeral.public_key())
    key = _session_key(ephemeral.exchange(recipient), ephemeral_pk, public_key[32:])
    box = ChaCha20Poly1305(key).encrypt(_ZERO_AEAD_NONCE, plaintext, None)
    return ephemeral_pk + box


def decrypt(secret_key: bytes, ciphertext: bytes) -> bytes:
    """Recover the plaintext, raising :class:`DecryptError` on any failure."""
    if len(secret_key) != SECRET_KEY_SIZE:
        raise DecryptError("malformed secret key")
    if len(ciphertext) < 32 + 16:
        raise DecryptError("ciphertext too short")
    ephemeral_pk = ciphertext[:32]
    own = X25519PrivateKey.from_private_bytes(secret_key[32:])
    own_pk = _raw_public(own.public_key())
    try:
        shared = own.exchange(X25519PublicKey.from_public_bytes(ephemeral_pk))
        key = _session_key(shared, ephemeral_pk, own_pk)
        return ChaCha20Poly1305(key).decrypt(_ZERO_AEAD_NONCE, ciphertext[32:], None)
    except (InvalidTag, ValueError) as exc:
        raise DecryptError("decryption failed") from exc


def gen_nonce(rng: RandomSource) -> bytes:
    """16 fresh bytes from the injected source."""
    return rng.read(NONCE_SIZE)
