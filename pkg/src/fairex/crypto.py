"""Deterministic cryptographic primitives for the simulator.

Hashing is SHA-256, symmetric encryption is ChaCha20-Poly1305 with a
nonce derived from (key, plaintext) so that a fixed RNG seed replays the
whole simulation bit-exactly, and signatures are Ed25519 with the public
key carried inside the signature blob so verification needs only the
signer's 20-byte address (last 20 bytes of the hashed public key).

None of this is meant to protect real secrets; the point is that tamper
detection, address binding, and key-preimage checks behave exactly like
their production counterparts while staying reproducible under a seed.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

DIGEST_SIZE = 32
KEY_SIZE = 32
ADDRESS_SIZE = 20
_PUBKEY_SIZE = 32
_RAW_SIG_SIZE = 64
SIGNATURE_SIZE = _PUBKEY_SIZE + _RAW_SIG_SIZE


class AuthFailure(Exception):
    """Decryption failed: wrong key or tampered ciphertext."""


@dataclass(frozen=True)
class Digest:
    """A 32-byte hash value."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} bytes, got {len(self.data)}")

    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True)
class SymmetricKey:
    """A 32-byte symmetric secret."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != KEY_SIZE:
            raise ValueError(f"key must be {KEY_SIZE} bytes, got {len(self.data)}")

    def __repr__(self) -> str:  # keep key material out of logs
        return "SymmetricKey(<32 bytes>)"


@dataclass(frozen=True)
class Ciphertext:
    """Authenticated ciphertext plus the plaintext size in bytes."""

    payload: bytes
    length_hint: int

    def size(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class Signature:
    """Opaque signature blob: embedded public key + raw Ed25519 signature."""

    data: bytes


@dataclass(frozen=True)
class SigningIdentity:
    """An account keypair; the address is derived from the public key."""

    secret: bytes
    address: bytes
    _signer: Ed25519PrivateKey = field(repr=False, compare=False)

    @classmethod
    def from_seed(cls, seed: bytes) -> "SigningIdentity":
        if len(seed) != KEY_SIZE:
            raise ValueError(f"identity seed must be {KEY_SIZE} bytes")
        signer = Ed25519PrivateKey.from_private_bytes(seed)
        return cls(secret=seed, address=derive_address(_public_bytes(signer)), _signer=signer)

    @classmethod
    def from_rng(cls, rng: random.Random) -> "SigningIdentity":
        return cls.from_seed(rng.randbytes(KEY_SIZE))


def _public_bytes(signer: Ed25519PrivateKey) -> bytes:
    return signer.public_key().public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )


def derive_address(public_key: bytes) -> bytes:
    """Address = last 20 bytes of the hashed public key."""
    return hash_bytes(public_key).data[-ADDRESS_SIZE:]


def hash_bytes(data: bytes) -> Digest:
    """SHA-256 of the input."""
    return Digest(hashlib.sha256(data).digest())


def generate_key(rng: random.Random) -> SymmetricKey:
    """Draw 32 fresh bytes from the injected RNG."""
    return SymmetricKey(rng.randbytes(KEY_SIZE))


def _nonce(key: SymmetricKey, plaintext: bytes) -> bytes:
    # Synthetic nonce bound to (key, message): deterministic under a seed,
    # never reused for distinct plaintexts under the same key.
    return hashlib.sha256(key.data + b"nonce" + plaintext).digest()[:12]


def encrypt(key: SymmetricKey, plaintext: bytes) -> Ciphertext:
    nonce = _nonce(key, plaintext)
    payload = nonce + ChaCha20Poly1305(key.data).encrypt(nonce, plaintext, None)
    return Ciphertext(payload=payload, length_hint=len(plaintext))


def decrypt(key: SymmetricKey, ciphertext: Ciphertext) -> bytes:
    if len(ciphertext.payload) < 12 + 16:
        raise AuthFailure("ciphertext too short")
    nonce, body = ciphertext.payload[:12], ciphertext.payload[12:]
    try:
        return ChaCha20Poly1305(key.data).decrypt(nonce, body, None)
    except InvalidTag as exc:
        raise AuthFailure("authentication failed") from exc


def sign(identity: SigningIdentity, digest: Digest) -> Signature:
    raw = identity._signer.sign(digest.data)
    return Signature(data=_public_bytes(identity._signer) + raw)


def check_sig(digest: Digest, sig: Signature, address: bytes) -> bool:
    """True iff sig was produced over digest by the key behind address."""
    if len(sig.data) != SIGNATURE_SIZE:
        return False
    public, raw = sig.data[:_PUBKEY_SIZE], sig.data[_PUBKEY_SIZE:]
    if derive_address(public) != address:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(raw, digest.data)
        return True
    except (InvalidSignature, ValueError):
        return False


def derive_seed(master_seed: int, label: str) -> int:
    """Stable sub-seed for a named component of a simulation."""
    material = f"{master_seed}:{label}".encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "little")


def derive_rng(master_seed: int, label: str) -> random.Random:
    return random.Random(derive_seed(master_seed, label))
