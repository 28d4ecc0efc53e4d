"""Sealing and key import for the disk-encryption flow.

A secret is sealed to the public part of a storage key created off-TPM;
that storage key is then wrapped to an engine-resident parent (ephemeral
SRK or EK). Import resolves only on the engine whose hierarchy derives
the parent, so materials prepared for one boot are useless on the next.

Sealing and wrapping run anywhere (they touch only public parts);
import and unseal run inside the engine.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..entropy import EntropySource, OsEntropy
from ..errors import BadPublicKey, ImportFailed, SvtpmError, UnsealFailed
from .engine import TpmEngine
from .keys import (
    ALG_ECC_DECRYPT,
    P256,
    KeyObject,
    KeyTemplate,
    PublicPart,
    USAGE_DECRYPT,
    object_from_template,
    point_of_scalar,
    scalar_from_bytes,
)

_SEAL_INFO = b"seal-wrap:"
_IMPORT_INFO = b"import-wrap:"


@dataclass(frozen=True)
class SealedBlob:
    """Secret bound to a storage key; opened only where that key resolves."""

    parent_name: bytes  # 32 bytes
    ephemeral_point: bytes  # 65 bytes
    nonce: bytes  # 12 bytes
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        return (
            self.parent_name
            + self.ephemeral_point
            + self.nonce
            + struct.pack(">I", len(self.ciphertext))
            + self.ciphertext
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedBlob":
        if len(data) < 32 + 65 + 12 + 4:
            raise SvtpmError("truncated sealed blob")
        name, point, nonce = data[:32], data[32:97], data[97:109]
        (ct_len,) = struct.unpack_from(">I", data, 109)
        ct = data[113 : 113 + ct_len]
        if len(ct) != ct_len:
            raise SvtpmError("truncated sealed blob")
        return cls(name, point, nonce, ct)


@dataclass(frozen=True)
class WrappedKey:
    """A key encrypted to an engine-resident parent's public part."""

    ephemeral_point: bytes
    nonce: bytes
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        return (
            self.ephemeral_point
            + self.nonce
            + struct.pack(">I", len(self.ciphertext))
            + self.ciphertext
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "WrappedKey":
        if len(data) < 65 + 12 + 4:
            raise SvtpmError("truncated wrapped key")
        point, nonce = data[:65], data[65:77]
        (ct_len,) = struct.unpack_from(">I", data, 77)
        ct = data[81 : 81 + ct_len]
        if len(ct) != ct_len:
            raise SvtpmError("truncated wrapped key")
        return cls(point, nonce, ct)


@dataclass
class ExternalKey:
    """A keypair generated outside any TPM (the intermediary storage key)."""

    scalar: int
    public: PublicPart
    template: KeyTemplate


def generate_external_key(rng: Optional[EntropySource] = None) -> ExternalKey:
    """Restricted decryption key with sensitiveDataOrigin, created off-TPM."""
    rng = rng or OsEntropy()
    template = KeyTemplate(usage=USAGE_DECRYPT, restricted=True, sensitive_data_origin=True)
    scalar = scalar_from_bytes(rng.draw(48))
    obj = object_from_template(scalar, template)
    return ExternalKey(scalar=scalar, public=obj.public, template=template)


def _derive(shared: bytes, info: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=info).derive(shared)


def _ecies_encrypt(
    parent_public: PublicPart, plaintext: bytes, info_prefix: bytes, rng: EntropySource
) -> tuple[bytes, bytes, bytes]:
    if parent_public.algorithm != ALG_ECC_DECRYPT:
        raise BadPublicKey("parent must be a restricted decryption key")
    eph_scalar = scalar_from_bytes(rng.draw(48))
    eph_priv = ec.derive_private_key(eph_scalar, P256)
    shared = eph_priv.exchange(ec.ECDH(), parent_public.key())
    key = _derive(shared, info_prefix + parent_public.name())
    nonce = rng.draw(12)
    ct = AESGCM(key).encrypt(nonce, plaintext, parent_public.name())
    return point_of_scalar(eph_scalar), nonce, ct


def _ecies_decrypt(parent: KeyObject, point: bytes, nonce: bytes, ct: bytes, info_prefix: bytes) -> bytes:
    peer = ec.EllipticCurvePublicKey.from_encoded_point(P256, point)
    shared = parent.private_key().exchange(ec.ECDH(), peer)
    key = _derive(shared, info_prefix + parent.name)
    return AESGCM(key).decrypt(nonce, ct, parent.name)


def seal(parent_public: PublicPart, secret: bytes, rng: Optional[EntropySource] = None) -> SealedBlob:
    """Bind a secret to the holder of the parent's private part."""
    point, nonce, ct = _ecies_encrypt(parent_public, secret, _SEAL_INFO, rng or OsEntropy())
    return SealedBlob(parent_public.name(), point, nonce, ct)


def wrap_key(
    key: ExternalKey, parent_public: PublicPart, rng: Optional[EntropySource] = None
) -> WrappedKey:
    """Encrypt an external key to an engine parent for later import."""
    plaintext = key.template.canonical() + key.scalar.to_bytes(32, "big")
    point, nonce, ct = _ecies_encrypt(parent_public, plaintext, _IMPORT_INFO, rng or OsEntropy())
    return WrappedKey(point, nonce, ct)


def import_wrapped(engine: TpmEngine, parent_handle: int, wrapped: WrappedKey) -> int:
    """Load a wrapped key under a restricted-decrypt parent; new handle."""
    parent = engine._object(parent_handle)
    if not (parent.restricted and parent.decrypt):
        raise ImportFailed("parent is not a restricted decryption key")
    try:
        plaintext = _ecies_decrypt(
            parent, wrapped.ephemeral_point, wrapped.nonce, wrapped.ciphertext, _IMPORT_INFO
        )
    except (InvalidTag, ValueError) as exc:
        raise ImportFailed("wrapped key does not decrypt under this parent") from exc
    if len(plaintext) != 3 + 32:
        raise ImportFailed("malformed wrapped key payload")
    template = KeyTemplate.from_canonical(plaintext[:3])
    scalar = int.from_bytes(plaintext[3:], "big")
    return engine._load(object_from_template(scalar, template))


def unseal(engine: TpmEngine, handle: int, blob: SealedBlob) -> bytes:
    """Recover a sealed secret via the loaded parent key."""
    parent = engine._object(handle)
    if not parent.decrypt:
        raise UnsealFailed("handle is not a decryption key")
    if parent.name != blob.parent_name:
        raise UnsealFailed("sealed blob bound to a different parent")
    try:
        return _ecies_decrypt(
            parent, blob.ephemeral_point, blob.nonce, blob.ciphertext, _SEAL_INFO
        )
    except (InvalidTag, ValueError) as exc:
        raise UnsealFailed("sealed blob does not decrypt under this parent") from exc
