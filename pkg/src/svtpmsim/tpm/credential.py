"""Credential protection: the challenge half runs anywhere, the activation
half only succeeds on the engine holding the endorsement private key with
the named attestation key loaded.

Wrapping is ephemeral ECDH against the endorsement public key, an
HKDF-SHA256 step keyed with the attestation key name, then AES-256-GCM.
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
from ..errors import ActivationFailed, BadPublicKey
from .engine import TpmEngine
from .keys import ALG_ECC_DECRYPT, P256, PublicPart, point_of_scalar, scalar_from_bytes

_INFO_PREFIX = b"credential-wrap:"


@dataclass(frozen=True)
class CredentialBlob:
    ephemeral_point: bytes  # 65 bytes uncompressed
    nonce: bytes  # 12 bytes
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        return (
            self.ephemeral_point
            + self.nonce
            + struct.pack(">I", len(self.ciphertext))
            + self.ciphertext
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "CredentialBlob":
        if len(data) < 65 + 12 + 4:
            raise ActivationFailed("truncated credential blob")
        point, nonce = data[:65], data[65:77]
        (ct_len,) = struct.unpack_from(">I", data, 77)
        ct = data[81 : 81 + ct_len]
        if len(ct) != ct_len:
            raise ActivationFailed("truncated credential blob")
        return cls(point, nonce, ct)


def _wrap_key(shared: bytes, aik_name: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(), length=32, salt=None, info=_INFO_PREFIX + aik_name
    ).derive(shared)


def make_credential(
    ek_public: PublicPart,
    aik_name: bytes,
    secret: bytes,
    rng: Optional[EntropySource] = None,
) -> CredentialBlob:
    """Stateless verifier-side helper; needs no TPM."""
    if ek_public.algorithm != ALG_ECC_DECRYPT:
        raise BadPublicKey("credential target must be a decryption key")
    try:
        ek_key = ek_public.key()
    except Exception as exc:
        raise BadPublicKey("invalid endorsement public key") from exc
    if len(aik_name) != 32:
        raise BadPublicKey("attestation key name must be 32 bytes")
    if len(secret) > 32:
        raise BadPublicKey("secret longer than 32 bytes")
    rng = rng or OsEntropy()
    eph_scalar = scalar_from_bytes(rng.draw(48))
    eph_priv = ec.derive_private_key(eph_scalar, P256)
    shared = eph_priv.exchange(ec.ECDH(), ek_key)
    nonce = rng.draw(12)
    ct = AESGCM(_wrap_key(shared, aik_name)).encrypt(nonce, secret, aik_name)
    return CredentialBlob(point_of_scalar(eph_scalar), nonce, ct)


def activate_credential(
    engine: TpmEngine, ek_handle: int, aik_handle: int, blob: CredentialBlob
) -> bytes:
    """Recover the secret; fails uniformly on wrong key, wrong name or tamper."""
    ek = engine._object(ek_handle)
    aik = engine._object(aik_handle)
    try:
        peer = ec.EllipticCurvePublicKey.from_encoded_point(P256, blob.ephemeral_point)
        shared = ek.private_key().exchange(ec.ECDH(), peer)
        return AESGCM(_wrap_key(shared, aik.name)).decrypt(
            blob.nonce, blob.ciphertext, aik.name
        )
    except (InvalidTag, ValueError) as exc:
        raise ActivationFailed("credential activation failed") from exc
