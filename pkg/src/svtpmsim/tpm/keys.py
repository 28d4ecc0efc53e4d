"""Key objects, templates and the canonical public serialization.

Public keys travel as a 1-byte algorithm tag followed by the uncompressed
P-256 point (0x04 || X || Y). An object's name is SHA-256 over that
canonical form and is recomputable by any party holding the public part.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.hazmat.primitives.asymmetric import ec

from ..errors import BadPublicKey, UnsupportedTemplate

ALG_ECC_SIGN = 0x01
ALG_ECC_DECRYPT = 0x02

HIERARCHY_ENDORSEMENT = 0x01
HIERARCHY_STORAGE = 0x02
HIERARCHY_NULL = 0x03
HIERARCHIES = (HIERARCHY_ENDORSEMENT, HIERARCHY_STORAGE, HIERARCHY_NULL)

P256 = ec.SECP256R1()
P256_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551

USAGE_SIGN = "sign"
USAGE_DECRYPT = "decrypt"
_USAGE_CODES = {USAGE_SIGN: 0x01, USAGE_DECRYPT: 0x02}


@dataclass(frozen=True)
class KeyTemplate:
    """Creation parameters for a primary key."""

    algorithm: str = "ecc-p256"
    usage: str = USAGE_SIGN
    restricted: bool = True
    sensitive_data_origin: bool = True

    def canonical(self) -> bytes:
        """Stable 3-byte encoding used both on the wire and as KDF info."""
        if self.algorithm != "ecc-p256":
            raise UnsupportedTemplate(f"unknown algorithm {self.algorithm!r}")
        usage = _USAGE_CODES.get(self.usage)
        if usage is None:
            raise UnsupportedTemplate(f"unknown usage {self.usage!r}")
        flags = (0x01 if self.restricted else 0) | (0x02 if self.sensitive_data_origin else 0)
        return bytes([0x01, usage, flags])

    @classmethod
    def from_canonical(cls, data: bytes) -> "KeyTemplate":
        if len(data) != 3 or data[0] != 0x01:
            raise UnsupportedTemplate("bad template encoding")
        usage = {v: k for k, v in _USAGE_CODES.items()}.get(data[1])
        if usage is None:
            raise UnsupportedTemplate("bad template usage byte")
        return cls(
            usage=usage,
            restricted=bool(data[2] & 0x01),
            sensitive_data_origin=bool(data[2] & 0x02),
        )


EK_TEMPLATE = KeyTemplate(usage=USAGE_DECRYPT)
AIK_TEMPLATE = KeyTemplate(usage=USAGE_SIGN)
SRK_TEMPLATE = KeyTemplate(usage=USAGE_DECRYPT)


@dataclass(frozen=True)
class PublicPart:
    """Algorithm tag plus uncompressed curve point."""

    algorithm: int
    point: bytes  # 65 bytes, 0x04 || X(32) || Y(32)

    def canonical(self) -> bytes:
        return bytes([self.algorithm]) + self.point

    def name(self) -> bytes:
        return hashlib.sha256(self.canonical()).digest()

    def key(self) -> ec.EllipticCurvePublicKey:
        return ec.EllipticCurvePublicKey.from_encoded_point(P256, self.point)

    @classmethod
    def from_canonical(cls, data: bytes) -> "PublicPart":
        if len(data) != 66 or data[0] not in (ALG_ECC_SIGN, ALG_ECC_DECRYPT) or data[1] != 0x04:
            raise BadPublicKey("malformed public part")
        part = cls(algorithm=data[0], point=data[1:])
        try:
            part.key()
        except Exception as exc:
            raise BadPublicKey("point not on curve") from exc
        return part


@dataclass
class KeyObject:
    """A loaded key: public part, in-engine private scalar, attributes."""

    public: PublicPart
    private_scalar: int
    restricted: bool
    decrypt: bool
    sign: bool
    sensitive_data_origin: bool

    @property
    def name(self) -> bytes:
        return self.public.name()

    def private_key(self) -> ec.EllipticCurvePrivateKey:
        return ec.derive_private_key(self.private_scalar, P256)


def scalar_from_bytes(raw: bytes) -> int:
    """Reduce raw entropy into a valid non-zero P-256 scalar."""
    return int.from_bytes(raw, "big") % (P256_ORDER - 1) + 1


def point_of_scalar(scalar: int) -> bytes:
    pub = ec.derive_private_key(scalar, P256).public_key()
    from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

    return pub.public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)


def public_for_template(scalar: int, template: KeyTemplate) -> PublicPart:
    alg = ALG_ECC_SIGN if template.usage == USAGE_SIGN else ALG_ECC_DECRYPT
    return PublicPart(algorithm=alg, point=point_of_scalar(scalar))


def object_from_template(scalar: int, template: KeyTemplate) -> KeyObject:
    return KeyObject(
        public=public_for_template(scalar, template),
        private_scalar=scalar,
        restricted=template.restricted,
        decrypt=template.usage == USAGE_DECRYPT,
        sign=template.usage == USAGE_SIGN,
        sensitive_data_origin=template.sensitive_data_origin,
    )
