"""Simulated AMD-style secure processor.

Measures launch images, holds per-VMPL communication keys, signs
attestation reports with a per-platform P-384 key chained to a simulated
vendor root, and exposes the CPU entropy instructions.

Report layout (232 bytes, little-endian integers):

====== ======= =====================================
offset length  field
====== ======= =====================================
0      4       version
4      4       vmpl (privilege level of the requester)
8      48      launch measurement (SHA-384)
56     64      report_data (caller-supplied)
120    16      boot_nonce (per-launch randomness)
136    96      ECDSA P-384 signature, raw r||s
====== ======= =====================================

Certificates are DER-like TLV blobs: tag 0x30, u32 length, then inner
TLVs (0x01 subject, 0x02 issuer, 0x03 public point, 0x04 signature);
the signature covers the preceding inner TLVs and is issued by the
certificate's issuer key. A chain is the concatenation root || leaf.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .entropy import EntropySource, OsEntropy
from .errors import AeadFailure, EmptyImage, ReplayedSequence, SvtpmError

P384 = ec.SECP384R1()
P384_ORDER = int(
    "39402006196394479212279040100143613805079739270465446667946905279627"
    "659399113263569398956308152294913554433653942643"
)

REPORT_VERSION = 1
REPORT_LEN = 232
REPORT_BODY_LEN = 136
REPORT_DATA_LEN = 64

NUM_VMPLS = 4


def _p384_scalar(raw: bytes) -> int:
    return int.from_bytes(raw, "big") % (P384_ORDER - 1) + 1


def _p384_point(priv: ec.EllipticCurvePrivateKey) -> bytes:
    return priv.public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)


def _p384_sign(priv: ec.EllipticCurvePrivateKey, message: bytes) -> bytes:
    der = priv.sign(message, ec.ECDSA(hashes.SHA384(), deterministic_signing=True))
    r, s = decode_dss_signature(der)
    return r.to_bytes(48, "big") + s.to_bytes(48, "big")


def _p384_verify(point: bytes, message: bytes, signature: bytes) -> bool:
    if len(signature) != 96:
        return False
    r = int.from_bytes(signature[:48], "big")
    s = int.from_bytes(signature[48:], "big")
    try:
        pub = ec.EllipticCurvePublicKey.from_encoded_point(P384, point)
        pub.verify(encode_dss_signature(r, s), message, ec.ECDSA(hashes.SHA384()))
        return True
    except (InvalidSignature, ValueError):
        return False


# -- launch image ------------------------------------------------------------


@dataclass(frozen=True)
class LaunchImage:
    """Ordered boot-time binaries; the measurement is a pure function of them."""

    parts: Tuple[Tuple[str, bytes], ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple((str(l), bytes(b)) for l, b in self.parts))

    def measurement(self) -> bytes:
        """SHA-384 over length-framed (label, bytes) pairs."""
        import hashlib

        h = hashlib.sha384()
        for label, blob in self.parts:
            lb = label.encode()
            h.update(struct.pack(">I", len(lb)) + lb + struct.pack(">I", len(blob)) + blob)
        return h.digest()


# -- attestation report -------------------------------------------------------


@dataclass
class AttestationReport:
    version: int
    vmpl: int
    measurement: bytes  # 48 bytes
    report_data: bytes  # 64 bytes
    boot_nonce: bytes  # 16 bytes
    signature: bytes  # 96 bytes

    def body(self) -> bytes:
        return (
            struct.pack("<II", self.version, self.vmpl)
            + self.measurement
            + self.report_data
            + self.boot_nonce
        )

    def to_bytes(self) -> bytes:
        return self.body() + self.signature

    @classmethod
    def from_bytes(cls, data: bytes) -> "AttestationReport":
        if len(data) != REPORT_LEN:
            raise SvtpmError(f"report must be {REPORT_LEN} bytes, got {len(data)}")
        version, vmpl = struct.unpack_from("<II", data, 0)
        return cls(
            version=version,
            vmpl=vmpl,
            measurement=data[8:56],
            report_data=data[56:120],
            boot_nonce=data[120:136],
            signature=data[136:232],
        )


# -- certificates --------------------------------------------------------------

_CERT_TAG = 0x30
_FLD_SUBJECT = 0x01
_FLD_ISSUER = 0x02
_FLD_PUBKEY = 0x03
_FLD_SIGNATURE = 0x04


@dataclass(frozen=True)
class Certificate:
    subject: str
    issuer: str
    public_point: bytes  # 97 bytes uncompressed P-384
    signature: bytes  # 96 bytes by issuer key

    def signed_body(self) -> bytes:
        return b"".join(
            _tlv(t, v)
            for t, v in (
                (_FLD_SUBJECT, self.subject.encode()),
                (_FLD_ISSUER, self.issuer.encode()),
                (_FLD_PUBKEY, self.public_point),
            )
        )

    def to_bytes(self) -> bytes:
        body = self.signed_body() + _tlv(_FLD_SIGNATURE, self.signature)
        return bytes([_CERT_TAG]) + struct.pack(">I", len(body)) + body


def _tlv(tag: int, value: bytes) -> bytes:
    return bytes([tag]) + struct.pack(">I", len(value)) + value


def _iter_tlvs(buf: bytes):
    off = 0
    while off < len(buf):
        if off + 5 > len(buf):
            raise SvtpmError("truncated TLV")
        tag = buf[off]
        (length,) = struct.unpack_from(">I", buf, off + 1)
        off += 5
        if off + length > len(buf):
            raise SvtpmError("truncated TLV value")
        yield tag, buf[off : off + length]
        off += length


def parse_certificate(data: bytes) -> Tuple[Certificate, int]:
    """Parse one certificate blob; returns (cert, bytes consumed)."""
    if len(data) < 5 or data[0] != _CERT_TAG:
        raise SvtpmError("not a certificate blob")
    (length,) = struct.unpack_from(">I", data, 1)
    end = 5 + length
    if end > len(data):
        raise SvtpmError("truncated certificate")
    fields: Dict[int, bytes] = {}
    for tag, value in _iter_tlvs(data[5:end]):
        fields[tag] = value
    try:
        cert = Certificate(
            subject=fields[_FLD_SUBJECT].decode(),
            issuer=fields[_FLD_ISSUER].decode(),
            public_point=fields[_FLD_PUBKEY],
            signature=fields[_FLD_SIGNATURE],
        )
    except KeyError as exc:
        raise SvtpmError("certificate missing field") from exc
    return cert, end


def parse_chain(data: bytes) -> List[Certificate]:
    certs = []
    while data:
        cert, used = parse_certificate(data)
        certs.append(cert)
        data = data[used:]
    return certs


def serialize_chain(certs: Sequence[Certificate]) -> bytes:
    return b"".join(c.to_bytes() for c in certs)


def _make_certificate(
    subject: str, issuer: str, public_point: bytes, issuer_priv: ec.EllipticCurvePrivateKey
) -> Certificate:
    unsigned = Certificate(subject, issuer, public_point, b"")
    return Certificate(subject, issuer, public_point, _p384_sign(issuer_priv, unsigned.signed_body()))


class RootAuthority:
    """Simulated silicon-vendor root that endorses per-platform signing keys."""

    SUBJECT = "snp-sim-root"

    def __init__(self, rng: Optional[EntropySource] = None) -> None:
        rng = rng or OsEntropy()
        self._priv = ec.derive_private_key(_p384_scalar(rng.draw(72)), P384)
        self.public_point = _p384_point(self._priv)
        self.root_cert = _make_certificate(self.SUBJECT, self.SUBJECT, self.public_point, self._priv)

    def endorse(self, subject: str, public_point: bytes) -> Certificate:
        return _make_certificate(subject, self.SUBJECT, public_point, self._priv)


# -- AEAD messages over the per-VMPL keys -------------------------------------


@dataclass(frozen=True)
class AeadMessage:
    """Sealed guest <-> secure-processor message; nonce derived from sequence."""

    sequence: int
    ciphertext: bytes


def _seq_nonce(sequence: int) -> bytes:
    return struct.pack("<Q", sequence) + bytes(4)


def _seal(key: bytes, sequence: int, vmpl: int, payload: bytes) -> AeadMessage:
    ct = AESGCM(key).encrypt(_seq_nonce(sequence), payload, bytes([vmpl]))
    return AeadMessage(sequence=sequence, ciphertext=ct)


def _open(key: bytes, vmpl: int, msg: AeadMessage) -> bytes:
    try:
        return AESGCM(key).decrypt(_seq_nonce(msg.sequence), msg.ciphertext, bytes([vmpl]))
    except (InvalidTag, ValueError) as exc:
        raise AeadFailure("message does not authenticate under this VMPCK") from exc


class VmpckSet:
    """Four per-VMPL AEAD keys with monotonic per-key sequence tracking."""

    def __init__(self, rng: EntropySource) -> None:
        self.keys = [rng.draw(32) for _ in range(NUM_VMPLS)]
        self.last_sequence = [0] * NUM_VMPLS


def build_report_request(report_data: bytes, claimed_vmpl: int = 0) -> bytes:
    """Request payload: claimed level (ignored by the platform) + user data."""
    if len(report_data) != REPORT_DATA_LEN:
        raise SvtpmError(f"report_data must be {REPORT_DATA_LEN} bytes")
    return struct.pack("<I", claimed_vmpl) + report_data


class VmpckChannel:
    """Client-side sealer for one privilege level's communication key."""

    def __init__(self, key: bytes, vmpl: int, start_sequence: int = 0) -> None:
        self._key = key
        self.vmpl = vmpl
        self._sequence = start_sequence

    def seal_request(self, payload: bytes) -> AeadMessage:
        self._sequence += 1
        return _seal(self._key, self._sequence, self.vmpl, payload)

    def open_response(self, msg: AeadMessage) -> bytes:
        payload = _open(self._key, self.vmpl, msg)
        self._sequence = max(self._sequence, msg.sequence)
        return payload


# -- the platform ---------------------------------------------------------------


class PlatformHandle:
    """One simulated machine: launch measurement, VMPL keys, report signer."""

    def __init__(
        self,
        image: LaunchImage,
        with_svsm: bool,
        entropy: EntropySource,
        vendor: RootAuthority,
        platform_rng: EntropySource,
    ) -> None:
        self.image = image
        self.with_svsm = with_svsm
        self.entropy = entropy
        self.measurement = image.measurement()
        self.vmpcks = VmpckSet(platform_rng)
        self.boot_nonce = platform_rng.draw(16)
        self._chip_secret = platform_rng.draw(32)
        self._vcek_priv = ec.derive_private_key(_p384_scalar(platform_rng.draw(72)), P384)
        self.vcek_cert = vendor.endorse("snp-sim-vcek", _p384_point(self._vcek_priv))
        self.root_cert = vendor.root_cert
        # without an SVSM the guest itself occupies the highest level
        self.guest_vmpl = 0 if not with_svsm else 1

    # entropy instructions ----------------------------------------------------

    def draw_entropy(self, n: int) -> bytes:
        return self.entropy.draw(n)

    def derived_key(self, label: bytes) -> bytes:
        """Secret derived by the secure processor, independent of the
        guest-visible RNG instructions; used to harden weak entropy."""
        return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=bytes(label)).derive(
            self._chip_secret
        )

    # report issuance -----------------------------------------------------------

    def vmpck(self, level: int) -> bytes:
        if not 0 <= level < NUM_VMPLS:
            raise SvtpmError(f"VMPL {level} out of range")
        return self.vmpcks.keys[level]

    def report_request(
        self, requester_vmpl: int, sealed_request: AeadMessage
    ) -> Tuple[AeadMessage, AttestationReport]:
        """Issue a signed report for the requesting privilege level.

        The level is taken from the channel whose key authenticated the
        message, never from the request payload. Sequence numbers must
        strictly increase per key.
        """
        if not 0 <= requester_vmpl < NUM_VMPLS:
            raise SvtpmError(f"VMPL {requester_vmpl} out of range")
        if sealed_request.sequence <= self.vmpcks.last_sequence[requester_vmpl]:
            raise ReplayedSequence(
                f"sequence {sealed_request.sequence} not past "
                f"{self.vmpcks.last_sequence[requester_vmpl]}"
            )
        key = self.vmpcks.keys[requester_vmpl]
        payload = _open(key, requester_vmpl, sealed_request)
        if len(payload) != 4 + REPORT_DATA_LEN:
            raise SvtpmError("malformed report request payload")
        report_data = payload[4:]  # claimed level in payload[0:4] is ignored
        report = AttestationReport(
            version=REPORT_VERSION,
            vmpl=requester_vmpl,
            measurement=self.measurement,
            report_data=report_data,
            boot_nonce=self.boot_nonce,
            signature=b"",
        )
        report.signature = _p384_sign(self._vcek_priv, report.body())
        response_seq = sealed_request.sequence + 1
        self.vmpcks.last_sequence[requester_vmpl] = response_seq
        sealed_response = _seal(key, response_seq, requester_vmpl, report.to_bytes())
        return sealed_response, report

    def vcek_chain(self) -> bytes:
        """Vendor root followed by this platform's signing certificate."""
        return serialize_chain([self.root_cert, self.vcek_cert])


def launch(
    image: LaunchImage,
    with_svsm: bool = True,
    entropy: Optional[EntropySource] = None,
    vendor: Optional[RootAuthority] = None,
    platform_rng: Optional[EntropySource] = None,
) -> PlatformHandle:
    """Measure the image and bring up a simulated machine."""
    if not image.parts:
        raise EmptyImage("launch image has no parts")
    return PlatformHandle(
        image=image,
        with_svsm=with_svsm,
        entropy=entropy or OsEntropy(),
        vendor=vendor or RootAuthority(),
        platform_rng=platform_rng or OsEntropy(),
    )


# -- verifier-side chain/report verification -------------------------------------


def verify_report(report_bytes: bytes, chain_bytes: bytes, pinned_root_point: bytes):
    """Validate a report against a chain and a pinned vendor root.

    Returns (report, None) on success or (maybe-report, reason) where
    reason is 'chain-incomplete' or 'sig-invalid'.
    """
    try:
        certs = parse_chain(chain_bytes)
    except SvtpmError:
        return None, "chain-incomplete"
    if len(certs) < 2:
        return None, "chain-incomplete"
    root, vcek = certs[0], certs[1]
    if root.public_point != pinned_root_point:
        return None, "sig-invalid"
    if root.subject != root.issuer or not _p384_verify(
        root.public_point, root.signed_body(), root.signature
    ):
        return None, "sig-invalid"
    if not _p384_verify(root.public_point, vcek.signed_body(), vcek.signature):
        return None, "sig-invalid"
    try:
        report = AttestationReport.from_bytes(report_bytes)
    except SvtpmError:
        return None, "sig-invalid"
    if not _p384_verify(vcek.public_point, report.body(), report.signature):
        return report, "sig-invalid"
    return report, None
