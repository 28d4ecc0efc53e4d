"""Minimal ephemeral TPM 2.0-style command processor.

The engine is manufactured fresh at every boot: hierarchy seeds are drawn
from the provided entropy source, PCR banks reset to zero and the NV
store starts empty. Nothing is ever persisted; there is deliberately no
way to serialize the hierarchy seeds out of this module.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..entropy import EntropySource
from ..errors import (
    BadDigestLength,
    BadHandle,
    BadIndex,
    DataTooLarge,
    EntropyUnavailable,
    IndexUndefined,
    KeyNotSigning,
    SvtpmError,
)
from .keys import (
    HIERARCHIES,
    HIERARCHY_ENDORSEMENT,
    HIERARCHY_NULL,
    HIERARCHY_STORAGE,
    KeyObject,
    KeyTemplate,
    PublicPart,
    object_from_template,
    scalar_from_bytes,
)

# bank algorithm -> digest size
PCR_BANKS = {"sha1": 20, "sha256": 32, "sha384": 48}
NUM_PCRS = 24
NV_MAX_DATA = 4096

BANK_CODES = {"sha1": 1, "sha256": 2, "sha384": 3}
BANK_FROM_CODE = {v: k for k, v in BANK_CODES.items()}

_FIRST_HANDLE = 0x80000000

_HIERARCHY_LABELS = {
    HIERARCHY_ENDORSEMENT: b"endorsement",
    HIERARCHY_STORAGE: b"storage",
    HIERARCHY_NULL: b"null",
}


@dataclass(frozen=True)
class PcrSelection:
    """One bank plus a set of register indices."""

    bank: str
    indices: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(sorted(set(self.indices))))

    def validate(self) -> None:
        if self.bank not in PCR_BANKS:
            raise BadIndex(f"unknown bank {self.bank!r}")
        if not self.indices:
            raise BadIndex("empty PCR selection")
        for i in self.indices:
            if not 0 <= i < NUM_PCRS:
                raise BadIndex(f"PCR index {i} out of range")


@dataclass
class Quote:
    """Signed statement over selected PCR values and a caller nonce."""

    pcr_digest: bytes
    nonce: bytes
    selections: Tuple[PcrSelection, ...]
    boot_counter: int
    signature: bytes  # raw r||s, 64 bytes

    MAGIC = b"TPMQ"

    def body(self) -> bytes:
        out = [self.MAGIC, struct.pack(">Q", self.boot_counter)]
        out.append(struct.pack(">B", len(self.nonce)))
        out.append(self.nonce)
        out.append(struct.pack(">B", len(self.selections)))
        for sel in self.selections:
            out.append(struct.pack(">BB", BANK_CODES[sel.bank], len(sel.indices)))
            out.append(bytes(sel.indices))
        out.append(self.pcr_digest)
        return b"".join(out)

    def to_bytes(self) -> bytes:
        return self.body() + self.signature

    @classmethod
    def from_bytes(cls, data: bytes) -> "Quote":
        if len(data) < 4 + 8 + 1 or data[:4] != cls.MAGIC:
            raise SvtpmError("malformed quote")
        off = 4
        (boot_counter,) = struct.unpack_from(">Q", data, off)
        off += 8
        nonce_len = data[off]
        off += 1
        nonce = data[off : off + nonce_len]
        off += nonce_len
        n_sel = data[off]
        off += 1
        selections = []
        for _ in range(n_sel):
            bank_code, count = struct.unpack_from(">BB", data, off)
            off += 2
            indices = tuple(data[off : off + count])
            off += count
            bank = BANK_FROM_CODE.get(bank_code)
            if bank is None:
                raise SvtpmError("malformed quote selection")
            selections.append(PcrSelection(bank, indices))
        pcr_digest = data[off : off + 32]
        off += 32
        signature = data[off:]
        if len(pcr_digest) != 32 or len(signature) != 64:
            raise SvtpmError("malformed quote trailer")
        return cls(pcr_digest, nonce, tuple(selections), boot_counter, signature)


def verify_quote(aik_public: PublicPart, quote: Quote) -> bool:
    """Check the quote signature under the attestation key's public part."""
    r = int.from_bytes(quote.signature[:32], "big")
    s = int.from_bytes(quote.signature[32:], "big")
    try:
        aik_public.key().verify(
            encode_dss_signature(r, s), quote.body(), ec.ECDSA(hashes.SHA256())
        )
        return True
    except (InvalidSignature, ValueError):
        return False


def zero_digest(bank: str) -> bytes:
    return bytes(PCR_BANKS[bank])


class TpmEngine:
    """One ephemeral TPM instance. Single-threaded; never share concurrently."""

    def __init__(self, seeds: Dict[int, bytes], boot_counter: int) -> None:
        self._hierarchy_seeds = seeds
        self.boot_counter = boot_counter
        self.pcr_banks: Dict[str, List[bytes]] = {
            bank: [zero_digest(bank) for _ in range(NUM_PCRS)] for bank in PCR_BANKS
        }
        self.nv_store: Dict[int, bytes] = {}
        self.loaded_objects: Dict[int, KeyObject] = {}
        self._next_handle = _FIRST_HANDLE

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def manufacture(
        cls, entropy: EntropySource, previous: Optional["TpmEngine"] = None
    ) -> "TpmEngine":
        """Build a fresh instance: new seeds, zero PCRs, empty NV store.

        ``previous`` links the new instance to the prior boot of the same
        simulated machine so the boot counter keeps increasing.
        """
        try:
            seeds = {h: entropy.draw(32) for h in HIERARCHIES}
        except EntropyUnavailable:
            raise
        except Exception as exc:
            raise EntropyUnavailable(str(exc)) from exc
        counter = previous.boot_counter + 1 if previous is not None else 0
        return cls(seeds=seeds, boot_counter=counter)

    def startup(self) -> None:
        """No-op; the instance is fully operational after manufacture."""

    def shutdown(self) -> None:
        """No-op; there is no state to save."""

    # -- key management ------------------------------------------------------

    def create_primary(self, hierarchy: int, template: KeyTemplate) -> Tuple[int, PublicPart]:
        """Derive a primary key deterministically from the hierarchy seed.

        The same engine state and template always produce the same key;
        the private part never leaves the engine.
        """
        if hierarchy not in HIERARCHIES:
            raise BadHandle(f"unknown hierarchy {hierarchy:#x}")
        info = b"tpm-primary:" + _HIERARCHY_LABELS[hierarchy] + b":" + template.canonical()
        okm = HKDF(algorithm=hashes.SHA256(), length=48, salt=None, info=info).derive(
            self._hierarchy_seeds[hierarchy]
        )
        obj = object_from_template(scalar_from_bytes(okm), template)
        handle = self._load(obj)
        return handle, obj.public

    def _load(self, obj: KeyObject) -> int:
        handle = self._next_handle
        self._next_handle += 1
        self.loaded_objects[handle] = obj
        return handle

    def _object(self, handle: int) -> KeyObject:
        try:
            return self.loaded_objects[handle]
        except KeyError:
            raise BadHandle(f"handle {handle:#x} not loaded") from None

    # -- PCRs ---------------------------------------------------------------

    def pcr_extend(self, bank: str, index: int, data_digest: bytes) -> bytes:
        if bank not in PCR_BANKS:
            raise BadIndex(f"unknown bank {bank!r}")
        if not 0 <= index < NUM_PCRS:
            raise BadIndex(f"PCR index {index} out of range")
        if len(data_digest) != PCR_BANKS[bank]:
            raise BadDigestLength(
                f"digest length {len(data_digest)} != {PCR_BANKS[bank]} for {bank}"
            )
        old = self.pcr_banks[bank][index]
        new = hashlib.new(bank, old + data_digest).digest()
        self.pcr_banks[bank][index] = new
        return new

    def pcr_read(self, selections: Sequence[PcrSelection]) -> List[bytes]:
        """Selected PCR values, selection order preserved, indices ascending."""
        values = []
        for sel in selections:
            sel.validate()
            for i in sel.indices:
                values.append(self.pcr_banks[sel.bank][i])
        return values

    # -- quoting -------------------------------------------------------------

    def quote(self, aik_handle: int, selections: Sequence[PcrSelection], nonce: bytes) -> Quote:
        if len(nonce) > 64:
            raise SvtpmError("nonce longer than 64 bytes")
        aik = self._object(aik_handle)
        if not aik.sign:
            raise KeyNotSigning("handle does not reference a signing key")
        selections = tuple(selections)
        values = self.pcr_read(selections)
        pcr_digest = hashlib.sha256(b"".join(values)).digest()
        quote = Quote(
            pcr_digest=pcr_digest,
            nonce=bytes(nonce),
            selections=selections,
            boot_counter=self.boot_counter,
            signature=b"",
        )
        der = aik.private_key().sign(
            quote.body(), ec.ECDSA(hashes.SHA256(), deterministic_signing=True)
        )
        r, s = decode_dss_signature(der)
        quote.signature = r.to_bytes(32, "big") + s.to_bytes(32, "big")
        return quote

    # -- NV store -------------------------------------------------------------

    def nv_define_write(self, nv_index: int, data: bytes) -> None:
        """Define-or-overwrite; indices hold ordinary volatile data."""
        if len(data) > NV_MAX_DATA:
            raise DataTooLarge(f"{len(data)} bytes exceeds NV limit {NV_MAX_DATA}")
        self.nv_store[nv_index & 0xFFFFFFFF] = bytes(data)

    def nv_read(self, nv_index: int) -> bytes:
        try:
            return self.nv_store[nv_index & 0xFFFFFFFF]
        except KeyError:
            raise IndexUndefined(f"NV index {nv_index:#x} not defined") from None
