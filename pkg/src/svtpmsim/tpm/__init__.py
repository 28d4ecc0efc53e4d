from .engine import TpmEngine, PcrSelection, Quote, verify_quote, PCR_BANKS, NUM_PCRS
from .keys import (
    KeyTemplate,
    KeyObject,
    PublicPart,
    EK_TEMPLATE,
    AIK_TEMPLATE,
    SRK_TEMPLATE,
    ALG_ECC_SIGN,
    ALG_ECC_DECRYPT,
    HIERARCHY_ENDORSEMENT,
    HIERARCHY_STORAGE,
    HIERARCHY_NULL,
)
from .credential import CredentialBlob, make_credential
from .sealing import SealedBlob, WrappedKey, ExternalKey, generate_external_key, seal, wrap_key

__all__ = [
    "TpmEngine",
    "PcrSelection",
    "Quote",
    "verify_quote",
    "PCR_BANKS",
    "NUM_PCRS",
    "KeyTemplate",
    "KeyObject",
    "PublicPart",
    "EK_TEMPLATE",
    "AIK_TEMPLATE",
    "SRK_TEMPLATE",
    "ALG_ECC_SIGN",
    "ALG_ECC_DECRYPT",
    "HIERARCHY_ENDORSEMENT",
    "HIERARCHY_STORAGE",
    "HIERARCHY_NULL",
    "CredentialBlob",
    "make_credential",
    "SealedBlob",
    "WrappedKey",
    "ExternalKey",
    "generate_external_key",
    "seal",
    "wrap_key",
]
