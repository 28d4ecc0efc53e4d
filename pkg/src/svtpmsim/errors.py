"""Exception hierarchy shared across the simulator.

Every error that can cross the VMPL command page carries a stable
32-bit wire code so the guest can reconstruct the exception class from
a status-3 response.
"""


class SvtpmError(Exception):
    """Base class for all simulator errors."""

    WIRE_CODE = 0x00FF


class DecodeError(SvtpmError):
    """Malformed TLV command or response buffer."""

    WIRE_CODE = 0x0001


# --- TPM engine ---------------------------------------------------------

class EntropyUnavailable(SvtpmError):
    WIRE_CODE = 0x0101


class UnsupportedTemplate(SvtpmError):
    WIRE_CODE = 0x0102


class BadIndex(SvtpmError):
    WIRE_CODE = 0x0103


class BadDigestLength(SvtpmError):
    WIRE_CODE = 0x0104


class BadHandle(SvtpmError):
    WIRE_CODE = 0x0105


class KeyNotSigning(SvtpmError):
    WIRE_CODE = 0x0106


class IndexUndefined(SvtpmError):
    WIRE_CODE = 0x0107


class DataTooLarge(SvtpmError):
    WIRE_CODE = 0x0108


class BadPublicKey(SvtpmError):
    WIRE_CODE = 0x0109


class ActivationFailed(SvtpmError):
    """Uniform failure for credential activation (wrong key, wrong name,
    or tampered blob are indistinguishable by design)."""

    WIRE_CODE = 0x010A


class ImportFailed(SvtpmError):
    WIRE_CODE = 0x010B


class UnsealFailed(SvtpmError):
    WIRE_CODE = 0x010C


# --- secure-processor platform ------------------------------------------

class EmptyImage(SvtpmError):
    WIRE_CODE = 0x0201


class AeadFailure(SvtpmError):
    WIRE_CODE = 0x0202


class ReplayedSequence(SvtpmError):
    WIRE_CODE = 0x0203


# --- VMPL channel --------------------------------------------------------

class ChannelHalted(SvtpmError):
    WIRE_CODE = 0x0301


class ProtocolError(SvtpmError):
    WIRE_CODE = 0x0302


class NothingPending(SvtpmError):
    WIRE_CODE = 0x0303


# --- service / agent ------------------------------------------------------

class Transport(SvtpmError):
    """Network-level failure talking to registrar, verifier or agent."""


class RegistrarRejected(SvtpmError):
    """Registration refused; carries the registrar's failure list."""

    def __init__(self, reason, failures=None):
        super().__init__(reason)
        self.reason = reason
        self.failures = failures or []


class ReportRequestFailed(SvtpmError):
    pass


_BY_CODE = {
    cls.WIRE_CODE: cls
    for cls in (
        DecodeError,
        EntropyUnavailable,
        UnsupportedTemplate,
        BadIndex,
        BadDigestLength,
        BadHandle,
        KeyNotSigning,
        IndexUndefined,
        DataTooLarge,
        BadPublicKey,
        ActivationFailed,
        ImportFailed,
        UnsealFailed,
        EmptyImage,
        AeadFailure,
        ReplayedSequence,
        ChannelHalted,
        ProtocolError,
        NothingPending,
    )
}


def wire_code_for(exc: SvtpmError) -> int:
    return getattr(exc, "WIRE_CODE", SvtpmError.WIRE_CODE)


def exception_for_code(code: int) -> type:
    """Map a status-3 wire code back to its exception class."""
    return _BY_CODE.get(code, SvtpmError)
