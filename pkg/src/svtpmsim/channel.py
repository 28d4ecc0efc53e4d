"""Shared command page and VMPL transition machinery.

The guest writes a command into a 4096-byte page, triggers an exit, and
the VMPL0 service answers in place. The hypervisor sits on the transition
path but sees only transition events: it can delay or halt the machine,
never observe or modify the page (the page lives in encrypted guest
memory).

Page layout (little-endian u32 header words):

====== ====== ===========================================
offset length field
====== ====== ===========================================
0      4      status: 0 idle, 1 command-ready,
              2 response-ready, 3 error
4      4      cmd_len
8      4      resp_len
12     4      reserved (always 0)
16     4080   payload; on status 3 the first 4 bytes are
              a big-endian engine error code
====== ====== ===========================================
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import ChannelHalted, NothingPending, ProtocolError, exception_for_code

PAGE_SIZE = 4096
HEADER_SIZE = 16
PAYLOAD_SIZE = PAGE_SIZE - HEADER_SIZE

STATUS_IDLE = 0
STATUS_COMMAND_READY = 1
STATUS_RESPONSE_READY = 2
STATUS_ERROR = 3


class CommandPage:
    """The shared request/response cell; bit-exact byte layout."""

    def __init__(self) -> None:
        self._mem = bytearray(PAGE_SIZE)

    @property
    def status(self) -> int:
        return struct.unpack_from("<I", self._mem, 0)[0]

    @status.setter
    def status(self, value: int) -> None:
        struct.pack_into("<I", self._mem, 0, value)

    @property
    def cmd_len(self) -> int:
        return struct.unpack_from("<I", self._mem, 4)[0]

    @cmd_len.setter
    def cmd_len(self, value: int) -> None:
        struct.pack_into("<I", self._mem, 4, value)

    @property
    def resp_len(self) -> int:
        return struct.unpack_from("<I", self._mem, 8)[0]

    @resp_len.setter
    def resp_len(self, value: int) -> None:
        struct.pack_into("<I", self._mem, 8, value)

    def write_payload(self, data: bytes) -> None:
        if len(data) > PAYLOAD_SIZE:
            raise ProtocolError(f"payload {len(data)} exceeds {PAYLOAD_SIZE}")
        self._mem[HEADER_SIZE : HEADER_SIZE + len(data)] = data

    def read_payload(self, length: int) -> bytes:
        if length > PAYLOAD_SIZE:
            raise ProtocolError("length exceeds payload area")
        return bytes(self._mem[HEADER_SIZE : HEADER_SIZE + length])

    def to_bytes(self) -> bytes:
        return bytes(self._mem)


class HypervisorDecision(enum.Enum):
    RESUME = "resume"
    HALT = "halt"


@dataclass(frozen=True)
class TransitionEvent:
    """What the hypervisor observes: levels and a counter, nothing else."""

    from_vmpl: int
    to_vmpl: int
    sequence: int


HypervisorHook = Callable[[TransitionEvent], Optional[HypervisorDecision]]


class VmplContext:
    """Per-VM transition state: current level, hypervisor hook, VMPL0 handler."""

    def __init__(self, hypervisor_hook: Optional[HypervisorHook] = None) -> None:
        self.current_vmpl = 1
        self.hypervisor_hook = hypervisor_hook
        self.transition_count = 0
        self._vmpl0_handler: Optional[Callable[["VmplContext", CommandPage], None]] = None
        self._command_claimed = False

    def register_vmpl0_handler(self, handler: Callable[["VmplContext", CommandPage], None]) -> None:
        self._vmpl0_handler = handler

    def _transition(self, to_vmpl: int) -> None:
        self.transition_count += 1
        event = TransitionEvent(
            from_vmpl=self.current_vmpl, to_vmpl=to_vmpl, sequence=self.transition_count
        )
        if self.hypervisor_hook is not None:
            decision = self.hypervisor_hook(event)
            if decision == HypervisorDecision.HALT:
                raise ChannelHalted(f"hypervisor halted the VM at transition {event.sequence}")
        self.current_vmpl = to_vmpl


def guest_invoke(ctx: VmplContext, page: CommandPage, command: bytes) -> bytes:
    """Run one command through the page: write, exit, wait, read response.

    Raises the engine's own exception type when the service answered with
    an error status, ChannelHalted if the hypervisor refused to resume.
    """
    if len(command) > PAYLOAD_SIZE:
        raise ProtocolError(f"command of {len(command)} bytes exceeds {PAYLOAD_SIZE}")
    if page.status != STATUS_IDLE:
        raise ProtocolError(f"page not idle (status {page.status})")
    page.write_payload(command)
    page.cmd_len = len(command)
    page.status = STATUS_COMMAND_READY
    ctx._command_claimed = False

    ctx._transition(0)
    if ctx._vmpl0_handler is None:
        raise ProtocolError("no VMPL0 handler registered")
    ctx._vmpl0_handler(ctx, page)
    ctx._transition(1)

    status = page.status
    if status == STATUS_ERROR:
        code = struct.unpack_from(">I", page._mem, HEADER_SIZE)[0]
        page.status = STATUS_IDLE
        page.cmd_len = 0
        page.resp_len = 0
        raise exception_for_code(code)(f"command failed at VMPL0 (code {code:#06x})")
    if status != STATUS_RESPONSE_READY:
        raise ProtocolError(f"VMPL0 handler left page in status {status}")
    response = page.read_payload(page.resp_len)
    page.status = STATUS_IDLE
    page.cmd_len = 0
    page.resp_len = 0
    return response


def svsm_poll(ctx: VmplContext, page: CommandPage) -> bytes:
    """Fetch the pending command at VMPL0; one fetch per command."""
    if ctx.current_vmpl != 0:
        raise ProtocolError("svsm_poll outside VMPL0")
    if page.status != STATUS_COMMAND_READY or ctx._command_claimed:
        raise NothingPending("no unclaimed command pending")
    ctx._command_claimed = True
    return page.read_payload(page.cmd_len)


def svsm_respond(ctx: VmplContext, page: CommandPage, response: bytes) -> None:
    """Publish the response and mark the page response-ready."""
    if page.status != STATUS_COMMAND_READY:
        raise ProtocolError(f"respond with page in status {page.status}")
    if len(response) > PAYLOAD_SIZE:
        raise ProtocolError("response exceeds payload area")
    page.write_payload(response)
    page.resp_len = len(response)
    page.status = STATUS_RESPONSE_READY
    ctx._command_claimed = False


def svsm_respond_error(ctx: VmplContext, page: CommandPage, code: int) -> None:
    """Publish an engine error code via the error status."""
    if page.status != STATUS_COMMAND_READY:
        raise ProtocolError(f"respond with page in status {page.status}")
    page.write_payload(struct.pack(">I", code))
    page.resp_len = 4
    page.status = STATUS_ERROR
    ctx._command_claimed = False
