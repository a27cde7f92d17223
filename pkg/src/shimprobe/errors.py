"""Exception hierarchy shared across the package."""


class ShimprobeError(Exception):
    """Base class for all package errors."""


class CatalogError(ShimprobeError):
    """Invalid syscall catalog content."""


class DuplicateNameError(CatalogError):
    pass


class DuplicateNumberError(CatalogError):
    pass


class UnresolvedStructError(CatalogError):
    pass


class CyclicStructError(CatalogError):
    pass


class TypeExprError(CatalogError):
    """Malformed semantic-type expression."""


class MemoryAccessError(ShimprobeError):
    """An address-space accessor refused a read or write."""

    def __init__(self, address: int, size: int, why: str = "unreadable"):
        super().__init__(f"{why} at 0x{address:x} ({size} bytes)")
        self.address = address
        self.size = size
        self.why = why


class PolicyError(ShimprobeError):
    """Invalid shim policy content."""


class PlanError(ShimprobeError):
    """Invalid campaign plan."""


class AttachDeniedError(ShimprobeError):
    """The interceptor backend could not attach to the target.

    The message names the host facility that was refused so the operator
    can fix privileges (e.g. ptrace scope).
    """


class SessionError(ShimprobeError):
    """Campaign session failed to launch or died mid-run."""


class SfiError(ShimprobeError):
    """SFI program handling error (parse errors surface as verdicts, not this)."""
