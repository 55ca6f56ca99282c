"""Exception types raised by the simulator."""


class RelayDofError(Exception):
    """Base class for every error raised by this package."""

    #: Short machine-readable tag used in CLI error records.
    kind = "error"


class NotEliminable(RelayDofError):
    """Known equations cannot cancel an out-of-target coefficient."""

    kind = "not-eliminable"


class Singular(RelayDofError):
    """A decode system is rank deficient or too ill-conditioned to trust.

    Under continuous fading this only happens on degenerate channel draws,
    so simulation runners catch it and redraw.
    """

    kind = "singular"

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class FormabilityViolation(RelayDofError):
    """A node tried to transmit something outside the span of its knowledge."""

    kind = "formability"

    def __init__(self, message, slot=None, layer=None, node=None):
        super().__init__(message)
        self.slot = slot
        self.layer = layer
        self.node = node


class CsitAccessError(RelayDofError):
    """A node asked for channel state it is not entitled to see."""

    kind = "csit-access"

    def __init__(self, message, slot=None, layer=None, hop=None, queried_slot=None):
        super().__init__(message)
        self.slot = slot
        self.layer = layer
        self.hop = hop
        self.queried_slot = queried_slot
