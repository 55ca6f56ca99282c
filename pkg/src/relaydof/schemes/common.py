"""Types shared by every scheme runner."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

from ..errors import Singular

log = logging.getLogger(__name__)

#: Decoded symbols closer than this to the truth count as delivered.
DECODE_TOL = 1e-6
#: Max |value - coeffs . truth| tolerated on any tracked equation.
CONSISTENCY_TOL = 1e-10


class Label(NamedTuple):
    """Name of a tracked equation ``L[layer]_index(round)``.

    Layer 1 labels are the source messages themselves.
    """

    layer: int
    round: int
    index: int

    def __str__(self):
        return f"L[{self.layer}]_{self.index}({self.round})"


class Fresh(NamedTuple):
    """Source antenna sends one of its own messages."""

    label: Label


class Forward(NamedTuple):
    """Relay re-sends an equation it holds under ``label``."""

    label: Label


class Reconstruct(NamedTuple):
    """Node builds the next layer's equation ``label`` from its knowledge and
    delayed CSI of its own outgoing hop."""

    label: Label


class Silent(NamedTuple):
    pass


SILENT = Silent()


@dataclass
class SimReport:
    """Outcome of one seeded scheme run.

    ``residuals`` holds, per destination, the worst decode error over all of
    its messages, normalized by the message amplitude.
    """

    scheme: str
    layers: int
    users: int
    rounds: int
    seed: int
    slots_used: int
    messages_delivered: int
    messages_sent: int
    residuals: list[float] = field(default_factory=list)
    redraw_count: int = 0
    violations: list[str] = field(default_factory=list)
    max_consistency_error: float = 0.0
    max_numeric_mismatch: float = 0.0
    csi_queries: tuple = field(default=(), repr=False)

    @property
    def measured_dof(self) -> Fraction:
        return Fraction(self.messages_delivered, self.slots_used)

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)

    @property
    def decoded(self) -> bool:
        return self.messages_delivered == self.messages_sent and not self.violations


def run_with_redraws(attempt: Callable[[int], SimReport], max_redraws: int = 20) -> SimReport:
    """Call ``attempt(subseed)`` until it does not raise :class:`Singular`.

    Degenerate draws only occur with probability zero under continuous
    fading, but finite precision can still produce ill-conditioned decode
    systems. Each one is logged and counted in ``redraw_count``.
    """
    last = None
    for subseed in range(max_redraws + 1):
        try:
            report = attempt(subseed)
        except Singular as exc:
            log.warning("degenerate draw at subseed %d: %s; redrawing", subseed, exc)
            last = exc
            continue
        report.redraw_count = subseed
        return report
    raise Singular(f"gave up after {max_redraws} redraws: {last}")
