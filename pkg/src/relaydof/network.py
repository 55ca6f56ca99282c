"""
The (N, K) relay-aided MIMO broadcast network.

Layer 1 is the K-antenna source, layers 2..N-1 hold K single-antenna
full-duplex relays each, and layer N holds the K destinations. Hop ``n``
connects layer ``n`` to layer ``n + 1`` through a K x K block-fading matrix
``H[n](t)`` whose entry ``(i, k)`` is the gain from node ``n_k`` to node
``(n+1)_i``.

Who may look at which channel matrix is decided by :func:`csit_visible`.
Scheme code never touches a :class:`ChannelRealization` directly; it goes
through a :class:`ChannelAccessor`, which checks every request against the
ledger and keeps a log of what was asked.
"""

from __future__ import annotations

import enum
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .eqspace import SPAN_TOL, Basis, CoeffVec, Equation, MessageId, in_span
from .errors import CsitAccessError

_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class NetworkConfig:
    """Size and power settings of an (N, K) network.

    Parameters
    ----------
    layers : int
        Number of node layers N, source and destinations included. N = 2
        is the plain single-hop broadcast channel.
    users : int
        Antennas at the source and nodes per layer, K.
    power : float
        Per-layer power constraint P. Only used to scale messages and
        noise when ``noise_enabled`` is set.
    noise_enabled : bool
        Add unit-variance complex Gaussian noise at every receiver.
    """

    layers: int
    users: int
    power: float = 1e6
    noise_enabled: bool = False

    def __post_init__(self):
        if self.layers < 2:
            raise ValueError(f"layers must be >= 2, got {self.layers}")
        if self.users < 2:
            raise ValueError(f"users must be >= 2, got {self.users}")
        if not self.power > 0:
            raise ValueError(f"power must be positive, got {self.power}")

    @property
    def hops(self) -> int:
        return self.layers - 1

    @property
    def message_amplitude(self) -> float:
        """RMS amplitude of a message symbol, ``sqrt(P/K)`` in noise mode."""
        return float(np.sqrt(self.power / self.users)) if self.noise_enabled else 1.0


def _draw_matrix(seed: int, subseed: int, users: int, hop: int, slot: int) -> np.ndarray:
    rng = np.random.default_rng([seed, subseed, hop, slot])
    re = rng.standard_normal((users, users))
    im = rng.standard_normal((users, users))
    return (re + 1j * im) * _SQRT_HALF


class ChannelRealization:
    """Block-fading channel tensor ``H[n](t)``.

    Entries are i.i.d. CN(0, 1). Each matrix is a pure function of
    ``(seed, subseed, hop, slot)``, so matrices outside the pre-drawn range
    are generated on demand without disturbing the others. ``subseed`` is
    bumped when a degenerate draw forces a rerun.
    """

    def __init__(self, config: NetworkConfig, seed: int, subseed: int = 0):
        self.config = config
        self.seed = int(seed)
        self.subseed = int(subseed)
        self.matrices: dict[tuple[int, int], np.ndarray] = {}

    def matrix(self, hop: int, slot: int) -> np.ndarray:
        if not 1 <= hop <= self.config.hops:
            raise IndexError(f"hop {hop} outside 1..{self.config.hops}")
        if slot < 1:
            raise IndexError(f"slot must be >= 1, got {slot}")
        key = (hop, slot)
        H = self.matrices.get(key)
        if H is None:
            H = _draw_matrix(self.seed, self.subseed, self.config.users, hop, slot)
            H.setflags(write=False)
            self.matrices[key] = H
        return H

    def slot_matrices(self, slot: int) -> dict[int, np.ndarray]:
        return {n: self.matrix(n, slot) for n in range(1, self.config.hops + 1)}


def draw_channels(config: NetworkConfig, seed: int, slots: int, subseed: int = 0) -> ChannelRealization:
    """Draw ``H[n](t)`` for every hop and ``t = 1..slots``."""
    if slots < 1:
        raise ValueError(f"slots must be >= 1, got {slots}")
    realization = ChannelRealization(config, seed, subseed)
    for t in range(1, slots + 1):
        realization.slot_matrices(t)
    return realization


def draw_messages(config: NetworkConfig, ids: Sequence[MessageId], seed: int,
                  subseed: int = 0) -> dict[MessageId, complex]:
    """Ground-truth message values, CN(0, 1) scaled by the message amplitude."""
    rng = np.random.default_rng([seed, subseed, 0, 0])
    ids = sorted(ids)
    vals = (rng.standard_normal(len(ids)) + 1j * rng.standard_normal(len(ids))) * _SQRT_HALF
    vals *= config.message_amplitude
    return {m: complex(v) for m, v in zip(ids, vals)}


def draw_noise(config: NetworkConfig, layer: int, slot: int, seed: int, subseed: int = 0) -> np.ndarray:
    """Receiver noise at ``layer`` during ``slot``, CN(0, 1) per node."""
    rng = np.random.default_rng([seed, subseed, layer, slot, 1])
    K = config.users
    return (rng.standard_normal(K) + 1j * rng.standard_normal(K)) * _SQRT_HALF


def propagate_slot(x: Mapping[int, np.ndarray], H_t: Mapping[int, np.ndarray],
                   noise_enabled: bool = False, noise: Mapping[int, np.ndarray] | None = None,
                   rng: np.random.Generator | None = None) -> dict[int, np.ndarray]:
    """Numeric input-output relation of one slot.

    ``x`` maps a transmitting layer to its K transmit values (silent
    antennas hold exact zeros). The result maps each receiving layer
    ``n + 1`` to ``H[n] x[n]`` plus noise. All hops act simultaneously, so
    nothing a layer receives in this slot feeds into what it sends.

    Noise is taken from ``noise`` when given, else drawn from ``rng``.
    """
    out = {}
    for layer, xv in x.items():
        y = np.asarray(H_t[layer]) @ np.asarray(xv, dtype=complex)
        if noise_enabled:
            if noise is not None:
                y = y + noise[layer + 1]
            else:
                rng = rng if rng is not None else np.random.default_rng()
                K = len(y)
                y = y + (rng.standard_normal(K) + 1j * rng.standard_normal(K)) * _SQRT_HALF
        out[layer + 1] = y
    return out


def propagate_equation_slot(plans: Mapping[int, Sequence[Equation | None]],
                            H_t: Mapping[int, np.ndarray],
                            ground_truth: Mapping[MessageId, complex] | None = None,
                            noise: Mapping[int, np.ndarray] | None = None,
                            tol: float = 1e-10) -> dict[int, list[Equation]]:
    """Symbolic twin of :func:`propagate_slot`.

    Node ``(n+1)_k`` receives ``sum_i H[n][k, i] * plan_i`` where the plans
    are the equations transmitted by layer ``n`` (None for silent nodes).
    Coefficients travel with the value. When ``ground_truth`` is supplied
    and there is no noise, each received value is checked against the
    substituted coefficients.
    """
    out = {}
    for layer, eqs in plans.items():
        H = np.asarray(H_t[layer])
        active = [(i, eq) for i, eq in enumerate(eqs) if eq is not None]
        received = []
        for k in range(H.shape[0]):
            eq = Equation.combine((H[k, i], e) for i, e in active)
            if noise is not None:
                eq = Equation(eq.coeffs, eq.value + complex(noise[layer + 1][k]))
            received.append(eq)
        if ground_truth is not None and noise is None:
            for k, eq in enumerate(received):
                err = eq.residual(ground_truth)
                if err > tol:
                    raise ValueError(f"node {layer + 1}_{k + 1}: value inconsistent by {err:.3g}")
        out[layer + 1] = received
    return out


class FeedbackMode(enum.Enum):
    GLOBAL_RANGE = "global"
    ONE_HOP_RANGE = "onehop"


@dataclass
class CsitLedger:
    """Feedback scope plus the slot currently being played."""

    mode: FeedbackMode
    current_slot: int = 1


def csit_visible(ledger: CsitLedger, querying_layer: int, hop: int, slot: int) -> bool:
    """Whether layer ``querying_layer`` may know ``H[hop](slot)`` now.

    Receivers always know their incoming channel in the current slot
    (``querying_layer == hop + 1``), and that knowledge is passed
    downstream with a delay (``querying_layer > hop + 1``). Transmit-side
    knowledge is delayed by one slot: under global-range feedback only the
    source gets it, for every hop; under one-hop-range feedback only the
    layer feeding the hop gets it.
    """
    if hop < 1:
        raise ValueError(f"hop must be >= 1, got {hop}")
    now = ledger.current_slot
    if querying_layer == hop + 1:
        return slot <= now
    if querying_layer > hop + 1:
        return slot < now
    if ledger.mode is FeedbackMode.GLOBAL_RANGE:
        return querying_layer == 1 and slot < now
    return querying_layer == hop and slot < now


class CsiQuery(NamedTuple):
    layer: int
    hop: int
    slot: int
    current_slot: int


class ChannelAccessor:
    """Ledger-checked view of a :class:`ChannelRealization`.

    Every request is logged. Requests the ledger forbids raise
    :class:`CsitAccessError`.
    """

    def __init__(self, channels: ChannelRealization, ledger: CsitLedger):
        self._channels = channels
        self.ledger = ledger
        self.log: list[CsiQuery] = []
        self._recording: list[list[CsiQuery]] = []

    def matrix(self, layer: int, hop: int, slot: int) -> np.ndarray:
        q = CsiQuery(layer, hop, slot, self.ledger.current_slot)
        if not csit_visible(self.ledger, layer, hop, slot):
            raise CsitAccessError(
                f"layer {layer} may not see H[{hop}]({slot}) at slot {q.current_slot} "
                f"under {self.ledger.mode.value} feedback",
                slot=q.current_slot, layer=layer, hop=hop, queried_slot=slot)
        self.log.append(q)
        for rec in self._recording:
            rec.append(q)
        return self._channels.matrix(hop, slot)

    def row(self, layer: int, hop: int, slot: int, i: int) -> np.ndarray:
        """Row ``i`` (1-based) of ``H[hop](slot)``."""
        return self.matrix(layer, hop, slot)[i - 1]

    @contextmanager
    def recording(self):
        """Collect the queries issued inside the block."""
        rec: list[CsiQuery] = []
        self._recording.append(rec)
        try:
            yield rec
        finally:
            self._recording.remove(rec)


@dataclass
class NodeState:
    """What one node knows.

    ``known_equations`` lists every equation the node received, recovered
    or (for the source) owns. ``basis`` spans them and can evaluate any
    vector in their span. ``labels`` names equations the scheme tracks,
    keyed by whatever label type the scheme uses.
    """

    layer: int
    index: int
    tol: float = SPAN_TOL
    known_equations: list[Equation] = field(default_factory=list)
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.basis = Basis(self.tol)
        self._by_msg: dict[MessageId, list[int]] = {}

    @property
    def name(self) -> str:
        return f"{self.layer}_{self.index}"

    def learn(self, eq: Equation, label=None) -> None:
        for m in eq.coeffs.support:
            self._by_msg.setdefault(m, []).append(len(self.known_equations))
        self.known_equations.append(eq)
        self.basis.add(eq)
        if label is not None:
            self.labels[label] = eq

    def equations_touching(self, msgs) -> list[Equation]:
        """Known equations whose support meets ``msgs``, in learning order."""
        idx = sorted(set().union(*(self._by_msg.get(m, ()) for m in msgs)))
        return [self.known_equations[i] for i in idx]

    def knows(self, v: CoeffVec) -> bool:
        return self.basis.contains(v)

    def express(self, v: CoeffVec) -> Equation | None:
        return self.basis.express(v)


def check_formable(node: NodeState, plan: CoeffVec, ledger: CsitLedger,
                   tol: float = SPAN_TOL, csi_used: Sequence[CsiQuery] = ()) -> bool:
    """Whether ``node`` may transmit ``plan``.

    The plan must lie in the span of the node's known equations, and every
    channel query used to build it must be visible under ``ledger``.
    """
    for q in csi_used:
        if q.layer != node.layer:
            return False
        at = CsitLedger(ledger.mode, q.current_slot)
        if not csit_visible(at, q.layer, q.hop, q.slot):
            return False
    return in_span(plan, node.basis, tol)
