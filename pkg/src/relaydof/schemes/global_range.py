"""
Amplify-and-forward reduction for global-range delayed CSIT.

Every relay scales what it hears by a gain that meets its power constraint
with equality and re-sends it in the same slot. Seen from the source the
whole network then collapses to one K-user broadcast channel with matrix

    Ht(t) = H[N-1](t) G[N-1](t) ... H[2](t) G[2](t) H[1](t)

and any delayed-CSIT broadcast code can run on top of it, provided the
source can rebuild ``Ht`` of past slots. That needs CSI of every hop, so
the scheme only works under global-range feedback.

The broadcast code is pluggable (:class:`InnerCode`); the two-user code
ships as :class:`TwoUserCode`.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ..eqspace import SPAN_TOL, Equation, MessageId, eliminate_known, solve_messages
from ..errors import FormabilityViolation
from ..network import (
    ChannelAccessor,
    ChannelRealization,
    CsitLedger,
    FeedbackMode,
    NetworkConfig,
    NodeState,
    check_formable,
    draw_messages,
    draw_noise,
    propagate_equation_slot,
    propagate_slot,
)
from .common import CONSISTENCY_TOL, DECODE_TOL, Label, SimReport, run_with_redraws


@dataclass(frozen=True)
class AfGains:
    """Amplification coefficients of one relay layer in one slot."""

    g: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.g)

    def constraint_lhs(self, row_power) -> np.ndarray:
        """``|g_i|^2 (sum_k |h_ik|^2 + 1/K)`` per relay; must be <= 1."""
        row_power = np.asarray(row_power, dtype=float)
        return np.abs(self.g) ** 2 * (row_power + 1.0 / len(self.g))


def af_gains(row_power, users: int) -> AfGains:
    """Largest real gains allowed by the relay power constraint.

    Parameters
    ----------
    row_power : array_like
        ``sum_k |h_ik|^2`` of each relay's incoming channel row.
    users : int
        K; the constraint reserves ``1/K`` for forwarded noise.
    """
    row_power = np.asarray(row_power, dtype=float)
    if np.any(row_power < 0):
        raise ValueError("row powers must be non-negative")
    return AfGains(1.0 / np.sqrt(row_power + 1.0 / users) + 0j)


def layer_gains(H_in: np.ndarray) -> AfGains:
    """Gains of the relays fed by ``H_in``."""
    return af_gains(np.sum(np.abs(H_in) ** 2, axis=1), H_in.shape[0])


def equivalent_channel(channels, gains: Mapping[int, AfGains] | None, t: int, layers: int) -> np.ndarray:
    """End-to-end matrix seen by the destinations in slot ``t``.

    Parameters
    ----------
    channels
        Anything with a ``matrix(hop, slot)`` method.
    gains : mapping of relay layer -> AfGains, optional
        Missing layers use :func:`layer_gains` of their incoming channel.
    t : int
    layers : int
        N. With N = 2 the result is ``H[1](t)``.
    """
    if layers < 2:
        raise ValueError("layers must be >= 2")
    gains = gains or {}
    Ht = np.asarray(channels.matrix(1, t))
    for n in range(2, layers):
        H_in = np.asarray(channels.matrix(n - 1, t))
        G = gains.get(n) or layer_gains(H_in)
        Ht = np.asarray(channels.matrix(n, t)) @ (G.matrix @ Ht)
    return Ht


class _LayerView:
    # lets equivalent_channel read CSI as a given layer through the ledger
    def __init__(self, accessor: ChannelAccessor, layer: int):
        self._acc = accessor
        self._layer = layer

    def matrix(self, hop, slot):
        return self._acc.matrix(self._layer, hop, slot)


class InnerCode(abc.ABC):
    """A delayed-CSIT broadcast code run over the equivalent channel.

    Implementations describe one block: which messages it carries, what
    the source sends in each slot of the block, and how destinations
    process and finally decode what they hear.
    """

    users: int
    slots_per_block: int

    @abc.abstractmethod
    def messages(self, block: int) -> list[MessageId]:
        ...

    @abc.abstractmethod
    def transmit(self, block: int, t_hat: int, source: NodeState,
                 past_channel: Callable[[int], np.ndarray]) -> list[Equation | None]:
        """Source antenna signals for step ``t_hat``.

        ``past_channel(t_hat')`` returns the equivalent channel of an
        earlier step of the same block, read through the CSIT ledger.
        """

    @abc.abstractmethod
    def receive(self, block: int, t_hat: int, dest: NodeState, eq: Equation) -> None:
        ...

    @abc.abstractmethod
    def decode_sets(self, block: int, dest: NodeState) -> tuple[list, list[MessageId]]:
        """Labels and unknowns the destination solves for."""


class TwoUserCode(InnerCode):
    """Four messages in three slots for two users.

    Slot 1 sends both symbols of destination 1, slot 2 those of
    destination 2. Each destination overhears one equation the other
    needs; slot 3 sends both overheard equations at once and each
    destination cancels the one it already has.
    """

    users = 2
    slots_per_block = 3

    def messages(self, block):
        return [MessageId(block, d, s) for d in (1, 2) for s in (1, 2)]

    def transmit(self, block, t_hat, source, past_channel):
        if t_hat in (1, 2):
            return [source.labels[Label(1, block, 2 * (t_hat - 1) + s)] for s in (1, 2)]
        # what destination 2 heard in step 1 and destination 1 in step 2
        H1, H2 = past_channel(1), past_channel(2)
        own = source.labels
        L2 = Equation.combine([(H1[1, 0], own[Label(1, block, 1)]), (H1[1, 1], own[Label(1, block, 2)])])
        L3 = Equation.combine([(H2[0, 0], own[Label(1, block, 3)]), (H2[0, 1], own[Label(1, block, 4)])])
        return [L2, L3]

    def receive(self, block, t_hat, dest, eq):
        k = dest.index
        if t_hat in (1, 2):
            dest.learn(eq, Label(dest.layer, block, 2 * (t_hat - 1) + k))
            return
        targets = {MessageId(block, k, 1), MessageId(block, k, 2)}
        known = dest.equations_touching(eq.coeffs.support - targets)
        cleaned = eliminate_known(eq, known, targets)
        # destination k keeps what antenna k sent: L2 for 1, L3 for 2
        dest.learn(cleaned, Label(dest.layer, block, 1 + k))
        dest.learn(eq)

    def decode_sets(self, block, dest):
        k = dest.index
        first = 1 if k == 1 else 3
        labels = [Label(dest.layer, block, first), Label(dest.layer, block, first + 1)]
        return labels, [MessageId(block, k, 1), MessageId(block, k, 2)]


class GlobalRangeSimulation:
    """One seeded run of an inner code over the AF-equivalent channel."""

    def __init__(self, config: NetworkConfig, blocks: int, seed: int, subseed: int = 0,
                 inner: InnerCode | None = None,
                 feedback: FeedbackMode = FeedbackMode.GLOBAL_RANGE,
                 tol: float = SPAN_TOL, decode_tol: float = DECODE_TOL):
        inner = inner or TwoUserCode()
        if config.users != inner.users:
            raise ValueError(f"inner code serves {inner.users} users, network has {config.users}")
        if blocks < 1:
            raise ValueError("blocks must be >= 1")
        self.config = config
        self.blocks = blocks
        self.seed = seed
        self.subseed = subseed
        self.inner = inner
        self.tol = tol
        self.decode_tol = decode_tol
        self.channels = ChannelRealization(config, seed, subseed)
        self.ledger = CsitLedger(feedback)
        self.csi = ChannelAccessor(self.channels, self.ledger)
        self.messages = [m for b in range(1, blocks + 1) for m in inner.messages(b)]
        self.truth = draw_messages(config, self.messages, seed, subseed)
        self.slots = inner.slots_per_block * blocks
        self.source = NodeState(1, 0, tol)
        for b in range(1, blocks + 1):
            for i, m in enumerate(inner.messages(b), 1):
                self.source.learn(Equation.message(m, self.truth[m]), Label(1, b, i))
        self.dests = {k: NodeState(config.layers, k, tol) for k in range(1, config.users + 1)}
        self.max_consistency_error = 0.0
        self.max_numeric_mismatch = 0.0

    def slot_of(self, block: int, t_hat: int) -> int:
        return self.inner.slots_per_block * (block - 1) + t_hat

    def step(self, slot: int):
        S = self.inner.slots_per_block
        block, t_hat = (slot - 1) // S + 1, (slot - 1) % S + 1
        self.ledger.current_slot = slot
        N = self.config.layers
        view = _LayerView(self.csi, 1)

        def past(th):
            return equivalent_channel(view, None, self.slot_of(block, th), N)

        with self.csi.recording() as used:
            plans = self.inner.transmit(block, t_hat, self.source, past)
        for k, eq in enumerate(plans, 1):
            if eq is not None and not check_formable(self.source, eq.coeffs, self.ledger, self.tol, used):
                raise FormabilityViolation(f"source antenna {k} cannot form its plan",
                                           slot=slot, layer=1, node=k)

        # relays amplify within the slot; each uses only its own incoming CSI
        noisy = self.config.noise_enabled
        tx_eq = {1: plans}
        x = {1: np.array([0j if e is None else e.value for e in plans])}
        for n in range(2, N + 1):
            H = self.channels.matrix(n - 1, slot)
            noise = {n: draw_noise(self.config, n, slot, self.seed, self.subseed)} if noisy else None
            rx = propagate_equation_slot({n - 1: tx_eq[n - 1]}, {n - 1: H}, noise=noise)[n]
            y = propagate_slot({n - 1: x[n - 1]}, {n - 1: H}, noisy, noise)[n]
            self.max_numeric_mismatch = max(
                self.max_numeric_mismatch, max(abs(e.value - v) for e, v in zip(rx, y)))
            if n == N:
                break
            g = layer_gains(self.csi.matrix(n, n - 1, slot)).g
            tx_eq[n] = [e.scale(gi) for e, gi in zip(rx, g)]
            x[n] = g * y

        if not noisy:
            # the chain must agree with the closed-form equivalent channel
            direct = propagate_equation_slot({1: plans}, {1: equivalent_channel(self.channels, None, slot, N)})[2]
            for a, b in zip(rx, direct):
                self.max_numeric_mismatch = max(self.max_numeric_mismatch, (a.coeffs - b.coeffs).norm())
        for k, dest in self.dests.items():
            eq = rx[k - 1]
            if not noisy:
                self.max_consistency_error = max(self.max_consistency_error, eq.residual(self.truth))
            self.inner.receive(block, t_hat, dest, eq)

    def run(self, observer: Callable | None = None) -> SimReport:
        for slot in range(1, self.slots + 1):
            self.step(slot)
            if observer is not None:
                observer(self, slot)
        amp = self.config.message_amplitude
        delivered = 0
        residuals = []
        violations = []
        for k, dest in self.dests.items():
            worst = 0.0
            for b in range(1, self.blocks + 1):
                labels, unknowns = self.inner.decode_sets(b, dest)
                eqs = [dest.labels.get(lb) for lb in labels]
                if any(e is None for e in eqs):
                    violations.append(f"destination {dest.name} missing equations for block {b}")
                    worst = float("inf")
                    continue
                if not self.config.noise_enabled:
                    for e in eqs:
                        self.max_consistency_error = max(self.max_consistency_error, e.residual(self.truth))
                sol = solve_messages(eqs, unknowns, self.tol)
                for m in unknowns:
                    err = abs(sol[m] - self.truth[m]) / amp
                    worst = max(worst, err)
                    delivered += err < self.decode_tol
            residuals.append(worst)
        if self.max_consistency_error > CONSISTENCY_TOL:
            violations.append(f"equation values drifted by {self.max_consistency_error:.3g}")
        return SimReport(
            scheme="global-k2" if self.config.users == 2 else "global",
            layers=self.config.layers, users=self.config.users, rounds=self.blocks,
            seed=self.seed, slots_used=self.slots, messages_delivered=delivered,
            messages_sent=len(self.messages), residuals=residuals, violations=violations,
            max_consistency_error=self.max_consistency_error,
            max_numeric_mismatch=self.max_numeric_mismatch, csi_queries=tuple(self.csi.log))


def run_global_range(layers: int, blocks: int, seed: int, inner: InnerCode, *, noise=False,
                     power=1e6, feedback=FeedbackMode.GLOBAL_RANGE, observer=None,
                     decode_tol=DECODE_TOL, max_redraws=20) -> SimReport:
    config = NetworkConfig(layers, inner.users, power, noise)

    def attempt(subseed):
        sim = GlobalRangeSimulation(config, blocks, seed, subseed, inner=inner,
                                    feedback=feedback, decode_tol=decode_tol)
        return sim.run(observer)

    return run_with_redraws(attempt, max_redraws)


def run_global_range_k2(layers: int, blocks: int, seed: int, **kw) -> SimReport:
    """Two-user code over the AF-equivalent channel: 4 messages per 3 slots."""
    return run_global_range(layers, blocks, seed, TwoUserCode(), **kw)
