"""
Multi-round pipelined schemes for one-hop-range delayed CSIT.

Every layer runs the same round structure on whatever it received from the
layer above. With ``A`` active users (3, or 2 for the two-user scheme) a
round at layer ``n`` is:

* ``A`` forwarding slots. In slot ``s`` node ``n_k`` sends
  ``L[n]_{A(s-1)+k}``, so node ``(n+1)_k`` ends up holding
  ``L[n+1]_{A(s-1)+k} = sum_i H[n][k, i] L[n]_{A(s-1)+i}``. The source
  sends its own messages instead.
* Swap slots. Two nodes each send a next-layer equation they can build
  from what they hold plus delayed CSI of their own outgoing hop. Each of
  the two matching receivers already knows the other's equation, cancels
  it, and keeps the one addressed to it.

Layer ``n`` plays round ``l`` in slots ``P(l-1) + 3(n-1) + 1 .. +P`` where
``P`` is the round length (6 for three users, 3 for two).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

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
from .common import (
    CONSISTENCY_TOL,
    DECODE_TOL,
    SILENT,
    Forward,
    Fresh,
    Label,
    Reconstruct,
    SimReport,
    Silent,
    run_with_redraws,
)

#: Slots between the start of a round at layer n and at layer n + 1.
LAYER_OFFSET = 3

# (equation index, sending antenna) pairs for each swap slot
SWAPS_33 = (((2, 1), (4, 2)), ((3, 1), (7, 3)), ((6, 2), (8, 3)))
SWAPS_K2 = (((2, 1), (3, 2)),)


class SlotPlan(NamedTuple):
    """What one layer does in one slot."""

    round: int
    t_hat: int
    phase: str  # "forward" or "swap"
    sends: tuple


def round_length(active: int) -> int:
    return {3: 6, 2: 3}[active]


def round_slot(active: int, layer: int, rnd: int, t_hat: int) -> int:
    """Absolute slot of step ``t_hat`` of round ``rnd`` at ``layer``."""
    return round_length(active) * (rnd - 1) + LAYER_OFFSET * (layer - 1) + t_hat


def total_slots(active: int, layers: int, rounds: int) -> int:
    return round_length(active) * rounds + LAYER_OFFSET * (layers - 2)


def block_messages(rnd: int, dest: int, active: int) -> frozenset:
    return frozenset(MessageId(rnd, dest, s) for s in range(1, active + 1))


def label_dest(index: int, active: int) -> int:
    """Destination whose messages ``L[.]_index`` combines."""
    return (index - 1) // active + 1


@dataclass
class RoundSchedule:
    """Directives of one round for every transmitting layer.

    ``entries`` maps ``(slot, layer)`` to a :class:`SlotPlan` whose
    ``sends`` holds one directive per node of the layer (per antenna for
    the source).
    """

    layers: int
    users: int
    active: int
    round: int
    entries: dict = field(default_factory=dict)

    def row(self, slot: int, layer: int) -> tuple:
        return self.entries[(slot, layer)].sends

    def slots_for_layer(self, layer: int) -> list[int]:
        return sorted(s for s, n in self.entries if n == layer)


def _build_round(layers: int, rnd: int, users: int, active: int, swaps) -> RoundSchedule:
    if layers < 3:
        raise ValueError(f"one-hop schemes need at least 3 layers, got {layers}")
    if rnd < 1:
        raise ValueError(f"round must be >= 1, got {rnd}")
    sched = RoundSchedule(layers, users, active, rnd)
    for n in range(1, layers):
        for t_hat in range(1, active + 1):
            sends = [SILENT] * users
            for k in range(1, active + 1):
                idx = active * (t_hat - 1) + k
                sends[k - 1] = Fresh(Label(1, rnd, idx)) if n == 1 else Forward(Label(n, rnd, idx))
            slot = round_slot(active, n, rnd, t_hat)
            sched.entries[(slot, n)] = SlotPlan(rnd, t_hat, "forward", tuple(sends))
        for j, pair in enumerate(swaps):
            t_hat = active + 1 + j
            sends = [SILENT] * users
            for idx, antenna in pair:
                sends[antenna - 1] = Reconstruct(Label(n + 1, rnd, idx))
            slot = round_slot(active, n, rnd, t_hat)
            sched.entries[(slot, n)] = SlotPlan(rnd, t_hat, "swap", tuple(sends))
    return sched


def build_round_schedule_33(layers: int, rnd: int, users: int = 3) -> RoundSchedule:
    """Round ``rnd`` of the three-user scheme on an N-layer network.

    With ``users > 3`` the extra nodes are silent throughout.
    """
    if users < 3:
        raise ValueError("the three-user schedule needs users >= 3")
    return _build_round(layers, rnd, users, 3, SWAPS_33)


def build_round_schedule_k2(layers: int, rnd: int) -> RoundSchedule:
    """Round ``rnd`` of the two-user scheme."""
    return _build_round(layers, rnd, 2, 2, SWAPS_K2)


def merge_schedules(rounds) -> dict[int, dict[int, SlotPlan]]:
    """Overlay per-round schedules into ``slot -> layer -> SlotPlan``."""
    merged: dict[int, dict[int, SlotPlan]] = {}
    for sched in rounds:
        for (slot, layer), plan in sched.entries.items():
            per_slot = merged.setdefault(slot, {})
            if layer in per_slot:
                raise ValueError(f"layer {layer} scheduled twice in slot {slot}")
            per_slot[layer] = plan
    return merged


class OneHopSimulation:
    """One seeded run of a pipelined one-hop scheme.

    Parameters
    ----------
    config : NetworkConfig
    rounds : int
    seed, subseed : int
    active : int
        3 for the three-user scheme (also used embedded for K > 3), 2 for
        the two-user scheme.
    feedback : FeedbackMode
    schedule : dict, optional
        ``slot -> layer -> SlotPlan``; defaults to the merged per-round
        schedules. Tests pass mutated schedules here.
    """

    def __init__(self, config: NetworkConfig, rounds: int, seed: int, subseed: int = 0,
                 active: int = 3, feedback: FeedbackMode = FeedbackMode.ONE_HOP_RANGE,
                 schedule=None, scheme: str = "onehop", tol: float = SPAN_TOL,
                 decode_tol: float = DECODE_TOL):
        if rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {rounds}")
        if config.layers < 3:
            raise ValueError("one-hop schemes need at least 3 layers")
        if config.users < active:
            raise ValueError(f"{active}-user scheme needs users >= {active}")
        self.config = config
        self.rounds = rounds
        self.seed = seed
        self.subseed = subseed
        self.active = active
        self.scheme = scheme
        self.tol = tol
        self.decode_tol = decode_tol

        self.channels = ChannelRealization(config, seed, subseed)
        self.ledger = CsitLedger(feedback)
        self.csi = ChannelAccessor(self.channels, self.ledger)
        self.messages = [MessageId(l, d, s) for l in range(1, rounds + 1)
                         for d in range(1, active + 1) for s in range(1, active + 1)]
        self.truth = draw_messages(config, self.messages, seed, subseed)

        if schedule is None:
            builder = build_round_schedule_k2 if active == 2 else (
                lambda N, l: build_round_schedule_33(N, l, config.users))
            schedule = merge_schedules(builder(config.layers, l) for l in range(1, rounds + 1))
        self.schedule = schedule
        self.slots = total_slots(active, config.layers, rounds)

        self.source = NodeState(1, 0, tol)
        self.nodes = {(n, k): NodeState(n, k, tol)
                      for n in range(2, config.layers + 1) for k in range(1, active + 1)}
        self.max_consistency_error = 0.0
        self.max_numeric_mismatch = 0.0
        self.current_slot = 0

    def node(self, layer: int, k: int) -> NodeState:
        return self.source if layer == 1 else self.nodes[(layer, k)]

    def _learn(self, node: NodeState, eq: Equation, label=None):
        if not self.config.noise_enabled:
            self.max_consistency_error = max(self.max_consistency_error, eq.residual(self.truth))
        node.learn(eq, label)

    def _release_round(self, rnd: int):
        # the source owns every message; they are entered into its basis
        # round by round to keep it small
        A = self.active
        for d in range(1, A + 1):
            for s in range(1, A + 1):
                m = MessageId(rnd, d, s)
                self._learn(self.source, Equation.message(m, self.truth[m]), Label(1, rnd, A * (d - 1) + s))

    # transmit side
    def _reconstruct(self, node: NodeState, label: Label) -> Equation:
        A = self.active
        layer = node.layer
        block = label_dest(label.index, A)
        row = (label.index - 1) % A
        t_src = round_slot(A, layer, label.round, block)
        H = self.csi.matrix(layer, layer, t_src)
        parts = []
        for i in range(1, A + 1):
            have = node.labels.get(Label(layer, label.round, A * (block - 1) + i))
            if have is None:
                raise FormabilityViolation(
                    f"node {node.name} lacks {Label(layer, label.round, A * (block - 1) + i)} "
                    f"needed for {label}", slot=self.current_slot, layer=layer, node=node.index)
            parts.append((H[row, i - 1], have))
        return Equation.combine(parts)

    def _build(self, layer: int, k: int, directive) -> Equation | None:
        if isinstance(directive, Silent):
            return None
        node = self.node(layer, k)
        with self.csi.recording() as used:
            if isinstance(directive, Reconstruct):
                eq = self._reconstruct(node, directive.label)
            else:
                if isinstance(directive, Fresh) and layer != 1:
                    raise FormabilityViolation("only the source sends fresh messages",
                                               slot=self.current_slot, layer=layer, node=k)
                eq = node.labels.get(directive.label)
                if eq is None:
                    raise FormabilityViolation(
                        f"node {node.name} does not hold {directive.label}",
                        slot=self.current_slot, layer=layer, node=k)
        if not check_formable(node, eq.coeffs, self.ledger, self.tol, used):
            raise FormabilityViolation(
                f"node {node.name} cannot form its slot-{self.current_slot} plan",
                slot=self.current_slot, layer=layer, node=k)
        return eq

    # receive side
    def _receive(self, layer: int, plan: SlotPlan, received: list[Equation], slot: int):
        A = self.active
        for k in range(1, A + 1):
            node = self.nodes[(layer, k)]
            eq = received[k - 1]
            if plan.phase == "forward":
                self._learn(node, eq, Label(layer, plan.round, A * (plan.t_hat - 1) + k))
                continue
            directive = plan.sends[k - 1]
            if isinstance(directive, Reconstruct):
                want = directive.label
                targets = block_messages(want.round, label_dest(want.index, A), A)
                known = node.equations_touching(eq.coeffs.support - targets)
                cleaned = eliminate_known(eq, known, targets, self.tol)
                gain = self.csi.matrix(layer, layer - 1, slot)[k - 1, k - 1]
                self._learn(node, cleaned.scale(1.0 / gain), want)
            self._learn(node, eq)

    def step(self, slot: int):
        self.current_slot = slot
        self.ledger.current_slot = slot
        plans = self.schedule.get(slot, {})
        for layer, plan in plans.items():
            if layer == 1 and plan.t_hat == 1:
                self._release_round(plan.round)

        tx = {layer: [self._build(layer, k, d) for k, d in enumerate(plan.sends, 1)]
              for layer, plan in sorted(plans.items())}
        H_t = {layer: self.channels.matrix(layer, slot) for layer in tx}
        noise = None
        if self.config.noise_enabled:
            noise = {layer + 1: draw_noise(self.config, layer + 1, slot, self.seed, self.subseed)
                     for layer in tx}
        received = propagate_equation_slot(tx, H_t, noise=noise)

        x = {layer: np.array([0j if e is None else e.value for e in eqs]) for layer, eqs in tx.items()}
        y = propagate_slot(x, H_t, self.config.noise_enabled, noise)
        for layer, eqs in received.items():
            diff = max(abs(e.value - v) for e, v in zip(eqs, y[layer]))
            self.max_numeric_mismatch = max(self.max_numeric_mismatch, float(diff))

        for layer, plan in sorted(plans.items()):
            self._receive(layer + 1, plan, received[layer + 1], slot)

    def decode(self) -> tuple[int, list[float], list[str]]:
        A = self.active
        N = self.config.layers
        amp = self.config.message_amplitude
        delivered = 0
        residuals = []
        violations = []
        for d in range(1, A + 1):
            node = self.nodes[(N, d)]
            worst = 0.0
            for l in range(1, self.rounds + 1):
                labels = [Label(N, l, A * (d - 1) + s) for s in range(1, A + 1)]
                eqs = [node.labels.get(lb) for lb in labels]
                if any(e is None for e in eqs):
                    violations.append(f"destination {node.name} missing equations for round {l}")
                    worst = float("inf")
                    continue
                unknowns = sorted(block_messages(l, d, A))
                sol = solve_messages(eqs, unknowns, self.tol)
                for m in unknowns:
                    err = abs(sol[m] - self.truth[m]) / amp
                    worst = max(worst, err)
                    delivered += err < self.decode_tol
            residuals.append(worst)
        return delivered, residuals, violations

    def run(self, observer: Callable | None = None) -> SimReport:
        for slot in range(1, self.slots + 1):
            self.step(slot)
            if observer is not None:
                observer(self, slot)
        delivered, residuals, violations = self.decode()
        if self.max_consistency_error > CONSISTENCY_TOL:
            violations.append(f"equation values drifted by {self.max_consistency_error:.3g}")
        return SimReport(
            scheme=self.scheme, layers=self.config.layers, users=self.config.users,
            rounds=self.rounds, seed=self.seed, slots_used=self.slots,
            messages_delivered=delivered, messages_sent=len(self.messages),
            residuals=residuals, violations=violations,
            max_consistency_error=self.max_consistency_error,
            max_numeric_mismatch=self.max_numeric_mismatch,
            csi_queries=tuple(self.csi.log))


def _run(scheme, layers, users, active, rounds, seed, *, noise=False, power=1e6,
         feedback=FeedbackMode.ONE_HOP_RANGE, observer=None, mutate=None,
         decode_tol=DECODE_TOL, max_redraws=20) -> SimReport:
    config = NetworkConfig(layers, users, power, noise)

    def attempt(subseed):
        sim = OneHopSimulation(config, rounds, seed, subseed, active=active, feedback=feedback,
                               scheme=scheme, decode_tol=decode_tol)
        if mutate is not None:
            sim.schedule = mutate(sim.schedule)
        return sim.run(observer)

    return run_with_redraws(attempt, max_redraws)


def run_one_hop_33(layers: int, rounds: int, seed: int, **kw) -> SimReport:
    """Three-user scheme: ``9 l`` messages in ``6 l + 3(N - 2)`` slots."""
    return _run("onehop-33", layers, 3, 3, rounds, seed, **kw)


def run_one_hop_k2(layers: int, rounds: int, seed: int, **kw) -> SimReport:
    """Two-user scheme: ``4 l`` messages in ``3 l + 3(N - 2)`` slots."""
    return _run("onehop-k2", layers, 2, 2, rounds, seed, **kw)


def run_one_hop_kgt3(layers: int, users: int, rounds: int, seed: int, **kw) -> SimReport:
    """Three-user scheme embedded in a K > 3 network.

    Antennas and nodes 1..3 of every layer run the three-user scheme; the
    rest stay silent and only destinations 1..3 are served.
    """
    if users <= 3:
        raise ValueError(f"onehop-kgt3 needs users > 3, got {users}")
    return _run("onehop-kgt3", layers, users, 3, rounds, seed, **kw)
