"""
Runtime invariant suite for scheme runs.

The checks here do not trust the simulator's own bookkeeping: reference
equations are rebuilt from raw channel matrices as dense products, and node
knowledge is tested with span membership against those references.
"""

from __future__ import annotations

from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .eqspace import CoeffVec, MessageId, in_span
from .errors import CsitAccessError, FormabilityViolation
from .network import CsitLedger, FeedbackMode, NetworkConfig, csit_visible
from .schemes import SCHEMES, run_scheme
from .schemes.common import CONSISTENCY_TOL, DECODE_TOL, Label, Reconstruct, SimReport
from .schemes.onehop import SWAPS_33, SWAPS_K2, SlotPlan, round_length, round_slot

ONE_HOP = ("onehop-33", "onehop-k2", "onehop-kgt3")


def active_users(scheme: str) -> int:
    return 2 if scheme in ("onehop-k2", "global-k2") else 3


def expected_dof(scheme: str, layers: int, rounds: int) -> Fraction:
    """Exact messages-per-slot count the schedule must produce."""
    if scheme == "global-k2":
        return Fraction(4, 3)
    if scheme == "onehop-k2":
        return Fraction(4 * rounds, 3 * rounds + 3 * (layers - 2))
    return Fraction(9 * rounds, 6 * rounds + 3 * (layers - 2))


def reference_block(channels, active: int, layer: int, rnd: int, dest: int) -> np.ndarray:
    """Dense coefficients of ``L[layer]_{A(dest-1)+1..A}(rnd)`` over
    destination ``dest``'s messages of round ``rnd``.

    Block ``dest`` of every layer is the channel of that block's forwarding
    slot applied to the same block one layer up, so the result is a plain
    product of raw matrices restricted to the first ``A`` antennas.
    """
    M = np.eye(active, dtype=complex)
    for n in range(1, layer):
        H = np.asarray(channels.matrix(n, round_slot(active, n, rnd, dest)))[:active, :active]
        M = H @ M
    return M


def reference_label(channels, active: int, label: Label) -> CoeffVec:
    dest = (label.index - 1) // active + 1
    row = reference_block(channels, active, label.layer, label.round, dest)[(label.index - 1) % active]
    return CoeffVec({MessageId(label.round, dest, s): row[s - 1] for s in range(1, active + 1)})


class KnowledgeObserver:
    """Per-slot checker for one-hop runs.

    After each swap slot both receiving nodes must span both swapped
    equations. After the last swap of a round every node ``n_k`` must span
    its own block ``L[n]_{A(k-1)+1..A}``. Every labeled equation must match
    its dense reference.
    """

    def __init__(self, tol: float = 1e-8):
        self.tol = tol
        self.sim = None
        self.knowledge = self.gamma = self.labels = 0
        self.failures: dict[str, list[str]] = {"knowledge": [], "gamma": [], "labels": []}

    def _reset(self, sim):
        self.__init__(self.tol)
        self.sim = sim

    def __call__(self, sim, slot: int):
        if sim is not self.sim:
            self._reset(sim)
        A = sim.active
        P = round_length(A)
        swaps = SWAPS_K2 if A == 2 else SWAPS_33
        N = sim.config.layers
        for n in range(1, N):
            # which (round, step) of layer n fell on this slot
            base = slot - 3 * (n - 1) - 1
            if base < 0:
                continue
            rnd, t_hat = base // P + 1, base % P + 1
            if rnd > sim.rounds or t_hat <= A:
                continue
            m = n + 1
            pair = swaps[t_hat - A - 1]
            refs = [reference_label(sim.channels, A, Label(m, rnd, idx)) for idx, _ in pair]
            for _, antenna in pair:
                node = sim.node(m, antenna)
                self.gamma += 1
                for (idx, _), ref in zip(pair, refs):
                    if not in_span(ref, node.basis, self.tol):
                        self.failures["gamma"].append(
                            f"slot {slot}: node {node.name} lacks {Label(m, rnd, idx)}")
            if t_hat == P:
                for k in range(1, A + 1):
                    node = sim.node(m, k)
                    self.knowledge += 1
                    for s in range(1, A + 1):
                        lb = Label(m, rnd, A * (k - 1) + s)
                        if not in_span(reference_label(sim.channels, A, lb), node.basis, self.tol):
                            self.failures["knowledge"].append(f"slot {slot}: node {node.name} lacks {lb}")
                for k in range(1, A + 1):
                    for lb, eq in sim.node(m, k).labels.items():
                        if lb.round != rnd:
                            continue
                        self.labels += 1
                        ref = reference_label(sim.channels, A, lb)
                        if not eq.coeffs.approx_eq(ref, self.tol * max(1.0, ref.norm())):
                            self.failures["labels"].append(f"node {m}_{k} holds a wrong {lb}")


def scope_violations(queries, mode: FeedbackMode, one_hop: bool) -> list[str]:
    """Queries outside the feedback scope or, for one-hop schemes, issued by
    a layer other than the two ends of the queried hop."""
    bad = []
    for q in queries:
        if not csit_visible(CsitLedger(mode, q.current_slot), q.layer, q.hop, q.slot):
            bad.append(f"layer {q.layer} read H[{q.hop}]({q.slot}) at slot {q.current_slot}")
        elif one_hop and q.layer not in (q.hop, q.hop + 1):
            bad.append(f"layer {q.layer} read H[{q.hop}]({q.slot}); not an end of hop {q.hop}")
    return bad


def inject_fault(active: int):
    """Schedule mutation: in its first swap slot of round 1, node ``2_1``
    tries to build ``L[3]_{A+2}``, whose block it does not fully hold."""

    def mutate(schedule):
        slot = round_slot(active, 2, 1, active + 1)
        plan = schedule[slot][2]
        sends = list(plan.sends)
        sends[0] = Reconstruct(Label(3, 1, active + 2))
        out = {s: dict(v) for s, v in schedule.items()}
        out[slot][2] = SlotPlan(plan.round, plan.t_hat, plan.phase, tuple(sends))
        return out

    return mutate


class InvariantResult(NamedTuple):
    name: str
    passed: bool | None  # None: not applicable or not reached
    detail: str = ""

    @property
    def status(self) -> str:
        return {True: "PASS", False: "FAIL", None: "SKIP"}[self.passed]


def _first(items, n=3):
    return "; ".join(items[:n]) + (f" (+{len(items) - n} more)" if len(items) > n else "")


def verify_scenario(scheme: str, layers: int, users: int, rounds: int, seed: int, *,
                    noise: bool = False, power: float = 1e6, feedback: FeedbackMode | None = None,
                    decode_tol: float = DECODE_TOL, fault: bool = False) -> list[InvariantResult]:
    """Run one scenario under full instrumentation and evaluate every invariant."""
    info = SCHEMES.get(scheme)
    if info is None:
        raise ValueError(f"unknown scheme {scheme!r}")
    mode = feedback or info.feedback
    one_hop = scheme in ONE_HOP
    if fault and not one_hop:
        raise ValueError("fault injection targets one-hop schedules only")
    kw = dict(noise=noise, power=power, feedback=mode, decode_tol=decode_tol)
    obs = None
    if one_hop:
        obs = KnowledgeObserver()
        kw["observer"] = obs
        if fault:
            kw["mutate"] = inject_fault(active_users(scheme))

    names = ["formability", "feedback-scope", "knowledge", "gamma-pairs", "label-fidelity",
             "symbolic-numeric", "consistency", "decode", "dof-count"]
    try:
        report: SimReport = run_scheme(scheme, layers, users, rounds, seed, **kw)
    except (FormabilityViolation, CsitAccessError) as exc:
        which = "formability" if isinstance(exc, FormabilityViolation) else "feedback-scope"
        return [InvariantResult(n, False, str(exc)) if n == which
                else InvariantResult(n, None, "run aborted") for n in names]

    res = [InvariantResult("formability", True, "every plan in span, CSI in scope")]
    bad = scope_violations(report.csi_queries, mode, one_hop)
    res.append(InvariantResult("feedback-scope", not bad,
                               _first(bad) or f"{len(report.csi_queries)} queries in scope"))
    if obs is not None:
        for name, key, count in (("knowledge", "knowledge", obs.knowledge),
                                 ("gamma-pairs", "gamma", obs.gamma),
                                 ("label-fidelity", "labels", obs.labels)):
            f = obs.failures[key]
            res.append(InvariantResult(name, not f and count > 0, _first(f) or f"{count} checks"))
    else:
        res += [InvariantResult(n, None, "one-hop schemes only")
                for n in ("knowledge", "gamma-pairs", "label-fidelity")]

    amp = NetworkConfig(layers, users, power, noise).message_amplitude
    mism = report.max_numeric_mismatch / amp
    res.append(InvariantResult("symbolic-numeric", mism <= CONSISTENCY_TOL, f"max mismatch {mism:.2e}"))
    if noise:
        res.append(InvariantResult("consistency", None, "values carry noise"))
    else:
        c = report.max_consistency_error
        res.append(InvariantResult("consistency", c <= CONSISTENCY_TOL, f"max error {c:.2e}"))
    res.append(InvariantResult(
        "decode", report.decoded and report.max_residual < decode_tol,
        f"{report.messages_delivered}/{report.messages_sent} delivered, "
        f"max residual {report.max_residual:.2e}"))
    want = expected_dof(scheme, layers, rounds)
    got = Fraction(report.messages_delivered, report.slots_used)
    res.append(InvariantResult("dof-count", got == want, f"measured {got}, expected {want}"))
    return res

