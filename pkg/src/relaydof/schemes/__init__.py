"""Executable transmission schemes and a registry keyed by scheme id."""

from typing import Callable, NamedTuple

from ..network import FeedbackMode
from .common import SILENT, Forward, Fresh, Label, Reconstruct, SimReport, Silent
from .global_range import (
    AfGains,
    GlobalRangeSimulation,
    InnerCode,
    TwoUserCode,
    af_gains,
    equivalent_channel,
    layer_gains,
    run_global_range,
    run_global_range_k2,
)
from .onehop import (
    OneHopSimulation,
    RoundSchedule,
    SlotPlan,
    build_round_schedule_33,
    build_round_schedule_k2,
    merge_schedules,
    run_one_hop_33,
    run_one_hop_k2,
    run_one_hop_kgt3,
    total_slots,
)


class SchemeInfo(NamedTuple):
    """How to run a scheme and what it requires."""

    run: Callable[..., SimReport]  # run(layers, users, rounds, seed, **kw)
    feedback: FeedbackMode
    min_layers: int
    users_ok: Callable[[int], bool]
    users_text: str


SCHEMES = {
    "global-k2": SchemeInfo(
        lambda N, K, r, s, **kw: run_global_range_k2(N, r, s, **kw),
        FeedbackMode.GLOBAL_RANGE, 2, lambda K: K == 2, "K = 2"),
    "onehop-33": SchemeInfo(
        lambda N, K, r, s, **kw: run_one_hop_33(N, r, s, **kw),
        FeedbackMode.ONE_HOP_RANGE, 3, lambda K: K == 3, "K = 3"),
    "onehop-k2": SchemeInfo(
        lambda N, K, r, s, **kw: run_one_hop_k2(N, r, s, **kw),
        FeedbackMode.ONE_HOP_RANGE, 3, lambda K: K == 2, "K = 2"),
    "onehop-kgt3": SchemeInfo(
        lambda N, K, r, s, **kw: run_one_hop_kgt3(N, K, r, s, **kw),
        FeedbackMode.ONE_HOP_RANGE, 3, lambda K: K > 3, "K > 3"),
}


def run_scheme(scheme: str, layers: int, users: int, rounds: int, seed: int, **kw) -> SimReport:
    """Run a registered scheme after checking its size requirements."""
    try:
        info = SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}") from None
    if not info.users_ok(users):
        raise ValueError(f"{scheme} needs {info.users_text}, got K = {users}")
    if layers < info.min_layers:
        raise ValueError(f"{scheme} needs at least {info.min_layers} layers, got {layers}")
    kw.setdefault("feedback", info.feedback)
    return info.run(layers, users, rounds, seed, **kw)
