"""
Closed-form sum-DoF values and empirical DoF measurement.

All bounds are exact :class:`~fractions.Fraction` values; floats appear only
in :attr:`DofValue.approx` for display.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

from .schemes import SCHEMES, run_scheme


@dataclass(frozen=True)
class DofValue:
    """An exact sum-DoF value with a float view."""

    exact: Fraction
    approx: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "exact", Fraction(self.exact))
        object.__setattr__(self, "approx", self.exact.numerator / self.exact.denominator)

    def __str__(self):
        return f"{self.exact} ({self.approx:.6f})"

    def __lt__(self, other):
        return self.exact < _exact(other)

    def __le__(self, other):
        return self.exact <= _exact(other)

    def __gt__(self, other):
        return self.exact > _exact(other)

    def __ge__(self, other):
        return self.exact >= _exact(other)


def _exact(v) -> Fraction:
    return v.exact if isinstance(v, DofValue) else Fraction(v)


def harmonic_bound(users: int) -> DofValue:
    """``K / (1 + 1/2 + ... + 1/K)``: optimal DoF of the K-user broadcast
    channel with delayed CSIT, and the network's upper bound."""
    if users < 1:
        raise ValueError(f"users must be >= 1, got {users}")
    h = sum(Fraction(1, k) for k in range(1, users + 1))
    return DofValue(Fraction(users) / h)


def cascade_dof(users: int) -> DofValue:
    """Hop-by-hop baseline: the K x K X-channel value ``4/3 - 2/(3(3K-1))``."""
    if users < 2:
        raise ValueError(f"users must be >= 2, got {users}")
    return DofValue(Fraction(4, 3) - Fraction(2, 3 * (3 * users - 1)))


def theorem2_bounds(users: int) -> tuple[DofValue, DofValue]:
    """Lower and upper sum-DoF bounds under one-hop-range feedback."""
    if users < 2:
        raise ValueError(f"users must be >= 2, got {users}")
    if users == 2:
        v = DofValue(Fraction(4, 3))
        return v, v
    return DofValue(Fraction(3, 2)), harmonic_bound(users)


def measured_dof(report) -> DofValue:
    """Delivered messages per slot of a finished run.

    Accepts a :class:`~relaydof.schemes.SimReport` or a
    ``(messages, slots)`` pair.
    """
    if isinstance(report, tuple):
        messages, slots = report
    else:
        messages, slots = report.messages_delivered, report.slots_used
    if slots <= 0:
        raise ValueError("slots must be positive")
    return DofValue(Fraction(messages, slots))


def scheme_asymptote(scheme: str, users: int) -> DofValue:
    """DoF the scheme approaches as the number of rounds grows."""
    if scheme == "global-k2":
        return harmonic_bound(users)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    return theorem2_bounds(users)[0]


class ConvergenceRow(NamedTuple):
    rounds: int
    measured: DofValue
    asymptote: DofValue
    gap: Fraction


def convergence_table(scheme: str, layers: int, users: int, rounds, seed: int = 0,
                      **kw) -> list[ConvergenceRow]:
    """Measured DoF of ``scheme`` for each round count, against its asymptote."""
    rounds = list(rounds)
    if any(b <= a for a, b in zip(rounds, rounds[1:])):
        raise ValueError("round counts must be strictly increasing")
    target = scheme_asymptote(scheme, users)
    rows = []
    for r in rounds:
        got = measured_dof(run_scheme(scheme, layers, users, r, seed, **kw))
        rows.append(ConvergenceRow(r, got, target, target.exact - got.exact))
    return rows
