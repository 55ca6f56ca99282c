"""
Linear algebra over symbolic message coefficient vectors.

Every signal in the simulator is a linear combination of source messages.
A :class:`CoeffVec` stores the combination sparsely, keyed by
:class:`MessageId`, and an :class:`Equation` pairs it with the complex value
the combination takes once the actual messages are substituted. The
functions here answer the questions every scheme keeps asking: is this
vector in the span of what a node knows, can an interference term be
cancelled, and can a destination solve for its messages.

Arithmetic is plain complex double precision. Rank and span decisions are
gated by a relative tolerance; entries whose magnitude drops below
:data:`ZERO_TOL` are discarded so that supports stay canonical.
"""

from __future__ import annotations

from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import NotEliminable, Singular

#: Entries with magnitude below this are treated as exact zeros.
ZERO_TOL = 1e-12
#: Default relative tolerance for span, elimination and solve checks.
SPAN_TOL = 1e-9
#: Decode systems whose condition number exceeds this are rejected.
COND_LIMIT = 1e8


class MessageId(NamedTuple):
    """Identity of one source message.

    Ordering is lexicographic on ``(round, dest, slot_sym)``. For three
    users, ``slot_sym`` 1, 2 and 3 are the mu, nu and omega symbols of
    destination ``dest``.
    """

    round: int
    dest: int
    slot_sym: int

    def __str__(self):
        return f"m{self.round}.{self.dest}.{self.slot_sym}"


class CoeffVec:
    """Sparse complex vector indexed by :class:`MessageId`.

    Instances are treated as immutable: every operation returns a new
    vector. Entries below :data:`ZERO_TOL` in magnitude are dropped on
    construction.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[MessageId, complex] | None = None):
        clean = {}
        if entries:
            for key, value in entries.items():
                value = complex(value)
                if abs(value) >= ZERO_TOL:
                    clean[key] = value
        self._entries = clean

    @classmethod
    def unit(cls, msg: MessageId, scale: complex = 1.0) -> "CoeffVec":
        return cls({msg: scale})

    @classmethod
    def combine(cls, terms: Iterable[tuple[complex, "CoeffVec"]]) -> "CoeffVec":
        """Return ``sum(c * v for c, v in terms)``."""
        acc: dict[MessageId, complex] = {}
        for c, vec in terms:
            if c == 0:
                continue
            for key, value in vec._entries.items():
                acc[key] = acc.get(key, 0j) + c * value
        return cls(acc)

    # container protocol
    def __getitem__(self, key: MessageId) -> complex:
        return self._entries.get(key, 0j)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(sorted(self._entries))

    def items(self):
        """Entries sorted by message id."""
        return sorted(self._entries.items())

    @property
    def support(self) -> frozenset:
        return frozenset(self._entries)

    def touches(self, keys) -> bool:
        """Whether any key of ``keys`` is in the support."""
        return not keys.isdisjoint(self._entries)

    def is_zero(self) -> bool:
        return not self._entries

    # arithmetic
    def __add__(self, other: "CoeffVec") -> "CoeffVec":
        return CoeffVec.combine([(1.0, self), (1.0, other)])

    def __sub__(self, other: "CoeffVec") -> "CoeffVec":
        return CoeffVec.combine([(1.0, self), (-1.0, other)])

    def __neg__(self) -> "CoeffVec":
        return self * -1.0

    def __mul__(self, scalar: complex) -> "CoeffVec":
        return CoeffVec({k: v * scalar for k, v in self._entries.items()})

    __rmul__ = __mul__

    def norm(self) -> float:
        if not self._entries:
            return 0.0
        return float(np.sqrt(sum(abs(v) ** 2 for v in self._entries.values())))

    def dot(self, values: Mapping[MessageId, complex]) -> complex:
        """Substitute message values; missing messages count as zero."""
        return complex(sum(c * values.get(k, 0j) for k, c in self._entries.items()))

    def restrict(self, keys) -> "CoeffVec":
        return CoeffVec({k: v for k, v in self._entries.items() if k in keys})

    def to_dense(self, order) -> np.ndarray:
        return np.array([self._entries.get(k, 0j) for k in order], dtype=complex)

    def approx_eq(self, other: "CoeffVec", tol: float = SPAN_TOL) -> bool:
        """Equality up to ``tol`` relative to the larger norm."""
        scale = max(self.norm(), other.norm(), 1.0)
        return (self - other).norm() <= tol * scale

    def __eq__(self, other):
        if not isinstance(other, CoeffVec):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self):
        return hash(frozenset(self._entries.items()))

    def __repr__(self):
        body = ", ".join(f"{k}: {v:.4g}" for k, v in self.items())
        return f"CoeffVec({{{body}}})"


class Equation(NamedTuple):
    """A coefficient vector and the value it evaluates to."""

    coeffs: CoeffVec
    value: complex

    @classmethod
    def message(cls, msg: MessageId, value: complex) -> "Equation":
        return cls(CoeffVec.unit(msg), complex(value))

    @classmethod
    def combine(cls, terms: Iterable[tuple[complex, "Equation"]]) -> "Equation":
        terms = list(terms)
        coeffs = CoeffVec.combine((c, eq.coeffs) for c, eq in terms)
        value = complex(sum(c * eq.value for c, eq in terms))
        return cls(coeffs, value)

    def scale(self, c: complex) -> "Equation":
        return Equation(self.coeffs * c, self.value * c)

    def residual(self, truth: Mapping[MessageId, complex]) -> float:
        """``|value - coeffs . truth|``."""
        return abs(self.value - self.coeffs.dot(truth))


class Basis:
    """Incrementally maintained reduced row-echelon basis.

    Each stored row has a pivot entry equal to one and zeros at every other
    row's pivot, so span membership needs a single elimination pass. The
    pivot of a new row is its largest-magnitude entry, ties broken by the
    smallest :class:`MessageId`.

    Rows are kept as :class:`Equation` objects, so a basis built from
    equations can also evaluate any vector in its span (:meth:`express`).
    Plain vectors are stored with value zero.
    """

    def __init__(self, tol: float = SPAN_TOL):
        self.tol = tol
        self._rows: dict[MessageId, Equation] = {}
        # column -> pivots of the rows with a nonzero entry there
        self._cols: dict[MessageId, set[MessageId]] = {}

    def _index(self, pivot: MessageId, row: Equation, sign: int):
        for col in row.coeffs.support:
            if sign > 0:
                self._cols.setdefault(col, set()).add(pivot)
            else:
                self._cols[col].discard(pivot)

    def __len__(self):
        return len(self._rows)

    @property
    def rows(self) -> list[CoeffVec]:
        return [self._rows[p].coeffs for p in sorted(self._rows)]

    @property
    def equations(self) -> list[Equation]:
        return [self._rows[p] for p in sorted(self._rows)]

    @property
    def pivots(self) -> list[MessageId]:
        return sorted(self._rows)

    def _reduce(self, eq: Equation) -> tuple[Equation, Equation]:
        # returns (residual, part explained by the basis)
        hits = [(v, self._rows[p]) for p, v in eq.coeffs.items() if p in self._rows]
        if not hits:
            return eq, Equation(CoeffVec(), 0j)
        explained = Equation.combine(hits)
        residual = Equation(CoeffVec.combine([(1.0, eq.coeffs), (-1.0, explained.coeffs)]),
                            eq.value - explained.value)
        return residual, explained

    def reduce(self, v: CoeffVec) -> CoeffVec:
        """Residual of ``v`` after eliminating every pivot."""
        return self._reduce(Equation(v, 0j))[0].coeffs

    def contains(self, v: CoeffVec) -> bool:
        scale = v.norm()
        if scale == 0.0:
            return True
        return self.reduce(v).norm() <= self.tol * scale

    def express(self, v: CoeffVec) -> Equation | None:
        """Evaluate ``v`` from the stored equations, or None if out of span."""
        scale = v.norm()
        if scale == 0.0:
            return Equation(CoeffVec(), 0j)
        residual, explained = self._reduce(Equation(v, 0j))
        if residual.coeffs.norm() > self.tol * scale:
            return None
        return Equation(v, explained.value)

    def add(self, item) -> bool:
        """Insert a vector or equation; return whether the rank grew."""
        eq = item if isinstance(item, Equation) else Equation(item, 0j)
        scale = eq.coeffs.norm()
        if scale == 0.0:
            return False
        r, _ = self._reduce(eq)
        if r.coeffs.norm() <= self.tol * scale:
            return False
        pivot = min(r.coeffs.support, key=lambda k: (-abs(r.coeffs[k]), k))
        r = r.scale(1.0 / r.coeffs[pivot])
        # force an exact unit pivot; the division can leave 1 +- ulp
        r = Equation(CoeffVec({**dict(r.coeffs.items()), pivot: 1.0}), r.value)
        for p in sorted(self._cols.get(pivot, ())):
            row = self._rows[p]
            self._index(p, row, -1)
            row = Equation.combine([(1.0, row), (-row.coeffs[pivot], r)])
            self._rows[p] = row
            self._index(p, row, +1)
        self._rows[pivot] = r
        self._index(pivot, r, +1)
        return True


def row_reduce(vectors: Iterable[CoeffVec], tol: float = SPAN_TOL) -> tuple[list[CoeffVec], int]:
    """Reduce ``vectors`` to a basis of their span.

    Parameters
    ----------
    vectors : iterable of CoeffVec
    tol : float
        Relative residual below which a vector is considered dependent.

    Returns
    -------
    basis : list of CoeffVec
        Rows in reduced echelon form, ordered by pivot id.
    rank : int
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = Basis(tol)
    for v in vectors:
        b.add(v)
    return b.rows, len(b)


def in_span(v: CoeffVec, basis, tol: float = SPAN_TOL) -> bool:
    """Whether ``v`` lies in the span of ``basis``.

    ``basis`` may be a :class:`Basis` or any list of vectors; a list is
    re-reduced first, which is harmless when it is already in echelon form.
    """
    if isinstance(basis, Basis):
        if basis.tol == tol:
            return basis.contains(v)
        basis = basis.rows
    b = Basis(tol)
    for row in basis:
        b.add(row)
    return b.contains(v)


def eliminate_known(received: Equation, known: Iterable[Equation], targets,
                    tol: float = SPAN_TOL) -> Equation:
    """Cancel every coefficient outside ``targets`` using ``known`` equations.

    The combination of known equations is found by least squares on the
    out-of-target coordinates; coefficients and value are updated together.

    Raises
    ------
    NotEliminable
        If the known equations cannot cancel the out-of-target part to
        within ``tol`` relative to the norm of ``received``.
    """
    targets = frozenset(targets)
    outside = sorted(received.coeffs.support - targets)
    if not outside:
        return received
    outside_set = set(outside)
    useful = [eq for eq in known if eq.coeffs.touches(outside_set)]
    if not useful:
        raise NotEliminable(f"no known equation touches {[str(m) for m in outside]}")

    # every coordinate any useful equation touches outside the targets must cancel
    cols = sorted(set().union(*(eq.coeffs.support for eq in useful)) - targets | outside_set)
    A = np.array([eq.coeffs.to_dense(cols) for eq in useful]).T
    b = received.coeffs.to_dense(cols)
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    cleaned = Equation.combine([(1.0, received)] + [(-ci, eq) for ci, eq in zip(c, useful)])
    leftover = cleaned.coeffs.support - targets
    scale = max(received.coeffs.norm(), ZERO_TOL)
    if leftover and cleaned.coeffs.restrict(leftover).norm() > tol * scale:
        raise NotEliminable(
            f"residual on {[str(m) for m in sorted(leftover)]} could not be cancelled")
    return Equation(cleaned.coeffs.restrict(targets), cleaned.value)


def solve_messages(eqs, unknowns, tol: float = SPAN_TOL,
                   cond_limit: float = COND_LIMIT) -> dict[MessageId, complex]:
    """Solve the square system ``eqs`` for ``unknowns``.

    Raises
    ------
    ValueError
        If the system is not square or an equation has support outside
        ``unknowns``.
    Singular
        If the system's condition number exceeds ``cond_limit`` or the
        back-substitution residual exceeds ``tol`` times the norm of the
        right-hand side.
    """
    eqs = list(eqs)
    unknowns = list(unknowns)
    if len(eqs) != len(unknowns):
        raise ValueError(f"need {len(unknowns)} equations, got {len(eqs)}")
    allowed = set(unknowns)
    for eq in eqs:
        stray = eq.coeffs.support - allowed
        if stray:
            raise ValueError(f"equation has support outside unknowns: {sorted(stray)}")
    if not eqs:
        return {}
    A = np.array([eq.coeffs.to_dense(unknowns) for eq in eqs])
    y = np.array([eq.value for eq in eqs], dtype=complex)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > cond_limit:
        raise Singular(f"decode system condition number {cond:.3g}", cond=cond)
    x = np.linalg.solve(A, y)
    if np.linalg.norm(A @ x - y) > tol * max(np.linalg.norm(y), 1.0):
        raise Singular("back-substitution residual too large", cond=cond)
    return {m: complex(v) for m, v in zip(unknowns, x)}
