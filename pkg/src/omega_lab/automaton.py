"""Deterministic Büchi automata over proposition-assignment symbols.

A symbol is the integer whose bit ``i`` holds the truth value of proposition
``i``; with ``|P|`` propositions the assignment symbols are ``0 .. 2**|P| - 1``
and the separator ``$`` gets index ``2**|P|``.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MAX_PROPS = 16
MISSING = -1


@dataclass(frozen=True)
class Alphabet:
    prop_count: int

    @property
    def n_assignments(self) -> int:
        return 1 << self.prop_count

    @property
    def size(self) -> int:
        return self.n_assignments + 1

    @property
    def separator_index(self) -> int:
        return self.n_assignments


def assignment_bits(sym: int, width: int) -> tuple[bool, ...]:
    return tuple(bool((sym >> i) & 1) for i in range(width))


def symbol_from_bits(bits) -> int:
    return sum(1 << i for i, b in enumerate(bits) if b)


def symbol_name(sym: int, ap_names) -> str:
    """Readable form of an assignment symbol, e.g. ``a&!b``."""
    if not ap_names:
        return "t"
    return "&".join(name if (sym >> i) & 1 else "!" + name for i, name in enumerate(ap_names))


@dataclass(frozen=True, eq=False)
class DBA:
    """Deterministic state-based Büchi automaton with a dense transition table.

    ``delta[q, sym]`` is the successor of ``q`` on assignment ``sym``, or
    ``MISSING`` for a partial automaton (see :func:`omega_lab.hoa.complete`).
    """

    n_states: int
    initial: int
    delta: np.ndarray
    accepting: frozenset[int]
    ap_names: tuple[str, ...]
    name: str = ""
    completed: bool = field(default=False)

    def __post_init__(self):
        delta = np.array(self.delta, dtype=np.int64)
        if delta.ndim != 2 or delta.shape[0] != self.n_states:
            raise ValueError(f"delta must have shape ({self.n_states}, 2**|P|), got {delta.shape}")
        if len(self.ap_names) > MAX_PROPS:
            raise ValueError(f"at most {MAX_PROPS} propositions are supported, got {len(self.ap_names)}")
        if delta.shape[1] != 1 << len(self.ap_names):
            raise ValueError(f"delta has {delta.shape[1]} columns for {len(self.ap_names)} propositions")
        if not 0 <= self.initial < self.n_states:
            raise ValueError(f"initial state {self.initial} out of range")
        if delta.size and (delta.max() >= self.n_states or delta.min() < MISSING):
            raise ValueError("delta refers to a nonexistent state")
        acc = frozenset(int(q) for q in self.accepting)
        if any(not 0 <= q < self.n_states for q in acc):
            raise ValueError("accepting set refers to a nonexistent state")
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "accepting", acc)
        object.__setattr__(self, "ap_names", tuple(self.ap_names))

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(len(self.ap_names))

    @property
    def prop_count(self) -> int:
        return len(self.ap_names)

    @property
    def n_symbols(self) -> int:
        return 1 << len(self.ap_names)

    @property
    def is_complete(self) -> bool:
        return bool((self.delta != MISSING).all())

    @cached_property
    def rows(self) -> tuple[tuple[int, ...], ...]:
        # Plain-Python copy of delta for tight stepping loops.
        return tuple(tuple(int(x) for x in row) for row in self.delta)

    @cached_property
    def accepting_mask(self) -> tuple[bool, ...]:
        return tuple(q in self.accepting for q in range(self.n_states))

    def same_as(self, other: "DBA") -> bool:
        """Exact structural equality (same numbering)."""
        return (
            self.n_states == other.n_states
            and self.initial == other.initial
            and self.accepting == other.accepting
            and self.ap_names == other.ap_names
            and np.array_equal(self.delta, other.delta)
        )

    def __repr__(self):
        return (
            f"DBA(name={self.name!r}, n_states={self.n_states}, props={list(self.ap_names)}, "
            f"accepting={sorted(self.accepting)})"
        )


def step(dba: DBA, q: int, sym: int) -> int:
    return dba.rows[q][sym]


def run_prefix(dba: DBA, u) -> int:
    rows = dba.rows
    q = dba.initial
    for sym in u:
        q = rows[q][sym]
    return q


def run_from(dba: DBA, q: int, word) -> int:
    rows = dba.rows
    for sym in word:
        q = rows[q][sym]
    return q


class SinkClass(enum.Enum):
    ACCEPTING_SINK = "accepting_sink"
    REJECTING_SINK = "rejecting_sink"
    NOT_SINK = "not_sink"


def classify_sinks(dba: DBA) -> list[SinkClass]:
    out = []
    for q in range(dba.n_states):
        if all(dst == q for dst in dba.rows[q]):
            out.append(SinkClass.ACCEPTING_SINK if q in dba.accepting else SinkClass.REJECTING_SINK)
        else:
            out.append(SinkClass.NOT_SINK)
    return out


def sink_states(dba: DBA, kind: SinkClass) -> frozenset[int]:
    return frozenset(q for q, c in enumerate(classify_sinks(dba)) if c is kind)


def isomorphic(a: DBA, b: DBA) -> bool:
    """Isomorphism test via BFS relabelling from the initial states.

    Determinism makes the relabelling of the reachable part canonical; the
    unreachable parts are only compared by size.
    """
    if a.ap_names != b.ap_names or a.n_states != b.n_states:
        return False
    mapping = {a.initial: b.initial}
    queue = deque([a.initial])
    while queue:
        qa = queue.popleft()
        qb = mapping[qa]
        if (qa in a.accepting) != (qb in b.accepting):
            return False
        for sym in range(a.n_symbols):
            da, db = a.rows[qa][sym], b.rows[qb][sym]
            if (da == MISSING) != (db == MISSING):
                return False
            if da == MISSING:
                continue
            if da in mapping:
                if mapping[da] != db:
                    return False
            else:
                if db in mapping.values():
                    return False
                mapping[da] = db
                queue.append(da)
    return True


# ----------------------------------------------------------------------------
# built-in fixtures


def _from_function(name, ap_names, n_states, initial, accepting, succ) -> DBA:
    n_sym = 1 << len(ap_names)
    table = np.array([[succ(q, s) for s in range(n_sym)] for q in range(n_states)], dtype=np.int64)
    return DBA(n_states, initial, table, frozenset(accepting), tuple(ap_names), name=name)


def fig1() -> DBA:
    """G(a -> F b) & a over props (a, b).

    States: 0 initial (nothing read yet), 1 no pending request (accepting),
    2 waiting for b, 3 rejecting sink entered when the first symbol lacks a.
    """

    def succ(q, s):
        a, b = s & 1, (s >> 1) & 1
        if q == 0:
            if not a:
                return 3
            return 1 if b else 2
        if q == 1:
            return 2 if (a and not b) else 1
        if q == 2:
            return 1 if b else 2
        return 3

    return _from_function("fig1", ("a", "b"), 4, 0, {1}, succ)


def gf_a() -> DBA:
    """GF a: state 1 is entered exactly on reading a."""
    return _from_function("gf_a", ("a",), 2, 0, {1}, lambda q, s: 1 if s & 1 else 0)


def always_a() -> DBA:
    """G a: one ¬a sends the run into the rejecting sink 1."""
    return _from_function("always_a", ("a",), 2, 0, {0}, lambda q, s: 0 if (q == 0 and s & 1) else 1)


def universal() -> DBA:
    return _from_function("universal", ("a",), 1, 0, {0}, lambda q, s: 0)


def cycle(k: int) -> DBA:
    """k states on a directed cycle advanced by ``a``; ``!a`` stays put. State 0 accepts."""
    if k < 1:
        raise ValueError("cycle length must be >= 1")
    return _from_function(f"cycle_{k}", ("a",), k, 0, {0}, lambda q, s: (q + 1) % k if s & 1 else q)


CYCLE_SIZES = (3, 8, 16, 32)


def fixtures() -> dict[str, DBA]:
    out = {"fig1": fig1(), "gf_a": gf_a(), "always_a": always_a(), "universal": universal()}
    for k in CYCLE_SIZES:
        out[f"cycle_{k}"] = cycle(k)
    return out


def get_fixture(name: str) -> DBA:
    if name.startswith("cycle_"):
        try:
            return cycle(int(name[len("cycle_"):]))
        except ValueError:
            pass
    table = fixtures()
    if name not in table:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(sorted(table))}")
    return table[name]
