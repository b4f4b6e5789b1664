"""Membership of ultimately periodic words ``u v^ω`` in a DBA's language.

Three deciders are provided and are expected to agree everywhere:

* :func:`accept_up` iterates the state map induced by one copy of ``v``
  (production path, ``O(n_states * |v|)``);
* :func:`accept_up_matexp` finds the reachable cycles of that map with
  boolean matrix powers;
* :func:`accept_up_bruteforce` unrolls the lasso symbol by symbol and is the
  independent oracle used in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from omega_lab.automaton import DBA, run_prefix


@dataclass(frozen=True)
class UpWord:
    u: tuple[int, ...]
    v: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(int(s) for s in self.u))
        object.__setattr__(self, "v", tuple(int(s) for s in self.v))
        if not self.v:
            raise ValueError("the period v of an ultimately periodic word must be nonempty")

    def check_symbols(self, dba: DBA) -> None:
        n = dba.n_symbols
        for s in self.u + self.v:
            if not 0 <= s < n:
                raise ValueError(f"symbol {s} is not an assignment over {dba.prop_count} propositions")


@dataclass(frozen=True)
class SuffixProfile:
    """Effect of reading ``v`` once from every state.

    ``visits_accepting[q]`` counts the start state ``q`` itself as visited.
    """

    end_state: tuple[int, ...]
    visits_accepting: tuple[bool, ...]


def _as_word(w) -> UpWord:
    if isinstance(w, UpWord):
        return w
    u, v = w
    return UpWord(u, v)


def suffix_profile(dba: DBA, v) -> SuffixProfile:
    if len(v) == 0:
        raise ValueError("v must be nonempty")
    rows = dba.rows
    acc = dba.accepting_mask
    ends = []
    visits = []
    for q0 in range(dba.n_states):
        q = q0
        seen = acc[q]
        for sym in v:
            q = rows[q][sym]
            seen = seen or acc[q]
        ends.append(q)
        visits.append(seen)
    return SuffixProfile(tuple(ends), tuple(visits))


def _lasso(end_state, start: int) -> tuple[list[int], list[int]]:
    """Split the orbit of ``start`` under ``end_state`` into (tail, cycle)."""
    order = {}
    orbit = []
    q = start
    while q not in order:
        order[q] = len(orbit)
        orbit.append(q)
        q = end_state[q]
    i = order[q]
    return orbit[:i], orbit[i:]


def accept_up(dba: DBA, w) -> bool:
    w = _as_word(w)
    prof = suffix_profile(dba, w.v)
    tail, cyc = _lasso(prof.end_state, run_prefix(dba, w.u))
    assert len(tail) + len(cyc) <= dba.n_states
    return any(prof.visits_accepting[c] for c in cyc)


def _bool_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(np.int64) @ b.astype(np.int64)) > 0


def _bool_power(m: np.ndarray, k: int) -> np.ndarray:
    result = np.eye(m.shape[0], dtype=bool)
    base = m.copy()
    while k:
        if k & 1:
            result = _bool_matmul(result, base)
        base = _bool_matmul(base, base)
        k >>= 1
    return result


def suffix_matrix(prof: SuffixProfile) -> np.ndarray:
    n = len(prof.end_state)
    m = np.zeros((n, n), dtype=bool)
    m[np.arange(n), list(prof.end_state)] = True
    return m


def accept_up_matexp(dba: DBA, w) -> bool:
    w = _as_word(w)
    prof = suffix_profile(dba, w.v)
    return accept_from_suffix_matrix(suffix_matrix(prof), run_prefix(dba, w.u), prof.visits_accepting)


def accept_from_suffix_matrix(m: np.ndarray, s0: int, visits) -> bool:
    n = m.shape[0]
    # (I | M)^j saturates at j = n - 1: every walk of length <= n - 1.
    within = _bool_power(m | np.eye(n, dtype=bool), max(n - 1, 1))
    # M (I | M)^(n-1) holds walks of length 1..n; its diagonal marks cycle states.
    on_cycle = np.diagonal(_bool_matmul(m, within))
    reach = within[s0]
    return bool(np.any(reach & on_cycle & np.asarray(visits, dtype=bool)))


def accept_up_bruteforce(dba: DBA, w) -> bool:
    w = _as_word(w)
    rows = dba.rows
    acc = dba.accepting_mask
    n = dba.n_states
    q = dba.initial
    for sym in w.u:
        q = rows[q][sym]
    copies = 2 * n + 2
    hit = False
    for c in range(copies):
        seen = acc[q]
        for sym in w.v:
            q = rows[q][sym]
            if acc[q]:
                seen = True
        if c >= copies - (n + 1) and seen:
            hit = True
    return hit


DECIDERS = {
    "iterate": accept_up,
    "matexp": accept_up_matexp,
    "brute": accept_up_bruteforce,
}
