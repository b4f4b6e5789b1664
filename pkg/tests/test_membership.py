import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import A_B, NA_NB, ONE_PROP
from omega_lab.acceptance import (
    UpWord,
    accept_from_suffix_matrix,
    accept_up,
    accept_up_bruteforce,
    accept_up_matexp,
    suffix_profile,
)
from omega_lab.automaton import fixtures, run_prefix

FX = fixtures()


def test_up_word_needs_period():
    with pytest.raises(ValueError):
        UpWord((1,), ())


def test_profile_single_accepting_state(fx):
    p = suffix_profile(fx["universal"], [0, 1, 1])
    assert p.end_state == (0,) and p.visits_accepting == (True,)


def test_profile_gf_a_not_a(fx):
    p = suffix_profile(fx["gf_a"], [0])
    assert p.end_state == (0, 0)
    # start state 1 is accepting and counts as visited
    assert p.visits_accepting == (False, True)


def test_profile_matches_direct_runs(fx):
    dba = fx["cycle_8"]
    v = [1, 0, 1, 1, 0]
    ends = []
    for q in range(dba.n_states):
        x = q
        for s in v:
            x = int(dba.delta[x, s])
        ends.append(x)
    assert suffix_profile(dba, v).end_state == tuple(ends)


def test_fig1_examples(fx):
    f1 = fx["fig1"]
    for decide in (accept_up, accept_up_matexp, accept_up_bruteforce):
        assert decide(f1, ((), (A_B,)))
        assert not decide(f1, ((), (NA_NB,)))


def test_accepting_sink_loop_accepts(fx):
    u = fx["universal"]
    assert accept_up(u, ([1, 0, 0], [1]))


def test_matrix_two_cycle():
    m = np.array([[False, True], [True, False]])
    assert accept_from_suffix_matrix(m, 0, (False, True))


def test_matrix_identity_rejects():
    m = np.eye(3, dtype=bool)
    assert not accept_from_suffix_matrix(m, 1, (True, False, True))


def test_matrix_tail_state_does_not_count():
    # 0 -> 1 -> 2 -> 2 ; only the transient state 0 visits F
    m = np.zeros((3, 3), dtype=bool)
    m[0, 1] = m[1, 2] = m[2, 2] = True
    assert not accept_from_suffix_matrix(m, 0, (True, False, False))
    assert accept_from_suffix_matrix(m, 0, (False, False, True))


def test_bruteforce_examples(fx):
    assert accept_up_bruteforce(fx["universal"], ((0, 1), (0,)))
    assert not accept_up_bruteforce(fx["always_a"], ((1,), (1, 0)))


def _all_words(n_sym, max_u=3, max_v=3):
    for lu in range(max_u + 1):
        for u in itertools.product(range(n_sym), repeat=lu):
            for lv in range(1, max_v + 1):
                for v in itertools.product(range(n_sym), repeat=lv):
                    yield u, v


@pytest.mark.parametrize("name", ONE_PROP)
def test_exhaustive_agreement(name):
    dba = FX[name]
    for u, v in _all_words(dba.n_symbols):
        a = accept_up(dba, (u, v))
        assert a == accept_up_matexp(dba, (u, v)) == accept_up_bruteforce(dba, (u, v))


def test_exhaustive_fig1():
    dba = FX["fig1"]
    for u, v in _all_words(4, 2, 2):
        assert accept_up(dba, (u, v)) == accept_up_matexp(dba, (u, v)) == accept_up_bruteforce(dba, (u, v))


def test_known_gf_a_language():
    dba = FX["gf_a"]
    for u, v in _all_words(2):
        assert accept_up(dba, (u, v)) == (1 in v)


def test_known_always_a_language():
    dba = FX["always_a"]
    for u, v in _all_words(2):
        assert accept_up(dba, (u, v)) == (0 not in u and 0 not in v)


def test_fig1_first_symbol_without_a_rejects():
    dba = FX["fig1"]
    rng = np.random.default_rng(5)
    for _ in range(2000):
        u = rng.integers(0, 4, size=rng.integers(0, 8)).tolist()
        v = rng.integers(0, 4, size=rng.integers(1, 8)).tolist()
        first = (u + v)[0]
        if not first & 1:
            assert not accept_up(dba, (u, v))
            assert not accept_up_bruteforce(dba, (u, v))


def words(n_sym):
    sym = st.integers(0, n_sym - 1)
    return st.tuples(st.lists(sym, max_size=12), st.lists(sym, min_size=1, max_size=12))


NAMES = sorted(FX)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(NAMES), st.data())
def test_rotation_invariance(name, data):
    dba = FX[name]
    _, v = data.draw(words(dba.n_symbols))
    rotated = v[1:] + v[:1]
    assert accept_up(dba, ((), v)) == accept_up(dba, (v[:1], rotated))


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(NAMES), st.data())
def test_pumping_invariance(name, data):
    dba = FX[name]
    u, v = data.draw(words(dba.n_symbols))
    base = accept_up(dba, (u, v))
    assert base == accept_up(dba, (u, v + v)) == accept_up(dba, (u + v, v))
    assert base == accept_up_bruteforce(dba, (u, v + v))


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(NAMES), st.data())
def test_orbit_enters_cycle_within_state_count(name, data):
    dba = FX[name]
    u, v = data.draw(words(dba.n_symbols))
    ends = suffix_profile(dba, v).end_state
    seen = []
    q = run_prefix(dba, u)
    while q not in seen:
        seen.append(q)
        q = ends[q]
    assert len(seen) <= dba.n_states
