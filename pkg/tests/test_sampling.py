import json

import numpy as np
import pytest
from scipy import stats

from omega_lab.acceptance import accept_up, accept_up_bruteforce
from omega_lab.automaton import SinkClass, classify_sinks, fixtures
from omega_lab.sampling import (
    ACCEPT,
    ANY,
    REJECT,
    SamplerConfig,
    SamplerExhausted,
    decode,
    encode,
    read_jsonl,
    sample_balanced_batch,
    sample_dataset,
    sample_path,
    sample_sequence,
    sample_split,
    sample_uniform_batch,
    stream,
    write_jsonl,
)

FX = fixtures()


def test_split_n2():
    rng = np.random.default_rng(0)
    assert {sample_split(2, rng) for _ in range(100)} == {1}


def test_split_uniform_chi_square():
    rng = np.random.default_rng(1)
    ks = np.array([sample_split(64, rng) for _ in range(100_000)])
    assert ks.min() >= 1 and ks.max() <= 63
    counts = np.bincount(ks, minlength=64)[1:]
    assert stats.chisquare(counts).pvalue > 0.01


def test_split_rejects_short():
    with pytest.raises(ValueError):
        sample_split(1, np.random.default_rng(0))


def test_path_zero_length():
    assert sample_path(FX["fig1"], 2, 0, set(), np.random.default_rng(0)) == ([], 2)


def test_path_unconstrained_symbol_uniformity():
    dba = FX["fig1"]
    rng = np.random.default_rng(2)
    draws = np.array([sample_path(dba, 0, 4, set(), rng)[0] for _ in range(100_000)])
    for pos in range(4):
        counts = np.bincount(draws[:, pos], minlength=4)
        assert stats.chisquare(counts).pvalue > 0.001


def test_path_avoiding_sink_starts_with_a():
    dba = FX["fig1"]
    sink = {q for q, c in enumerate(classify_sinks(dba)) if c is SinkClass.REJECTING_SINK}
    # enumeration: which first symbols avoid the sink from the initial state
    allowed = {s for s in range(4) if int(dba.delta[dba.initial, s]) not in sink}
    assert allowed == {1, 3}
    rng = np.random.default_rng(3)
    firsts = {sample_path(dba, dba.initial, 3, sink, rng)[0][0] for _ in range(500)}
    assert firsts == allowed


def test_path_dead_end():
    dba = FX["universal"]
    assert sample_path(dba, 0, 3, {0}, np.random.default_rng(0)) is None


def test_encode_layout():
    assert encode([], [3], 4) == [4, 3]
    assert encode([0], [1], 4) == [0, 4, 1]
    with pytest.raises(ValueError):
        encode([1], [], 4)


def test_decode_inverts_encode():
    rng = np.random.default_rng(4)
    for _ in range(500):
        rec = sample_sequence(FX["fig1"], int(rng.integers(2, 40)), ANY, rng)
        enc = rec.encoded
        assert enc.count(4) == 1 and enc[-1] != 4
        assert enc.index(4) == len(rec.u)
        assert decode(enc, 4) == (rec.u, rec.v)
        assert rec.length == len(enc)


def test_universal_any_always_accepts():
    rng = np.random.default_rng(5)
    assert all(sample_sequence(FX["universal"], 10, ANY, rng).label for _ in range(200))


def test_reject_target_keeps_v_out_of_accepting_states():
    dba = FX["fig1"]
    rng = np.random.default_rng(6)
    u_visits = 0
    n_reject = 0
    n = 10_000
    for _ in range(n):
        rec = sample_sequence(dba, int(rng.integers(2, 33)), REJECT, rng)
        q = dba.initial
        for s in rec.u:
            q = int(dba.delta[q, s])
            u_visits += q in dba.accepting
        for s in rec.v:
            q = int(dba.delta[q, s])
            assert q not in dba.accepting
        n_reject += not rec.label
    assert u_visits > 0  # the prefix is unconstrained
    assert n_reject / n >= 0.95


def test_exhausted_target_raises():
    with pytest.raises(SamplerExhausted):
        sample_sequence(FX["universal"], 5, REJECT, np.random.default_rng(0), max_attempts=3)


def test_records_match_oracle():
    for name, dba in FX.items():
        batch = sample_balanced_batch(dba, 200, (2, 40), (9, 0, 0))
        for rec in batch.records:
            assert rec.label == accept_up_bruteforce(dba, (rec.u, rec.v)) == accept_up(dba, (rec.u, rec.v))


def test_balanced_universal_all_positive():
    b = sample_balanced_batch(FX["universal"], 64, (2, 16), (0, 0, 0))
    assert len(b.records) == 64
    assert b.positive_fraction == 1.0
    assert b.exhausted == [REJECT]


@pytest.mark.parametrize("name", ["fig1", "gf_a", "always_a", "cycle_8"])
def test_balanced_count_exact(name):
    b = sample_balanced_batch(FX[name], 37, (2, 64), (1, 2, 3))
    assert len(b.records) == 37


def test_balanced_fig1_fraction():
    b = sample_balanced_batch(FX["fig1"], 1024, (2, 64), (0, 0, 0))
    assert 0.45 <= b.positive_fraction <= 0.55


def test_balanced_respects_length_range():
    b = sample_balanced_batch(FX["gf_a"], 200, (5, 9), (0, 0, 1))
    assert {r.length for r in b.records} <= set(range(5, 10))


def test_batches_are_reproducible():
    a = sample_balanced_batch(FX["fig1"], 100, (2, 30), (42, 1, 7))
    b = sample_balanced_batch(FX["fig1"], 100, (2, 30), (42, 1, 7))
    assert [r.to_json() for r in a.records] == [r.to_json() for r in b.records]


def test_uniform_records_independent_of_batch_size():
    a = sample_uniform_batch(FX["fig1"], 50, (2, 30), (3, 0, 0))
    b = sample_uniform_batch(FX["fig1"], 20, (2, 30), (3, 0, 0))
    assert [r.to_json() for r in a.records[:20]] == [r.to_json() for r in b.records]


def test_stream_keys_differ():
    assert stream(1, 2).random() != stream(1, 3).random()


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(min_len=1)
    with pytest.raises(ValueError):
        SamplerConfig(target_positive_fraction=1.0)
    with pytest.raises(ValueError):
        SamplerConfig(mode="weird")


def test_dataset_file_round_trip(tmp_path):
    cfg = SamplerConfig(min_len=2, max_len=20, seed=5)
    header, batch = sample_dataset(FX["fig1"], 50, cfg)
    path = tmp_path / "d.jsonl"
    write_jsonl(path, header, batch.records)
    h, recs = read_jsonl(path)
    assert h["ap"] == ["a", "b"] and h["alphabet_size"] == 5 and h["seed"] == 5
    assert len(h["automaton_sha256"]) == 64
    assert len(recs) == 50
    assert set(recs[0]) == {"u", "v", "label", "n"}
    first = json.loads(path.read_text().splitlines()[1])
    assert first["n"] == len(first["u"]) + 1 + len(first["v"])


def test_dataset_files_byte_identical(tmp_path):
    cfg = SamplerConfig(seed=9, max_len=30)
    for name in ("a", "b"):
        header, batch = sample_dataset(FX["gf_a"], 80, cfg)
        write_jsonl(tmp_path / f"{name}.jsonl", header, batch.records)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
