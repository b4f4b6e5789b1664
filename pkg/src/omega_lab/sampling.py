"""Sampling of encoded ``u$v`` datasets from a DBA.

Every random draw comes from a stream keyed by integers (master seed, stream
tag, batch index, record index), so a dataset does not depend on the order in
which its records are produced.
"""

from __future__ import annotations

import hashlib
import json
import weakref
from dataclasses import asdict, dataclass, field

import numpy as np

from omega_lab.acceptance import accept_up, accept_up_bruteforce
from omega_lab.automaton import DBA, SinkClass, classify_sinks

ACCEPT, REJECT, ANY = "accept", "reject", "any"

# stream tags
DATASET, TRAIN, VALIDATION, EVALUATION = 0, 1, 2, 3

SPOT_CHECK_EVERY = 100


def stream(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


class SamplerExhausted(RuntimeError):
    """Raised when every restart of a constrained draw hit a dead end."""


@dataclass
class SamplerConfig:
    min_len: int = 2
    max_len: int = 64
    target_positive_fraction: float = 0.5
    oversample_factor: int = 4
    max_resample_attempts: int = 100
    mode: str = "balanced"
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.min_len <= self.max_len:
            raise ValueError(f"need 2 <= min_len <= max_len, got {self.min_len}, {self.max_len}")
        if not 0.0 < self.target_positive_fraction < 1.0:
            raise ValueError("target_positive_fraction must lie in (0, 1)")
        if self.oversample_factor < 1 or self.max_resample_attempts < 1:
            raise ValueError("oversample_factor and max_resample_attempts must be positive")
        if self.mode not in ("uniform", "balanced"):
            raise ValueError(f"mode must be 'uniform' or 'balanced', got {self.mode!r}")


@dataclass
class SequenceRecord:
    u: list[int]
    v: list[int]
    label: bool | None
    separator: int
    target: str = ANY

    @property
    def length(self) -> int:
        return len(self.u) + 1 + len(self.v)

    @property
    def encoded(self) -> list[int]:
        return encode(self.u, self.v, self.separator)

    def to_json(self) -> dict:
        return {"u": self.u, "v": self.v, "label": None if self.label is None else int(self.label), "n": self.length}


def encode(u, v, separator: int) -> list[int]:
    if len(v) == 0:
        raise ValueError("v must be nonempty")
    return list(u) + [separator] + list(v)


def decode(encoded, separator: int) -> tuple[list[int], list[int]]:
    seq = list(encoded)
    if seq.count(separator) != 1:
        raise ValueError("encoded word must contain exactly one separator")
    k = seq.index(separator)
    if k == len(seq) - 1:
        raise ValueError("separator may not be the last symbol")
    return seq[:k], seq[k + 1 :]


def sample_split(n: int, rng: np.random.Generator) -> int:
    """Separator position k, uniform on 1..n-1 (so |u| = k-1, |v| = n-k)."""
    if n < 2:
        raise ValueError("encoded length must be at least 2")
    return int(rng.integers(1, n))


class _Tables:
    """Per-automaton allowed-symbol lists, keyed by forbidden state set."""

    def __init__(self, dba: DBA):
        sinks = classify_sinks(dba)
        self.accepting_sinks = frozenset(q for q, c in enumerate(sinks) if c is SinkClass.ACCEPTING_SINK)
        self.rejecting_sinks = frozenset(q for q, c in enumerate(sinks) if c is SinkClass.REJECTING_SINK)
        self._dba = dba
        self._allowed: dict[frozenset, list[list[int]]] = {}

    def allowed(self, forbidden: frozenset) -> list[list[int]]:
        table = self._allowed.get(forbidden)
        if table is None:
            table = [
                [s for s, dst in enumerate(row) if dst not in forbidden] for row in self._dba.rows
            ]
            self._allowed[forbidden] = table
        return table

    def constraints(self, target: str) -> tuple[frozenset, frozenset]:
        if target == ACCEPT:
            return self.rejecting_sinks, self.rejecting_sinks
        if target == REJECT:
            return self.accepting_sinks, self.accepting_sinks | self._dba.accepting
        if target == ANY:
            return frozenset(), frozenset()
        raise ValueError(f"unknown class target {target!r}")


_TABLES: "weakref.WeakKeyDictionary[DBA, _Tables]" = weakref.WeakKeyDictionary()


def _tables(dba: DBA) -> _Tables:
    t = _TABLES.get(dba)
    if t is None:
        t = _TABLES[dba] = _Tables(dba)
    return t


def sample_path(dba: DBA, start: int, length: int, forbidden, rng: np.random.Generator):
    """Walk ``length`` steps choosing uniformly among symbols that avoid ``forbidden``.

    Returns ``(symbols, end_state)``, or ``None`` on a dead end.
    """
    allowed = _tables(dba).allowed(frozenset(forbidden))
    rows = dba.rows
    draws = rng.random(length)
    q = start
    out = []
    for r in draws:
        choices = allowed[q]
        if not choices:
            return None
        sym = choices[int(r * len(choices))]
        out.append(sym)
        q = rows[q][sym]
    return out, q


def sample_sequence(
    dba: DBA, n: int, class_target: str, rng: np.random.Generator, max_attempts: int = 100
) -> SequenceRecord:
    """Draw one labelled ``u$v`` word of encoded length ``n``.

    The constraints for ``class_target`` only bias the draw; the returned label
    comes from the acceptance check and may disagree with the target.
    """
    forbid_u, forbid_v = _tables(dba).constraints(class_target)
    for _ in range(max_attempts):
        k = sample_split(n, rng)
        pu = sample_path(dba, dba.initial, k - 1, forbid_u, rng)
        if pu is None:
            continue
        u, q = pu
        pv = sample_path(dba, q, n - k, forbid_v, rng)
        if pv is None:
            continue
        v = pv[0]
        return SequenceRecord(u, v, accept_up(dba, (u, v)), dba.alphabet.separator_index, class_target)
    raise SamplerExhausted(
        f"no {class_target} word of length {n} for {dba.name or 'automaton'} after {max_attempts} attempts"
    )


def _spot_check(dba: DBA, rec: SequenceRecord) -> None:
    if accept_up_bruteforce(dba, (rec.u, rec.v)) != rec.label:
        raise AssertionError(f"label mismatch against unrolling oracle for u={rec.u} v={rec.v}")


@dataclass
class SampledBatch:
    records: list[SequenceRecord]
    positive_fraction: float
    candidates: int = 0
    mismatches: int = 0
    exhausted: list[str] = field(default_factory=list)

    def meta(self) -> dict:
        return {
            "count": len(self.records),
            "positive_fraction": self.positive_fraction,
            "candidates": self.candidates,
            "mismatches": self.mismatches,
            "exhausted": list(self.exhausted),
        }


def sample_balanced_batch(
    dba: DBA,
    count: int,
    length_range: tuple[int, int],
    key: tuple[int, ...],
    cfg: SamplerConfig | None = None,
) -> SampledBatch:
    """Oversample with alternating class targets, then filter towards the target mix.

    Candidate ``j`` draws from ``stream(*key, j)``. A candidate whose label
    disagrees with its target goes to the other class pool. If a class cannot
    be filled within ``oversample_factor * count`` draws the shortfall is taken
    from the other pool and the achieved fraction is reported.
    """
    cfg = cfg or SamplerConfig()
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = length_range
    need = {True: int(round(count * cfg.target_positive_fraction))}
    need[False] = count - need[True]
    pools: dict[bool, list] = {True: [], False: []}
    draws = {True: 0, False: 0}
    budget = cfg.oversample_factor * count
    exhausted = set()
    mismatches = 0
    j = 0
    turn = 0
    while True:
        open_classes = [
            c for c in (True, False) if len(pools[c]) < need[c] and draws[c] < budget and c not in exhausted
        ]
        if not open_classes:
            break
        cls = open_classes[turn % len(open_classes)]
        turn += 1
        rng = stream(*key, j)
        j += 1
        draws[cls] += 1
        n = int(rng.integers(lo, hi + 1))
        try:
            rec = sample_sequence(dba, n, ACCEPT if cls else REJECT, rng, cfg.max_resample_attempts)
        except SamplerExhausted:
            exhausted.add(cls)
            continue
        if j % SPOT_CHECK_EVERY == 1:
            _spot_check(dba, rec)
        if rec.label != cls:
            mismatches += 1
        pools[rec.label].append(rec)

    take_pos = min(need[True], len(pools[True]))
    take_neg = min(need[False], len(pools[False]))
    short = count - take_pos - take_neg
    if short:
        extra_pos = min(short, len(pools[True]) - take_pos)
        take_pos += extra_pos
        take_neg += min(short - extra_pos, len(pools[False]) - take_neg)
    chosen = pools[True][:take_pos] + pools[False][:take_neg]
    # Both pools empty only if both targets dead-end; fall back to unconstrained draws.
    while len(chosen) < count:
        rng = stream(*key, j)
        j += 1
        n = int(rng.integers(lo, hi + 1))
        chosen.append(sample_sequence(dba, n, ANY, rng, cfg.max_resample_attempts))
    order = stream(*key, j).permutation(len(chosen))
    records = [chosen[i] for i in order]
    pos = sum(1 for r in records if r.label)
    return SampledBatch(
        records,
        pos / len(records),
        candidates=j,
        mismatches=mismatches,
        exhausted=sorted(ACCEPT if c else REJECT for c in exhausted),
    )


def sample_uniform_batch(dba: DBA, count: int, length_range: tuple[int, int], key: tuple[int, ...], max_attempts=100):
    lo, hi = length_range
    records = []
    for i in range(count):
        rng = stream(*key, i)
        n = int(rng.integers(lo, hi + 1))
        rec = sample_sequence(dba, n, ANY, rng, max_attempts)
        if i % SPOT_CHECK_EVERY == 0:
            _spot_check(dba, rec)
        records.append(rec)
    pos = sum(1 for r in records if r.label)
    return SampledBatch(records, pos / count, candidates=count)


def sample_batch(dba: DBA, count: int, length_range, key, cfg: SamplerConfig) -> SampledBatch:
    if cfg.mode == "uniform":
        return sample_uniform_batch(dba, count, length_range, key, cfg.max_resample_attempts)
    return sample_balanced_batch(dba, count, length_range, key, cfg)


# ----------------------------------------------------------------------------
# dataset files


def automaton_sha256(dba: DBA) -> str:
    from omega_lab.hoa import emit_hoa

    return hashlib.sha256(emit_hoa(dba).encode("utf-8")).hexdigest()


def dataset_header(dba: DBA, cfg: SamplerConfig, **extra) -> dict:
    header = {
        "ap": list(dba.ap_names),
        "alphabet_size": dba.alphabet.size,
        "automaton_sha256": automaton_sha256(dba),
        "seed": cfg.seed,
    }
    header.update(extra)
    return header


def sample_dataset(dba: DBA, count: int, cfg: SamplerConfig) -> tuple[dict, SampledBatch]:
    batch = sample_batch(dba, count, (cfg.min_len, cfg.max_len), (cfg.seed, DATASET, 0), cfg)
    header = dataset_header(dba, cfg, sampler=asdict(cfg), batch=batch.meta())
    return header, batch


def write_jsonl(path, header: dict, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_json() if isinstance(rec, SequenceRecord) else rec) + "\n")


def read_jsonl(path) -> tuple[dict, list[dict]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    records = []
    for i, ln in enumerate(lines[1:], start=2):
        rec = json.loads(ln)
        if not {"u", "v"} <= rec.keys():
            raise ValueError(f"{path}:{i}: record lacks 'u' or 'v'")
        records.append(rec)
    return header, records
