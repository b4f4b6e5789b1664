"""Training runs, length-range evaluation, performance categories and correlation reports."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from omega_lab import __version__, plotting
from omega_lab.automaton import DBA
from omega_lab.neural import (
    AmsgradState,
    Batch,
    RnnParams,
    TrainConfig,
    amsgrad_step,
    backward,
    checkpoint_to_json,
    forward,
    init_params,
    loss,
    lr_at,
    param_l2_norm,
    predict,
)
from omega_lab.sampling import (
    EVALUATION,
    TRAIN,
    VALIDATION,
    SampledBatch,
    SamplerConfig,
    sample_batch,
)
from omega_lab.stats import CorrelationResult, pearson

log = logging.getLogger(__name__)

IMBALANCE_TOLERANCE = 0.1

# (name, lower bound, lower bound inclusive), checked top-down on OOD accuracy
CATEGORIES = (
    ("Perfect", 0.999, False),
    ("Near-Perfect", 0.98, True),
    ("Good", 0.95, True),
    ("Moderate", 0.90, True),
    ("Poor", -np.inf, True),
)


@dataclass
class EvalConfig:
    min_len: int = 2
    max_len: int = 512
    per_length_count: int = 512
    validation_count: int = 1024
    validation_len: int = 512
    validation_interval: int = 250
    chunk: int = 1024
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.min_len <= self.max_len:
            raise ValueError("need 2 <= min_len <= max_len")
        if self.per_length_count < 1 or self.validation_count < 1 or self.validation_interval < 1:
            raise ValueError("counts and intervals must be positive")
        if self.validation_len < 2:
            raise ValueError("validation_len must be >= 2")


@dataclass
class EvalGrid:
    lengths: list[int]
    per_length_count: int
    accuracy: list[float]
    positive_fraction: list[float]
    accuracy_pos: list[float | None] = field(default_factory=list)
    accuracy_neg: list[float | None] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["length", "n_samples", "accuracy", "positive_fraction"])
            for L, a, p in zip(self.lengths, self.accuracy, self.positive_fraction):
                w.writerow([L, self.per_length_count, repr(a), repr(p)])


@dataclass
class RunRecord:
    automaton: str
    n_states: int
    seed: int
    config: dict
    history: list[dict]
    grid: EvalGrid
    id_accuracy: float
    ood_accuracy: float
    category: str
    param_norm: float
    balance: dict
    version: str = __version__
    wall_clock: float = 0.0
    params: RnnParams | None = field(default=None, repr=False)
    optimizer: AmsgradState | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        """Serializable form; wall-clock time lives in the sidecar log only."""
        return {
            "automaton": self.automaton,
            "n_states": self.n_states,
            "seed": self.seed,
            "version": self.version,
            "config": self.config,
            "history": self.history,
            "grid": self.grid.to_json(),
            "id_accuracy": self.id_accuracy,
            "ood_accuracy": self.ood_accuracy,
            "category": self.category,
            "param_norm": self.param_norm,
            "balance": self.balance,
        }

    @classmethod
    def from_json(cls, d: dict) -> "RunRecord":
        return cls(
            automaton=d["automaton"],
            n_states=d["n_states"],
            seed=d["seed"],
            config=d["config"],
            history=d["history"],
            grid=EvalGrid(**d["grid"]),
            id_accuracy=d["id_accuracy"],
            ood_accuracy=d["ood_accuracy"],
            category=d["category"],
            param_norm=d["param_norm"],
            balance=d["balance"],
            version=d.get("version", __version__),
        )


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _to_batch(sampled: SampledBatch) -> Batch:
    return Batch.from_sequences([r.encoded for r in sampled.records], [int(r.label) for r in sampled.records])


def _accuracy(params: RnnParams, batch: Batch, chunk: int) -> np.ndarray:
    """Per-element correctness, computed in chunks of at most ``chunk`` sequences."""
    out = []
    for i in range(0, len(batch.labels), chunk):
        sub = Batch(batch.sequences[i : i + chunk], batch.lengths[i : i + chunk], batch.labels[i : i + chunk])
        out.append(predict(params, sub) == sub.labels)
    return np.concatenate(out)


def category(ood_accuracy: float) -> str:
    for name, lo, inclusive in CATEGORIES:
        if ood_accuracy > lo or (inclusive and ood_accuracy == lo):
            return name
    raise AssertionError("unreachable")


def evaluate_range(params: RnnParams, dba: DBA, grid_cfg: EvalConfig, sampler_cfg: SamplerConfig | None = None) -> EvalGrid:
    """Accuracy at every length in ``min_len..max_len`` on freshly sampled test words.

    Length ``L`` draws from the stream ``(seed, EVALUATION, L)`` so a grid is
    reproducible regardless of which lengths are evaluated.
    """
    sampler_cfg = sampler_cfg or SamplerConfig()
    lengths = list(range(grid_cfg.min_len, grid_cfg.max_len + 1))
    acc, pos_frac, acc_pos, acc_neg = [], [], [], []
    for L in lengths:
        sampled = sample_batch(dba, grid_cfg.per_length_count, (L, L), (grid_cfg.seed, EVALUATION, L), sampler_cfg)
        batch = _to_batch(sampled)
        correct = _accuracy(params, batch, grid_cfg.chunk)
        pos = batch.labels == 1
        acc.append(float(correct.mean()))
        pos_frac.append(float(pos.mean()))
        acc_pos.append(float(correct[pos].mean()) if pos.any() else None)
        acc_neg.append(float(correct[~pos].mean()) if (~pos).any() else None)
    return EvalGrid(lengths, grid_cfg.per_length_count, acc, pos_frac, acc_pos, acc_neg)


def summarize_id_ood(grid: EvalGrid, train_max_len: int) -> tuple[float, float, str]:
    ids = [a for L, a in zip(grid.lengths, grid.accuracy) if L <= train_max_len]
    oods = [a for L, a in zip(grid.lengths, grid.accuracy) if L > train_max_len]
    if not ids or not oods:
        raise ValueError("grid must cover lengths on both sides of train_max_len")
    id_acc = float(np.mean(ids))
    ood_acc = float(np.mean(oods))
    return id_acc, ood_acc, category(ood_acc)


def train_run(
    dba: DBA,
    train_cfg: TrainConfig,
    eval_cfg: EvalConfig,
    sampler_cfg: SamplerConfig | None = None,
    automaton_id: str | None = None,
    progress=None,
) -> RunRecord:
    """Train on freshly sampled batches, validate periodically, then evaluate the length range."""
    sampler_cfg = sampler_cfg or SamplerConfig()
    started = time.perf_counter()
    seed = train_cfg.seed
    params = init_params(dba.alphabet.size, train_cfg.hidden, seed)
    opt = AmsgradState.for_params(params, train_cfg.beta1, train_cfg.beta2, train_cfg.epsilon)

    val = sample_batch(
        dba, eval_cfg.validation_count, (eval_cfg.validation_len, eval_cfg.validation_len),
        (seed, VALIDATION, 0), sampler_cfg,
    )
    val_batch = _to_batch(val)

    history = []
    train_fracs = []
    recent_loss = []
    for t in range(train_cfg.steps):
        sampled = sample_batch(
            dba, train_cfg.batch, (train_cfg.train_min_len, train_cfg.train_max_len), (seed, TRAIN, t), sampler_cfg
        )
        train_fracs.append(sampled.positive_fraction)
        batch = _to_batch(sampled)
        logits, trace = forward(params, batch)
        value, d_logits = loss(logits, batch.labels)
        grads = backward(params, trace, d_logits, train_cfg.l2_weight)
        amsgrad_step(params, grads, opt, lr_at(t, train_cfg))
        recent_loss.append(value)
        if (t + 1) % eval_cfg.validation_interval == 0 or t + 1 == train_cfg.steps:
            val_acc = float(_accuracy(params, val_batch, eval_cfg.chunk).mean())
            entry = {"step": t + 1, "val_accuracy": val_acc, "train_loss": float(np.mean(recent_loss))}
            history.append(entry)
            recent_loss = []
            log.info("step %d  loss %.4f  val acc %.4f", t + 1, entry["train_loss"], val_acc)
            if progress:
                progress(entry)

    if not all(np.isfinite(a).all() for a in params.arrays()):
        raise FloatingPointError("non-finite parameters after training")

    grid = evaluate_range(params, dba, eval_cfg, sampler_cfg)
    id_acc, ood_acc, cat = summarize_id_ood(grid, train_cfg.train_max_len)

    target = sampler_cfg.target_positive_fraction
    balance = {
        "target": target,
        "train_mean": float(np.mean(train_fracs)),
        "validation": val.positive_fraction,
        "eval_mean": float(np.mean(grid.positive_fraction)),
    }
    flagged = any(abs(balance[k] - target) > IMBALANCE_TOLERANCE for k in ("train_mean", "validation", "eval_mean"))
    balance["flagged"] = flagged
    if flagged:
        pos = [a for a in grid.accuracy_pos if a is not None]
        neg = [a for a in grid.accuracy_neg if a is not None]
        balance["accuracy_pos"] = float(np.mean(pos)) if pos else None
        balance["accuracy_neg"] = float(np.mean(neg)) if neg else None

    config = {
        "train": asdict(train_cfg),
        "eval": asdict(eval_cfg),
        "sampler": asdict(sampler_cfg),
        "automaton_completed": dba.completed,
        "model": {"cell": "elman-tanh", "readout": "last-symbol", "outputs": 2},
    }
    return RunRecord(
        automaton=automaton_id or dba.name or "automaton",
        n_states=dba.n_states,
        seed=seed,
        config=config,
        history=history,
        grid=grid,
        id_accuracy=id_acc,
        ood_accuracy=ood_acc,
        category=cat,
        param_norm=param_l2_norm(params),
        balance=balance,
        wall_clock=time.perf_counter() - started,
        params=params,
        optimizer=opt,
    )


def write_run(record: RunRecord, out_dir, figures: bool = True) -> Path:
    """Write run.json, grid.csv, checkpoint.json, a timestamp sidecar and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(dump_json(record.to_json()), encoding="utf-8")
    record.grid.write_csv(out / "grid.csv")
    if record.params is not None:
        train_cfg = TrainConfig(**record.config["train"])
        ckpt = checkpoint_to_json(
            record.params, record.optimizer, train_cfg, record.optimizer.t,
            {"seed": record.seed, "stream": TRAIN, "next_batch": record.optimizer.t},
        )
        ckpt["version"] = record.version
        (out / "checkpoint.json").write_text(json.dumps(ckpt, sort_keys=True) + "\n", encoding="utf-8")
    sidecar = {"finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "wall_clock_seconds": record.wall_clock}
    (out / "run.log.json").write_text(dump_json(sidecar), encoding="utf-8")
    if figures:
        name = f"{record.automaton} (seed {record.seed})"
        plotting.validation_curves({name: record.history}, out / "validation.svg")
        plotting.range_curves(
            {name: record.grid.to_json()}, out / "range.svg", record.config["train"]["train_max_len"]
        )
    return out / "run.json"


def load_run(path) -> RunRecord:
    return RunRecord.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def benchmark_group(record: RunRecord) -> str:
    name = record.automaton
    return name.rsplit("_", 1)[0] if name.rsplit("_", 1)[-1].isdigit() else name


def correlate_runs(records: list[RunRecord], out_dir=None) -> dict:
    """Pearson r/p of state count against OOD accuracy and against parameter norm."""
    if len(records) < 3:
        raise ValueError("correlation needs at least 3 runs")
    states = [r.n_states for r in records]
    ood = pearson(states, [r.ood_accuracy for r in records])
    norm = pearson(states, [r.param_norm for r in records])
    report = {"n_runs": len(records), "states_vs_ood_accuracy": ood.to_json(), "states_vs_param_norm": norm.to_json()}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "correlation.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["automaton", "seed", "n_states", "id_accuracy", "ood_accuracy", "param_norm"])
            for r in records:
                w.writerow([r.automaton, r.seed, r.n_states, repr(r.id_accuracy), repr(r.ood_accuracy), repr(r.param_norm)])
        (out / "correlation.json").write_text(dump_json(report), encoding="utf-8")
        groups = [benchmark_group(r) for r in records]
        plotting.state_scatter(states, [r.ood_accuracy for r in records], groups, "OOD accuracy", ood, out / "states_vs_ood.svg")
        plotting.state_scatter(states, [r.param_norm for r in records], groups, "parameter norm", norm, out / "states_vs_norm.svg")
    return {"ood": ood, "norm": norm, "report": report}


def category_table(records: list[RunRecord]) -> list[dict]:
    """Counts, proportions and mean ID/OOD accuracy per performance category."""
    rows = []
    total = len(records)
    for name, _, _ in CATEGORIES:
        members = [r for r in records if r.category == name]
        rows.append({
            "category": name,
            "tasks": len(members),
            "proportion": len(members) / total if total else 0.0,
            "mean_id": float(np.mean([r.id_accuracy for r in members])) if members else None,
            "mean_ood": float(np.mean([r.ood_accuracy for r in members])) if members else None,
        })
    rows.append({
        "category": "Overall",
        "tasks": total,
        "proportion": 1.0 if total else 0.0,
        "mean_id": float(np.mean([r.id_accuracy for r in records])) if records else None,
        "mean_ood": float(np.mean([r.ood_accuracy for r in records])) if records else None,
    })
    return rows


def eval_config_keys() -> list[str]:
    return [f.name for f in fields(EvalConfig)]
