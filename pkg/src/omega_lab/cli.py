"""Command-line entry point: ``omega-lab <subcommand>``.

Exit codes: 0 success, 1 runtime failure (e.g. sampler exhaustion), 2 bad
configuration, unreadable automaton or malformed input.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from omega_lab import __version__
from omega_lab.acceptance import DECIDERS, UpWord
from omega_lab.automaton import DBA, classify_sinks, get_fixture
from omega_lab.experiment import (
    EvalConfig,
    category_table,
    correlate_runs,
    dump_json,
    evaluate_range,
    load_run,
    summarize_id_ood,
    train_run,
    write_run,
)
from omega_lab.hoa import HoaError, complete, parse_hoa, validate_dba
from omega_lab.neural import TrainConfig, checkpoint_from_json
from omega_lab.sampling import SamplerConfig, SamplerExhausted, automaton_sha256, read_jsonl, sample_dataset, write_jsonl

log = logging.getLogger("omega_lab")

CONFIG_VERSION = 1
SECTIONS = {"sampler": SamplerConfig, "train": TrainConfig, "eval": EvalConfig}
TOP_LEVEL = ("version", "automaton", "seed", "out")


def version_string() -> str:
    return f"v{__version__}"


class ConfigError(Exception):
    pass


# ----------------------------------------------------------------------------
# automata


def load_automaton(ref: str) -> tuple[str, DBA]:
    """Resolve ``fixture:NAME`` or a path to an .hoa file; returns (id, completed DBA)."""
    if ref.startswith("fixture:"):
        name = ref[len("fixture:"):]
        try:
            return name, get_fixture(name)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    path = Path(ref)
    if not path.is_file():
        raise ConfigError(f"automaton file not found: {ref}")
    text = path.read_text(encoding="utf-8")
    try:
        dba = validate_dba(parse_hoa(text))
    except HoaError as exc:
        raise ConfigError(exc.located(str(path))) from None
    if not dba.name:
        dba = DBA(dba.n_states, dba.initial, dba.delta, dba.accepting, dba.ap_names, name=path.stem)
    return path.stem, complete(dba)


# ----------------------------------------------------------------------------
# configuration


def _section_defaults() -> dict:
    return {name: {f.name: f.default for f in fields(cls) if f.name != "seed"} for name, cls in SECTIONS.items()}


def config_help() -> str:
    lines = ["config file keys (JSON; flags override file values):",
             f"  version    schema version, must be {CONFIG_VERSION}",
             "  automaton  path to an .hoa file or fixture:NAME",
             "  seed       master seed shared by sampler, train and eval streams",
             "  out        output directory"]
    for section, defaults in _section_defaults().items():
        lines.append(f"  {section}:")
        for k, v in defaults.items():
            lines.append(f"    {section}.{k} (default {v})")
    lines.append("override any key with --set section.key=value")
    return "\n".join(lines)


def default_config() -> dict:
    return {"version": CONFIG_VERSION, "automaton": None, "seed": 0, "out": None, **_section_defaults()}


def _coerce(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(path: str | None, overrides: list[str], flags: dict) -> dict:
    cfg = default_config()
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        for key, value in data.items():
            if key in SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                for k, v in value.items():
                    if k not in cfg[key]:
                        raise ConfigError(f"unknown config key {key}.{k}")
                    cfg[key][k] = v
            elif key in TOP_LEVEL:
                cfg[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if cfg["version"] != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {cfg['version']!r}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        if "." in dotted:
            section, key = dotted.split(".", 1)
            if section not in SECTIONS or key not in cfg[section]:
                raise ConfigError(f"unknown config key {dotted}")
            cfg[section][key] = _coerce(raw)
        elif dotted in TOP_LEVEL[1:]:
            cfg[dotted] = _coerce(raw)
        else:
            raise ConfigError(f"unknown config key {dotted}")
    for dotted, value in flags.items():
        if value is None:
            continue
        if "." in dotted:
            section, key = dotted.split(".", 1)
            cfg[section][key] = value
        else:
            cfg[dotted] = value
    return cfg


def snapshot(cfg: dict) -> dict:
    """Config as embedded in artifacts; the output location is not part of a run's identity."""
    return {k: v for k, v in cfg.items() if k != "out"}


def build_sections(cfg: dict) -> tuple[SamplerConfig, TrainConfig, EvalConfig]:
    seed = int(cfg["seed"])
    try:
        return (
            SamplerConfig(**cfg["sampler"], seed=seed),
            TrainConfig(**cfg["train"], seed=seed),
            EvalConfig(**cfg["eval"], seed=seed),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


# ----------------------------------------------------------------------------
# subcommands


def cmd_inspect(args) -> int:
    ident, dba = load_automaton(args.automaton)
    sinks = classify_sinks(dba)
    report = {
        "automaton": ident,
        "states": dba.n_states,
        "propositions": list(dba.ap_names),
        "prop_count": dba.prop_count,
        "alphabet_size": dba.alphabet.size,
        "accepting_states": len(dba.accepting),
        "initial": dba.initial,
        "accepting_sinks": [q for q, c in enumerate(sinks) if c.value == "accepting_sink"],
        "rejecting_sinks": [q for q, c in enumerate(sinks) if c.value == "rejecting_sink"],
        "complete_as_given": not dba.completed,
        "completion_added_trap": dba.completed,
        "sha256": automaton_sha256(dba),
    }
    if args.json:
        print(dump_json(report), end="")
    else:
        for k, v in report.items():
            print(f"{k:>22}: {v}")
    return 0


def cmd_sample(args) -> int:
    cfg = load_config(args.config, args.set, {
        "automaton": args.automaton, "seed": args.seed, "out": args.out,
        "sampler.min_len": args.min_len, "sampler.max_len": args.max_len, "sampler.mode": args.mode,
    })
    if not cfg["automaton"]:
        raise ConfigError("no automaton given")
    ident, dba = load_automaton(cfg["automaton"])
    sampler, _, _ = build_sections(cfg)
    header, batch = sample_dataset(dba, args.count, sampler)
    header.update(automaton=ident, version=version_string(), config=snapshot(cfg), automaton_completed=dba.completed)
    out = Path(cfg["out"] or f"datasets/{ident}_{sampler.seed}.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(out, header, batch.records)
    print(f"wrote {len(batch.records)} records to {out} (positive fraction {batch.positive_fraction:.3f})")
    return 0


def cmd_label(args) -> int:
    _, dba = load_automaton(args.automaton)
    try:
        header, records = read_jsonl(args.dataset)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    sha = header.get("automaton_sha256")
    if sha and sha != automaton_sha256(dba):
        raise ConfigError(f"{args.dataset} was sampled from a different automaton (sha256 mismatch)")
    decide = DECIDERS[args.method]
    out = []
    for rec in records:
        try:
            word = UpWord(rec["u"], rec["v"])
            word.check_symbols(dba)
        except ValueError as exc:
            raise ConfigError(f"{args.dataset}: {exc}") from None
        label = decide(dba, word)
        if args.negate:
            label = not label
        out.append({"u": list(word.u), "v": list(word.v), "label": int(label), "n": len(word.u) + 1 + len(word.v)})
    header = dict(header, labeled_by={"method": args.method, "negate": args.negate, "version": version_string()})
    dest = Path(args.out) if args.out else Path(args.dataset)
    dest.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(dest, header, out)
    print(f"labelled {len(out)} records with {args.method} -> {dest}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set, {
        "automaton": args.automaton, "seed": None, "out": args.out,
        "train.steps": args.steps, "train.hidden": args.hidden, "train.batch": args.batch,
    })
    if not cfg["automaton"]:
        raise ConfigError("no automaton given")
    ident, dba = load_automaton(cfg["automaton"])
    seeds = args.seeds or [cfg["seed"]]
    root = Path(cfg["out"] or "runs")
    for seed in seeds:
        cfg_seed = dict(cfg, seed=int(seed))
        sampler, train, ev = build_sections(cfg_seed)
        record = train_run(dba, train, ev, sampler, automaton_id=ident)
        record.config["run_config"] = snapshot(cfg_seed)
        record.config["version"] = version_string()
        path = write_run(record, root / ident / str(seed), figures=not args.no_figures)
        print(
            f"{ident} seed {seed}: ID {record.id_accuracy:.4f}  OOD {record.ood_accuracy:.4f}  "
            f"{record.category}  |theta| {record.param_norm:.3f}  -> {path}"
        )
    return 0


def cmd_eval(args) -> int:
    try:
        ckpt = json.loads(Path(args.checkpoint).read_text(encoding="utf-8"))
        params, _, train_cfg, _, _ = checkpoint_from_json(ckpt)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load checkpoint {args.checkpoint}: {exc}") from None
    cfg = load_config(args.config, args.set, {"automaton": args.automaton, "seed": args.seed, "out": args.out})
    if not cfg["automaton"]:
        raise ConfigError("no automaton given")
    ident, dba = load_automaton(cfg["automaton"])
    if dba.alphabet.size != params.alphabet_size:
        raise ConfigError("checkpoint alphabet does not match the automaton")
    sampler, _, ev = build_sections(cfg)
    grid = evaluate_range(params, dba, ev, sampler)
    out = Path(cfg["out"] or Path(args.checkpoint).parent)
    out.mkdir(parents=True, exist_ok=True)
    grid.write_csv(out / "eval_grid.csv")
    summary = {"automaton": ident, "version": version_string(), "config": snapshot(cfg), "grid": grid.to_json()}
    if ev.max_len > train_cfg.train_max_len >= ev.min_len:
        id_acc, ood_acc, cat = summarize_id_ood(grid, train_cfg.train_max_len)
        summary.update(id_accuracy=id_acc, ood_accuracy=ood_acc, category=cat)
        print(f"{ident}: ID {id_acc:.4f}  OOD {ood_acc:.4f}  {cat}")
    (out / "eval.json").write_text(dump_json(summary), encoding="utf-8")
    if not args.no_figures:
        from omega_lab import plotting

        plotting.range_curves({ident: grid.to_json()}, out / "eval_range.svg", train_cfg.train_max_len)
    return 0


def _collect_runs(paths) -> list:
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(p.rglob("run.json")))
        elif p.is_file():
            files.append(p)
        else:
            raise ConfigError(f"no such run file or directory: {p}")
    try:
        return [load_run(f) for f in files]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read run record: {exc}") from None


def cmd_correlate(args) -> int:
    records = _collect_runs(args.runs)
    if len(records) < 3:
        raise ConfigError(f"correlation needs at least 3 runs, found {len(records)}")
    res = correlate_runs(records, args.out)
    print(f"states vs OOD accuracy: r = {res['ood'].r:.4f}  p = {res['ood'].p:.4g}  (n = {res['ood'].n})")
    print(f"states vs param norm:   r = {res['norm'].r:.4f}  p = {res['norm'].p:.4g}  (n = {res['norm'].n})")
    return 0


def cmd_report(args) -> int:
    import csv

    from omega_lab import plotting

    records = _collect_runs(args.runs)
    if not records:
        raise ConfigError("no run.json files found")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = category_table(records)
    with open(out / "categories.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    with open(out / "runs.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["automaton", "seed", "n_states", "id_accuracy", "ood_accuracy", "category", "param_norm", "imbalanced"])
        for r in records:
            w.writerow([r.automaton, r.seed, r.n_states, repr(r.id_accuracy), repr(r.ood_accuracy), r.category,
                        repr(r.param_norm), int(bool(r.balance.get("flagged")))])
    names = {f"{r.automaton}/{r.seed}": r for r in records}
    plotting.validation_curves({k: r.history for k, r in names.items()}, out / "validation.svg")
    train_max = records[0].config["train"]["train_max_len"]
    plotting.range_curves({k: r.grid.to_json() for k, r in names.items()}, out / "range.svg", train_max)
    if len(records) >= 3:
        correlate_runs(records, out)
    for row in rows:
        mid = "--" if row["mean_id"] is None else f"{100 * row['mean_id']:.1f}%"
        mood = "--" if row["mean_ood"] is None else f"{100 * row['mean_ood']:.1f}%"
        print(f"{row['category']:>13} {row['tasks']:>4} {100 * row['proportion']:6.1f}% {mid:>7} {mood:>7}")
    print(f"report written to {out}")
    return 0


# ----------------------------------------------------------------------------


def _add_config_flags(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config key")
    p.add_argument("--out", help="output path")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="omega-lab", description=__doc__, formatter_class=fmt)
    parser.add_argument("--version", action="version", version=version_string())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    epilog = config_help()

    p = sub.add_parser("inspect", help="summarize an automaton", formatter_class=fmt)
    p.add_argument("automaton", help="path to .hoa file or fixture:NAME")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("sample", help="sample a u$v dataset (JSONL)", epilog=epilog, formatter_class=fmt)
    _add_config_flags(p)
    p.add_argument("--automaton")
    p.add_argument("--count", type=int, default=1024)
    p.add_argument("--min-len", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--mode", choices=["uniform", "balanced"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("label", help="(re)label a dataset with an exact decider", formatter_class=fmt)
    p.add_argument("dataset")
    p.add_argument("--automaton", required=True)
    p.add_argument("--method", choices=sorted(DECIDERS), default="iterate")
    p.add_argument("--negate", action="store_true", help="flip every label (negated formula)")
    p.add_argument("--out", help="output file (default: rewrite in place)")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train and evaluate one recognizer per seed", epilog=epilog, formatter_class=fmt)
    _add_config_flags(p)
    p.add_argument("--automaton")
    p.add_argument("--seeds", type=int, nargs="+", help="one run per seed (default: config seed)")
    p.add_argument("--steps", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="range-evaluate a checkpoint", epilog=epilog, formatter_class=fmt)
    _add_config_flags(p)
    p.add_argument("checkpoint")
    p.add_argument("--automaton")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("correlate", help="Pearson analysis of state count vs OOD accuracy / norm", formatter_class=fmt)
    p.add_argument("runs", nargs="+", help="run.json files or directories searched recursively")
    p.add_argument("--out", default="reports")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("report", help="category table, curves and scatters for a set of runs", formatter_class=fmt)
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", default="reports")
    p.set_defaults(func=cmd_report)
    return parser


def _thread_limit():
    n = os.environ.get("OMEGA_LAB_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigError as exc:
        print(f"omega-lab: error: {exc}", file=sys.stderr)
        return 2
    except HoaError as exc:
        print(exc.located(getattr(args, "automaton", "<input>")), file=sys.stderr)
        return 2
    except (SamplerExhausted, FloatingPointError) as exc:
        print(f"omega-lab: run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
