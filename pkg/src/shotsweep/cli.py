"""Command-line entry point: ingest, pool, select, run, sweep, cv, report, replay."""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .corpus import (
    BUILTIN_SCHEMES,
    Corpus,
    CorpusError,
    LabelScheme,
    SplitError,
    load_corpus,
    load_scheme,
    make_split,
)
from .evaluation import (
    EvalReport,
    EvaluationError,
    ExperimentConfig,
    run_full,
    run_holdout,
    run_kfold,
)
from .gateway import (
    DEFAULT_PROFILES,
    Client,
    ConstantBackend,
    ContextOverflowError,
    EchoGoldBackend,
    GatewayEmbeddingProvider,
    GatewayError,
    ModelProfile,
    ProtocolError,
    ResponseCache,
    TransportError,
)
from .promptkit import DEFAULT_TEMPLATE, OrderingPolicy, PromptError, load_template
from .reporting import (
    ReportingError,
    atomic_write,
    emit_curve_data,
    emit_table,
    file_digest,
    make_manifest,
    replay,
)
from .selection import SelectionConfig, SelectionError, build_pool, select, selection_report
from .sweep import (
    DEFAULT_GRID,
    DEFAULT_OVERPROMPTING_THRESHOLD,
    SweepError,
    SweepPlan,
    run_sweep,
    sweep_to_json,
)
from .vectorspace import HashEmbeddingProvider, VectorSpaceError, fit_tfidf

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRANSPORT = 4


class ConfigError(Exception):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"no such config file: {file}")
    try:
        payload = json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{file}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{file}: config must be a JSON object")
    return payload


def _merge_config(
    defaults: dict, file_cfg: dict, overrides: dict, allowed: set[str], required: set[str]
) -> dict:
    unknown = set(file_cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    merged = dict(defaults)
    merged.update(file_cfg)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in required if merged.get(k) is None]
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(sorted(missing))}")
    return merged


def _resolve_scheme(name_or_path: str) -> LabelScheme:
    return load_scheme(name_or_path)


def _load_data(cfg: dict) -> Corpus:
    scheme = _resolve_scheme(cfg["scheme"])
    return load_corpus(
        cfg["data"],
        scheme,
        text_col=cfg.get("text_col") or "text",
        label_col=cfg.get("label_col") or "label",
    )


def _build_profiles(cfg: dict) -> dict[str, ModelProfile]:
    profiles = dict(DEFAULT_PROFILES)
    spec = cfg.get("profiles") or {}
    if isinstance(spec, str):
        spec = _load_config_file(spec)
    if not isinstance(spec, dict):
        raise ConfigError("profiles must be an object of {name: fields}")
    for name, fields in spec.items():
        if not isinstance(fields, dict):
            raise ConfigError(f"profile {name!r}: fields must be an object")
        base = profiles.get(name)
        merged = {
            "name": name,
            **({k: getattr(base, k) for k in (
                "kind", "base_url", "context_window", "temperature",
                "max_output_tokens", "rate_limit_per_s", "provider_tag",
                "embedding_dim", "max_attempts", "backoff_base_s", "timeout_s",
                "api_key_env",
            )} if base else {}),
            **fields,
        }
        try:
            profiles[name] = ModelProfile(**merged)
        except TypeError as exc:
            raise ConfigError(f"profile {name!r}: {exc}") from exc
    return profiles


def _register_mocks(
    client: Client, profiles: dict[str, ModelProfile], corpus: Corpus | None
) -> None:
    for profile in profiles.values():
        if not profile.base_url.startswith("mock://"):
            continue
        name = profile.base_url[len("mock://") :].strip("/")
        if name in client.mocks:
            continue
        if name == "echo-gold":
            if corpus is None:
                raise ConfigError("echo-gold mock needs a loaded corpus")
            gold = {
                r.text: corpus.scheme.canonical_name(r.label) for r in corpus.records
            }
            client.register_mock(name, EchoGoldBackend(gold))
        elif name.startswith("constant/"):
            client.register_mock(name, ConstantBackend(name[len("constant/") :]))
        elif name == "unparseable":
            client.register_mock(name, ConstantBackend("I cannot classify this."))
        elif name.startswith("hash"):
            dim = int(name[len("hash") :] or "64")
            client.register_mock(name, HashEmbeddingProvider(dim))
        else:
            raise ConfigError(f"unknown mock backend {name!r}")


def _build_provider(cfg: dict, client: Client, profiles: dict[str, ModelProfile]):
    spec = cfg.get("provider", "hash:64")
    if isinstance(spec, str) and spec.startswith("hash"):
        _, _, dim = spec.partition(":")
        return HashEmbeddingProvider(int(dim or "64"))
    if isinstance(spec, str) and spec.startswith("profile:"):
        name = spec[len("profile:") :]
        if name not in profiles:
            raise ConfigError(f"provider profile {name!r} not found")
        return GatewayEmbeddingProvider(client, profiles[name])
    raise ConfigError(f"unknown provider spec {spec!r} (use hash:<dim> or profile:<name>)")


def _template_from(cfg: dict):
    name = cfg.get("template", "default")
    if name == "default":
        return DEFAULT_TEMPLATE
    return load_template(name)


def _experiment_config(cfg: dict, method: str, k: int) -> ExperimentConfig:
    return ExperimentConfig(
        method=method,
        k=k,
        pool_size=cfg.get("pool_size"),
        pool_seed=int(cfg.get("pool_seed", 0)),
        selection_seed=int(cfg.get("selection_seed", 0)),
        scoring_policy=cfg.get("scoring_policy", "strict"),
        template=_template_from(cfg),
        ordering=OrderingPolicy(cfg.get("ordering", "ascending")),
    )


def _print(args: argparse.Namespace, payload: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


def _class_distribution_text(corpus: Corpus) -> str:
    lines = [f"records: {len(corpus)}  scheme: {corpus.scheme.name}"]
    for lid in corpus.scheme.label_ids:
        name = corpus.scheme.canonical_name(lid)
        lines.append(f"  {lid:<4} {name:<28} {corpus.class_counts[lid]}")
    return "\n".join(lines)


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = {
        "data": args.data,
        "scheme": args.scheme,
        "text_col": args.text_col,
        "label_col": args.label_col,
    }
    corpus = _load_data(cfg)
    payload = {
        "records": len(corpus),
        "scheme": corpus.scheme.name,
        "class_counts": corpus.class_counts,
    }
    _print(args, payload, _class_distribution_text(corpus))
    return EXIT_OK


def cmd_pool(args: argparse.Namespace) -> int:
    cfg = {
        "data": args.data,
        "scheme": args.scheme,
        "text_col": args.text_col,
        "label_col": args.label_col,
    }
    corpus = _load_data(cfg)
    pool = build_pool(
        list(corpus.records), corpus.scheme, args.size, args.seed, source_partition="all"
    )
    counts = {lid: len(ids) for lid, ids in pool.per_class.items()}
    payload = {"size": len(pool), "seed": args.seed, "per_class": counts}
    text = "\n".join(
        [f"pool size: {len(pool)} (seed {args.seed})"]
        + [f"  {lid:<4} {n}" for lid, n in counts.items()]
    )
    _print(args, payload, text)
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    cfg = {
        "data": args.data,
        "scheme": args.scheme,
        "text_col": args.text_col,
        "label_col": args.label_col,
    }
    corpus = _load_data(cfg)
    pool = build_pool(
        list(corpus.records),
        corpus.scheme,
        args.pool_size if args.pool_size is not None else len(corpus),
        args.pool_seed,
        source_partition="all",
    )
    sel_cfg = SelectionConfig(args.method, args.k, args.seed)
    provider = HashEmbeddingProvider(args.hash_dim)
    tfidf = fit_tfidf(pool.candidates) if args.method == "tfidf" and args.k else None
    embeddings = None
    if args.method == "embedding" and args.k:
        from .vectorspace import build_embedding_matrix

        embeddings = build_embedding_matrix(pool.candidates, provider)
    result = select(
        pool, args.query, sel_cfg, tfidf=tfidf, embeddings=embeddings, provider=provider
    )
    summary = selection_report([result], pool)
    chosen = [
        {
            "record_id": rid,
            "similarity": sim,
            "label": pool.record(rid).label,
            "text": pool.record(rid).text,
        }
        for rid, sim in result.chosen
    ]
    payload = {
        "method": result.method,
        "k_requested": result.k_requested,
        "k_delivered": result.k_delivered,
        "chosen": chosen,
        "class_counts": summary.class_counts,
    }
    text_lines = [f"{result.method} selection, k={result.k_delivered}:"]
    for item in chosen:
        sim = "-" if item["similarity"] is None else f"{item['similarity']:.4f}"
        text_lines.append(f"  [{item['label']}] ({sim}) {item['text']}")
    _print(args, payload, "\n".join(text_lines))
    return EXIT_OK


_RUN_KEYS = {
    "data", "scheme", "text_col", "label_col", "model", "method", "k",
    "split", "pool_size", "pool_seed", "selection_seed", "scoring_policy",
    "template", "ordering", "provider", "profiles", "cache_dir", "out_dir",
}


def _run_split_desc(cfg: dict) -> dict:
    split = cfg.get("split") or {"kind": "holdout", "fraction": 0.8, "seed": 0}
    if not isinstance(split, dict) or "kind" not in split:
        raise ConfigError("split must be an object with a 'kind'")
    if split["kind"] not in ("holdout", "full"):
        raise ConfigError(f"run split kind must be holdout or full, got {split['kind']!r}")
    return split


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {
        "data": args.data,
        "scheme": args.scheme,
        "text_col": args.text_col,
        "label_col": args.label_col,
        "model": args.model,
        "method": args.method,
        "k": args.k,
        "out_dir": args.out,
        "cache_dir": args.cache_dir,
    }
    cfg = _merge_config(
        {"scoring_policy": "strict"},
        _load_config_file(args.config),
        overrides,
        _RUN_KEYS,
        {"data", "scheme", "model", "method", "k", "out_dir"},
    )
    started = _now()
    split_spec = _run_split_desc(cfg)
    profiles = _build_profiles(cfg)
    if cfg["model"] not in profiles:
        raise ConfigError(f"model {cfg['model']!r} has no profile")
    if args.dry_run:
        shown = {k: v for k, v in cfg.items() if k != "profiles"}
        _print(args, shown, "\n".join(f"{k}: {v}" for k, v in sorted(shown.items())))
        return EXIT_OK
    corpus = _load_data(cfg)
    client = Client(cache=ResponseCache(cfg.get("cache_dir")))
    _register_mocks(client, profiles, corpus)
    provider = _build_provider(cfg, client, profiles)
    exp = _experiment_config(cfg, cfg["method"], int(cfg["k"]))
    out_dir = Path(cfg["out_dir"])
    trace_path = out_dir / "trace.jsonl"
    artifacts = {"report": "report.json", "trace": "trace.jsonl"}
    if split_spec["kind"] == "holdout":
        split = make_split(
            corpus, "holdout", float(split_spec.get("fraction", 0.8)),
            int(split_spec.get("seed", 0)),
        )
        atomic_write(out_dir / "split.json", split.to_json())
        artifacts["split"] = "split.json"
        report = run_holdout(
            corpus, split, profiles[cfg["model"]], exp, client, provider, trace_path
        )
    else:
        report = run_full(
            corpus, profiles[cfg["model"]], exp, client, provider, trace_path
        )
    atomic_write(out_dir / "report.json", report.to_json())
    manifest_cfg = {k: v for k, v in cfg.items() if k not in ("out_dir", "cache_dir")}
    manifest_cfg["dataset_sha256"] = file_digest(cfg["data"])
    manifest = make_manifest(
        manifest_cfg,
        artifacts,
        __version__,
        started,
        _now(),
    )
    atomic_write(out_dir / "manifest.json", manifest.to_json())
    payload = {
        "weighted_f1": report.weighted_f1,
        "macro_f1": report.macro_f1,
        "n_predictions": report.n_predictions,
        "out_dir": str(out_dir),
    }
    _print(
        args,
        payload,
        f"weighted F1 {report.weighted_f1:.4f}  macro F1 {report.macro_f1:.4f}  "
        f"({report.n_predictions} predictions) -> {out_dir}",
    )
    return EXIT_OK


_SWEEP_KEYS = {
    "data", "scheme", "text_col", "label_col", "models", "methods", "grid",
    "split", "pool_size", "pool_seed", "selection_seed", "scoring_policy",
    "template", "ordering", "provider", "profiles", "cache_dir", "out_dir",
    "overprompting_threshold",
}


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _merge_config(
        {
            "methods": ["random", "embedding", "tfidf"],
            "grid": list(DEFAULT_GRID),
            "scoring_policy": "strict",
            "overprompting_threshold": DEFAULT_OVERPROMPTING_THRESHOLD,
        },
        _load_config_file(args.config),
        {"out_dir": args.out, "cache_dir": args.cache_dir},
        _SWEEP_KEYS,
        {"data", "scheme", "models", "out_dir"},
    )
    split_spec = _run_split_desc(cfg)
    plan = SweepPlan(
        models=tuple(cfg["models"]),
        methods=tuple(cfg["methods"]),
        shot_grid=tuple(int(k) for k in cfg["grid"]),
        split_kind=split_spec["kind"],
        split_param=float(split_spec.get("fraction", 0.8)),
        split_seed=int(split_spec.get("seed", 0)),
        pool_size=cfg.get("pool_size"),
        pool_seed=int(cfg.get("pool_seed", 0)),
        selection_seed=int(cfg.get("selection_seed", 0)),
        scoring_policy=cfg["scoring_policy"],
        overprompting_threshold=float(cfg["overprompting_threshold"]),
    )
    if args.dry_run:
        cells = plan.cells()
        if getattr(args, "json", False):
            print(json.dumps({"n_cells": plan.n_cells, "cells": [list(c) for c in cells]}))
        else:
            for model, method, k in cells:
                print(f"{model}  {method}  k={k}")
            print(f"{plan.n_cells} cells")
        return EXIT_OK
    started = _now()
    corpus = _load_data(cfg)
    profiles = _build_profiles(cfg)
    client = Client(cache=ResponseCache(cfg.get("cache_dir")))
    _register_mocks(client, profiles, corpus)
    provider = _build_provider(cfg, client, profiles)
    run = run_sweep(
        plan, corpus, profiles, client, provider,
        template=_template_from(cfg),
        ordering=OrderingPolicy(cfg.get("ordering", "ascending")),
    )
    out_dir = Path(cfg["out_dir"])
    data = emit_curve_data(run.curves)
    atomic_write(out_dir / "curves.json", data.json_text)
    atomic_write(out_dir / "curves.csv", data.csv_text)
    atomic_write(out_dir / "sweep.json", sweep_to_json(run))
    artifacts = {
        "curves_json": "curves.json",
        "curves_csv": "curves.csv",
        "sweep": "sweep.json",
    }
    for (model, method, k), report in sorted(run.reports.items()):
        rel = f"cells/{model}__{method}__k{k}.json"
        atomic_write(out_dir / rel, report.to_json())
        artifacts[f"cell:{model}:{method}:{k}"] = rel
    manifest_cfg = {k: v for k, v in cfg.items() if k not in ("out_dir", "cache_dir")}
    manifest_cfg["dataset_sha256"] = file_digest(cfg["data"])
    manifest = make_manifest(manifest_cfg, artifacts, __version__, started, _now())
    atomic_write(out_dir / "manifest.json", manifest.to_json())
    payload = {
        "n_cells": plan.n_cells,
        "n_completed": len(run.reports),
        "n_failed": len(run.failures),
        "out_dir": str(out_dir),
    }
    text = (
        f"sweep: {len(run.reports)}/{plan.n_cells} cells completed"
        + (f", {len(run.failures)} failed" if run.failures else "")
        + f" -> {out_dir}"
    )
    for failure in run.failures:
        text += f"\n  FAILED {failure.model} {failure.method} k={failure.shot_count}: {failure.error}"
    _print(args, payload, text)
    return EXIT_PARTIAL if run.failures else EXIT_OK


_CV_KEYS = {
    "data", "scheme", "text_col", "label_col", "model", "method", "k",
    "k_folds", "split_seed", "pool_size", "pool_seed", "selection_seed",
    "scoring_policy", "template", "ordering", "provider", "profiles",
    "cache_dir", "out_dir", "on_small_class",
}


def _shots_from_manifest(path: str, model: str, method: str) -> int:
    manifest_path = Path(path)
    base = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        curves_rel = manifest["artifacts"]["curves_json"]
        curves = json.loads((base / curves_rel).read_text(encoding="utf-8"))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep manifest {path}: {exc}") from exc
    for series in curves["series"]:
        if series["model"] == model and series["method"] == method:
            return int(series["optimal_shots"])
    raise ConfigError(f"no curve for ({model}, {method}) in {path}")


def cmd_cv(args: argparse.Namespace) -> int:
    overrides = {
        "data": args.data,
        "scheme": args.scheme,
        "text_col": args.text_col,
        "label_col": args.label_col,
        "model": args.model,
        "method": args.method,
        "k": args.shots,
        "k_folds": args.folds,
        "out_dir": args.out,
        "cache_dir": args.cache_dir,
    }
    cfg = _merge_config(
        {"scoring_policy": "strict", "k_folds": 10},
        _load_config_file(args.config),
        overrides,
        _CV_KEYS,
        {"data", "scheme", "model", "method", "out_dir"},
    )
    if args.shots_from is not None:
        cfg["k"] = _shots_from_manifest(args.shots_from, cfg["model"], cfg["method"])
    if cfg.get("k") is None:
        raise ConfigError("cv needs a shot count: --shots N or --shots-from MANIFEST")
    k_folds = int(cfg["k_folds"])
    if k_folds < 2:
        raise ConfigError(f"k_folds must be >= 2, got {k_folds}")
    started = _now()
    profiles = _build_profiles(cfg)
    if cfg["model"] not in profiles:
        raise ConfigError(f"model {cfg['model']!r} has no profile")
    if args.dry_run:
        shown = {k: v for k, v in cfg.items() if k != "profiles"}
        _print(args, shown, "\n".join(f"{k}: {v}" for k, v in sorted(shown.items())))
        return EXIT_OK
    corpus = _load_data(cfg)
    client = Client(cache=ResponseCache(cfg.get("cache_dir")))
    _register_mocks(client, profiles, corpus)
    provider = _build_provider(cfg, client, profiles)
    exp = _experiment_config(cfg, cfg["method"], int(cfg["k"]))
    out_dir = Path(cfg["out_dir"])
    result = run_kfold(
        corpus, k_folds, profiles[cfg["model"]], exp, client,
        split_seed=int(cfg.get("split_seed", 0)),
        provider=provider,
        trace_path=out_dir / "trace.jsonl",
        on_small_class=cfg.get("on_small_class", "error"),
    )
    atomic_write(out_dir / "aggregate.json", result.aggregate.to_json())
    split = make_split(
        corpus, "kfold", k_folds, int(cfg.get("split_seed", 0)),
        cfg.get("on_small_class", "error"),
    )
    atomic_write(out_dir / "split.json", split.to_json())
    for i, fold_report in enumerate(result.per_fold):
        atomic_write(out_dir / f"folds/fold{i:02d}.json", fold_report.to_json())
    layout = "binary" if corpus.scheme.task_kind == "binary" else "multiclass"
    table = emit_table([result.aggregate], layout)
    atomic_write(out_dir / "table.txt", table.text)
    atomic_write(out_dir / "table.csv", table.csv_text)
    manifest_cfg = {key: v for key, v in cfg.items() if key not in ("out_dir", "cache_dir")}
    manifest_cfg["dataset_sha256"] = file_digest(cfg["data"])
    artifacts = {
        "aggregate": "aggregate.json",
        "split": "split.json",
        "table_txt": "table.txt",
        "table_csv": "table.csv",
        "trace": "trace.jsonl",
        **{f"fold:{i}": f"folds/fold{i:02d}.json" for i in range(k_folds)},
    }
    manifest = make_manifest(manifest_cfg, artifacts, __version__, started, _now())
    atomic_write(out_dir / "manifest.json", manifest.to_json())
    payload = {
        "weighted_f1": result.aggregate.weighted_f1,
        "macro_f1": result.aggregate.macro_f1,
        "folds": k_folds,
        "out_dir": str(out_dir),
    }
    _print(
        args,
        payload,
        f"{k_folds}-fold aggregate: weighted F1 {result.aggregate.weighted_f1:.4f}  "
        f"macro F1 {result.aggregate.macro_f1:.4f} -> {out_dir}",
    )
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for path in args.reports:
        file = Path(path)
        if not file.exists():
            raise ReportingError(f"no such report: {file}")
        reports.append(EvalReport.from_dict(json.loads(file.read_text(encoding="utf-8"))))
    table = emit_table(reports, args.layout)
    if args.out_base:
        atomic_write(args.out_base + ".txt", table.text)
        atomic_write(args.out_base + ".csv", table.csv_text)
    if getattr(args, "json", False):
        print(json.dumps({"rows": len(reports)}))
    else:
        print(table.text, end="")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    scheme = _resolve_scheme(args.scheme)
    report = replay(args.trace, scheme, args.policy)
    if args.out:
        atomic_write(args.out, report.to_json())
    payload = {
        "weighted_f1": report.weighted_f1,
        "macro_f1": report.macro_f1,
        "n_predictions": report.n_predictions,
        "scoring_policy": report.metadata.get("scoring_policy"),
    }
    _print(
        args,
        payload,
        f"replayed {report.n_predictions} predictions: weighted F1 "
        f"{report.weighted_f1:.4f}  macro F1 {report.macro_f1:.4f}",
    )
    return EXIT_OK


def _add_data_args(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--data", required=required, help="labeled CSV path")
    parser.add_argument(
        "--scheme",
        required=required,
        help=f"label scheme: built-in ({', '.join(sorted(BUILTIN_SCHEMES))}) or JSON file",
    )
    parser.add_argument("--text-col", default=None, help="CSV text column (default: text)")
    parser.add_argument("--label-col", default=None, help="CSV label column (default: label)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shotsweep",
        description="Few-shot prompting harness for text classification.",
    )
    parser.add_argument("--version", action="version", version=f"shotsweep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a corpus and print its class distribution")
    _add_data_args(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("pool", help="build a stratified few-shot pool and show counts")
    _add_data_args(p)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_pool)

    p = sub.add_parser("select", help="select examples for one query")
    _add_data_args(p)
    p.add_argument("--method", choices=("random", "embedding", "tfidf"), required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool-size", type=int, default=None)
    p.add_argument("--pool-seed", type=int, default=0)
    p.add_argument("--hash-dim", type=int, default=64)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_select)

    p = sub.add_parser("run", help="single evaluation run (holdout or full corpus)")
    p.add_argument("--config", default=None, help="JSON run config")
    _add_data_args(p, required=False)
    p.add_argument("--model", default=None)
    p.add_argument("--method", choices=("random", "embedding", "tfidf"), default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out", default=None, help="artifact directory")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="run a (models x methods x shot grid) sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--dry-run", action="store_true", help="print the cell matrix only")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("cv", help="k-fold cross-validation at a fixed shot count")
    p.add_argument("--config", default=None)
    _add_data_args(p, required=False)
    p.add_argument("--model", default=None)
    p.add_argument("--method", choices=("random", "embedding", "tfidf"), default=None)
    p.add_argument("--shots", type=int, default=None)
    p.add_argument(
        "--shots-from",
        default=None,
        help="sweep manifest; use that sweep's optimal shot count for this model/method",
    )
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_cv)

    p = sub.add_parser("report", help="format stored reports as tables")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--layout", choices=("binary", "multiclass"), required=True)
    p.add_argument("--out-base", default=None, help="write <base>.txt and <base>.csv")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("replay", help="re-score a trace without calling any model")
    p.add_argument("--trace", required=True)
    p.add_argument("--scheme", required=True)
    p.add_argument("--policy", choices=("strict", "first_match"), default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, SweepError, EvaluationError, SelectionError, PromptError,
            VectorSpaceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, SplitError, ReportingError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TransportError, ProtocolError, ContextOverflowError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except GatewayError as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
