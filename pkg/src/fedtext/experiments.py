"""Experiment orchestration shared by the CLI subcommands.

Builds corpora from files or the synthetic generator, runs the configured
training scheme over repeated seeds, and writes deterministic metric files
(JSON/CSV/JSONL) plus a manifest.  Wall-clock numbers only ever land in the
manifest, so rerunning an identical config reproduces the metric files byte
for byte.
"""
from __future__ import annotations

import json
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import corpus as corpuslib
from . import evaluation, federation, llm_bridge, tasks
from .config import (
    DEFAULT_MU_GRID,
    ConfigError,
    ExperimentConfig,
    RunManifest,
    config_hash,
)
from .evaluation import EvalReport, aggregate_repeats, format_cell
from .federation import FederationConfig, RunResult

PACKAGE_VERSION = "0.1.0"


# ---------------------------------------------------------------------------
# data assembly

@dataclass
class DataBundle:
    """Per-source splits plus the pooled view used by most schemes."""

    source_names: list[str]
    source_trains: list[list]
    train: list
    dev: list
    test: list


def _split_source(items: Sequence, seed: int) -> corpuslib.CorpusSplit:
    return corpuslib.split_80_10_10(corpuslib.dedup(items), seed)


def build_data(cfg: ExperimentConfig) -> DataBundle:
    d = cfg.data
    if cfg.task == "re":
        if d.synthetic:
            n = d.sentences[0] if len(d.sentences) == 1 else sum(d.sentences)
            sources = [("synthetic", corpuslib.generate_synthetic_relations(d.lexicon_size, n, d.data_seed))]
        else:
            sources = [
                (Path(p).name, corpuslib.parse_relations(Path(p).read_text(encoding="utf-8")))
                for p in d.files
            ]
    elif d.synthetic:
        counts = d.sentences if len(d.sentences) == d.sources else d.sentences * d.sources
        profile = corpuslib.make_profile(
            types=d.types,
            lexicon_size=d.lexicon_size,
            sentences=counts,
            sources=d.sources,
            heterogeneity=d.heterogeneity,
            cue_rate=d.cue_rate,
        )
        sources = corpuslib.generate_synthetic(profile, d.data_seed)
    else:
        sources = [
            (Path(p).name, corpuslib.parse_conll(Path(p).read_text(encoding="utf-8")))
            for p in d.files
        ]

    names, trains, dev, test = [], [], [], []
    for i, (name, items) in enumerate(sources):
        split = _split_source(items, d.data_seed + i)
        names.append(name)
        trains.append(split.train)
        dev.extend(split.dev)
        test.extend(split.test)
    pooled_train = [item for part in trains for item in part]
    return DataBundle(names, trains, pooled_train, dev, test)


def build_task(cfg: ExperimentConfig, train: Sequence) -> tasks.Task:
    m = cfg.model
    if cfg.task == "re":
        return tasks.build_re_task(
            train, embed_dim=m.embed_dim, hidden_dim=m.hidden_dim, max_tokens=cfg.data.max_tokens
        )
    return tasks.build_ner_task(
        train,
        kind=m.kind,
        embed_dim=m.embed_dim,
        hidden_dim=m.hidden_dim,
        window_radius=m.window_radius,
        max_tokens=cfg.data.max_tokens,
    )


def make_fed_config(cfg: ExperimentConfig, task: tasks.Task, seed: int, clients: int, mu: float) -> FederationConfig:
    f = cfg.federation
    return FederationConfig(
        spec=task.spec,
        clients=clients,
        rounds=f.rounds,
        batch_size=f.batch_size,
        local_epochs=f.local_epochs,
        mu=mu,
        optimizer=f.optimizer,
        base_lr=f.base_lr,
        warmup_frac=f.warmup_frac,
        seed=seed,
    )


def partition_train(cfg: ExperimentConfig, bundle: DataBundle, task: tasks.Task, n_clients: int):
    if cfg.data.partition == "by_source":
        named = [
            (name, task.prepare(train))
            for name, train in zip(bundle.source_names, bundle.source_trains)
        ]
        return corpuslib.partition_by_source(named).clients
    pooled = task.prepare(bundle.train)
    return corpuslib.partition_iid(pooled, n_clients, cfg.data.data_seed).clients


@dataclass
class SchemeOutcome:
    task: tasks.Task
    report: EvalReport
    headline: dict[str, float]
    results: list[RunResult]
    client_reports: list[EvalReport] | None = None


def run_scheme(cfg: ExperimentConfig, bundle: DataBundle, seed: int) -> SchemeOutcome:
    task = build_task(cfg, bundle.train)
    dev = task.prepare(bundle.dev)
    test = task.prepare(bundle.test)

    if cfg.scheme == "centralized":
        fed = make_fed_config(cfg, task, seed, clients=1, mu=0.0)
        result = federation.run_centralized(task, fed, task.prepare(bundle.train), dev)
        report = task.evaluate(result.best_weights, test)
        return SchemeOutcome(task, report, _headline(cfg, report), [result])

    if cfg.scheme == "single":
        parts = partition_train(cfg, bundle, task, cfg.federation.clients)
        fed = make_fed_config(cfg, task, seed, clients=1, mu=0.0)
        results = federation.run_single_client(task, fed, parts, dev)
        reports = [task.evaluate(r.best_weights, test) for r in results]
        mean_report = _mean_reports(cfg, reports)
        return SchemeOutcome(task, mean_report[0], mean_report[1], results, client_reports=reports)

    mu = cfg.federation.mu if cfg.scheme == "fedprox" else 0.0
    parts = partition_train(cfg, bundle, task, cfg.federation.clients)
    fed = make_fed_config(cfg, task, seed, clients=len(parts), mu=mu)
    result = federation.run_federated(task, fed, parts, dev)
    report = task.evaluate(result.best_weights, test)
    return SchemeOutcome(task, report, _headline(cfg, report), [result])


def _headline(cfg: ExperimentConfig, report: EvalReport) -> dict[str, float]:
    if cfg.task == "ner":
        return {"lenient_f1": report.lenient_macro_f1, "strict_f1": report.strict_macro_f1}
    return {"macro_f1": report.strict_macro_f1}


def _mean_reports(cfg: ExperimentConfig, reports: list[EvalReport]) -> tuple[EvalReport, dict[str, float]]:
    """Average the per-client macro numbers; per-type detail keeps client 0's
    report as a representative (full per-client reports are written anyway)."""
    strict = statistics.fmean(r.strict_macro_f1 for r in reports)
    lenient = statistics.fmean(r.lenient_macro_f1 for r in reports)
    rep = EvalReport(
        strict=reports[0].strict,
        lenient=reports[0].lenient,
        strict_macro_f1=strict,
        lenient_macro_f1=lenient,
    )
    if cfg.task == "ner":
        headline = {"lenient_f1": lenient, "strict_f1": strict}
    else:
        headline = {"macro_f1": strict}
    return rep, headline


# ---------------------------------------------------------------------------
# cmd-run

def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_rounds_log(path: Path, results: list[RunResult]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for i, result in enumerate(results):
            for record in result.round_log:
                fh.write(json.dumps({"run": i, **record}, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> Path:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = build_data(cfg)

    seeds = [cfg.base_seed + i for i in range(cfg.repeats)]
    repeat_files: list[str] = []
    wall_times: list[float] = []
    per_metric: dict[str, list[float]] = {}

    for i, seed in enumerate(seeds):
        t0 = time.perf_counter()
        outcome = run_scheme(cfg, bundle, seed)
        wall_times.append(time.perf_counter() - t0)

        rep_dir = out / f"repeat_{i}"
        rep_dir.mkdir(exist_ok=True)
        _write_json(rep_dir / "report.json", {"seed": seed, **outcome.report.as_dict()})
        (rep_dir / "report.csv").write_text(
            evaluation.report_to_csv(outcome.report), encoding="utf-8"
        )
        (rep_dir / "table.txt").write_text(
            evaluation.format_report_table(outcome.report), encoding="utf-8"
        )
        _write_rounds_log(rep_dir / "rounds.jsonl", outcome.results)
        if outcome.client_reports is not None:
            for k, rep in enumerate(outcome.client_reports):
                _write_json(rep_dir / f"client_{k}_report.json", rep.as_dict())
        if cfg.scheme != "single":
            tasks.save_bundle(rep_dir / "weights.npz", outcome.task, outcome.results[0].best_weights)
        repeat_files.append(str(rep_dir / "report.json"))
        for key, value in outcome.headline.items():
            per_metric.setdefault(key, []).append(value)

    summary: dict[str, dict[str, float | list[float]]] = {}
    for key, values in sorted(per_metric.items()):
        if len(values) >= 2:
            mean, std = aggregate_repeats(values)
        else:
            mean, std = values[0], 0.0
        summary[key] = {"mean": mean, "std": std, "values": values}
    _write_json(out / "summary.json", {"scheme": cfg.scheme, "task": cfg.task, "metrics": summary})

    manifest = RunManifest(
        config_hash=config_hash(cfg),
        seeds=seeds,
        package_version=PACKAGE_VERSION,
        scheme=cfg.scheme,
        task=cfg.task,
        repeat_files=repeat_files,
        summary_file=str(out / "summary.json"),
        wall_times=wall_times,
    )
    manifest.save(out / "manifest.json")
    return out


# ---------------------------------------------------------------------------
# sweeps

def sweep_clients(cfg: ExperimentConfig, client_counts: Sequence[int], out_path: str | Path) -> Path:
    """Scale sweep at fixed total data; one CSV row per requested K."""
    for k in client_counts:
        if k < 2:
            raise ConfigError(f"sweep-clients needs K >= 2, got {k} (K = 1 is the centralized scheme)")
    bundle = build_data(cfg)
    task = build_task(cfg, bundle.train)
    train = task.prepare(bundle.train)
    dev = task.prepare(bundle.dev)
    test = task.prepare(bundle.test)
    rows = ["clients,repeats,lenient_mean,lenient_std,strict_mean,strict_std,error"]
    for k in client_counts:
        lenient: list[float] = []
        strict: list[float] = []
        error = ""
        try:
            parts = corpuslib.partition_iid(train, k, cfg.data.data_seed)
        except ValueError as exc:
            error = str(exc)
        else:
            for i in range(cfg.repeats):
                seed = cfg.base_seed + i
                mu = cfg.federation.mu if cfg.scheme == "fedprox" else 0.0
                fed = make_fed_config(cfg, task, seed, clients=k, mu=mu)
                result = federation.run_federated(task, fed, parts.clients, dev)
                report = task.evaluate(result.best_weights, test)
                lenient.append(report.lenient_macro_f1)
                strict.append(report.strict_macro_f1)
        if error:
            rows.append(f"{k},0,,,,,{json.dumps(error)}")
            continue
        lm, ls = _mean_std(lenient)
        sm, ss = _mean_std(strict)
        rows.append(f"{k},{len(lenient)},{lm:.6f},{ls:.6f},{sm:.6f},{ss:.6f},")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return out


def sweep_mu(cfg: ExperimentConfig, mus: Sequence[float] | None, out_path: str | Path) -> Path:
    """Proximal-strength sweep; mu = 0 rows are labeled as plain FedAvg."""
    grid = list(DEFAULT_MU_GRID) if mus is None else list(mus)
    seen: set[float] = set()
    deduped: list[float] = []
    for mu in grid:
        if mu < 0:
            raise ConfigError(f"mu must be >= 0, got {mu}")
        if mu in seen:
            print(f"warning: duplicate mu {mu} dropped", file=sys.stderr)
            continue
        seen.add(mu)
        deduped.append(mu)

    bundle = build_data(cfg)
    task = build_task(cfg, bundle.train)
    parts = partition_train(cfg, bundle, task, cfg.federation.clients)
    dev = task.prepare(bundle.dev)
    test = task.prepare(bundle.test)
    rows = ["mu,label,repeats,lenient_mean,lenient_std,strict_mean,strict_std"]
    for mu in deduped:
        lenient: list[float] = []
        strict: list[float] = []
        for i in range(cfg.repeats):
            seed = cfg.base_seed + i
            fed = make_fed_config(cfg, task, seed, clients=len(parts), mu=mu)
            result = federation.run_federated(task, fed, parts, dev)
            report = task.evaluate(result.best_weights, test)
            lenient.append(report.lenient_macro_f1)
            strict.append(report.strict_macro_f1)
        label = "fedavg-equivalent" if mu == 0 else "fedprox"
        lm, ls = _mean_std(lenient)
        sm, ss = _mean_std(strict)
        rows.append(f"{mu},{label},{len(lenient)},{lm:.6f},{ls:.6f},{sm:.6f},{ss:.6f}")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return out


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if len(values) >= 2:
        return aggregate_repeats(values)
    return (values[0], 0.0) if values else (float("nan"), float("nan"))


# ---------------------------------------------------------------------------
# report rendering

def render_report(run_dirs: Sequence[str | Path]) -> str:
    """Summary table across run directories; cells are lenient (strict)."""
    lines = []
    problems = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        manifest_path = run_dir / "manifest.json"
        if not manifest_path.exists():
            problems.append(f"{run_dir}: no manifest.json")
            continue
        manifest = RunManifest.load(manifest_path)
        missing = [f for f in manifest.repeat_files if not Path(f).exists()]
        for f in missing:
            problems.append(f"{run_dir}: missing repeat file {f}")

        summary = json.loads(Path(manifest.summary_file).read_text())
        metrics = summary["metrics"]
        # cross-check the stored summary against the surviving repeat files
        check_values: dict[str, list[float]] = {}
        for f in manifest.repeat_files:
            if not Path(f).exists():
                continue
            rep = json.loads(Path(f).read_text())
            if manifest.task == "ner":
                check_values.setdefault("lenient_f1", []).append(rep["lenient_macro_f1"])
                check_values.setdefault("strict_f1", []).append(rep["strict_macro_f1"])
            else:
                check_values.setdefault("macro_f1", []).append(rep["strict_macro_f1"])
        for key, stored in metrics.items():
            values = check_values.get(key, [])
            if len(values) == len(stored["values"]):
                mean, std = _mean_std(values)
                if abs(mean - stored["mean"]) > 1e-9 or abs(std - stored["std"]) > 1e-9:
                    problems.append(f"{run_dir}: summary does not match repeat files for {key}")

        if manifest.task == "ner":
            if missing:
                cell = "incomplete"
            else:
                cell = format_cell(
                    metrics["lenient_f1"]["mean"], metrics["lenient_f1"]["std"],
                    metrics["strict_f1"]["mean"], metrics["strict_f1"]["std"],
                )
        else:
            m = metrics["macro_f1"]
            cell = "incomplete" if missing else f"{m['mean']:.3f}±{m['std']:.3f}"
        lines.append((f"{manifest.task}/{manifest.scheme}", cell))

    width = max((len(name) for name, _ in lines), default=0)
    body = "\n".join(f"{name.ljust(width)}  {cell}" for name, cell in lines)
    if problems:
        body += "\n" + "\n".join(f"! {p}" for p in problems)
    return body + "\n"


# ---------------------------------------------------------------------------
# inference benchmark

def bench_inference(bundle_path: str | Path, data_path: str | Path, limit: int | None = None) -> dict:
    """Timed single-instance prediction loop with a short warmup."""
    task, weights = tasks.load_bundle(bundle_path)
    text = Path(data_path).read_text(encoding="utf-8")
    if task.kind == "ner":
        items = task.prepare(corpuslib.parse_conll(text))
    else:
        items = task.prepare(corpuslib.parse_relations(text))
    if limit is not None:
        items = items[:limit]
    if not items:
        raise ValueError("no instances to benchmark")

    def predict(item) -> None:
        if task.kind == "ner":
            task.predict_spans(weights, item)
        else:
            task.predict_label(weights, item)

    for item in items[: min(20, len(items))]:
        predict(item)
    t0 = time.perf_counter()
    for item in items:
        predict(item)
    total = time.perf_counter() - t0
    return {
        "instances": len(items),
        "total_seconds": total,
        "seconds_per_instance": total / len(items),
        "instances_per_second": len(items) / total if total > 0 else float("inf"),
    }


# ---------------------------------------------------------------------------
# llm bridge plumbing

def _llm_subset(cfg: ExperimentConfig, n: int, seed: int):
    bundle = build_data(cfg)
    task = build_task(cfg, bundle.train)
    return task, llm_bridge.sample_test_subset(task.prepare(bundle.test), n, seed)


def emit_prompts(
    cfg: ExperimentConfig, spec: llm_bridge.PromptSpec, n: int, seed: int, out_path: str | Path
) -> Path:
    task, subset = _llm_subset(cfg, n, seed)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for i, item in enumerate(subset):
            if task.kind == "ner":
                text = " ".join(item.sentence.tokens)
            else:
                inst = item.instance
                m1 = " ".join(inst.tokens[inst.span1[0] : inst.span1[1] + 1])
                m2 = " ".join(inst.tokens[inst.span2[0] : inst.span2[1] + 1])
                text = f"{' '.join(inst.tokens)}\nEntity 1: {m1}\nEntity 2: {m2}"
            fh.write(
                json.dumps({"id": i, "prompt": llm_bridge.build_prompt(spec, text)}, sort_keys=True)
                + "\n"
            )
    return out


def score_llm(
    cfg: ExperimentConfig,
    responses_path: str | Path,
    entity_label: str,
    tag: str,
    n: int,
    seed: int,
    out_dir: str | Path,
    casefold: bool = False,
) -> Path:
    task, subset = _llm_subset(cfg, n, seed)
    records = llm_bridge.read_responses(Path(responses_path).read_text(encoding="utf-8"))
    if task.kind == "ner":
        score = llm_bridge.score_ner_responses(subset, records, entity_label, tag, casefold=casefold)
    else:
        score = llm_bridge.score_re_responses(subset, records, task.label_names)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "llm_report.json", score.report.as_dict())
    (out / "llm_report.csv").write_text(evaluation.report_to_csv(score.report), encoding="utf-8")
    _write_json(out / "llm_diagnostics.json", score.diagnostics.__dict__)
    return out
