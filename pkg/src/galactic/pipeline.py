"""Stage orchestration: train, segment, local and global explanation, evaluation.

Every stage reads its inputs from the configured dataset and output
directory and writes canonical JSON (sorted keys, cluster/instance order).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dataset import Corpus, corpus_summary, load_ucr, split
from .errors import ArtifactError, ConfigError, EmptyCorpusError, PreconditionError
from .globalcf.candidates import generate_candidates
from .globalcf.mdl import SummarySet, problem_from_pool
from .globalcf.selection import select_greedy, select_hierarchical, select_optimal
from .importance import ImportanceIndex
from .local import galactic_l
from .metrics import CSV_COLUMNS, EvalReport, evaluate_global, evaluate_local, gain_loss
from .structure import SubgroupModel, build_subgroups
from .surrogate import SurrogateModel, accuracy, train

THREADS_ENV = "GALACTIC_THREADS"
TIMING_KEYS = frozenset({"runtime_ms", "runtime_s", "RT", "stage_runtime_ms"})

MODEL_FILE = "model.json"
TRAIN_REPORT = "train_report.json"
SUBGROUPS_FILE = "subgroups.json"
LOCAL_REPORT = "local_report.json"
GLOBAL_REPORT = "global_report.json"
COMPARISON_FILE = "comparison.csv"


def n_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer", value=raw) from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer", value=raw)
    return n


def _pmap(fn, items):
    """Ordered parallel map; results keep the order of ``items``."""
    items = list(items)
    workers = min(n_threads(), max(1, len(items)))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def strip_timing(obj):
    """Drop runtime fields recursively so reports can be compared byte for byte."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def dumps(obj, strip: bool = False) -> str:
    if strip:
        obj = strip_timing(obj)
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj, strip: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj, strip))
    return path


def read_json(path, what: str = "artifact") -> dict:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing {what}", path=str(path))
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{what} is not valid JSON: {exc.msg}", path=str(path)) from exc


def out_path(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.out_dir) / name


def load_corpus(cfg: RunConfig) -> Corpus:
    if not cfg.dataset.path:
        raise ConfigError("dataset.path is required")
    return load_ucr(cfg.dataset.path, normalize=cfg.dataset.normalize)


def load_model(cfg: RunConfig, T: int | None = None) -> SurrogateModel:
    path = out_path(cfg, MODEL_FILE)
    if not path.exists():
        raise ArtifactError("missing surrogate model; run 'train' first", path=str(path))
    try:
        model = SurrogateModel.load(path)
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"unreadable surrogate model: {exc}", path=str(path)) from exc
    if T is not None and model.T != T:
        raise ArtifactError("surrogate input length does not match the dataset",
                            model_T=model.T, data_T=T)
    return model


def cmd_train(cfg: RunConfig, strip: bool = False) -> dict:
    t0 = time.perf_counter()
    corpus = load_corpus(cfg)
    tr, te = split(corpus, cfg.dataset.train_frac, cfg.seed)
    model = train(tr, cfg.surrogate)
    path = out_path(cfg, MODEL_FILE)
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    report = {
        "dataset": corpus_summary(corpus, tr.N, te.N),
        "train_accuracy": accuracy(model, tr),
        "test_accuracy": accuracy(model, te) if te.N else None,
        "full_accuracy": accuracy(model, corpus),
        "final_loss": model.meta.get("final_loss"),
        "epochs": cfg.surrogate.epochs,
        "warnings": list(tr.warnings),
        "runtime_ms": (time.perf_counter() - t0) * 1000.0,
    }
    write_json(out_path(cfg, TRAIN_REPORT), report, strip)
    return report


@dataclass
class Context:
    """Everything the explanation stages share, built once per run."""

    cfg: RunConfig
    corpus: Corpus
    train: Corpus
    model: SurrogateModel
    correct: dict[int, np.ndarray]
    subgroups: dict[int, SubgroupModel]
    index: ImportanceIndex
    X_by_id: dict[int, np.ndarray]
    stage_ms: dict[str, float]


def correct_members(corpus: Corpus, model: SurrogateModel) -> dict[int, np.ndarray]:
    """Instance ids per cluster that the surrogate assigns to their own cluster."""
    pred = model.predict(corpus.X) if corpus.N else np.zeros(0, dtype=int)
    return {k: corpus.ids[(corpus.labels == k) & (pred == k)] for k in range(corpus.K)}


def build_context(cfg: RunConfig) -> Context:
    corpus = load_corpus(cfg)
    tr, _ = split(corpus, cfg.dataset.train_frac, cfg.seed)
    model = load_model(cfg, corpus.T)
    if model.K != corpus.K:
        raise ArtifactError("surrogate cluster count does not match the dataset",
                            model_K=model.K, data_K=corpus.K)
    X_by_id = {int(i): x for i, x in zip(corpus.ids, corpus.X)}
    correct = correct_members(corpus, model)

    t0 = time.perf_counter()
    w, st = cfg.segmentation.window, cfg.segmentation.step

    def seg_cluster(k):
        ids = correct[k]
        if len(ids) == 0:
            # nothing is correctly assigned; structure comes from the raw members
            ids = corpus.ids[corpus.members(k)]
        return build_subgroups(np.stack([X_by_id[int(i)] for i in ids]), w, st, cfg.seed ^ k, k, ids)

    subgroups = dict(zip(range(corpus.K), _pmap(seg_cluster, range(corpus.K))))
    seg_ms = (time.perf_counter() - t0) * 1000.0

    index = ImportanceIndex(model, subgroups, X_by_id, cfg.importance.B, cfg.seed,
                            donors=tr.X, window=w, step=st)
    t0 = time.perf_counter()
    keys = [(k, r) for k in range(corpus.K) for r in range(subgroups[k].R)]
    for k, r in keys:
        index.group_scores(k, r)
    imp_ms = (time.perf_counter() - t0) * 1000.0
    return Context(cfg, corpus, tr, model, correct, subgroups, index, X_by_id,
                   {"segmentation": seg_ms, "importance": imp_ms})


def cmd_segment(cfg: RunConfig, strip: bool = False) -> dict:
    ctx = build_context(cfg)
    out = {
        "dataset": ctx.corpus.name,
        "clusters": [ctx.subgroups[k].to_dict() for k in sorted(ctx.subgroups)],
        "importance": [
            {"cluster_id": k, "group": r, "scores": [float(v) for v in ctx.index.group_scores(k, r).scores]}
            for k in sorted(ctx.subgroups) for r in range(ctx.subgroups[k].R)
        ],
        "stage_runtime_ms": dict(ctx.stage_ms),
    }
    write_json(out_path(cfg, SUBGROUPS_FILE), out, strip)
    return out


def sample_instances(ctx: Context) -> dict[int, list[int]]:
    frac = ctx.cfg.sample_frac
    if frac <= 0:
        raise PreconditionError("sample_frac must be positive for local explanation", sample_frac=frac)
    out = {}
    for k in range(ctx.corpus.K):
        ids = ctx.correct[k]
        n = math.ceil(frac * len(ids))
        rng = np.random.default_rng([ctx.cfg.seed, k])
        out[k] = sorted(int(i) for i in rng.choice(ids, n, replace=False)) if n else []
    if not any(out.values()):
        raise EmptyCorpusError("no correctly classified instances to explain")
    return out


def _source_pattern(ctx: Context, k: int, iid: int):
    sg = ctx.subgroups[k]
    return sg.patterns[ctx.index.source_group(ctx.X_by_id[iid], k, iid)]


def cmd_explain_local(cfg: RunConfig, strip: bool = False, ctx: Context | None = None) -> dict:
    ctx = ctx or build_context(cfg)
    sample = sample_instances(ctx)
    jobs = [(k, iid) for k in sorted(sample) for iid in sample[k]]

    def run(job):
        _, iid = job
        return galactic_l(ctx.X_by_id[iid], ctx.model, ctx.index, cfg.local, cfg.seed ^ iid, instance_id=iid)

    t0 = time.perf_counter()
    cfs = _pmap(run, jobs)
    runtime_s = time.perf_counter() - t0
    results = [(iid, cf) for (_, iid), cf in zip(jobs, cfs)]
    segs = {iid: _source_pattern(ctx, k, iid) for k, iid in jobs}
    label = f"local/{cfg.local.policy}/{cfg.local.strategy}"
    report = evaluate_local(results, segs, runtime_s, label)

    instances = []
    for (k, iid), cf in zip(jobs, cfs):
        rec = {"instance_id": iid, "cluster_id": k, "success": cf is not None}
        if cf is not None:
            rec.update(cf.to_dict())
        instances.append(rec)
    out = {
        "kind": "local",
        "dataset": ctx.corpus.name,
        "report": report.to_dict(),
        "instances": instances,
        "stage_runtime_ms": dict(ctx.stage_ms, search=runtime_s * 1000.0),
    }
    write_json(out_path(cfg, LOCAL_REPORT), out, strip)
    return out


def _select(ctx: Context, k: int, ids: np.ndarray, pool, problem) -> SummarySet:
    g = ctx.cfg.global_
    mu = g.mu_for(k)
    alg = g.algorithm
    ids = [int(i) for i in ids]
    if alg == "optimal":
        return select_optimal(problem, mu, pool, k, ids, g.cap)
    if alg == "greedy":
        return select_greedy(problem, mu, pool, k, ids)
    pos = {iid: p for p, iid in enumerate(ids)}
    sg = ctx.subgroups[k]
    groups = [[pos[int(i)] for i in sg.group_members(r) if int(i) in pos] for r in range(sg.R)]
    source = [pos.get(p.source_id) for p in pool.perturbations]
    inner = alg.split("_", 1)[1]
    return select_hierarchical(problem, groups, source, mu, inner, pool, k, ids, g.cap)


def explain_cluster(ctx: Context, k: int) -> dict:
    g = ctx.cfg.global_
    ids = ctx.correct[k]
    stage = {}
    t0 = time.perf_counter()
    X = np.stack([ctx.X_by_id[int(i)] for i in ids]) if len(ids) else np.zeros((0, ctx.corpus.T))
    pool = generate_candidates(X, ids, k, ctx.model, ctx.index, ctx.cfg.local, ctx.subgroups[k],
                               g.n_proto, g.n_crit, ctx.cfg.seed, g.p_sz)
    stage["candidates"] = (time.perf_counter() - t0) * 1000.0
    t0 = time.perf_counter()
    problem = problem_from_pool(ctx.model, X, pool)
    summary = _select(ctx, k, ids, pool, problem)
    stage["selection"] = (time.perf_counter() - t0) * 1000.0
    sg = ctx.subgroups[k]
    segs = {int(i): sg.patterns[sg.group_of(int(i))] for i in summary.covered_ids}
    label = f"global/{g.algorithm}"
    runtime_s = (stage["candidates"] + stage["selection"]) / 1000.0
    report = evaluate_global(summary, segs, runtime_s, label) if summary.n_instances else EvalReport(
        0.0, None, None, None, runtime_s, 0, 0, [], label)
    warnings = []
    if len(pool) == 0:
        warnings.append(f"cluster {k}: empty candidate pool, summary is empty")
    return {
        "cluster_id": k,
        "summary": summary.to_dict(),
        "report": report.to_dict(),
        "pool_size": len(pool),
        "pool": [p.to_dict() for p in pool.perturbations],
        "pool_notes": list(pool.warnings),
        "warnings": warnings,
        "stage_runtime_ms": stage,
    }


def aggregate_global(clusters: list[dict], label: str) -> EvalReport:
    """Corpus-level report pooled over every cluster's covered instances."""
    n = sum(c["report"]["n_attempts"] for c in clusters)
    covered = sum(c["report"]["n_success"] for c in clusters)
    recs = [r for c in clusters for r in c["report"]["records"]]

    def mean(key):
        return float(np.mean([r[key] for r in recs])) if recs else None

    return EvalReport(
        eff=100.0 * covered / n if n else 0.0,
        afc=mean("afc"),
        acs=mean("acs"),
        act=mean("act"),
        runtime_s=sum(c["report"]["RT"] for c in clusters),
        n_attempts=n,
        n_success=covered,
        records=[],
        label=label,
    )


def cmd_explain_global(cfg: RunConfig, strip: bool = False, ctx: Context | None = None) -> dict:
    ctx = ctx or build_context(cfg)
    clusters = _pmap(lambda k: explain_cluster(ctx, k), range(ctx.corpus.K))
    label = f"global/{cfg.global_.algorithm}"
    out = {
        "kind": "global",
        "dataset": ctx.corpus.name,
        "algorithm": cfg.global_.algorithm,
        "clusters": clusters,
        "report": aggregate_global(clusters, label).to_dict(),
        "warnings": [w for c in clusters for w in c["warnings"]],
        "stage_runtime_ms": dict(ctx.stage_ms),
    }
    write_json(out_path(cfg, GLOBAL_REPORT), out, strip)
    return out


_METRICS = ("eff", "afc", "acs", "act")


def comparison_table(reports: list[dict], strip: bool = False) -> str:
    """One row per report plus one gain/loss row per label against the first label.

    Gain/loss of a metric is the mean of ``other - reference`` over the
    datasets both labels report with a non-null value.
    """
    cols = [c for c in CSV_COLUMNS if not (strip and c == "RT")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "dataset", "label", *cols])

    def cell(v):
        return "-" if v is None else v

    groups: dict[str, dict[str, dict]] = {}
    for i, rep in enumerate(reports):
        r = rep["report"]
        w.writerow(["report", rep["dataset"], r["label"], *[cell(r.get(c)) for c in cols]])
        key = r["label"]
        if rep["dataset"] in groups.get(key, {}):
            # a repeated (label, dataset) pair is compared as its own column
            key = f"{key}#{i}"
        groups.setdefault(key, {})[rep["dataset"]] = r
    labels = list(groups)
    ref = labels[0]
    for other in labels[1:]:
        row = []
        for m in cols:
            pairs = [(groups[ref][d][m], groups[other][d][m]) for d in groups[ref]
                     if d in groups[other] and m != "RT"
                     and groups[ref][d].get(m) is not None and groups[other][d].get(m) is not None]
            row.append(gain_loss(*zip(*pairs)) if pairs else "-")
        w.writerow(["gain_loss", "*", f"{other} vs {ref}", *row])
    return buf.getvalue()


def cmd_evaluate(cfg: RunConfig, report_paths, strip: bool = False) -> str:
    paths = list(report_paths)
    if not paths:
        raise PreconditionError("evaluate needs at least one report file")
    reports = []
    for p in paths:
        rep = read_json(p, "report file")
        if not isinstance(rep, dict) or not isinstance(rep.get("report"), dict) or "dataset" not in rep \
                or "label" not in rep["report"]:
            raise ArtifactError("not a galactic report", path=str(p))
        reports.append(rep)
    table = comparison_table(reports, strip)
    path = out_path(cfg, COMPARISON_FILE)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table)
    return table
