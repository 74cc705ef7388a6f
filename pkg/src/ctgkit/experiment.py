"""Experiment orchestration behind the ``ctg`` commands.

Output layout under ``output_dir``::

    prepared/train.csv, prepared/test.csv, prepared/pipeline.json
    tuning/<model>.grid.json
    models/<model>.json
    predictions/<row>.csv, predictions/index.json
    metrics_overall.csv, metrics_per_class.csv, confusion.csv, confusion.txt
    report.txt, report.json
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .core import CLASS_NAMES, N_CLASSES, InputError, derive_seed
from .evaluate import metrics_report, one_vs_rest_accuracy, truncate2, whole_percent
from .ingest import Dataset, dumps_csv, load_csv
from .modelfile import atomic_write_text, load_model, save_model
from .preprocess import PipelineConfig, Standardizer, run_pipeline
from .registry import DISPLAY, MODEL_ORDER, resolve_kind, short_name
from .select import (
    DEFAULT_ENSEMBLES,
    DEFAULT_GRIDS,
    PROPOSED,
    CvConfig,
    ParamGrid,
    VotingModel,
    ensemble_label,
    grid_search,
    hard_vote,
)

MODE_NOTES = {
    "paper_faithful": (
        "paper_faithful: oversampling and standardization ran on the full table before the split, "
        "so duplicated minority rows can appear in both train and test; test scores are optimistic."
    ),
    "leakage_safe": (
        "leakage_safe: the split ran first; imputation, oversampling and standardization were fitted "
        "on the training side only, and the test side keeps the original class imbalance."
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str | None = None
    output_dir: str = "ctg_out"
    master_seed: int = 0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    cv: CvConfig = field(default_factory=CvConfig)
    models: tuple[str, ...] = MODEL_ORDER
    grids: dict = field(default_factory=dict)
    ensembles: tuple[tuple[str, ...], ...] = DEFAULT_ENSEMBLES
    n_jobs: int = 1

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def grid_for(self, name: str) -> ParamGrid:
        return ParamGrid.from_dict(self.grids.get(name, DEFAULT_GRIDS[name]))

    def to_dict(self) -> dict:
        return {
            "data_path": self.data_path,
            "output_dir": self.output_dir,
            "master_seed": self.master_seed,
            "pipeline": {k: v for k, v in self.pipeline.to_dict().items() if k != "master_seed"},
            "cv": {"folds": self.cv.folds, "stratified": self.cv.stratified},
            "models": list(self.models),
            "grids": {m: self.grid_for(m).to_dict() for m in self.models},
            "ensembles": [list(e) for e in self.ensembles],
            "n_jobs": self.n_jobs,
        }

    def hash(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")
        doc.pop("n_jobs")
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def config_schema() -> dict:
    return json.loads(resources.files("ctgkit").joinpath("config_schema.json").read_text(encoding="utf-8"))


def validate_config_doc(doc: dict) -> None:
    import jsonschema

    try:
        jsonschema.validate(doc, config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"invalid config at {where}: {exc.message}") from None


def build_config(doc: dict | None = None, *, mode=None, seed=None, out=None, data=None) -> ExperimentConfig:
    """Merge a config document with flag overrides (flags win) and validate references."""
    doc = dict(doc or {})
    validate_config_doc(doc)
    out = out or doc.get("output_dir") or os.environ.get("CTG_OUT_DIR") or "ctg_out"
    master_seed = int(seed if seed is not None else doc.get("master_seed", 0))
    pipe = dict(doc.get("pipeline", {}))
    if mode is not None:
        pipe["mode"] = mode
    pipeline = PipelineConfig(master_seed=master_seed, **pipe)
    cv = CvConfig(**doc.get("cv", {}))
    models = tuple(doc.get("models", MODEL_ORDER))
    ensembles = tuple(tuple(e) for e in doc.get("ensembles", DEFAULT_ENSEMBLES))
    for group in ensembles:
        missing = [m for m in group if m not in models]
        if missing:
            raise InputError(f"ensemble {'+'.join(group)} references unselected model(s): {', '.join(missing)}")
    grids = {k: dict(v) for k, v in doc.get("grids", {}).items()}
    return ExperimentConfig(
        data_path=data or doc.get("data_path"),
        output_dir=str(out),
        master_seed=master_seed,
        pipeline=pipeline,
        cv=cv,
        models=models,
        grids=grids,
        ensembles=ensembles,
        n_jobs=int(doc.get("n_jobs", 1)),
    )


def load_config(path=None, **overrides) -> ExperimentConfig:
    doc = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"file not found: {p}")
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"config {p} is not valid JSON: {exc.msg} at offset {exc.pos}") from None
        if not isinstance(doc, dict):
            raise InputError(f"config {p} must be a JSON object")
    return build_config(doc, **overrides)


# --------------------------------------------------------------------------- prepare


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def prepare(cfg: ExperimentConfig) -> dict:
    if not cfg.data_path:
        raise InputError("no data file given (set data_path in the config or pass --data)")
    raw = load_csv(cfg.data_path)
    prep = run_pipeline(cfg.pipeline, raw)
    d = cfg.out / "prepared"
    atomic_write_text(d / "train.csv", dumps_csv(prep.train))
    atomic_write_text(d / "test.csv", dumps_csv(prep.test))
    original = np.bincount(raw.y, minlength=N_CLASSES)
    test_counts = np.bincount(prep.test.y, minlength=N_CLASSES)
    summary = {
        "mode": prep.mode,
        "mode_note": MODE_NOTES[prep.mode],
        "source": raw.source,
        "source_notes": list(raw.notes),
        "config": cfg.pipeline.to_dict(),
        "config_hash": cfg.hash(),
        "original_rows": int(raw.n_rows),
        "original_class_counts": original.tolist(),
        "train_rows": int(prep.train.n_rows),
        "test_rows": int(prep.test.n_rows),
        "train_class_counts": np.bincount(prep.train.y, minlength=N_CLASSES).tolist(),
        "test_class_counts": test_counts.tolist(),
        "log": [s.to_dict() for s in prep.log],
        "standardizer": prep.standardizer.to_dict(),
        "train_index": prep.train_index.tolist(),
        "test_index": prep.test_index.tolist(),
    }
    atomic_write_text(d / "pipeline.json", _dump_json(summary))
    return summary


def load_prepared(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, dict]:
    d = cfg.out / "prepared"
    for name in ("train.csv", "test.csv", "pipeline.json"):
        if not (d / name).exists():
            raise FileNotFoundError(f"file not found: {d / name} (run `ctg prepare` first)")
    info = json.loads((d / "pipeline.json").read_text(encoding="utf-8"))
    return load_csv(d / "train.csv"), load_csv(d / "test.csv"), info


# --------------------------------------------------------------------------- tune


def expand_models(names) -> list[str]:
    names = list(names) or ["all"]
    if "all" in names:
        return list(MODEL_ORDER)
    return [short_name(resolve_kind(n)) for n in names]


def tune(cfg: ExperimentConfig, names=("all",), log=None) -> dict:
    train, _, info = load_prepared(cfg)
    std = Standardizer.from_dict(info["standardizer"])
    out = {}
    for name in expand_models(names):
        kind = resolve_kind(name)
        grid = cfg.grid_for(name)
        t0 = time.perf_counter()
        result = grid_search(kind, grid, train.X, train.y, cfg.cv, derive_seed(cfg.master_seed, f"tune:{name}"),
                             N_CLASSES, cfg.n_jobs)
        elapsed = time.perf_counter() - t0
        doc = result.to_dict()
        doc["model"] = name
        atomic_write_text(cfg.out / "tuning" / f"{name}.grid.json", _dump_json(doc))
        meta = {
            "config_hash": cfg.hash(),
            "seed": cfg.master_seed,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "params": result.best_params,
            "mode": info["mode"],
        }
        save_model(cfg.out / "models" / f"{name}.json", result.model, std, meta)
        out[name] = {"best_params": result.best_params, "best_mean": result.best_mean, "seconds": elapsed}
        if log:
            log(f"tuned {name}: {result.best_params} cv={result.best_mean:.3f}% ({elapsed:.1f}s)")
    return out


# --------------------------------------------------------------------------- ensemble


def load_named_model(cfg: ExperimentConfig, name: str):
    return load_model(cfg.out / "models" / f"{name}.json")


def build_ensemble(cfg: ExperimentConfig, members, name: str | None = None) -> Path:
    members = [short_name(resolve_kind(m)) for m in members]
    if len(members) < 2:
        raise InputError("an ensemble needs at least 2 members")
    loaded = [load_named_model(cfg, m) for m in members]
    model = VotingModel(tuple(lm.model for lm in loaded), tuple(members))
    name = name or ensemble_slug(members)
    meta = {
        "config_hash": cfg.hash(),
        "seed": cfg.master_seed,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "members": members,
        "proposed": sorted(members) == sorted(PROPOSED),
    }
    return save_model(cfg.out / "models" / f"{name}.json", model, loaded[0].standardizer, meta)


def ensemble_slug(members) -> str:
    return "+".join(members)


# --------------------------------------------------------------------------- evaluate / report


@dataclass(frozen=True)
class PredictionSet:
    name: str
    slug: str
    members: tuple[str, ...]
    proposed: bool
    y_true: np.ndarray
    y_pred: np.ndarray


def evaluate(cfg: ExperimentConfig, names=(), ensembles=None) -> dict:
    """Score single models, configured ensembles and any saved voting files on the test split."""
    _, test, info = load_prepared(cfg)
    requested = list(names) or [m for m in cfg.models]
    singles, saved_votes = [], []
    for n in requested:
        if n == "all":
            singles.extend(m for m in cfg.models if m not in singles)
            continue
        try:
            short = short_name(resolve_kind(n))
        except InputError:
            saved_votes.append(n)
            continue
        if short not in singles:
            singles.append(short)
    preds = {}
    for m in singles:
        preds[m] = load_named_model(cfg, m).model.predict(test.X)
    sets = [
        PredictionSet(DISPLAY[m], m, (m,), False, test.y, preds[m])
        for m in [m for m in MODEL_ORDER if m in preds]
    ]
    groups = cfg.ensembles if ensembles is None else tuple(tuple(g) for g in ensembles)
    for group in groups:
        if not all(m in preds for m in group):
            continue
        p = hard_vote([preds[m] for m in group], N_CLASSES)
        sets.append(PredictionSet(ensemble_label(group), ensemble_slug(group), tuple(group),
                                  sorted(group) == sorted(PROPOSED), test.y, p))
    for name in saved_votes:
        loaded = load_named_model(cfg, name)
        if loaded.kind != "voting":
            raise InputError(f"{name!r} is not a model name or a saved ensemble")
        members = tuple(loaded.model.names)
        label = ensemble_label(members) if all(m in DISPLAY for m in members) else name
        if any(s.slug == name for s in sets):
            continue
        sets.append(PredictionSet(label, name, members, sorted(members) == sorted(PROPOSED), test.y,
                                  loaded.model.predict(test.X)))
    if not sets:
        raise InputError("nothing to evaluate")
    write_predictions(cfg.out / "predictions", sets)
    return render_outputs(cfg.out, sets, context=_context(cfg, info))


def report(cfg: ExperimentConfig) -> dict:
    """Rebuild every metric file from persisted predictions alone."""
    sets = read_predictions(cfg.out / "predictions")
    context = None
    pj = cfg.out / "prepared" / "pipeline.json"
    if pj.exists():
        context = _context(cfg, json.loads(pj.read_text(encoding="utf-8")))
    return render_outputs(cfg.out, sets, context=context)


def write_predictions(d: Path, sets) -> None:
    index = []
    for s in sets:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "true_nsp", "pred_nsp"])
        for i, (t, p) in enumerate(zip(s.y_true, s.y_pred)):
            w.writerow([i, int(t) + 1, int(p) + 1])
        atomic_write_text(d / f"{s.slug}.csv", buf.getvalue())
        index.append({"name": s.name, "slug": s.slug, "members": list(s.members), "proposed": s.proposed})
    atomic_write_text(d / "index.json", _dump_json(index))


def read_predictions(d: Path) -> list[PredictionSet]:
    idx = d / "index.json"
    if not idx.exists():
        raise FileNotFoundError(f"file not found: {idx} (run `ctg evaluate` first)")
    out = []
    for entry in json.loads(idx.read_text(encoding="utf-8")):
        path = d / f"{entry['slug']}.csv"
        if not path.exists():
            raise FileNotFoundError(f"file not found: {path}")
        t, p = [], []
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for rec in reader:
                t.append(int(rec[1]) - 1)
                p.append(int(rec[2]) - 1)
        out.append(PredictionSet(entry["name"], entry["slug"], tuple(entry["members"]), bool(entry["proposed"]),
                                 np.array(t, dtype=np.int64), np.array(p, dtype=np.int64)))
    return out


def _environment() -> dict:
    import numba
    import scipy

    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "cpu_count": os.cpu_count(),
    }


def _context(cfg: ExperimentConfig, info: dict) -> dict:
    grids = {}
    for m in MODEL_ORDER:
        p = cfg.out / "tuning" / f"{m}.grid.json"
        if p.exists():
            g = json.loads(p.read_text(encoding="utf-8"))
            grids[m] = {
                "best_params": g["best_params"],
                "best_mean": g["best_mean"],
                "points": len(g["table"]),
                "failed": sum(1 for row in g["table"] if row["error"] is not None),
            }
    return {
        "mode": info["mode"],
        "mode_note": info.get("mode_note", MODE_NOTES.get(info["mode"], "")),
        "master_seed": cfg.master_seed,
        "config_hash": cfg.hash(),
        "train_rows": info["train_rows"],
        "test_rows": info["test_rows"],
        "original_class_counts": info["original_class_counts"],
        "test_class_counts": info["test_class_counts"],
        "pipeline_log": info["log"],
        "grids": grids,
        "environment": _environment(),
    }


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _r(v: float) -> str:
    return repr(float(v))


def render_outputs(out: Path, sets, context: dict | None = None) -> dict:
    """Compute metrics for each prediction set and write the CSV, text and JSON reports.

    The CSV files depend only on the predictions, so repeated runs are byte-identical.
    """
    reports = [(s, metrics_report(s.y_true, s.y_pred, N_CLASSES)) for s in sets]
    overall = [[
        "model", "members", "proposed", "n_test", "errors", "accuracy", "accuracy_2dp",
        "macro_precision", "macro_recall", "macro_f1", "weighted_precision", "weighted_recall", "weighted_f1",
    ]]
    per_class = [["model", "class", "precision", "recall", "f1", "support",
                  "precision_pct", "recall_pct", "f1_pct", "undefined"]]
    confusion = [["model", "true_class", *[f"pred_{c}" for c in CLASS_NAMES]]]
    for s, rep in reports:
        overall.append([
            s.name, "+".join(s.members), int(s.proposed), rep.confusion.total, rep.confusion.errors,
            _r(rep.accuracy), truncate2(rep.accuracy),
            _r(rep.macro.precision), _r(rep.macro.recall), _r(rep.macro.f1),
            _r(rep.weighted.precision), _r(rep.weighted.recall), _r(rep.weighted.f1),
        ])
        for c, m in enumerate(rep.per_class):
            per_class.append([s.name, CLASS_NAMES[c], _r(m.precision), _r(m.recall), _r(m.f1), m.support,
                              whole_percent(m.precision), whole_percent(m.recall), whole_percent(m.f1),
                              int(m.undefined)])
        for c in range(N_CLASSES):
            confusion.append([s.name, CLASS_NAMES[c], *rep.confusion.counts[c].tolist()])
    atomic_write_text(out / "metrics_overall.csv", _csv_text(overall))
    atomic_write_text(out / "metrics_per_class.csv", _csv_text(per_class))
    atomic_write_text(out / "confusion.csv", _csv_text(confusion))
    atomic_write_text(out / "confusion.txt", "\n".join(confusion_text(s.name, r.confusion.counts) for s, r in reports))

    results = []
    for s, rep in reports:
        d = rep.to_dict()
        d.update({
            "name": s.name,
            "slug": s.slug,
            "members": list(s.members),
            "proposed": s.proposed,
            "accuracy_2dp": truncate2(rep.accuracy),
            "pooled_one_vs_rest_accuracy": one_vs_rest_accuracy(rep.confusion),
        })
        results.append(d)
    doc = {"context": context, "results": results}
    atomic_write_text(out / "report.json", _dump_json(doc))
    atomic_write_text(out / "report.txt", report_text(reports, context))
    return doc


def confusion_text(name: str, counts: np.ndarray) -> str:
    width = max(len(c) for c in CLASS_NAMES) + 2
    lines = [f"{name} (rows = true, columns = predicted)"]
    lines.append(" " * width + "".join(f"{c:>{width}}" for c in CLASS_NAMES))
    for c, row in enumerate(counts):
        lines.append(f"{CLASS_NAMES[c]:<{width}}" + "".join(f"{int(v):>{width}}" for v in row))
    return "\n".join(lines) + "\n"


def report_text(reports, context: dict | None) -> str:
    lines = ["CTG classification report", ""]
    if context:
        lines += [
            f"mode: {context['mode']}",
            f"  {context['mode_note']}",
            f"master seed: {context['master_seed']}   config hash: {context['config_hash'][:16]}",
            f"train rows: {context['train_rows']}   test rows: {context['test_rows']}",
            f"original class counts (N/S/P): {context['original_class_counts']}",
            f"test class counts (N/S/P): {context['test_class_counts']}",
            "",
        ]
        if context.get("grids"):
            lines.append("Grid search winners (mean 5-fold accuracy)")
            for m, g in context["grids"].items():
                failed = f", {g['failed']} failed" if g["failed"] else ""
                lines.append(f"  {DISPLAY[m]:<5} {g['best_mean']:.3f}%  {g['best_params']}  ({g['points']} points{failed})")
            lines.append("")
    lines.append("Overall (accuracy truncated to 2 decimals; averages in %)")
    lines.append(f"  {'model':<12}{'acc':>8}{'errors':>8}{'macro P':>9}{'macro R':>9}{'macro F1':>10}"
                 f"{'wtd P':>8}{'wtd R':>8}{'wtd F1':>8}")
    for s, r in reports:
        tag = " *" if s.proposed else ""
        lines.append(
            f"  {s.name + tag:<12}{truncate2(r.accuracy):>8}{r.confusion.errors:>8}"
            f"{r.macro.precision:>9.2f}{r.macro.recall:>9.2f}{r.macro.f1:>10.2f}"
            f"{r.weighted.precision:>8.2f}{r.weighted.recall:>8.2f}{r.weighted.f1:>8.2f}"
        )
    if any(s.proposed for s, _ in reports):
        lines.append("  * ETSE: Extra Trees + SVM hard vote (proposed combination)")
    lines += ["", "Per class (whole percents: precision / recall / F1)"]
    lines.append(f"  {'model':<12}" + "".join(f"{c:>16}" for c in CLASS_NAMES))
    for s, r in reports:
        cells = "".join(
            f"{whole_percent(m.precision)}/{whole_percent(m.recall)}/{whole_percent(m.f1)}".rjust(16)
            for m in r.per_class
        )
        lines.append(f"  {s.name:<12}{cells}")
    lines += ["", "Confusion matrices", ""]
    for s, r in reports:
        lines.append(confusion_text(s.name, r.confusion.counts))
    warnings = [f"{s.name}: {w}" for s, r in reports for w in r.warnings]
    lines += ["Appendix: pooled one-vs-rest accuracy 100 (sum TP + sum TN) / (sum over all four counts)",
              "  (counts each row once per class, so it exceeds plain accuracy when there are 3 classes)"]
    for s, r in reports:
        lines.append(f"  {s.name:<12}{one_vs_rest_accuracy(r.confusion):.4f}")
    if warnings:
        lines += ["", "Warnings"] + [f"  {w}" for w in warnings]
    return "\n".join(lines) + "\n"
