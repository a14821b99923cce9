"""Command-line interface: ``qmlsfe {tune,train,predict,kernel,report}``.

Exit codes: 0 success, 1 fatal error, 2 finished with failed grid cells,
64 usage error.  Settings come from built-in defaults, then an optional JSON
``--config`` file, then explicit flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, dataset, experiment, hybrid, qkernel, svm
from .errors import QmlError
from .featmap import EntanglementPattern, FeatureMapSpec

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2, 64

log = logging.getLogger("qmlsfe")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    task: str = "svc"
    data: str | None = None
    out: str = "runs/latest"
    seed: int = 0
    jobs: int = os.cpu_count() or 1
    reps: list | None = None
    c: list | None = None
    epsilon: list | None = None
    entanglement: list | None = None
    label_convention: str = "methods"
    scale_max: float = math.pi
    protocol: str = "shuffle"
    repeats: int = 20
    folds: int = 5
    seeds: int = 3
    qnn_mode: str = "classification"
    epochs: int = 300
    learning_rate: float = 0.05
    quiet: bool = False

    # run-location settings that must not leak into report.json
    LOCAL = ("data", "out", "jobs", "quiet")

    def provenance(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in self.LOCAL}

    def grid(self) -> experiment.GridSpec:
        base = experiment.GridSpec.default(self.task)
        return experiment.GridSpec(
            C=tuple(self.c) if self.c else base.C,
            epsilon=tuple(self.epsilon) if self.epsilon else base.epsilon,
            reps=tuple(self.reps) if self.reps else base.reps,
            entanglement=tuple(self.entanglement) if self.entanglement else base.entanglement,
        )

    def protocol_obj(self) -> experiment.Protocol:
        return experiment.Protocol(
            scheme=self.protocol, repeats=self.repeats, folds=self.folds, n_seeds=self.seeds,
            scale_max=self.scale_max, label_convention=self.label_convention, qnn_mode=self.qnn_mode,
            epochs=self.epochs, learning_rate=self.learning_rate,
        )


# --------------------------------------------------------------- arg types

def _list_of(conv, what, minimum=None):
    def parse(text):
        try:
            values = [conv(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"{what}: cannot parse {text!r}") from None
        if not values:
            raise argparse.ArgumentTypeError(f"{what}: empty list")
        if minimum is not None and any(v < minimum for v in values):
            raise argparse.ArgumentTypeError(f"{what} must be an integer and at least {minimum}")
        return values
    return parse


def _positive_floats(text):
    values = _list_of(float, "C")(text)
    if any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("C values must be positive")
    return values


def _patterns(text):
    values = [v.strip().lower() for v in str(text).split(",") if v.strip()]
    allowed = [p.value for p in EntanglementPattern]
    bad = [v for v in values if v not in allowed]
    if bad or not values:
        raise argparse.ArgumentTypeError(f"entanglement must be from {allowed}, got {text!r}")
    return values


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p, data_required=False):
    d = RunConfig()
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--task", choices=experiment.TASKS, default=None, help=f"model family (default: {d.task})")
    p.add_argument("--data", default=None, help="descriptor/SFE CSV " + ("(required)" if data_required else ""))
    p.add_argument("--out", default=None, help=f"output directory (default: {d.out})")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default: {d.seed})")
    p.add_argument("--jobs", type=_positive_int, default=None, help=f"worker processes (default: {d.jobs})")
    p.add_argument("--reps", type=_list_of(int, "reps", 1), default=None,
                   help="comma list of circuit depths (default: 1,2,3,4,5; 1,2,3 for QNN tasks)")
    p.add_argument("--c", type=_positive_floats, default=None, help="comma list of C values (default: 0.1,1,10,100)")
    p.add_argument("--epsilon", type=_list_of(float, "epsilon", 0.0), default=None,
                   help="comma list of SVR tube widths in scaled target units (default: 0.01,0.001)")
    p.add_argument("--entanglement", type=_patterns, default=None,
                   help="comma list from circular,full,linear (default: all three; full for QNN tasks)")
    p.add_argument("--label-convention", choices=dataset.LABEL_CONVENTIONS, default=None,
                   help=f"methods: SFE>19 is 0; dataset: SFE<19 is 0 (default: {d.label_convention})")
    p.add_argument("--scale-max", type=float, default=None,
                   help="features are min-max scaled to [0, SCALE_MAX] radians (default: pi)")
    p.add_argument("--protocol", choices=("shuffle", "kfold"), default=None, help=f"split scheme (default: {d.protocol})")
    p.add_argument("--repeats", type=_positive_int, default=None, help=f"shuffled splits per seed (default: {d.repeats})")
    p.add_argument("--folds", type=_positive_int, default=None, help=f"k for k-fold (default: {d.folds})")
    p.add_argument("--seeds", type=_positive_int, default=None, help=f"master seeds averaged (default: {d.seeds})")
    p.add_argument("--qnn-mode", choices=("classification", "regression"), default=None,
                   help=f"target for qnn/hybrid-qnn tasks (default: {d.qnn_mode})")
    p.add_argument("--epochs", type=_positive_int, default=None, help=f"QNN training epochs (default: {d.epochs})")
    p.add_argument("--learning-rate", type=float, default=None, help=f"Adam step size (default: {d.learning_rate})")
    p.add_argument("--quiet", action="store_true", default=None, help="no progress output on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmlsfe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tune", help="hyperparameter sweep with repeated cross-validation")
    _add_common(p, data_required=True)

    p = sub.add_parser("train", help="fit one model on the whole table and save it as JSON")
    _add_common(p, data_required=True)

    p = sub.add_parser("predict", help="apply a saved model to a descriptor table")
    p.add_argument("--model", required=True, help="model.json written by 'train'")
    p.add_argument("--data", required=True, help="CSV with the descriptor columns (SFE optional)")
    p.add_argument("--out", required=True, help="output directory for predictions.csv")
    p.add_argument("--quiet", action="store_true", help="no progress output on stderr")

    p = sub.add_parser("kernel", help="write the Gram matrix of a table as CSV")
    _add_common(p, data_required=True)

    p = sub.add_parser("report", help="print a summary of a finished sweep and re-emit its CSVs")
    p.add_argument("--out", required=True, help="directory containing report.json")
    p.add_argument("--quiet", action="store_true", help="no progress output on stderr")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    names = {f.name for f in fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(doc) - names
        if unknown:
            raise UsageError(f"unknown config key(s): {sorted(unknown)}")
        for k, v in doc.items():
            setattr(cfg, k, v)
    for k in names:
        v = getattr(args, k, None)
        if v is not None:
            setattr(cfg, k, v)
    if cfg.reps and any(int(r) < 1 for r in cfg.reps):
        raise UsageError("reps must be an integer and at least 1")
    if not cfg.scale_max > 0:
        raise UsageError("--scale-max must be positive")
    return cfg


def _setup_logging(quiet):
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s", force=True)
    logging.captureWarnings(True)


def _load(cfg: RunConfig, require_sfe=True):
    if not cfg.data:
        raise UsageError("--data is required")
    return dataset.load_table(cfg.data, require_sfe=require_sfe)


# ----------------------------------------------------------------- commands

def cmd_tune(cfg: RunConfig) -> int:
    samples = _load(cfg)
    grid, protocol = cfg.grid(), cfg.protocol_obj()
    n_cells = len(grid.cells(cfg.task))
    log.info("tune %s: %d samples, %d cells, seed %d", cfg.task, len(samples), n_cells, cfg.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", svm.ConvergenceWarning)
        report = experiment.run_grid(cfg.task, grid, samples, protocol, cfg.seed, jobs=cfg.jobs,
                                     fingerprint=dataset.fingerprint(cfg.data), config=cfg.provenance())
    experiment.emit_outputs(report, cfg.out)
    best = report.best_result
    log.info("best cell %s: mean %.4f (std %.4f); outputs in %s", best.cell, best.mean, best.std, cfg.out)
    n_failed = sum(r.failed for r in report.results)
    if n_failed:
        log.warning("%d of %d cells failed", n_failed, n_cells)
        return EXIT_PARTIAL
    return EXIT_OK


def _single(values, default, name):
    if not values:
        return default
    if len(values) != 1:
        raise UsageError(f"train fits one model; give a single --{name} value")
    return values[0]


def cmd_train(cfg: RunConfig) -> int:
    samples = _load(cfg)
    protocol = cfg.protocol_obj()
    task = cfg.task
    cell = {"entanglement": _single(cfg.entanglement, "full", "entanglement"),
            "reps": int(_single(cfg.reps, 1, "reps"))}
    if task in ("svc", "svr"):
        cell["C"] = float(_single(cfg.c, 1.0, "c"))
    if task == "svr":
        cell["epsilon"] = float(_single(cfg.epsilon, 0.01, "epsilon"))
    classify = experiment.is_classification(task, protocol)
    if classify:
        samples = dataset.derive_labels(samples, protocol.threshold, protocol.label_convention)
    doc = train_model(task, cell, samples, protocol, cfg.seed)
    doc["config"] = cfg.provenance()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote %s", out / "model.json")
    return EXIT_OK


def train_model(task, cell, samples, protocol: experiment.Protocol, seed: int) -> dict:
    """Fit on all samples and return a self-contained JSON-able model document."""
    scaler = dataset.fit_scaler(samples, hi=protocol.scale_max)
    X = dataset.apply_scaler(scaler, samples)
    classify = experiment.is_classification(task, protocol)
    doc = {
        "tool_version": __version__,
        "task": task,
        "mode": "classification" if classify else "regression",
        "cell": cell,
        "feature_columns": list(dataset.FEATURE_COLUMNS),
        "n_features": dataset.N_FEATURES,
        "scaler": scaler.to_dict(),
        "training_elements": [s.element for s in samples],
        "label_convention": protocol.label_convention if classify else None,
    }
    if classify:
        y = dataset.labels(samples)
    else:
        tscale = dataset.TargetScaler.fit(dataset.targets(samples))
        doc["target_scaler"] = tscale.to_dict()
        y = tscale.scale(dataset.targets(samples))
    if task in ("svc", "svr"):
        spec = FeatureMapSpec(dataset.N_FEATURES, cell["reps"], cell["entanglement"])
        K = qkernel.gram_matrix(X, spec)
        if task == "svc":
            model = svm.train_svc(K, y, cell["C"], tol=protocol.tol)
        else:
            model = svm.train_svr(K, y, cell["C"], cell["epsilon"], tol=protocol.tol)
        model.training_ids = doc["training_elements"]
        doc["feature_map"] = spec.to_dict()
        doc["training_features"] = X.tolist()
        doc["model"] = model.to_dict()
    else:
        model = experiment.build_qnn_model(task, cell, protocol, seed)
        _, history = hybrid.train_hybrid(
            X, y, model, hybrid.TrainConfig(epochs=protocol.epochs, learning_rate=protocol.learning_rate, seed=seed))
        doc["model"] = model.to_dict()
        doc["final_loss"] = history[-1]
    return doc


def predict_with(doc: dict, samples) -> np.ndarray:
    width = int(doc["n_features"])
    X_raw = dataset.feature_matrix(samples)
    if X_raw.shape[1] != width:
        raise QmlError(f"model expects {width} features ({', '.join(doc['feature_columns'])}), got {X_raw.shape[1]}")
    X = dataset.apply_scaler(dataset.ScalerParams.from_dict(doc["scaler"]), X_raw)
    classify = doc["mode"] == "classification"
    if doc["task"] in ("svc", "svr"):
        spec = FeatureMapSpec.from_dict(doc["feature_map"])
        Kc = qkernel.cross_matrix(X, np.asarray(doc["training_features"]), spec)
        model = svm.model_from_dict(doc["model"])
        if doc["task"] == "svc":
            signed, _ = svm.predict_svc(model, Kc)
            return (signed > 0).astype(int)
        raw = svm.predict_svr(model, Kc)
    else:
        model = hybrid.HybridModel.from_dict(doc["model"])
        if classify:
            return hybrid.predict_labels(X, model)
        raw = hybrid.predict_many(X, model)
    return dataset.TargetScaler.from_dict(doc["target_scaler"]).unscale(raw)


def cmd_predict(args) -> int:
    try:
        with open(args.model, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise QmlError(f"cannot read model {args.model}: {exc}") from None
    samples = dataset.load_table(args.data, require_sfe=False)
    pred = predict_with(doc, samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    column = "predicted_label" if doc["mode"] == "classification" else "predicted_sfe_mj_m2"
    with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["element", column])
        for s, p in zip(samples, pred):
            w.writerow([s.element, str(int(p)) if doc["mode"] == "classification" else repr(float(p))])
    log.info("wrote %d predictions to %s", len(samples), out / "predictions.csv")
    return EXIT_OK


def cmd_kernel(cfg: RunConfig) -> int:
    samples = _load(cfg, require_sfe=False)
    reps = int(_single(cfg.reps, 1, "reps"))
    ent = _single(cfg.entanglement, "full", "entanglement")
    spec = FeatureMapSpec(dataset.N_FEATURES, reps, ent)
    X = dataset.apply_scaler(dataset.fit_scaler(samples, hi=cfg.scale_max), samples)
    K = qkernel.gram_matrix(X, spec)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"kernel_reps{reps}_{spec.pattern.value}.csv"
    qkernel.write_kernel_csv(path, K, [s.element for s in samples])
    log.info("wrote %dx%d kernel to %s", K.shape[0], K.shape[1], path)
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.out) / "report.json"
    if not path.is_file():
        raise QmlError(f"no report.json in {args.out}")
    report = experiment.load_report(path)
    experiment.emit_outputs(report, args.out, timings=False)
    best = report.best_result
    print(f"task: {report.task}   cells: {len(report.results)}   failed: {sum(r.failed for r in report.results)}")
    print(f"best: {best.cell}   mean {best.mean:.4f}   std {best.std:.4f}")
    for name, rows in experiment.heatmap_tables(report).items():
        print(f"\n{name}")
        for row in rows:
            print("  " + "  ".join(f"{c[:8]:>8}" for c in row))
    for fit in report.full_fit.get("fits", []):
        metrics = {k: round(v, 4) for k, v in fit.items() if k in ("accuracy", "pearson_r2",
                                                                    "coefficient_of_determination")}
        print(f"full-data fit {fit['cell']}: {metrics or fit.get('failed')}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(bool(getattr(args, "quiet", False)))
    try:
        if args.command in ("predict", "report"):
            return {"predict": cmd_predict, "report": cmd_report}[args.command](args)
        cfg = resolve_config(args)
        _setup_logging(cfg.quiet)
        return {"tune": cmd_tune, "train": cmd_train, "kernel": cmd_kernel}[args.command](cfg)
    except UsageError as exc:
        print(f"qmlsfe {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QmlError, OSError) as exc:
        print(f"qmlsfe {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
