"""Hyperparameter sweeps, repeated cross-validation and figure-ready outputs.

Default protocol: 20 shuffled 80/20 splits per master seed, three master
seeds (``seed``, ``seed + 1``, ``seed + 2``), scaling refit on every
training fold.  A cell's score is the mean over all 60 splits, which equals
the mean of the three per-seed means.

Everything written to ``report.json`` and the CSVs is a function of the
dataset bytes, the seed, the grid and the protocol.  Wall-clock times go to
``timings.json`` so that reports compare byte for byte.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, dataset, hybrid, qkernel, svm
from .errors import ConfigurationError, MetricError, QmlError
from .featmap import PATTERN_ORDER, EntanglementPattern, FeatureMapSpec
from .qnn import AnsatzSpec

log = logging.getLogger(__name__)

TASKS = ("svc", "svr", "qnn", "hybrid-qnn")
REPORT_SCHEMA = 1
TIE_BREAK = "highest mean, then smaller reps, smaller C, entanglement circular<full<linear, smaller epsilon"


# ---------------------------------------------------------------- metrics

def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape or p.size == 0:
        raise MetricError(f"need equal, non-empty inputs; got shapes {p.shape} and {y.shape}")
    return float(np.mean(p == y))


def r2_scores(predictions, targets) -> dict:
    """Squared Pearson correlation and coefficient of determination."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape or p.size < 2:
        raise MetricError(f"need equal inputs of length >= 2; got shapes {p.shape} and {t.shape}")
    tc = t - t.mean()
    ss_tot = float(tc @ tc)
    if ss_tot == 0.0:
        raise MetricError("zero target variance")
    pc = p - p.mean()
    ss_p = float(pc @ pc)
    # constant predictions carry no linear association
    pearson = 0.0 if ss_p == 0.0 else float(pc @ tc) ** 2 / (ss_p * ss_tot)
    resid = t - p
    return {"pearson_r2": pearson, "coefficient_of_determination": 1.0 - float(resid @ resid) / ss_tot}


# ------------------------------------------------------------ configuration

@dataclass(frozen=True)
class GridSpec:
    C: tuple = (0.1, 1.0, 10.0, 100.0)
    epsilon: tuple = (0.01, 0.001)
    reps: tuple = (1, 2, 3, 4, 5)
    entanglement: tuple = ("circular", "full", "linear")

    def __post_init__(self):
        for name in ("C", "epsilon", "reps", "entanglement"):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigurationError(f"grid option {name!r} is empty")
            object.__setattr__(self, name, values)
        if any(int(r) != r or r < 1 for r in self.reps):
            raise ConfigurationError("reps must be an integer and at least 1")
        if any(not c > 0 for c in self.C):
            raise ConfigurationError("C values must be positive")
        if any(e < 0 for e in self.epsilon):
            raise ConfigurationError("epsilon values must be non-negative")
        object.__setattr__(self, "reps", tuple(int(r) for r in self.reps))
        object.__setattr__(self, "entanglement",
                           tuple(EntanglementPattern.parse(e).value for e in self.entanglement))

    @classmethod
    def default(cls, task: str) -> "GridSpec":
        if task in ("qnn", "hybrid-qnn"):
            return cls(C=(1.0,), epsilon=(0.0,), reps=(1, 2, 3), entanglement=("full",))
        return cls()

    def cells(self, task: str) -> list[dict]:
        """Cells in grid order: entanglement, then reps, then C, then epsilon."""
        _check_task(task)
        out = []
        for ent in self.entanglement:
            for r in self.reps:
                if task in ("qnn", "hybrid-qnn"):
                    out.append({"entanglement": ent, "reps": r})
                    continue
                for c in self.C:
                    if task == "svc":
                        out.append({"entanglement": ent, "reps": r, "C": float(c)})
                    else:
                        for e in self.epsilon:
                            out.append({"entanglement": ent, "reps": r, "C": float(c), "epsilon": float(e)})
        return out

    def to_dict(self, task: str | None = None) -> dict:
        d = {"C": list(self.C), "epsilon": list(self.epsilon), "reps": list(self.reps),
             "entanglement": list(self.entanglement)}
        if task in ("qnn", "hybrid-qnn"):
            d = {"reps": d["reps"], "entanglement": d["entanglement"]}
        elif task == "svc":
            d.pop("epsilon")
        return d


@dataclass(frozen=True)
class Protocol:
    scheme: str = "shuffle"
    repeats: int = 20
    folds: int = 5
    fraction: float = 0.2
    n_seeds: int = 3
    scale_max: float = math.pi
    label_convention: str = "methods"
    threshold: float = dataset.MG_SFE_THRESHOLD
    qnn_mode: str = "classification"
    epochs: int = 300
    learning_rate: float = 0.05
    tol: float = 1e-3

    def __post_init__(self):
        if self.scheme not in ("shuffle", "kfold"):
            raise ConfigurationError(f"protocol must be 'shuffle' or 'kfold', got {self.scheme!r}")
        if self.n_seeds < 1:
            raise ConfigurationError("need at least one master seed")
        if self.qnn_mode not in ("classification", "regression"):
            raise ConfigurationError(f"qnn mode must be classification or regression, got {self.qnn_mode!r}")
        if self.label_convention not in dataset.LABEL_CONVENTIONS:
            raise ConfigurationError(f"label convention must be one of {dataset.LABEL_CONVENTIONS}")

    def to_dict(self) -> dict:
        return asdict(self)

    def splits(self, m: int, seed: int):
        return dataset.make_splits(m, self.scheme, seed, folds=self.folds, fraction=self.fraction,
                                   repeats=self.repeats)

    def master_seeds(self, seed: int) -> list[int]:
        return [seed + k for k in range(self.n_seeds)]


def _check_task(task):
    if task not in TASKS:
        raise ConfigurationError(f"unknown task {task!r}; choose from {TASKS}")


def is_classification(task: str, protocol: Protocol) -> bool:
    return task == "svc" or (task in ("qnn", "hybrid-qnn") and protocol.qnn_mode == "classification")


# ------------------------------------------------------------------ results

@dataclass
class TrialResult:
    cell: dict
    scores: list = field(default_factory=list)
    seed_means: list = field(default_factory=list)
    mean: float | None = None
    std: float | None = None
    wall_time: float = 0.0
    failed: bool = False
    reason: str | None = None

    def to_dict(self) -> dict:
        # wall_time deliberately left out: it would break byte-identical reports
        return {"cell": self.cell, "mean": self.mean, "std": self.std, "seed_means": self.seed_means,
                "scores": self.scores, "failed": self.failed, "reason": self.reason}


@dataclass
class Report:
    task: str
    results: list
    seeds: list
    grid: dict
    protocol: dict
    dataset_fingerprint: str
    best: int | None = None
    full_fit: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    version: str = __version__

    @property
    def best_result(self) -> TrialResult | None:
        return None if self.best is None else self.results[self.best]

    def to_dict(self) -> dict:
        best = self.best_result
        return {
            "schema": REPORT_SCHEMA,
            "tool_version": self.version,
            "task": self.task,
            "dataset_fingerprint": self.dataset_fingerprint,
            "seeds": self.seeds,
            "grid": self.grid,
            "protocol": self.protocol,
            "config": self.config,
            "n_cells": len(self.results),
            "n_failed": sum(r.failed for r in self.results),
            "best": None if best is None else {"index": self.best, "cell": best.cell, "mean": best.mean,
                                                "std": best.std, "tie_break": TIE_BREAK},
            "results": [r.to_dict() for r in self.results],
            "full_fit": self.full_fit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        results = [TrialResult(r["cell"], r["scores"], r["seed_means"], r["mean"], r["std"], 0.0, r["failed"],
                               r["reason"]) for r in d["results"]]
        best = None if d["best"] is None else d["best"]["index"]
        return cls(d["task"], results, d["seeds"], d["grid"], d["protocol"], d["dataset_fingerprint"], best,
                   d.get("full_fit", {}), d.get("config", {}), d["tool_version"])


def _cell_sort_key(res: TrialResult):
    c = res.cell
    order = {p.value: k for k, p in enumerate(PATTERN_ORDER)}
    return (-res.mean, c["reps"], c.get("C", 0.0), order[c["entanglement"]], c.get("epsilon", 0.0))


def select_best(results) -> int | None:
    ok = [(k, r) for k, r in enumerate(results) if not r.failed]
    if not ok:
        return None
    return min(ok, key=lambda kr: _cell_sort_key(kr[1]))[0]


# ---------------------------------------------------------------- training

def _feature_map(cell) -> FeatureMapSpec:
    return FeatureMapSpec(dataset.N_FEATURES, int(cell["reps"]), cell["entanglement"])


def fit_predict(task, cell, train_samples, eval_samples, protocol: Protocol, seed: int = 0, kernels=None):
    """Train one model on ``train_samples`` and predict ``eval_samples``.

    Returns predictions in task units: 0/1 labels for classification, SFE in
    mJ/m^2 for regression.  ``kernels`` may supply precomputed (K, K_cross).
    """
    scaler = dataset.fit_scaler(train_samples, hi=protocol.scale_max)
    X_tr = dataset.apply_scaler(scaler, train_samples)
    X_ev = dataset.apply_scaler(scaler, eval_samples)
    classify = is_classification(task, protocol)
    if classify:
        y_tr = dataset.labels(train_samples)
    else:
        tscale = dataset.TargetScaler.fit(dataset.targets(train_samples))
        y_tr = tscale.scale(dataset.targets(train_samples))

    if task in ("svc", "svr"):
        spec = _feature_map(cell)
        if kernels is None:
            K = qkernel.gram_matrix(X_tr, spec)
            Kc = qkernel.cross_matrix(X_ev, X_tr, spec)
        else:
            K, Kc = kernels
        if task == "svc":
            model = svm.train_svc(K, y_tr, cell["C"], tol=protocol.tol)
            signed, _ = svm.predict_svc(model, Kc)
            return (signed > 0).astype(int)
        model = svm.train_svr(K, y_tr, cell["C"], cell["epsilon"], tol=protocol.tol)
        return tscale.unscale(svm.predict_svr(model, Kc))

    model = build_qnn_model(task, cell, protocol, seed)
    cfg = hybrid.TrainConfig(epochs=protocol.epochs, learning_rate=protocol.learning_rate, seed=seed)
    hybrid.train_hybrid(X_tr, y_tr, model, cfg)
    if classify:
        return hybrid.predict_labels(X_ev, model)
    return tscale.unscale(hybrid.predict_many(X_ev, model))


def build_qnn_model(task, cell, protocol: Protocol, seed: int) -> hybrid.HybridModel:
    """Feature-map reps and ansatz reps are both tied to the cell's ``reps``."""
    fm = _feature_map(cell)
    ansatz = AnsatzSpec(fm.n_qubits, fm.reps, fm.pattern)
    mode = protocol.qnn_mode
    if task == "qnn":
        return hybrid.build_pure_qnn(fm, ansatz, mode, seed)
    return hybrid.build_hybrid(dataset.N_FEATURES, fm, ansatz, mode, seed)


def _score(task, protocol, pred, val_samples) -> float:
    if is_classification(task, protocol):
        return accuracy(pred, dataset.labels(val_samples))
    return r2_scores(pred, dataset.targets(val_samples))["coefficient_of_determination"]


def _split_seed(master: int, split_index: int) -> int:
    return master * 10_007 + split_index


def evaluate_cell(task, cell, samples, protocol: Protocol, seed: int, cache: dict | None = None) -> TrialResult:
    """Score one hyperparameter cell over every split of every master seed.

    Any exception inside a split marks the whole cell as failed with the
    reason; it is never raised to the caller.
    """
    _check_task(task)
    t0 = time.perf_counter()
    res = TrialResult(dict(cell))
    if is_classification(task, protocol):
        samples = dataset.derive_labels(samples, protocol.threshold, protocol.label_convention)
    try:
        if not is_classification(task, protocol) and np.ptp(dataset.targets(samples)) == 0:
            raise MetricError("zero target variance")
        for master in protocol.master_seeds(seed):
            seed_scores = []
            for k, plan in enumerate(protocol.splits(len(samples), master)):
                train = [samples[i] for i in plan.train]
                val = [samples[i] for i in plan.validation]
                kernels = None
                if cache is not None and task in ("svc", "svr"):
                    key = (master, k, cell["reps"], cell["entanglement"])
                    if key not in cache:
                        spec = _feature_map(cell)
                        scaler = dataset.fit_scaler(train, hi=protocol.scale_max)
                        X_tr = dataset.apply_scaler(scaler, train)
                        X_val = dataset.apply_scaler(scaler, val)
                        cache[key] = (qkernel.gram_matrix(X_tr, spec), qkernel.cross_matrix(X_val, X_tr, spec))
                    kernels = cache[key]
                pred = fit_predict(task, cell, train, val, protocol, _split_seed(master, k), kernels)
                seed_scores.append(_score(task, protocol, pred, val))
            res.scores.extend(seed_scores)
            res.seed_means.append(float(np.mean(seed_scores)))
        res.mean = float(np.mean(res.scores))
        res.std = float(np.std(res.scores))
    except QmlError as exc:
        res.failed, res.reason = True, str(exc)
        res.scores, res.seed_means, res.mean, res.std = [], [], None, None
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        res.failed, res.reason = True, f"{type(exc).__name__}: {exc}"
        res.scores, res.seed_means, res.mean, res.std = [], [], None, None
    res.wall_time = time.perf_counter() - t0
    return res


def _evaluate_group(args):
    task, cells, samples, protocol, seed = args
    cache = {}
    return [evaluate_cell(task, c, samples, protocol, seed, cache) for c in cells]


def full_fit(task, cells, samples, protocol: Protocol, seed: int) -> dict:
    """Train on every sample and predict every sample (in-sample figure data)."""
    classify = is_classification(task, protocol)
    if classify:
        samples = dataset.derive_labels(samples, protocol.threshold, protocol.label_convention)
    out = {"elements": [s.element for s in samples], "fits": []}
    if classify:
        out["actual"] = dataset.labels(samples).tolist()
    else:
        out["actual"] = dataset.targets(samples).tolist()
    for cell in cells:
        entry = {"cell": cell}
        try:
            pred = fit_predict(task, cell, samples, samples, protocol, seed)
            entry["predicted"] = [int(v) for v in pred] if classify else [float(v) for v in pred]
            if classify:
                entry["accuracy"] = accuracy(pred, out["actual"])
            else:
                entry.update(r2_scores(pred, out["actual"]))
        except (QmlError, ArithmeticError, ValueError) as exc:
            entry["failed"] = str(exc)
        out["fits"].append(entry)
    return out


def _figure_cells(task, grid_cells, results, best):
    """Cells that get a full-data fit: every reps value at the best cell's other settings."""
    if best is None:
        return []
    b = results[best].cell
    same = [c for c in grid_cells if all(c.get(k) == b.get(k) for k in b if k != "reps")]
    return sorted(same, key=lambda c: c["reps"])


def run_grid(task, grid: GridSpec, samples, protocol: Protocol, seed: int, jobs: int = 1,
             fingerprint: str = "", config: dict | None = None, with_full_fit: bool = True) -> Report:
    _check_task(task)
    cells = grid.cells(task)
    if not cells:
        raise ConfigurationError("grid has no cells")
    # cells sharing a feature map share kernels; keep them in one worker
    groups, order = {}, []
    for idx, c in enumerate(cells):
        key = (c["entanglement"], c["reps"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(idx)
    payloads = [(task, [cells[i] for i in groups[k]], samples, protocol, seed) for k in order]
    log.info("%s: %d cells in %d feature-map groups, %d worker(s)", task, len(cells), len(payloads), jobs)
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            group_results = list(pool.map(_evaluate_group, payloads))
    else:
        group_results = []
        for p in payloads:
            group_results.append(_evaluate_group(p))
            log.info("  %s reps=%s done", p[1][0]["entanglement"], p[1][0]["reps"])
    results = [None] * len(cells)
    for key, res_list in zip(order, group_results):
        for idx, res in zip(groups[key], res_list):
            results[idx] = res
    best = select_best(results)
    report = Report(task, results, protocol.master_seeds(seed), grid.to_dict(task), protocol.to_dict(),
                    fingerprint, best, config=config or {})
    if best is None:
        raise QmlError(f"all {len(cells)} cells failed; first reason: {results[0].reason}")
    if with_full_fit:
        report.full_fit = full_fit(task, _figure_cells(task, cells, results, best), samples, protocol, seed)
    return report


# ------------------------------------------------------------------ output

def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerows(rows)
    return buf.getvalue()


def heatmap_tables(report: Report) -> dict:
    """File name -> CSV rows.  Rows are reps, columns are C (one file per entanglement)."""
    grid = report.grid
    task = report.task
    tables = {}
    lookup = {}
    for r in report.results:
        c = r.cell
        lookup[(c["entanglement"], c["reps"], c.get("C"), c.get("epsilon"))] = None if r.failed else r.mean
    cs = grid.get("C", [None]) if task in ("svc", "svr") else [None]
    epss = grid.get("epsilon", [None]) if task == "svr" else [None]
    head = ["reps"] + ([f"C={c:g}" for c in cs] if cs != [None] else ["score"])
    for ent in grid["entanglement"]:
        slices = {"": None} if task != "svr" else {"": "max", **{f"_eps{e:g}": e for e in epss}}
        for suffix, eps_sel in slices.items():
            rows = [head]
            for reps in grid["reps"]:
                row = [str(reps)]
                for c in cs:
                    if task == "svr" and eps_sel == "max":
                        vals = [lookup.get((ent, reps, c, e)) for e in epss]
                        vals = [v for v in vals if v is not None]
                        row.append(_fmt(max(vals)) if vals else "")
                    else:
                        row.append(_fmt(lookup.get((ent, reps, c, eps_sel))))
                rows.append(row)
            tables[f"heatmap_{task}_{ent}{suffix}.csv"] = rows
    return tables


def figure_tables(report: Report) -> dict:
    ff = report.full_fit
    if not ff or not ff.get("fits"):
        return {}
    classify = report.task == "svc" or (report.task in ("qnn", "hybrid-qnn")
                                        and report.protocol.get("qnn_mode") == "classification")
    elements, actual = ff["elements"], ff["actual"]
    fits = [f for f in ff["fits"] if "failed" not in f]
    tables = {}
    best_cell = report.best_result.cell if report.best_result else None
    if classify:
        rows = [["element", "actual"] + [f"predicted_l{f['cell']['reps']}" for f in fits]]
        for i, el in enumerate(elements):
            rows.append([el, str(actual[i])] + [str(f["predicted"][i]) for f in fits])
        tables["classification_bars.csv"] = rows
    else:
        best_fit = next((f for f in fits if f["cell"] == best_cell), fits[0] if fits else None)
        if best_fit is not None:
            rows = [["element", "actual", "predicted"]]
            for i, el in enumerate(elements):
                rows.append([el, _fmt(actual[i]), _fmt(best_fit["predicted"][i])])
            tables["predictions.csv"] = rows
        rows = [["element", "actual"] + [f"predicted_l{f['cell']['reps']}" for f in fits]]
        for i, el in enumerate(elements):
            rows.append([el, _fmt(actual[i])] + [_fmt(f["predicted"][i]) for f in fits])
        tables["parity_by_reps.csv"] = rows
    return tables


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_outputs(report: Report, out_dir, timings: bool = True) -> list[Path]:
    """Write report.json, heatmap CSVs and figure CSVs; returns the paths written.

    Everything is rendered in memory first, so a report that cannot be
    rendered leaves the directory untouched.
    """
    if not report.results:
        raise ConfigurationError("refusing to write an empty report")
    files = {"report.json": json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"}
    for name, rows in {**heatmap_tables(report), **figure_tables(report)}.items():
        files[name] = _csv_text(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory is not writable: {out}")
    written = []
    for name, text in files.items():
        _atomic_write(out / name, text)
        written.append(out / name)
    if timings:
        t = {"cells": [{"cell": r.cell, "wall_time_s": r.wall_time} for r in report.results]}
        _atomic_write(out / "timings.json", json.dumps(t, indent=2) + "\n")
    return written


def load_report(path) -> Report:
    with open(path, encoding="utf-8") as fh:
        return Report.from_dict(json.load(fh))
