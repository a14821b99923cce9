"""Element descriptor / stacking-fault-energy table: loading, labels, scaling, splits."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IngestionError

HEADER = ("element", "bulk_modulus_gpa", "volume_a3", "electronegativity", "sfe_mj_m2")
FEATURE_COLUMNS = HEADER[1:4]
N_FEATURES = len(FEATURE_COLUMNS)

MG_SFE_THRESHOLD = 19.0  # mJ/m^2, pure magnesium
TC_BULK_MODULUS_GPA = 281.0
LABEL_CONVENTIONS = ("methods", "dataset")


@dataclass(frozen=True)
class Sample:
    element: str
    bulk_modulus: float
    volume: float
    electronegativity: float
    sfe: float | None = None
    label: int | None = None

    @property
    def features(self) -> np.ndarray:
        return np.array([self.bulk_modulus, self.volume, self.electronegativity])


def _parse_float(text, row_no, column):
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(f"row {row_no}, column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise IngestionError(f"row {row_no}, column {column!r}: value {text!r} is not finite")
    return value


def load_table(path, require_sfe: bool = True) -> list[Sample]:
    """Read the descriptor CSV.

    A Tc row with an empty bulk modulus gets 281 GPa, the only gap in the
    usual source tables.  ``require_sfe=False`` admits rows without a target
    (prediction input).
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: file is empty") from None
        missing = [c for c in HEADER if c not in header]
        if missing:
            raise IngestionError(
                f"{path}: missing column(s) {missing}; expected header {','.join(HEADER)} "
                f"({N_FEATURES} features: {', '.join(FEATURE_COLUMNS)})"
            )
        col = {name: header.index(name) for name in HEADER}
        samples = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise IngestionError(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
            cell = {name: row[i].strip() for name, i in col.items()}
            element = cell["element"]
            if not element:
                raise IngestionError(f"row {row_no}, column 'element': empty symbol")
            values = {}
            for name in FEATURE_COLUMNS:
                if cell[name] == "":
                    if name == "bulk_modulus_gpa" and element == "Tc":
                        values[name] = TC_BULK_MODULUS_GPA
                        continue
                    raise IngestionError(f"row {row_no}, column {name!r}: missing value for {element}")
                values[name] = _parse_float(cell[name], row_no, name)
                if values[name] <= 0:
                    raise IngestionError(f"row {row_no}, column {name!r}: must be positive, got {values[name]}")
            sfe = None
            if cell["sfe_mj_m2"] != "":
                sfe = _parse_float(cell["sfe_mj_m2"], row_no, "sfe_mj_m2")
            elif require_sfe:
                raise IngestionError(f"row {row_no}, column 'sfe_mj_m2': missing target for {element}")
            samples.append(Sample(element, values["bulk_modulus_gpa"], values["volume_a3"],
                                  values["electronegativity"], sfe))
    if not samples:
        raise IngestionError(f"{path}: no data rows")
    return samples


def fingerprint(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def label_for(sfe: float, threshold: float = MG_SFE_THRESHOLD, convention: str = "methods") -> int:
    """Binary ductility label.

    ``methods``: SFE above the threshold is 0, otherwise 1.
    ``dataset``: SFE below the threshold is 0, otherwise 1.
    """
    if convention == "methods":
        return 0 if sfe > threshold else 1
    if convention == "dataset":
        return 0 if sfe < threshold else 1
    raise ConfigurationError(f"unknown label convention {convention!r}; choose from {LABEL_CONVENTIONS}")


def derive_labels(samples, threshold: float = MG_SFE_THRESHOLD, convention: str = "methods") -> list[Sample]:
    out = []
    for s in samples:
        if s.sfe is None:
            raise ConfigurationError(f"{s.element} has no SFE; cannot derive a label")
        out.append(replace(s, label=label_for(s.sfe, threshold, convention)))
    return out


def feature_matrix(samples) -> np.ndarray:
    return np.array([s.features for s in samples], dtype=float).reshape(len(samples), N_FEATURES)


def targets(samples) -> np.ndarray:
    return np.array([s.sfe for s in samples], dtype=float)


def labels(samples) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=int)


@dataclass(frozen=True)
class ScalerParams:
    mins: tuple
    maxs: tuple
    lo: float = 0.0
    hi: float = math.pi

    def to_dict(self) -> dict:
        return {"mins": list(self.mins), "maxs": list(self.maxs), "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d) -> "ScalerParams":
        return cls(tuple(d["mins"]), tuple(d["maxs"]), float(d["lo"]), float(d["hi"]))


def _as_matrix(data) -> np.ndarray:
    if len(data) and isinstance(data[0], Sample):
        return feature_matrix(data)
    return np.atleast_2d(np.asarray(data, dtype=float))


def fit_scaler(train, hi: float = math.pi, lo: float = 0.0) -> ScalerParams:
    """Min-max statistics from the training fold only."""
    X = _as_matrix(train)
    if X.shape[0] == 0:
        raise ConfigurationError("cannot fit a scaler on an empty training fold")
    mins, maxs = X.min(axis=0), X.max(axis=0)
    flat = np.flatnonzero(maxs <= mins)
    if flat.size:
        raise ConfigurationError(f"feature column(s) {flat.tolist()} are constant on the training fold")
    if not hi > lo:
        raise ConfigurationError(f"scaling range must satisfy hi > lo, got [{lo}, {hi}]")
    return ScalerParams(tuple(float(v) for v in mins), tuple(float(v) for v in maxs), float(lo), float(hi))


def apply_scaler(params: ScalerParams, data) -> np.ndarray:
    """Map features into [lo, hi]; values outside the training range are clamped."""
    X = _as_matrix(data)
    mins, maxs = np.asarray(params.mins), np.asarray(params.maxs)
    if X.shape[1] != mins.shape[0]:
        raise ConfigurationError(f"scaler fitted on {mins.shape[0]} features, got {X.shape[1]}")
    Z = params.lo + (X - mins) / (maxs - mins) * (params.hi - params.lo)
    return np.clip(Z, params.lo, params.hi)


@dataclass(frozen=True)
class TargetScaler:
    """Affine map of regression targets onto [-1, 1] (the range of a Z-string expectation)."""

    t_min: float
    t_max: float

    @classmethod
    def fit(cls, t) -> "TargetScaler":
        t = np.asarray(t, dtype=float)
        if t.size == 0:
            raise ConfigurationError("cannot fit a target scaler on no targets")
        if t.max() <= t.min():
            raise ConfigurationError("zero target variance")
        return cls(float(t.min()), float(t.max()))

    def scale(self, t) -> np.ndarray:
        return 2.0 * (np.asarray(t, dtype=float) - self.t_min) / (self.t_max - self.t_min) - 1.0

    def unscale(self, z) -> np.ndarray:
        return (np.asarray(z, dtype=float) + 1.0) / 2.0 * (self.t_max - self.t_min) + self.t_min

    def to_dict(self) -> dict:
        return {"t_min": self.t_min, "t_max": self.t_max}

    @classmethod
    def from_dict(cls, d) -> "TargetScaler":
        return cls(float(d["t_min"]), float(d["t_max"]))


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    train: tuple
    validation: tuple
    repeat: int = 0
    fold: int = 0


def make_splits(m: int, scheme: str = "shuffle", seed: int = 0, *, folds: int = 5,
                fraction: float = 0.2, repeats: int = 20) -> list[SplitPlan]:
    """Deterministic train/validation plans.

    ``kfold`` shuffles once and cuts ``folds`` disjoint validation blocks (the
    first ``m % folds`` blocks take one extra sample).  ``shuffle`` draws
    ``repeats`` independent permutations, each holding out ``ceil(fraction*m)``.
    """
    rng = np.random.default_rng(seed)
    if scheme == "kfold":
        if folds < 2 or m < folds:
            raise ConfigurationError(f"k-fold needs 2 <= folds <= m, got folds={folds}, m={m}")
        perm = rng.permutation(m)
        sizes = [m // folds + (1 if k < m % folds else 0) for k in range(folds)]
        plans, start = [], 0
        for k, size in enumerate(sizes):
            val = perm[start:start + size]
            start += size
            train = np.setdiff1d(perm, val, assume_unique=True)
            plans.append(SplitPlan(seed, tuple(sorted(train.tolist())), tuple(sorted(val.tolist())), 0, k))
        return plans
    if scheme == "shuffle":
        if not 0 < fraction < 1:
            raise ConfigurationError(f"validation fraction must be in (0, 1), got {fraction}")
        n_val = math.ceil(fraction * m - 1e-12)
        if n_val < 1 or m - n_val < 1 or repeats < 1:
            raise ConfigurationError(f"cannot make {repeats} shuffled splits of {m} samples at fraction {fraction}")
        plans = []
        for r in range(repeats):
            perm = rng.permutation(m)
            plans.append(SplitPlan(seed, tuple(sorted(perm[n_val:].tolist())),
                                   tuple(sorted(perm[:n_val].tolist())), r, 0))
        return plans
    raise ConfigurationError(f"unknown split scheme {scheme!r}; choose 'shuffle' or 'kfold'")


def fixture_path() -> Path:
    """Bundled 21-row table with synthetic SFE values, for tests and demos."""
    return Path(__file__).parent / "data" / "synthetic_sfe.csv"
