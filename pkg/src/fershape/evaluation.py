"""Cross-validation, (C, gamma) grid search, confusion matrices and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    FershapeError,
    LabelError,
    LengthMismatchError,
    SingleClassError,
    TooFewSamplesError,
    TooFewSubjectsError,
)
from .labels import NEUTRAL, canonical_sorted, class_index
from .pipeline import ExtractionConfig, FeatureMatrix, Standardizer, build_feature_matrix
from .regions import RegionMap, default_region_map
from .svm import KernelRows, _sq_dists, ova_train

log = logging.getLogger(__name__)

FOLD_MODES = ("stratified", "subject_independent")
DEFAULT_C_GRID = tuple(2.0**e for e in range(-3, 10, 2))
DEFAULT_GAMMA_GRID = tuple(2.0**e for e in range(-11, 2, 2))


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    mode: str
    seed: int

    def splits(self):
        """``(train_indices, test_indices)`` for each fold id in order."""
        for f in range(self.k):
            test = np.flatnonzero(self.assignments == f)
            train = np.flatnonzero(self.assignments != f)
            yield train, test

    def sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def make_folds(labels, subjects=None, k: int = 5, mode: str = "stratified",
               seed: int = 0) -> FoldPlan:
    """Partition samples into ``k`` folds.

    ``stratified`` deals each class's shuffled samples round-robin, continuing
    the deal across classes, so fold sizes differ by at most one overall.
    ``subject_independent`` keeps each subject's samples together and assigns
    subjects (largest first) to the currently smallest fold.
    """
    labels = list(labels)
    n = len(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    if mode not in FOLD_MODES:
        raise ValueError(f"mode must be one of {FOLD_MODES}, got {mode!r}")
    if n < k:
        raise TooFewSamplesError(f"{n} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    assign = np.empty(n, dtype=int)
    if mode == "stratified":
        lab = np.array(labels)
        pos = 0
        for c in canonical_sorted(labels):
            idx = rng.permutation(np.flatnonzero(lab == c))
            assign[idx] = (pos + np.arange(len(idx))) % k
            pos += len(idx)
    else:
        if subjects is None:
            raise ValueError("subject_independent folds need subject ids")
        subjects = [str(s) for s in subjects]
        if len(subjects) != n:
            raise LengthMismatchError("labels and subjects differ in length")
        unique = sorted(set(subjects))
        if len(unique) < k:
            raise TooFewSubjectsError(f"{len(unique)} subjects cannot fill {k} folds")
        members: dict[str, list[int]] = {s: [] for s in unique}
        for i, s in enumerate(subjects):
            members[s].append(i)
        order = [unique[i] for i in rng.permutation(len(unique))]
        order.sort(key=lambda s: -len(members[s]))  # stable: shuffled among equal sizes
        counts = np.zeros(k, dtype=int)
        for s in order:
            f = int(np.argmin(counts))
            assign[members[s]] = f
            counts[f] += len(members[s])
    return FoldPlan(k, assign, mode, seed)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    classes: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def percentages(self, decimals: int | None = 1) -> np.ndarray:
        """Row-normalized percentages.

        Rounded values use largest-remainder apportionment in integer
        arithmetic, so every non-empty row sums to exactly 100 and each cell
        is within one unit of the last decimal of its exact value.
        """
        rows = self.counts.sum(axis=1, keepdims=True)
        if decimals is None:
            return np.where(rows > 0, 100.0 * self.counts / np.maximum(rows, 1), 0.0)
        scale = 100 * 10**decimals
        out = np.zeros(self.counts.shape, dtype=np.int64)
        for i, (row, n) in enumerate(zip(self.counts.astype(np.int64), rows[:, 0])):
            if n == 0:
                continue
            q, r = np.divmod(row * scale, n)
            deficit = int(scale - q.sum())
            q[np.argsort(-r, kind="stable")[:deficit]] += 1
            out[i] = q
        return out / 10**decimals

    def tp_rates(self) -> np.ndarray:
        return np.diag(self.percentages())

    def fn_rates(self) -> np.ndarray:
        return np.round(100.0 - self.tp_rates(), 1)

    def format_table(self) -> str:
        """Percentage matrix with TP and FN columns, one decimal."""
        pct = self.percentages()
        width = 7
        head = " " * 4 + "".join(f"{c:>{width}}" for c in self.classes) + f"{'TP':>{width}}{'FN':>{width}}"
        lines = [head]
        for i, c in enumerate(self.classes):
            cells = "".join(f"{v:>{width}.1f}" for v in pct[i])
            lines.append(f"{c:<4}{cells}{self.tp_rates()[i]:>{width}.1f}{self.fn_rates()[i]:>{width}.1f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["true\\predicted", *self.classes])
        for c, row in zip(self.classes, self.counts.tolist()):
            writer.writerow([c, *row])
        return buf.getvalue()


def confusion(true_labels, predicted_labels, classes=None) -> ConfusionMatrix:
    true_labels, predicted_labels = list(true_labels), list(predicted_labels)
    if len(true_labels) != len(predicted_labels):
        raise LengthMismatchError(
            f"{len(true_labels)} true labels but {len(predicted_labels)} predictions"
        )
    if classes is None:
        classes = canonical_sorted(true_labels + predicted_labels)
    classes = tuple(classes)
    pos = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(true_labels, predicted_labels):
        class_index(t)
        class_index(p)
        if t not in pos or p not in pos:
            raise LabelError(f"label outside the confusion classes: {t!r} -> {p!r}")
        counts[pos[t], pos[p]] += 1
    return ConfusionMatrix(classes, counts)


@dataclass
class CvResult:
    predictions: list[str]
    fold_accuracies: list[float]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))


class _FoldData:
    """Standardized rows and squared distances for one train/test split."""

    def __init__(self, X, train, test):
        self.train, self.test = train, test
        self.standardizer = Standardizer.fit(X[train])
        self.Xtr = self.standardizer.transform(X[train])
        self.Xte = self.standardizer.transform(X[test])
        self.d_train = _sq_dists(self.Xtr, self.Xtr)
        self.d_test = _sq_dists(self.Xte, self.Xtr)


def _predict_fold(fold: _FoldData, labels: np.ndarray, C: float, gamma: float, tol: float):
    kernel = KernelRows.precomputed(fold.Xtr, gamma, np.exp(-gamma * fold.d_train))
    model = ova_train(fold.Xtr, labels[fold.train], C, gamma, tol=tol, kernel=kernel)
    k_test = np.exp(-gamma * fold.d_test)
    scores = np.column_stack([
        k_test[:, m.support_indices] @ m.dual_coef + m.bias for m in model.binary_models
    ])
    return [model.classes[j] for j in np.argmax(scores, axis=1)]


def fold_model(X, labels, train, C: float, gamma: float, tol: float = 1e-3):
    """Standardizer plus one-vs-all SVM fitted on the ``train`` rows alone.

    Cross-validation uses an equivalent precomputed-kernel path; this is the
    plain reference form.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(list(labels))
    return ova_train(X[train], labels[train], C, gamma, tol=tol, standardize=True)


def _check_classes(labels):
    classes = canonical_sorted(labels)
    if len(classes) < 2:
        raise SingleClassError(f"need at least two classes, got {classes}")
    return classes


def cross_validate(X, labels, plan: FoldPlan, C: float, gamma: float, tol: float = 1e-3,
                   _folds=None) -> CvResult:
    """Out-of-fold predictions with standardizer and SVM fitted on training folds only."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(list(labels))
    _check_classes(labels)
    folds = _folds or [_FoldData(X, tr, te) for tr, te in plan.splits()]
    predictions = np.empty(len(labels), dtype=object)
    accs = []
    for fold in folds:
        pred = _predict_fold(fold, labels, C, gamma, tol)
        predictions[fold.test] = pred
        accs.append(float(np.mean(np.array(pred) == labels[fold.test])))
    return CvResult(predictions.tolist(), accs)


@dataclass
class GridCell:
    C: float
    gamma: float
    accuracy: float
    fold_accuracies: list[float] = field(default_factory=list)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class GridResult:
    best: GridCell
    cells: list[GridCell]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["C", "gamma", "cv_accuracy", "failed"])
        for cell in self.cells:
            writer.writerow([repr(cell.C), repr(cell.gamma), f"{cell.accuracy:.6f}", int(cell.failed)])
        return buf.getvalue()


def grid_search(X, labels, plan: FoldPlan, C_grid=DEFAULT_C_GRID,
                gamma_grid=DEFAULT_GAMMA_GRID, tol: float = 1e-3) -> GridResult:
    """Mean k-fold accuracy for every (C, gamma); ties go to smaller C, then smaller gamma.

    A cell whose training raises scores 0 and carries the error message.
    """
    if not C_grid or not gamma_grid:
        raise ValueError("grid must be non-empty")
    X = np.asarray(X, dtype=float)
    labels = np.asarray(list(labels))
    _check_classes(labels)
    folds = [_FoldData(X, tr, te) for tr, te in plan.splits()]
    cells = []
    for C in sorted(C_grid):
        for gamma in sorted(gamma_grid):
            try:
                res = cross_validate(X, labels, plan, C, gamma, tol, _folds=folds)
                cells.append(GridCell(C, gamma, res.mean_accuracy, res.fold_accuracies))
            except (FershapeError, ValueError) as exc:
                log.warning("grid cell C=%g gamma=%g failed: %s", C, gamma, exc)
                cells.append(GridCell(C, gamma, 0.0, error=f"{type(exc).__name__}: {exc}"))
    best = cells[0]
    for cell in cells[1:]:
        if cell.accuracy > best.accuracy:
            best = cell
    return GridResult(best, cells)


@dataclass(frozen=True)
class EvalConfig:
    k: int = 5
    mode: str = "stratified"
    seed: int = 0
    C_grid: tuple[float, ...] = DEFAULT_C_GRID
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    tol: float = 1e-3
    six_class: bool = True

    def to_dict(self) -> dict:
        return {
            "k": self.k, "mode": self.mode, "seed": self.seed,
            "C_grid": list(self.C_grid), "gamma_grid": list(self.gamma_grid),
            "tol": self.tol, "six_class": self.six_class,
        }


@dataclass
class ProtocolResult:
    """Grid search plus the out-of-fold confusion at the selected cell."""

    grid: GridResult
    confusion: ConfusionMatrix
    predictions: list[str]
    fold_sizes: list[int]

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy


@dataclass
class EvaluationReport:
    config: EvalConfig
    extraction: dict
    n_samples: int
    failures: list[tuple[str, str]]
    seven: ProtocolResult
    six: ProtocolResult | None

    @property
    def partial(self) -> bool:
        return bool(self.failures) or any(c.failed for c in self.seven.grid.cells)

    def metrics(self) -> dict:
        def block(res: ProtocolResult | None):
            if res is None:
                return None
            return {
                "accuracy": round(res.accuracy, 6),
                "best_C": res.grid.best.C,
                "best_gamma": res.grid.best.gamma,
                "cv_mean_accuracy": round(res.grid.best.accuracy, 6),
                "classes": list(res.confusion.classes),
                "tp": res.confusion.tp_rates().tolist(),
                "fn": res.confusion.fn_rates().tolist(),
                "fold_sizes": res.fold_sizes,
            }

        return {
            "seed": self.config.seed,
            "n_samples": self.n_samples,
            "n_failures": len(self.failures),
            "partial": self.partial,
            "seven_class": block(self.seven),
            "six_class": block(self.six),
            "evaluation": self.config.to_dict(),
            "extraction": self.extraction,
        }

    def text(self) -> str:
        lines = [
            "Facial expression recognition: fused Fourier descriptor evaluation",
            f"seed: {self.config.seed}",
            f"folds: {self.config.k} ({self.config.mode})",
            f"samples: {self.n_samples} (extraction failures: {len(self.failures)})",
            "",
        ]
        for title, res in (("Seven-class", self.seven), ("Six-class (neutral removed)", self.six)):
            if res is None:
                lines += [f"{title}: not run", ""]
                continue
            best = res.grid.best
            lines += [
                f"{title} confusion matrix (%), overall accuracy {100 * res.accuracy:.1f}%",
                f"selected C={best.C:g} gamma={best.gamma:g} (mean fold accuracy {100 * best.accuracy:.1f}%)",
                res.confusion.format_table(),
                "",
            ]
        if self.failures:
            lines.append("Extraction failures:")
            lines += [f"  {sid}: {msg}" for sid, msg in self.failures]
        return "\n".join(lines).rstrip() + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.text(), encoding="utf-8")
        (out / "confusion.csv").write_text(self.seven.confusion.to_csv(), encoding="utf-8")
        (out / "grid.csv").write_text(self.seven.grid.to_csv(), encoding="utf-8")
        if self.six is not None:
            (out / "confusion_6class.csv").write_text(self.six.confusion.to_csv(), encoding="utf-8")
            (out / "grid_6class.csv").write_text(self.six.grid.to_csv(), encoding="utf-8")
        (out / "metrics.json").write_text(
            json.dumps(self.metrics(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return out


def run_protocol(X, labels, subjects, config: EvalConfig) -> ProtocolResult:
    plan = make_folds(labels, subjects, config.k, config.mode, config.seed)
    grid = grid_search(X, labels, plan, config.C_grid, config.gamma_grid, config.tol)
    cv = cross_validate(X, labels, plan, grid.best.C, grid.best.gamma, config.tol)
    classes = canonical_sorted(labels)
    return ProtocolResult(grid, confusion(labels, cv.predictions, classes), cv.predictions, plan.sizes())


def evaluate(data, config: EvalConfig | None = None, *,
             extraction: ExtractionConfig | None = None,
             region_map: RegionMap | None = None, strict: bool = False) -> EvaluationReport:
    """Extract features (unless given a :class:`FeatureMatrix`), then run the protocol.

    The six-class result repeats fold construction, grid search and
    cross-validation with every neutral sample removed.
    """
    config = config or EvalConfig()
    extraction = extraction or ExtractionConfig()
    if isinstance(data, FeatureMatrix):
        fm = data
    else:
        region_map = region_map or default_region_map()
        fm = build_feature_matrix(data, region_map, extraction, strict=strict)
    _check_classes(fm.labels)
    seven = run_protocol(fm.X, fm.labels, fm.subject_ids, config)
    six = None
    if config.six_class and NEUTRAL in fm.labels:
        keep = [i for i, lab in enumerate(fm.labels) if lab != NEUTRAL]
        sub = fm.subset(keep)
        if len(set(sub.labels)) >= 2:
            six = run_protocol(sub.X, sub.labels, sub.subject_ids, config)
    extraction_echo = extraction.to_dict()
    if region_map is not None:
        extraction_echo = {**extraction_echo, "region_map": region_map.to_dict()}
    return EvaluationReport(config, extraction_echo, len(fm), list(fm.failures), seven, six)


__all__ = [
    "ConfusionMatrix",
    "EvalConfig",
    "EvaluationReport",
    "FoldPlan",
    "GridResult",
    "confusion",
    "cross_validate",
    "evaluate",
    "fold_model",
    "grid_search",
    "make_folds",
]
