"""RBF-kernel support vector machines trained by SMO, and a one-vs-all wrapper.

The binary solver minimizes the dual ``0.5 a'Qa - e'a`` subject to
``0 <= a_i <= C`` and ``y'a = 0`` with ``Q_ij = y_i y_j k(x_i, x_j)``. Working
pairs are chosen by maximal violation for ``i`` and second-order gain for
``j`` (Fan, Chen and Lin, 2005). Training stops when the maximal violating
pair gap ``m(a) - M(a)`` drops below ``tol``.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConvergenceWarning,
    DimensionMismatchError,
    FileFormatError,
    InvalidCError,
    LayoutMismatchError,
    SingleClassError,
)
from .labels import canonical_sorted, class_index
from .pipeline import Standardizer

MODEL_FORMAT = "fershape-ova-svm"
MODEL_VERSION = 1

_TAU = 1e-12


def rbf(x, y, gamma: float) -> float:
    """``exp(-gamma * ||x - y||^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"rbf inputs differ in shape: {x.shape} vs {y.shape}")
    _check_gamma(gamma)
    d = x - y
    return math.exp(-gamma * float(d @ d))


def _check_gamma(gamma):
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")


def _sq_dists(a: np.ndarray, b: np.ndarray, chunk: int = 64) -> np.ndarray:
    # explicit differences keep k(x, x) == 1 and K symmetric bit-for-bit
    out = np.empty((len(a), len(b)))
    for start in range(0, len(a), chunk):
        block = a[start:start + chunk, None, :] - b[None, :, :]
        out[start:start + chunk] = np.einsum("ijk,ijk->ij", block, block)
    return out


def rbf_matrix(a, b, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return np.exp(-gamma * _sq_dists(a, b))


class KernelRows:
    """Row access to the training kernel matrix, fully precomputed or LRU-cached."""

    def __init__(self, X: np.ndarray, gamma: float, cache_rows: int | None = None):
        self.X = X
        self.gamma = gamma
        self.cache_rows = cache_rows
        if cache_rows is None:
            self._full = rbf_matrix(X, X, gamma)
        else:
            if cache_rows < 2:
                raise ValueError("cache_rows must be >= 2")
            self._full = None
            self._cache: OrderedDict[int, np.ndarray] = OrderedDict()

    @classmethod
    def precomputed(cls, X: np.ndarray, gamma: float, K: np.ndarray) -> "KernelRows":
        obj = cls.__new__(cls)
        obj.X, obj.gamma, obj.cache_rows, obj._full = X, gamma, None, K
        return obj

    def __len__(self):
        return len(self.X)

    def row(self, i: int) -> np.ndarray:
        if self._full is not None:
            return self._full[i]
        cached = self._cache.get(i)
        if cached is not None:
            self._cache.move_to_end(i)
            return cached
        # one-row call into the same chunked routine as the full matrix
        r = rbf_matrix(self.X[i:i + 1], self.X, self.gamma)[0]
        self._cache[i] = r
        if len(self._cache) > self.cache_rows:
            self._cache.popitem(last=False)
        return r


@dataclass(frozen=True, eq=False)
class BinarySvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float
    support_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    converged: bool = True
    n_iter: int = 0
    kkt_gap: float = 0.0
    objective_history: tuple = ()

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                f"model expects {self.n_features} features, got {X.shape[1]}"
            )
        if len(self.dual_coef) == 0:
            return np.full(len(X), self.bias)
        return rbf_matrix(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def to_dict(self) -> dict:
        return {
            "bias": self.bias,
            "dual_coef": self.dual_coef.tolist(),
            "support_vectors": self.support_vectors.tolist(),
            "converged": self.converged,
            "n_iter": self.n_iter,
        }


def _signs(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("binary labels must be -1 or +1")
    if not ((y > 0).any() and (y < 0).any()):
        raise SingleClassError("binary training needs at least one example of each sign")
    return y


def _solve(K: KernelRows, y: np.ndarray, C: float, tol: float, max_iter: int,
           track_objective: bool):
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = y > 0
    history = [0.0] if track_objective else None
    it = 0
    converged = False
    gap = math.inf
    while True:
        yG = -y * G
        below_c = alpha < C
        above_0 = alpha > 0
        up = np.where(pos, below_c, above_0)
        low = np.where(pos, above_0, below_c)
        up_scores = np.where(up, yG, -np.inf)
        i = int(np.argmax(up_scores))
        m = up_scores[i]
        low_scores = np.where(low, yG, np.inf)
        M = float(low_scores.min())
        gap = m - M
        if gap < tol:
            converged = True
            break
        if it >= max_iter:
            break

        Ki = K.row(i)
        b = m - yG
        cand = low & (b > 0)
        a = 1.0 + 1.0 - 2.0 * Ki  # k(x, x) == 1 for the RBF kernel
        a = np.where(a > 0, a, _TAU)
        gain = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(gain))
        Kj = K.row(j)

        yi, yj = y[i], y[j]
        ai_old, aj_old = alpha[i], alpha[j]
        quad = max(2.0 - 2.0 * Ki[j], _TAU)
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += y * (yi * (ai - ai_old) * Ki + yj * (aj - aj_old) * Kj)
        it += 1
        if history is not None:
            # dual objective -(0.5 a'Qa - e'a) = -0.5 a'(G - e)
            history.append(float(-0.5 * alpha @ (G - 1.0)))

    # bias from free vectors, else the midpoint of the feasible interval
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        at_c = alpha >= C
        ub_mask = np.where(at_c, ~pos, pos)
        lb_mask = np.where(at_c, pos, ~pos)
        ub = float(yG[ub_mask].min()) if ub_mask.any() else math.inf
        lb = float(yG[lb_mask].max()) if lb_mask.any() else -math.inf
        rho = (ub + lb) / 2
    return alpha, -rho, converged, it, float(gap), tuple(history or ())


def smo_train(X, labels, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-3,
              max_iter: int | None = None, cache_rows: int | None = None,
              track_objective: bool = False, kernel: KernelRows | None = None) -> BinarySvmModel:
    """Train a binary RBF SVM on labels in {-1, +1}.

    Hitting ``max_iter`` returns the current iterate with ``converged=False``
    and emits a :class:`ConvergenceWarning`. ``track_objective`` records the
    dual objective after every update.
    """
    if not (C > 0 and math.isfinite(C)):
        raise InvalidCError(f"C must be positive and finite, got {C}")
    _check_gamma(gamma)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = _signs(labels)
    if len(y) != len(X):
        raise DimensionMismatchError(f"{len(X)} rows but {len(y)} labels")
    if kernel is None:
        kernel = KernelRows(X, gamma, cache_rows)
    if max_iter is None:
        max_iter = max(100_000, 100 * len(y))
    alpha, bias, converged, n_iter, gap, history = _solve(
        kernel, y, float(C), tol, max_iter, track_objective
    )
    if not converged:
        warnings.warn(
            f"SMO stopped after {n_iter} iterations with KKT gap {gap:.3g} > tol {tol}",
            ConvergenceWarning,
            stacklevel=2,
        )
    sv = np.flatnonzero(alpha > 0)
    return BinarySvmModel(
        support_vectors=X[sv].copy(),
        dual_coef=alpha[sv] * y[sv],
        bias=float(bias),
        gamma=float(gamma),
        C=float(C),
        support_indices=sv,
        converged=converged,
        n_iter=n_iter,
        kkt_gap=gap,
        objective_history=history,
    )


def dual_alphas(model: BinarySvmModel, n_train: int) -> np.ndarray:
    """Full-length ``|alpha|`` vector over the training rows."""
    alpha = np.zeros(n_train)
    alpha[model.support_indices] = np.abs(model.dual_coef)
    return alpha


def kkt_violations(model: BinarySvmModel, X, labels) -> np.ndarray:
    """Per-row violation of the KKT conditions on the training data.

    With margin ``u = y f(x)``: rows at alpha=0 need ``u >= 1``, rows at
    alpha=C need ``u <= 1`` and free rows need ``u == 1``.
    """
    y = np.asarray(labels, dtype=float)
    u = y * model.decision_function(X)
    alpha = dual_alphas(model, len(y))
    at_zero = alpha == 0
    at_c = alpha >= model.C
    free = ~(at_zero | at_c)
    viol = np.zeros(len(y))
    viol[at_zero] = np.maximum(0.0, 1.0 - u[at_zero])
    viol[at_c] = np.maximum(0.0, u[at_c] - 1.0)
    viol[free] = np.abs(u[free] - 1.0)
    return viol


@dataclass(frozen=True, eq=False)
class MultiClassSvmModel:
    classes: tuple[str, ...]
    binary_models: tuple[BinarySvmModel, ...]
    standardizer: Standardizer | None = None
    layout_fingerprint: str = ""
    extraction: dict | None = None  # config + region map used to build the features

    def __post_init__(self):
        if len(self.classes) != len(self.binary_models):
            raise ValueError("one binary model per class is required")
        idx = [class_index(c) for c in self.classes]
        if idx != sorted(idx):
            raise ValueError("classes must be in canonical order")

    @property
    def n_features(self) -> int:
        return self.binary_models[0].n_features

    @property
    def gamma(self) -> float:
        return self.binary_models[0].gamma

    @property
    def C(self) -> float:
        return self.binary_models[0].C

    def decision_matrix(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                f"model expects {self.n_features} features, got {X.shape[1]}"
            )
        if self.standardizer is not None:
            X = self.standardizer.transform(X)
        return np.column_stack([m.decision_function(X) for m in self.binary_models])

    def predict(self, X) -> list[str]:
        scores = self.decision_matrix(X)
        return [self.classes[k] for k in argmax_rows(scores)]


def argmax_rows(scores) -> np.ndarray:
    """Column index of each row's maximum; ties go to the lowest index."""
    return np.argmax(np.atleast_2d(scores), axis=1)


def ova_train(X, labels, C: float = 1.0, gamma: float = 1.0, *, tol: float = 1e-3,
              standardize: bool = False, max_iter: int | None = None,
              cache_rows: int | None = None, layout_fingerprint: str = "",
              extraction: dict | None = None, kernel: KernelRows | None = None) -> MultiClassSvmModel:
    """One binary machine per class present in ``labels`` (that class vs the rest).

    With ``standardize=True`` a :class:`Standardizer` is fitted on ``X`` and
    stored in the model, so callers pass raw training rows only. A
    precomputed ``kernel`` must match the (standardized) training rows.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = list(labels)
    if len(labels) != len(X):
        raise DimensionMismatchError(f"{len(X)} rows but {len(labels)} labels")
    classes = canonical_sorted(labels)  # raises LabelError on unknown tokens
    if len(classes) < 2:
        raise SingleClassError("one-vs-all training needs at least two classes")
    if not (C > 0 and math.isfinite(C)):
        raise InvalidCError(f"C must be positive and finite, got {C}")
    standardizer = None
    if standardize:
        standardizer = Standardizer.fit(X)
        X = standardizer.transform(X)
    if kernel is None:
        kernel = KernelRows(X, gamma, cache_rows)
    elif len(kernel) != len(X):
        raise DimensionMismatchError("precomputed kernel does not match the training rows")
    lab = np.array(labels)
    models = tuple(
        smo_train(X, np.where(lab == c, 1.0, -1.0), C, gamma, tol=tol,
                  max_iter=max_iter, kernel=kernel)
        for c in classes
    )
    return MultiClassSvmModel(tuple(classes), models, standardizer, layout_fingerprint, extraction)


def ova_predict(model: MultiClassSvmModel, x) -> tuple[str, np.ndarray]:
    """Predicted class for one vector and the per-class decision values."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatchError("ova_predict takes a single feature vector")
    scores = model.decision_matrix(x[None, :])[0]
    return model.classes[int(argmax_rows(scores)[0])], scores


def save_model(model: MultiClassSvmModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "classes": list(model.classes),
        "kernel": {"type": "rbf", "gamma": model.gamma},
        "C": model.C,
        "n_features": model.n_features,
        "layout_fingerprint": model.layout_fingerprint,
        "standardizer": None if model.standardizer is None else model.standardizer.to_dict(),
        "extraction": model.extraction,
        "models": [dict(cls=c, **m.to_dict()) for c, m in zip(model.classes, model.binary_models)],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> MultiClassSvmModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FileFormatError(f"{path}: not a model file: {exc}") from exc
    try:
        if doc["format"] != MODEL_FORMAT:
            raise FileFormatError(f"{path}: unexpected format tag {doc['format']!r}")
        if doc["version"] != MODEL_VERSION:
            raise FileFormatError(f"{path}: unsupported model version {doc['version']}")
        gamma = float(doc["kernel"]["gamma"])
        C = float(doc["C"])
        n_features = int(doc["n_features"])
        models = []
        for entry in doc["models"]:
            sv = np.array(entry["support_vectors"], dtype=float).reshape(-1, n_features)
            coef = np.array(entry["dual_coef"], dtype=float)
            if len(coef) != len(sv):
                raise FileFormatError(f"{path}: support vector / coefficient count mismatch")
            models.append(BinarySvmModel(sv, coef, float(entry["bias"]), gamma, C,
                                         converged=bool(entry["converged"]),
                                         n_iter=int(entry["n_iter"])))
        std = doc["standardizer"]
        return MultiClassSvmModel(
            classes=tuple(doc["classes"]),
            binary_models=tuple(models),
            standardizer=None if std is None else Standardizer.from_dict(std),
            layout_fingerprint=doc["layout_fingerprint"],
            extraction=doc["extraction"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FileFormatError):
            raise
        raise FileFormatError(f"{path}: malformed model file: {exc}") from exc


def check_layout(model: MultiClassSvmModel, fingerprint: str) -> None:
    if model.layout_fingerprint and fingerprint and fingerprint != model.layout_fingerprint:
        raise LayoutMismatchError(
            f"feature layout {fingerprint[:12]} does not match model layout {model.layout_fingerprint[:12]}"
        )
