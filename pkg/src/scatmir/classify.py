"""
Gaussian-kernel SVM trained by SMO, one-vs-one multi-class voting,
track-level maximum voting, cross-validated evaluation and confusion
matrices.

The binary solver minimizes the standard dual
``1/2 a^T Q a - sum(a)`` with ``Q_ij = y_i y_j K(x_i, x_j)``,
``0 <= a <= C`` and ``y^T a = 0``, updating the maximal KKT-violating pair
at each step until the violation gap falls below ``tol``.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError, InvalidInputError, TrainingError

DEFAULT_C = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA = tuple(4.0 ** k for k in range(-4, 2))  # 2^-8 .. 2^2
MAX_ITER_FACTOR = 200
SILENCE_DBFS = -60.0


def gaussian_kernel(a, b, gamma: float) -> np.ndarray:
    """K(u, v) = exp(-gamma * ||u - v||^2) for every row pair of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    d2 = (np.sum(a ** 2, axis=1)[:, None] + np.sum(b ** 2, axis=1)[None, :] - 2.0 * a @ b.T)
    return np.exp(-gamma * np.maximum(d2, 0.0))


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray       # alpha_i * y_i of the support vectors
    bias: float
    gamma: float
    C: float
    n_iter: int = 0

    def decision(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.dual_coef.size == 0:
            return np.full(x.shape[0], self.bias)
        return gaussian_kernel(x, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def predict(self, x) -> np.ndarray:
        """+1 where the decision value is >= 0, else -1."""
        return np.where(self.decision(x) >= 0.0, 1, -1)


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3,
              max_iter: int | None = None, alpha0: np.ndarray | None = None,
              ) -> tuple[np.ndarray, float, int]:
    """Dual solution ``(alpha, rho, iterations)`` on a precomputed kernel.

    The decision function is ``sum_i alpha_i y_i K(x_i, x) - rho``.
    ``alpha0`` warm-starts the solver; it must satisfy the constraints for
    ``C`` (a solution for a smaller C does).
    """
    n = y.size
    y = y.astype(np.float64)
    pos = y > 0
    alpha = np.zeros(n) if alpha0 is None else np.array(alpha0, dtype=np.float64)
    # s_t = -y_t * grad_t, with grad = Q alpha - 1 and Q = y y^T * K
    s = y - (K @ (alpha * y)) if np.any(alpha) else y.copy()
    up = np.where(pos, alpha < C, alpha > 0)
    low = np.where(pos, alpha > 0, alpha < C)
    diag = np.diag(K).copy()
    if max_iter is None:
        max_iter = max(10_000, MAX_ITER_FACTOR * n)
    ninf, pinf = -np.inf, np.inf
    it = 0
    for it in range(1, max_iter + 1):
        i = int(np.argmax(np.where(up, s, ninf)))
        j = int(np.argmin(np.where(low, s, pinf)))
        if s[i] - s[j] < tol or not up[i] or not low[j]:
            break
        yi, yj = y[i], y[j]
        quad = max(diag[i] + diag[j] - 2.0 * K[i, j], 1e-12)
        # step along alpha_i += yi t, alpha_j -= yj t, clipped to the box
        t = (s[i] - s[j]) / quad
        ai, aj = alpha[i], alpha[j]
        t = min(t, (C - ai) if yi > 0 else ai, aj if yj > 0 else (C - aj))
        dai, daj = yi * t, -yj * t
        alpha[i] = min(max(ai + dai, 0.0), C)
        alpha[j] = min(max(aj + daj, 0.0), C)
        s -= K[i] * (yi * (alpha[i] - ai))
        s -= K[j] * (yj * (alpha[j] - aj))
        for k in (i, j):
            up[k] = alpha[k] < C if pos[k] else alpha[k] > 0
            low[k] = alpha[k] > 0 if pos[k] else alpha[k] < C
    else:
        it = max_iter
    # rho: mean of y_t grad_t = -s_t over free vectors, else midpoint of the bounds
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        rho = float(np.mean(-s[free]))
    else:
        hi = np.max(s[up]) if np.any(up) else np.min(s[low])
        lo = np.min(s[low]) if np.any(low) else hi
        rho = float(-0.5 * (hi + lo))
    return alpha, rho, it


def svm_train(x, y, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-3,
              max_iter: int | None = None) -> SvmModel:
    """Binary SVM with labels in {+1, -1}."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if C <= 0 or gamma <= 0:
        raise TrainingError("C and gamma must be positive")
    if x.ndim != 2 or x.shape[0] != y.size:
        raise TrainingError("need one label per feature vector")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise TrainingError("binary labels must be +1 or -1")
    if np.unique(y).size < 2:
        raise TrainingError("both classes must be present")
    K = gaussian_kernel(x, x, gamma)
    alpha, rho, it = smo_solve(K, y, C, tol, max_iter)
    sv = alpha > 0
    return SvmModel(x[sv].copy(), alpha[sv] * y[sv], -rho, float(gamma), float(C), it)


def kkt_violations(model: SvmModel, x, y, alpha_full=None, tol: float = 1e-3) -> np.ndarray:
    """Per-point KKT residual of a trained model on its training data.

    With margins ``m = y f(x)``: ``alpha = 0`` needs ``m >= 1``,
    ``0 < alpha < C`` needs ``m = 1`` and ``alpha = C`` needs ``m <= 1``.
    Returns the amount by which each point violates its condition.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = y * model.decision(x)
    if alpha_full is None:
        alpha_full = recover_alpha(model, x, y)
    at_zero = alpha_full <= 0
    at_c = alpha_full >= model.C
    free = ~at_zero & ~at_c
    r = np.zeros(y.size)
    r[at_zero] = np.maximum(1.0 - m[at_zero], 0.0)
    r[at_c] = np.maximum(m[at_c] - 1.0, 0.0)
    r[free] = np.abs(m[free] - 1.0)
    return r


def recover_alpha(model: SvmModel, x, y) -> np.ndarray:
    """Dual variable of each training point (0 for non-support vectors)."""
    x = np.asarray(x, dtype=np.float64)
    alpha = np.zeros(x.shape[0])
    for k, sv in enumerate(model.support_vectors):
        hit = np.nonzero(np.all(x == sv, axis=1))[0]
        if hit.size:
            alpha[hit[0]] = model.dual_coef[k] * y[hit[0]]
    return alpha


# ---------------------------------------------------------------------------
# one-vs-one
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OvoModel:
    classes: tuple
    pairs: tuple                 # (a, b) class indices; a is the +1 side
    models: tuple
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    def _prep(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.mean is not None:
            x = (x - self.mean) / self.scale
        return x

    def votes(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Per-frame vote counts and summed winning |decision| per class."""
        x = self._prep(x)
        n, k = x.shape[0], len(self.classes)
        votes = np.zeros((n, k))
        strength = np.zeros((n, k))
        for (a, b), m in zip(self.pairs, self.models):
            d = m.decision(x)
            win = np.where(d >= 0.0, a, b)
            votes[np.arange(n), win] += 1
            strength[np.arange(n), win] += np.abs(d)
        return votes, strength

    def predict_index(self, x) -> np.ndarray:
        votes, strength = self.votes(x)
        return np.array([_pick(v, s) for v, s in zip(votes, strength)], dtype=int)

    def predict(self, x) -> list:
        return [self.classes[i] for i in self.predict_index(x)]


def _pick(votes: np.ndarray, strength: np.ndarray) -> int:
    """Most votes; ties by larger summed strength, then by lower class index."""
    best = np.flatnonzero(votes == votes.max())
    if best.size > 1:
        s = strength[best]
        best = best[s == s.max()]
    return int(best[0])


def ovo_train(x, labels, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-3,
              classes=None, standardize: bool = False) -> OvoModel:
    """One binary SVM per unordered class pair (lower class index is +1)."""
    return ovo_train_path(x, labels, [C], gamma, tol, classes, standardize)[0]


def ovo_train_path(x, labels, Cs, gamma: float = 1.0, tol: float = 1e-3, classes=None,
                   standardize: bool = False) -> list:
    """:func:`ovo_train` for several C values sharing one kernel per pair.

    Models are solved in increasing C order, each warm-started from the
    previous solution (feasible since the box only grows). Returned in the
    order of ``Cs``.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = list(labels)
    present = sorted(set(labels), key=str)
    classes = tuple(present if classes is None else classes)
    if len(classes) < 2:
        raise TrainingError("need at least two classes")
    missing = [c for c in classes if c not in present]
    if missing:
        raise TrainingError(f"classes {missing} have no training frames")
    if gamma <= 0 or min(Cs) <= 0:
        raise TrainingError("C and gamma must be positive")
    mean = scale = None
    if standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale <= 1e-12] = 1.0
        x = (x - mean) / scale
    idx = np.array([classes.index(c) for c in labels])
    sq = np.sum(x ** 2, axis=1)
    order = np.argsort(Cs, kind="stable")
    per_c = [[] for _ in Cs]
    pairs = list(itertools.combinations(range(len(classes)), 2))
    for a, b in pairs:
        sel = np.nonzero((idx == a) | (idx == b))[0]
        xs = x[sel]
        y = np.where(idx[sel] == a, 1.0, -1.0)
        d2 = sq[sel][:, None] + sq[sel][None, :] - 2.0 * xs @ xs.T
        K = np.exp(-gamma * np.maximum(d2, 0.0))
        alpha = None
        for k in order:
            C = float(Cs[k])
            alpha, rho, it = smo_solve(K, y, C, tol, alpha0=alpha)
            sv = alpha > 0
            per_c[k].append(SvmModel(xs[sv].copy(), alpha[sv] * y[sv], -rho, float(gamma), C,
                                     it))
    return [OvoModel(classes, tuple(pairs), tuple(m), mean, scale) for m in per_c]


def classify_track(model: OvoModel, frames) -> object:
    """Maximum voting over the frame predictions of one track.

    Ties go to the class with the larger summed winning decision magnitude
    over the track's frames, then to the lower class index.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[0] == 0 or frames.size == 0:
        raise InvalidInputError("track has no frames")
    votes, strength = model.votes(frames)
    winners = np.array([_pick(v, s) for v, s in zip(votes, strength)])
    k = len(model.classes)
    counts = np.bincount(winners, minlength=k).astype(float)
    conf = np.zeros(k)
    np.add.at(conf, winners, strength[np.arange(winners.size), winners])
    return model.classes[_pick(counts, conf)]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Track:
    track_id: str
    label: object
    frames: np.ndarray


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray

    @property
    def per_class_error(self) -> np.ndarray:
        rows = self.counts.sum(axis=1)
        diag = np.diag(self.counts)
        return np.where(rows > 0, 1.0 - diag / np.maximum(rows, 1), 0.0)

    @property
    def error_rate(self) -> float:
        total = self.counts.sum()
        return float(1.0 - np.trace(self.counts) / total) if total else 0.0

    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return self.counts / np.maximum(rows, 1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted"] + [str(c) for c in self.classes])
        for c, row in zip(self.classes, self.counts):
            w.writerow([str(c)] + [str(int(v)) for v in row])
        return buf.getvalue()

    def error_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "n_test", "n_correct", "error_rate"])
        for c, row, err in zip(self.classes, self.counts, self.per_class_error):
            w.writerow([str(c), int(row.sum()), int(row[self.classes.index(c)]), f"{err:.6f}"])
        w.writerow(["all", int(self.counts.sum()), int(np.trace(self.counts)),
                    f"{self.error_rate:.6f}"])
        return buf.getvalue()


def confusion(true_labels, predicted, classes=None) -> ConfusionMatrix:
    true_labels, predicted = list(true_labels), list(predicted)
    if len(true_labels) != len(predicted):
        raise InvalidInputError("need one prediction per true label")
    classes = tuple(sorted(set(true_labels) | set(predicted)) if classes is None else classes)
    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, predicted):
        m[classes.index(t), classes.index(p)] += 1
    return ConfusionMatrix(classes, m)


def track_split(tracks, test_fraction: float, rng) -> tuple[list, list]:
    """Per-class random split of whole tracks."""
    by_class: dict = {}
    for t in tracks:
        by_class.setdefault(t.label, []).append(t)
    train, test = [], []
    for label in sorted(by_class, key=str):
        group = sorted(by_class[label], key=lambda t: t.track_id)
        order = rng.permutation(len(group))
        n_test = int(round(test_fraction * len(group)))
        test += [group[i] for i in order[:n_test]]
        train += [group[i] for i in order[n_test:]]
    return train, test


def assign_folds(tracks, folds: int, rng) -> dict:
    """Track id -> fold index, stratified by class."""
    out = {}
    by_class: dict = {}
    for t in tracks:
        by_class.setdefault(t.label, []).append(t)
    for label in sorted(by_class, key=str):
        group = sorted(by_class[label], key=lambda t: t.track_id)
        if len(group) < folds:
            raise EvaluationError(f"class {label!r} has {len(group)} tracks, fewer than {folds} folds")
        order = rng.permutation(len(group))
        for rank, i in enumerate(order):
            out[group[i].track_id] = rank % folds
    return out


def _stack(tracks):
    x = np.vstack([t.frames for t in tracks])
    y = [t.label for t in tracks for _ in range(t.frames.shape[0])]
    return x, y


def _track_error(model: OvoModel, tracks) -> float:
    wrong = sum(classify_track(model, t.frames) != t.label for t in tracks)
    return wrong / len(tracks)


@dataclass
class EvaluationReport:
    classes: tuple
    best_C: float
    best_gamma: float
    cv_errors: dict
    confusion: ConfusionMatrix
    train_ids: list
    test_ids: list
    folds: dict
    predictions: dict = field(default_factory=dict)

    @property
    def error_rate(self) -> float:
        return self.confusion.error_rate

    def to_json(self) -> str:
        doc = {
            "classes": [str(c) for c in self.classes],
            "best_C": self.best_C,
            "best_gamma": self.best_gamma,
            "cv_errors": {f"C={c:g},gamma={g:g}": v for (c, g), v in sorted(self.cv_errors.items())},
            "error_rate": self.error_rate,
            "per_class_error": {str(c): float(e) for c, e in
                                zip(self.classes, self.confusion.per_class_error)},
            "confusion": self.confusion.counts.tolist(),
            "train_ids": sorted(self.train_ids),
            "test_ids": sorted(self.test_ids),
            "folds": dict(sorted(self.folds.items())),
            "predictions": {k: str(v) for k, v in sorted(self.predictions.items())},
        }
        return json.dumps(doc, sort_keys=True, indent=1)


def cross_validate(tracks, seed, folds: int = 5, test_fraction: float = 0.3,
                   grid_C=DEFAULT_C, grid_gamma=DEFAULT_GAMMA, tol: float = 1e-3,
                   cv_tracks_per_class: int | None = None, standardize: bool = True,
                   transform=None) -> EvaluationReport:
    """Track-level 70/30 split, grid search by k-fold CV on the training part.

    The chosen (C, gamma) minimizes the mean CV track error (ties: first in
    grid order). The model is then retrained on all training tracks and the
    held-out tracks are classified by maximum voting. ``transform`` maps
    ``(train_tracks, other_tracks)`` to transformed copies (e.g. PCA fitted
    on the training frames) and is applied inside every fold.
    ``cv_tracks_per_class`` restricts the search to a subset of the
    training tracks.
    """
    tracks = list(tracks)
    classes = tuple(sorted({t.label for t in tracks}, key=str))
    if len(classes) < 2:
        raise EvaluationError("need at least two classes")
    rng = np.random.default_rng(seed)
    train, test = track_split(tracks, test_fraction, rng)
    cv_pool = train
    if cv_tracks_per_class is not None:
        cv_pool = []
        for c in classes:
            group = sorted((t for t in train if t.label == c), key=lambda t: t.track_id)
            pick = rng.permutation(len(group))[:cv_tracks_per_class]
            cv_pool += [group[i] for i in sorted(pick)]
    fold_of = assign_folds(cv_pool, folds, rng)
    for c in classes:
        if not any(t.label == c for t in test):
            raise EvaluationError(f"class {c!r} has no held-out track")

    def fit(tr, C, g):
        x, y = _stack(tr)
        return ovo_train(x, y, C, g, tol, classes, standardize)

    def fit_path(tr, g):
        x, y = _stack(tr)
        return ovo_train_path(x, y, list(grid_C), g, tol, classes, standardize)

    def prepared(tr, other):
        return transform(tr, other) if transform is not None else (tr, other)

    fold_sets = []
    for f in range(folds):
        tr = [t for t in cv_pool if fold_of[t.track_id] != f]
        va = [t for t in cv_pool if fold_of[t.track_id] == f]
        fold_sets.append(prepared(tr, va))
    errs = np.zeros((len(grid_C), len(grid_gamma), folds))
    for f, (tr, va) in enumerate(fold_sets):
        for gi, g in enumerate(grid_gamma):
            for ci, model in enumerate(fit_path(tr, g)):
                errs[ci, gi, f] = _track_error(model, va)
    cv_errors = {(float(C), float(g)): float(errs[ci, gi].mean())
                 for ci, C in enumerate(grid_C) for gi, g in enumerate(grid_gamma)}
    best = min(cv_errors, key=lambda k: (cv_errors[k], list(cv_errors).index(k)))
    train_p, test_p = prepared(train, test)
    model = fit(train_p, *best)
    preds = {t.track_id: classify_track(model, t.frames) for t in test_p}
    cm = confusion([t.label for t in test_p], [preds[t.track_id] for t in test_p], classes)
    return EvaluationReport(classes, best[0], best[1], cv_errors, cm,
                            [t.track_id for t in train], [t.track_id for t in test],
                            fold_of, preds)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

MAGIC = b"SCMSVM\x00\x01"


def save_model(model: OvoModel) -> bytes:
    """Binary container: magic, header length, JSON header, float64 arrays."""
    arrays = []
    header = {"version": 1, "classes": [str(c) for c in model.classes], "pairs": [],
              "standardized": model.mean is not None}
    if model.mean is not None:
        arrays += [model.mean, model.scale]
        header["dim"] = int(model.mean.size)
    for (a, b), m in zip(model.pairs, model.models):
        header["pairs"].append({"a": a, "b": b, "n_sv": int(m.dual_coef.size), "bias": m.bias,
                                "gamma": m.gamma, "C": m.C, "n_iter": m.n_iter,
                                "dim": int(m.support_vectors.shape[1])})
        arrays += [m.support_vectors.ravel(), m.dual_coef]
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return MAGIC + struct.pack("<I", len(head)) + head + body


def load_model(data: bytes) -> OvoModel:
    if data[:len(MAGIC)] != MAGIC:
        raise InvalidInputError("not a model container")
    pos = len(MAGIC)
    (n,) = struct.unpack("<I", data[pos:pos + 4])
    header = json.loads(data[pos + 4:pos + 4 + n])
    buf = np.frombuffer(data[pos + 4 + n:], dtype="<f8")
    off = 0

    def take(k):
        nonlocal off
        out = buf[off:off + k].copy()
        off += k
        return out

    mean = scale = None
    if header["standardized"]:
        mean, scale = take(header["dim"]), take(header["dim"])
    pairs, models = [], []
    for p in header["pairs"]:
        sv = take(p["n_sv"] * p["dim"]).reshape(p["n_sv"], p["dim"])
        coef = take(p["n_sv"])
        models.append(SvmModel(sv, coef, p["bias"], p["gamma"], p["C"], p["n_iter"]))
        pairs.append((p["a"], p["b"]))
    return OvoModel(tuple(header["classes"]), tuple(pairs), tuple(models), mean, scale)
