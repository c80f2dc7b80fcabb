"""
Onset detection and evaluation: spectral-flux ODF, adaptive median
threshold, peak picking with 25 ms suppression, tolerance matching against
ground truth, and the ROC sweep with its operating point.

Negative-count convention (needed for the fall-out): the negatives of a
sequence are the ODF frames lying farther than ``tol`` from every
ground-truth onset, and ``TN = max(negatives - FP, 0)``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .dsp import FeatureMatrix
from .errors import EvaluationError, InvalidInputError

TOLERANCE = 0.040
MIN_GAP = 0.025
MEDIAN_HALF_WINDOW = 8
DELTA_STATIC_RATIO = 0.01


def default_scales() -> np.ndarray:
    """Threshold-scale grid C_k used by the ROC sweep."""
    return np.concatenate([[0.0], np.geomspace(0.25, 256.0, 31)])


def half_wave(x):
    """H(x) = (x + |x|) / 2."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (x + np.abs(x))


@dataclass(frozen=True)
class OnsetFunction:
    values: np.ndarray
    hop_seconds: float
    start_seconds: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InvalidInputError("onset function values must be finite and >= 0")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def times(self) -> np.ndarray:
        return self.start_seconds + self.hop_seconds * np.arange(self.values.size)


@dataclass(frozen=True)
class OnsetList:
    times: np.ndarray
    strengths: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64).reshape(-1)
        if np.any(t < 0) or np.any(np.diff(t) <= 0):
            raise InvalidInputError("onset times must be nonnegative and strictly increasing")
        object.__setattr__(self, "times", t)
        if self.strengths is not None:
            s = np.asarray(self.strengths, dtype=np.float64).reshape(-1)
            if s.size != t.size:
                raise InvalidInputError("one strength per onset is required")
            object.__setattr__(self, "strengths", s)

    def __len__(self):
        return self.times.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_seconds", "strength"])
        strengths = self.strengths if self.strengths is not None else [""] * len(self)
        for t, s in zip(self.times, strengths):
            w.writerow([repr(float(t)), "" if s == "" else repr(float(s))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "OnsetList":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        times = [float(r[0]) for r in rows if r]
        strengths = [r[1] for r in rows if r]
        if strengths and all(strengths):
            return cls(times, [float(s) for s in strengths])
        return cls(times)


@dataclass(frozen=True)
class DetectionCounts:
    tp: int
    fp: int
    fn: int
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise InvalidInputError("detection counts must be nonnegative")


@dataclass(frozen=True)
class Metrics:
    tpr: float
    fpr: float
    ppv: float
    f: float


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------


def spectral_flux_odf(rep: FeatureMatrix) -> OnsetFunction:
    """D(n) = sum_k H(|X(n,k)| - |X(n-1,k)|), with D(0) = 0.

    Spectrogram entries are squared magnitudes, so their square root is used;
    every other representation enters through its absolute value.
    """
    if rep.n_frames < 2:
        raise InvalidInputError("the onset function needs at least two frames")
    mag = np.sqrt(rep.rows) if rep.kind == "spectrogram" else np.abs(rep.rows)
    d = np.zeros(rep.n_frames)
    d[1:] = half_wave(np.diff(mag, axis=0)).sum(axis=1)
    return OnsetFunction(d, rep.hop_seconds, rep.start_seconds)


def sliding_median(values, m_half_window: int) -> np.ndarray:
    """Median of ``values[n-M .. n+M]``, the window truncated at both ends."""
    v = np.asarray(values, dtype=np.float64)
    m = int(m_half_window)
    if m < 1:
        raise InvalidInputError("m_half_window must be >= 1")
    n = v.size
    out = np.empty(n)
    if n > 2 * m:
        win = np.lib.stride_tricks.sliding_window_view(v, 2 * m + 1)
        out[m:n - m] = np.median(win, axis=1)
        edge = list(range(m)) + list(range(n - m, n))
    else:
        edge = range(n)
    for i in edge:
        out[i] = np.median(v[max(0, i - m):i + m + 1])
    return out


def adaptive_threshold(odf: OnsetFunction, m_half_window: int = MEDIAN_HALF_WINDOW,
                       delta_static: float | None = None, scale: float = 1.0) -> np.ndarray:
    """delta(n) = delta_static + scale * median(odf[n-M .. n+M]).

    ``delta_static`` defaults to 1% of the ODF maximum.
    """
    if delta_static is None:
        delta_static = DELTA_STATIC_RATIO * float(odf.values.max(initial=0.0))
    return delta_static + scale * sliding_median(odf.values, m_half_window)


def local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices n with v[n] > v[n-1] and v[n] >= v[n+1] (missing neighbours ignored)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return np.zeros(0, dtype=int)
    left = np.concatenate([[True], v[1:] > v[:-1]])
    right = np.concatenate([v[:-1] >= v[1:], [True]])
    return np.nonzero(left & right)[0]


def suppress(indices, heights, min_gap_frames: float) -> np.ndarray:
    """Keep the larger of any two candidates closer than ``min_gap_frames``.

    Candidates are visited by decreasing height (earlier frame first on
    ties) and accepted when no accepted candidate lies within the gap.
    """
    idx = np.asarray(indices, dtype=int)
    h = np.asarray(heights, dtype=np.float64)
    if idx.size == 0:
        return idx
    # frames at distance <= reach from an accepted peak are blocked
    reach = max(int(np.ceil(min_gap_frames - 1e-9)) - 1, 0)
    base = int(idx.min()) - reach
    blocked = bytearray(int(idx.max()) - base + reach + 1)
    kept = []
    for i in idx[np.lexsort((idx, -h))].tolist():
        if blocked[i - base]:
            continue
        kept.append(i)
        lo, hi = i - base - reach, i - base + reach + 1
        blocked[lo:hi] = b"\x01" * (hi - lo)
    return np.array(sorted(kept), dtype=int)


def pick_peaks(odf: OnsetFunction, threshold, min_gap_seconds: float = MIN_GAP) -> OnsetList:
    """Local maxima strictly above ``threshold``, with ``min_gap_seconds`` suppression."""
    thr = np.broadcast_to(np.asarray(threshold, dtype=np.float64), odf.values.shape)
    cand = local_maxima(odf.values)
    cand = cand[odf.values[cand] > thr[cand]]
    kept = suppress(cand, odf.values[cand], min_gap_seconds / odf.hop_seconds)
    return OnsetList(odf.start_seconds + kept * odf.hop_seconds, odf.values[kept])


def detect_onsets(odf: OnsetFunction, scale: float = 1.0, m_half_window: int = MEDIAN_HALF_WINDOW,
                  delta_static: float | None = None,
                  min_gap_seconds: float = MIN_GAP) -> OnsetList:
    return pick_peaks(odf, adaptive_threshold(odf, m_half_window, delta_static, scale),
                      min_gap_seconds)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _times(x) -> np.ndarray:
    return x.times if isinstance(x, OnsetList) else np.asarray(x, dtype=np.float64).reshape(-1)


def match_pairs(detected, truth, tol_seconds: float = TOLERANCE) -> list[tuple[int, int]]:
    """One-to-one (truth, detection) index pairs within ``tol_seconds``.

    Truth onsets are taken in time order, each claiming the earliest
    unmatched detection inside its tolerance window. Because all windows
    have the same width this yields a maximum matching.
    """
    det, tru = _times(detected), _times(truth)
    slack = 1e-9
    pairs = []
    j = 0
    for i, t in enumerate(tru):
        while j < det.size and det[j] < t - tol_seconds - slack:
            j += 1
        if j < det.size and det[j] <= t + tol_seconds + slack:
            pairs.append((i, j))
            j += 1
    return pairs


def count_negatives(frame_times, truth, tol_seconds: float = TOLERANCE) -> int:
    """Frames lying farther than ``tol_seconds`` from every truth onset."""
    ft = np.asarray(frame_times, dtype=np.float64)
    tru = _times(truth)
    if tru.size == 0:
        return int(ft.size)
    pos = np.searchsorted(tru, ft)
    before = np.abs(ft - tru[np.clip(pos - 1, 0, tru.size - 1)])
    after = np.abs(tru[np.clip(pos, 0, tru.size - 1)] - ft)
    near = np.minimum(before, after) <= tol_seconds + 1e-9
    return int(np.count_nonzero(~near))


def match_onsets(detected, truth, tol_seconds: float = TOLERANCE,
                 frame_times=None) -> DetectionCounts:
    """TP/FP/FN by tolerance matching; TN from ``frame_times`` (0 when not given)."""
    n_det, n_tru = _times(detected).size, _times(truth).size
    tp = len(match_pairs(detected, truth, tol_seconds))
    fp = n_det - tp
    tn = 0
    if frame_times is not None:
        tn = max(count_negatives(frame_times, truth, tol_seconds) - fp, 0)
    return DetectionCounts(tp=tp, fp=fp, fn=n_tru - tp, tn=tn)


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else 0.0


def metrics(counts: DetectionCounts) -> Metrics:
    """Recall, fall-out, precision and F-measure; 0 wherever a denominator is 0."""
    tpr = _ratio(counts.tp, counts.tp + counts.fn)
    fpr = _ratio(counts.fp, counts.fp + counts.tn)
    ppv = _ratio(counts.tp, counts.tp + counts.fp)
    f = _ratio(2.0 * ppv * tpr, ppv + tpr)
    return Metrics(tpr, fpr, ppv, f)


def e_op(tpr: float, fpr: float) -> float:
    """Distance of (FPR, TPR) from the ideal corner (0, 1)."""
    return float(np.hypot(1.0 - tpr, fpr))


@dataclass(frozen=True)
class RocCurve:
    scales: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    ppv: np.ndarray
    f: np.ndarray
    n_sequences: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def e_op_values(self) -> np.ndarray:
        return np.hypot(1.0 - self.tpr, self.fpr)

    @property
    def operating_index(self) -> int:
        # first minimum: ties resolve to the smallest scale
        return int(np.argmin(self.e_op_values))

    @property
    def e_op(self) -> float:
        return float(self.e_op_values[self.operating_index])

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return [(float(s), float(t), float(f)) for s, t, f in zip(self.scales, self.tpr, self.fpr)]

    def operating_point(self) -> dict:
        i = self.operating_index
        return {
            "scale": float(self.scales[i]),
            "tpr": float(self.tpr[i]),
            "fpr": float(self.fpr[i]),
            "ppv": float(self.ppv[i]),
            "f": float(self.f[i]),
            "e_op": self.e_op,
            "index": i,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scale", "tpr", "fpr", "ppv", "f", "e_op"])
        for row in zip(self.scales, self.tpr, self.fpr, self.ppv, self.f, self.e_op_values):
            w.writerow([f"{v:.10g}" for v in row])
        return buf.getvalue()

    def summary_json(self) -> str:
        doc = {"operating_point": self.operating_point(), "n_sequences": self.n_sequences,
               "meta": self.meta}
        return json.dumps(doc, sort_keys=True, indent=1)


def roc_sweep(odfs, truths, threshold_scales=None, m_half_window: int = MEDIAN_HALF_WINDOW,
              delta_static_ratio: float = DELTA_STATIC_RATIO, tol_seconds: float = TOLERANCE,
              min_gap_seconds: float = MIN_GAP) -> RocCurve:
    """Average TPR/FPR/PPV/F over sequences for every threshold scale C_k.

    ``odfs`` and ``truths`` are parallel lists (a single ODF and onset list
    are accepted too). ``delta_static`` is ``delta_static_ratio`` times each
    ODF's maximum.
    """
    if isinstance(odfs, OnsetFunction):
        odfs, truths = [odfs], [truths]
    if len(odfs) != len(truths) or not odfs:
        raise InvalidInputError("need one ground-truth list per onset function")
    scales = default_scales() if threshold_scales is None else np.asarray(threshold_scales, float)
    if scales.size == 0:
        raise InvalidInputError("threshold scale list is empty")
    if sum(_times(t).size for t in truths) == 0:
        raise EvaluationError("ground truth is empty for every sequence")
    acc = np.zeros((scales.size, 4))
    for odf, truth in zip(odfs, truths):
        med = sliding_median(odf.values, m_half_window)
        delta = delta_static_ratio * float(odf.values.max(initial=0.0))
        frame_times = odf.times()
        negatives = count_negatives(frame_times, truth, tol_seconds)
        cand = local_maxima(odf.values)
        for k, c in enumerate(scales):
            above = cand[odf.values[cand] > delta + c * med[cand]]
            kept = suppress(above, odf.values[above], min_gap_seconds / odf.hop_seconds)
            det = odf.start_seconds + kept * odf.hop_seconds
            tp = len(match_pairs(det, truth, tol_seconds))
            fp = det.size - tp
            m = metrics(DetectionCounts(tp, fp, _times(truth).size - tp, max(negatives - fp, 0)))
            acc[k] += (m.tpr, m.fpr, m.ppv, m.f)
    acc /= len(odfs)
    meta = {"m_half_window": m_half_window, "delta_static_ratio": delta_static_ratio,
            "tol_seconds": tol_seconds, "min_gap_seconds": min_gap_seconds}
    return RocCurve(scales, acc[:, 0], acc[:, 1], acc[:, 2], acc[:, 3], len(odfs), meta)
