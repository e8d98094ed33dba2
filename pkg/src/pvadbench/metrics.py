"""DET/EER, utterance smoothing, detection latency/accuracy and the Wilcoxon test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .models import NS, NTS, TS

FRAME_MS = 10
SMOOTH_WINDOW = 5
DEFAULT_DURATIONS_MS = (200, 300, 500, 1000, 2000, 3000)
EXACT_MAX_N = 20


class DegenerateError(ValueError):
    pass


class NotApplicableError(ValueError):
    pass


# ---------------------------------------------------------------------------
# DET / EER


@dataclass
class DetCurve:
    thresholds: np.ndarray  # ascending, starts at -inf and ends at +inf
    fpr: np.ndarray
    fnr: np.ndarray
    n_pos: int
    n_neg: int
    # distinct score just below each threshold (-inf for the first point)
    lower_scores: np.ndarray = field(repr=False, default=None)

    def points(self):
        return list(zip(self.thresholds.tolist(), self.fpr.tolist(), self.fnr.tolist()))


@dataclass
class EerResult:
    eer: float
    operating_threshold: float


def det_curve(scores, labels) -> DetCurve:
    """Sweep thresholds at distinct-score midpoints plus +-inf.

    A sample is predicted positive iff ``score >= threshold``.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).astype(bool).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError("DET curve needs both positive and negative samples")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")

    uniq, inverse = np.unique(scores, return_inverse=True)
    pos_at = np.bincount(inverse, weights=labels, minlength=uniq.size)
    neg_at = np.bincount(inverse, weights=~labels, minlength=uniq.size)
    # samples strictly below each distinct score
    pos_below = np.concatenate(([0.0], np.cumsum(pos_at)))
    neg_below = np.concatenate(([0.0], np.cumsum(neg_at)))
    # threshold k sits between uniq[k-1] and uniq[k]; k = 0 is -inf, k = len is +inf
    thresholds = np.concatenate(([-np.inf], (uniq[:-1] + uniq[1:]) / 2.0, [np.inf]))
    fnr = pos_below / n_pos
    fpr = (n_neg - neg_below) / n_neg
    lower = np.concatenate(([-np.inf], uniq))
    return DetCurve(thresholds, fpr, fnr, n_pos, n_neg, lower)


def eer_from_det(curve: DetCurve) -> EerResult:
    """Linear interpolation of the FPR = FNR crossing.

    If the crossing falls exactly on a DET point, the operating threshold is
    the lowest threshold producing that point (just above the next lower
    score), i.e. the most sensitive setting with the same error rates.
    """
    d = curve.fpr - curve.fnr  # non-increasing in threshold
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        k = int(zero[0])
        low = curve.lower_scores[k]
        thr = -np.inf if np.isneginf(low) else float(np.nextafter(low, np.inf))
        return EerResult(float(curve.fpr[k]), thr)
    k = int(np.flatnonzero(d < 0.0)[0])  # first point past the crossing; k >= 1
    d0, d1 = d[k - 1], d[k]
    alpha = d0 / (d0 - d1)
    eer = curve.fpr[k - 1] + alpha * (curve.fpr[k] - curve.fpr[k - 1])
    t0, t1 = curve.thresholds[k - 1], curve.thresholds[k]
    if np.isinf(t0):
        thr = t1
    elif np.isinf(t1):
        thr = t0
    else:
        thr = t0 + alpha * (t1 - t0)
    return EerResult(float(eer), float(thr))


def eer(scores, labels) -> EerResult:
    return eer_from_det(det_curve(scores, labels))


# ---------------------------------------------------------------------------
# frame and utterance scores


def frame_score_pvad(post):
    return np.asarray(post, dtype=np.float64)[..., TS]


def frame_score_vad(post):
    post = np.asarray(post, dtype=np.float64)
    return post[..., TS] + post[..., NTS]


def trailing_average(scores, window=SMOOTH_WINDOW):
    """Causal moving average; the first frames average over what exists so far."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty score sequence")
    c = np.concatenate(([0.0], np.cumsum(scores)))
    idx = np.arange(1, scores.size + 1)
    start = np.maximum(idx - window, 0)
    return (c[idx] - c[start]) / (idx - start)


def utterance_score(frame_scores, window=SMOOTH_WINDOW):
    return float(trailing_average(frame_scores, window).max())


def detection_latency(frame_scores, frame_labels, threshold, window=SMOOTH_WINDOW):
    """Milliseconds from the first ts frame to the first smoothed score >= threshold.

    Returns None on a miss. Negative values mean the detector fired before the
    target started speaking.
    """
    labels = np.asarray(frame_labels)
    ts = np.flatnonzero(labels == TS)
    if ts.size == 0:
        raise NotApplicableError("utterance has no target-speaker frames")
    hits = np.flatnonzero(trailing_average(frame_scores, window) >= threshold)
    if hits.size == 0:
        return None
    return int(hits[0] - ts[0]) * FRAME_MS


def detection_accuracy(utterance_scores, threshold):
    s = np.asarray(utterance_scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("no target utterances")
    return float(np.mean(s >= threshold))


def accuracy_vs_duration(items, durations_ms, threshold, window=SMOOTH_WINDOW):
    """Detection accuracy when only audio up to ``onset + d`` has been heard.

    ``items`` is a sequence of ``(frame_scores, frame_labels)`` for target
    utterances. Scores are causal, so truncating them equals re-running the
    model on truncated audio.
    """
    durations = [int(d) for d in durations_ms]
    if any(d <= 0 for d in durations) or durations != sorted(durations):
        raise ValueError("durations must be positive and ascending")
    curves = []
    for scores, labels in items:
        onset = int(np.flatnonzero(np.asarray(labels) == TS)[0])
        smoothed = trailing_average(scores, window)
        prefix_max = np.maximum.accumulate(smoothed)
        ends = [min(onset + d // FRAME_MS, smoothed.size - 1) for d in durations]
        curves.append(prefix_max[ends])
    if not curves:
        return [(d, float("nan")) for d in durations]
    best = np.array(curves)
    return [(d, float(np.mean(best[:, j] >= threshold))) for j, d in enumerate(durations)]


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank


@dataclass
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    w_plus: float
    p_value: float
    n_effective: int
    exact: bool


def _ranks(abs_d):
    order = np.argsort(abs_d, kind="mergesort")
    ranks = np.empty(abs_d.size)
    sorted_d = abs_d[order]
    i = 0
    while i < sorted_d.size:
        j = i
        while j + 1 < sorted_d.size and sorted_d[j + 1] == sorted_d[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def signed_rank_null_distribution(ranks):
    """Exact null distribution of W+ over all 2^n sign assignments.

    Ranks may be mid-ranks (multiples of 0.5). Returns ``(values, probs)``.
    """
    doubled = np.rint(np.asarray(ranks) * 2).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    probs = counts / 2.0 ** len(doubled)
    return np.arange(total + 1) / 2.0, probs


def wilcoxon_signed_rank(differences, alternative="two-sided", exact_max_n=EXACT_MAX_N):
    """Signed-rank test on paired differences.

    Zeros are dropped and ties mid-ranked. ``alternative="greater"`` tests
    for positive differences. Exact for n <= 20, normal approximation with
    continuity and tie correction above.
    """
    d = np.asarray(differences, dtype=np.float64).ravel()
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise DegenerateError("all paired differences are zero")
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    ranks = _ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)

    if n <= exact_max_n:
        values, probs = signed_rank_null_distribution(ranks)
        upper = float(probs[values >= w_plus - 1e-9].sum())  # P(W+ >= observed)
        lower = float(probs[values <= w_plus + 1e-9].sum())  # P(W+ <= observed)
        exact = True
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts ** 3 - tie_counts).sum() / 48.0
        sd = math.sqrt(var)
        upper = float(norm.sf((w_plus - mean - 0.5) / sd))
        lower = float(norm.cdf((w_plus - mean + 0.5) / sd))
        exact = False

    if alternative == "greater":
        p = upper
    elif alternative == "less":
        p = lower
    else:
        p = min(1.0, 2.0 * min(upper, lower))
    return WilcoxonResult(stat, w_plus, p, n, exact)


# ---------------------------------------------------------------------------
# suite evaluation

DET_EXPORT_POINTS = 200


@dataclass
class UserReport:
    user_id: str
    latencies_ms: list
    misses: int
    accuracy: float
    n_target_utterances: int

    @property
    def median_latency_ms(self):
        return float(np.median(self.latencies_ms)) if self.latencies_ms else None

    def to_dict(self):
        return {
            "user_id": self.user_id,
            "latencies_ms": list(self.latencies_ms),
            "misses": self.misses,
            "accuracy": self.accuracy,
            "n_target_utterances": self.n_target_utterances,
            "median_latency_ms": self.median_latency_ms,
        }


@dataclass
class MetricsReport:
    variant: str
    feer_pvad: float | None
    feer_vad: float | None
    ueer: float | None
    operating_threshold: float | None
    median_latency_ms: float | None
    median_accuracy: float | None
    users: list
    accuracy_vs_duration: list
    strata: dict
    det: dict = field(default_factory=dict)  # name -> full DetCurve (not serialised)
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "variant": self.variant,
            "feer_pvad": self.feer_pvad,
            "feer_vad": self.feer_vad,
            "ueer": self.ueer,
            "operating_threshold": _finite_or_str(self.operating_threshold),
            "median_latency_ms": self.median_latency_ms,
            "median_accuracy": self.median_accuracy,
            "accuracy_vs_duration": [[d, a] for d, a in self.accuracy_vs_duration],
            "users": [u.to_dict() for u in self.users],
            "strata": dict(self.strata),
            "det": {k: _decimate(c) for k, c in sorted(self.det.items())},
            "provenance": dict(self.provenance),
        }


def _finite_or_str(x):
    if x is None or np.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


def _decimate(curve: DetCurve, n=DET_EXPORT_POINTS):
    idx = np.unique(np.linspace(0, curve.thresholds.size - 1, min(n, curve.thresholds.size)).round().astype(int))
    return [[_finite_or_str(float(curve.thresholds[i])), float(curve.fpr[i]), float(curve.fnr[i])] for i in idx]


def _safe_eer(scores, labels):
    try:
        curve = det_curve(scores, labels)
    except DegenerateError:
        return None, None
    return curve, eer_from_det(curve)


def evaluate_posteriors(records, variant="model", durations_ms=DEFAULT_DURATIONS_MS, provenance=None):
    """Compute the full metric suite from precomputed posteriors.

    ``records`` is a sequence of ``(utterance, posteriors)`` where posteriors
    is ``(T, 3)`` in ``(ts, nts, ns)`` order. Strata that are absent from the
    records are reported as None.
    """
    records = sorted(records, key=lambda r: r[0].id)
    enrolled = [(u, p) for u, p in records if u.enrolled]
    zero = [(u, p) for u, p in records if not u.enrolled]
    targets = [(u, p) for u, p in enrolled if u.has_target_speech]
    impostors = [(u, p) for u, p in enrolled if not u.has_target_speech]
    strata = {
        "enrolled": len(enrolled),
        "zero_enrolled": len(zero),
        "target": len(targets),
        "impostor": len(impostors),
    }
    det = {}

    feer_pvad = feer_vad = ueer = threshold = None
    if enrolled:
        curve, res = _safe_eer(
            np.concatenate([frame_score_pvad(p) for _, p in enrolled]),
            np.concatenate([u.labels == TS for u, _ in enrolled]),
        )
        if res is not None:
            det["pvad_frame"], feer_pvad = curve, res.eer
    if zero:
        curve, res = _safe_eer(
            np.concatenate([frame_score_vad(p) for _, p in zero]),
            np.concatenate([u.labels != NS for u, _ in zero]),
        )
        if res is not None:
            det["vad_frame"], feer_vad = curve, res.eer

    target_scores = [frame_score_pvad(p) for _, p in targets]
    if targets and impostors:
        utt = [utterance_score(s) for s in target_scores] + [utterance_score(frame_score_pvad(p)) for _, p in impostors]
        curve, res = _safe_eer(utt, [1] * len(targets) + [0] * len(impostors))
        det["utterance"], ueer, threshold = curve, res.eer, res.operating_threshold

    users, avd = [], []
    median_latency = median_accuracy = None
    if threshold is not None:
        by_user = {}
        for (u, _), s in zip(targets, target_scores):
            by_user.setdefault(u.target_speaker_id, []).append((u, s))
        for uid in sorted(by_user):
            lat, misses, hits = [], 0, []
            for u, s in by_user[uid]:
                ms = detection_latency(s, u.labels, threshold)
                if ms is None:
                    misses += 1
                else:
                    lat.append(ms)
                hits.append(utterance_score(s))
            users.append(UserReport(uid, lat, misses, detection_accuracy(hits, threshold), len(hits)))
        meds = [r.median_latency_ms for r in users if r.median_latency_ms is not None]
        median_latency = float(np.median(meds)) if meds else None
        median_accuracy = float(np.median([r.accuracy for r in users]))
        if durations_ms:
            avd = accuracy_vs_duration([(s, u.labels) for (u, _), s in zip(targets, target_scores)],
                                       durations_ms, threshold)

    return MetricsReport(
        variant=str(variant),
        feer_pvad=feer_pvad,
        feer_vad=feer_vad,
        ueer=ueer,
        operating_threshold=threshold,
        median_latency_ms=median_latency,
        median_accuracy=median_accuracy,
        users=users,
        accuracy_vs_duration=avd,
        strata=strata,
        det=det,
        provenance=dict(provenance or {}),
    )


def model_posteriors(model, utterances):
    from .models import posteriors

    return [(u, posteriors(model, u.feats(), u.enrollment)) for u in utterances]


def oracle_posteriors(utterances):
    """One-hot ground-truth posteriors."""
    return [(u, np.eye(3)[u.labels]) for u in utterances]


def evaluate_suite(model, utterances, durations_ms=DEFAULT_DURATIONS_MS, provenance=None):
    variant = getattr(getattr(model, "variant", None), "value", "model")
    return evaluate_posteriors(model_posteriors(model, utterances), variant, durations_ms, provenance)
