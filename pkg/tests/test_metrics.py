import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pvadbench import metrics as M
from pvadbench.models import NS, NTS, TS


def brute_force_eer(scores, labels):
    """Independent oracle: sweep every score as a threshold, counting directly.

    Returns the (fpr + fnr) / 2 estimate at the point minimising |fpr - fnr|
    and the oracle's resolution there, i.e. the size of the DET step that
    brackets the crossing (larger than 1/n when scores are tied).
    """
    scores = np.asarray(scores)
    labels = np.asarray(labels).astype(bool)
    pts = []
    for t in np.concatenate([np.unique(scores), [np.inf]]):
        pred = scores >= t
        pts.append((np.mean(pred[~labels]), np.mean(~pred[labels])))
    d = [a - b for a, b in pts]
    k = next(i for i, x in enumerate(d) if x <= 0)
    if d[k] == 0:
        return pts[k][0], 0.0
    (f0, n0), (f1, n1) = pts[k - 1], pts[k]
    best = pts[k - 1] if abs(d[k - 1]) < abs(d[k]) else pts[k]
    return sum(best) / 2, max(abs(f1 - f0), abs(n1 - n0))


def test_det_perfect_and_inverted():
    c = M.det_curve([0.9, 0.1], [1, 0])
    assert any(a == 0 and b == 0 for _, a, b in c.points())
    assert M.eer_from_det(c).eer == 0.0
    assert M.eer([0.9, 0.1], [0, 1]).eer == 1.0


def test_eer_worked_example():
    assert M.eer([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0]).eer == pytest.approx(0.5)


def test_det_single_class_raises():
    with pytest.raises(M.DegenerateError):
        M.det_curve([0.1, 0.2], [1, 1])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5, allow_nan=False), st.booleans()), min_size=2, max_size=60))
def test_det_monotone(pairs):
    scores, labels = zip(*pairs)
    if len(set(labels)) < 2:
        return
    c = M.det_curve(scores, labels)
    assert np.all(np.diff(c.fpr) <= 0)
    assert np.all(np.diff(c.fnr) >= 0)
    assert c.thresholds[0] == -np.inf and c.thresholds[-1] == np.inf


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(4, 300))
def test_eer_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    labels[:2] = [0, 1]
    scores = np.round(rng.normal(size=n) + labels, 1)  # rounding creates ties
    est, step = brute_force_eer(scores, labels)
    assert abs(M.eer(scores, labels).eer - est) <= step + 1e-9


def test_exact_crossing_uses_lowest_threshold():
    res = M.eer([0.2, 0.7, 0.9], [0, 1, 1])
    assert res.eer == 0.0
    assert 0.2 < res.operating_threshold <= 0.7
    assert res.operating_threshold == pytest.approx(0.2, abs=1e-12)


def test_frame_scores():
    post = np.array([[1, 0, 0], [0, 0, 1], [0.2, 0.5, 0.3]])
    np.testing.assert_allclose(M.frame_score_pvad(post), [1, 0, 0.2])
    np.testing.assert_allclose(M.frame_score_vad(post), [1, 0, 0.7])


def test_utterance_score_examples():
    assert M.utterance_score([0.3] * 7) == pytest.approx(0.3)
    assert M.utterance_score([0.2, 0.4, 0.6, 0.8, 1.0]) == pytest.approx(0.6)
    assert M.utterance_score([1, 0, 0, 0, 0, 0]) == 1.0
    with pytest.raises(ValueError):
        M.utterance_score([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.integers(0, 39), st.floats(0, 1))
def test_utterance_score_monotone_in_frame_scores(scores, i, bump):
    s = np.array(scores)
    i = i % s.size
    t = s.copy()
    t[i] = min(1.0, t[i] + bump)
    assert M.utterance_score(t) >= M.utterance_score(s) - 1e-12


def test_latency_examples():
    labels = np.full(50, NS)
    labels[10:] = TS
    scores = np.zeros(50)
    scores[30:] = 1.0
    assert M.detection_latency(scores, labels, 0.2) == 200
    assert M.detection_latency(np.ones(50), labels, 0.5) == -100
    assert M.detection_latency(np.zeros(50), labels, 0.5) is None
    with pytest.raises(M.NotApplicableError):
        M.detection_latency(np.zeros(5), np.full(5, NTS), 0.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=60), st.floats(0.05, 0.95), st.integers(0, 2))
def test_latency_consistent_with_accuracy(scores, thr, onset):
    labels = np.full(len(scores), NS)
    labels[min(onset, len(scores) - 1):] = TS
    lat = M.detection_latency(scores, labels, thr)
    detected = M.detection_accuracy([M.utterance_score(scores)], thr) == 1.0
    assert (lat is None) == (not detected)
    if lat is not None:
        assert lat % 10 == 0


def test_detection_accuracy():
    assert M.detection_accuracy([0.9, 0.8, 0.1, 0.7], 0.5) == 0.75
    assert M.detection_accuracy([0.1], 0.5) == 0.0
    with pytest.raises(ValueError):
        M.detection_accuracy([], 0.5)


def test_accuracy_vs_duration_saturates_and_is_monotone():
    rng = np.random.default_rng(0)
    items = []
    for _ in range(20):
        labels = np.full(300, NS)
        labels[20:] = TS
        items.append((rng.uniform(size=300) * np.linspace(0.2, 1, 300), labels))
    curve = M.accuracy_vs_duration(items, [50, 100, 500, 1000, 5000], 0.7)
    accs = [a for _, a in curve]
    assert accs == sorted(accs)
    full = M.detection_accuracy([M.utterance_score(s) for s, _ in items], 0.7)
    assert accs[-1] == full
    with pytest.raises(ValueError):
        M.accuracy_vs_duration(items, [100, 50], 0.5)


def test_wilcoxon_all_positive_n5():
    res = M.wilcoxon_signed_rank([1, 2, 3, 4, 5], alternative="greater")
    assert res.statistic == 0
    assert res.p_value == pytest.approx(1 / 32)
    assert res.exact


def test_wilcoxon_symmetric_two_sided_is_one():
    assert M.wilcoxon_signed_rank([1, -1, 2, -2, 3, -3]).p_value == pytest.approx(1.0)


def test_wilcoxon_zero_differences():
    with pytest.raises(M.DegenerateError):
        M.wilcoxon_signed_rank([0, 0, 0])
    assert M.wilcoxon_signed_rank([0, 1, 2]).n_effective == 2


def test_null_distribution_sums_to_one():
    for ranks in ([1, 2, 3], [1.5, 1.5, 3, 4], list(range(1, 16))):
        _, p = M.signed_rank_null_distribution(ranks)
        assert p.sum() == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-20, 20).filter(lambda x: x != 0), min_size=1, max_size=15))
def test_wilcoxon_exact_matches_scipy(d):
    ours = M.wilcoxon_signed_rank(d)
    d = np.array(d, float)
    if len(np.unique(np.abs(d))) == d.size:
        ref = stats.wilcoxon(d, method="exact")
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-10)
        assert ours.statistic == ref.statistic


def test_normal_approximation_close_to_exact_at_n20():
    rng = np.random.default_rng(5)
    for _ in range(30):
        d = rng.normal(0.3, 1.0, size=20)
        exact = M.wilcoxon_signed_rank(d, exact_max_n=20).p_value
        approx = M.wilcoxon_signed_rank(d, exact_max_n=0).p_value
        assert abs(exact - approx) < 0.01


def test_large_n_uses_normal():
    res = M.wilcoxon_signed_rank(np.arange(1, 26), alternative="greater")
    assert not res.exact and res.p_value < 1e-4


def _oracle_utterances(n=8, rng=None):
    from types import SimpleNamespace

    rng = rng or np.random.default_rng(0)
    utts = []
    for i in range(n):
        labels = np.full(80, NS)
        kind = i % 4
        if kind in (0, 1):
            labels[10 + i:40 + i] = TS
            labels[50:60] = NTS
        elif kind == 2:
            labels[20:50] = NTS
        utts.append(SimpleNamespace(id=f"u{i}", labels=labels, enrolled=kind != 3,
                                    target_speaker_id=f"s{i % 2}",
                                    has_target_speech=bool(np.any(labels == TS))))
    for u in utts:
        if not u.enrolled:
            u.labels[30:45] = TS
            u.has_target_speech = True
    return utts


def test_oracle_suite():
    utts = _oracle_utterances()
    rep = M.evaluate_posteriors(M.oracle_posteriors(utts), "oracle")
    assert rep.feer_pvad == 0 and rep.feer_vad == 0 and rep.ueer == 0
    assert rep.median_latency_ms == 0
    assert all(u.latencies_ms == [0] * len(u.latencies_ms) for u in rep.users)
    assert rep.median_accuracy == 1.0


def test_inverted_oracle_has_feer_one():
    utts = _oracle_utterances()
    recs = [(u, 1.0 - p) for u, p in M.oracle_posteriors(utts)]
    rep = M.evaluate_posteriors(recs, "inverted")
    assert rep.feer_pvad == 1.0


def test_missing_strata_reported_as_none():
    utts = [u for u in _oracle_utterances() if u.enrolled and u.has_target_speech]
    rep = M.evaluate_posteriors(M.oracle_posteriors(utts), "x")
    assert rep.ueer is None and rep.feer_vad is None and rep.users == []
    assert rep.strata["impostor"] == 0


def test_report_serialisation_is_deterministic():
    import json

    utts = _oracle_utterances()
    a = json.dumps(M.evaluate_posteriors(M.oracle_posteriors(utts), "o").to_dict(), sort_keys=True)
    b = json.dumps(M.evaluate_posteriors(M.oracle_posteriors(list(reversed(utts))), "o").to_dict(), sort_keys=True)
    assert a == b
