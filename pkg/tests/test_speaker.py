import numpy as np
import pytest

from pvadbench import dsp, speaker


@pytest.fixture(scope="module")
def tiny_encoder():
    return speaker.build_encoder(0, hidden=8, layers=2)


def test_encoder_parameter_count():
    assert speaker.build_encoder(0).count() == speaker.encoder_param_count() == 1_354_752


def test_embedding_is_unit_norm(tiny_encoder, rng):
    e = speaker.speaker_encoder_embed(tiny_encoder, rng.normal(size=(30, 40)))
    assert e.shape == (8,)
    assert np.linalg.norm(e) == pytest.approx(1.0)


def test_running_embedding_last_frame_equals_pooled(tiny_encoder, rng):
    feats = rng.normal(size=(25, 40))
    run = speaker.running_embeddings(tiny_encoder, feats)
    np.testing.assert_allclose(run[-1], speaker.speaker_encoder_embed(tiny_encoder, feats), atol=1e-12)


def test_running_embedding_is_causal(tiny_encoder, rng):
    feats = rng.normal(size=(20, 40))
    a = speaker.running_embeddings(tiny_encoder, feats)
    feats2 = feats.copy()
    feats2[12:] = rng.normal(size=(8, 40))
    b = speaker.running_embeddings(tiny_encoder, feats2)
    np.testing.assert_array_equal(a[:12], b[:12])


def test_enrollment_needs_three_to_five_segments(tiny_encoder, rng):
    segs = [rng.normal(size=(10, 40)) for _ in range(6)]
    with pytest.raises(speaker.EnrollmentError):
        speaker.enrollment_embedding(tiny_encoder, segs[:2])
    with pytest.raises(speaker.EnrollmentError):
        speaker.enrollment_embedding(tiny_encoder, segs)
    e = speaker.enrollment_embedding(tiny_encoder, segs[:4])
    assert np.linalg.norm(e) == pytest.approx(1.0)


def test_enrollment_from_pcm(tiny_encoder, rng):
    pcm = [0.1 * rng.standard_normal(8000) for _ in range(3)]
    e = speaker.enrollment_embedding(tiny_encoder, pcm)
    expected = speaker.average_embeddings([speaker.speaker_encoder_embed(tiny_encoder, dsp.log_mel_features(p)) for p in pcm])
    np.testing.assert_allclose(e, expected)


def test_zero_sentinel():
    assert speaker.is_zero_sentinel(np.zeros(256))
    assert speaker.is_zero_sentinel(None)
    assert not speaker.is_zero_sentinel(np.eye(256)[0])
    with pytest.raises(speaker.SentinelError):
        speaker.cosine_similarity(np.zeros(4), np.ones(4))


def test_cosine_similarity_bounds():
    a = np.array([1.0, 0.0])
    assert speaker.cosine_similarity(a, a) == pytest.approx(1.0)
    assert speaker.cosine_similarity(a, -a) == pytest.approx(-1.0)
    assert speaker.cosine_similarity(a, np.array([0.0, 3.0])) == pytest.approx(0.0)


def test_empty_features_rejected(tiny_encoder):
    with pytest.raises(dsp.EmptyFeatureError):
        speaker.speaker_encoder_embed(tiny_encoder, np.zeros((0, 40)))
