"""Speaker embeddings: LSTM d-vector encoder, enrollment averaging, cosine scoring.

Embeddings are plain ``(256,)`` float64 arrays. The exact all-zeros vector is
reserved to mean "no enrollment" and is never unit-normalised.
"""

import numpy as np

from . import dsp
from . import nn

EMBED_DIM = 256
ENCODER_LAYERS = 3
MIN_ENROLL_SEGMENTS = 3
MAX_ENROLL_SEGMENTS = 5

ZERO_EMBEDDING = np.zeros(EMBED_DIM)

# Fixed input gain keeping log-mel magnitudes (roughly -25..15) out of
# the saturated region of freshly initialised gates.
FEATURE_SCALE = 0.1


class EnrollmentError(ValueError):
    pass


class SentinelError(ValueError):
    pass


def is_zero_sentinel(e):
    return e is None or not np.any(np.asarray(e))


def build_encoder(seed, input_dim=dsp.N_MELS, hidden=EMBED_DIM, layers=ENCODER_LAYERS, prefix="enc"):
    rng = np.random.default_rng(seed)
    params = nn.ParameterSet()
    add_encoder(params, rng, prefix, input_dim, hidden, layers)
    return params


def add_encoder(params, rng, prefix="enc", input_dim=dsp.N_MELS, hidden=EMBED_DIM, layers=ENCODER_LAYERS):
    for k in range(layers):
        nn.add_lstm(params, rng, f"{prefix}.lstm{k + 1}", input_dim if k == 0 else hidden, hidden)


def encoder_param_count(input_dim=dsp.N_MELS, hidden=EMBED_DIM, layers=ENCODER_LAYERS):
    return nn.lstm_param_count(input_dim, hidden) + (layers - 1) * nn.lstm_param_count(hidden, hidden)


def encoder_states(params, feats, prefix="enc"):
    """Top-layer hidden states for ``feats`` of shape (T, 40) or (T, B, 40)."""
    x = nn.constant(scale_features(feats))
    k = 1
    while f"{prefix}.lstm{k}.w_ih" in params:
        x, _, _ = nn.run_lstm(params, f"{prefix}.lstm{k}", x)
        k += 1
    return x


def scale_features(feats):
    return np.asarray(feats, dtype=np.float64) * FEATURE_SCALE


def speaker_encoder_embed(params, feats, prefix="enc"):
    """Mean-pool the top LSTM layer over time and L2-normalise."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise dsp.EmptyFeatureError("speaker embedding needs at least one feature frame")
    pooled = encoder_states(params, feats, prefix).data.mean(axis=0)
    return _unit(pooled)


def running_embeddings(params, feats, prefix="enc"):
    """Causal per-frame embeddings: running mean of states up to each frame, normalised."""
    states = encoder_states(params, feats, prefix).data
    running = np.cumsum(states, axis=0) / np.arange(1, states.shape[0] + 1)[:, None]
    norms = np.maximum(np.linalg.norm(running, axis=1, keepdims=True), 1e-12)
    return running / norms


def _unit(v):
    n = np.linalg.norm(v)
    if n == 0.0:
        # degenerate but finite; keeps the no-NaN guarantee
        return np.zeros_like(v)
    return v / n


def average_embeddings(embeddings):
    """Element-wise mean of unit embeddings, re-normalised."""
    stack = np.asarray(embeddings, dtype=np.float64)
    return _unit(stack.mean(axis=0))


def enrollment_embedding(params, segments, prefix="enc"):
    """Enrollment d-vector from 3-5 PCM segments (or precomputed feature arrays)."""
    if not MIN_ENROLL_SEGMENTS <= len(segments) <= MAX_ENROLL_SEGMENTS:
        raise EnrollmentError(
            f"enrollment needs {MIN_ENROLL_SEGMENTS}-{MAX_ENROLL_SEGMENTS} segments, got {len(segments)}"
        )
    embs = []
    for seg in segments:
        seg = np.asarray(seg, dtype=np.float64)
        feats = seg if seg.ndim == 2 else dsp.log_mel_features(seg)
        embs.append(speaker_encoder_embed(params, feats, prefix))
    return average_embeddings(embs)


def cosine_similarity(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise SentinelError("cosine similarity is undefined for the zero (no-enrollment) embedding")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))
