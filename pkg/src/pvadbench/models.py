"""The five PVAD systems: DSC baseline and EF / LF / CLF / DCLF end-to-end fusions.

Every end-to-end variant shares the acoustic encoder (2-layer LSTM, hidden
64), two tanh FCN layers of width 64 and a linear 3-way head over
``(ts, nts, ns)``. They differ only in where the enrollment embedding enters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import dsp
from . import nn
from . import speaker

TS, NTS, NS = 0, 1, 2
LABEL_NAMES = ("ts", "nts", "ns")


class Variant(str, Enum):
    DSC = "DSC"
    EF = "EF"
    LF = "LF"
    CLF = "CLF"
    DCLF = "DCLF"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).upper())
        except ValueError:
            raise ValueError(f"unknown variant {name!r}; expected one of {[v.value for v in cls]}") from None


E2E_VARIANTS = (Variant.EF, Variant.LF, Variant.CLF, Variant.DCLF)


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class Dims:
    input: int = dsp.N_MELS
    enroll: int = speaker.EMBED_DIM
    hidden: int = 64
    lstm_layers: int = 2
    fcn: int = 64
    classes: int = 3
    dyn_hidden: int = 256
    enc_hidden: int = speaker.EMBED_DIM
    enc_layers: int = speaker.ENCODER_LAYERS

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class PvadModel:
    variant: Variant
    params: nn.ParameterSet
    dims: Dims = field(default_factory=Dims)

    def parameter_count(self):
        return self.params.count()


# ---------------------------------------------------------------------------
# construction


def _add_backbone(params, rng, prefix, dims, first_input, fcn_input, classes):
    nn.add_lstm(params, rng, f"{prefix}lstm1", first_input, dims.hidden)
    for k in range(2, dims.lstm_layers + 1):
        nn.add_lstm(params, rng, f"{prefix}lstm{k}", dims.hidden, dims.hidden)
    nn.add_linear(params, rng, f"{prefix}fcn1", fcn_input, dims.fcn)
    nn.add_linear(params, rng, f"{prefix}fcn2", dims.fcn, dims.fcn)
    nn.add_linear(params, rng, f"{prefix}head", dims.fcn, classes)


def _add_film(params, rng, cond_dim, dims):
    nn.add_linear(params, rng, "film", cond_dim, 2 * dims.hidden)
    # gamma starts at 1 so an untrained FiLM layer passes h through
    params["film.b"].data[: dims.hidden] = 1.0


def build_vad(seed, dims=Dims(), prefix="vad."):
    rng = np.random.default_rng(seed)
    params = nn.ParameterSet()
    _add_backbone(params, rng, prefix, dims, dims.input, dims.hidden, 2)
    return params


def build_model(variant, seed, dims=Dims()) -> PvadModel:
    variant = Variant.parse(variant)
    rng = np.random.default_rng(seed)
    params = nn.ParameterSet()
    if variant is Variant.DSC:
        _add_backbone(params, rng, "vad.", dims, dims.input, dims.hidden, 2)
        speaker.add_encoder(params, rng, "enc", dims.input, dims.enc_hidden, dims.enc_layers)
    elif variant is Variant.EF:
        _add_backbone(params, rng, "", dims, dims.input + dims.enroll, dims.hidden, dims.classes)
    elif variant is Variant.LF:
        _add_backbone(params, rng, "", dims, dims.input, dims.hidden + dims.enroll, dims.classes)
    elif variant is Variant.CLF:
        _add_backbone(params, rng, "", dims, dims.input, dims.hidden, dims.classes)
        _add_film(params, rng, dims.enroll, dims)
    else:
        _add_backbone(params, rng, "", dims, dims.input, dims.hidden, dims.classes)
        _add_film(params, rng, dims.enroll + 1, dims)
        nn.add_lstm(params, rng, "dyn.lstm", dims.input, dims.dyn_hidden)
    return PvadModel(variant, params, dims)


def expected_parameter_count(variant, dims=Dims()):
    """Closed-form trainable parameter count per variant."""
    variant = Variant.parse(variant)
    lstm_stack = nn.lstm_param_count(dims.input, dims.hidden) + (dims.lstm_layers - 1) * nn.lstm_param_count(
        dims.hidden, dims.hidden
    )
    fcn2 = nn.linear_param_count(dims.fcn, dims.fcn)
    head = nn.linear_param_count(dims.fcn, dims.classes)
    if variant is Variant.DSC:
        vad = lstm_stack + nn.linear_param_count(dims.hidden, dims.fcn) + fcn2 + nn.linear_param_count(dims.fcn, 2)
        return vad + speaker.encoder_param_count(dims.input, dims.enc_hidden, dims.enc_layers)
    if variant is Variant.EF:
        ef_first = nn.lstm_param_count(dims.input + dims.enroll, dims.hidden)
        return lstm_stack - nn.lstm_param_count(dims.input, dims.hidden) + ef_first + (
            nn.linear_param_count(dims.hidden, dims.fcn) + fcn2 + head
        )
    if variant is Variant.LF:
        return lstm_stack + nn.linear_param_count(dims.hidden + dims.enroll, dims.fcn) + fcn2 + head
    base = lstm_stack + nn.linear_param_count(dims.hidden, dims.fcn) + fcn2 + head
    if variant is Variant.CLF:
        return base + nn.linear_param_count(dims.enroll, 2 * dims.hidden)
    return (
        base
        + nn.linear_param_count(dims.enroll + 1, 2 * dims.hidden)
        + nn.lstm_param_count(dims.input, dims.dyn_hidden)
    )


def parameter_count(model: PvadModel) -> int:
    return model.parameter_count()


# ---------------------------------------------------------------------------
# forward graphs


def _acoustic(params, prefix, x, layers):
    for k in range(1, layers + 1):
        x, _, _ = nn.run_lstm(params, f"{prefix}lstm{k}", x)
    return x


def _classifier(params, prefix, h):
    h = nn.tanh(nn.run_linear(params, f"{prefix}fcn1", h))
    h = nn.tanh(nn.run_linear(params, f"{prefix}fcn2", h))
    return nn.run_linear(params, f"{prefix}head", h)


def _check_inputs(feats, enrollment, dims):
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise dsp.EmptyFeatureError("need a non-empty (T, 40) feature matrix")
    if feats.shape[1] != dims.input:
        raise nn.ShapeError(f"features have {feats.shape[1]} dims, model expects {dims.input}")
    e = speaker.ZERO_EMBEDDING if enrollment is None else np.asarray(enrollment, dtype=np.float64)
    if e.shape != (dims.enroll,):
        raise nn.ShapeError(f"enrollment must have shape ({dims.enroll},), got {e.shape}")
    return feats, e


def pvad_logits(model: PvadModel, feats, enrollment) -> nn.Tensor:
    """Per-frame logits ``(T, 3)`` for an end-to-end variant, as a graph node."""
    if model.variant is Variant.DSC:
        raise UsageError("DSC is a cascade; use dsc_posteriors / posteriors instead")
    dims, params = model.dims, model.params
    feats, e = _check_inputs(feats, enrollment, dims)
    T = feats.shape[0]
    x = speaker.scale_features(feats)

    if model.variant is Variant.EF:
        x = np.concatenate([x, np.broadcast_to(e, (T, dims.enroll))], axis=1)
        return _classifier(params, "", _acoustic(params, "", x, dims.lstm_layers))

    h = _acoustic(params, "", x, dims.lstm_layers)
    if model.variant is Variant.LF:
        return _classifier(params, "", nn.concat([h, nn.repeat_rows(e, T)]))

    if model.variant is Variant.CLF:
        gb = nn.run_linear(params, "film", e)
        gamma = nn.repeat_rows(nn.slice_last(gb, 0, dims.hidden), T)
        beta = nn.repeat_rows(nn.slice_last(gb, dims.hidden, 2 * dims.hidden), T)
    else:
        if speaker.is_zero_sentinel(e):
            # no enrollment: every speaker counts as target
            cos = nn.constant(np.ones((T, 1)))
        else:
            dyn, _, _ = nn.run_lstm(params, "dyn.lstm", x)
            cos = nn.cosine_rows(dyn, e)
        gb = nn.run_linear(params, "film", nn.concat([nn.repeat_rows(e, T), cos]))
        gamma = nn.slice_last(gb, 0, dims.hidden)
        beta = nn.slice_last(gb, dims.hidden, 2 * dims.hidden)
    return _classifier(params, "", nn.film(h, gamma, beta))


def vad_logits(params, feats, prefix="vad.", layers=2) -> nn.Tensor:
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise dsp.EmptyFeatureError("need a non-empty (T, 40) feature matrix")
    if f"{prefix}lstm1.w_ih" in params and params[f"{prefix}lstm1.w_ih"].shape[1] != feats.shape[1]:
        raise nn.ShapeError(f"features have {feats.shape[1]} dims")
    return _classifier(params, prefix, _acoustic(params, prefix, speaker.scale_features(feats), layers))


def forward_vad(params, feats, prefix="vad.") -> np.ndarray:
    """Per-frame ``(p_s, p_ns)``."""
    return nn.softmax(vad_logits(params, feats, prefix).data)


def forward_pvad(model: PvadModel, feats, enrollment) -> np.ndarray:
    """Per-frame ``(p_ts, p_nts, p_ns)`` for an end-to-end variant."""
    return nn.softmax(pvad_logits(model, feats, enrollment).data)


def dsc_combine(vad_post, cos):
    """Fuse VAD posteriors with a speaker cosine score.

    ``vad_post`` is ``(..., 2)`` as ``(p_s, p_ns)``; ``cos`` is a matching
    array/scalar in [-1, 1], or None when there is no enrollment (all speech
    is then treated as target speech).
    """
    vad_post = np.asarray(vad_post, dtype=np.float64)
    if vad_post.shape[-1] != 2:
        raise nn.ShapeError("vad posterior must have a trailing dimension of 2")
    if np.any(vad_post < 0) or np.any(np.abs(vad_post.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("vad posterior must be a probability pair")
    p_s, p_ns = vad_post[..., 0], vad_post[..., 1]
    if cos is None:
        s = np.ones_like(p_s)
    else:
        cos = np.asarray(cos, dtype=np.float64)
        if np.any(np.abs(cos) > 1.0 + 1e-9):
            raise ValueError("cosine score outside [-1, 1]")
        s = (np.clip(cos, -1.0, 1.0) + 1.0) / 2.0
    return np.stack([p_s * s, p_s * (1.0 - s), p_ns], axis=-1)


def dsc_posteriors(model: PvadModel, feats, enrollment) -> np.ndarray:
    """DSC cascade: VAD posteriors fused with a causal running-mean d-vector cosine."""
    feats, e = _check_inputs(feats, enrollment, model.dims)
    vad_post = forward_vad(model.params, feats, "vad.")
    if speaker.is_zero_sentinel(e):
        return dsc_combine(vad_post, None)
    running = speaker.running_embeddings(model.params, feats, "enc")
    cos = np.clip(running @ (e / np.linalg.norm(e)), -1.0, 1.0)
    return dsc_combine(vad_post, cos)


def posteriors(model: PvadModel, feats, enrollment) -> np.ndarray:
    if model.variant is Variant.DSC:
        return dsc_posteriors(model, feats, enrollment)
    return forward_pvad(model, feats, enrollment)


def check_model(model: PvadModel):
    """Verify parameter names/shapes against a freshly built model of the same variant."""
    ref = build_model(model.variant, 0, model.dims)
    if ref.params.names() != model.params.names():
        raise nn.ShapeError(f"{model.variant.value}: parameter names do not match the variant")
    for name, t in ref.params.items():
        if model.params[name].shape != t.shape:
            raise nn.ShapeError(f"{name}: expected shape {t.shape}, got {model.params[name].shape}")
    expected = expected_parameter_count(model.variant, model.dims)
    if model.parameter_count() != expected:
        raise nn.ShapeError(f"parameter count {model.parameter_count()} != {expected}")
