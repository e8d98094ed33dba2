"""Training loops (speaker encoder, VAD, end-to-end PVAD) and checkpoint I/O."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from . import nn
from . import speaker
from .models import NS, Dims, PvadModel, Variant, build_model, build_vad, check_model, pvad_logits, vad_logits

log = logging.getLogger(__name__)

MAGIC = b"PVADCKPT"
FORMAT_VERSION = 1
VAD = "VAD"
SPEAKER_ENCODER = "SPEAKER_ENCODER"
CHECKPOINT_TAGS = tuple(v.value for v in Variant) + (VAD, SPEAKER_ENCODER)


class NumericAbort(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class TrainConfig:
    variant: str
    epochs: int = 30
    lr: float = 1e-3
    seed: int = 0
    shuffle: bool = True
    # speaker-encoder only
    batch_size: int = 16
    crop_frames: int = 48

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class TrainResult:
    params: nn.ParameterSet
    history: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = 0

    @property
    def initial_train_loss(self):
        return self.history[0][1]

    @property
    def final_train_loss(self):
        return self.history[-1][1]

    @property
    def best_val_loss(self):
        return self.history[self.best_epoch][2]


def _check_loss(loss, what):
    value = float(loss.data)
    if not np.isfinite(value):
        raise NumericAbort(f"non-finite loss while training {what}")
    return value


def _fit(params, examples, val_examples, loss_fn, config, what):
    """Generic per-example Adam loop with best-val-loss retention.

    ``loss_fn(example)`` builds a graph and returns the scalar loss tensor.
    Epoch 0 of the history holds the losses of the untrained model.
    """
    if not examples:
        raise ValueError(f"no training examples for {what}")
    rng = np.random.default_rng([config.seed, 11])
    opt = nn.Adam(params, lr=config.lr)

    def evaluate(items):
        if not items:
            return float("nan")
        return float(np.mean([_check_loss(loss_fn(x), what) for x in items]))

    history = [(0, evaluate(examples), evaluate(val_examples))]
    best = params.arrays()
    best_epoch = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(examples)) if config.shuffle else np.arange(len(examples))
        losses = []
        for i in order:
            loss = loss_fn(examples[i])
            losses.append(_check_loss(loss, what))
            grads = nn.backward(loss, params)
            opt.step(grads)
        val = evaluate(val_examples)
        history.append((epoch, float(np.mean(losses)), val))
        log.info("%s epoch %d train %.4f val %.4f", what, epoch, history[-1][1], val)
        if not val_examples or val < history[best_epoch][2]:
            best = params.arrays()
            best_epoch = epoch
    params.load_arrays(best)
    params.round_to_f32()
    return TrainResult(params, history, best_epoch)


# ---------------------------------------------------------------------------
# task-specific trainers


def vad_targets(labels):
    """Map ts/nts/ns frame labels to VAD classes (0 = speech, 1 = no speech)."""
    return np.where(np.asarray(labels) == NS, 1, 0)


def train_vad(utterances, val_utterances, config: TrainConfig, params=None) -> TrainResult:
    params = params if params is not None else build_vad(config.seed)

    def loss_fn(u):
        return nn.softmax_cross_entropy(vad_logits(params, u.feats()), vad_targets(u.labels))

    return _fit(params, list(utterances), list(val_utterances), loss_fn, config, "VAD")


def train_pvad(model: PvadModel, utterances, val_utterances, config: TrainConfig) -> TrainResult:
    """End-to-end training of EF/LF/CLF/DCLF; one utterance per step."""
    if model.variant is Variant.DSC:
        raise ValueError("DSC is trained as VAD + speaker encoder, not end to end")
    for u in list(utterances) + list(val_utterances):
        if u.enrollment is None:
            raise ValueError(f"utterance {u.id} has no enrollment embedding; run attach_enrollments first")

    def loss_fn(u):
        return nn.softmax_cross_entropy(pvad_logits(model, u.feats(), u.enrollment), u.labels)

    return _fit(model.params, list(utterances), list(val_utterances), loss_fn, config, model.variant.value)


def speaker_crops(utterances, speakers):
    """Single-speaker frame ranges ``(utt, start_frame, stop_frame, class)`` from utterance segments."""
    index = {s: i for i, s in enumerate(speakers)}
    crops = []
    for u in utterances:
        n = u.labels.size
        centers = np.arange(n) * dsp.HOP + dsp.FRAME_LEN // 2
        for spk, start, end in u.segments:
            if spk not in index:
                continue
            inside = np.flatnonzero((centers >= start) & (centers < end))
            if inside.size:
                crops.append((u, int(inside[0]), int(inside[-1]) + 1, index[spk]))
    return crops


def _encoder_batches(crops, config, rng):
    order = rng.permutation(len(crops))
    L = config.crop_frames
    batches = []
    for k in range(0, len(order), config.batch_size):
        sel = [crops[i] for i in order[k:k + config.batch_size]]
        x = np.empty((L, len(sel), dsp.N_MELS))
        y = np.empty(len(sel), dtype=int)
        for j, (u, a, b, cls) in enumerate(sel):
            if b - a >= L:
                off = a + int(rng.integers(b - a - L + 1))
                x[:, j] = u.feats()[off:off + L]
            else:
                # short segment: repeat it to fill the crop
                idx = a + np.arange(L) % (b - a)
                x[:, j] = u.feats()[idx]
            y[j] = cls
        batches.append((x, y))
    return batches


def train_speaker_encoder(utterances, val_utterances, speakers, config: TrainConfig) -> TrainResult:
    """Speaker-classification training; the returned params exclude the classifier head."""
    rng = np.random.default_rng([config.seed, 12])
    params = speaker.build_encoder(config.seed)
    nn.add_linear(params, rng, "cls", speaker.EMBED_DIM, len(speakers))
    crops = speaker_crops(utterances, speakers)
    val_crops = speaker_crops(val_utterances, speakers)
    if not crops:
        raise ValueError("no single-speaker segments for encoder training")
    batch_rng = np.random.default_rng([config.seed, 13])
    val_batches = _encoder_batches(val_crops, config, np.random.default_rng([config.seed, 14]))

    def loss_fn(batch):
        x, y = batch
        pooled = nn.mean_time(speaker.encoder_states(params, x))
        return nn.softmax_cross_entropy(nn.run_linear(params, "cls", pooled), y)

    def evaluate(items):
        if not items:
            return float("nan")
        return float(np.mean([_check_loss(loss_fn(b), "encoder") for b in items]))

    opt = nn.Adam(params, lr=config.lr)
    train_batches = _encoder_batches(crops, config, batch_rng)
    history = [(0, evaluate(train_batches), evaluate(val_batches))]
    best, best_epoch = params.arrays(), 0
    for epoch in range(1, config.epochs + 1):
        losses = []
        for batch in train_batches:
            loss = loss_fn(batch)
            losses.append(_check_loss(loss, "encoder"))
            opt.step(nn.backward(loss, params))
        val = evaluate(val_batches)
        history.append((epoch, float(np.mean(losses)), val))
        log.info("encoder epoch %d train %.4f val %.4f", epoch, history[-1][1], val)
        if not val_batches or val < history[best_epoch][2]:
            best, best_epoch = params.arrays(), epoch
        # fresh random crops every epoch
        train_batches = _encoder_batches(crops, config, batch_rng)
    params.load_arrays(best)
    enc = nn.ParameterSet()
    for name, t in params.items():
        if not name.startswith("cls."):
            enc.add(name, t.data)
    enc.round_to_f32()
    return TrainResult(enc, history, best_epoch)


def attach_enrollments(corpus, encoder_params):
    """Fill ``enrollment`` for every enrolled utterance from its enrollment segments."""
    cache = {}
    for u in corpus.utterances:
        if not u.enrolled:
            u.enrollment = np.zeros(speaker.EMBED_DIM)
            continue
        embs = []
        for sid in u.enroll_segments:
            if sid not in cache:
                feats = dsp.log_mel_features(corpus.enroll_signals[sid])
                cache[sid] = speaker.speaker_encoder_embed(encoder_params, feats)
            embs.append(cache[sid])
        u.enrollment = speaker.average_embeddings(embs)
    return corpus


def dsc_model(vad_params, encoder_params, dims=Dims()) -> PvadModel:
    model = build_model(Variant.DSC, 0, dims)
    for name, t in model.params.items():
        src = vad_params if name.startswith("vad.") else encoder_params
        t.data = src[name].data.copy()
    return model


# ---------------------------------------------------------------------------
# checkpoints


def _reference_params(tag, dims):
    if tag == VAD:
        return build_vad(0, dims)
    if tag == SPEAKER_ENCODER:
        return speaker.build_encoder(0, dims.input, dims.enc_hidden, dims.enc_layers)
    return build_model(tag, 0, dims).params


def save_checkpoint(path, tag, params: nn.ParameterSet, dims=Dims(), seed=0, train_loss=None, val_loss=None):
    tag = tag.value if isinstance(tag, Variant) else str(tag)
    if tag not in CHECKPOINT_TAGS:
        raise CheckpointError(f"unknown variant tag {tag!r}")
    header = {
        "variant": tag,
        "dims": dims.to_dict(),
        "seed": int(seed),
        "train_loss": None if train_loss is None else float(train_loss),
        "val_loss": None if val_loss is None else float(val_loss),
        "parameter_count": params.count(),
        "params": [[name, list(t.shape)] for name, t in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for _, t in params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return Path(path)


@dataclass
class Checkpoint:
    tag: str
    params: nn.ParameterSet
    dims: Dims
    header: dict

    def model(self) -> PvadModel:
        if self.tag not in tuple(v.value for v in Variant):
            raise CheckpointError(f"checkpoint holds a {self.tag} sub-model, not a PVAD system")
        return PvadModel(Variant(self.tag), self.params, self.dims)


def read_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic (not a PVADCKPT file)")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})")
    if len(raw) < 16 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    tag = header.get("variant")
    if tag not in CHECKPOINT_TAGS:
        raise CheckpointError(f"{path}: unknown variant tag {tag!r}")
    try:
        dims = Dims(**header["dims"])
    except TypeError as exc:
        raise CheckpointError(f"{path}: bad dims record ({exc})") from None

    ref = _reference_params(tag, dims)
    listed = [(n, tuple(s)) for n, s in header["params"]]
    expected = [(n, t.shape) for n, t in ref.items()]
    if listed != expected:
        raise CheckpointError(f"{path}: parameter names/shapes do not match variant {tag} with the stored dims")
    if header.get("parameter_count") != ref.count():
        raise CheckpointError(f"{path}: parameter_count {header.get('parameter_count')} != {ref.count()}")

    payload = raw[16 + hlen:]
    need = 4 * ref.count()
    if len(payload) != need:
        raise CheckpointError(f"{path}: payload has {len(payload)} bytes, expected {need} (truncated or padded)")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    params = nn.ParameterSet()
    pos = 0
    for name, shape in expected:
        size = int(np.prod(shape))
        params.add(name, values[pos:pos + size].reshape(shape))
        pos += size
    if tag in tuple(v.value for v in Variant):
        check_model(PvadModel(Variant(tag), params, dims))
    return Checkpoint(tag, params, dims, header)


def load_checkpoint(path) -> PvadModel:
    return read_checkpoint(path).model()


def write_loss_csv(path, history):
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{e},{tr:.10g},{va:.10g}" for e, tr, va in history]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)
