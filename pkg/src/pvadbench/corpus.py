"""Synthetic multi-speaker corpus with ts / nts / ns frame labels.

Speakers are formant-filtered pulse trains; utterances concatenate 1-3
speakers' segments with silence gaps and add noise at 0-30 dB SNR. A 16-bit
WAV path lets real recordings stand in for the synthetic audio.
"""

from __future__ import annotations

import base64
import configparser
import dataclasses
import hashlib
import json
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from . import dsp
from .models import NS, NTS, TS

SCHEMA_VERSION = 1
MAX_UTTERANCE_S = 20.0
LABEL_CHARS = "tns"  # ts, nts, ns
SPLITS = ("train", "val", "test")

# (F1, F2) multipliers for a small shared vowel inventory
_VOWELS = np.array([[1.4, 0.8], [0.55, 1.5], [0.6, 0.6], [0.9, 1.25], [1.0, 0.65]])
_NEUTRAL_FORMANTS = np.array([500.0, 1500.0, 2500.0, 3300.0])
_BANDWIDTHS = np.array([70.0, 90.0, 120.0, 160.0])


class CorpusError(ValueError):
    pass


class WavFormatError(CorpusError):
    pass


@dataclass(frozen=True)
class SyntheticSpeaker:
    speaker_id: str
    formants: tuple  # ((center_hz, bandwidth_hz), ...)
    pitch_hz: float
    seed: int

    def to_dict(self):
        return {
            "speaker_id": self.speaker_id,
            "formants": [list(f) for f in self.formants],
            "pitch_hz": self.pitch_hz,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["speaker_id"], tuple(tuple(f) for f in d["formants"]), float(d["pitch_hz"]), int(d["seed"]))


@dataclass
class Utterance:
    id: str
    signal: Optional[np.ndarray]
    labels: np.ndarray
    target_speaker_id: str
    segments: list
    snr_db: float
    split: str
    enrolled: bool = True
    impostor: bool = False
    enroll_segments: list = field(default_factory=list)
    enrollment: Optional[np.ndarray] = None
    segment_seeds: list = field(default_factory=list)
    clip_fraction: float = 0.0
    features: Optional[np.ndarray] = None

    @property
    def speakers(self):
        return sorted({s[0] for s in self.segments})

    @property
    def has_target_speech(self):
        return bool(np.any(self.labels == TS))

    def feats(self):
        if self.features is None:
            self.features = dsp.log_mel_features(self.signal)
        return self.features


@dataclass
class CorpusConfig:
    n_speakers: int = 12
    n_train: int = 200
    n_val: int = 40
    n_test: int = 80
    seed: int = 7
    snr_min: float = 0.0
    snr_max: float = 30.0
    dropout: float = 0.2
    impostor_fraction: float = 0.5
    seg_ms_min: int = 500
    seg_ms_max: int = 1500
    max_segments_per_speaker: int = 2
    enroll_segments_per_speaker: int = 5
    enroll_ms: int = 2000

    def validate(self):
        if self.n_speakers < 6:
            raise CorpusError("need at least 6 speakers so test utterances can draw impostors")
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise CorpusError("every split needs at least one utterance")
        if not 0.0 <= self.snr_min <= self.snr_max <= 30.0:
            raise CorpusError("snr range must lie inside [0, 30] dB")
        if not 0.0 <= self.dropout <= 1.0 or not 0.0 <= self.impostor_fraction <= 1.0:
            raise CorpusError("fractions must lie in [0, 1]")
        if not 200 <= self.seg_ms_min <= self.seg_ms_max <= 5000:
            raise CorpusError("segment durations must lie in [200, 5000] ms")
        if not 3 <= self.enroll_segments_per_speaker <= 10:
            raise CorpusError("enroll_segments_per_speaker must be in [3, 10]")
        worst = 3 * self.max_segments_per_speaker * (self.seg_ms_max + 500) + 500
        if worst > MAX_UTTERANCE_S * 1000:
            raise CorpusError("configuration can exceed the 20 s utterance cap")
        return self


def load_config(path) -> CorpusConfig:
    """Read the ``[corpus]`` section of an INI-style key = value file."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise CorpusError(f"cannot read config file {path}")
    cfg = CorpusConfig()
    if parser.has_section("corpus"):
        for f in dataclasses.fields(CorpusConfig):
            if parser.has_option("corpus", f.name):
                raw = parser.get("corpus", f.name)
                setattr(cfg, f.name, float(raw) if f.type == "float" else int(raw))
    return cfg


# ---------------------------------------------------------------------------
# speakers and segments


def make_speaker(index, seed) -> SyntheticSpeaker:
    spk_seed = int(np.random.SeedSequence([seed, 1, index]).generate_state(1)[0])
    rng = np.random.default_rng(spk_seed)
    tract = rng.uniform(0.85, 1.2)
    centers = _NEUTRAL_FORMANTS * tract * rng.uniform(0.94, 1.06, size=4)
    centers = np.clip(centers, 200.0, 3500.0)
    bws = _BANDWIDTHS * rng.uniform(0.8, 1.25, size=4)
    pitch = float(np.exp(rng.uniform(np.log(85.0), np.log(260.0))))
    formants = tuple((round(float(c), 3), round(float(b), 3)) for c, b in zip(centers, bws))
    return SyntheticSpeaker(f"spk{index:03d}", formants, round(pitch, 3), spk_seed)


def make_roster(n, seed):
    return [make_speaker(i, seed) for i in range(n)]


def _resonator(center, bw, sr=dsp.SAMPLE_RATE):
    r = np.exp(-np.pi * bw / sr)
    theta = 2.0 * np.pi * center / sr
    a = np.array([1.0, -2.0 * r * np.cos(theta), r * r])
    return np.array([a.sum()]), a  # unit gain at DC-ish scale


def synth_segment(spk: SyntheticSpeaker, duration_ms, seed) -> np.ndarray:
    """Voiced speech-like audio for one speaker, peak-normalised to 0.5."""
    if not 200 <= duration_ms <= 5000:
        raise CorpusError(f"segment duration {duration_ms} ms outside [200, 5000]")
    sr = dsp.SAMPLE_RATE
    n = int(duration_ms) * sr // 1000
    rng = np.random.default_rng([spk.seed, int(seed)])
    t = np.arange(n) / sr

    # pitch contour with slow drift and per-sample jitter
    drift = 1.0 + 0.06 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi))
    f0 = spk.pitch_hz * drift * (1.0 + 0.01 * rng.standard_normal(n))
    phase = np.cumsum(f0 / sr)
    pulses = np.zeros(n)
    pulses[1:][np.diff(np.floor(phase)) > 0] = 1.0
    source = lfilter([1.0], [1.0, -0.9], pulses) + 0.02 * rng.standard_normal(n)

    # syllables: each picks a vowel and gets a rise/fall envelope
    out = np.zeros(n)
    base = np.array([f[0] for f in spk.formants])
    bws = np.array([f[1] for f in spk.formants])
    zi = [np.zeros(2) for _ in base]
    start = 0
    while start < n:
        length = min(n - start, int(rng.uniform(0.12, 0.3) * sr))
        ratios = np.ones(len(base))
        ratios[:2] = _VOWELS[rng.integers(len(_VOWELS))]
        centers = np.clip(base * ratios, 200.0, 3500.0)
        chunk = source[start:start + length]
        y = np.zeros(length)
        for k, (c, bw) in enumerate(zip(centers, bws)):
            b, a = _resonator(c, bw)
            yk, zi[k] = lfilter(b, a, chunk, zi=zi[k])
            y += yk / (k + 1)
        env = 0.4 + 0.6 * np.sin(np.pi * (np.arange(length) + 0.5) / length)
        out[start:start + length] = y * env
        start += length

    peak = np.abs(out).max()
    if peak > 0:
        out *= 0.5 / peak
    return out


def make_noise(n_samples, rng, kind=None):
    """White or slowly amplitude-modulated coloured noise, unit RMS."""
    kind = kind or ("white", "modulated")[int(rng.integers(2))]
    x = rng.standard_normal(n_samples)
    if kind == "modulated":
        x = lfilter([1.0], [1.0, -0.7], x)
        t = np.arange(n_samples) / dsp.SAMPLE_RATE
        x *= 1.0 + 0.8 * np.sin(2 * np.pi * rng.uniform(0.5, 4.0) * t + rng.uniform(0, 2 * np.pi))
    elif kind != "white":
        raise CorpusError(f"unknown noise kind {kind!r}")
    return x / np.sqrt(np.mean(x * x))


@dataclass
class MixResult:
    signal: np.ndarray
    gain: float
    clip_fraction: float


def rms(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def mix_at_snr(clean, noise, snr_db, offset=0) -> MixResult:
    """Add ``noise`` to ``clean`` at ``snr_db``.

    Both RMS values are measured over the active (non-zero) samples of
    ``clean``, so the SNR holds inside the speech region. Noise shorter than
    the signal is tiled, starting at ``offset``.
    """
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.size == 0:
        raise CorpusError("empty noise signal")
    if noise.size < clean.size or offset:
        reps = int(np.ceil((clean.size + offset) / noise.size))
        noise = np.tile(noise, reps + 1)[offset % noise.size:][: clean.size]
    else:
        noise = noise[: clean.size]
    active = clean != 0.0
    rms_clean = rms(clean[active])
    if rms_clean == 0.0:
        raise CorpusError("clean signal is silent; SNR is undefined")
    rms_noise = rms(noise[active])
    if rms_noise == 0.0:
        raise CorpusError("noise is silent over the speech region")
    gain = rms_clean / rms_noise * 10.0 ** (-snr_db / 20.0)
    mixed = clean + gain * noise
    clipped = np.abs(mixed) > 1.0
    return MixResult(np.clip(mixed, -1.0, 1.0), gain, float(clipped.mean()))


def quantize(x):
    """Snap to the 16-bit PCM grid used by the WAV files."""
    return np.round(np.clip(x, -1.0, 1.0) * 32767.0) / 32767.0


def frame_labels(n_samples, segments, target_speaker_id):
    """Frame-centre labelling: ts / nts inside a segment, ns elsewhere."""
    n = dsp.n_frames(n_samples)
    centers = np.arange(n) * dsp.HOP + dsp.FRAME_LEN // 2
    labels = np.full(n, NS, dtype=np.int8)
    for spk, start, end in segments:
        inside = (centers >= start) & (centers < end)
        labels[inside] = TS if spk == target_speaker_id else NTS
    return labels


def build_utterance(utt_id, pieces, target_speaker_id, noise, snr_db, rng, split="train", lead_gap=True,
                    noise_offset=None):
    """Concatenate ``pieces`` = [(speaker_id, pcm), ...] with 100-500 ms gaps and add noise."""
    if not pieces:
        raise CorpusError("an utterance needs at least one segment")
    if not 0.0 <= snr_db <= 30.0:
        raise CorpusError(f"snr {snr_db} dB outside [0, 30]")
    sr = dsp.SAMPLE_RATE

    def gap():
        return int(rng.integers(100, 501)) * sr // 1000

    parts, segments = [], []
    pos = 0
    if lead_gap:
        g = gap()
        parts.append(np.zeros(g))
        pos += g
    for spk, pcm in pieces:
        pcm = np.asarray(pcm, dtype=np.float64)
        parts.append(pcm)
        segments.append((spk, pos, pos + pcm.size))
        pos += pcm.size
        g = gap()
        parts.append(np.zeros(g))
        pos += g
    clean = np.concatenate(parts)
    if clean.size > MAX_UTTERANCE_S * sr:
        raise CorpusError(f"utterance {utt_id} longer than {MAX_UTTERANCE_S} s")
    if noise_offset is None:
        noise_offset = int(rng.integers(len(noise)))
    mix = mix_at_snr(clean, noise, snr_db, offset=noise_offset)
    signal = quantize(mix.signal)
    return Utterance(
        id=utt_id,
        signal=signal,
        labels=frame_labels(signal.size, segments, target_speaker_id),
        target_speaker_id=target_speaker_id,
        segments=segments,
        snr_db=float(snr_db),
        split=split,
        clip_fraction=mix.clip_fraction,
    )


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def apply_enrollment_dropout(utterances, fraction=0.2, rng=None):
    """Zero-enroll exactly round(fraction * N) utterances per split.

    Dropped utterances get the zero embedding and all speech relabelled ts.
    Returns new Utterance objects; inputs are not modified.
    """
    if not 0.0 <= fraction <= 1.0:
        raise CorpusError("dropout fraction must be in [0, 1]")
    rng = rng if rng is not None else np.random.default_rng(0)
    out = list(utterances)
    for split in SPLITS:
        idx = [i for i, u in enumerate(out) if u.split == split]
        k = _round_half_up(fraction * len(idx))
        if k == 0:
            continue
        chosen = rng.choice(len(idx), size=k, replace=False)
        for j in sorted(chosen):
            i = idx[j]
            u = out[i]
            labels = u.labels.copy()
            labels[labels == NTS] = TS
            out[i] = dataclasses.replace(
                u, labels=labels, enrolled=False, enroll_segments=[], enrollment=np.zeros(256)
            )
    return out


# ---------------------------------------------------------------------------
# corpus generation


@dataclass
class Corpus:
    config: CorpusConfig
    roster: list
    train_speakers: list
    test_speakers: list
    enroll_pool: dict  # speaker_id -> [(segment_id, seed)]
    utterances: list
    root: Optional[Path] = None
    enroll_signals: dict = field(default_factory=dict)  # segment_id -> pcm

    def split(self, name):
        return [u for u in self.utterances if u.split == name]

    def speaker(self, speaker_id):
        for s in self.roster:
            if s.speaker_id == speaker_id:
                return s
        raise KeyError(speaker_id)


def _utt_rng(seed, split, index):
    return np.random.default_rng([seed, 2, SPLITS.index(split), index])


def generate_corpus(config: CorpusConfig) -> Corpus:
    """Synthesise the whole corpus in memory (pure function of ``config``)."""
    config.validate()
    seed = config.seed
    roster = make_roster(config.n_speakers, seed)
    order = np.random.default_rng([seed, 0]).permutation(config.n_speakers)
    n_test_spk = max(4, _round_half_up(config.n_speakers / 3))
    test_speakers = sorted(roster[i].speaker_id for i in order[:n_test_spk])
    train_speakers = sorted(roster[i].speaker_id for i in order[n_test_spk:])
    by_id = {s.speaker_id: s for s in roster}

    enroll_pool, enroll_signals = {}, {}
    for spk in roster:
        entries = []
        for k in range(config.enroll_segments_per_speaker):
            seg_seed = int(np.random.SeedSequence([seed, 3, int(spk.speaker_id[3:]), k]).generate_state(1)[0])
            seg_id = f"{spk.speaker_id}_enroll{k}"
            enroll_signals[seg_id] = quantize(synth_segment(spk, config.enroll_ms, seg_seed))
            entries.append((seg_id, seg_seed))
        enroll_pool[spk.speaker_id] = entries

    counts = {"train": config.n_train, "val": config.n_val, "test": config.n_test}
    utterances = []
    for split in SPLITS:
        pool = test_speakers if split == "test" else train_speakers
        n = counts[split]
        impostors = set()
        if split == "test":
            k = _round_half_up(config.impostor_fraction * n)
            impostors = set(np.random.default_rng([seed, 4]).choice(n, size=k, replace=False).tolist())
        for i in range(n):
            rng = _utt_rng(seed, split, i)
            impostor = i in impostors
            if impostor:
                target = pool[int(rng.integers(len(pool)))]
                others = [s for s in pool if s != target]
                k = int(rng.integers(1, min(3, len(others)) + 1))
                chosen = [others[j] for j in rng.choice(len(others), size=k, replace=False)]
            else:
                k = int(rng.integers(1, min(3, len(pool)) + 1))
                chosen = [pool[j] for j in rng.choice(len(pool), size=k, replace=False)]
                target = chosen[int(rng.integers(len(chosen)))]
            pieces, seeds = [], []
            for spk_id in chosen:
                for _ in range(int(rng.integers(1, config.max_segments_per_speaker + 1))):
                    dur = int(rng.integers(config.seg_ms_min, config.seg_ms_max + 1))
                    seg_seed = int(rng.integers(2 ** 31))
                    pieces.append((spk_id, synth_segment(by_id[spk_id], dur, seg_seed)))
                    seeds.append((spk_id, seg_seed))
            perm = rng.permutation(len(pieces))
            pieces = [pieces[j] for j in perm]
            seeds = [seeds[j] for j in perm]
            total = sum(p[1].size for p in pieces) + (len(pieces) + 1) * 8000
            noise = make_noise(total, rng)
            snr = float(rng.uniform(config.snr_min, config.snr_max))
            utt = build_utterance(f"{split}{i:04d}", pieces, target, noise, snr, rng, split)
            n_enroll = int(rng.integers(3, 6))
            pool_ids = [e[0] for e in enroll_pool[target]]
            utt.enroll_segments = sorted(rng.choice(pool_ids, size=min(n_enroll, len(pool_ids)), replace=False).tolist())
            utt.impostor = impostor
            utt.segment_seeds = seeds
            utterances.append(utt)

    utterances = apply_enrollment_dropout(utterances, config.dropout, np.random.default_rng([seed, 5]))
    return Corpus(config, roster, train_speakers, test_speakers, enroll_pool, utterances,
                  enroll_signals=enroll_signals)


# ---------------------------------------------------------------------------
# WAV + manifest I/O


def save_wav(signal, path):
    signal = np.asarray(signal, dtype=np.float64)
    pcm = np.round(np.clip(signal, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(dsp.SAMPLE_RATE)
        w.writeframes(pcm.tobytes())


def load_wav(path) -> np.ndarray:
    try:
        w = wave.open(str(path), "rb")
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a PCM WAV file ({exc})") from None
    with w:
        if w.getnchannels() != 1:
            raise WavFormatError(f"{path}: expected mono audio, found {w.getnchannels()} channels")
        if w.getframerate() != dsp.SAMPLE_RATE:
            raise WavFormatError(f"{path}: expected a 16000 Hz sample rate, found {w.getframerate()} Hz")
        if w.getsampwidth() != 2:
            raise WavFormatError(f"{path}: expected 16-bit samples, found {8 * w.getsampwidth()}-bit")
        data = w.readframes(w.getnframes())
    return np.frombuffer(data, dtype="<i2").astype(np.float64) / 32767.0


def encode_embedding(e) -> str:
    return base64.b64encode(np.asarray(e, dtype="<f4").tobytes()).decode("ascii")


def decode_embedding(s) -> np.ndarray:
    raw = base64.b64decode(s)
    if len(raw) != 256 * 4:
        raise CorpusError(f"embedding payload has {len(raw)} bytes, expected 1024")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def _labels_to_str(labels):
    return "".join(LABEL_CHARS[int(x)] for x in labels)


def _labels_from_str(s):
    lut = {c: i for i, c in enumerate(LABEL_CHARS)}
    return np.array([lut[c] for c in s], dtype=np.int8)


def utterance_record(u: Utterance, wav_rel):
    return {
        "schema_version": SCHEMA_VERSION,
        "id": u.id,
        "split": u.split,
        "wav": wav_rel,
        "target_speaker_id": u.target_speaker_id,
        "segments": [[s, int(a), int(b)] for s, a, b in u.segments],
        "segment_seeds": [[s, int(x)] for s, x in u.segment_seeds],
        "snr_db": round(u.snr_db, 6),
        "clip_fraction": u.clip_fraction,
        "impostor": u.impostor,
        "enrolled": u.enrolled,
        "enroll_segments": list(u.enroll_segments),
        "enrollment": None if u.enrollment is None else encode_embedding(u.enrollment),
        "labels": _labels_to_str(u.labels),
    }


def write_corpus(corpus: Corpus, root):
    """Write WAVs, ``manifest.jsonl`` and ``corpus.json`` under ``root``."""
    root = Path(root)
    (root / "wavs").mkdir(parents=True, exist_ok=True)
    (root / "enroll").mkdir(parents=True, exist_ok=True)
    for seg_id, pcm in corpus.enroll_signals.items():
        save_wav(pcm, root / "enroll" / f"{seg_id}.wav")
    lines = []
    for u in corpus.utterances:
        rel = f"wavs/{u.id}.wav"
        save_wav(u.signal, root / rel)
        lines.append(json.dumps(utterance_record(u, rel), sort_keys=True))
    (root / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "seed": corpus.config.seed,
        "config": dataclasses.asdict(corpus.config),
        "speakers": [s.to_dict() for s in corpus.roster],
        "train_speakers": corpus.train_speakers,
        "test_speakers": corpus.test_speakers,
        "enroll_pool": {k: [[sid, int(sd)] for sid, sd in v] for k, v in corpus.enroll_pool.items()},
    }
    (root / "corpus.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    corpus.root = root
    return root


def read_manifest(path):
    records = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("schema_version") != SCHEMA_VERSION:
                raise CorpusError(f"{path}:{n}: unsupported schema_version {rec.get('schema_version')!r}")
            records.append(rec)
    return records


def load_corpus(root, with_signals=False) -> Corpus:
    """Load a corpus directory; features are computed from the WAV files."""
    root = Path(root)
    if not (root / "manifest.jsonl").exists() or not (root / "corpus.json").exists():
        raise CorpusError(f"{root} is not a corpus directory (manifest.jsonl / corpus.json missing)")
    meta = json.loads((root / "corpus.json").read_text())
    cfg = CorpusConfig(**meta["config"])
    roster = [SyntheticSpeaker.from_dict(d) for d in meta["speakers"]]
    pool = {k: [(sid, sd) for sid, sd in v] for k, v in meta["enroll_pool"].items()}
    utts = []
    for rec in read_manifest(root / "manifest.jsonl"):
        signal = load_wav(root / rec["wav"])
        labels = _labels_from_str(rec["labels"])
        if labels.size != dsp.n_frames(signal.size):
            raise CorpusError(f"{rec['id']}: {labels.size} labels for {dsp.n_frames(signal.size)} frames")
        u = Utterance(
            id=rec["id"],
            signal=signal,
            labels=labels,
            target_speaker_id=rec["target_speaker_id"],
            segments=[tuple(s) for s in rec["segments"]],
            snr_db=rec["snr_db"],
            split=rec["split"],
            enrolled=rec["enrolled"],
            impostor=rec["impostor"],
            enroll_segments=rec["enroll_segments"],
            enrollment=None if rec["enrollment"] is None else decode_embedding(rec["enrollment"]),
            segment_seeds=[tuple(s) for s in rec["segment_seeds"]],
            clip_fraction=rec["clip_fraction"],
        )
        u.feats()
        if not with_signals:
            u.signal = None
        utts.append(u)
    enroll_signals = {
        sid: load_wav(root / "enroll" / f"{sid}.wav") for entries in pool.values() for sid, _ in entries
    }
    return Corpus(cfg, roster, meta["train_speakers"], meta["test_speakers"], pool, utts, root, enroll_signals)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def label_counts(utterances):
    counts = np.zeros(3, dtype=int)
    for u in utterances:
        counts += np.bincount(u.labels, minlength=3)
    return dict(zip(("ts", "nts", "ns"), counts.tolist()))


def summarize(corpus: Corpus):
    snrs = np.array([u.snr_db for u in corpus.utterances])
    return {
        "speakers": len(corpus.roster),
        "train_speakers": len(corpus.train_speakers),
        "test_speakers": len(corpus.test_speakers),
        "utterances": {s: len(corpus.split(s)) for s in SPLITS},
        "zero_enrolled": sum(not u.enrolled for u in corpus.utterances),
        "impostors": sum(u.impostor for u in corpus.utterances),
        "labels": label_counts(corpus.utterances),
        "snr_db": {"min": float(snrs.min()), "mean": float(snrs.mean()), "max": float(snrs.max())},
    }
