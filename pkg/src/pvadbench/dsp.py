"""Log-mel filterbank front end (40 bins, 25 ms frames, 10 ms hop, 16 kHz)."""

import numpy as np

SAMPLE_RATE = 16000
FRAME_LEN = 400
HOP = 160
N_FFT = 512
N_MELS = 40
POWER_FLOOR = 1e-10
LOG_FLOOR = float(np.log(POWER_FLOOR))


class ConfigurationError(ValueError):
    pass


class EmptyFeatureError(ValueError):
    pass


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels, sample_rate_hz):
    """Center frequencies (Hz) of ``n_mels`` filters spaced evenly in mel."""
    edges = np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_mels + 2)
    return mel_to_hz(edges[1:-1])


def mel_filterbank_matrix(n_mels=N_MELS, n_fft=N_FFT, sample_rate_hz=SAMPLE_RATE):
    """Triangular mel filters, shape ``(n_mels, n_fft // 2 + 1)``.

    Each row is scaled so its largest weight is exactly 1.
    """
    if n_mels < 1:
        raise ConfigurationError(f"n_mels must be >= 1, got {n_mels}")
    if n_fft < 2 * n_mels or n_fft & (n_fft - 1):
        raise ConfigurationError(f"n_fft must be a power of two >= 2*n_mels, got {n_fft}")
    edges_hz = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_mels + 2))
    bins_hz = np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft
    fb = np.zeros((n_mels, bins_hz.size))
    for m in range(n_mels):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rise = (bins_hz - lo) / (center - lo)
        fall = (hi - bins_hz) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rise, fall))
        peak = fb[m].max()
        if peak <= 0.0:
            raise ConfigurationError(f"filter {m} covers no FFT bin; use a larger n_fft")
        fb[m] /= peak
    return fb


_FILTERBANK = mel_filterbank_matrix()
_WINDOW = np.hanning(FRAME_LEN + 1)[:-1]  # periodic Hann


def n_frames(n_samples):
    if n_samples < FRAME_LEN:
        return 0
    return (n_samples - FRAME_LEN) // HOP + 1


def frame_signal(samples):
    samples = np.asarray(samples, dtype=np.float64)
    n = n_frames(samples.size)
    if n == 0:
        raise EmptyFeatureError(f"need at least {FRAME_LEN} samples, got {samples.size}")
    idx = np.arange(FRAME_LEN)[None, :] + HOP * np.arange(n)[:, None]
    return samples[idx]


def power_spectrum(frames):
    spec = np.fft.rfft(frames * _WINDOW, n=N_FFT, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def log_mel_features(samples):
    """40-dim log-mel frames of a 16 kHz signal, shape ``(n_frames, 40)``."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("expected a mono 1-D signal")
    if not np.all(np.isfinite(samples)):
        raise ValueError("signal contains non-finite samples")
    energies = power_spectrum(frame_signal(samples)) @ _FILTERBANK.T
    return np.log(np.maximum(energies, POWER_FLOOR))
