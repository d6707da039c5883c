"""Time-frequency analysis, spectral features and WAV audio I/O."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis configuration shared by stft and istft."""

    fft_size: int = 512
    hop: int = 256
    window: str = "hann"
    sample_rate: int = 16000

    def __post_init__(self):
        if self.window != "hann":
            raise ValueError(f"unsupported window: {self.window!r}")
        if self.fft_size <= 0 or self.hop <= 0:
            raise ValueError("fft_size and hop must be positive")
        # hop must divide fft_size and leave at least 2x overlap so the
        # squared-window overlap-add normalization never hits zero
        if self.fft_size % self.hop != 0 or self.hop > self.fft_size // 2:
            raise ValueError("hop must divide fft_size and be at most fft_size/2")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_values(self) -> np.ndarray:
        # periodic Hann
        n = np.arange(self.fft_size)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.fft_size)

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency in Hz of each one-sided FFT bin."""
        return np.fft.rfftfreq(self.fft_size, d=1.0 / self.sample_rate)


@dataclass
class MultichannelWaveform:
    """Time-domain audio, shape [channels, samples]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if samples.ndim != 2:
            raise ValueError("samples must be a [channels, samples] matrix")
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ValueError("waveform must have at least one channel and one sample")
        if not np.isfinite(samples).all():
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = samples

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def channel(self, index: int) -> np.ndarray:
        return self.samples[index]

    def channel_waveform(self, index: int) -> "MultichannelWaveform":
        return MultichannelWaveform(self.samples[index : index + 1].copy(), self.sample_rate)


@dataclass
class ComplexSpectrogram:
    """One-sided complex STFT values, shape [channels, frames, bins]."""

    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 3:
            raise ValueError("values must have shape [channels, frames, bins]")
        if values.shape[2] != self.config.num_bins:
            raise ValueError(
                f"bin count {values.shape[2]} does not match config "
                f"(expected {self.config.num_bins})"
            )
        if not np.isfinite(values).all():
            raise ValueError("spectrogram contains non-finite values")
        self.values = values

    @property
    def num_channels(self) -> int:
        return self.values.shape[0]

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]

    @property
    def num_bins(self) -> int:
        return self.values.shape[2]


def stft(wave: MultichannelWaveform, config: StftConfig | None = None) -> ComplexSpectrogram:
    """One-sided STFT per channel; frame t covers samples [t*hop, t*hop+fft_size)."""
    cfg = config if config is not None else StftConfig(sample_rate=wave.sample_rate)
    if wave.sample_rate != cfg.sample_rate:
        raise ValueError("waveform sample rate does not match STFT config")
    if wave.num_samples < cfg.fft_size:
        raise ValueError("input too short")
    frames = np.lib.stride_tricks.sliding_window_view(wave.samples, cfg.fft_size, axis=1)
    frames = frames[:, :: cfg.hop, :]
    window = cfg.window_values()
    values = np.fft.rfft(frames * window, axis=-1)
    return ComplexSpectrogram(values, cfg)


def istft(spec: ComplexSpectrogram, config: StftConfig | None = None) -> MultichannelWaveform:
    """Weighted overlap-add synthesis; output length is (frames-1)*hop + fft_size."""
    cfg = config if config is not None else spec.config
    if cfg != spec.config:
        raise ValueError("config mismatch")
    window = cfg.window_values()
    frames = np.fft.irfft(spec.values, n=cfg.fft_size, axis=-1) * window
    num_channels, num_frames = spec.num_channels, spec.num_frames
    length = (num_frames - 1) * cfg.hop + cfg.fft_size
    out = np.zeros((num_channels, length))
    norm = np.zeros(length)
    wsq = window**2
    for t in range(num_frames):
        start = t * cfg.hop
        out[:, start : start + cfg.fft_size] += frames[:, t, :]
        norm[start : start + cfg.fft_size] += wsq
    out /= np.maximum(norm, LOG_FLOOR)
    return MultichannelWaveform(out, cfg.sample_rate)


def log_power_spectrum(spec: ComplexSpectrogram, channel: int) -> np.ndarray:
    """ln(|X|^2 + eps) for one channel, shape [frames, bins]."""
    if not 0 <= channel < spec.num_channels:
        raise ValueError(f"channel {channel} out of range")
    power = np.abs(spec.values[channel]) ** 2
    return np.log(power + LOG_FLOOR)


def hz_to_mel(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank spanning 0 Hz to Nyquist, shape [n_mels, bins]."""
    if n_mels < 1:
        raise ValueError("n_mels must be at least 1")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2))
    bin_hz = np.fft.rfftfreq(fft_size, d=1.0 / sample_rate)
    lower, center, upper = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    rising = (bin_hz - lower) / np.maximum(center - lower, 1e-9)
    falling = (upper - bin_hz) / np.maximum(upper - center, 1e-9)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def log_mel(spec: ComplexSpectrogram, channel: int, n_mels: int) -> np.ndarray:
    """Log mel-band energies for one channel, shape [frames, n_mels]."""
    if not 0 <= channel < spec.num_channels:
        raise ValueError(f"channel {channel} out of range")
    power = np.abs(spec.values[channel]) ** 2
    bank = mel_filterbank(n_mels, spec.config.fft_size, spec.config.sample_rate)
    return np.log(power @ bank.T + LOG_FLOOR)


# --- WAV I/O ------------------------------------------------------------

_wav_read_listeners: list[list[str]] = []


@contextmanager
def record_wav_reads():
    """Collect every path read via read_wav inside the context (for access audits)."""
    seen: list[str] = []
    _wav_read_listeners.append(seen)
    try:
        yield seen
    finally:
        _wav_read_listeners.remove(seen)


def read_wav(path) -> MultichannelWaveform:
    """Read a RIFF WAV file (16-bit PCM, 32-bit PCM or 32/64-bit float)."""
    path = str(path)
    for log in _wav_read_listeners:
        log.append(path)
    logger.debug("read wav %s", path)
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    else:
        data = data.astype(np.float64)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return MultichannelWaveform(data, int(rate))


def write_wav(path, wave: MultichannelWaveform, dtype: str = "float32") -> None:
    """Write a RIFF WAV file as 32-bit float (default) or 16-bit PCM."""
    data = wave.samples.T
    if dtype == "float32":
        wavfile.write(str(path), wave.sample_rate, data.astype(np.float32))
    elif dtype == "int16":
        clipped = np.clip(np.round(data * 32768.0), -32768, 32767)
        wavfile.write(str(path), wave.sample_rate, clipped.astype(np.int16))
    else:
        raise ValueError(f"unsupported wav dtype: {dtype!r}")
