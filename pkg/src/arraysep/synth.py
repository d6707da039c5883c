"""Self-contained dry-source generator: formant-filtered noise with per-speaker filters."""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.signal import sosfilt

_FORMANT_RANGES = ((250.0, 850.0), (850.0, 2200.0), (2200.0, 3300.0), (3300.0, 4500.0))
_FORMANT_BANDWIDTHS = (60.0, 90.0, 120.0, 160.0)
_TILT_RANGE = (1500.0, 6000.0)
_ENVELOPE_RATE_HZ = 4.0
_TARGET_RMS = 0.1


def _speaker_uniforms(speaker_id: str, count: int) -> list[float]:
    digest = hashlib.sha256(speaker_id.encode("utf-8")).digest()
    return [int.from_bytes(digest[4 * k : 4 * k + 4], "little") / 2**32 for k in range(count)]


def speaker_formants(speaker_id: str) -> tuple[float, ...]:
    """Fixed formant frequencies derived deterministically from the speaker id."""
    uniforms = _speaker_uniforms(speaker_id, len(_FORMANT_RANGES))
    return tuple(lo + u * (hi - lo) for u, (lo, hi) in zip(uniforms, _FORMANT_RANGES))


def speaker_tilt_cutoff(speaker_id: str) -> float:
    """Speaker-specific one-pole lowpass cutoff shaping the overall spectral tilt."""
    u = _speaker_uniforms(speaker_id, len(_FORMANT_RANGES) + 1)[-1]
    lo, hi = _TILT_RANGE
    return lo * (hi / lo) ** u


def _resonator_sos(freq: float, bandwidth: float, sample_rate: int) -> list[float]:
    r = np.exp(-np.pi * bandwidth / sample_rate)
    theta = 2.0 * np.pi * freq / sample_rate
    return [1.0 - r, 0.0, 0.0, 1.0, -2.0 * r * np.cos(theta), r * r]


def speech_like(speaker_id: str, duration_s: float, sample_rate: int, seed: int) -> np.ndarray:
    """Noise-excited formant cascade with a slow random amplitude envelope."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    if n < 1:
        raise ValueError("duration too short")
    excitation = rng.standard_normal(n)

    # syllabic-rate envelope from interpolated low-rate noise, kept above a floor
    n_ctrl = max(int(duration_s * _ENVELOPE_RATE_HZ) + 2, 4)
    ctrl = np.abs(rng.standard_normal(n_ctrl)) + 0.15
    envelope = np.interp(np.linspace(0, n_ctrl - 1, n), np.arange(n_ctrl), ctrl)

    sos = np.array(
        [
            _resonator_sos(f, bw, sample_rate)
            for f, bw in zip(speaker_formants(speaker_id), _FORMANT_BANDWIDTHS)
        ]
    )
    voiced = sosfilt(sos, excitation * envelope)
    # speaker-specific spectral tilt via a one-pole lowpass
    r = np.exp(-2.0 * np.pi * speaker_tilt_cutoff(speaker_id) / sample_rate)
    voiced = sosfilt(np.array([[1.0 - r, 0.0, 0.0, 1.0, -r, 0.0]]), voiced)
    rms = np.sqrt(np.mean(voiced**2))
    if rms <= 0:
        raise ValueError("degenerate synthetic signal")
    return voiced * (_TARGET_RMS / rms)


def white_noise(duration_s: float, sample_rate: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    if n < 1:
        raise ValueError("duration too short")
    return rng.standard_normal(n) * _TARGET_RMS
