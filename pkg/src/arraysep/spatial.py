"""Spatial front-end features: inter-microphone phase differences and the angle feature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .roomsim import SPEED_OF_SOUND, ArrayGeometry
from .signal_core import ComplexSpectrogram

DEFAULT_PAIRS = ((0, 14), (1, 13), (2, 12), (3, 11), (4, 10), (5, 9))


@dataclass(frozen=True)
class MicPairSet:
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        for i, j in pairs:
            if i == j:
                raise ValueError("pair indices must differ")
            if i < 0 or j < 0:
                raise ValueError("pair indices must be non-negative")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def default(cls) -> "MicPairSet":
        return cls(DEFAULT_PAIRS)

    def __len__(self) -> int:
        return len(self.pairs)

    def validate_for(self, num_channels: int) -> None:
        for i, j in self.pairs:
            if i >= num_channels or j >= num_channels:
                raise ValueError(f"pair ({i}, {j}) exceeds channel count {num_channels}")


@dataclass
class SpatialFeatures:
    ipd_cos: np.ndarray  # [pairs, frames, bins]
    ipd_sin: np.ndarray
    af: np.ndarray  # [frames, bins]


def ipd(spec: ComplexSpectrogram, pairs: MicPairSet) -> tuple[np.ndarray, np.ndarray]:
    """Phase difference angle(ch_i) - angle(ch_j) per pair, as (cos, sin) arrays.

    Bins where either channel has zero magnitude get the (1, 0) convention.
    """
    pairs.validate_for(spec.num_channels)
    idx_i = [i for i, _ in pairs.pairs]
    idx_j = [j for _, j in pairs.pairs]
    cross = spec.values[idx_i] * np.conj(spec.values[idx_j])
    mag = np.abs(cross)
    nonzero = mag > 0
    cos = np.where(nonzero, cross.real / np.where(nonzero, mag, 1.0), 1.0)
    sin = np.where(nonzero, cross.imag / np.where(nonzero, mag, 1.0), 0.0)
    return cos, sin


def ipd_angle(spec: ComplexSpectrogram, pairs: MicPairSet) -> np.ndarray:
    """Raw wrapped phase differences in radians, shape [pairs, frames, bins]."""
    pairs.validate_for(spec.num_channels)
    idx_i = [i for i, _ in pairs.pairs]
    idx_j = [j for _, j in pairs.pairs]
    return np.angle(spec.values[idx_i] * np.conj(spec.values[idx_j]))


def steering_phase(
    geometry: ArrayGeometry, angle_deg: float, freqs_hz, pairs: MicPairSet
) -> np.ndarray:
    """Far-field pairwise phase pattern for a source at the given axis angle.

    Returns 2*pi*f*(p_i - p_j)*cos(angle)/c, shape [pairs, freqs], unwrapped.
    """
    try:
        coords = geometry.axis_coordinates()
    except ValueError as exc:
        raise ValueError("AF requires linear array") from exc
    pairs.validate_for(geometry.num_mics)
    freqs = np.asarray(freqs_hz, dtype=np.float64)
    cos_theta = np.cos(np.radians(angle_deg))
    tau = np.array([(coords[i] - coords[j]) * cos_theta / SPEED_OF_SOUND for i, j in pairs.pairs])
    return 2.0 * np.pi * tau[:, None] * freqs[None, :]


def angle_feature(
    spec: ComplexSpectrogram,
    geometry: ArrayGeometry,
    target_angle: float,
    pairs: MicPairSet,
) -> np.ndarray:
    """Mean pairwise cosine agreement between observed IPDs and the target-direction
    phase pattern, shape [frames, bins]; values lie in [-1, 1]."""
    if len(pairs) == 0:
        raise ValueError("angle feature requires at least one microphone pair")
    cos_ipd, sin_ipd = ipd(spec, pairs)
    phases = steering_phase(geometry, target_angle, spec.config.bin_frequencies(), pairs)
    cos_ref = np.cos(phases)[:, None, :]
    sin_ref = np.sin(phases)[:, None, :]
    # cos(ipd - ref) expanded to avoid wrap handling
    return (cos_ipd * cos_ref + sin_ipd * sin_ref).mean(axis=0)


def compute_spatial_features(
    spec: ComplexSpectrogram,
    geometry: ArrayGeometry,
    target_angle: float,
    pairs: MicPairSet | None = None,
) -> SpatialFeatures:
    pairs = pairs if pairs is not None else MicPairSet.default()
    cos_ipd, sin_ipd = ipd(spec, pairs)
    af = angle_feature(spec, geometry, target_angle, pairs)
    return SpatialFeatures(ipd_cos=cos_ipd, ipd_sin=sin_ipd, af=af)


def assemble_frontend_input(
    lps: np.ndarray, ipd_cos: np.ndarray, ipd_sin: np.ndarray, af: np.ndarray
) -> np.ndarray:
    """Per-frame concatenation along the feature axis, ordered (LPS, IPD cos, IPD sin, AF)."""
    lps = np.asarray(lps, dtype=np.float64)
    af = np.asarray(af, dtype=np.float64)
    ipd_cos = np.asarray(ipd_cos, dtype=np.float64)
    ipd_sin = np.asarray(ipd_sin, dtype=np.float64)
    if ipd_cos.size == 0:
        ipd_cos = ipd_cos.reshape(0, lps.shape[0], lps.shape[1])
    if ipd_sin.size == 0:
        ipd_sin = ipd_sin.reshape(0, lps.shape[0], lps.shape[1])
    frames = {lps.shape[0], af.shape[0], ipd_cos.shape[1], ipd_sin.shape[1]}
    if len(frames) != 1:
        raise ValueError("frame count mismatch between feature blocks")
    num_frames = lps.shape[0]
    blocks = [
        lps,
        ipd_cos.transpose(1, 0, 2).reshape(num_frames, -1),
        ipd_sin.transpose(1, 0, 2).reshape(num_frames, -1),
        af,
    ]
    return np.concatenate(blocks, axis=1)
