"""Oracle time-frequency masks, mask-weighted PSD estimation, MVDR weights and filtering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import ComplexSpectrogram, MultichannelWaveform, StftConfig, istft, stft

MASK_KINDS = ("ibm", "irm", "cirm")

_CIRM_MAG_CLIP = 2.0
_CIRM_DENOM_FLOOR = 1e-8


@dataclass
class TFMask:
    """Per-bin mask values [frames, bins]; real in [0, 1] for ibm/irm, complex for cirm."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind: {self.kind!r}")
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError("mask values must have shape [frames, bins]")
        if self.kind == "cirm":
            values = values.astype(np.complex128)
            if np.abs(values).max(initial=0.0) > _CIRM_MAG_CLIP + 1e-9:
                raise ValueError("cirm magnitude exceeds clip bound")
        else:
            values = values.astype(np.float64)
            if values.min(initial=0.0) < -1e-9 or values.max(initial=0.0) > 1.0 + 1e-9:
                raise ValueError("real mask values must lie in [0, 1]")
            values = np.clip(values, 0.0, 1.0)
        if not np.isfinite(values).all():
            raise ValueError("mask contains non-finite values")
        self.values = values

    def psd_weights(self) -> np.ndarray:
        """Real weights in [0, 1] used for PSD estimation."""
        if self.kind == "cirm":
            return np.clip(np.abs(self.values), 0.0, 1.0)
        return self.values

    def complement(self) -> "TFMask":
        return TFMask(1.0 - self.psd_weights(), "irm" if self.kind == "cirm" else self.kind)


@dataclass
class PsdSet:
    """Per-frequency spatial covariance matrices of target and noise, each [bins, R, R]."""

    phi_x: np.ndarray
    phi_n: np.ndarray

    def __post_init__(self):
        phi_x = np.asarray(self.phi_x, dtype=np.complex128)
        phi_n = np.asarray(self.phi_n, dtype=np.complex128)
        for name, phi in (("phi_x", phi_x), ("phi_n", phi_n)):
            if phi.ndim != 3 or phi.shape[1] != phi.shape[2]:
                raise ValueError(f"{name} must have shape [bins, R, R]")
            scale = max(np.abs(phi).max(), 1.0)
            if np.abs(phi - phi.conj().transpose(0, 2, 1)).max() > 1e-10 * scale:
                raise ValueError(f"{name} is not Hermitian")
        if phi_x.shape != phi_n.shape:
            raise ValueError("phi_x and phi_n shapes differ")
        self.phi_x, self.phi_n = phi_x, phi_n


@dataclass
class BeamformerFilter:
    """Per-frequency complex weight vectors [bins, R] and the reference channel index."""

    weights: np.ndarray
    reference_index: int

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.complex128)
        if weights.ndim != 2:
            raise ValueError("weights must have shape [bins, R]")
        if not np.isfinite(weights).all():
            raise ValueError("filter weights must be finite")
        if not 0 <= self.reference_index < weights.shape[1]:
            raise ValueError("reference_index out of range")
        self.weights = weights


def oracle_mask(
    target_spec: ComplexSpectrogram,
    others_spec: ComplexSpectrogram,
    mixture_spec: ComplexSpectrogram,
    channel: int,
    kind: str = "irm",
) -> TFMask:
    """Ideal mask at one channel from the known target and residual components."""
    if kind not in MASK_KINDS:
        raise ValueError(f"unknown mask kind: {kind!r}")
    shapes = {target_spec.values.shape, others_spec.values.shape, mixture_spec.values.shape}
    if len(shapes) != 1:
        raise ValueError("component spectrogram shapes differ")
    if not 0 <= channel < target_spec.num_channels:
        raise ValueError(f"channel {channel} out of range")
    s = target_spec.values[channel]
    v = others_spec.values[channel]
    if kind == "irm":
        denom = np.sqrt(np.abs(s) ** 2 + np.abs(v) ** 2)
        values = np.divide(np.abs(s), denom, out=np.zeros_like(denom), where=denom > 0)
    elif kind == "ibm":
        values = (np.abs(s) > np.abs(v)).astype(np.float64)
    else:
        y = mixture_spec.values[channel]
        mag = np.abs(y)
        denom = np.where(mag >= _CIRM_DENOM_FLOOR, y, _CIRM_DENOM_FLOOR + 0j)
        values = s / denom
        scale = np.minimum(1.0, _CIRM_MAG_CLIP / np.maximum(np.abs(values), 1e-300))
        values = values * scale
    return TFMask(values, kind)


def estimate_psd(spec: ComplexSpectrogram, mask: TFMask) -> np.ndarray:
    """Mask-weighted spatial covariance per frequency, Hermitian-symmetrized [bins, R, R]."""
    weights = mask.psd_weights()
    if weights.shape != (spec.num_frames, spec.num_bins):
        raise ValueError("mask shape does not match spectrogram")
    denom = weights.sum(axis=0)
    if np.any(denom <= 0):
        raise ValueError("degenerate mask")
    outer = np.einsum("tf,itf,jtf->fij", weights, spec.values, np.conj(spec.values))
    phi = outer / denom[:, None, None]
    return 0.5 * (phi + np.conj(phi).transpose(0, 2, 1))


def mvdr_weights(
    psd: PsdSet,
    reference_index: int = 0,
    diagonal_loading: float = 1e-6,
    fallback_to_reference: bool = False,
) -> BeamformerFilter:
    """Distortionless minimum-variance weights w = (phi_n^-1 phi_x / tr(phi_n^-1 phi_x)) u_r.

    The noise PSD is diagonally loaded before inversion. Frequencies where the
    trace is numerically zero raise, or pass the reference channel through when
    fallback_to_reference is set.
    """
    num_bins, num_ch, _ = psd.phi_n.shape
    if not 0 <= reference_index < num_ch:
        raise ValueError("reference_index out of range")
    eye = np.eye(num_ch)
    trace_n = np.einsum("fii->f", psd.phi_n).real
    load = diagonal_loading * trace_n / num_ch + 1e-10
    phi_n_loaded = psd.phi_n + load[:, None, None] * eye
    numerator = np.linalg.solve(phi_n_loaded, psd.phi_x)
    trace = np.einsum("fii->f", numerator)
    degenerate = np.abs(trace) < 1e-12
    if degenerate.any() and not fallback_to_reference:
        freq = int(np.nonzero(degenerate)[0][0])
        raise ValueError(f"no target energy at frequency {freq}")
    safe_trace = np.where(degenerate, 1.0, trace)
    weights = numerator[:, :, reference_index] / safe_trace[:, None]
    if degenerate.any():
        weights[degenerate] = eye[reference_index]
    return BeamformerFilter(weights, reference_index)


def apply_beamformer(filt: BeamformerFilter, spec: ComplexSpectrogram) -> ComplexSpectrogram:
    """Filtered output w(f)^H y(t, f) as a single-channel spectrogram."""
    if filt.weights.shape != (spec.num_bins, spec.num_channels):
        raise ValueError("filter shape does not match spectrogram")
    out = np.einsum("fi,itf->tf", np.conj(filt.weights), spec.values)
    return ComplexSpectrogram(out[None, :, :], spec.config)


@dataclass
class SeparationDetails:
    target_mask: TFMask
    noise_mask: TFMask
    beamformer: BeamformerFilter | None
    psd: PsdSet | None


def separate_utterance(
    mixture: MultichannelWaveform,
    target: MultichannelWaveform | None = None,
    interferer: MultichannelWaveform | None = None,
    noise: MultichannelWaveform | None = None,
    *,
    mask_kind: str = "irm",
    noise_mask: str = "complement",
    method: str = "mvdr",
    stft_config: StftConfig | None = None,
    diagonal_loading: float = 1e-6,
    reference_channel: int = 0,
    external_mask: TFMask | None = None,
    external_noise_mask: TFMask | None = None,
    return_details: bool = False,
):
    """Mask-driven separation of one utterance: STFT, masks, PSDs, MVDR, inverse STFT.

    Masks come either from the known components (oracle) or from external_mask.
    The noise mask defaults to the complement of the target mask; noise_mask
    "oracle" derives it from the residual components instead. method "masking"
    multiplies the reference channel spectrum by the target mask directly and
    skips beamforming.
    """
    if noise_mask not in ("complement", "oracle"):
        raise ValueError(f"unknown noise mask mode: {noise_mask!r}")
    if method not in ("mvdr", "masking"):
        raise ValueError(f"unknown separation method: {method!r}")
    cfg = stft_config if stft_config is not None else StftConfig(sample_rate=mixture.sample_rate)

    # pad so every true sample is fully covered by analysis windows; a modified
    # spectrogram is not a consistent STFT and edge frames would otherwise be
    # amplified by the tiny squared-window normalization there
    pad = cfg.fft_size

    def _padded_stft(wave: MultichannelWaveform) -> ComplexSpectrogram:
        samples = np.pad(wave.samples, ((0, 0), (pad, pad)))
        return stft(MultichannelWaveform(samples, wave.sample_rate), cfg)

    mix_spec = _padded_stft(mixture)

    others_spec = None
    target_spec = None
    if external_mask is None or (noise_mask == "oracle" and external_noise_mask is None):
        if target is None:
            raise ValueError("oracle masks require the target component")
        residual = np.zeros_like(mixture.samples)
        for comp in (interferer, noise):
            if comp is not None:
                residual = residual + comp.samples
        target_spec = _padded_stft(target)
        others_spec = _padded_stft(MultichannelWaveform(residual, mixture.sample_rate))

    if external_mask is not None:
        mask_x = external_mask
    else:
        mask_x = oracle_mask(target_spec, others_spec, mix_spec, reference_channel, mask_kind)

    if method == "masking":
        enhanced_spec = ComplexSpectrogram(
            (mask_x.values * mix_spec.values[reference_channel])[None, :, :], cfg
        )
        wave = _trim_padding(istft(enhanced_spec), pad, mixture.num_samples)
        if return_details:
            return wave, SeparationDetails(mask_x, mask_x.complement(), None, None)
        return wave

    if external_noise_mask is not None:
        mask_n = external_noise_mask
    elif noise_mask == "oracle":
        noise_kind = mask_kind if mask_kind in ("irm", "ibm") else "irm"
        mask_n = oracle_mask(others_spec, target_spec, mix_spec, reference_channel, noise_kind)
    else:
        mask_n = mask_x.complement()

    phi_x = estimate_psd(mix_spec, TFMask(_floor_empty_columns(mask_x.psd_weights()), "irm"))
    phi_n = estimate_psd(mix_spec, TFMask(_floor_empty_columns(mask_n.psd_weights()), "irm"))
    psd = PsdSet(phi_x, phi_n)
    filt = mvdr_weights(psd, reference_channel, diagonal_loading, fallback_to_reference=True)
    # with no appreciable noise evidence at a frequency the minimum-variance
    # solution is unconstrained; pass the reference channel through instead
    trace_x = np.einsum("fii->f", phi_x).real
    trace_n = np.einsum("fii->f", phi_n).real
    quiet = trace_n < 1e-10 * trace_x
    if quiet.any():
        weights = filt.weights.copy()
        weights[quiet] = 0.0
        weights[quiet, reference_channel] = 1.0
        filt = BeamformerFilter(weights, reference_channel)
    enhanced_spec = apply_beamformer(filt, mix_spec)
    wave = _trim_padding(istft(enhanced_spec), pad, mixture.num_samples)
    if return_details:
        return wave, SeparationDetails(mask_x, mask_n, filt, psd)
    return wave


def _floor_empty_columns(weights: np.ndarray, min_mean: float = 1e-6) -> np.ndarray:
    """Replace frequency columns with negligible total weight by uniform weights.

    A column whose mean weight is below min_mean carries no usable evidence for
    that frequency (binary masks can zero a column outright; complement masks on
    interference-free input leave numerical dust); averaging all frames there
    keeps the PSD defined instead of estimating it from noise-level weights.
    """
    weights = weights.copy()
    empty = weights.mean(axis=0) < min_mean
    if empty.any():
        weights[:, empty] = 1.0
    return weights


def _trim_padding(wave: MultichannelWaveform, pad: int, length: int) -> MultichannelWaveform:
    samples = wave.samples[:, pad:]
    if samples.shape[1] >= length:
        samples = samples[:, :length]
    else:
        samples = np.pad(samples, ((0, 0), (0, length - samples.shape[1])))
    return MultichannelWaveform(samples, wave.sample_rate)
