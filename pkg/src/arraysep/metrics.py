"""Separation and recognition metrics: SI-SNR (+gradient), STOI, WER, loss interpolation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .signal_core import MultichannelWaveform

_SISNR_EPS = 1e-12

# short-time intelligibility constants (one-third-octave envelope correlation)
_STOI_FS = 10000
_STOI_FRAME = 512
_STOI_HOP = 256
_STOI_NBANDS = 15
_STOI_MINFREQ = 150.0
_STOI_SEG = 30
_STOI_BETA = -15.0
_STOI_DYN_RANGE = 40.0


def _as_1d(signal) -> np.ndarray:
    if isinstance(signal, MultichannelWaveform):
        if signal.num_channels != 1:
            raise ValueError("metric expects a single-channel waveform")
        return signal.samples[0]
    arr = np.asarray(signal, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("metric expects a one-dimensional signal")
    return arr


def si_snr(est, ref, eps: float = _SISNR_EPS) -> float:
    """Scale-invariant SNR in dB: project est onto ref, compare projection and residual."""
    est = _as_1d(est)
    ref = _as_1d(ref)
    if est.shape != ref.shape:
        raise ValueError("signals must have equal length")
    ref = ref - ref.mean()
    est = est - est.mean()
    ref_energy = np.dot(ref, ref)
    if ref_energy <= 0:
        raise ValueError("reference has zero power")
    scale = np.dot(est, ref) / ref_energy
    projection = scale * ref
    residual = est - projection
    return float(
        10.0 * np.log10(np.dot(projection, projection) / (np.dot(residual, residual) + eps))
    )


def si_snr_grad(est, ref, eps: float = _SISNR_EPS) -> np.ndarray:
    """Analytic gradient of si_snr with respect to est."""
    est = _as_1d(est)
    ref = _as_1d(ref)
    if est.shape != ref.shape:
        raise ValueError("signals must have equal length")
    ref0 = ref - ref.mean()
    est0 = est - est.mean()
    ref_energy = np.dot(ref0, ref0)
    if ref_energy <= 0:
        raise ValueError("reference has zero power")
    scale = np.dot(est0, ref0) / ref_energy
    projection = scale * ref0
    residual = est0 - projection
    proj_energy = np.dot(projection, projection)
    res_energy = np.dot(residual, residual) + eps
    coeff = 20.0 / np.log(10.0)
    grad = coeff * (projection / proj_energy - residual / res_energy)
    # zero-meaning of est contributes a centering of the gradient
    return grad - grad.mean()


def _stoi_band_matrix() -> np.ndarray:
    freqs = np.fft.rfftfreq(_STOI_FRAME, d=1.0 / _STOI_FS)
    centers = _STOI_MINFREQ * 2.0 ** (np.arange(_STOI_NBANDS) / 3.0)
    lo = centers * 2.0 ** (-1.0 / 6.0)
    hi = centers * 2.0 ** (1.0 / 6.0)
    return ((freqs[None, :] >= lo[:, None]) & (freqs[None, :] < hi[:, None])).astype(np.float64)


def _frame(signal: np.ndarray, window: np.ndarray) -> np.ndarray:
    if len(signal) < _STOI_FRAME:
        raise ValueError("too short after silence removal")
    frames = np.lib.stride_tricks.sliding_window_view(signal, _STOI_FRAME)[:: _STOI_HOP]
    return frames * window


def stoi(est, ref, sample_rate: int) -> float:
    """Short-time intelligibility score from one-third-octave envelope correlations.

    Both signals are resampled to 10 kHz and framed with 512-sample Hann windows
    (hop 256). Frames more than 40 dB below the loudest reference frame are
    dropped, band envelopes are grouped into 30-frame segments, the degraded
    segments are normalized and clipped at the -15 dB bound, and the mean
    correlation over bands and segments is returned.
    """
    est = _as_1d(est)
    ref = _as_1d(ref)
    if est.shape != ref.shape:
        raise ValueError("signals must have equal length")
    if sample_rate != _STOI_FS:
        ratio = Fraction(_STOI_FS, int(sample_rate))
        est = resample_poly(est, ratio.numerator, ratio.denominator)
        ref = resample_poly(ref, ratio.numerator, ratio.denominator)

    n = np.arange(_STOI_FRAME)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / _STOI_FRAME)
    ref_frames = _frame(ref, window)
    est_frames = _frame(est, window)

    energy_db = 20.0 * np.log10(np.linalg.norm(ref_frames, axis=1) + _SISNR_EPS)
    keep = energy_db > energy_db.max() - _STOI_DYN_RANGE
    ref_frames = ref_frames[keep]
    est_frames = est_frames[keep]
    if ref_frames.shape[0] < _STOI_SEG:
        raise ValueError("too short after silence removal")

    bands = _stoi_band_matrix()
    ref_env = np.sqrt(bands @ (np.abs(np.fft.rfft(ref_frames, axis=1)) ** 2).T)
    est_env = np.sqrt(bands @ (np.abs(np.fft.rfft(est_frames, axis=1)) ** 2).T)

    clip_gain = 10.0 ** (-_STOI_BETA / 20.0)
    total = 0.0
    count = 0
    num_frames = ref_env.shape[1]
    for m in range(_STOI_SEG, num_frames + 1):
        x = ref_env[:, m - _STOI_SEG : m]
        y = est_env[:, m - _STOI_SEG : m]
        norm = np.linalg.norm(x, axis=1, keepdims=True) / (
            np.linalg.norm(y, axis=1, keepdims=True) + _SISNR_EPS
        )
        y = np.minimum(y * norm, x * (1.0 + clip_gain))
        xc = x - x.mean(axis=1, keepdims=True)
        yc = y - y.mean(axis=1, keepdims=True)
        denom = np.linalg.norm(xc, axis=1) * np.linalg.norm(yc, axis=1) + _SISNR_EPS
        total += float(((xc * yc).sum(axis=1) / denom).sum())
        count += _STOI_NBANDS
    return total / count


@dataclass
class WerBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    reference_length: int
    wer: float

    def __post_init__(self):
        if self.reference_length <= 0:
            raise ValueError("reference length must be positive")
        expected = (self.substitutions + self.deletions + self.insertions) / self.reference_length
        if abs(self.wer - expected) > 1e-12:
            raise ValueError("inconsistent WER breakdown")


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization with case folding."""
    return text.casefold().split()


def wer(ref_tokens, hyp_tokens) -> WerBreakdown:
    """Levenshtein-aligned word error counts; ties prefer substitution, then insertion,
    then deletion during backtrace."""
    ref = list(ref_tokens)
    hyp = list(hyp_tokens)
    if not ref:
        raise ValueError("empty reference")
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row = dist[i]
        prev = dist[i - 1]
        ref_word = ref[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ref_word != hyp[j - 1])
            ins = row[j - 1] + 1
            dele = prev[j] + 1
            row[j] = min(sub, ins, dele)
    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif j > 0 and dist[i][j] == dist[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dels += 1
            i -= 1
    return WerBreakdown(subs, dels, ins, n, (subs + dels + ins) / n)


@dataclass(frozen=True)
class LossTerms:
    l_att: float
    l_ctc: float
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta out of range")
        if self.l_att < 0 or self.l_ctc < 0:
            raise ValueError("loss terms must be non-negative")


def multitask_loss(terms: LossTerms) -> float:
    """(1 - beta) * l_att + beta * l_ctc with exact endpoints."""
    if terms.beta == 0.0:
        return float(terms.l_att)
    if terms.beta == 1.0:
        return float(terms.l_ctc)
    return float(terms.l_att + terms.beta * (terms.l_ctc - terms.l_att))


def pearson_correlation(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("series must be one-dimensional with equal length")
    if len(x) < 2:
        raise ValueError("need at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.linalg.norm(xc) * np.linalg.norm(yc)
    if denom <= 0:
        raise ValueError("degenerate series")
    return float(np.dot(xc, yc) / denom)


# --- per-run metric records -------------------------------------------------

_METRIC_FIELDS = ("sisnr_db", "sisnr_input_db", "stoi", "wer", "cosine_similarity")


@dataclass
class UtteranceMetrics:
    id: str
    angle_bin: str
    sisnr_db: float | None = None
    sisnr_input_db: float | None = None
    stoi: float | None = None
    wer: float | None = None
    cosine_similarity: float | None = None

    def to_dict(self) -> dict:
        out = {"id": self.id, "angle_bin": self.angle_bin}
        for name in _METRIC_FIELDS:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "UtteranceMetrics":
        kwargs = {name: data.get(name) for name in _METRIC_FIELDS}
        return cls(id=data["id"], angle_bin=data["angle_bin"], **kwargs)


@dataclass
class MetricsReport:
    records: list[UtteranceMetrics] = field(default_factory=list)

    def aggregates(self) -> dict:
        """Mean of each present metric, overall and per angle bin."""

        def summarize(records: list[UtteranceMetrics]) -> dict:
            out = {"count": len(records)}
            for name in _METRIC_FIELDS:
                values = [getattr(r, name) for r in records if getattr(r, name) is not None]
                if values:
                    out[name] = float(np.mean(values))
            return out

        bins = sorted({r.angle_bin for r in self.records}, key=_bin_sort_key)
        return {
            "overall": summarize(self.records),
            "bins": {b: summarize([r for r in self.records if r.angle_bin == b]) for b in bins},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps({"type": "utterance", **record.to_dict()}, sort_keys=True))
                fh.write("\n")
            aggregates = self.aggregates()
            for scope, values in [("overall", aggregates["overall"])] + list(
                aggregates["bins"].items()
            ):
                fh.write(
                    json.dumps({"type": "aggregate", "scope": scope, **values}, sort_keys=True)
                )
                fh.write("\n")

    @classmethod
    def load(cls, path) -> "MetricsReport":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                data = json.loads(line)
                if data.get("type") == "utterance":
                    records.append(UtteranceMetrics.from_dict(data))
        return cls(records)


def _bin_sort_key(label: str):
    try:
        return float(label.split("-")[0])
    except (ValueError, IndexError):
        return float("inf")
