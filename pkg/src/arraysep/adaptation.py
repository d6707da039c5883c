"""Speaker embeddings, the two fusion mechanisms and the forward-only dilated conv stack."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import arrayfile
from .signal_core import MultichannelWaveform, StftConfig, log_mel, stft

EMBEDDING_DIMS = (100, 256)
PROVENANCES = ("enrollment", "enrollment_free", "external")

GATE_HIDDEN = 200
GATE_OUT = 256


@dataclass
class SpeakerEmbedding:
    vector: np.ndarray
    provenance: str
    speaker_id: str = ""

    def __post_init__(self):
        vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if vector.shape[0] not in EMBEDDING_DIMS:
            raise ValueError(f"embedding dimension must be one of {EMBEDDING_DIMS}")
        norm = np.linalg.norm(vector)
        if not np.isfinite(vector).all() or norm <= 0:
            raise ValueError("embedding must be finite with positive norm")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance: {self.provenance!r}")
        self.vector = vector

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class StubEmbeddingConfig:
    n_mels: int = 40
    dim: int = 256
    seed: int = 1234
    min_duration_s: float = 0.5


@lru_cache(maxsize=8)
def _stub_projection(seed: int, out_dim: int, in_dim: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((out_dim, in_dim)))
    # canonical column signs so the projection is stable across platforms
    return q * np.sign(np.diag(r))


def speaker_embedding_stub(
    wave: MultichannelWaveform,
    config: StubEmbeddingConfig | None = None,
    speaker_id: str = "",
    provenance: str = "enrollment",
) -> SpeakerEmbedding:
    """Deterministic utterance embedding: log-mel mean/std pooling over speech
    frames followed by a seeded orthonormal projection and L2 normalization.

    Frames more than 40 dB below the loudest frame are excluded from pooling so
    leading or trailing silence cannot dominate the statistics.
    """
    cfg = config if config is not None else StubEmbeddingConfig()
    if wave.num_channels != 1:
        raise ValueError("stub embedding expects a single-channel waveform")
    if wave.duration < cfg.min_duration_s:
        raise ValueError("input too short")
    spec = stft(wave, StftConfig(sample_rate=wave.sample_rate))
    mel = log_mel(spec, 0, cfg.n_mels)
    frame_energy = np.abs(spec.values[0]).sum(axis=1)
    active = frame_energy > frame_energy.max() * 10.0 ** (-40.0 / 20.0)
    if active.any():
        mel = mel[active]
    pooled = np.concatenate([mel.mean(axis=0), mel.std(axis=0)])
    projection = _stub_projection(cfg.seed, cfg.dim, 2 * cfg.n_mels)
    vector = projection @ pooled
    norm = np.linalg.norm(vector)
    if norm <= 0:
        raise ValueError("degenerate embedding")
    return SpeakerEmbedding(vector / norm, provenance, speaker_id)


def embedding_for_mode(
    mode: str,
    mixture: MultichannelWaveform | None = None,
    enrollment: MultichannelWaveform | None = None,
    si_separator=None,
    config: StubEmbeddingConfig | None = None,
    speaker_id: str = "",
) -> SpeakerEmbedding:
    """Target-speaker embedding under either adaptation supervision mode.

    "enrollment" embeds pre-recorded clean speech; "enrollment_free" embeds the
    output of a speaker-independent separation pass over the mixture, so no
    clean speech of the target speaker is needed.
    """
    if mode == "enrollment":
        if enrollment is None:
            raise ValueError("enrollment mode requires enrollment audio")
        return speaker_embedding_stub(enrollment, config, speaker_id, provenance="enrollment")
    if mode == "enrollment_free":
        if mixture is None or si_separator is None:
            raise ValueError("enrollment-free mode requires a mixture and a separator")
        enhanced = si_separator(mixture)
        return speaker_embedding_stub(enhanced, config, speaker_id, provenance="enrollment_free")
    raise ValueError(f"unknown adaptation mode: {mode!r}")


def cosine_similarity(a: SpeakerEmbedding, b: SpeakerEmbedding) -> float:
    if a.dim != b.dim:
        raise ValueError("embedding dimensions differ")
    return float(
        np.dot(a.vector, b.vector) / (np.linalg.norm(a.vector) * np.linalg.norm(b.vector))
    )


# --- fusion blocks --------------------------------------------------------


@dataclass
class FusionGateParams:
    """Two-layer gate network: embedding -> 200 hidden (ReLU) -> 256 outputs."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w1.shape[0] != GATE_HIDDEN:
            raise ValueError(f"w1 must have {GATE_HIDDEN} rows")
        if self.w1.shape[1] not in EMBEDDING_DIMS:
            raise ValueError(f"w1 input dimension must be one of {EMBEDDING_DIMS}")
        if self.b1.shape != (GATE_HIDDEN,):
            raise ValueError("b1 shape mismatch")
        if self.w2.shape != (GATE_OUT, GATE_HIDDEN):
            raise ValueError(f"w2 must have shape ({GATE_OUT}, {GATE_HIDDEN})")
        if self.b2.shape != (GATE_OUT,):
            raise ValueError("b2 shape mismatch")

    @property
    def embed_dim(self) -> int:
        return self.w1.shape[1]

    @classmethod
    def random(cls, seed: int, embed_dim: int = 256) -> "FusionGateParams":
        rng = np.random.default_rng(seed)
        return cls(
            w1=rng.standard_normal((GATE_HIDDEN, embed_dim)) / np.sqrt(embed_dim),
            b1=np.zeros(GATE_HIDDEN),
            w2=rng.standard_normal((GATE_OUT, GATE_HIDDEN)) / np.sqrt(GATE_HIDDEN),
            b2=np.ones(GATE_OUT),
        )

    @classmethod
    def zeros(cls, embed_dim: int = 256) -> "FusionGateParams":
        return cls(
            w1=np.zeros((GATE_HIDDEN, embed_dim)),
            b1=np.zeros(GATE_HIDDEN),
            w2=np.zeros((GATE_OUT, GATE_HIDDEN)),
            b2=np.zeros(GATE_OUT),
        )


def fusion_gate(spk: SpeakerEmbedding, params: FusionGateParams) -> np.ndarray:
    """Per-dimension multiplicative gate vector of width 256."""
    if spk.dim != params.embed_dim:
        raise ValueError("embedding dimension does not match gate parameters")
    hidden = np.maximum(params.w1 @ spk.vector + params.b1, 0.0)
    return params.w2 @ hidden + params.b2


def fuse_input_bias(audio_emb: np.ndarray, spk: SpeakerEmbedding) -> np.ndarray:
    """Broadcast the speaker vector over time and append it after the audio features."""
    audio_emb = np.asarray(audio_emb, dtype=np.float64)
    if audio_emb.ndim != 2:
        raise ValueError("audio embedding must have shape [frames, features]")
    tiled = np.tile(spk.vector, (audio_emb.shape[0], 1))
    return np.concatenate([audio_emb, tiled], axis=1)


def fuse_activation_scaling(hidden: np.ndarray, gate: np.ndarray) -> np.ndarray:
    """Element-wise product of each frame with the gate vector."""
    hidden = np.asarray(hidden, dtype=np.float64)
    gate = np.asarray(gate, dtype=np.float64).reshape(-1)
    if hidden.ndim != 2 or hidden.shape[1] != gate.shape[0]:
        raise ValueError("gate width does not match hidden width")
    return hidden * gate[None, :]


# --- dilated temporal conv stack ------------------------------------------


@dataclass
class TcnBlockParams:
    w_in: np.ndarray  # [hidden, dim]
    b_in: np.ndarray  # [hidden]
    w_dw: np.ndarray  # [hidden, kernel]
    b_dw: np.ndarray  # [hidden]
    w_out: np.ndarray  # [dim, hidden]
    b_out: np.ndarray  # [dim]
    dilation: int

    def __post_init__(self):
        for name in ("w_in", "b_in", "w_dw", "b_dw", "w_out", "b_out"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        hidden, dim = self.w_in.shape
        if self.b_in.shape != (hidden,) or self.b_dw.shape != (hidden,):
            raise ValueError("bias shape mismatch")
        if self.w_dw.ndim != 2 or self.w_dw.shape[0] != hidden or self.w_dw.shape[1] % 2 != 1:
            raise ValueError("depthwise kernel must be [hidden, odd_width]")
        if self.w_out.shape != (dim, hidden) or self.b_out.shape != (dim,):
            raise ValueError("output projection shape mismatch")
        if self.dilation < 1:
            raise ValueError("dilation must be positive")

    @property
    def kernel_width(self) -> int:
        return self.w_dw.shape[1]


@dataclass
class TcnParams:
    """Stack of dilated blocks with exponentially increasing dilation 2^k."""

    blocks: tuple[TcnBlockParams, ...]

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("at least one block required")
        dim = blocks[0].w_in.shape[1]
        kernel = blocks[0].kernel_width
        for k, block in enumerate(blocks):
            if block.dilation != 2**k:
                raise ValueError("dilations must follow 2^k")
            if block.w_in.shape[1] != dim:
                raise ValueError("residual dimension must be constant across blocks")
            if block.kernel_width != kernel:
                raise ValueError("kernel width must be constant across blocks")
        self.blocks = blocks

    @property
    def dim(self) -> int:
        return self.blocks[0].w_in.shape[1]

    @classmethod
    def random(
        cls,
        seed: int,
        depth: int = 8,
        dim: int = 256,
        hidden: int = 512,
        kernel: int = 3,
        nonnegative: bool = False,
    ) -> "TcnParams":
        rng = np.random.default_rng(seed)
        blocks = []
        for k in range(depth):
            w_in = rng.standard_normal((hidden, dim)) / np.sqrt(dim)
            w_dw = rng.standard_normal((hidden, kernel)) / np.sqrt(kernel)
            w_out = rng.standard_normal((dim, hidden)) / np.sqrt(hidden) * 0.1
            if nonnegative:
                w_in, w_dw, w_out = np.abs(w_in), np.abs(w_dw), np.abs(w_out)
            blocks.append(
                TcnBlockParams(
                    w_in=w_in,
                    b_in=np.zeros(hidden),
                    w_dw=w_dw,
                    b_dw=np.zeros(hidden),
                    w_out=w_out,
                    b_out=np.zeros(dim),
                    dilation=2**k,
                )
            )
        return cls(tuple(blocks))

    @classmethod
    def zeros(cls, depth: int = 8, dim: int = 256, hidden: int = 512, kernel: int = 3) -> "TcnParams":
        blocks = [
            TcnBlockParams(
                w_in=np.zeros((hidden, dim)),
                b_in=np.zeros(hidden),
                w_dw=np.zeros((hidden, kernel)),
                b_dw=np.zeros(hidden),
                w_out=np.zeros((dim, hidden)),
                b_out=np.zeros(dim),
                dilation=2**k,
            )
            for k in range(depth)
        ]
        return cls(tuple(blocks))


def _depthwise_dilated(hidden: np.ndarray, kernel: np.ndarray, dilation: int) -> np.ndarray:
    """Per-channel dilated convolution over time with symmetric zero padding."""
    num_frames, width = hidden.shape
    taps = kernel.shape[1]
    half = taps // 2
    pad = half * dilation
    padded = np.zeros((num_frames + 2 * pad, width))
    padded[pad : pad + num_frames] = hidden
    out = np.zeros_like(hidden)
    for tap in range(taps):
        offset = (tap - half) * dilation
        out += kernel[:, tap][None, :] * padded[pad + offset : pad + offset + num_frames]
    return out


def tcn_forward(inputs: np.ndarray, params: TcnParams) -> np.ndarray:
    """Forward pass through the dilated residual blocks, shape [frames, dim] preserved."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise ValueError("input width does not match block dimension")
    if x.shape[0] < 1:
        raise ValueError("at least one frame required")
    for block in params.blocks:
        h = np.maximum(x @ block.w_in.T + block.b_in, 0.0)
        h = _depthwise_dilated(h, block.w_dw, block.dilation) + block.b_dw
        h = np.maximum(h, 0.0)
        x = x + h @ block.w_out.T + block.b_out
    return x


def receptive_field(params: TcnParams) -> int:
    """Frames of context influencing one output frame: 1 + (kernel-1) * sum(dilations)."""
    kernel = params.blocks[0].kernel_width
    return 1 + (kernel - 1) * sum(block.dilation for block in params.blocks)


# --- parameter and embedding files ----------------------------------------


@dataclass
class FrontendParams:
    """Forward-only front-end parameters: input projection, gate network, conv stack."""

    gate: FusionGateParams
    tcn: TcnParams
    projection: np.ndarray | None = None  # [dim, input_features]

    @classmethod
    def seeded(
        cls, seed: int, input_features: int, fusion: str = "none", embed_dim: int = 256
    ) -> "FrontendParams":
        tcn_dim = 256 + embed_dim if fusion == "input_bias" else 256
        return cls(
            gate=FusionGateParams.random(seed + 1, embed_dim),
            tcn=TcnParams.random(seed + 2, dim=tcn_dim),
            projection=np.random.default_rng(seed)
            .standard_normal((256, input_features)) / np.sqrt(input_features),
        )


def save_frontend_params(path, params: FrontendParams) -> None:
    arrays = {
        "gate.w1": params.gate.w1,
        "gate.b1": params.gate.b1,
        "gate.w2": params.gate.w2,
        "gate.b2": params.gate.b2,
    }
    if params.projection is not None:
        arrays["proj.w"] = params.projection
    for k, block in enumerate(params.tcn.blocks):
        for name in ("w_in", "b_in", "w_dw", "b_dw", "w_out", "b_out"):
            arrays[f"tcn{k}.{name}"] = getattr(block, name)
    np.savez(path, **arrays)


def load_frontend_params(path) -> FrontendParams:
    data = np.load(path)
    gate = FusionGateParams(data["gate.w1"], data["gate.b1"], data["gate.w2"], data["gate.b2"])
    blocks = []
    k = 0
    while f"tcn{k}.w_in" in data:
        blocks.append(
            TcnBlockParams(
                w_in=data[f"tcn{k}.w_in"],
                b_in=data[f"tcn{k}.b_in"],
                w_dw=data[f"tcn{k}.w_dw"],
                b_dw=data[f"tcn{k}.b_dw"],
                w_out=data[f"tcn{k}.w_out"],
                b_out=data[f"tcn{k}.b_out"],
                dilation=2**k,
            )
        )
        k += 1
    projection = data["proj.w"] if "proj.w" in data else None
    return FrontendParams(gate=gate, tcn=TcnParams(tuple(blocks)), projection=projection)


def save_embedding(path, embedding: SpeakerEmbedding) -> None:
    arrayfile.save_array(
        path,
        embedding.vector.astype(np.float32),
        meta={
            "kind": "speaker_embedding",
            "dim": embedding.dim,
            "speaker_id": embedding.speaker_id,
            "provenance": embedding.provenance,
        },
    )


def load_embedding(path) -> SpeakerEmbedding:
    vector, meta = arrayfile.load_array(path)
    return SpeakerEmbedding(
        vector.astype(np.float64),
        provenance=meta.get("provenance", "external"),
        speaker_id=meta.get("speaker_id", ""),
    )
