"""Multichannel overlapped-speech simulation, mask-based MVDR separation and evaluation."""

from .adaptation import (
    FrontendParams,
    FusionGateParams,
    SpeakerEmbedding,
    StubEmbeddingConfig,
    TcnParams,
    cosine_similarity,
    embedding_for_mode,
    fuse_activation_scaling,
    fuse_input_bias,
    fusion_gate,
    receptive_field,
    speaker_embedding_stub,
    tcn_forward,
)
from .beamforming import (
    BeamformerFilter,
    PsdSet,
    TFMask,
    apply_beamformer,
    estimate_psd,
    mvdr_weights,
    oracle_mask,
    separate_utterance,
)
from .metrics import (
    LossTerms,
    MetricsReport,
    UtteranceMetrics,
    WerBreakdown,
    multitask_loss,
    pearson_correlation,
    si_snr,
    si_snr_grad,
    stoi,
    wer,
)
from .roomsim import (
    ArrayGeometry,
    ImpulseResponse,
    RenderedUtterance,
    RoomScenario,
    SimulationConfig,
    estimate_t60,
    mix_at_levels,
    render_mixture,
    sample_scenario,
    simulate_rir,
    simulate_rirs,
)
from .signal_core import (
    ComplexSpectrogram,
    MultichannelWaveform,
    StftConfig,
    istft,
    log_mel,
    log_power_spectrum,
    mel_filterbank,
    read_wav,
    record_wav_reads,
    stft,
    write_wav,
)
from .spatial import (
    MicPairSet,
    SpatialFeatures,
    angle_feature,
    assemble_frontend_input,
    compute_spatial_features,
    ipd,
    ipd_angle,
    steering_phase,
)

__version__ = "0.1.0"
