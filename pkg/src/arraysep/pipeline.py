"""End-to-end orchestration: simulate, beamform, evaluate, analyze."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from . import arrayfile, synth
from .adaptation import (
    FrontendParams,
    StubEmbeddingConfig,
    cosine_similarity,
    embedding_for_mode,
    fuse_activation_scaling,
    fuse_input_bias,
    fusion_gate,
    load_embedding,
    load_frontend_params,
    save_embedding,
    speaker_embedding_stub,
    tcn_forward,
)
from .beamforming import MASK_KINDS, TFMask, separate_utterance
from .metrics import (
    MetricsReport,
    UtteranceMetrics,
    pearson_correlation,
    si_snr,
    stoi,
    tokenize,
    wer,
)
from .roomsim import (
    ArrayGeometry,
    RoomScenario,
    SimulationConfig,
    render_mixture,
    sample_scenario,
    simulate_rirs,
)
from .signal_core import (
    MultichannelWaveform,
    StftConfig,
    log_power_spectrum,
    read_wav,
    stft,
    write_wav,
)
from .spatial import MicPairSet, assemble_frontend_input, compute_spatial_features

logger = logging.getLogger(__name__)

ADAPT_MODES = ("none", "enroll", "enroll-free")
FUSION_KINDS = ("none", "input-bias", "act-scale")


class ConfigError(ValueError):
    """Invalid configuration; the CLI exits with status 2."""


class DataError(ValueError):
    """Missing or inconsistent data; the CLI exits with status 3."""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    sample_rate: int = 16000
    num_utterances: int = 8
    duration_s: float = 3.0
    fft_size: int = 512
    hop: int = 256
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    mask_kind: str = "irm"
    noise_mask: str = "complement"
    method: str = "mvdr"
    diag_loading: float = 1e-6
    adapt_mode: str = "none"
    fusion: str = "none"
    stub_seed: int = 1234
    params_seed: int = 77
    metrics: tuple[str, ...] = ("sisnr", "stoi")

    def __post_init__(self):
        if self.num_utterances < 1:
            raise ConfigError("num_utterances must be positive")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.mask_kind not in MASK_KINDS:
            raise ConfigError(f"unknown mask kind: {self.mask_kind!r}")
        if self.noise_mask not in ("complement", "oracle"):
            raise ConfigError(f"unknown noise mask mode: {self.noise_mask!r}")
        if self.method not in ("mvdr", "masking"):
            raise ConfigError(f"unknown method: {self.method!r}")
        if self.adapt_mode not in ADAPT_MODES:
            raise ConfigError(f"unknown adaptation mode: {self.adapt_mode!r}")
        if self.fusion not in FUSION_KINDS:
            raise ConfigError(f"unknown fusion kind: {self.fusion!r}")
        if self.fusion != "none" and self.adapt_mode == "none":
            raise ConfigError("fusion requires an adaptation mode")
        for metric in self.metrics:
            if metric not in ("sisnr", "stoi", "wer"):
                raise ConfigError(f"unknown metric: {metric!r}")
        try:
            StftConfig(self.fft_size, self.hop, sample_rate=self.sample_rate)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def stft_config(self) -> StftConfig:
        return StftConfig(self.fft_size, self.hop, sample_rate=self.sample_rate)


_TOP_LEVEL_KEYS = {
    "seed",
    "sample_rate",
    "num_utterances",
    "duration_s",
    "fft_size",
    "hop",
    "simulation",
    "separation",
    "adaptation",
    "metrics",
}


def load_config(path) -> PipelineConfig:
    """Parse and validate a JSON pipeline configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> PipelineConfig:
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key in ("seed", "sample_rate", "num_utterances", "fft_size", "hop"):
        if key in raw:
            kwargs[key] = int(raw[key])
    if "duration_s" in raw:
        kwargs["duration_s"] = float(raw["duration_s"])
    if "metrics" in raw:
        kwargs["metrics"] = tuple(raw["metrics"])
    sim_raw = dict(raw.get("simulation", {}))
    try:
        sim_kwargs = {}
        for key, value in sim_raw.items():
            if key in ("room_min", "room_max"):
                sim_kwargs[key] = tuple(float(v) for v in value)
            elif key in ("t60_range", "distance_range"):
                sim_kwargs[key] = (float(value[0]), float(value[1]))
            elif key in ("snr_choices", "sir_choices"):
                sim_kwargs[key] = tuple(float(v) for v in value)
            elif key == "angle_bins":
                sim_kwargs[key] = tuple((float(lo), float(hi)) for lo, hi in value)
            elif key in ("overlap_ratio", "wall_margin"):
                sim_kwargs[key] = float(value)
            else:
                raise ConfigError(f"unknown simulation key: {key!r}")
        kwargs["simulation"] = SimulationConfig(**sim_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid simulation config: {exc}") from exc
    sep = dict(raw.get("separation", {}))
    if sep:
        kwargs["mask_kind"] = sep.pop("mask", "irm")
        kwargs["noise_mask"] = sep.pop("noise_mask", "complement")
        kwargs["method"] = sep.pop("method", "mvdr")
        kwargs["diag_loading"] = float(sep.pop("diag_loading", 1e-6))
        if sep:
            raise ConfigError(f"unknown separation keys: {sorted(sep)}")
    adapt = dict(raw.get("adaptation", {}))
    if adapt:
        kwargs["adapt_mode"] = adapt.pop("mode", "none")
        kwargs["fusion"] = adapt.pop("fusion", "none")
        kwargs["stub_seed"] = int(adapt.pop("stub_seed", 1234))
        kwargs["params_seed"] = int(adapt.pop("params_seed", 77))
        if adapt:
            raise ConfigError(f"unknown adaptation keys: {sorted(adapt)}")
    try:
        return PipelineConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class RunManifest:
    """Line-delimited utterance records; stored paths are relative to the manifest."""

    records: list[dict]
    base_dir: Path

    def resolve(self, relative: str) -> Path:
        return (self.base_dir / relative).resolve()

    def validate(self) -> None:
        ids = [r["id"] for r in self.records]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate utterance ids in manifest")
        for record in self.records:
            for key, value in record.items():
                if key.endswith("_path") and not self.resolve(value).exists():
                    raise DataError(f"missing file for {record['id']}: {value}")

    def save(self, path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record, sort_keys=True))
                fh.write("\n")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if not path.exists():
            raise DataError(f"manifest not found: {path}")
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return cls(records, path.parent.resolve())


def _utterance_seed(base_seed: int, index: int, purpose: int = 0) -> int:
    return int(np.random.SeedSequence((base_seed, index, purpose)).generate_state(1)[0])


def _run_parallel(tasks, threads: int):
    """Run callables and return results in submission order."""
    if threads <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


# --- simulate ---------------------------------------------------------------


def _simulate_one(config: PipelineConfig, index: int, out_dir: Path) -> dict:
    utt_id = f"utt{index:05d}"
    scenario = sample_scenario(config.simulation, _utterance_seed(config.seed, index))
    rng = np.random.default_rng(_utterance_seed(config.seed, index, 1))
    target_speaker = f"spk{rng.integers(10**8):08d}"
    interferer_speaker = f"spk{rng.integers(10**8):08d}"
    while interferer_speaker == target_speaker:
        interferer_speaker = f"spk{rng.integers(10**8):08d}"

    fs = config.sample_rate
    duration = config.duration_s
    dry_target = synth.speech_like(target_speaker, duration, fs, _utterance_seed(config.seed, index, 2))
    dry_interferer = synth.speech_like(
        interferer_speaker, duration, fs, _utterance_seed(config.seed, index, 3)
    )
    dry_noise = synth.white_noise(2.0 * duration + 1.0, fs, _utterance_seed(config.seed, index, 4))
    dry_enrollment = synth.speech_like(
        target_speaker, duration, fs, _utterance_seed(config.seed, index, 5)
    )

    geometry = ArrayGeometry.default()
    rendered = render_mixture(scenario, geometry, dry_target, dry_interferer, dry_noise, fs)

    # parallel in-domain enrollment: a second clean utterance of the target
    # speaker recorded at the target position through the reference microphone
    reference_mic = np.asarray(scenario.array_center) + geometry.mic_positions[
        geometry.reference_index
    ]
    enrollment_rir = simulate_rirs(
        scenario.room_dims, scenario.target_pos, [reference_mic], scenario.t60, fs
    )[0]
    enrollment = fftconvolve(dry_enrollment, enrollment_rir.taps)

    utt_dir = out_dir / utt_id
    utt_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, wave in (
        ("mixture", rendered.mixture),
        ("target", rendered.target),
        ("interferer", rendered.interferer),
        ("noise", rendered.noise),
    ):
        write_wav(utt_dir / f"{name}.wav", wave)
        paths[f"{name}_path"] = f"{utt_id}/{name}.wav"
    write_wav(utt_dir / "enrollment.wav", MultichannelWaveform(enrollment[None, :], fs))
    paths["enrollment_path"] = f"{utt_id}/enrollment.wav"

    return {
        "id": utt_id,
        **paths,
        "target_speaker": target_speaker,
        "interferer_speaker": interferer_speaker,
        "scenario": scenario.to_dict(),
        "angle_bin": config.simulation.angle_bin_label(scenario.angle_difference),
    }


def cmd_simulate(config: PipelineConfig, out_dir, threads: int = 1) -> Path:
    """Render the configured number of utterances and write manifest.jsonl."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (lambda i=i: _simulate_one(config, i, out_dir)) for i in range(config.num_utterances)
    ]
    records = _run_parallel(tasks, threads)
    manifest = RunManifest(records, out_dir.resolve())
    logger.info("simulated %d utterances into %s", len(records), out_dir)
    return manifest.save(out_dir / "manifest.jsonl")


# --- beamform ---------------------------------------------------------------


@dataclass(frozen=True)
class BeamformOptions:
    mask: str = "irm"  # irm | ibm | cirm | external:<dir>
    noise_mask: str = "complement"
    method: str = "mvdr"
    diag_loading: float = 1e-6
    adapt_mode: str = "none"
    fusion: str = "none"
    embedding_dir: str | None = None
    params_path: str | None = None
    stub_seed: int = 1234
    params_seed: int = 77
    dump_masks: bool = False
    dump_activations: bool = False

    def __post_init__(self):
        kind = self.mask.split(":", 1)[0]
        if kind != "external" and kind not in MASK_KINDS:
            raise ConfigError(f"unknown mask source: {self.mask!r}")
        if kind == "external" and ":" not in self.mask:
            raise ConfigError("external mask source needs a directory: external:<dir>")
        if self.adapt_mode not in ADAPT_MODES:
            raise ConfigError(f"unknown adaptation mode: {self.adapt_mode!r}")
        if self.fusion not in FUSION_KINDS:
            raise ConfigError(f"unknown fusion kind: {self.fusion!r}")
        if self.fusion != "none" and self.adapt_mode == "none":
            raise ConfigError("fusion requires an adaptation mode")


def _load_components(manifest: RunManifest, record: dict):
    target = read_wav(manifest.resolve(record["target_path"]))
    interferer = read_wav(manifest.resolve(record["interferer_path"]))
    noise = read_wav(manifest.resolve(record["noise_path"]))
    return target, interferer, noise


def _beamform_one(
    manifest: RunManifest,
    record: dict,
    out_dir: Path,
    options: BeamformOptions,
    stft_config: StftConfig | None,
) -> dict:
    utt_id = record["id"]
    utt_dir = out_dir / utt_id
    utt_dir.mkdir(parents=True, exist_ok=True)
    mixture = read_wav(manifest.resolve(record["mixture_path"]))
    cfg = stft_config if stft_config is not None else StftConfig(sample_rate=mixture.sample_rate)
    scenario = RoomScenario.from_dict(record["scenario"])

    kwargs = dict(
        noise_mask=options.noise_mask,
        method=options.method,
        stft_config=cfg,
        diagonal_loading=options.diag_loading,
        return_details=True,
    )
    if options.mask.startswith("external:"):
        mask_dir = Path(options.mask.split(":", 1)[1])
        mask_path = mask_dir / f"{utt_id}.mask"
        if not mask_path.exists():
            raise DataError(f"missing external mask for {utt_id}: {mask_path}")
        values, meta = arrayfile.load_array(mask_path)
        external = TFMask(values, meta.get("mask_kind", "irm"))
        enhanced, details = separate_utterance(mixture, external_mask=external, **kwargs)
    else:
        target, interferer, noise = _load_components(manifest, record)
        enhanced, details = separate_utterance(
            mixture, target, interferer, noise, mask_kind=options.mask, **kwargs
        )

    out_record = dict(record)
    # re-anchor inherited paths onto the new manifest directory
    for key in list(out_record):
        if key.endswith("_path"):
            out_record[key] = os.path.relpath(manifest.resolve(out_record[key]), out_dir)
    write_wav(utt_dir / "enhanced.wav", enhanced)
    out_record["enhanced_path"] = f"{utt_id}/enhanced.wav"

    if options.dump_masks:
        values = details.target_mask.values
        dtype = np.complex64 if np.iscomplexobj(values) else np.float32
        arrayfile.save_array(
            utt_dir / "target.mask",
            values.astype(dtype),
            meta={"kind": "tf_mask", "mask_kind": details.target_mask.kind},
        )
        out_record["mask_path"] = f"{utt_id}/target.mask"

    if options.adapt_mode != "none":
        components_available = not options.mask.startswith("external:")
        out_record["adaptation"] = _adapt_one(
            manifest,
            record,
            utt_dir,
            options,
            enhanced,
            mixture,
            cfg,
            scenario,
            components_available,
        )
    return out_record


def _adapt_one(
    manifest: RunManifest,
    record: dict,
    utt_dir: Path,
    options: BeamformOptions,
    enhanced: MultichannelWaveform,
    mixture: MultichannelWaveform,
    cfg: StftConfig,
    scenario: RoomScenario,
    components_available: bool,
) -> dict:
    utt_id = record["id"]
    stub_cfg = StubEmbeddingConfig(seed=options.stub_seed)
    if options.embedding_dir is not None:
        emb_path = Path(options.embedding_dir) / f"{utt_id}.emb"
        if not emb_path.exists():
            raise DataError(f"missing external embedding for {utt_id}: {emb_path}")
        target_emb = load_embedding(emb_path)
    elif options.adapt_mode == "enroll":
        if "enrollment_path" not in record:
            raise DataError(f"enrollment mode requires enrollment audio for {utt_id}")
        enrollment = read_wav(manifest.resolve(record["enrollment_path"]))
        target_emb = embedding_for_mode(
            "enrollment",
            enrollment=enrollment.channel_waveform(0),
            config=stub_cfg,
            speaker_id=record.get("target_speaker", ""),
        )
    else:
        # the enhanced output already is the speaker-independent pass; the mask
        # source does not depend on the speaker embedding
        target_emb = embedding_for_mode(
            "enrollment_free",
            mixture=mixture,
            si_separator=lambda _mix: enhanced,
            config=stub_cfg,
            speaker_id=record.get("target_speaker", ""),
        )

    save_embedding(utt_dir / "target.emb", target_emb)
    adaptation = {
        "mode": options.adapt_mode,
        "provenance": target_emb.provenance,
        "embedding_path": f"{utt_id}/target.emb",
    }

    if components_available:
        # inter-speaker discrimination diagnostic: speaker features extracted
        # from the target and interfering speakers' own speech
        target_ref = read_wav(manifest.resolve(record["target_path"]))
        interferer = read_wav(manifest.resolve(record["interferer_path"]))
        target_speech_emb = speaker_embedding_stub(
            target_ref.channel_waveform(0),
            stub_cfg,
            speaker_id=record.get("target_speaker", ""),
            provenance="enrollment",
        )
        interferer_emb = speaker_embedding_stub(
            interferer.channel_waveform(0),
            stub_cfg,
            speaker_id=record.get("interferer_speaker", ""),
            provenance="enrollment",
        )
        save_embedding(utt_dir / "interferer.emb", interferer_emb)
        adaptation["interferer_embedding_path"] = f"{utt_id}/interferer.emb"
        adaptation["cosine_similarity"] = cosine_similarity(target_speech_emb, interferer_emb)

    if options.fusion != "none":
        spec = stft(mixture, cfg)
        pairs = MicPairSet.default()
        geometry = ArrayGeometry.default()
        lps = log_power_spectrum(spec, geometry.reference_index)
        spatial = compute_spatial_features(spec, geometry, scenario.target_angle, pairs)
        features = assemble_frontend_input(lps, spatial.ipd_cos, spatial.ipd_sin, spatial.af)
        fusion_key = "input_bias" if options.fusion == "input-bias" else "act_scale"
        if options.params_path is not None:
            params = load_frontend_params(options.params_path)
        else:
            params = FrontendParams.seeded(
                options.params_seed, features.shape[1], fusion_key, target_emb.dim
            )
        if params.projection is None or params.projection.shape[1] != features.shape[1]:
            raise DataError("front-end parameters do not match the feature width")
        audio_emb = features @ params.projection.T
        if options.fusion == "input-bias":
            fused = tcn_forward(fuse_input_bias(audio_emb, target_emb), params.tcn)
        else:
            gate = fusion_gate(target_emb, params.gate)
            fused = fuse_activation_scaling(tcn_forward(audio_emb, params.tcn), gate)
            arrayfile.save_array(
                utt_dir / "gate.vec", gate.astype(np.float32), meta={"kind": "fusion_gate"}
            )
            adaptation["gate_path"] = f"{utt_id}/gate.vec"
        if options.dump_activations:
            arrayfile.save_array(
                utt_dir / "fused.act",
                fused.astype(np.float32),
                meta={"kind": "fused_activations", "fusion": options.fusion},
            )
            adaptation["fused_path"] = f"{utt_id}/fused.act"
    return adaptation


def cmd_beamform(
    manifest_path,
    out_dir,
    options: BeamformOptions,
    stft_config: StftConfig | None = None,
    threads: int = 1,
) -> Path:
    """Separate every manifest utterance and write an enhanced manifest."""
    manifest = RunManifest.load(manifest_path)
    manifest.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (lambda r=r: _beamform_one(manifest, r, out_dir, options, stft_config))
        for r in manifest.records
    ]
    records = _run_parallel(tasks, threads)
    logger.info("beamformed %d utterances into %s", len(records), out_dir)
    return RunManifest(records, out_dir.resolve()).save(out_dir / "enhanced.jsonl")


# --- evaluate ---------------------------------------------------------------


def _read_transcripts(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(maxsplit=1)
            out[parts[0]] = parts[1] if len(parts) > 1 else ""
    return out


def _evaluate_one(
    manifest: RunManifest,
    record: dict,
    metric_names: tuple[str, ...],
    refs: dict[str, str] | None,
    hyps: dict[str, str] | None,
) -> UtteranceMetrics:
    utt_id = record["id"]
    if "enhanced_path" not in record:
        raise DataError(f"no enhanced audio for {utt_id}; run beamform first")
    result = UtteranceMetrics(id=utt_id, angle_bin=record.get("angle_bin", "unknown"))
    need_audio = "sisnr" in metric_names or "stoi" in metric_names
    if need_audio:
        enhanced = read_wav(manifest.resolve(record["enhanced_path"]))
        target = read_wav(manifest.resolve(record["target_path"]))
        reference = target.channel(0)
        estimate = enhanced.channel(0)
        n = min(len(reference), len(estimate))
        reference, estimate = reference[:n], estimate[:n]
        if "sisnr" in metric_names:
            result.sisnr_db = si_snr(estimate, reference)
            mixture = read_wav(manifest.resolve(record["mixture_path"]))
            result.sisnr_input_db = si_snr(mixture.channel(0)[:n], reference)
        if "stoi" in metric_names:
            result.stoi = stoi(estimate, reference, enhanced.sample_rate)
    if "wer" in metric_names:
        if refs is None or hyps is None:
            raise DataError("wer metric needs --ref and --hyp transcript files")
        if utt_id not in refs or utt_id not in hyps:
            raise DataError(f"missing transcript for {utt_id}")
        result.wer = wer(tokenize(refs[utt_id]), tokenize(hyps[utt_id])).wer
    adaptation = record.get("adaptation")
    if adaptation and "cosine_similarity" in adaptation:
        result.cosine_similarity = adaptation["cosine_similarity"]
    return result


def cmd_evaluate(
    manifest_path,
    metric_names=("sisnr", "stoi"),
    out_path=None,
    ref_transcripts=None,
    hyp_transcripts=None,
    threads: int = 1,
) -> MetricsReport:
    """Score enhanced audio against the target reference channel."""
    manifest = RunManifest.load(manifest_path)
    manifest.validate()
    metric_names = tuple(metric_names)
    for name in metric_names:
        if name not in ("sisnr", "stoi", "wer"):
            raise ConfigError(f"unknown metric: {name!r}")
    refs = _read_transcripts(ref_transcripts) if ref_transcripts else None
    hyps = _read_transcripts(hyp_transcripts) if hyp_transcripts else None
    tasks = [
        (lambda r=r: _evaluate_one(manifest, r, metric_names, refs, hyps))
        for r in manifest.records
    ]
    report = MetricsReport(_run_parallel(tasks, threads))
    if out_path is not None:
        report.save(out_path)
    return report


# --- analyze ----------------------------------------------------------------


def cmd_analyze(report_path, out_dir) -> dict:
    """Correlate per-utterance cosine similarity with SI-SNR (and WER when present)."""
    report_path = Path(report_path)
    if not report_path.exists():
        raise DataError(f"report not found: {report_path}")
    report = MetricsReport.load(report_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pairs_sisnr = [
        (r.cosine_similarity, r.sisnr_db)
        for r in report.records
        if r.cosine_similarity is not None and r.sisnr_db is not None
    ]
    if len(pairs_sisnr) < 2:
        raise DataError("report lacks cosine similarity for at least two utterances")
    summary = {"num_utterances": len(pairs_sisnr)}

    def write_pairs(name: str, pairs: list[tuple[float, float]], column: str) -> float:
        with open(out_dir / f"{name}.tsv", "w", encoding="utf-8") as fh:
            fh.write(f"cosine_similarity\t{column}\n")
            for cos, value in pairs:
                fh.write(f"{cos:.8f}\t{value:.8f}\n")
        return pearson_correlation([p[0] for p in pairs], [p[1] for p in pairs])

    summary["pearson_cosine_sisnr"] = write_pairs("cosine_sisnr", pairs_sisnr, "sisnr_db")
    summary["mean_cosine"] = float(np.mean([p[0] for p in pairs_sisnr]))
    summary["mean_sisnr_db"] = float(np.mean([p[1] for p in pairs_sisnr]))

    pairs_wer = [
        (r.cosine_similarity, r.wer)
        for r in report.records
        if r.cosine_similarity is not None and r.wer is not None
    ]
    if len(pairs_wer) >= 2:
        summary["pearson_cosine_wer"] = write_pairs("cosine_wer", pairs_wer, "wer")
        summary["mean_wer"] = float(np.mean([p[1] for p in pairs_wer]))

    with open(out_dir / "summary.tsv", "w", encoding="utf-8") as fh:
        for key in sorted(summary):
            fh.write(f"{key}\t{summary[key]}\n")
    return summary
