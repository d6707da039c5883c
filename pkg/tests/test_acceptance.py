"""Acceptance suite: one test per release criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
"""

import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from arraysep import synth
from arraysep.adaptation import (
    FusionGateParams,
    SpeakerEmbedding,
    TcnParams,
    fuse_activation_scaling,
    fusion_gate,
    receptive_field,
    tcn_forward,
)
from arraysep.beamforming import PsdSet, mvdr_weights
from arraysep.metrics import (
    LossTerms,
    multitask_loss,
    si_snr,
    si_snr_grad,
    wer,
)
from arraysep.pipeline import (
    BeamformOptions,
    RunManifest,
    cmd_analyze,
    cmd_beamform,
    cmd_evaluate,
    cmd_simulate,
    config_from_dict,
)
from arraysep.roomsim import ArrayGeometry, estimate_t60, simulate_rir, simulate_rirs
from arraysep.signal_core import ComplexSpectrogram, MultichannelWaveform, StftConfig, record_wav_reads, stft
from arraysep.spatial import MicPairSet, angle_feature, ipd_angle

FS = 16000
THREADS = 4


@contextmanager
def criterion(number: int, description: str):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {number} ({description}): FAIL")
        raise
    elapsed = time.monotonic() - start
    print(f"[acceptance] criterion {number} ({description}): PASS ({elapsed:.1f}s)")


def test_criterion_1_mvdr_correctness():
    with criterion(1, "MVDR distortionless + minimum variance"):
        start = time.monotonic()
        rng = np.random.default_rng(2024)
        pairs_per_size = 250
        num_trials = 10000
        for channels in (2, 3, 8, 15):
            # batch the 250 PSD pairs along the frequency axis
            d = rng.standard_normal((pairs_per_size, channels)) + 1j * rng.standard_normal(
                (pairs_per_size, channels)
            )
            phi_x = np.einsum("pi,pj->pij", d, d.conj())
            basis = rng.standard_normal(
                (pairs_per_size, channels, channels + 2)
            ) + 1j * rng.standard_normal((pairs_per_size, channels, channels + 2))
            phi_n = basis @ basis.conj().transpose(0, 2, 1) / (channels + 2)
            phi_n += 0.1 * np.eye(channels)
            filt = mvdr_weights(PsdSet(phi_x, phi_n), reference_index=0)
            weights = filt.weights

            response = np.einsum("pi,pi->p", weights.conj(), d)
            assert np.abs(response / d[:, 0] - 1.0).max() <= 1e-8

            w_noise = np.einsum("pi,pij,pj->p", weights.conj(), phi_n, weights).real
            w_response = np.einsum("pi,pij,pj->p", weights.conj(), phi_x, weights).real
            trials = rng.standard_normal((num_trials, channels)) + 1j * rng.standard_normal(
                (num_trials, channels)
            )
            trial_response = np.abs(np.einsum("vi,pi->pv", trials.conj(), d)) ** 2
            trial_noise = np.einsum("vi,pij,vj->pv", trials.conj(), phi_n, trials).real
            equalized = trial_noise * (w_response[:, None] / trial_response)
            assert np.all(w_noise <= equalized.min(axis=1) * (1.0 + 1e-9))
        assert time.monotonic() - start < 30.0


def test_criterion_2_end_to_end_oracle_separation(tmp_path):
    with criterion(2, "oracle IRM-MVDR separation gain >= 5 dB over 50 utterances"):
        start = time.monotonic()
        config = config_from_dict(
            {
                "seed": 1002,
                "num_utterances": 50,
                "duration_s": 2.5,
                "simulation": {"t60_range": [0.14, 0.92], "sir_choices": [-6, 0, 6]},
            }
        )
        manifest = cmd_simulate(config, tmp_path / "sim", threads=THREADS)
        enhanced = cmd_beamform(
            manifest, tmp_path / "enh", BeamformOptions(mask="irm"), threads=THREADS
        )
        report = cmd_evaluate(enhanced, ("sisnr",), threads=THREADS)
        gains = [r.sisnr_db - r.sisnr_input_db for r in report.records]
        assert len(gains) == 50
        mean_gain = float(np.mean(gains))
        mean_input = float(np.mean([r.sisnr_input_db for r in report.records]))
        mean_output = float(np.mean([r.sisnr_db for r in report.records]))
        # the raw first channel sits near 0 dB; the separated output far above it
        assert abs(mean_input) < 3.0
        assert mean_output > mean_input
        assert mean_gain >= 5.0
        assert time.monotonic() - start < 300.0


def test_criterion_3_simulation_fidelity():
    with criterion(3, "T60 round trip within 20% + far-field TDOA within 1 sample"):
        room = (6.0, 5.0, 3.5)
        source = (2.0, 1.5, 1.7)
        mic = (4.2, 3.3, 1.6)
        for t60 in (0.14, 0.3, 0.5, 0.92):
            estimate = estimate_t60(simulate_rir(room, source, mic, t60, FS))
            assert abs(estimate - t60) <= 0.2 * t60, (t60, estimate)

        geometry = ArrayGeometry.default()
        center = np.array([5.0, 5.0, 1.5])
        theta = np.radians(60.0)
        source_pos = center + 4.0 * np.array([np.cos(theta), np.sin(theta), 0.0])
        rirs = simulate_rirs(
            (10.0, 10.0, 6.0), source_pos, center + geometry.mic_positions, 0.0, FS
        )

        def peak(taps):
            i = int(np.argmax(np.abs(taps)))
            y0, y1, y2 = taps[i - 1], taps[i], taps[i + 1]
            return i + 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)

        coords = geometry.axis_coordinates()
        base = peak(rirs[0].taps)
        for m in range(1, geometry.num_mics):
            measured = peak(rirs[m].taps) - base
            expected = -(coords[m] - coords[0]) * np.cos(theta) / 343.0 * FS
            assert abs(measured - expected) <= 1.0


def test_criterion_4_feature_analytics():
    with criterion(4, "IPD shift theorem to 1e-6 rad + DOA scan within one 5-degree step"):
        cfg = StftConfig()
        rng = np.random.default_rng(4)
        k = np.arange(cfg.num_bins)
        for delay in (1, 4, 9):
            base = np.fft.rfft(rng.standard_normal(cfg.fft_size))
            delayed = base * np.exp(-2j * np.pi * k * delay / cfg.fft_size)
            spec = ComplexSpectrogram(np.stack([base, delayed])[:, None, :], cfg)
            measured = ipd_angle(spec, MicPairSet(((0, 1),)))[0, 0]
            expected = np.angle(np.exp(2j * np.pi * k * delay / cfg.fft_size))
            circle_error = np.angle(np.exp(1j * (measured - expected)))
            assert np.abs(circle_error).max() <= 1e-6

        geometry = ArrayGeometry.default()
        center = np.array([5.0, 5.0, 1.5])
        pairs = MicPairSet.default()
        grid = np.arange(0.0, 181.0, 5.0)
        for truth in (20.0, 60.0, 120.0):
            theta = np.radians(truth)
            source = center + 4.0 * np.array([np.cos(theta), np.sin(theta), 0.0])
            rirs = simulate_rirs(
                (10.0, 10.0, 6.0), source, center + geometry.mic_positions, 0.0, FS
            )
            taps = np.stack([r.taps for r in rirs])
            from scipy.signal import fftconvolve

            dry = np.random.default_rng(int(truth)).standard_normal(2 * FS)
            wave = MultichannelWaveform(fftconvolve(dry[None, :], taps, axes=1), FS)
            spec = stft(wave)
            power = np.abs(spec.values[0]) ** 2
            energetic = power >= np.quantile(power, 0.9)
            scores = [angle_feature(spec, geometry, g, pairs)[energetic].mean() for g in grid]
            best = grid[int(np.argmax(scores))]
            assert abs(best - truth) <= 5.0, (truth, best)


def _all_sequences(vocab, max_len):
    from itertools import product

    for length in range(max_len + 1):
        yield from product(vocab, repeat=length)


def _batched_edit_costs(refs, hyps, vocab_size=3, max_len=6):
    """Vectorized minimum-edit-cost oracle over every (ref, hyp) pair at once."""
    num_r, num_h = len(refs), len(hyps)
    tokens_r = np.zeros((num_r, max_len), dtype=np.int8)
    len_r = np.zeros(num_r, dtype=np.int8)
    for idx, seq in enumerate(refs):
        len_r[idx] = len(seq)
        tokens_r[idx, : len(seq)] = seq
    tokens_h = np.zeros((num_h, max_len), dtype=np.int8)
    len_h = np.zeros(num_h, dtype=np.int8)
    for idx, seq in enumerate(hyps):
        len_h[idx] = len(seq)
        tokens_h[idx, : len(seq)] = seq

    answers = np.zeros((num_r, num_h), dtype=np.int16)
    prev = [np.full((num_r, num_h), j, dtype=np.int16) for j in range(max_len + 1)]
    for j in range(max_len + 1):
        answers[len_r == 0] = prev[j][len_r == 0]
        if j < max_len:
            pass
    answers[:, :] = 0
    # row i = 0
    for j in range(max_len + 1):
        sel = len_r == 0
        if sel.any():
            cols = len_h == j
            if cols.any():
                answers[np.ix_(sel, cols)] = j
    for i in range(1, max_len + 1):
        current = [None] * (max_len + 1)
        current[0] = np.full((num_r, num_h), i, dtype=np.int16)
        for j in range(1, max_len + 1):
            mismatch = (tokens_r[:, i - 1][:, None] != tokens_h[None, :, j - 1]).astype(np.int16)
            current[j] = np.minimum(
                np.minimum(prev[j - 1] + mismatch, current[j - 1] + 1), prev[j] + 1
            )
        rows = len_r == i
        if rows.any():
            for j in range(max_len + 1):
                cols = len_h == j
                if cols.any():
                    answers[np.ix_(rows, cols)] = current[j][np.ix_(rows, cols)]
        prev = current
    return answers, len_r


def test_criterion_5_numerical_objectives():
    with criterion(5, "SI-SNR gradient/invariance + exhaustive WER check"):
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(100):
            est = rng.standard_normal(32)
            ref = rng.standard_normal(32)
            grad = si_snr_grad(est, ref)
            fd = np.zeros(32)
            h = 1e-5
            for idx in range(32):
                up, down = est.copy(), est.copy()
                up[idx] += h
                down[idx] -= h
                fd[idx] = (si_snr(up, ref) - si_snr(down, ref)) / (2 * h)
            worst = max(worst, np.abs(grad - fd).max() / np.abs(fd).max())
        assert worst <= 1e-4

        ref = rng.standard_normal(512)
        est = ref + 0.2 * rng.standard_normal(512)
        base = si_snr(est, ref)
        for c in (0.5, 2.0, 10.0):
            assert abs(si_snr(c * est, ref) - base) <= 1e-9

        vocab = (0, 1, 2)
        refs = [s for s in _all_sequences(vocab, 6) if len(s) >= 1]
        hyps = list(_all_sequences(vocab, 6))
        oracle, len_r = _batched_edit_costs(refs, hyps)
        words = ("a", "b", "c")
        for r_idx, ref_seq in enumerate(refs):
            ref_tokens = [words[t] for t in ref_seq]
            for h_idx, hyp_seq in enumerate(hyps):
                result = wer(ref_tokens, [words[t] for t in hyp_seq])
                total = result.substitutions + result.deletions + result.insertions
                assert total == oracle[r_idx, h_idx]
                assert result.wer == total / len(ref_seq)


def test_criterion_6_fusion_mechanics():
    with criterion(6, "gate 256->200->256, identity/annihilation, receptive field 511"):
        params = FusionGateParams.random(6)
        assert params.w1.shape == (200, 256)
        assert params.w2.shape == (256, 200)
        spk = SpeakerEmbedding(np.random.default_rng(6).standard_normal(256), "enrollment")
        gate = fusion_gate(spk, params)
        assert gate.shape == (256,)

        hidden = np.random.default_rng(7).standard_normal((40, 256))
        assert np.array_equal(fuse_activation_scaling(hidden, np.ones(256)), hidden)
        assert np.all(fuse_activation_scaling(hidden, np.zeros(256)) == 0.0)

        zero_tcn = TcnParams.zeros(dim=64, hidden=64)
        x = np.random.default_rng(8).standard_normal((30, 64))
        assert np.array_equal(tcn_forward(x, zero_tcn), x)

        probe_params = TcnParams.random(9, depth=8, dim=8, hidden=8, nonnegative=True)
        assert receptive_field(probe_params) == 511
        frames = 1100
        center = frames // 2
        base_in = np.abs(np.random.default_rng(9).standard_normal((frames, 8)))
        base_out = tcn_forward(base_in, probe_params)
        bumped = base_in.copy()
        bumped[center] += 1.0
        diff = np.abs(tcn_forward(bumped, probe_params) - base_out).sum(axis=1)
        changed = np.nonzero(diff > 0)[0]
        span = changed.max() - changed.min() + 1
        assert span == 511
        assert changed.min() == center - 255 and changed.max() == center + 255


def test_criterion_7_adaptation_mode_contract(tmp_path):
    with criterion(7, "audited zero-shot run + negative cosine/SI-SNR correlation"):
        config = config_from_dict(
            {
                "seed": 7,
                "num_utterances": 50,
                "duration_s": 2.5,
                "simulation": {
                    "t60_range": [0.14, 0.25],
                    "sir_choices": [0],
                    "snr_choices": [20],
                    "angle_bins": [[45, 90]],
                },
            }
        )
        manifest_path = cmd_simulate(config, tmp_path / "sim", threads=THREADS)

        # oracle pass: dump per-utterance masks standing in for a deployed estimator
        dumped = cmd_beamform(
            manifest_path,
            tmp_path / "dump",
            BeamformOptions(mask="irm", dump_masks=True),
            threads=THREADS,
        )
        dump_manifest = RunManifest.load(dumped)
        mask_dir = tmp_path / "masks"
        mask_dir.mkdir()
        for record in dump_manifest.records:
            source = dump_manifest.resolve(record["mask_path"])
            (mask_dir / f"{record['id']}.mask").write_bytes(Path(source).read_bytes())

        # audited enrollment-free pass: no clean-target audio may be opened
        sim_manifest = RunManifest.load(manifest_path)
        clean_target_paths = {
            str(sim_manifest.resolve(record[key]))
            for record in sim_manifest.records
            for key in ("enrollment_path", "target_path")
        }
        with record_wav_reads() as reads:
            audited = cmd_beamform(
                manifest_path,
                tmp_path / "audited",
                BeamformOptions(mask=f"external:{mask_dir}", adapt_mode="enroll-free"),
                threads=THREADS,
            )
        assert len(RunManifest.load(audited).records) == 50
        assert not clean_target_paths.intersection(reads)
        audited_manifest = RunManifest.load(audited)
        assert all(
            record["adaptation"]["provenance"] == "enrollment_free"
            for record in audited_manifest.records
        )

        # oracle enrollment-free run for the discrimination analysis
        enhanced = cmd_beamform(
            manifest_path,
            tmp_path / "enh",
            BeamformOptions(mask="irm", adapt_mode="enroll-free"),
            threads=THREADS,
        )
        report_path = tmp_path / "report.jsonl"
        cmd_evaluate(enhanced, ("sisnr",), out_path=report_path, threads=THREADS)
        summary = cmd_analyze(report_path, tmp_path / "analysis")
        assert summary["num_utterances"] == 50
        assert summary["pearson_cosine_sisnr"] < 0.0


def _run_pipeline(config, root, threads):
    manifest = cmd_simulate(config, root / "sim", threads=threads)
    enhanced = cmd_beamform(
        manifest, root / "enh", BeamformOptions(adapt_mode="enroll-free"), threads=threads
    )
    report_path = root / "report.jsonl"
    cmd_evaluate(enhanced, ("sisnr", "stoi"), out_path=report_path, threads=threads)
    cmd_analyze(report_path, root / "analysis")
    digest = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest[str(path.relative_to(root))] = path.read_bytes()
    return digest


def test_criterion_8_determinism(tmp_path):
    with criterion(8, "byte-identical pipeline across reruns and thread counts"):
        start = time.monotonic()
        config = config_from_dict(
            {
                "seed": 808,
                "num_utterances": 20,
                "duration_s": 2.0,
                "simulation": {"t60_range": [0.14, 0.3]},
            }
        )
        first = _run_pipeline(config, tmp_path / "run1", threads=1)
        second = _run_pipeline(config, tmp_path / "run2", threads=1)
        threaded = _run_pipeline(config, tmp_path / "run8", threads=8)
        assert first.keys() == second.keys() == threaded.keys()
        for name in first:
            assert first[name] == second[name], f"rerun differs: {name}"
            assert first[name] == threaded[name], f"thread count changed: {name}"
        assert time.monotonic() - start < 180.0


def test_criterion_9_loss_interpolation():
    with criterion(9, "loss interpolation value and endpoints"):
        assert multitask_loss(LossTerms(l_att=1.0, l_ctc=2.0, beta=0.3)) == 1.3
        assert multitask_loss(LossTerms(l_att=1.0, l_ctc=2.0, beta=0.0)) == 1.0
        assert multitask_loss(LossTerms(l_att=1.0, l_ctc=2.0, beta=1.0)) == 2.0
