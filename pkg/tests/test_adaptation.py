import numpy as np
import pytest

from arraysep import synth
from arraysep.adaptation import (
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
    load_embedding,
    load_frontend_params,
    receptive_field,
    save_embedding,
    save_frontend_params,
    speaker_embedding_stub,
    tcn_forward,
)
from arraysep.signal_core import MultichannelWaveform

FS = 16000


def _wave(speaker, duration=1.5, seed=0):
    return MultichannelWaveform(synth.speech_like(speaker, duration, FS, seed)[None, :], FS)


class TestSpeakerEmbeddingStub:
    def test_unit_norm(self):
        emb = speaker_embedding_stub(_wave("norm", seed=1))
        assert abs(np.linalg.norm(emb.vector) - 1.0) < 1e-9
        assert emb.dim == 256

    def test_deterministic(self):
        a = speaker_embedding_stub(_wave("det", seed=2))
        b = speaker_embedding_stub(_wave("det", seed=2))
        assert np.array_equal(a.vector, b.vector)

    def test_too_short_raises(self):
        with pytest.raises(ValueError, match="input too short"):
            speaker_embedding_stub(_wave("short", duration=0.3, seed=3))

    def test_same_speaker_segments_closer_than_cross_speaker(self):
        rng = np.random.default_rng(123)
        wins = 0
        for trial in range(100):
            same_a = _wave(f"a{trial}", seed=int(rng.integers(1 << 31)))
            same_b = _wave(f"a{trial}", seed=int(rng.integers(1 << 31)))
            other = _wave(f"b{trial}", seed=int(rng.integers(1 << 31)))
            e1 = speaker_embedding_stub(same_a)
            e2 = speaker_embedding_stub(same_b)
            eo = speaker_embedding_stub(other)
            if cosine_similarity(e1, e2) > cosine_similarity(e1, eo):
                wins += 1
        assert wins >= 90


class TestEmbeddingForMode:
    def test_enrollment_equals_stub_of_enrollment_audio(self):
        clean = _wave("enroll", seed=4)
        emb = embedding_for_mode("enrollment", enrollment=clean)
        direct = speaker_embedding_stub(clean)
        assert np.array_equal(emb.vector, direct.vector)
        assert emb.provenance == "enrollment"

    def test_enrollment_requires_audio(self):
        with pytest.raises(ValueError, match="requires enrollment audio"):
            embedding_for_mode("enrollment")

    def test_enrollment_free_never_touches_clean_audio(self):
        from arraysep.signal_core import record_wav_reads

        mixture = _wave("mix", seed=5)
        si_output = _wave("mix", seed=6)
        with record_wav_reads() as seen:
            emb = embedding_for_mode(
                "enrollment_free", mixture=mixture, si_separator=lambda m: si_output
            )
        assert emb.provenance == "enrollment_free"
        assert seen == []


class TestCosineSimilarity:
    def _emb(self, vector):
        return SpeakerEmbedding(np.asarray(vector, dtype=float), "external")

    def test_reference_values(self):
        v = np.zeros(256)
        v[0] = 1.0
        w = np.zeros(256)
        w[1] = 1.0
        assert cosine_similarity(self._emb(v), self._emb(v)) == pytest.approx(1.0)
        assert cosine_similarity(self._emb(v), self._emb(w)) == pytest.approx(0.0)
        assert cosine_similarity(self._emb(v), self._emb(-v)) == pytest.approx(-1.0)

    def test_scale_invariance_and_symmetry(self):
        rng = np.random.default_rng(7)
        a = self._emb(rng.standard_normal(256))
        b = self._emb(rng.standard_normal(256))
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a))
        scaled = self._emb(5.0 * a.vector)
        assert cosine_similarity(scaled, b) == pytest.approx(cosine_similarity(a, b))
        assert -1.0 <= cosine_similarity(a, b) <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimensions differ"):
            cosine_similarity(self._emb(np.ones(256)), self._emb(np.ones(100)))

    def test_zero_vector_rejected_at_construction(self):
        with pytest.raises(ValueError, match="positive norm"):
            SpeakerEmbedding(np.zeros(256), "external")


class TestFuseInputBias:
    def test_shape_and_content(self):
        spk = SpeakerEmbedding(np.arange(1.0, 257.0), "enrollment")
        audio = np.random.default_rng(8).standard_normal((2, 3))
        out = fuse_input_bias(audio, spk)
        assert out.shape == (2, 3 + 256)
        assert np.array_equal(out[:, :3], audio)
        assert np.array_equal(out[0, 3:], spk.vector)
        assert np.array_equal(out[1, 3:], spk.vector)

    def test_frame_permutation_equivariance(self):
        spk = SpeakerEmbedding(np.ones(256), "enrollment")
        audio = np.random.default_rng(9).standard_normal((5, 4))
        perm = [4, 2, 0, 1, 3]
        assert np.array_equal(fuse_input_bias(audio[perm], spk), fuse_input_bias(audio, spk)[perm])


class TestFusionGate:
    def test_all_zero_params_give_zero_gate(self):
        spk = SpeakerEmbedding(np.ones(256), "enrollment")
        assert np.array_equal(fusion_gate(spk, FusionGateParams.zeros()), np.zeros(256))

    def test_affine_path_through_bias(self):
        spk = SpeakerEmbedding(np.ones(256), "enrollment")
        params = FusionGateParams(
            w1=np.zeros((200, 256)),
            b1=np.zeros(200),
            w2=np.zeros((256, 200)),
            b2=np.full(256, 3.5),
        )
        assert np.array_equal(fusion_gate(spk, params), np.full(256, 3.5))

    def test_matches_independent_arithmetic(self):
        rng = np.random.default_rng(10)
        spk = SpeakerEmbedding(rng.standard_normal(256), "enrollment")
        params = FusionGateParams.random(3)
        gate = fusion_gate(spk, params)
        hidden = [max(0.0, float(row @ spk.vector) + b) for row, b in zip(params.w1, params.b1)]
        expected = [float(np.dot(row, hidden)) + b for row, b in zip(params.w2, params.b2)]
        assert np.allclose(gate, expected, atol=1e-6)

    def test_shapes_strictly_enforced(self):
        with pytest.raises(ValueError):
            FusionGateParams(
                w1=np.zeros((128, 256)), b1=np.zeros(128), w2=np.zeros((256, 128)), b2=np.zeros(256)
            )
        spk_small = SpeakerEmbedding(np.ones(100), "external")
        with pytest.raises(ValueError, match="does not match"):
            fusion_gate(spk_small, FusionGateParams.zeros(embed_dim=256))


class TestActivationScaling:
    def test_identity_zero_and_scaling(self):
        rng = np.random.default_rng(11)
        hidden = rng.standard_normal((7, 256))
        assert np.array_equal(fuse_activation_scaling(hidden, np.ones(256)), hidden)
        assert np.all(fuse_activation_scaling(hidden, np.zeros(256)) == 0)
        assert np.array_equal(fuse_activation_scaling(hidden, np.full(256, 2.0)), 2.0 * hidden)

    def test_composition_law(self):
        rng = np.random.default_rng(12)
        hidden = rng.standard_normal((4, 256))
        g1 = rng.standard_normal(256)
        g2 = rng.standard_normal(256)
        twice = fuse_activation_scaling(fuse_activation_scaling(hidden, g1), g2)
        once = fuse_activation_scaling(hidden, g1 * g2)
        assert np.allclose(twice, once)

    def test_width_mismatch(self):
        with pytest.raises(ValueError, match="width"):
            fuse_activation_scaling(np.zeros((3, 200)), np.zeros(256))


class TestTcn:
    def test_zero_weights_identity(self):
        params = TcnParams.zeros(dim=32, hidden=64)
        rng = np.random.default_rng(13)
        x = rng.standard_normal((20, 32))
        assert np.array_equal(tcn_forward(x, params), x)

    def test_zero_input_zero_biases_gives_zero(self):
        params = TcnParams.random(4, dim=32, hidden=64)
        out = tcn_forward(np.zeros((16, 32)), params)
        assert np.all(out == 0)

    def test_receptive_field_formula(self):
        assert receptive_field(TcnParams.random(0, depth=8, dim=16, hidden=16, kernel=3)) == 511
        assert receptive_field(TcnParams.random(0, depth=1, dim=16, hidden=16, kernel=3)) == 3
        assert receptive_field(TcnParams.random(0, depth=5, dim=16, hidden=16, kernel=1)) == 1

    def test_perturbation_confined_to_receptive_field(self):
        params = TcnParams.random(5, depth=8, dim=8, hidden=8, nonnegative=True)
        frames = 1100
        center = frames // 2
        rng = np.random.default_rng(14)
        x = np.abs(rng.standard_normal((frames, 8)))
        base = tcn_forward(x, params)
        bumped = x.copy()
        bumped[center] += 1.0
        diff = np.abs(tcn_forward(bumped, params) - base).sum(axis=1)
        changed = np.nonzero(diff > 0)[0]
        half = (receptive_field(params) - 1) // 2
        assert half == 255
        assert changed.min() == center - half
        assert changed.max() == center + half

    def test_dilation_ladder_enforced(self):
        params = TcnParams.random(1, depth=3, dim=8, hidden=8)
        blocks = list(params.blocks)
        blocks[2].dilation = 3
        with pytest.raises(ValueError, match="2\\^k"):
            TcnParams(tuple(blocks))


class TestParameterFiles:
    def test_frontend_params_round_trip(self, tmp_path):
        params = FrontendParams.seeded(9, input_features=123, fusion="act_scale")
        path = tmp_path / "params.npz"
        save_frontend_params(path, params)
        back = load_frontend_params(path)
        assert np.array_equal(back.gate.w1, params.gate.w1)
        assert np.array_equal(back.projection, params.projection)
        assert len(back.tcn.blocks) == len(params.tcn.blocks)
        assert np.array_equal(back.tcn.blocks[5].w_dw, params.tcn.blocks[5].w_dw)

    def test_embedding_file_round_trip(self, tmp_path):
        emb = speaker_embedding_stub(_wave("file", seed=15), speaker_id="spk7")
        path = tmp_path / "spk7.emb"
        save_embedding(path, emb)
        back = load_embedding(path)
        assert back.speaker_id == "spk7"
        assert back.provenance == "enrollment"
        assert np.allclose(back.vector, emb.vector, atol=1e-6)


class TestDeterminism:
    def test_full_adaptive_pass_bit_identical(self):
        mixture = _wave("adapt", seed=16)
        cfg = StubEmbeddingConfig()
        runs = []
        for _ in range(2):
            emb = embedding_for_mode(
                "enrollment_free", mixture=mixture, si_separator=lambda m: m, config=cfg
            )
            params = FrontendParams.seeded(31, input_features=64, fusion="act_scale")
            gate = fusion_gate(emb, params.gate)
            hidden = np.tile(emb.vector, (10, 1))
            runs.append(fuse_activation_scaling(tcn_forward(hidden, params.tcn), gate))
        assert np.array_equal(runs[0], runs[1])
