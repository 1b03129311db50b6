"""Loss oracles: frozen scalar values, invariances, and the decomposition."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logicalign.losses import (
    LossWeights,
    combine,
    cosine_sim_matrix,
    forward_backward,
    loss_clip,
    loss_clip_rect,
    loss_logic,
    loss_mc,
    loss_total,
)
from logicalign.model import (
    Batch,
    EncoderDims,
    EncoderError,
    EncoderParams,
    Vocab,
    encode_images,
    encode_texts,
    init_params,
    temperature,
)

from helpers import random_batch, random_instance

# Frozen independently of the implementation: plain math on the definitions.
LN2 = 0.6931471805599453
CLIP_IDENTITY_2 = 0.31326168751822286      # ln(1 + e^-1)
LN4 = 1.3862943611198906
LN5 = 1.6094379124341003
MC_SPIKE = 0.743668380628679               # -ln(e / (e + 3))
LN_4_3 = 0.28768207245178085


class TestEncoders:
    def test_text_unit_norm_and_determinism(self):
        params = init_params(EncoderDims(vocab=50), seed=3)
        toks = [np.array([1, 4, 9]), np.array([2, 2, 7, 40])]
        t1 = encode_texts(params, toks)
        t2 = encode_texts(params, toks)
        assert np.array_equal(t1, t2)
        assert np.allclose(np.linalg.norm(t1, axis=1), 1.0, atol=1e-12)

    def test_text_order_free(self):
        # Bag of tokens: permuting a caption cannot move its embedding.
        params = init_params(EncoderDims(vocab=50), seed=3)
        a = encode_texts(params, [np.array([5, 9, 14, 2])])
        b = encode_texts(params, [np.array([2, 14, 9, 5])])
        assert np.allclose(a, b, atol=1e-15)

    def test_text_one_token_changes_output(self):
        params = init_params(EncoderDims(vocab=50), seed=3)
        a = encode_texts(params, [np.array([5, 9, 14])])
        b = encode_texts(params, [np.array([5, 9, 13])])
        assert not np.allclose(a, b)

    def test_text_empty_rejected(self):
        params = init_params(EncoderDims(vocab=50), seed=3)
        with pytest.raises(EncoderError):
            encode_texts(params, [np.array([], dtype=np.int64)])

    def test_image_unit_norm_both_arches(self):
        for hidden in (0, 12):
            params = init_params(EncoderDims(vocab=10, hidden=hidden), seed=5)
            X = np.random.default_rng(0).normal(size=(6, 128))
            v = encode_images(params, X)
            assert v.shape == (6, 64)
            assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)

    def test_image_dim_mismatch(self):
        params = init_params(EncoderDims(vocab=10), seed=5)
        with pytest.raises(Exception):
            encode_images(params, np.ones((3, 64)))

    def test_distinct_features_distinct_embeddings(self):
        params = init_params(EncoderDims(vocab=10), seed=5)
        X = np.eye(128)[:5]
        v = encode_images(params, X)
        gram = v @ v.T
        off = gram - np.diag(np.diag(gram))
        assert np.all(np.abs(off) < 1.0 - 1e-6)

    def test_temperature_clamp(self):
        params = init_params(EncoderDims(vocab=10), seed=5)
        assert temperature(params) == pytest.approx(0.07, abs=1e-12)
        params.log_temperature = np.array(20.0)
        assert temperature(params) == 100.0
        params.log_temperature = np.array(-20.0)
        assert temperature(params) == 0.01
        assert temperature(params, raw_cosine=True) == 1.0

    def test_vocab_round_trip_and_unknown(self):
        v = Vocab.build(["the cat sat", "a dog ran"])
        ids = v.encode("the dog flew")
        assert ids[0] != 0 and ids[1] != 0 and ids[2] == 0
        with pytest.raises(EncoderError):
            v.encode("1234 !!!")


class TestCosineMatrix:
    def test_orthonormal_identity(self):
        V = np.eye(4)
        assert np.allclose(cosine_sim_matrix(V, V), np.eye(4))

    def test_antipodal_diagonal(self):
        V = np.eye(3)
        S = cosine_sim_matrix(V, -V)
        assert np.allclose(np.diag(S), -1.0)

    def test_matches_double_loop(self):
        rng = np.random.default_rng(11)
        V = rng.normal(size=(3, 8))
        T = rng.normal(size=(5, 8))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        T /= np.linalg.norm(T, axis=1, keepdims=True)
        S = cosine_sim_matrix(V, T)
        for i in range(3):
            for j in range(5):
                assert abs(S[i, j] - float(V[i] @ T[j])) < 1e-12


class TestLossClip:
    def test_uniform_is_ln_n(self):
        for n in (2, 3, 7):
            S = np.full((n, n), 0.37)
            assert loss_clip(S, 0.5) == pytest.approx(math.log(n), abs=1e-9)
        assert loss_clip(np.zeros((2, 2)), 1.0) == pytest.approx(LN2, abs=1e-9)

    def test_identity_two_pairs(self):
        assert loss_clip(np.eye(2), 1.0) == pytest.approx(CLIP_IDENTITY_2, abs=1e-9)

    def test_sharp_temperature_limit(self):
        assert loss_clip(np.eye(4), 1e-4) == pytest.approx(0.0, abs=1e-12)

    def test_floor_temperature_no_overflow(self):
        S = np.random.default_rng(2).uniform(-1, 1, size=(8, 8))
        val = loss_clip(S, 0.01)
        assert math.isfinite(val)

    def test_shift_invariance(self):
        S = np.random.default_rng(3).normal(size=(5, 5))
        assert loss_clip(S, 0.3) == pytest.approx(loss_clip(S + 2.5, 0.3), abs=1e-9)

    def test_rejects_small_or_rectangular(self):
        with pytest.raises(EncoderError):
            loss_clip(np.ones((1, 1)), 1.0)
        with pytest.raises(EncoderError):
            loss_clip(np.ones((2, 3)), 1.0)

    def test_rect_uniform_is_ln_t(self):
        S = np.zeros((3, 12))
        assert loss_clip_rect(S, 1.0) == pytest.approx(math.log(12), abs=1e-9)


class TestLossMC:
    def test_equal_logits_ln4_ln5(self):
        v = np.array([1.0, 0.0])
        opts = np.tile(np.array([[0.6, 0.8]]), (4, 1))
        assert loss_mc(v, opts, 0, 0.9) == pytest.approx(LN4, abs=1e-9)
        opts5 = np.tile(np.array([[0.6, 0.8]]), (5, 1))
        assert loss_mc(v, opts5, 2, 0.9) == pytest.approx(LN5, abs=1e-9)

    def test_cosine_spike(self):
        v = np.array([1.0, 0.0])
        opts = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.0, 1.0]])
        assert loss_mc(v, opts, 0, 1.0) == pytest.approx(MC_SPIKE, abs=1e-9)

    def test_bad_pos_index(self):
        v = np.ones(2)
        opts = np.ones((3, 2))
        with pytest.raises(EncoderError):
            loss_mc(v, opts, 5, 1.0)

    @given(st.integers(0, 3), st.floats(0.05, 5.0))
    @settings(max_examples=30, deadline=None)
    def test_positive_and_shift_invariant(self, pos, tau):
        rng = np.random.default_rng(pos)
        cos = rng.uniform(-1, 1, size=4)
        opts = np.zeros((4, 4))
        opts[:, 0] = cos
        v = np.eye(4)[0]
        base = loss_mc(v, opts, pos, tau)
        assert base >= 0.0


class TestLossLogic:
    def test_zero_scores_ln2_any_labels(self):
        for y in (np.zeros(9), np.ones(9), (np.arange(9) % 2).astype(float)):
            assert loss_logic(np.zeros(9), y) == pytest.approx(LN2, abs=1e-9)

    def test_saturated_correct_is_tiny(self):
        y = np.zeros(9)
        y[3] = 1.0
        s = np.where(y > 0, 20.0, -20.0)
        assert loss_logic(s, y) < 1e-8

    def test_known_scalar_values(self):
        ln3 = math.log(3.0)
        assert loss_logic(np.array([ln3]), np.array([1.0])) == pytest.approx(
            LN_4_3, abs=1e-9)
        assert loss_logic(np.array([ln3]), np.array([0.0])) == pytest.approx(
            LN4, abs=1e-9)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(9)
        s = rng.normal(scale=3.0, size=9)
        y = (rng.random(9) < 0.5).astype(float)
        total = 0.0
        for j in range(9):
            p = 1.0 / (1.0 + math.exp(-s[j]))
            total += -(y[j] * math.log(p) + (1 - y[j]) * math.log(1 - p))
        assert loss_logic(s, y) == pytest.approx(total / 9.0, abs=1e-12)

    def test_extreme_scores_finite(self):
        s = np.array([800.0, -800.0, 0.0] * 3)
        y = np.zeros(9)
        assert math.isfinite(loss_logic(s, y))

    def test_shape_mismatch(self):
        with pytest.raises(EncoderError):
            loss_logic(np.zeros(9), np.zeros(8))


class TestTotalAndDecomposition:
    def make(self, seed=0):
        rng = np.random.default_rng(seed)
        dims = EncoderDims(vocab=30, text_embed=6, joint=8, image=16)
        params = init_params(dims, seed=seed)
        return params, random_batch(rng)

    def test_zero_weights_zero_total(self):
        params, batch = self.make()
        parts = loss_total(params, batch, LossWeights(0.0, 0.0, 0.0))
        assert parts.l_total == 0.0

    def test_single_weight_scales(self):
        params, batch = self.make()
        parts = loss_total(params, batch, LossWeights(4.0, 0.0, 0.0))
        assert parts.l_total == 4.0 * parts.l_clip

    def test_decomposition_bit_for_bit(self):
        for seed in range(5):
            params, batch = self.make(seed)
            w = LossWeights()
            parts = loss_total(params, batch, w)
            assert parts.l_total == w.alpha * parts.l_clip + \
                w.beta * parts.l_mc + w.gamma * parts.l_logic
            assert parts.l_total == combine(parts, w)

    def test_components_match_standalone_ops(self):
        # The fused forward must agree with the small public ops it bundles.
        params, batch = self.make(2)
        parts = loss_total(params, batch, LossWeights())
        tm = encode_texts(params, batch.all_tokens())
        v = encode_images(params, batch.images)
        tau = temperature(params)
        S = cosine_sim_matrix(v, tm[:batch.n])
        assert parts.l_clip == pytest.approx(loss_clip(S, tau), abs=1e-12)
        per_record = [loss_mc(v[i], tm[batch.option_rows(i)], 0, tau)
                      for i in range(batch.n)]
        assert parts.l_mc == pytest.approx(float(np.mean(per_record)), abs=1e-12)

    def test_medicine_width_batch(self):
        rng = np.random.default_rng(4)
        batch = random_batch(rng, n_neg=4)
        params, _ = self.make(4)
        parts = loss_total(params, batch, LossWeights())
        assert math.isfinite(parts.l_total)

    def test_tau_reported(self):
        params, batch = self.make(1)
        parts = loss_total(params, batch, LossWeights())
        assert parts.tau == pytest.approx(0.07, abs=1e-12)
        parts_raw = loss_total(params, batch, LossWeights(), raw_cosine=True)
        assert parts_raw.tau == 1.0

    def test_distractor_mode_widens(self):
        params, batch = self.make(3)
        plain = loss_total(params, batch, LossWeights())
        wide = loss_total(params, batch, LossWeights(),
                          negatives_as_distractors=True)
        assert wide.l_clip != plain.l_clip
        assert wide.l_mc == pytest.approx(plain.l_mc, abs=1e-12)

    def test_grad_norm_populated(self):
        params, batch = self.make(6)
        parts, grads = forward_backward(params, batch, LossWeights())
        assert parts.grad_norm is not None and parts.grad_norm > 0
        assert set(grads) == set(params.named_tensors())


class TestObjectiveSymmetries:
    @given(st.integers(0, 50))
    @settings(max_examples=25, deadline=None)
    def test_clip_transpose_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        S = rng.uniform(-1, 1, size=(n, n))
        tau = float(rng.uniform(0.05, 3.0))
        assert loss_clip(S, tau) == pytest.approx(loss_clip(S.T, tau), abs=1e-12)

    @given(st.integers(0, 50))
    @settings(max_examples=25, deadline=None)
    def test_mc_option_permutation(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 7))
        opts = rng.normal(size=(m, 5))
        opts /= np.linalg.norm(opts, axis=1, keepdims=True)
        v = rng.normal(size=5)
        v /= np.linalg.norm(v)
        pos = int(rng.integers(0, m))
        perm = rng.permutation(m)
        new_pos = int(np.where(perm == pos)[0][0])
        a = loss_mc(v, opts, pos, 0.7)
        b = loss_mc(v, opts[perm], new_pos, 0.7)
        assert a == pytest.approx(b, abs=1e-12)
