"""The modulation mechanism: attention, scale/shift heads, variants."""

import math

import numpy as np
import pytest

from videoground import autodiff as ad
from videoground.autodiff import Tensor
from videoground.conditioning import (Conditioner, attend, make_global_modulators,
                                      make_modulators, modulate)
from videoground.config import ConditioningMode
from videoground.errors import ConfigError
from videoground.gradcheck import grad_check
from videoground.text_encoder import SentenceEncoding


def make_sentence(word_rows):
    rows = np.asarray(word_rows, dtype=np.float64)
    return SentenceEncoding(word_states=Tensor(rows),
                            global_state=Tensor(rows.mean(axis=0)))


def make_conditioner(mode, d_s=4, d_h=4, num_layers=3, seed=0, share=False):
    return Conditioner(ConditioningMode(mode), num_layers, d_s, d_h, d_h,
                       1e-5, np.random.default_rng(seed), share_params=share)


def scdm_params(seed=0, d_s=4, d_h=4):
    cond = make_conditioner("scdm", d_s=d_s, d_h=d_h, seed=seed)
    return cond.attention["layer1"], cond.heads["layer1"]


def test_attention_single_word_is_all_of_it():
    attn, _ = scdm_params(seed=1)
    sentence = make_sentence(np.random.default_rng(2).normal(size=(1, 4)))
    fmap = Tensor(np.random.default_rng(3).normal(size=(5, 4)))
    record = attend(sentence, fmap, attn)
    np.testing.assert_allclose(record.weights.data, np.ones((5, 1)), atol=1e-12)
    for i in range(5):
        np.testing.assert_allclose(record.attended.data[i],
                                   sentence.word_states.data[0], atol=1e-12)


def test_attention_uniform_over_identical_words():
    attn, _ = scdm_params(seed=4)
    word = np.random.default_rng(5).normal(size=4)
    sentence = make_sentence(np.tile(word, (3, 1)))
    fmap = Tensor(np.random.default_rng(6).normal(size=(2, 4)))
    record = attend(sentence, fmap, attn)
    np.testing.assert_allclose(record.weights.data, 1.0 / 3.0, atol=1e-12)
    np.testing.assert_allclose(record.attended.data, np.tile(word, (2, 1)), atol=1e-12)


def test_attention_matches_loop_recomputation():
    # independent elementwise re-evaluation of the attention formula
    attn, _ = scdm_params(seed=7)
    rng = np.random.default_rng(8)
    states = rng.normal(size=(3, 4))
    fmap_data = rng.normal(size=(2, 4))
    record = attend(make_sentence(states), Tensor(fmap_data), attn)

    w, w_s, w_a, b = (attn.w.data, attn.w_s.data, attn.w_a.data, attn.b.data)
    for i in range(2):
        scores = np.array([
            w @ np.tanh(w_s @ states[n] + w_a @ fmap_data[i] + b) for n in range(3)
        ])
        e = np.exp(scores - scores.max())
        rho = e / e.sum()
        c = sum(rho[n] * states[n] for n in range(3))
        np.testing.assert_allclose(record.weights.data[i], rho, atol=1e-9)
        np.testing.assert_allclose(record.attended.data[i], c, atol=1e-9)


def test_attention_rows_always_sum_to_one():
    attn, _ = scdm_params(seed=9)
    rng = np.random.default_rng(10)
    for _ in range(20):
        n = int(rng.integers(1, 7))
        record = attend(make_sentence(rng.normal(size=(n, 4))),
                        Tensor(rng.normal(size=(3, 4))), attn)
        sums = record.weights.data.sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-6)
        assert ((record.weights.data >= 0) & (record.weights.data <= 1)).all()


def test_modulator_heads_zero_params_and_bounds():
    _, heads = scdm_params(seed=11)
    heads.w_gamma.data[:] = 0.0
    heads.b_gamma.data[:] = 0.0
    attended = Tensor(np.random.default_rng(12).normal(size=(3, 4)))
    gamma, beta = make_modulators(attended, heads)
    np.testing.assert_array_equal(gamma.data, np.zeros((3, 4)))
    assert (np.abs(beta.data) < 1.0).all()


def test_modulator_hand_value():
    _, heads = scdm_params(seed=13, d_s=1, d_h=1)
    heads.w_gamma.data[:] = [[1.0]]
    heads.b_gamma.data[:] = 0.0
    gamma, _ = make_modulators(Tensor([[1.0]]), heads)
    np.testing.assert_allclose(gamma.data, [[math.tanh(1.0)]], atol=1e-12)
    assert abs(gamma.data[0, 0] - 0.7615941559557649) < 1e-12


def test_injected_identity_modulators_standardize():
    rng = np.random.default_rng(14)
    fmap = Tensor(rng.normal(loc=3.0, scale=2.0, size=(9, 5)))
    out = modulate(fmap, Tensor(np.ones((9, 5))), Tensor(np.zeros((9, 5)))).data
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-6)


def test_constant_channel_returns_beta():
    fmap = Tensor(np.full((4, 2), 1.7))
    beta = Tensor(np.random.default_rng(15).normal(size=(4, 2)))
    out = modulate(fmap, Tensor(np.ones((4, 2))), beta).data
    np.testing.assert_array_equal(out, beta.data)


def test_zero_gamma_returns_beta_exactly():
    rng = np.random.default_rng(16)
    fmap = Tensor(rng.normal(size=(6, 3)))
    beta = Tensor(rng.normal(size=(6, 3)))
    out = modulate(fmap, Tensor(np.zeros((6, 3))), beta).data
    np.testing.assert_array_equal(out, beta.data)


def test_scdm_collapses_to_scm_on_identical_words():
    scdm = make_conditioner("scdm", seed=17)
    scm = make_conditioner("scm", seed=18)
    # inject the same head parameters into both
    for key in ("layer1", "layer2"):
        for field in ("w_gamma", "b_gamma", "w_beta", "b_beta"):
            getattr(scm.heads[key], field).data[:] = getattr(
                scdm.heads[key], field).data
    word = np.random.default_rng(19).normal(size=4)
    sentence = make_sentence(np.tile(word, (3, 1)))
    fmap = Tensor(np.random.default_rng(20).normal(size=(4, 4)))
    a = scdm.apply_single(1, sentence, fmap).data
    b = scm.apply_single(1, sentence, fmap).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_none_mode_ignores_the_sentence_bitwise():
    cond = make_conditioner("none", seed=21)
    rng = np.random.default_rng(22)
    fmap_data = rng.normal(size=(4, 4))
    s1 = make_sentence(rng.normal(size=(2, 4)))
    s2 = make_sentence(rng.normal(size=(3, 4)))
    a = cond.apply(1, [s1], [Tensor(fmap_data)])[0].data
    # reset running stats so the second pass sees identical state
    cond.bn_running_mean["layer1"][:] = 0.0
    cond.bn_running_var["layer1"][:] = 1.0
    b = cond.apply(1, [s2], [Tensor(fmap_data)])[0].data
    np.testing.assert_array_equal(a, b)


def test_mul_mode_identity_with_all_ones_sentence():
    cond = make_conditioner("mul", seed=23)
    fmap = Tensor(np.random.default_rng(24).normal(size=(5, 4)))
    sentence = SentenceEncoding(word_states=Tensor(np.ones((2, 4))),
                                global_state=Tensor(np.ones(4)))
    out = cond.apply_single(2, sentence, fmap)
    np.testing.assert_array_equal(out.data, fmap.data)


def test_mul_mode_requires_matching_dims():
    with pytest.raises(ConfigError):
        Conditioner(ConditioningMode.MUL, 3, 4, 8, 8, 1e-5,
                    np.random.default_rng(0))


def test_fc_mode_shape_preserved():
    cond = make_conditioner("fc", seed=25)
    fmap = Tensor(np.random.default_rng(26).normal(size=(6, 4)))
    sentence = make_sentence(np.random.default_rng(27).normal(size=(2, 4)))
    out = cond.apply_single(1, sentence, fmap)
    assert out.shape == fmap.shape
    assert (out.data >= 0).all()


def test_modulators_evolve_across_units():
    # distinct words + random parameters: some pair of units must disagree
    cond = make_conditioner("scdm", seed=28)
    rng = np.random.default_rng(29)
    sentence = make_sentence(rng.normal(size=(3, 4)) * 2.0)
    fmap = Tensor(rng.normal(size=(6, 4)) * 2.0)
    record = attend(sentence, fmap, cond.attention["layer1"])
    gamma, _ = make_modulators(record.attended, cond.heads["layer1"])
    diffs = np.abs(gamma.data[:, None, :] - gamma.data[None, :, :]).max(axis=-1)
    assert diffs.max() > 1e-9


def test_shared_parameters_reuse_one_set():
    cond = make_conditioner("scdm", seed=30, share=True)
    assert set(cond.attention) == {"shared"}
    names = [n for n, _ in cond.parameters()]
    assert all("shared" in n for n in names)


def test_global_modulators_match_rowwise_heads():
    _, heads = scdm_params(seed=31)
    svec = np.random.default_rng(32).normal(size=4)
    gamma, beta = make_global_modulators(Tensor(svec), heads)
    expect_gamma = np.tanh(heads.w_gamma.data @ svec + heads.b_gamma.data)
    np.testing.assert_allclose(gamma.data, expect_gamma, atol=1e-12)
    assert gamma.shape == beta.shape == (4,)


def test_full_conditioning_path_gradients():
    cond = make_conditioner("scdm", seed=33)
    rng = np.random.default_rng(34)
    states = rng.normal(size=(3, 4))
    fmap_data = rng.normal(size=(4, 4))

    def loss():
        sentence = make_sentence(states)
        out = cond.apply_single(1, sentence, Tensor(fmap_data))
        return ad.sum_(ad.square(out))

    report = grad_check(loss, cond.parameters(), epsilon=1e-5)
    assert report.max_rel_error < 1e-5, report.format()
