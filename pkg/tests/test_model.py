import math

import numpy as np
import pytest

from tokmel.errors import FormatError
from tokmel.melody import MelodyTrack
from tokmel.model import (
    ToyPredictor,
    TrainConfig,
    accuracy,
    finite_difference_check,
    forward,
    grad,
    load_model,
    loss_melody,
    loss_token,
    plan_features,
    save_model,
    train,
)
from tokmel.score import parse_score, regulate
from tokmel.stream import TokenStream

from conftest import make_pitch_dataset


def melody_of(lf0):
    lf0 = np.asarray(lf0, dtype=np.float64)
    return MelodyTrack(lf0=lf0, voiced=lf0 != 0.0, fps=50)


def small_fixture(seed=0, n=6, input_dim=5, ks=(4, 3)):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, input_dim))
    streams = tuple(rng.integers(0, k, n) for k in ks)
    tokens = TokenStream(streams=streams, ks=ks, fps=50)
    lf0 = rng.uniform(4.0, 7.0, n)
    return x, tokens, melody_of(lf0)


class TestLossMelody:
    def test_zero_when_exact(self):
        truth = melody_of([5.0, 6.0])
        assert loss_melody(truth, [5.0, 6.0]) == 0.0

    def test_mean_absolute(self):
        truth = melody_of([5.0, 6.0])
        assert loss_melody(truth, [5.5, 5.0]) == pytest.approx(0.75)

    def test_voiced_only(self):
        truth = MelodyTrack(np.array([0.0, 6.0]), np.array([False, True]), fps=50)
        assert loss_melody(truth, [3.0, 6.5], voiced_only=True) == pytest.approx(0.5)
        assert loss_melody(truth, [3.0, 6.5]) == pytest.approx(1.75)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            loss_melody(melody_of([5.0]), [5.0, 6.0])


class TestLossToken:
    def test_uniform_posterior_single_stream(self):
        n, k = 4, 128
        tokens = TokenStream(streams=(np.zeros(n, int),), ks=(k,), fps=50)
        posteriors = [np.full((n, k), 1.0 / k)]
        assert loss_token(tokens, posteriors) == pytest.approx(
            math.log(128), abs=1e-12
        )
        assert math.log(128) == pytest.approx(4.85203, abs=1e-5)

    def test_uniform_two_streams_sum(self):
        n, k = 3, 128
        tokens = TokenStream(streams=(np.zeros(n, int),) * 2, ks=(k, k), fps=50)
        posteriors = [np.full((n, k), 1.0 / k)] * 2
        assert loss_token(tokens, posteriors) == pytest.approx(2 * math.log(k))

    def test_perfect_posterior_zero_loss(self):
        tokens = TokenStream(streams=(np.array([0, 1]),), ks=(2,), fps=50)
        posteriors = [np.array([[1.0, 0.0], [0.0, 1.0]])]
        assert loss_token(tokens, posteriors) == pytest.approx(0.0, abs=1e-9)

    def test_row_sum_check(self):
        tokens = TokenStream(streams=(np.array([0]),), ks=(2,), fps=50)
        with pytest.raises(ValueError):
            loss_token(tokens, [np.array([[0.6, 0.6]])])

    def test_zero_param_model_is_uniform(self):
        model = ToyPredictor.create(3, 4, ks=(5,), seed=0)
        for _, value in model.parameters():
            value[...] = 0.0
        model.b_mel = 0.0
        _, posteriors = forward(model, np.ones((2, 3)))
        np.testing.assert_allclose(posteriors[0], 0.2)


class TestAccuracy:
    def test_perfect(self):
        tokens = TokenStream(streams=(np.array([0, 1]),), ks=(2,), fps=50)
        assert accuracy(tokens, [np.array([[0.9, 0.1], [0.2, 0.8]])]) == 1.0

    def test_half(self):
        tokens = TokenStream(streams=(np.array([0, 0]),), ks=(2,), fps=50)
        assert accuracy(tokens, [np.array([[0.9, 0.1], [0.2, 0.8]])]) == 0.5


class TestGrad:
    @pytest.mark.parametrize("enhanced", [True, False])
    def test_matches_finite_differences(self, enhanced):
        x, tokens, mel = small_fixture()
        model = ToyPredictor.create(5, 4, ks=(4, 3), seed=1, melody_enhanced=enhanced)
        assert finite_difference_check(model, x, tokens, mel) < 1e-4

    def test_lambda_scales_melody_term(self):
        x, tokens, mel = small_fixture(seed=3)
        model = ToyPredictor.create(5, 4, ks=(4, 3), seed=2, melody_enhanced=False)
        g1 = grad(model, x, tokens, mel, lambda_m=1.0)
        g2 = grad(model, x, tokens, mel, lambda_m=2.0)
        assert g2.loss == pytest.approx(g1.loss_token + 2 * g1.loss_melody)

    def test_plain_model_zero_fuse_grads(self):
        x, tokens, mel = small_fixture(seed=4)
        model = ToyPredictor.create(5, 4, ks=(4, 3), seed=2, melody_enhanced=False)
        g = grad(model, x, tokens, mel)
        assert np.all(g.by_name["w_fuse"] == 0.0)
        assert np.all(g.by_name["b_fuse"] == 0.0)


class TestTrain:
    def test_deterministic(self):
        x, tokens, mel = make_pitch_dataset(50, seed=5)
        model = ToyPredictor.create(x.shape[1], 6, ks=tokens.ks, seed=0)
        cfg = TrainConfig(learning_rate=0.01, epochs=5, seed=7)
        m1, h1 = train(model, [(x, tokens, mel)], cfg)
        m2, h2 = train(model, [(x, tokens, mel)], cfg)
        assert h1 == h2
        np.testing.assert_array_equal(m1.w_enc, m2.w_enc)

    def test_zero_epochs_unchanged(self):
        x, tokens, mel = make_pitch_dataset(20, seed=5)
        model = ToyPredictor.create(x.shape[1], 6, ks=tokens.ks, seed=0)
        trained, history = train(model, [(x, tokens, mel)], TrainConfig(epochs=0))
        assert history == []
        np.testing.assert_array_equal(trained.w_enc, model.w_enc)

    def test_loss_non_increasing_small_lr_full_batch(self):
        x, tokens, mel = make_pitch_dataset(80, seed=6)
        model = ToyPredictor.create(x.shape[1], 8, ks=tokens.ks, seed=1)
        cfg = TrainConfig(learning_rate=0.001, epochs=30, batch_size=128, seed=0)
        _, history = train(model, [(x, tokens, mel)], cfg)
        assert all(b <= a + 1e-6 for a, b in zip(history, history[1:]))

    def test_learns_separable_problem(self):
        x, tokens, mel = make_pitch_dataset(200, seed=1)
        model = ToyPredictor.create(x.shape[1], 8, ks=tokens.ks, seed=8)
        cfg = TrainConfig(learning_rate=0.05, epochs=4000, batch_size=512, seed=0)
        trained, _ = train(model, [(x, tokens, mel)], cfg)
        _, posteriors = forward(trained, x)
        assert accuracy(tokens, posteriors) >= 0.9

    def test_empty_dataset_rejected(self):
        model = ToyPredictor.create(3, 4, ks=(5,), seed=0)
        with pytest.raises(ValueError):
            train(model, [], TrainConfig())


class TestPlanFeatures:
    def test_shape_and_values(self):
        text = "_\tsil\t0\t0.0\t0.1\nla\ta\t69\t0.1\t0.2\n"
        plan = regulate(parse_score(text), fps=50)
        x = plan_features(plan)
        assert x.shape == (10, len(plan.phonemes) + 2)
        np.testing.assert_allclose(x[:, : len(plan.phonemes)].sum(axis=1), 1.0)
        assert np.all(x[:5, -1] == 0.0)
        assert np.all(x[5:, -1] == 1.0)
        assert x[5, -2] == pytest.approx(math.log(440.0) / math.log(4000.0))


class TestCheckpoint:
    @pytest.mark.parametrize("enhanced", [True, False])
    def test_round_trip(self, tmp_path, enhanced):
        model = ToyPredictor.create(5, 4, ks=(4, 3), seed=9, melody_enhanced=enhanced)
        path = tmp_path / "m.tkmd"
        save_model(model, path)
        back = load_model(path)
        assert back.melody_enhanced == enhanced
        assert back.ks == model.ks
        x = np.random.default_rng(0).normal(0, 1, (3, 5))
        pred_a, post_a = forward(model, x)
        pred_b, post_b = forward(back, x)
        np.testing.assert_allclose(pred_a, pred_b, atol=1e-6)
        for a, b in zip(post_a, post_b):
            np.testing.assert_allclose(a, b, atol=1e-6)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tkmd"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(FormatError):
            load_model(path)
