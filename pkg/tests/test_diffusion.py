"""Forward-process, objective, training-loop and sampler checks.

The sampler oracles are scalar chains run elementwise over a large array:
every element of x evolves independently, so one (100, 100) run is 10^4
independent trials.
"""

import numpy as np
import pytest

from eegaug import autodiff as ad
from eegaug import diffusion as df
from eegaug.network import NoisePredictor, config_for_segments
from eegaug.schedule import linear_schedule
from eegaug.signal import Spectrogram, log_compress, stft_magnitude
from oracles import fd_gradients


def _toy_net(in_channels=1, segment_len=64, **kwargs):
    kwargs.setdefault("channels", 8)
    kwargs.setdefault("layers", 4)
    kwargs.setdefault("blocks", 2)
    cfg = config_for_segments(in_channels, segment_len, 8, 8, **kwargs)
    return NoisePredictor(cfg, seed=0)


def _conds(segments):
    return [log_compress(stft_magnitude(s, 8, 8)) for s in segments]


class _ZeroNet:
    def forward(self, x_t, t, cond):
        return np.zeros_like(x_t)


class _CountingNet(_ZeroNet):
    def __init__(self):
        self.calls = []

    def forward(self, x_t, t, cond):
        self.calls.append(t)
        return super().forward(x_t, t, cond)


class _OracleNet:
    """Exact posterior mean of eps for x0 ~ N(mu0, var0) elementwise."""

    def __init__(self, mu0, var0, sched):
        self.mu0, self.var0, self.sched = mu0, var0, sched

    def forward(self, x_t, t, cond):
        abar = self.sched.alpha_bar_at(t)
        return np.sqrt(1.0 - abar) * (x_t - np.sqrt(abar) * self.mu0) \
            / (abar * self.var0 + 1.0 - abar)


class TestStepEmbedding:
    def test_length_and_zero_step(self):
        emb = df.step_embedding(0)
        assert emb.shape == (128,)
        assert np.array_equal(emb[:64], np.zeros(64))
        assert np.array_equal(emb[64:], np.ones(64))

    def test_step_one_endpoints(self):
        emb = df.step_embedding(1)
        assert emb[0] == pytest.approx(np.sin(1.0), abs=1e-15)
        assert emb[63] == pytest.approx(np.sin(1e4), abs=1e-12)
        assert emb[64] == pytest.approx(np.cos(1.0), abs=1e-15)
        assert emb[127] == pytest.approx(np.cos(1e4), abs=1e-12)

    def test_geometric_scale_law(self):
        emb = df.step_embedding(7)
        for i in (5, 21, 40):
            scale = 10.0 ** (4.0 * i / 63.0)
            assert emb[i] == pytest.approx(np.sin(scale * 7), abs=1e-12)
            assert emb[64 + i] == pytest.approx(np.cos(scale * 7), abs=1e-12)

    def test_steps_get_distinct_codes(self):
        codes = np.stack([df.step_embedding(t) for t in range(1, 51)])
        assert len(np.unique(codes, axis=0)) == 50

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            df.step_embedding(-1)


class TestForwardDiffuse:
    def test_zero_noise_scales_by_sqrt_alpha_bar(self):
        sched = linear_schedule(10, 1e-3, 0.1)
        x0 = np.arange(12.0).reshape(3, 4)
        for t in (1, 5, 10):
            out = df.forward_diffuse(x0, t, np.zeros_like(x0), sched)
            assert np.array_equal(out, np.sqrt(sched.alpha_bar_at(t)) * x0)

    def test_zero_in_zero_out(self):
        sched = linear_schedule(10, 1e-3, 0.1)
        z = np.zeros((2, 8))
        assert np.array_equal(df.forward_diffuse(z, 4, z, sched), z)

    def test_vanishing_betas_leave_signal_intact(self):
        sched = linear_schedule(20, 1e-8, 1e-7)
        x0 = np.random.default_rng(0).normal(size=(2, 16))
        out = df.forward_diffuse(x0, 20, np.zeros_like(x0), sched)
        assert np.allclose(out, x0, rtol=1e-5)

    def test_affine_in_signal_and_noise(self):
        sched = linear_schedule(10, 1e-3, 0.1)
        rng = np.random.default_rng(1)
        x, y, e, f = (rng.normal(size=(2, 6)) for _ in range(4))
        a, b = 1.7, -0.4
        combined = df.forward_diffuse(a * x + b * y, 6, a * e + b * f, sched)
        split = a * df.forward_diffuse(x, 6, e, sched) + b * df.forward_diffuse(y, 6, f, sched)
        assert np.allclose(combined, split, atol=1e-12)

    def test_monte_carlo_moments(self):
        sched = linear_schedule(50, 1e-4, 0.05)
        t = 30
        abar = sched.alpha_bar_at(t)
        x0 = np.full(100_000, 1.5)
        eps = np.random.default_rng(2).normal(size=x0.shape)
        x_t = df.forward_diffuse(x0, t, eps, sched)
        assert abs(x_t.mean() - np.sqrt(abar) * 1.5) < 0.02 * np.sqrt(1.0 - abar)
        assert abs(x_t.var() - (1.0 - abar)) < 0.02 * (1.0 - abar)

    def test_shape_mismatch_rejected(self):
        sched = linear_schedule(10, 1e-3, 0.1)
        with pytest.raises(ValueError, match="shape"):
            df.forward_diffuse(np.zeros((2, 8)), 1, np.zeros((2, 9)), sched)

    def test_step_out_of_range_rejected(self):
        sched = linear_schedule(10, 1e-3, 0.1)
        z = np.zeros((2, 8))
        with pytest.raises(ValueError, match="outside"):
            df.forward_diffuse(z, 0, z, sched)
        with pytest.raises(ValueError, match="outside"):
            df.forward_diffuse(z, 11, z, sched)


class TestTrainingLoss:
    def test_zero_predictor_sees_unit_noise_power(self):
        sched = linear_schedule(10, 1e-3, 0.1)
        x0 = np.random.default_rng(3).normal(size=(2, 32))
        rng_t = np.random.default_rng(4)
        rng_eps = np.random.default_rng(5)
        vals = [df.training_loss(x0, None, _ZeroNet(), sched, rng_t, rng_eps).item()
                for _ in range(200)]
        assert abs(np.mean(vals) - 1.0) < 0.05

    def test_perfect_inversion_zeroes_the_loss(self):
        sched = linear_schedule(10, 1e-3, 0.1)
        x0 = np.random.default_rng(6).normal(size=(2, 32))

        class Cheat:
            def forward(self, x_t, t, cond):
                abar = sched.alpha_bar_at(t)
                return (x_t - np.sqrt(abar) * x0) / np.sqrt(1.0 - abar)

        for k in range(20):
            loss = df.training_loss(x0, None, Cheat(), sched,
                                    np.random.default_rng(k), np.random.default_rng(100 + k))
            assert loss.item() < 1e-24

    def test_loss_nonnegative_for_untrained_net(self):
        sched = linear_schedule(10, 1e-3, 0.1)
        net = _toy_net()
        x0 = np.random.default_rng(7).normal(size=(1, 64))
        cond = _conds([x0])[0]
        for k in range(10):
            loss = df.training_loss(x0, cond, net, sched,
                                    np.random.default_rng(k), np.random.default_rng(50 + k))
            assert loss.item() >= 0.0

    def test_draws_every_step_uniformly(self):
        sched = linear_schedule(5, 1e-3, 0.1)
        net = _CountingNet()
        x0 = np.zeros((1, 8))
        rng_t = np.random.default_rng(8)
        rng_eps = np.random.default_rng(9)
        for _ in range(200):
            df.training_loss(x0, None, net, sched, rng_t, rng_eps)
        assert sorted(set(net.calls)) == [1, 2, 3, 4, 5]

    def test_gradient_matches_finite_differences(self):
        sched = linear_schedule(10, 1e-3, 0.1)
        net = _toy_net(in_channels=2, segment_len=32, channels=4, layers=2, blocks=1)
        rng = np.random.default_rng(10)
        net.params["head2.w"].data[:] = rng.normal(size=net.params["head2.w"].shape)
        x0 = rng.normal(size=(2, 32))
        cond = _conds([x0])[0]

        def loss():
            return df.training_loss(x0, cond, net, sched,
                                    np.random.default_rng(11), np.random.default_rng(12))

        worst = fd_gradients(loss, list(net.params.values()), max_coords=15,
                             rng=np.random.default_rng(13))
        assert worst < 1e-3


class TestTrain:
    def _toy_problem(self):
        sched = linear_schedule(10, 1e-3, 0.2)
        segments = [np.full((1, 64), 0.8) for _ in range(4)]
        return sched, segments, _conds(segments)

    def test_loss_halves_on_constant_signal(self):
        sched, segments, conds = self._toy_problem()
        net = _toy_net()
        state = df.train(segments, conds, net, sched,
                         df.TrainOptions(iters=300, batch=4, seed=0))
        first = np.mean(state.loss_trace[:20])
        last = np.mean(state.loss_trace[-20:])
        assert last < 0.5 * first
        assert len(state.loss_trace) == 300 and state.iteration == 300

    def test_zero_iterations_keep_parameters(self):
        sched, segments, conds = self._toy_problem()
        net = _toy_net()
        before = {k: v.data.copy() for k, v in net.params.items()}
        state = df.train(segments, conds, net, sched, df.TrainOptions(iters=0))
        assert state.iteration == 0 and state.loss_trace == []
        for k, v in net.params.items():
            assert np.array_equal(v.data, before[k])

    def test_same_seed_bit_identical(self):
        sched, segments, conds = self._toy_problem()
        runs = []
        for _ in range(2):
            net = _toy_net()
            df.train(segments, conds, net, sched, df.TrainOptions(iters=40, batch=2, seed=5))
            runs.append({k: v.data.tobytes() for k, v in net.params.items()})
        assert runs[0] == runs[1]

    def test_different_seed_differs(self):
        sched, segments, conds = self._toy_problem()
        finals = []
        for seed in (0, 1):
            net = _toy_net()
            st = df.train(segments, conds, net, sched,
                          df.TrainOptions(iters=10, batch=2, seed=seed))
            finals.append(st.loss_trace)
        assert finals[0] != finals[1]

    def test_resume_matches_single_run(self):
        sched, segments, conds = self._toy_problem()
        net_a = _toy_net()
        one_shot = df.train(segments, conds, net_a, sched,
                            df.TrainOptions(iters=60, batch=2, seed=3))
        net_b = _toy_net()
        state = df.train(segments, conds, net_b, sched,
                         df.TrainOptions(iters=30, batch=2, seed=3))
        state = df.train(segments, conds, net_b, sched,
                         df.TrainOptions(iters=30, batch=2, seed=3), state=state)
        assert state.iteration == 60
        assert state.loss_trace == one_shot.loss_trace
        for k in net_a.params:
            assert net_a.params[k].data.tobytes() == net_b.params[k].data.tobytes()

    def test_empty_dataset_rejected(self):
        sched, _, _ = self._toy_problem()
        with pytest.raises(ValueError, match="non-empty"):
            df.train([], [], _toy_net(), sched, df.TrainOptions(iters=1))

    def test_conditioner_count_must_match(self):
        sched, segments, conds = self._toy_problem()
        with pytest.raises(ValueError, match="one conditioner per"):
            df.train(segments, conds[:-1], _toy_net(), sched, df.TrainOptions(iters=1))


class TestSample:
    def test_single_step_divides_by_sqrt_alpha(self):
        sched = linear_schedule(1, 0.04, 0.04)
        out = df.sample(_ZeroNet(), None, sched, np.random.default_rng(17), shape=(3, 5))
        x_1 = np.random.default_rng(17).normal(size=(3, 5))
        assert np.array_equal(out, x_1 / np.sqrt(sched.alpha_at(1)))

    def test_shape_comes_from_net_config(self):
        net = _toy_net(in_channels=2, segment_len=64)
        sched = linear_schedule(3, 1e-3, 0.1)
        cond = _conds([np.zeros((2, 64))])[0]
        out = df.sample(net, cond, sched, np.random.default_rng(0))
        assert out.shape == (2, 64)

    def test_explicit_shape_respected(self):
        sched = linear_schedule(3, 1e-3, 0.1)
        out = df.sample(_ZeroNet(), None, sched, np.random.default_rng(0), shape=(4, 9))
        assert out.shape == (4, 9)

    def test_trajectory_is_exactly_t_evaluations(self):
        net = _CountingNet()
        sched = linear_schedule(7, 1e-3, 0.1)
        df.sample(net, None, sched, np.random.default_rng(1), shape=(1, 4))
        assert net.calls == list(range(7, 0, -1))

    def test_conditioner_passed_through(self):
        seen = []

        class Spy(_ZeroNet):
            def forward(self, x_t, t, cond):
                seen.append(cond)
                return super().forward(x_t, t, cond)

        sched = linear_schedule(2, 1e-3, 0.1)
        marker = object()
        df.sample(Spy(), marker, sched, np.random.default_rng(2), shape=(1, 4))
        assert all(c is marker for c in seen)

    def test_zero_predictor_variance_matches_recursion(self):
        # Var_{t-1} = Var_t / alpha_t + beta_tilde_t, Var_T = 1, no noise at t=1
        sched = linear_schedule(20, 1e-3, 0.1)
        var = 1.0
        for t in range(20, 1, -1):
            var = var / sched.alpha_at(t) + sched.beta_tilde_at(t)
        var = var / sched.alpha_at(1)
        out = df.sample(_ZeroNet(), None, sched, np.random.default_rng(3), shape=(100, 100))
        assert abs(out.mean()) < 4.0 * np.sqrt(var / out.size)
        assert abs(out.var() - var) / var < 0.06

    def test_optimal_gaussian_predictor_recovers_data_law(self):
        # elementwise scalar chains; mean/variance tolerances 5%/10%
        sched = linear_schedule(200, 1e-4, 0.1)
        mu0, var0 = 3.0, 4.0
        net = _OracleNet(mu0, var0, sched)
        out = df.sample(net, None, sched, np.random.default_rng(4), shape=(100, 100))
        assert abs(out.mean() - mu0) < 0.05 * mu0
        assert abs(out.var() - var0) < 0.10 * var0

    def test_training_pulls_samples_toward_the_data(self):
        # after training on constant 0.8 segments the sample mean should sit
        # closer to 0.8 than the untrained (zero-predictor) sample mean
        sched = linear_schedule(10, 1e-3, 0.2)
        segments = [np.full((1, 64), 0.8) for _ in range(4)]
        conds = _conds(segments)
        net = _toy_net()
        before = df.sample(net, conds[0], sched, np.random.default_rng(5))
        df.train(segments, conds, net, sched, df.TrainOptions(iters=300, batch=4, seed=0))
        after = df.sample(net, conds[0], sched, np.random.default_rng(5))
        assert after.shape == (1, 64)
        assert np.all(np.isfinite(after))
        assert abs(after.mean() - 0.8) < abs(before.mean() - 0.8)
