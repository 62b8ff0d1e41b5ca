import numpy as np
import pytest

from airfc_modules.airnn import (
    COMPLEX_FEATURES,
    REAL_FEATURES,
    TrainConfig,
    backward,
    conv_forward,
    cross_entropy,
    encoder_forward,
    extract_target_layer,
    forward,
    init_state,
    load_checkpoint,
    loss,
    ota_grad_F1,
    ota_grad_F2,
    penalties,
    r2c,
    receiver_backward,
    logits_gradient,
    save_checkpoint,
    transmitter_backward,
    transmitter_forward,
    update_running_stats,
)
from airfc_modules.channel import SystemConfig, identity_channel, sample_channel
from airfc_modules.numerics import fro2
from shared_modules.errors import ConfigError, DimensionMismatch
from tests.conftest import crandn


BATCH = 4


@pytest.fixture
def sys_cfg():
    return SystemConfig(n=COMPLEX_FEATURES, ris_elements=(8,), p_max=1.0, sigma2=1.0, k=10.0, seed=0)


@pytest.fixture
def channel(sys_cfg):
    return sample_channel(sys_cfg, 0)


@pytest.fixture
def batch(rng):
    return rng.uniform(0.0, 1.0, size=(BATCH, 28, 28)), rng.integers(0, 10, size=BATCH)


def _state(sys_cfg, channel, middle="ota", phase_mode="unit", seed=0):
    tcfg = TrainConfig(middle=middle, phase_mode=phase_mode, seed=seed)
    return init_state(sys_cfg, tcfg, ch=channel), tcfg


class TestShapes:
    def test_front_end(self, batch):
        images, _ = batch
        z, cols = conv_forward(images, np.ones((2, 1, 3, 3)), np.zeros(2))
        assert z.shape == (BATCH, REAL_FEATURES)
        assert cols.shape == (BATCH, 49, 9)
        assert r2c(z).shape == (COMPLEX_FEATURES, BATCH)

    def test_r2c_interleaving(self):
        z = np.arange(4.0)[None, :]
        np.testing.assert_array_equal(r2c(z)[:, 0], [0 + 1j, 2 + 3j])

    def test_logits(self, sys_cfg, channel, batch, rng):
        state, _ = _state(sys_cfg, channel)
        logits, cache = forward(state, batch[0], channel, sigma2=1.0, rng=rng)
        assert logits.shape == (BATCH, 10)
        assert cache["noise"].shape == (COMPLEX_FEATURES, BATCH)
        assert np.all(np.isfinite(logits))

    def test_rejects_wrong_n(self):
        cfg = SystemConfig(n=16, ris_elements=(8,), p_max=1.0)
        with pytest.raises(ConfigError):
            init_state(cfg, TrainConfig())

    def test_rejects_wrong_image_size(self, sys_cfg, channel):
        state, _ = _state(sys_cfg, channel)
        with pytest.raises(DimensionMismatch):
            forward(state, np.zeros((2, 27, 27)), channel)

    def test_fixed_los_needs_channel(self, sys_cfg):
        with pytest.raises(ConfigError):
            init_state(sys_cfg, TrainConfig(phase_mode="fixed_los"))

    def test_distributed_needs_frozen_phases(self):
        with pytest.raises(ConfigError):
            TrainConfig(mode="distributed", phase_mode="unit")


class TestForward:
    def test_zero_image_gives_bias_logits(self, sys_cfg, channel):
        state, _ = _state(sys_cfg, channel)
        state.params["conv_b"] = np.zeros(2)
        logits, _ = forward(state, np.zeros((3, 28, 28)), channel, sigma2=0.0)
        np.testing.assert_allclose(logits, np.tile(state.params["fc_r_b"], (3, 1)), atol=1e-12)

    def test_constant_batch_normalizes_to_zero(self, sys_cfg, channel):
        state, _ = _state(sys_cfg, channel)
        state.params["conv_b"] = np.zeros(2)
        x4, cache = encoder_forward(state, np.zeros((3, 28, 28)))
        assert np.all(cache["bn_re"]["xhat"] == 0.0)
        assert np.all(cache["bn_im"]["xhat"] == 0.0)
        assert np.all(x4 == 0.0)

    def test_silent_input_transmits_nothing(self, sys_cfg, channel, rng):
        state, tcfg = _state(sys_cfg, channel)
        tx = transmitter_forward(state, np.zeros((COMPLEX_FEATURES, BATCH), dtype=complex))
        assert tx["floored"]
        assert np.all(tx["s"] == 0.0)
        assert np.all(tx["x_out"] == 0.0)
        tx["x4"] = np.zeros((COMPLEX_FEATURES, BATCH), dtype=complex)
        grads, g_x = transmitter_backward(state, tx, crandn(rng, COMPLEX_FEATURES, BATCH), tcfg)
        assert np.all(grads["F1"] == 0.0)
        assert np.all(g_x == 0.0)

    def test_power_normalization(self, sys_cfg, channel, batch, rng):
        state, _ = _state(sys_cfg, channel)
        state.params["p_tx"] = np.array([0.37])
        _, cache = forward(state, batch[0], channel, sigma2=1.0, rng=rng)
        assert fro2(cache["s"]) == pytest.approx(0.37, rel=1e-9)

    def test_identity_link_matches_digital(self, batch):
        cfg = SystemConfig(n=COMPLEX_FEATURES, ris_elements=(COMPLEX_FEATURES,), p_max=2.0, sigma2=0.0)
        ch = identity_channel(COMPLEX_FEATURES)
        ota = init_state(cfg, TrainConfig(seed=3))
        ota.params["theta"] = np.zeros(COMPLEX_FEATURES)
        ota.params["F1"] = np.eye(COMPLEX_FEATURES, dtype=complex)
        ota.params["F2"] = np.eye(COMPLEX_FEATURES, dtype=complex)
        logits_ota, cache = forward(ota, batch[0], ch, sigma2=0.0)

        digital = init_state(cfg, TrainConfig(middle="digital", seed=3))
        for name in ota.params:
            if name in digital.params:
                digital.params[name] = ota.params[name].copy()
        digital.params["W"] = (cache["c"] / cache["nu"]) * np.eye(COMPLEX_FEATURES, dtype=complex)
        digital.params["b"] = np.zeros(COMPLEX_FEATURES, dtype=complex)
        logits_digital, _ = forward(digital, batch[0])
        np.testing.assert_allclose(logits_ota, logits_digital, atol=1e-10)

    def test_forward_is_pure(self, sys_cfg, channel, batch, rng):
        state, _ = _state(sys_cfg, channel)
        before = {k: v.copy() for k, v in state.buffers.items()}
        _, cache = forward(state, batch[0], channel, rng=rng)
        for k, v in before.items():
            np.testing.assert_array_equal(state.buffers[k], v)
        update_running_stats(state, cache)
        assert not np.allclose(state.buffers["bn_mean_re"], before["bn_mean_re"])

    def test_eval_mode_single_sample(self, sys_cfg, channel, batch, rng):
        state, _ = _state(sys_cfg, channel)
        logits, _ = forward(state, batch[0][:1], channel, sigma2=1.0, rng=rng, train=False)
        assert logits.shape == (1, 10)
        assert np.all(np.isfinite(logits))

    def test_unit_mode_modulus(self, sys_cfg, channel):
        state, _ = _state(sys_cfg, channel)
        state.params["theta"] = state.params["theta"] * 7.3
        np.testing.assert_allclose(np.abs(state.reflection()), 1.0, atol=1e-15)


class TestLoss:
    def test_feasible_is_plain_cross_entropy(self, sys_cfg, channel, batch, rng):
        state, tcfg = _state(sys_cfg, channel)
        logits, _ = forward(state, batch[0], channel, rng=rng)
        assert penalties(state, tcfg) == (0.0, 0.0)
        assert loss(logits, batch[1], state, tcfg) == cross_entropy(logits, batch[1])

    def test_power_penalty(self, sys_cfg, channel):
        state, tcfg = _state(sys_cfg, channel)
        state.params["p_tx"] = np.array([sys_cfg.p_max + 1.0])
        assert penalties(state, tcfg)[0] == pytest.approx(100.0)

    def test_amplitude_penalty(self, sys_cfg, channel):
        state, tcfg = _state(sys_cfg, channel, phase_mode="relaxed")
        v = np.full(8, 0.5 + 0j)
        v[3] = 1.5j
        state.params["v"] = v
        assert penalties(state, tcfg)[1] == pytest.approx(50.0)

    def test_one_hot_labels(self):
        logits = np.array([[2.0, 0.0], [0.0, 1.0]])
        assert cross_entropy(logits, np.array([[1, 0], [0, 1]])) == pytest.approx(
            cross_entropy(logits, np.array([0, 1]))
        )


def _directional_check(state, tcfg, ch, images, labels, noise, rng, h=1e-6):
    logits, cache = forward(state, images, ch, sigma2=1.0, noise=noise)
    grads = backward(state, cache, labels, tcfg, logits, ch=ch)

    def value(st):
        lg, _ = forward(st, images, ch, sigma2=1.0, noise=noise)
        return loss(lg, labels, st, tcfg)

    for name in state.trainable_names():
        p = state.params[name]
        d = rng.standard_normal(p.shape)
        if np.iscomplexobj(p):
            d = d + 1j * rng.standard_normal(p.shape)
        plus, minus = state.copy(), state.copy()
        plus.params[name] = p + h * d
        minus.params[name] = p - h * d
        numeric = (value(plus) - value(minus)) / (2.0 * h)
        analytic = float(np.sum(np.real(grads[name]) * np.real(d) + np.imag(grads[name]) * np.imag(d)))
        assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-8), name


class TestBackward:
    @pytest.mark.parametrize("middle,phase_mode", [
        ("ota", "unit"),
        ("ota", "relaxed"),
        ("ota", "fixed_los"),
        ("digital", "unit"),
    ])
    def test_finite_differences(self, sys_cfg, channel, batch, rng, middle, phase_mode):
        state, tcfg = _state(sys_cfg, channel, middle=middle, phase_mode=phase_mode)
        if middle == "ota":
            state.params["p_tx"] = np.array([0.8 * sys_cfg.p_max])
        if phase_mode == "relaxed":
            v = 0.9 * state.params["v"]
            v[0] = 1.5 * v[0] / abs(v[0])
            state.params["v"] = v
            state.params["p_tx"] = np.array([1.3 * sys_cfg.p_max])
        noise = crandn(rng, COMPLEX_FEATURES, BATCH)
        _directional_check(state, tcfg, channel, batch[0], batch[1], noise, rng)

    def test_real_fc_gradient_closed_form(self, sys_cfg, channel, batch, rng):
        state, tcfg = _state(sys_cfg, channel)
        state.params["fc_r_w"] = np.zeros_like(state.params["fc_r_w"])
        state.params["fc_r_b"] = np.zeros_like(state.params["fc_r_b"])
        logits, cache = forward(state, batch[0], channel, rng=rng)
        np.testing.assert_allclose(logits, 0.0)
        grads = backward(state, cache, batch[1], tcfg, logits, ch=channel)
        residual = np.full((BATCH, 10), 0.1)
        residual[np.arange(BATCH), batch[1]] -= 1.0
        np.testing.assert_allclose(grads["fc_r_w"], cache["u"] @ residual / BATCH, atol=1e-14)

    def test_needs_channel(self, sys_cfg, channel, batch, rng):
        state, tcfg = _state(sys_cfg, channel)
        logits, cache = forward(state, batch[0], channel, rng=rng)
        with pytest.raises(ValueError):
            backward(state, cache, batch[1], tcfg, logits, ch=None)


class TestOverTheAirGradients:
    def _setup(self, sys_cfg, channel, batch, rng, sigma2):
        state, tcfg = _state(sys_cfg, channel, phase_mode="fixed_los")
        noise = np.sqrt(sigma2) * crandn(rng, COMPLEX_FEATURES, BATCH)
        logits, cache = forward(state, batch[0], channel, sigma2=sigma2, noise=noise)
        grads = backward(state, cache, batch[1], tcfg, logits, ch=channel)
        _, g_y = receiver_backward(state, cache, logits_gradient(logits, batch[1]))
        return state, cache, grads, g_y, noise

    def test_combiner_noiseless(self, sys_cfg, channel, batch, rng):
        state, cache, grads, g_y, noise = self._setup(sys_cfg, channel, batch, rng, 0.0)
        np.testing.assert_allclose(ota_grad_F2(state, channel, cache["x_out"], g_y, noise), grads["F2"], atol=1e-12)

    def test_combiner_pinned_noise(self, sys_cfg, channel, batch, rng):
        state, cache, grads, g_y, noise = self._setup(sys_cfg, channel, batch, rng, 1.0)
        np.testing.assert_allclose(ota_grad_F2(state, channel, cache["x_out"], g_y, noise), grads["F2"], atol=1e-12)

    def test_combiner_zero_upstream(self, sys_cfg, channel, batch, rng):
        state, cache, _, g_y, noise = self._setup(sys_cfg, channel, batch, rng, 1.0)
        out = ota_grad_F2(state, channel, cache["x_out"], np.zeros_like(g_y), noise)
        np.testing.assert_array_equal(out, 0.0)

    def test_precoder_noiseless(self, sys_cfg, channel, batch, rng):
        state, cache, grads, g_y, _ = self._setup(sys_cfg, channel, batch, rng, 0.0)
        fb = np.zeros((COMPLEX_FEATURES, BATCH), dtype=complex)
        np.testing.assert_allclose(ota_grad_F1(state, channel, cache["x_out"], g_y, fb), grads["F1_precoder"],
                                   atol=1e-12)

    def test_precoder_noise_term(self, sys_cfg, channel, batch, rng):
        state, cache, _, g_y, _ = self._setup(sys_cfg, channel, batch, rng, 1.0)
        fb = crandn(rng, COMPLEX_FEATURES, BATCH)
        x = cache["x_out"]
        noisy = ota_grad_F1(state, channel, x, g_y, fb)
        clean = ota_grad_F1(state, channel, x, g_y, np.zeros_like(fb))
        np.testing.assert_allclose(noisy - clean, fb @ np.conj(x).T, atol=1e-12)

    def test_precoder_zero_input(self, sys_cfg, channel, batch, rng):
        state, cache, _, g_y, _ = self._setup(sys_cfg, channel, batch, rng, 1.0)
        fb = crandn(rng, COMPLEX_FEATURES, BATCH)
        out = ota_grad_F1(state, channel, np.zeros_like(cache["x_out"]), g_y, fb)
        np.testing.assert_array_equal(out, 0.0)


class TestTargetAndCheckpoint:
    def test_extract_target_layer(self, sys_cfg, channel):
        digital, _ = _state(sys_cfg, channel, middle="digital")
        target = extract_target_layer(digital)
        np.testing.assert_array_equal(target.W, digital.params["W"])
        ota, _ = _state(sys_cfg, channel)
        with pytest.raises(ValueError):
            extract_target_layer(ota)

    def test_seeded_init(self, sys_cfg, channel):
        a, _ = _state(sys_cfg, channel, seed=5)
        b, _ = _state(sys_cfg, channel, seed=5)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_checkpoint_keeps_predictions(self, sys_cfg, channel, batch, tmp_path):
        state, _ = _state(sys_cfg, channel, phase_mode="relaxed")
        path = str(tmp_path / "net.blob")
        save_checkpoint(state, path)
        back = load_checkpoint(path)
        assert back.phase_mode == "relaxed"
        assert back.ris_elements == (8,)
        noise = np.zeros((COMPLEX_FEATURES, BATCH), dtype=complex)
        a, _ = forward(state, batch[0], channel, noise=noise, train=False)
        b, _ = forward(back, batch[0], channel, noise=noise, train=False)
        np.testing.assert_allclose(a, b, atol=1e-14)
