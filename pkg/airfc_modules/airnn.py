"""
AirFC Simulator - Over-the-Air Network (Forward / Backward)
===========================================================

The trainable architecture with one FC layer executed by the wireless link:

    Conv(2 ch, k=3, stride=4, pad=1)  28x28 -> 2x7x7 = 98 reals
    R2C (even index -> real, odd -> imag)  -> 49 complex features
    split ReLU -> complex FC (49->49) -> complex BatchNorm -> split ReLU
    ----- middle layer -----
    "ota":     power normalization -> precoder F1 -> RIS channel H + noise -> combiner F2
    "digital": y = W x + b  (the target NN; no channel, no power normalization)
    ------------------------
    C2R (concat real, imag) -> real FC (98->10) -> logits

Layout: the complex part carries the batch as columns (features x B).
Complex gradients use the real-composite convention G = dL/dRe + j dL/dIm.

The backward pass is split into the stages each party of the distributed
scheme can run on its own:
- receiver_backward:    real FC, C2R, combiner F2 (needs only r and dL/dy)
- channel_backward:     RIS phases and dL/dS (needs CSI; centralized only)
- transmitter_backward: precoder F1, power normalization, P_Tx
- encoder_backward:     conv, complex FC, BatchNorm
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import math
import numpy as np

from airfc_modules.channel import (
    ChannelRealization,
    RisPhases,
    SystemConfig,
    cascade_matrix,
    los_aligned_phases,
)
from airfc_modules.emulator import TargetLayer
from airfc_modules.numerics import herm
from shared_modules.blob_io import read_blobs, write_blobs
from shared_modules.config import (
    BN_EPS,
    BN_FLAT_REL_TOL,
    BN_MOMENTUM,
    CONV_CHANNELS,
    CONV_KERNEL,
    CONV_PADDING,
    CONV_STRIDE,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_LAMBDA_P,
    DEFAULT_LAMBDA_RIS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_NUM_CLASSES,
    IMAGE_SIDE,
    POWER_NORM_FLOOR,
)
from shared_modules.errors import ConfigError, DimensionMismatch


PHASE_MODES = ("unit", "relaxed", "fixed_los")
TRAIN_MODES = ("centralized", "distributed")
MIDDLES = ("ota", "digital")

# Output side of the conv front-end: floor((28 + 2*1 - 3) / 4) + 1 = 7.
FEATURE_SIDE = (IMAGE_SIDE + 2 * CONV_PADDING - CONV_KERNEL) // CONV_STRIDE + 1
REAL_FEATURES = CONV_CHANNELS * FEATURE_SIDE * FEATURE_SIDE
COMPLEX_FEATURES = REAL_FEATURES // 2

ENCODER_PARAMS = (
    "conv_w", "conv_b", "fc_A", "fc_beta",
    "bn_gamma_re", "bn_delta_re", "bn_gamma_im", "bn_delta_im",
)
DECODER_PARAMS = ("fc_r_w", "fc_r_b")


# =========================
# CONFIG / STATE
# =========================

@dataclass
class TrainConfig:
    lambda_p: float = DEFAULT_LAMBDA_P
    lambda_ris: float = DEFAULT_LAMBDA_RIS
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    num_classes: int = DEFAULT_NUM_CLASSES
    learning_rate: float = DEFAULT_LEARNING_RATE
    mode: str = "centralized"
    phase_mode: str = "unit"
    middle: str = "ota"
    seed: int = 0

    def __post_init__(self):
        for name in ("lambda_p", "lambda_ris", "learning_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"TrainConfig.{name} must be positive, got {getattr(self, name)}")
        for name in ("epochs", "batch_size", "num_classes"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"TrainConfig.{name} must be >= 1, got {getattr(self, name)}")
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"TrainConfig.mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.phase_mode not in PHASE_MODES:
            raise ConfigError(f"TrainConfig.phase_mode must be one of {PHASE_MODES}, got {self.phase_mode!r}")
        if self.middle not in MIDDLES:
            raise ConfigError(f"TrainConfig.middle must be one of {MIDDLES}, got {self.middle!r}")
        if self.mode == "distributed" and self.phase_mode != "fixed_los":
            raise ConfigError("Distributed training requires phase_mode='fixed_los' (phases frozen)")


@dataclass
class NetState:
    """
    All network parameters, keyed by name.

    params:  trainable arrays (real float64 or complex128, C-contiguous).
    buffers: BatchNorm running statistics and frozen reflection coefficients.

    Middle "ota" trains F1, F2, p_tx and theta (unit) or v (relaxed);
    fixed_los keeps v in buffers["v_fixed"]. Middle "digital" trains W, b.
    """
    params: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray]
    middle: str = "ota"
    phase_mode: str = "unit"
    ris_elements: Tuple[int, ...] = ()
    p_max: float = 1.0
    num_classes: int = DEFAULT_NUM_CLASSES

    def trainable_names(self) -> Tuple[str, ...]:
        names = list(ENCODER_PARAMS)
        if self.middle == "digital":
            names += ["W", "b"]
        else:
            names += ["F1", "F2", "p_tx"]
            if self.phase_mode == "unit":
                names.append("theta")
            elif self.phase_mode == "relaxed":
                names.append("v")
        names += list(DECODER_PARAMS)
        return tuple(names)

    def reflection(self) -> np.ndarray:
        """Current reflection vector v (length M)."""
        if self.phase_mode == "unit":
            return np.exp(1j * self.params["theta"])
        if self.phase_mode == "relaxed":
            return self.params["v"]
        return self.buffers["v_fixed"]

    def phases(self) -> RisPhases:
        """Reflection vector as RisPhases (relaxed entries outside the disk are projected)."""
        v = self.reflection()
        if self.phase_mode == "relaxed":
            mag = np.abs(v)
            v = np.where(mag > 1.0, v / np.maximum(mag, 1.0), v)
            return RisPhases.from_vector(v, self.ris_elements, mode="relaxed")
        return RisPhases.from_vector(v, self.ris_elements, mode="unit")

    def copy(self) -> "NetState":
        return NetState(
            params={k: v.copy() for k, v in self.params.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
            middle=self.middle,
            phase_mode=self.phase_mode,
            ris_elements=tuple(self.ris_elements),
            p_max=self.p_max,
            num_classes=self.num_classes,
        )


def _uniform(rng: np.random.Generator, bound: float, shape) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


def _complex_uniform(rng: np.random.Generator, bound: float, shape) -> np.ndarray:
    return np.ascontiguousarray(_uniform(rng, bound, shape) + 1j * _uniform(rng, bound, shape))


def init_state(sys_cfg: SystemConfig, tcfg: TrainConfig, ch: Optional[ChannelRealization] = None,
               rng: Optional[np.random.Generator] = None) -> NetState:
    """
    Seeded initialization: fan-in uniform weights, BN identity affine,
    F1 = sqrt(P_max/N) (I + small perturbation), small random F2,
    theta uniform on [0, 2pi), P_Tx = P_max.
    """
    if sys_cfg.n != COMPLEX_FEATURES:
        raise ConfigError(
            f"The conv front-end yields {COMPLEX_FEATURES} complex features; N={sys_cfg.n} is not supported"
        )
    if rng is None:
        rng = np.random.default_rng([tcfg.seed, 0])
    n = sys_cfg.n
    fan_conv = 1.0 / math.sqrt(CONV_KERNEL * CONV_KERNEL)
    fan_fc = 1.0 / math.sqrt(n)
    fan_real = 1.0 / math.sqrt(REAL_FEATURES)

    params: Dict[str, np.ndarray] = {
        "conv_w": _uniform(rng, fan_conv, (CONV_CHANNELS, 1, CONV_KERNEL, CONV_KERNEL)),
        "conv_b": _uniform(rng, fan_conv, (CONV_CHANNELS,)),
        "fc_A": _complex_uniform(rng, fan_fc, (n, n)),
        "fc_beta": _complex_uniform(rng, fan_fc, (n,)),
        "bn_gamma_re": np.ones(n),
        "bn_delta_re": np.zeros(n),
        "bn_gamma_im": np.ones(n),
        "bn_delta_im": np.zeros(n),
    }
    buffers: Dict[str, np.ndarray] = {
        "bn_mean_re": np.zeros(n),
        "bn_var_re": np.ones(n),
        "bn_mean_im": np.zeros(n),
        "bn_var_im": np.ones(n),
    }

    if tcfg.middle == "digital":
        params["W"] = _complex_uniform(rng, fan_fc, (n, n))
        params["b"] = _complex_uniform(rng, fan_fc, (n,))
    else:
        m = sys_cfg.m
        eye = np.eye(n, dtype=np.complex128)
        perturb = 0.1 * _complex_uniform(rng, fan_fc, (n, n))
        params["F1"] = np.ascontiguousarray(math.sqrt(sys_cfg.p_max / n) * (eye + perturb))
        params["F2"] = _complex_uniform(rng, 1.0 / math.sqrt(n * max(m, 1)), (n, n))
        params["p_tx"] = np.array([sys_cfg.p_max], dtype=np.float64)
        theta = rng.uniform(0.0, 2.0 * math.pi, size=m)
        if tcfg.phase_mode == "unit":
            params["theta"] = theta
        elif tcfg.phase_mode == "relaxed":
            params["v"] = np.ascontiguousarray(np.exp(1j * theta))
        else:
            if ch is None:
                raise ConfigError("phase_mode='fixed_los' needs the channel realization to align phases")
            buffers["v_fixed"] = los_aligned_phases(ch).vector()

    params["fc_r_w"] = _uniform(rng, fan_real, (REAL_FEATURES, tcfg.num_classes))
    params["fc_r_b"] = _uniform(rng, fan_real, (tcfg.num_classes,))

    return NetState(
        params=params,
        buffers=buffers,
        middle=tcfg.middle,
        phase_mode=tcfg.phase_mode,
        ris_elements=tuple(sys_cfg.ris_elements),
        p_max=sys_cfg.p_max,
        num_classes=tcfg.num_classes,
    )


# =========================
# LAYER HELPERS
# =========================

def _im2col(images: np.ndarray) -> np.ndarray:
    """(B, 28, 28) -> (B, 49 positions, 9 taps) for the strided 3x3 conv."""
    padded = np.pad(images, ((0, 0), (CONV_PADDING, CONV_PADDING), (CONV_PADDING, CONV_PADDING)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (CONV_KERNEL, CONV_KERNEL), axis=(1, 2))
    windows = windows[:, ::CONV_STRIDE, ::CONV_STRIDE][:, :FEATURE_SIDE, :FEATURE_SIDE]
    b = images.shape[0]
    return np.ascontiguousarray(windows).reshape(b, FEATURE_SIDE * FEATURE_SIDE, CONV_KERNEL * CONV_KERNEL)


def conv_forward(images: np.ndarray, conv_w: np.ndarray, conv_b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (features B x 98 channel-major, im2col columns)."""
    cols = _im2col(images)
    out = cols @ conv_w.reshape(CONV_CHANNELS, -1).T + conv_b
    return out.transpose(0, 2, 1).reshape(images.shape[0], REAL_FEATURES), cols


def r2c(z: np.ndarray) -> np.ndarray:
    """(B, 2K) reals -> (K, B) complex, value 2k real part, 2k+1 imaginary part."""
    return (z[:, 0::2] + 1j * z[:, 1::2]).T


def c2r(y: np.ndarray) -> np.ndarray:
    """(K, B) complex -> (2K, B) reals [Re; Im]."""
    return np.concatenate([y.real, y.imag], axis=0)


def split_relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x.real, 0.0) + 1j * np.maximum(x.imag, 0.0)


def split_relu_backward(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    return g.real * (x.real > 0) + 1j * (g.imag * (x.imag > 0))


def _bn_part(x: np.ndarray, gamma: np.ndarray, delta: np.ndarray, train: bool,
             run_mean: np.ndarray, run_var: np.ndarray) -> Tuple[np.ndarray, dict]:
    if train:
        mean = x.mean(axis=1)
        var = x.var(axis=1)
    else:
        mean, var = run_mean, run_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[:, None]) * inv_std[:, None]
    # constant features normalize to exactly zero, not to scaled round-off
    flat = train & (var <= (BN_FLAT_REL_TOL * np.maximum(np.abs(mean), 1.0)) ** 2)
    xhat[flat, :] = 0.0
    return gamma[:, None] * xhat + delta[:, None], {"xhat": xhat, "inv_std": inv_std, "mean": mean, "var": var}


def _bn_part_backward(g: np.ndarray, gamma: np.ndarray, part: dict) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std = part["xhat"], part["inv_std"]
    b = g.shape[1]
    g_gamma = np.sum(g * xhat, axis=1)
    g_delta = np.sum(g, axis=1)
    g_xhat = g * gamma[:, None]
    g_x = (inv_std[:, None] / b) * (
        b * g_xhat - g_xhat.sum(axis=1, keepdims=True) - xhat * np.sum(g_xhat * xhat, axis=1, keepdims=True)
    )
    return g_x, g_gamma, g_delta


def draw_noise(rng: np.random.Generator, sigma2: float, shape) -> np.ndarray:
    """CN(0, sigma2) samples; exact zeros when sigma2 = 0."""
    if sigma2 <= 0.0:
        return np.zeros(shape, dtype=np.complex128)
    scale = math.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# =========================
# FORWARD
# =========================

def encoder_forward(state: NetState, images: np.ndarray, train: bool = True) -> Tuple[np.ndarray, dict]:
    """Conv -> R2C -> ReLU -> complex FC -> BN -> ReLU. Returns (X4: N x B, cache)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE):
        raise DimensionMismatch(f"images must be B x {IMAGE_SIDE} x {IMAGE_SIDE}, got {images.shape}")
    p, buf = state.params, state.buffers
    z, cols = conv_forward(images, p["conv_w"], p["conv_b"])
    x0 = r2c(z)
    x1 = split_relu(x0)
    x2 = p["fc_A"] @ x1 + p["fc_beta"][:, None]
    re, bn_re = _bn_part(x2.real, p["bn_gamma_re"], p["bn_delta_re"], train, buf["bn_mean_re"], buf["bn_var_re"])
    im, bn_im = _bn_part(x2.imag, p["bn_gamma_im"], p["bn_delta_im"], train, buf["bn_mean_im"], buf["bn_var_im"])
    x3 = re + 1j * im
    x4 = split_relu(x3)
    cache = {"cols": cols, "x0": x0, "x1": x1, "x3": x3, "x4": x4, "bn_re": bn_re, "bn_im": bn_im, "train": train}
    return x4, cache


def transmitter_forward(state: NetState, x4: np.ndarray) -> dict:
    """Power normalization and precoding: S = F1 X_out, X_out = sqrt(P_Tx) X / ||F1 X||_F."""
    f1 = state.params["F1"]
    p_eff = max(float(state.params["p_tx"][0]), POWER_NORM_FLOOR)
    c = math.sqrt(p_eff)
    t = f1 @ x4
    norm = math.sqrt(float(np.vdot(t, t).real))
    nu = max(norm, POWER_NORM_FLOOR)
    if norm <= POWER_NORM_FLOOR:
        # nothing to normalize: transmit silence
        return {"t": t, "nu": nu, "floored": True, "c": c, "p_eff": p_eff,
                "x_out": np.zeros_like(x4), "s": np.zeros_like(t)}
    return {"t": t, "nu": nu, "floored": False, "c": c, "p_eff": p_eff,
            "x_out": (c / nu) * x4, "s": (c / nu) * t}


def decoder_forward(state: NetState, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """C2R -> real FC. Returns (logits B x C, u 2N x B)."""
    u = c2r(y)
    return u.T @ state.params["fc_r_w"] + state.params["fc_r_b"], u


def forward(state: NetState, images: np.ndarray, ch: Optional[ChannelRealization] = None, sigma2: float = 0.0,
            rng: Optional[np.random.Generator] = None, noise: Optional[np.ndarray] = None,
            train: bool = True) -> Tuple[np.ndarray, dict]:
    """
    Full forward pass. Returns (logits B x C, caches).

    Forward noise n ~ CN(0, sigma2 I) per column is drawn from rng unless a
    pinned `noise` (N x B) is supplied; the realization used is kept in the
    cache. The pass is pure: BatchNorm running statistics are updated
    separately by update_running_stats.
    """
    x4, cache = encoder_forward(state, images, train=train)
    if state.middle == "digital":
        y = state.params["W"] @ x4 + state.params["b"][:, None]
    else:
        if ch is None:
            raise ValueError("The over-the-air middle layer needs a channel realization")
        tx = transmitter_forward(state, x4)
        h = cascade_matrix(ch, state.reflection())
        if noise is None:
            noise = draw_noise(rng if rng is not None else np.random.default_rng(), sigma2, tx["s"].shape)
        r = h @ tx["s"] + noise
        y = state.params["F2"] @ r
        cache.update(tx)
        cache.update({"h": h, "noise": noise, "r": r})
    logits, u = decoder_forward(state, y)
    cache.update({"y": y, "u": u})
    return logits, cache


def update_running_stats(state: NetState, cache: dict) -> None:
    """Exponential moving average of the batch statistics (unbiased variance)."""
    b = cache["x4"].shape[1]
    correction = b / (b - 1) if b > 1 else 1.0
    for part in ("re", "im"):
        stats = cache[f"bn_{part}"]
        state.buffers[f"bn_mean_{part}"] = (1 - BN_MOMENTUM) * state.buffers[f"bn_mean_{part}"] + BN_MOMENTUM * stats["mean"]
        state.buffers[f"bn_var_{part}"] = (1 - BN_MOMENTUM) * state.buffers[f"bn_var_{part}"] + BN_MOMENTUM * stats["var"] * correction


# =========================
# LOSS
# =========================

def _class_indices(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return np.argmax(labels, axis=1)
    return labels.astype(np.int64)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    idx = _class_indices(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-np.mean(log_probs[np.arange(idx.size), idx]))


def penalties(state: NetState, tcfg: TrainConfig) -> Tuple[float, float]:
    """(power penalty, amplitude penalty); both hinge terms vanish on feasible parameters."""
    if state.middle == "digital":
        return 0.0, 0.0
    p_tx = float(state.params["p_tx"][0])
    power = -tcfg.lambda_p * min(0.0, state.p_max - p_tx)
    amplitude = 0.0
    if state.phase_mode == "relaxed":
        amplitude = -tcfg.lambda_ris * float(np.sum(np.minimum(0.0, 1.0 - np.abs(state.params["v"]))))
    return power, amplitude


def loss(logits: np.ndarray, labels: np.ndarray, state: NetState, tcfg: TrainConfig) -> float:
    """Cross-entropy (batch mean) plus the power and amplitude hinge penalties."""
    power, amplitude = penalties(state, tcfg)
    return cross_entropy(logits, labels) + power + amplitude


# =========================
# BACKWARD STAGES
# =========================

def logits_gradient(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """dCE/dlogits = (softmax - onehot) / B."""
    idx = _class_indices(labels)
    g = softmax(logits)
    g[np.arange(idx.size), idx] -= 1.0
    return g / idx.size


def receiver_backward(state: NetState, cache: dict, g_logits: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Real FC and C2R gradients. Returns (grads, dL/dY as N x B complex)."""
    grads = {
        "fc_r_w": cache["u"] @ g_logits,
        "fc_r_b": g_logits.sum(axis=0),
    }
    g_u = state.params["fc_r_w"] @ g_logits.T
    n = g_u.shape[0] // 2
    return grads, g_u[:n] + 1j * g_u[n:]


def combiner_gradient(g_y: np.ndarray, r: np.ndarray) -> np.ndarray:
    """dL/dF2 = G_Y R^H, summed over batch columns."""
    return g_y @ herm(r)


def channel_backward(state: NetState, ch: ChannelRealization, cache: dict, g_r: np.ndarray,
                     tcfg: TrainConfig) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Through R = H S + n with H = Hhat diag(v) Hbar.
    Returns (reflection gradients, dL/dS).
    """
    grads: Dict[str, np.ndarray] = {}
    g_s = herm(cache["h"]) @ g_r
    if state.phase_mode in ("unit", "relaxed"):
        g_h = g_r @ herm(cache["s"])
        g_v = np.sum((herm(ch.stacked_rx()) @ g_h) * np.conj(ch.stacked_tx()), axis=1)
        if state.phase_mode == "unit":
            v = np.exp(1j * state.params["theta"])
            grads["theta"] = np.real(1j * np.conj(g_v) * v)
        else:
            v = state.params["v"]
            mag = np.abs(v)
            over = mag > 1.0
            pen = np.zeros_like(v)
            pen[over] = tcfg.lambda_ris * v[over] / mag[over]
            grads["v"] = g_v + pen
    return grads, g_s


def transmitter_backward(state: NetState, cache: dict, g_s: np.ndarray,
                         tcfg: TrainConfig) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Through S = sqrt(P_Tx) T / ||T||_F with T = F1 X.

    "F1" is the full gradient (including the normalization pathway);
    "F1_precoder" is the precoder-layer term G_S X_out^H that the feedback
    channel delivers. Returns (grads, dL/dX).
    """
    t, nu, c = cache["t"], cache["nu"], cache["c"]
    if cache["floored"]:
        g_t = np.zeros_like(t)
    else:
        g_t = (c / nu) * g_s - (c / nu ** 3) * float(np.vdot(g_s, t).real) * t

    p_tx = float(state.params["p_tx"][0])
    g_p = 0.0
    if p_tx > POWER_NORM_FLOOR:
        g_p = float(np.vdot(g_s, cache["s"]).real) / (2.0 * cache["p_eff"])
    if p_tx > state.p_max:
        g_p += tcfg.lambda_p

    grads = {
        "F1": g_t @ herm(cache["x4"]),
        "F1_precoder": g_s @ herm(cache["x_out"]),
        "p_tx": np.array([g_p]),
    }
    return grads, herm(state.params["F1"]) @ g_t


def encoder_backward(state: NetState, cache: dict, g_x4: np.ndarray) -> Dict[str, np.ndarray]:
    p = state.params
    g_x3 = split_relu_backward(g_x4, cache["x3"])
    g_re, g_gamma_re, g_delta_re = _bn_part_backward(g_x3.real, p["bn_gamma_re"], cache["bn_re"])
    g_im, g_gamma_im, g_delta_im = _bn_part_backward(g_x3.imag, p["bn_gamma_im"], cache["bn_im"])
    g_x2 = g_re + 1j * g_im

    grads = {
        "bn_gamma_re": g_gamma_re,
        "bn_delta_re": g_delta_re,
        "bn_gamma_im": g_gamma_im,
        "bn_delta_im": g_delta_im,
        "fc_A": g_x2 @ herm(cache["x1"]),
        "fc_beta": g_x2.sum(axis=1),
    }
    g_x0 = split_relu_backward(herm(p["fc_A"]) @ g_x2, cache["x0"])

    b = g_x0.shape[1]
    g_z = np.empty((b, REAL_FEATURES))
    g_z[:, 0::2] = g_x0.real.T
    g_z[:, 1::2] = g_x0.imag.T
    g_out = g_z.reshape(b, CONV_CHANNELS, -1).transpose(0, 2, 1)
    grads["conv_w"] = np.einsum("bpo,bpk->ok", g_out, cache["cols"]).reshape(p["conv_w"].shape)
    grads["conv_b"] = g_out.sum(axis=(0, 1))
    return grads


def backward(state: NetState, caches: dict, labels: np.ndarray, tcfg: TrainConfig, logits: np.ndarray,
             ch: Optional[ChannelRealization] = None) -> Dict[str, np.ndarray]:
    """Exact gradients of `loss` for every trainable parameter (noise held fixed)."""
    g_logits = logits_gradient(logits, labels)
    grads, g_y = receiver_backward(state, caches, g_logits)

    if state.middle == "digital":
        x4 = caches["x4"]
        grads["W"] = g_y @ herm(x4)
        grads["b"] = g_y.sum(axis=1)
        g_x4 = herm(state.params["W"]) @ g_y
    else:
        if ch is None:
            raise ValueError("Centralized backward through the channel needs the realization (CSI)")
        grads["F2"] = combiner_gradient(g_y, caches["r"])
        g_r = herm(state.params["F2"]) @ g_y
        phase_grads, g_s = channel_backward(state, ch, caches, g_r, tcfg)
        grads.update(phase_grads)
        tx_grads, g_x4 = transmitter_backward(state, caches, g_s, tcfg)
        grads.update(tx_grads)

    grads.update(encoder_backward(state, caches, g_x4))
    return grads


# =========================
# OVER-THE-AIR GRADIENTS
# =========================

def received_signal(state: NetState, ch: ChannelRealization, x_out: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """r = H F1 x + n as seen by the receiver."""
    return cascade_matrix(ch, state.reflection()) @ (state.params["F1"] @ x_out) + noise


def ota_grad_F2(state: NetState, ch: ChannelRealization, x_out: np.ndarray, upstream: np.ndarray,
                noise: np.ndarray) -> np.ndarray:
    """Receiver-side combiner gradient from the received signal only: G_Y r^H."""
    return combiner_gradient(upstream, received_signal(state, ch, x_out, noise))


def feedback_signal(state: NetState, ch: ChannelRealization, upstream: np.ndarray, fb_noise: np.ndarray) -> np.ndarray:
    """
    The receiver sends F2^H dL/dY back over the reciprocal channel; the
    transmitter receives g = (F2 H)^H dL/dY + n.
    """
    h = cascade_matrix(ch, state.reflection())
    return herm(h) @ (herm(state.params["F2"]) @ upstream) + fb_noise


def ota_grad_F1(state: NetState, ch: ChannelRealization, x_out: np.ndarray, upstream: np.ndarray,
                fb_noise: np.ndarray) -> np.ndarray:
    """Noisy precoder gradient g x^H = true gradient + n x^H."""
    return feedback_signal(state, ch, upstream, fb_noise) @ herm(x_out)


# =========================
# TARGET LAYER / CHECKPOINTS
# =========================

def extract_target_layer(state: NetState) -> TargetLayer:
    """(W, b) of a trained digital network's middle layer."""
    if state.middle != "digital":
        raise ValueError("Only a digital-middle network defines a target layer")
    return TargetLayer(W=state.params["W"].copy(), b=state.params["b"].copy())


def save_checkpoint(state: NetState, path: str) -> None:
    """NetState -> blob container (params as 'param/<name>', buffers as 'buffer/<name>')."""
    blobs = {f"param/{k}": v for k, v in state.params.items()}
    blobs.update({f"buffer/{k}": v for k, v in state.buffers.items()})
    blobs["meta_ris_elements"] = np.array(state.ris_elements, dtype=np.float64)
    blobs["meta_p_max"] = np.array([state.p_max])
    blobs["meta_num_classes"] = np.array([float(state.num_classes)])
    blobs["meta_flags"] = np.array([float(MIDDLES.index(state.middle)), float(PHASE_MODES.index(state.phase_mode))])
    write_blobs(path, blobs)


def load_checkpoint(path: str) -> NetState:
    blobs = read_blobs(path)
    params = {k.split("/", 1)[1]: np.ascontiguousarray(v) for k, v in blobs.items() if k.startswith("param/")}
    buffers = {k.split("/", 1)[1]: np.ascontiguousarray(v) for k, v in blobs.items() if k.startswith("buffer/")}
    flags = blobs["meta_flags"]
    return NetState(
        params=params,
        buffers=buffers,
        middle=MIDDLES[int(flags[0])],
        phase_mode=PHASE_MODES[int(flags[1])],
        ris_elements=tuple(int(s) for s in blobs["meta_ris_elements"]),
        p_max=float(blobs["meta_p_max"][0]),
        num_classes=int(blobs["meta_num_classes"][0]),
    )
