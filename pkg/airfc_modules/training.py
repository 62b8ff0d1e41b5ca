"""
AirFC Simulator - Training Loops
================================

Centralized training (the terminal with CSI backpropagates through the
channel) and the simulated distributed scheme in which the receiver and the
transmitter only exchange signals over the air:

  1. forward over-the-air pass (fresh forward noise)
  2. receiver: real-FC and F2 gradients from its own received signal r
  3. receiver -> transmitter: F2^H dL/dy over the reciprocal channel
     (the transmitter sees (F2 H)^H dL/dy + n)
  4. transmitter: F1, P_Tx and encoder gradients from the noisy feedback
  5. all parties take the same Adam step

Evaluation helpers cover the trained networks and the inference-time
emulation of a digital middle layer by alternating-optimization parameters.
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from airfc_modules import airnn
from airfc_modules.airnn import NetState, TrainConfig
from airfc_modules.channel import ChannelRealization, SystemConfig, sample_channel
from airfc_modules.data import Dataset, batches, sequential_batches
from airfc_modules.emulator import emulate_forward, run_algorithm1
from shared_modules.config import ADAM_BETAS, ADAM_EPS
from shared_modules.errors import ConfigError, TrainingDiverged


TRACE_COLUMNS = ["epoch", "train_loss", "test_accuracy", "P_Tx", "max|v|"]


# =========================
# OPTIMIZER
# =========================

def _real_view(a: np.ndarray) -> np.ndarray:
    """float64 view; complex128 arrays become interleaved (re, im) pairs."""
    return a.view(np.float64) if np.iscomplexobj(a) else a


class Adam:
    """Adaptive-moment descent on the real/imag parts of every parameter (updates in place)."""

    def __init__(self, lr: float, betas=ADAM_BETAS, eps: float = ADAM_EPS):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], names: Sequence[str]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in names:
            p = params[name]
            p_r = _real_view(p)
            g_r = _real_view(np.ascontiguousarray(grads[name], dtype=p.dtype))
            m = self.m.setdefault(name, np.zeros_like(p_r))
            v = self.v.setdefault(name, np.zeros_like(p_r))
            m *= self.beta1
            m += (1.0 - self.beta1) * g_r
            v *= self.beta2
            v += (1.0 - self.beta2) * g_r * g_r
            p_r -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# =========================
# SINGLE STEPS
# =========================

def _check_finite(state: NetState, value: float, where: str) -> None:
    if not math.isfinite(value):
        raise TrainingDiverged(f"Loss is {value} at {where}")
    for name in state.trainable_names():
        if not np.all(np.isfinite(state.params[name])):
            raise TrainingDiverged(f"Parameter {name!r} became non-finite at {where}")


def centralized_step(state: NetState, images: np.ndarray, labels: np.ndarray, ch: Optional[ChannelRealization],
                     sigma2: float, tcfg: TrainConfig, optimizer: Adam, noise_rng: np.random.Generator) -> float:
    logits, cache = airnn.forward(state, images, ch, sigma2, rng=noise_rng, train=True)
    value = airnn.loss(logits, labels, state, tcfg)
    if not math.isfinite(value):
        raise TrainingDiverged(f"Loss is {value} before the update")
    grads = airnn.backward(state, cache, labels, tcfg, logits, ch=ch)
    airnn.update_running_stats(state, cache)
    optimizer.step(state.params, grads, state.trainable_names())
    return value


def distributed_step(state: NetState, images: np.ndarray, labels: np.ndarray, ch: ChannelRealization,
                     sigma2: float, tcfg: TrainConfig, optimizer: Adam, noise_rng: np.random.Generator,
                     feedback_rng: np.random.Generator) -> float:
    logits, cache = airnn.forward(state, images, ch, sigma2, rng=noise_rng, train=True)
    value = airnn.loss(logits, labels, state, tcfg)
    if not math.isfinite(value):
        raise TrainingDiverged(f"Loss is {value} before the update")

    # receiver
    grads, g_y = airnn.receiver_backward(state, cache, airnn.logits_gradient(logits, labels))
    grads["F2"] = airnn.combiner_gradient(g_y, cache["r"])

    # feedback over the reciprocal channel
    fb_noise = airnn.draw_noise(feedback_rng, sigma2, g_y.shape)
    g_s = airnn.feedback_signal(state, ch, g_y, fb_noise)

    # transmitter
    tx_grads, g_x4 = airnn.transmitter_backward(state, cache, g_s, tcfg)
    grads.update(tx_grads)
    grads.update(airnn.encoder_backward(state, cache, g_x4))

    airnn.update_running_stats(state, cache)
    optimizer.step(state.params, grads, state.trainable_names())
    return value


# =========================
# TRAINING LOOPS
# =========================

@dataclass
class TrainResult:
    state: NetState
    trace: pd.DataFrame

    @property
    def final_accuracy(self) -> float:
        return float(self.trace["test_accuracy"].iloc[-1]) if len(self.trace) else float("nan")


def _max_abs_v(state: NetState) -> float:
    if state.middle == "digital":
        return float("nan")
    return float(np.max(np.abs(state.reflection())))


def _run(step: Callable[..., float], state: NetState, tcfg: TrainConfig, sys_cfg: SystemConfig,
         ch: Optional[ChannelRealization], train_ds: Dataset, test_ds: Optional[Dataset],
         trace_path: Optional[str], verbose: bool, max_batches: Optional[int]) -> TrainResult:
    optimizer = Adam(tcfg.learning_rate)
    noise_rng = np.random.default_rng([tcfg.seed, 1])
    eval_rng = np.random.default_rng([tcfg.seed, 3])
    rows: List[dict] = []
    batches_done = 0

    for epoch in range(1, tcfg.epochs + 1):
        losses = []
        for images, labels in batches(train_ds, tcfg.batch_size, tcfg.seed, epoch):
            value = step(state, images, labels, optimizer, noise_rng)
            losses.append(value)
            batches_done += 1
            _check_finite(state, value, f"epoch {epoch}, batch {len(losses)}")
            if max_batches is not None and batches_done >= max_batches:
                break

        accuracy = evaluate(state, test_ds, ch, sys_cfg.sigma2, eval_rng) if test_ds is not None else float("nan")
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)) if losses else float("nan"),
            "test_accuracy": accuracy,
            "P_Tx": float(state.params["p_tx"][0]) if "p_tx" in state.params else float("nan"),
            "max|v|": _max_abs_v(state),
        }
        rows.append(row)
        if verbose:
            print(f"   epoch {epoch:>4}  loss {row['train_loss']:.4f}  acc {accuracy:.4f}  P_Tx {row['P_Tx']:.3f}")
        if max_batches is not None and batches_done >= max_batches:
            break

    trace = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    if trace_path:
        trace.to_csv(trace_path, index=False, encoding="utf-8")
    return TrainResult(state=state, trace=trace)


def train_centralized(tcfg: TrainConfig, sys_cfg: SystemConfig, ch: Optional[ChannelRealization],
                      train_ds: Dataset, test_ds: Optional[Dataset] = None, state: Optional[NetState] = None,
                      trace_path: Optional[str] = None, verbose: bool = False,
                      max_batches: Optional[int] = None) -> TrainResult:
    """
    Train on one fixed channel realization with full CSI. phase_mode decides
    whether phases train (unit/relaxed) or stay at the LoS-aligned preset
    (fixed_los). With middle="digital" this trains the target NN.
    """
    if tcfg.middle == "ota" and ch is None:
        raise ConfigError("Over-the-air training needs a channel realization")
    if state is None:
        state = airnn.init_state(sys_cfg, tcfg, ch)

    def step(st, images, labels, optimizer, noise_rng):
        return centralized_step(st, images, labels, ch, sys_cfg.sigma2, tcfg, optimizer, noise_rng)

    return _run(step, state, tcfg, sys_cfg, ch, train_ds, test_ds, trace_path, verbose, max_batches)


def train_distributed(tcfg: TrainConfig, sys_cfg: SystemConfig, ch: ChannelRealization,
                      train_ds: Dataset, test_ds: Optional[Dataset] = None, state: Optional[NetState] = None,
                      trace_path: Optional[str] = None, verbose: bool = False,
                      max_batches: Optional[int] = None) -> TrainResult:
    """Over-the-air backpropagation with LoS-aligned frozen phases and noisy feedback."""
    if tcfg.phase_mode != "fixed_los" or tcfg.middle != "ota":
        raise ConfigError("Distributed training runs the over-the-air middle with phase_mode='fixed_los'")
    if state is None:
        state = airnn.init_state(sys_cfg, tcfg, ch)
    feedback_rng = np.random.default_rng([tcfg.seed, 2])

    def step(st, images, labels, optimizer, noise_rng):
        return distributed_step(st, images, labels, ch, sys_cfg.sigma2, tcfg, optimizer, noise_rng, feedback_rng)

    return _run(step, state, tcfg, sys_cfg, ch, train_ds, test_ds, trace_path, verbose, max_batches)


# =========================
# EVALUATION
# =========================

def evaluate(state: NetState, ds: Dataset, ch: Optional[ChannelRealization], sigma2: float,
             rng: np.random.Generator, batch_size: int = 256) -> float:
    """Eval-mode accuracy (BN running statistics, fresh channel noise)."""
    correct = 0
    for images, labels in sequential_batches(ds, batch_size):
        logits, _ = airnn.forward(state, images, ch, sigma2, rng=rng, train=False)
        correct += int(np.sum(np.argmax(logits, axis=1) == labels))
    return correct / len(ds)


def evaluate_emulated_accuracy(state: NetState, sys_cfg: SystemConfig, ds: Dataset, mode: str = "unit",
                               batch_size: int = 32, max_batches: Optional[int] = None) -> float:
    """
    Inference with the digital middle layer replaced by y = F2 (H F1 x + n) + b.
    Each test batch gets a fresh channel realization (index = batch number)
    and its own alternating-optimization solution.
    """
    target = airnn.extract_target_layer(state)
    correct = 0
    seen = 0
    for index, (images, labels) in enumerate(sequential_batches(ds, batch_size)):
        if max_batches is not None and index >= max_batches:
            break
        ch = sample_channel(sys_cfg, index=index)
        params, _ = run_algorithm1(sys_cfg, ch, target, mode=mode)
        x4, _ = airnn.encoder_forward(state, images, train=False)
        noise = airnn.draw_noise(np.random.default_rng([sys_cfg.seed, index, 2]), sys_cfg.sigma2, x4.shape)
        logits, _ = airnn.decoder_forward(state, emulate_forward(params, ch, target, x4, noise))
        correct += int(np.sum(np.argmax(logits, axis=1) == labels))
        seen += labels.size
    return correct / seen if seen else float("nan")
