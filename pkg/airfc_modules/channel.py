"""
AirFC Simulator - RIS-aided MIMO Channels
=========================================

Rician-fading channel generation for single- and multi-RIS topologies.

This module is responsible for:
- Sampling per-RIS channel pairs (transmitter -> RIS, RIS -> receiver) with
  half-wavelength ULA line-of-sight components and unit-variance scattering.
- Composing the effective over-the-air channel H = sum_i Hhat_i diag(v_i) Hbar_i.
- LoS-aligned RIS phase presets (no CSI needed, only LoS geometry).
- Rank diagnostics for the multi-RIS rank-augmentation argument.
- Dumping/loading realizations in the blob container.

Geometry model: angles are drawn uniformly in [0, pi) per
realization and the large-scale path gain is 1, matching sigma^2 = 1.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from airfc_modules.numerics import numerical_rank
from shared_modules.blob_io import read_blobs, write_blobs
from shared_modules.config import DEFAULT_SIGMA2
from shared_modules.errors import ConfigError, DimensionMismatch


UNIT_MODULUS_TOL = 1e-12


# =========================
# CONFIGURATION / CONTAINERS
# =========================

@dataclass(frozen=True)
class SystemConfig:
    """
    System dimensions and link budget, all in linear units.

    k: Rician factor; math.inf = pure LoS, 0.0 = pure Rayleigh.
    ris_elements: per-RIS element counts M_i (L = len, M = sum).
    """
    n: int
    ris_elements: Tuple[int, ...]
    p_max: float
    sigma2: float = DEFAULT_SIGMA2
    k: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ris_elements", tuple(int(m) for m in self.ris_elements))
        if self.n < 1:
            raise ConfigError(f"N must be >= 1, got {self.n}")
        if not self.ris_elements or any(m < 1 for m in self.ris_elements):
            raise ConfigError(f"Every RIS needs >= 1 element, got {self.ris_elements}")
        if not self.p_max > 0:
            raise ConfigError(f"P_max must be > 0, got {self.p_max}")
        if self.sigma2 < 0:
            raise ConfigError(f"sigma2 must be >= 0, got {self.sigma2}")
        if not (self.k >= 0):
            raise ConfigError(f"Rician K must be >= 0 (linear) or the LoS sentinel, got {self.k}")

    @property
    def num_ris(self) -> int:
        return len(self.ris_elements)

    @property
    def m(self) -> int:
        return sum(self.ris_elements)

    @staticmethod
    def split_elements(m_total: int, num_ris: int) -> Tuple[int, ...]:
        """Spread M elements over L surfaces as evenly as possible (first ones get the remainder)."""
        if num_ris < 1 or m_total < num_ris:
            raise ConfigError(f"Cannot split M={m_total} elements over L={num_ris} surfaces")
        base, extra = divmod(m_total, num_ris)
        return tuple(base + (1 if i < extra else 0) for i in range(num_ris))


@dataclass
class ChannelRealization:
    """
    Per-RIS channels: tx_to_ris[i] is Hbar_i (M_i x N), ris_to_rx[i] is
    Hhat_i (N x M_i). LoS components are stored alongside for phase presets.
    """
    tx_to_ris: List[np.ndarray]
    ris_to_rx: List[np.ndarray]
    los_tx_to_ris: List[np.ndarray]
    los_ris_to_rx: List[np.ndarray]
    k: float
    index: int = 0

    @property
    def n(self) -> int:
        return self.tx_to_ris[0].shape[1]

    @property
    def ris_elements(self) -> Tuple[int, ...]:
        return tuple(h.shape[0] for h in self.tx_to_ris)

    @property
    def num_ris(self) -> int:
        return len(self.tx_to_ris)

    def stacked_tx(self) -> np.ndarray:
        """Hbar = [Hbar_1; ...; Hbar_L] (M x N)."""
        return np.vstack(self.tx_to_ris)

    def stacked_rx(self) -> np.ndarray:
        """Hhat = [Hhat_1, ..., Hhat_L] (N x M)."""
        return np.hstack(self.ris_to_rx)


@dataclass
class RisPhases:
    """
    Reflection coefficients per RIS.

    mode "unit": |v| = 1 (phase-only element); "relaxed": |v| <= 1.
    los_fallback marks presets that could not use a LoS component.
    """
    values: List[np.ndarray]
    mode: str = "unit"
    los_fallback: bool = False

    def __post_init__(self):
        self.values = [np.asarray(v, dtype=np.complex128).reshape(-1) for v in self.values]
        mags = np.abs(self.vector()) if self.values else np.zeros(0)
        if self.mode == "unit":
            if mags.size and np.max(np.abs(mags - 1.0)) > UNIT_MODULUS_TOL:
                raise ValueError("Unit-modulus phases must satisfy |v| = 1")
        elif self.mode == "relaxed":
            if mags.size and np.max(mags) > 1.0 + UNIT_MODULUS_TOL:
                raise ValueError("Relaxed reflection coefficients must satisfy |v| <= 1")
        else:
            raise ValueError(f"Unknown phase mode {self.mode!r}")

    def vector(self) -> np.ndarray:
        """Concatenated v (length M)."""
        return np.concatenate(self.values) if self.values else np.zeros(0, dtype=np.complex128)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(v.size for v in self.values)

    @classmethod
    def from_vector(cls, v: np.ndarray, sizes: Tuple[int, ...], mode: str = "unit") -> "RisPhases":
        v = np.asarray(v, dtype=np.complex128)
        if v.size != sum(sizes):
            raise DimensionMismatch(f"Phase vector length {v.size} != sum of RIS sizes {sum(sizes)}")
        bounds = np.cumsum((0,) + tuple(sizes))
        return cls([v[bounds[i]:bounds[i + 1]] for i in range(len(sizes))], mode=mode)

    @classmethod
    def from_angles(cls, theta: np.ndarray, sizes: Tuple[int, ...]) -> "RisPhases":
        return cls.from_vector(np.exp(1j * np.asarray(theta, dtype=np.float64)), sizes, mode="unit")


# =========================
# SAMPLING
# =========================

def ula_steering(num: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA response: a_n = exp(j*pi*n*cos(angle)), n = 0..num-1."""
    return np.exp(1j * math.pi * np.arange(num) * math.cos(angle))


def channel_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based (Philox) stream keyed on (seed, realization index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _rician_mix(los: np.ndarray, nlos: np.ndarray, k: float) -> np.ndarray:
    if math.isinf(k):
        return los.copy()
    if k == 0.0:
        return nlos.copy()
    return math.sqrt(k / (k + 1.0)) * los + math.sqrt(1.0 / (k + 1.0)) * nlos


def sample_channel(cfg: SystemConfig, index: int = 0) -> ChannelRealization:
    """
    Draw one channel realization. Bit-identical for a fixed (cfg.seed, index).

    Random draws happen in a fixed order regardless of K, so sweeping K keeps
    the LoS geometry and the scattering draw of a realization index fixed.
    """
    rng = channel_rng(cfg.seed, index)
    n = cfg.n
    tx_to_ris, ris_to_rx, los_tx, los_rx = [], [], [], []
    for m_i in cfg.ris_elements:
        aod_tx, aoa_ris, aod_ris, aoa_rx = rng.uniform(0.0, math.pi, size=4)
        nlos_bar = _cn(rng, (m_i, n))
        nlos_hat = _cn(rng, (n, m_i))

        hbar_los = np.outer(ula_steering(m_i, aoa_ris), np.conj(ula_steering(n, aod_tx)))
        hhat_los = np.outer(ula_steering(n, aoa_rx), np.conj(ula_steering(m_i, aod_ris)))

        tx_to_ris.append(_rician_mix(hbar_los, nlos_bar, cfg.k))
        ris_to_rx.append(_rician_mix(hhat_los, nlos_hat, cfg.k))
        los_tx.append(hbar_los)
        los_rx.append(hhat_los)

    return ChannelRealization(tx_to_ris, ris_to_rx, los_tx, los_rx, k=cfg.k, index=index)


def identity_channel(n: int) -> ChannelRealization:
    """Single RIS with Hbar = Hhat = I (M = N); with all-ones phases H = I."""
    eye = np.eye(n, dtype=np.complex128)
    return ChannelRealization([eye.copy()], [eye.copy()], [eye.copy()], [eye.copy()], k=math.inf)


def random_phases(sizes: Tuple[int, ...], rng: np.random.Generator) -> RisPhases:
    """Uniform random phases on the unit circle."""
    return RisPhases.from_angles(rng.uniform(0.0, 2.0 * math.pi, size=sum(sizes)), sizes)


# =========================
# COMPOSITION
# =========================

def cascade_matrix(ch: ChannelRealization, v: np.ndarray) -> np.ndarray:
    """H = Hhat diag(v) Hbar over the stacked RIS channels; v may leave the unit disk."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if v.size != sum(ch.ris_elements):
        raise DimensionMismatch(f"Reflection vector length {v.size} != M = {sum(ch.ris_elements)}")
    return ch.stacked_rx() @ (v[:, None] * ch.stacked_tx())


def effective_channel(ch: ChannelRealization, phases: RisPhases) -> np.ndarray:
    """H = sum_i Hhat_i diag(v_i) Hbar_i (N x N)."""
    if len(phases.values) != ch.num_ris:
        raise DimensionMismatch(f"{len(phases.values)} phase vectors for {ch.num_ris} RISs")
    n = ch.n
    h = np.zeros((n, n), dtype=np.complex128)
    for hbar, hhat, v in zip(ch.tx_to_ris, ch.ris_to_rx, phases.values):
        if v.size != hbar.shape[0] or hhat.shape[1] != hbar.shape[0]:
            raise DimensionMismatch(
                f"RIS size mismatch: v has {v.size}, Hbar {hbar.shape}, Hhat {hhat.shape}"
            )
        h += hhat @ (v[:, None] * hbar)
    return h


def los_aligned_phases(ch: ChannelRealization) -> RisPhases:
    """
    Phases that add the LoS cascade contributions of the
    (receiver antenna 1, transmitter antenna 1) path coherently.

    Pure Rayleigh (K = 0) has no LoS to align to: all-ones phases with
    los_fallback=True.
    """
    if ch.k == 0.0:
        return RisPhases([np.ones(m, dtype=np.complex128) for m in ch.ris_elements], los_fallback=True)
    values = []
    for hbar_los, hhat_los in zip(ch.los_tx_to_ris, ch.los_ris_to_rx):
        cascade = hhat_los[0, :] * hbar_los[:, 0]
        values.append(np.exp(-1j * np.angle(cascade)))
    return RisPhases(values)


# =========================
# RANK DIAGNOSTICS
# =========================

@dataclass(frozen=True)
class RankReport:
    rank_h: int
    rank_rx: int
    rank_tx: int
    bound: int

    @property
    def satisfied(self) -> bool:
        return self.rank_h <= self.bound


def rank_bound_check(ch: ChannelRealization, phases: RisPhases) -> RankReport:
    """rank(H) against min(rank(Hhat stacked), rank(Hbar stacked), N)."""
    rank_h = numerical_rank(effective_channel(ch, phases))
    rank_rx = numerical_rank(ch.stacked_rx())
    rank_tx = numerical_rank(ch.stacked_tx())
    return RankReport(rank_h=rank_h, rank_rx=rank_rx, rank_tx=rank_tx, bound=min(rank_rx, rank_tx, ch.n))


# =========================
# SERIALIZATION
# =========================

def dump_channel(ch: ChannelRealization, path: str, phases: Optional[RisPhases] = None) -> None:
    """Write a realization (and optionally phases) to the blob container."""
    blobs = {
        "k": np.array([ch.k]),
        "index": np.array([float(ch.index)]),
        "ris_elements": np.array(ch.ris_elements, dtype=np.float64),
    }
    for i in range(ch.num_ris):
        blobs[f"hbar_{i}"] = ch.tx_to_ris[i]
        blobs[f"hhat_{i}"] = ch.ris_to_rx[i]
        blobs[f"hbar_los_{i}"] = ch.los_tx_to_ris[i]
        blobs[f"hhat_los_{i}"] = ch.los_ris_to_rx[i]
    if phases is not None:
        blobs["v"] = phases.vector()
    write_blobs(path, blobs)


def load_channel(path: str) -> ChannelRealization:
    blobs = read_blobs(path)
    num_ris = int(blobs["ris_elements"].size)
    return ChannelRealization(
        tx_to_ris=[blobs[f"hbar_{i}"] for i in range(num_ris)],
        ris_to_rx=[blobs[f"hhat_{i}"] for i in range(num_ris)],
        los_tx_to_ris=[blobs[f"hbar_los_{i}"] for i in range(num_ris)],
        los_ris_to_rx=[blobs[f"hhat_los_{i}"] for i in range(num_ris)],
        k=float(blobs["k"][0]),
        index=int(blobs["index"][0]),
    )
