"""
AirFC Simulator - Target-Layer Emulation (Alternating Optimization)
===================================================================

Designs the precoder F1, combiner F2 and RIS reflection vector v so that the
over-the-air map F2 (H F1 x + n) + b mimics a digital FC layer W x + b.

Objective:  ||F2 H F1 - W||_F^2  (weight error)  +  sigma^2 tr(F2 F2^H)  (bias error)
subject to ||F1||_F^2 <= P_max and |v_m| = 1 (or |v_m| <= 1 in relaxed mode).

Blocks (each one never increases the objective):
- Precoder: regularized least squares with a Lagrange multiplier found by
  bisection on the eigendecomposed power expression.
- Combiner: closed-form Wiener-type solution.
- Phases: majorization-minimization on the quadratic form in v (unit mode) or
  projected gradient on the disk (relaxed mode).

Complexity per outer iteration is dominated by the N x N / M x M
eigendecompositions: O(log2(lambda_up/eps) N^3 + N^3 + M^3) with the cached
precoder eigendecomposition.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from airfc_modules.channel import (
    ChannelRealization,
    RisPhases,
    SystemConfig,
    effective_channel,
    random_phases,
)
from airfc_modules.numerics import fro2, herm, hermitian_eig, pinv_apply, psd_solve
from shared_modules.blob_io import read_blobs, write_blobs
from shared_modules.config import (
    BISECTION_MAX_ITER,
    BISECTION_TOL,
    INNER_MAX_ITER,
    INNER_TOL,
    OUTER_MAX_ITER,
    OUTER_TOL,
)
from shared_modules.errors import DimensionMismatch


# =========================
# DATA CONTAINERS
# =========================

@dataclass
class TargetLayer:
    """Digital complex FC layer y = W x + b being emulated."""
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128).reshape(-1)
        if self.W.ndim != 2 or self.W.shape[0] != self.W.shape[1] or self.b.size != self.W.shape[0]:
            raise DimensionMismatch(f"TargetLayer needs square W and matching b, got {self.W.shape}, {self.b.shape}")
        if not np.all(np.isfinite(self.W)):
            raise ValueError("TargetLayer.W contains NaN/Inf entries")

    @property
    def n(self) -> int:
        return self.W.shape[0]


@dataclass
class TransmissionParams:
    """Over-the-air 'weights': precoder, combiner and RIS reflection vector(s)."""
    F1: np.ndarray
    F2: np.ndarray
    phases: RisPhases


@dataclass
class EmulationReport:
    weight_error: float
    bias_error: float
    sum_error: float
    iterations: int = 0
    objective_trace: List[float] = field(default_factory=list)
    converged: bool = True

    def as_record(self) -> dict:
        """JSON record with the documented keys."""
        return {
            "weight_error": self.weight_error,
            "bias_error": self.bias_error,
            "sum_error": self.sum_error,
            "iterations": self.iterations,
        }


@dataclass
class PrecoderSolution:
    F1: np.ndarray
    lam: float
    lambda_up: float
    power: float


# =========================
# OBJECTIVE
# =========================

def _check_square(name: str, a: np.ndarray, n: int) -> None:
    if a.shape != (n, n):
        raise DimensionMismatch(f"{name} must be {n}x{n}, got {a.shape}")


def sum_error(params: TransmissionParams, ch: ChannelRealization, target: TargetLayer, sigma2: float) -> EmulationReport:
    """Single-shot evaluation of the emulation objective."""
    n = target.n
    _check_square("F1", params.F1, n)
    _check_square("F2", params.F2, n)
    if ch.n != n:
        raise DimensionMismatch(f"Channel dimension {ch.n} != target dimension {n}")
    h = effective_channel(ch, params.phases)
    weight = fro2(params.F2 @ h @ params.F1 - target.W)
    bias = float(sigma2) * fro2(params.F2)
    total = weight + bias
    return EmulationReport(weight_error=weight, bias_error=bias, sum_error=total, objective_trace=[total])


def emulate_forward(params: TransmissionParams, ch: ChannelRealization, target: TargetLayer,
                    x: np.ndarray, noise: Optional[np.ndarray] = None) -> np.ndarray:
    """y = F2 (H F1 x + n) + b for column-batched x (N x B)."""
    h = effective_channel(ch, params.phases)
    r = h @ (params.F1 @ x)
    if noise is not None:
        r = r + noise
    return params.F2 @ r + target.b[:, None]


# =========================
# PRECODER (LAGRANGE DUAL + BISECTION)
# =========================

def solve_precoder(upsilon: np.ndarray, W: np.ndarray, p_max: float,
                   tol: float = BISECTION_TOL, max_iter: int = BISECTION_MAX_ITER) -> PrecoderSolution:
    """
    min ||Upsilon F1 - W||_F^2  s.t. ||F1||_F^2 <= P_max.

    F1(lam) = (Upsilon^H Upsilon + lam I)^-1 Upsilon^H W. With
    Upsilon^H Upsilon = U diag(s) U^H and B = U^H Upsilon^H W, the power is
    sum_i ||B_i||^2 / (s_i + lam)^2, which is decreasing in lam. One
    eigendecomposition serves every bisection step.
    """
    eig = hermitian_eig(herm(upsilon) @ upsilon)
    rhs = herm(upsilon) @ W
    b_rot = herm(eig.U) @ rhs
    d = np.sum(np.abs(b_rot) ** 2, axis=1)
    s = eig.eigenvalues

    def power(lam: float) -> float:
        denom = s + lam
        keep = denom > 0
        return float(np.sum(d[keep] / denom[keep] ** 2))

    lambda_up = math.sqrt(float(np.sum(d)) / p_max)

    f1_free = pinv_apply(eig, rhs)
    p_free = fro2(f1_free)
    if p_free <= p_max:
        return PrecoderSolution(F1=f1_free, lam=0.0, lambda_up=lambda_up, power=p_free)

    # power(lo) > P_max >= power(hi) throughout
    lo, hi = 0.0, lambda_up
    p_hi = power(hi)
    for _ in range(max_iter):
        if p_max - p_hi <= tol * p_max:
            break
        mid = 0.5 * (lo + hi)
        p_mid = power(mid)
        if p_mid > p_max:
            lo = mid
        else:
            hi, p_hi = mid, p_mid
    lam = hi

    f1 = pinv_apply(eig, rhs, shift=lam)
    return PrecoderSolution(F1=f1, lam=lam, lambda_up=lambda_up, power=fro2(f1))


def update_precoder(F2: np.ndarray, phases: RisPhases, ch: ChannelRealization,
                    target: TargetLayer, p_max: float) -> np.ndarray:
    """Optimal F1 for fixed (F2, v)."""
    upsilon = F2 @ effective_channel(ch, phases)
    return solve_precoder(upsilon, target.W, p_max).F1


# =========================
# COMBINER (CLOSED FORM)
# =========================

def update_combiner(F1: np.ndarray, phases: RisPhases, ch: ChannelRealization,
                    target: TargetLayer, sigma2: float) -> np.ndarray:
    """
    F2 = W Ub^H (Ub Ub^H + sigma^2 I)^-1 with Ub = H F1.

    Solved as the Hermitian system (Ub Ub^H + sigma^2 I) F2^H = Ub W^H;
    sigma^2 = 0 falls back to pseudo-inverse semantics.
    """
    ubar = effective_channel(ch, phases) @ F1
    gram = ubar @ herm(ubar)
    return herm(psd_solve(gram, ubar @ herm(target.W), reg=float(sigma2)))


# =========================
# PHASES (QUADRATIC FORM + MM / PROJECTED GRADIENT)
# =========================

def build_quadratic_form(F1: np.ndarray, F2: np.ndarray, ch: ChannelRealization,
                         target: TargetLayer) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    ||F2 Hhat diag(v) Hbar F1 - W||_F^2 = v^H Omega v - 2 Re{v^T phi} + const

    Omega = (A^H A) o (Bm Bm^H)^T, phi_m = [Bm W^H A]_mm, const = tr(W W^H),
    with A = F2 Hhat (N x M) and Bm = Hbar F1 (M x N) over the stacked RIS channels.
    """
    n = target.n
    _check_square("F1", F1, n)
    _check_square("F2", F2, n)
    a = F2 @ ch.stacked_rx()
    bm = ch.stacked_tx() @ F1
    omega = (herm(a) @ a) * (bm @ herm(bm)).T
    omega = 0.5 * (omega + herm(omega))
    phi = np.einsum("mn,nm->m", bm @ herm(target.W), a)
    const = fro2(target.W)
    return omega, phi, const


def quadratic_value(v: np.ndarray, omega: np.ndarray, phi: np.ndarray, const: float) -> float:
    return float(np.vdot(v, omega @ v).real - 2.0 * np.real(v @ phi) + const)


def mm_surrogate(v: np.ndarray, v_ref: np.ndarray, omega: np.ndarray, lam_max: float) -> float:
    """Upper bound of v^H Omega v that is tight at v = v_ref (unit-modulus v)."""
    a = lam_max * np.eye(omega.shape[0]) - omega
    return float(lam_max * v.size
                 - 2.0 * np.real(np.vdot(v, a @ v_ref))
                 + np.vdot(v_ref, a @ v_ref).real)


def update_phases_mm(v_current: np.ndarray, omega: np.ndarray, phi: np.ndarray,
                     tol: float = INNER_TOL, max_iter: int = INNER_MAX_ITER) -> np.ndarray:
    """
    Repeated MM steps  v <- exp(j arg((lam_max I - Omega) v + phi^*)).

    With phi defined as in build_quadratic_form the linear term is
    -2 Re{v^H phi^*}, so phi^* enters the surrogate minimizer with a plus sign.
    Entries whose argument is exactly zero keep their current phase.
    """
    v = np.asarray(v_current, dtype=np.complex128).copy()
    lam_max = hermitian_eig(omega).lambda_max
    a = lam_max * np.eye(omega.shape[0]) - omega
    f_old = quadratic_value(v, omega, phi, 0.0)
    for _ in range(max_iter):
        c = a @ v + np.conj(phi)
        nonzero = np.abs(c) > 0
        v_new = v.copy()
        v_new[nonzero] = np.exp(1j * np.angle(c[nonzero]))
        f_new = quadratic_value(v_new, omega, phi, 0.0)
        if f_new > f_old:
            break
        improvement = f_old - f_new
        v, f_old = v_new, f_new
        if improvement <= tol * max(abs(f_new), 1.0):
            break
    return v


def _project_disk(v: np.ndarray) -> np.ndarray:
    mag = np.abs(v)
    scale = np.ones_like(mag)
    over = mag > 1.0
    scale[over] = 1.0 / mag[over]
    return v * scale


def update_phases_relaxed(v_current: np.ndarray, omega: np.ndarray, phi: np.ndarray,
                          tol: float = INNER_TOL, max_iter: int = INNER_MAX_ITER) -> np.ndarray:
    """
    Projected gradient on the unit disk with step 1/lam_max(Omega):
        v <- P(v - (Omega v - phi^*) / lam_max),  P(v)_m = v_m min(1, 1/|v_m|).

    Omega = 0 leaves a linear objective whose disk minimizer is phi^*/|phi|
    (entries with phi_m = 0 keep their current value).
    """
    v = _project_disk(np.asarray(v_current, dtype=np.complex128).copy())
    lam_max = hermitian_eig(omega).lambda_max
    if lam_max <= 0.0:
        target = np.conj(phi)
        mag = np.abs(target)
        out = v.copy()
        out[mag > 0] = target[mag > 0] / mag[mag > 0]
        return out

    f_old = quadratic_value(v, omega, phi, 0.0)
    step = 1.0 / lam_max
    for _ in range(max_iter):
        v_new = _project_disk(v - step * (omega @ v - np.conj(phi)))
        f_new = quadratic_value(v_new, omega, phi, 0.0)
        if f_new > f_old:
            break
        improvement = f_old - f_new
        v, f_old = v_new, f_new
        if improvement <= tol * max(abs(f_new), 1.0):
            break
    return v


def update_phases(params: TransmissionParams, ch: ChannelRealization, target: TargetLayer,
                  mode: str = "unit") -> RisPhases:
    omega, phi, _ = build_quadratic_form(params.F1, params.F2, ch, target)
    v0 = params.phases.vector()
    if mode == "unit":
        v = update_phases_mm(v0, omega, phi)
    else:
        v = update_phases_relaxed(v0, omega, phi)
    return RisPhases.from_vector(v, params.phases.sizes, mode=mode)


# =========================
# ALGORITHM 1 (OUTER LOOP)
# =========================

def _objective(params: TransmissionParams, ch: ChannelRealization, target: TargetLayer, sigma2: float) -> float:
    return sum_error(params, ch, target, sigma2).sum_error


def run_algorithm1(cfg: SystemConfig, ch: ChannelRealization, target: TargetLayer, mode: str = "unit",
                   tol: float = OUTER_TOL, max_iter: int = OUTER_MAX_ITER,
                   rng: Optional[np.random.Generator] = None) -> Tuple[TransmissionParams, EmulationReport]:
    """
    Alternating optimization precoder -> combiner -> phases until the relative
    objective decrease falls below tol (or max_iter outer iterations).

    Start: random unit-modulus phases, F1 = sqrt(P_max/N) I, F2 from the
    combiner update. objective_trace holds the start value and one entry per
    block update. A block result that would raise the objective (round-off
    only) is discarded in favour of the current iterate.
    """
    if mode not in ("unit", "relaxed"):
        raise ValueError(f"mode must be 'unit' or 'relaxed', got {mode!r}")
    if ch.n != target.n or cfg.n != target.n:
        raise DimensionMismatch(f"Dimensions disagree: cfg N={cfg.n}, channel N={ch.n}, target N={target.n}")
    if rng is None:
        rng = np.random.default_rng([cfg.seed, ch.index, 1])

    n = target.n
    phases = random_phases(ch.ris_elements, rng)
    if mode == "relaxed":
        phases = RisPhases(phases.values, mode="relaxed")
    f1 = math.sqrt(cfg.p_max / n) * np.eye(n, dtype=np.complex128)
    f2 = update_combiner(f1, phases, ch, target, cfg.sigma2)
    params = TransmissionParams(F1=f1, F2=f2, phases=phases)

    current = _objective(params, ch, target, cfg.sigma2)
    trace = [current]
    iterations = 0
    converged = False

    for iterations in range(1, max_iter + 1):
        outer_start = current

        candidate = TransmissionParams(update_precoder(params.F2, params.phases, ch, target, cfg.p_max),
                                       params.F2, params.phases)
        params, current = _accept(params, candidate, current, ch, target, cfg.sigma2)
        trace.append(current)

        candidate = TransmissionParams(params.F1, update_combiner(params.F1, params.phases, ch, target, cfg.sigma2),
                                       params.phases)
        params, current = _accept(params, candidate, current, ch, target, cfg.sigma2)
        trace.append(current)

        candidate = TransmissionParams(params.F1, params.F2, update_phases(params, ch, target, mode))
        params, current = _accept(params, candidate, current, ch, target, cfg.sigma2)
        trace.append(current)

        if outer_start <= 0.0 or (outer_start - current) / outer_start < tol:
            converged = True
            break

    final = sum_error(params, ch, target, cfg.sigma2)
    final.iterations = iterations
    final.objective_trace = trace
    final.converged = converged
    return params, final


def _accept(params: TransmissionParams, candidate: TransmissionParams, current: float,
            ch: ChannelRealization, target: TargetLayer, sigma2: float) -> Tuple[TransmissionParams, float]:
    value = _objective(candidate, ch, target, sigma2)
    if value <= current:
        return candidate, value
    return params, current


# =========================
# SERIALIZATION
# =========================

def dump_params(params: TransmissionParams, path: str) -> None:
    write_blobs(path, {
        "F1": params.F1,
        "F2": params.F2,
        "v": params.phases.vector(),
        "ris_elements": np.array(params.phases.sizes, dtype=np.float64),
        "relaxed": np.array([1.0 if params.phases.mode == "relaxed" else 0.0]),
    })


def load_params(path: str) -> TransmissionParams:
    blobs = read_blobs(path)
    sizes = tuple(int(s) for s in blobs["ris_elements"])
    mode = "relaxed" if blobs["relaxed"][0] > 0 else "unit"
    return TransmissionParams(F1=blobs["F1"], F2=blobs["F2"],
                              phases=RisPhases.from_vector(blobs["v"], sizes, mode=mode))
