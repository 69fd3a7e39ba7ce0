"""Classical and quantum Fisher information for the many-body detuning Delta0.

All information values are with respect to Delta0 (units 1/energy^2).
Values with respect to the bare detuning delta0 follow from the exact factor
N^2, uncertainties from the factor N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import BlochState, effective_amplitudes, evolve_full, p_up_effective
from .effective import EffectiveModel
from .fock import ModelParams


class DerivativeResolutionError(ArithmeticError):
    """Finite-difference estimates at two step sizes disagree."""


@dataclass(frozen=True)
class Tolerances:
    fd_step_rel: float = 1e-5
    richardson_tol: float = 1e-4
    prob_floor: float = 1e-12
    deriv_floor: float = 1e-10

    def as_dict(self) -> dict:
        return {"fd_step_rel": self.fd_step_rel, "richardson_tol": self.richardson_tol,
                "prob_floor": self.prob_floor, "deriv_floor": self.deriv_floor}


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class FisherSample:
    delta_big: float
    omega_t: float
    theta: float
    phi: float
    f_c: float
    f_q: float

    def __post_init__(self):
        if self.f_c < 0 or self.f_q < 0:
            raise ValueError("Fisher information must be nonnegative")
        if self.f_q < self.f_c - 1e-9 * max(1.0, self.f_q):
            raise ValueError(f"f_q = {self.f_q!r} < f_c = {self.f_c!r}")


@dataclass(frozen=True)
class PrecisionReport:
    delta_big_uncertainty: float
    delta0_uncertainty: float
    repetitions: int


# ---------------------------------------------------------------------------
# closed forms on the effective model


def _guarded_binary_cfi(p_small, dp2, omega, tol: Tolerances):
    """CFI of a two-outcome distribution (p_small, 1 - p_small) with |dp|^2 = dp2.

    An outcome with probability below ``prob_floor`` contributes only when its
    derivative, made dimensionless with ``omega``, exceeds ``deriv_floor``.
    """
    p_small = np.asarray(p_small, dtype=float)
    dp2 = np.asarray(dp2, dtype=float)
    resolved = np.sqrt(dp2) * abs(omega) > tol.deriv_floor
    small_term = np.where(resolved, dp2 / np.maximum(p_small, tol.prob_floor), 0.0)
    large_term = dp2 / (1.0 - p_small)
    return small_term + large_term


def _smaller_probability(q):
    # root of p(1-p) = q/4 below 1/2, in a cancellation-free form
    q = np.clip(q, 0.0, 1.0)
    return q / (2.0 * (1.0 + np.sqrt(1.0 - q)))


def cfi_surface(j_eff: float, gamma, theta, phi, omega_t, tol: Tolerances = DEFAULT_TOLERANCES):
    """F_c = F_C1 / F_C2 evaluated on broadcast arrays of (Gamma, theta, phi, omega t)."""
    j = float(j_eff)
    g, th, ph, wt = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (gamma, theta, phi, omega_t)))
    g2 = g * g
    a = 4.0 + g2
    root = np.sqrt(j * j * a)
    cos_wt, sin_wt = np.cos(wt), np.sin(wt)
    cos_th, sin_th = np.cos(th), np.sin(th)
    inner = (2 * j * g * cos_th * (2 * cos_wt - 2 + wt * sin_wt)
             + sin_th * (j * np.cos(ph) * ((g2 - 4) * (cos_wt - 1) + g2 * wt * sin_wt)
                         + g * root * (sin_wt - wt * cos_wt) * np.sin(ph)))
    f_c1 = 4.0 * inner**2
    bracket = (j * (g2 + 4 * cos_wt) * cos_th
               - 4 * j * g * np.cos(ph) * sin_th * np.sin(wt / 2) ** 2
               + 2 * root * sin_th * sin_wt * np.sin(ph))
    scale = j * j * a * a
    f_c2 = scale * (scale - bracket**2)

    q = f_c2 / scale**2  # = 4 P_up P_down
    p_small = _smaller_probability(q)
    dp2 = f_c1 / (4.0 * scale**2)
    omega = np.abs(j) * np.sqrt(a)
    boundary = p_small < tol.prob_floor
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = f_c1 / f_c2
    out = np.where(boundary, _guarded_binary_cfi(p_small, dp2, omega, tol), direct)
    return out if out.ndim else float(out)


def cfi_closed_form(model: EffectiveModel, state: BlochState, omega_t, tol: Tolerances = DEFAULT_TOLERANCES):
    """Analytic CFI of the {|up>, |down>} measurement at the given omega*t."""
    return cfi_surface(model.j_eff, model.gamma, state.theta, state.phi, omega_t, tol)


def cfi_plus_state(model: EffectiveModel, omega_t, tol: Tolerances = DEFAULT_TOLERANCES):
    """Specialization of the CFI to the probe state |+> (theta = pi/2, phi = 0)."""
    g2 = model.gamma**2
    a = 4.0 + g2
    wt = np.asarray(omega_t, dtype=float)
    half = wt / 2
    num = 16 * np.sin(half) ** 2 * (-g2 * wt * np.cos(half) + (g2 - 4) * np.sin(half)) ** 2
    den_shape = 16 + 2 * g2 + g2 * g2 - 2 * g2 * (np.cos(2 * wt) - 4 * np.cos(wt))
    j2 = model.j_eff**2
    q = den_shape / a**2
    p_small = _smaller_probability(q)
    dp2 = num / (4 * j2 * a**4)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = num / (j2 * a**2 * den_shape)
    out = np.where(p_small < tol.prob_floor,
                   _guarded_binary_cfi(p_small, dp2, model.omega, tol), direct)
    return out if out.ndim else float(out)


def cfi_at_optimum_time(state: BlochState, model: EffectiveModel) -> float:
    """cos^2(phi) / J_eff^2 at omega t = pi; requires Delta0 = 0."""
    if model.delta_big != 0.0:
        raise ValueError("cfi_at_optimum_time requires delta_big == 0")
    return math.cos(state.phi) ** 2 / model.j_eff**2


def cfi_zero_detuning(model: EffectiveModel, theta, omega_t):
    """CFI along the phi = 0 meridian at Delta0 = 0, as a function of theta and omega t.

    F_c = (1 - cos wt)^2 sin^2(theta) / (4 J^2 (1 - cos^2(theta) cos^2(wt)))
    """
    th = np.asarray(theta, dtype=float)
    wt = np.asarray(omega_t, dtype=float)
    cw = np.cos(wt)
    return -((cw - 1) ** 2) * np.sin(th) ** 2 / (4 * model.j_eff**2 * (np.cos(th) ** 2 * cw**2 - 1))


def cfi_gamma_optimal_params(model: EffectiveModel) -> float:
    """16 / (J^2 (4 + Gamma^2)^2): CFI of |+> at omega t = pi."""
    return 16.0 / (model.j_eff**2 * (4.0 + model.gamma**2) ** 2)


def qfi_effective(model: EffectiveModel) -> float:
    """QFI of |+> at omega t = pi."""
    g2 = model.gamma**2
    a = 4.0 + g2
    j2 = model.j_eff**2
    return 16.0 / (j2 * a**2) + g2 * g2 * math.pi**2 / (j2 * a**3)


def qfi_surface(j_eff: float, gamma, theta, phi, omega_t):
    """Pure-state QFI 4(<d psi|d psi> - |<psi|d psi>|^2) from the analytic derivative of the propagator.

    The derivative is taken with respect to Delta0 at fixed t, so omega t
    moves with Delta0 through omega.
    """
    j = float(j_eff)
    g, th, ph, wt = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (gamma, theta, phi, omega_t)))
    delta = g * j
    omega = np.abs(j) * np.sqrt(4.0 + g * g)
    c, s = np.cos(wt / 2), np.sin(wt / 2)
    nx, nz = 2 * j / omega, -delta / omega
    dphase = 0.5 * wt * delta / omega**2  # d(omega t / 2)/d Delta0
    dc, ds = -s * dphase, c * dphase
    dnx = -2 * j * delta / omega**3
    dnz = -4 * j * j / omega**3

    a_up = np.cos(th / 2)
    a_dn = np.exp(1j * ph) * np.sin(th / 2)
    psi_up = (c - 1j * s * nz) * a_up - 1j * s * nx * a_dn
    psi_dn = -1j * s * nx * a_up + (c + 1j * s * nz) * a_dn
    dx = ds * nx + s * dnx
    dz = ds * nz + s * dnz
    d_up = (dc - 1j * dz) * a_up - 1j * dx * a_dn
    d_dn = -1j * dx * a_up + (dc + 1j * dz) * a_dn
    norm2 = np.abs(d_up) ** 2 + np.abs(d_dn) ** 2
    overlap = np.conj(psi_up) * d_up + np.conj(psi_dn) * d_dn
    out = 4.0 * (norm2 - np.abs(overlap) ** 2)
    return out if out.ndim else float(out)


def qfi_closed_form(model: EffectiveModel, state: BlochState, omega_t):
    return qfi_surface(model.j_eff, model.gamma, state.theta, state.phi, omega_t)


def fisher_sample(model: EffectiveModel, state: BlochState, omega_t: float,
                  tol: Tolerances = DEFAULT_TOLERANCES) -> FisherSample:
    return FisherSample(model.delta_big, float(omega_t), state.theta, state.phi,
                        float(cfi_closed_form(model, state, omega_t, tol)),
                        float(qfi_closed_form(model, state, omega_t)))


# ---------------------------------------------------------------------------
# numerical routes


def richardson_derivative(fn: Callable, x: float, h: float, rel_tol: float = 1e-4):
    """Central difference at steps h and h/2 combined by one Richardson level.

    Returns (derivative, f(x)). Raises DerivativeResolutionError when the two
    central differences disagree by more than ``rel_tol`` relative, beyond
    the rounding-noise floor.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    f0 = np.asarray(fn(x))
    d_h = (np.asarray(fn(x + h)) - np.asarray(fn(x - h))) / (2 * h)
    d_h2 = (np.asarray(fn(x + h / 2)) - np.asarray(fn(x - h / 2))) / h
    gap = float(np.max(np.abs(d_h - d_h2), initial=0.0))
    size = float(max(np.max(np.abs(d_h), initial=0.0), np.max(np.abs(d_h2), initial=0.0)))
    noise = 1e3 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(f0), initial=0.0))) / h
    if gap > rel_tol * size + noise:
        raise DerivativeResolutionError(
            f"derivative unresolved at x={x!r}: steps h and h/2 differ by {gap:.3e} "
            f"(relative {gap / size if size else math.inf:.3e})")
    return (4 * d_h2 - d_h) / 3, f0


def cfi_numeric(probability_fn: Callable, delta_big: float, scale: Optional[float] = None,
                tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """sum_i (dP_i/dDelta0)^2 / P_i with Richardson-extrapolated central differences.

    ``probability_fn`` maps Delta0 to the outcome probabilities. ``scale`` is
    the characteristic energy (omega for MBCIT); the step is
    ``fd_step_rel * max(|Delta0|, scale)``.
    """
    base = max(abs(delta_big), abs(scale) if scale else 0.0)
    if base == 0.0:
        raise ValueError("a nonzero scale is required at delta_big = 0")
    h = tol.fd_step_rel * base
    dp, p = richardson_derivative(probability_fn, delta_big, h, tol.richardson_tol)
    dp = np.atleast_1d(dp)
    p = np.atleast_1d(p)
    total = 0.0
    for pi, dpi in zip(p, dp):
        if pi < tol.prob_floor:
            if abs(dpi) * base > tol.deriv_floor:
                total += dpi**2 / max(pi, tol.prob_floor)
        else:
            total += dpi**2 / pi
    return float(total)


def qfi_numeric(state_fn: Callable, delta0: float, scale: Optional[float] = None,
                n_bosons: Optional[int] = None, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Pure-state QFI with respect to Delta0 = N delta0.

    ``state_fn`` maps the bare detuning delta0 to a normalized state vector;
    the information is computed in delta0 and divided by N^2. ``n_bosons``
    defaults to len(state) - 1.
    """
    base = max(abs(delta0), abs(scale) if scale else 0.0)
    if base == 0.0:
        raise ValueError("a nonzero scale is required at delta0 = 0")
    h = tol.fd_step_rel * base
    dpsi, psi = richardson_derivative(state_fn, delta0, h, tol.richardson_tol)
    n = n_bosons if n_bosons is not None else psi.shape[0] - 1
    overlap = np.vdot(psi, dpsi)
    f_delta0 = 4.0 * (np.vdot(dpsi, dpsi).real - abs(overlap) ** 2)
    return float(max(f_delta0, 0.0) / n**2)


def effective_probability_fn(model: EffectiveModel, state: BlochState, t: float) -> Callable:
    """Delta0 -> (P_up, P_down) at fixed time t, with J_eff held fixed."""
    def probs(delta_big):
        m = model.with_delta_big(delta_big)
        p_up = float(p_up_effective(m, state.theta, state.phi, m.omega * t))
        return np.array([p_up, 1.0 - p_up])
    return probs


def effective_state_fn(model: EffectiveModel, state: BlochState, t: float) -> Callable:
    """delta0 -> effective two-level state at time t (Delta0 = N delta0)."""
    def evolved(delta0):
        m = model.with_delta_big(model.n_bosons * delta0)
        return effective_amplitudes(m, state, [t])[0]
    return evolved


def full_state_fn(params: ModelParams, initial: np.ndarray, t: float) -> Callable:
    """delta0 -> exp(-i H_org(delta0) t) |initial>."""
    def evolved(delta0):
        return evolve_full(params.replace(delta0=delta0), initial, [t])[0]
    return evolved


def full_probability_fn(params: ModelParams, initial: np.ndarray, t: float) -> Callable:
    """Delta0 -> populations of |N,0> and |0,N> under the full Hamiltonian at time t."""
    n = params.n_bosons
    evolved = full_state_fn(params, initial, t)

    def probs(delta_big):
        pops = np.abs(evolved(delta_big / n)) ** 2
        return np.array([pops[0], pops[n]])
    return probs


# ---------------------------------------------------------------------------
# precision and optimum


def precision_report(f: float, n_bosons: int, repetitions: int = 1) -> PrecisionReport:
    """Cramer-Rao bound 1/sqrt(nu F) on Delta0 and its image on delta0."""
    if not f > 0:
        raise ValueError(f"Fisher information must be positive, got {f!r}")
    if repetitions < 1 or int(repetitions) != repetitions:
        raise ValueError("repetitions must be a positive integer")
    if n_bosons < 1:
        raise ValueError("n_bosons must be ≥ 1")
    d_big = 1.0 / math.sqrt(repetitions * f)
    return PrecisionReport(d_big, d_big / n_bosons, int(repetitions))


@dataclass(frozen=True)
class OptimumGrid:
    """Search grid; ``gamma`` holds Delta0 / J_eff."""

    gamma: np.ndarray
    omega_t: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    @classmethod
    def default(cls) -> "OptimumGrid":
        return cls(gamma=np.linspace(-4.0, 4.0, 81),
                   omega_t=np.linspace(0.05, 2 * math.pi - 0.05, 81),
                   theta=np.linspace(0.0, math.pi, 19)[1:-1],
                   phi=np.linspace(0.0, 2 * math.pi, 17))


@dataclass(frozen=True)
class OptimumResult:
    delta_big: float
    omega_t: float
    theta: float
    phi: float
    value: float
    # rows of (delta_big, omega_t, theta, phi) within rel_tol of the maximum
    region: np.ndarray = field(repr=False)


def locate_optimum(model: EffectiveModel, grid: Optional[OptimumGrid] = None,
                   fc_fn: Optional[Callable] = None, rel_tol: float = 1e-9,
                   tol: Tolerances = DEFAULT_TOLERANCES) -> OptimumResult:
    """Grid argmax of F_c over (Delta0, omega t, theta, phi).

    ``fc_fn(delta_big, omega_t, theta, phi)`` must broadcast over arrays; it
    defaults to the closed-form CFI of ``model``'s coupling.

    The joint argmax over all four axes is not (0, pi) in general: away from
    |+>, the fixed-time information reaches about 1.46/J^2 near omega t = 2 pi
    at Gamma = +-1.4. Pass a grid with single-point theta/phi axes (or
    single-point Gamma/omega t axes) to search one slice at a time.
    """
    grid = grid or OptimumGrid.default()
    axes = [np.atleast_1d(np.asarray(a, dtype=float)) for a in (grid.gamma, grid.omega_t, grid.theta, grid.phi)]
    if any(a.size == 0 for a in axes):
        raise ValueError("optimum grid has an empty axis")
    g, wt, th, ph = np.meshgrid(*axes, indexing="ij")
    delta = g * model.j_eff
    if fc_fn is None:
        values = cfi_surface(model.j_eff, g, th, ph, wt, tol)
    else:
        values = np.asarray(fc_fn(delta, wt, th, ph), dtype=float)
    values = np.where(np.isfinite(values), values, -np.inf)
    best = float(values.max())
    idx = np.unravel_index(int(np.argmax(values)), values.shape)
    near = values >= best - rel_tol * abs(best)
    region = np.column_stack([delta[near], wt[near], th[near], ph[near]])
    return OptimumResult(float(delta[idx]), float(wt[idx]), float(th[idx]), float(ph[idx]), best, region)
