"""Time evolution under the full and the effective Hamiltonian."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .effective import EffectiveModel
from .fock import ModelParams, build_full_hamiltonian, check_normalized


@dataclass(frozen=True)
class BlochState:
    """Probe state cos(theta/2)|up> + exp(i phi) sin(theta/2)|down>."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        theta, phi = float(self.theta), float(self.phi)
        if not 0.0 <= theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi], got {theta}")
        if not math.isfinite(phi):
            raise ValueError("phi must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def plus(cls) -> "BlochState":
        return cls(math.pi / 2, 0.0)

    def amplitudes(self) -> np.ndarray:
        return np.array([math.cos(self.theta / 2),
                         np.exp(1j * self.phi) * math.sin(self.theta / 2)], dtype=complex)

    def to_fock(self, n_bosons: int) -> np.ndarray:
        """Embed into the occupation basis: index 0 is |up>, index N is |down>."""
        if n_bosons < 1:
            raise ValueError("n_bosons must be ≥ 1")
        psi = np.zeros(n_bosons + 1, dtype=complex)
        c_up, c_down = self.amplitudes()
        psi[0] += c_up
        psi[n_bosons] += c_down
        return psi


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    p_up: np.ndarray
    p_down: np.ndarray
    leakage: Optional[np.ndarray] = None


def evolve_full(params: ModelParams, initial: np.ndarray, times: Sequence[float]) -> list:
    """exp(-i H_org t) |initial> for each t, from one Hermitian eigendecomposition."""
    psi0 = check_normalized(initial)
    if psi0.shape != (params.dim,):
        raise ValueError(f"initial state has length {psi0.shape[0]}, expected {params.dim}")
    energies, vecs = np.linalg.eigh(build_full_hamiltonian(params))
    coeffs = vecs.conj().T @ psi0
    times = np.atleast_1d(np.asarray(times, dtype=float))
    phases = np.exp(-1j * np.outer(times, energies))
    states = (phases * coeffs) @ vecs.T
    return list(states)


def full_time_series(params: ModelParams, initial: np.ndarray, times: Sequence[float]) -> TimeSeries:
    """Populations of |up> (index 0) and |down> (index N) plus the leakage out of them."""
    states = np.array(evolve_full(params, initial, times))
    pops = np.abs(states) ** 2
    p_up = pops[:, 0]
    p_down = pops[:, -1]
    return TimeSeries(np.asarray(times, dtype=float), p_up, p_down, 1.0 - p_up - p_down)


def propagator_effective(model: EffectiveModel, omega_t):
    """Closed-form exp(-i H_eff t), shape (..., 2, 2), given the phase omega*t."""
    wt = np.asarray(omega_t, dtype=float)
    c = np.cos(wt / 2)
    s = np.sin(wt / 2)
    nx = 2.0 * model.j_eff / model.omega
    nz = -model.delta_big / model.omega
    u = np.empty(wt.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * s * nz
    u[..., 1, 1] = c + 1j * s * nz
    u[..., 0, 1] = -1j * s * nx
    u[..., 1, 0] = -1j * s * nx
    return u


def effective_amplitudes(model: EffectiveModel, initial: BlochState, times) -> np.ndarray:
    """(C_up(t), C_down(t)) as an array of shape (len(times), 2)."""
    wt = model.omega * np.atleast_1d(np.asarray(times, dtype=float))
    return propagator_effective(model, wt) @ initial.amplitudes()


def p_up_effective(model: EffectiveModel, theta, phi, omega_t):
    """Population of |up> from the closed form; broadcasts over its array arguments."""
    g = model.gamma
    root = math.sqrt(4.0 + g * g)
    half_t = np.asarray(omega_t) / 2
    ch, sh = np.cos(np.asarray(theta) / 2), np.sin(np.asarray(theta) / 2)
    real_part = np.cos(half_t) * ch + 2.0 * model.sign * sh * np.sin(half_t) * np.sin(phi) / root
    imag_sq = np.sin(half_t) ** 2 / (4.0 + g * g) * (g * ch - 2.0 * sh * np.cos(phi)) ** 2
    return real_part**2 + imag_sq


def evolve_effective(model: EffectiveModel, initial: BlochState, times: Sequence[float]) -> TimeSeries:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    p_up = p_up_effective(model, initial.theta, initial.phi, model.omega * times)
    return TimeSeries(times, p_up, 1.0 - p_up)


def p_down_plus_state(model: EffectiveModel, t):
    """P_down(t) = 1/2 + (Gamma - Gamma cos(omega t)) / (4 + Gamma^2) from |+>."""
    g = model.gamma
    return 0.5 + (g - g * np.cos(model.omega * np.asarray(t, dtype=float))) / (4.0 + g * g)


def p_max(model: EffectiveModel) -> float:
    """Maximum tunneling probability (2 + Gamma)^2 / (2 (4 + Gamma^2)), reached at omega t = pi."""
    g = model.gamma
    return (2.0 + g) ** 2 / (2.0 * (4.0 + g * g))


def bloch_vector(amplitudes: np.ndarray) -> np.ndarray:
    """Pseudo-spin expectation (x, y, z) with |up> at the north pole."""
    amps = np.asarray(amplitudes)
    c_up, c_down = amps[..., 0], amps[..., 1]
    cross = np.conj(c_up) * c_down
    return np.stack([2 * cross.real, 2 * cross.imag, np.abs(c_up) ** 2 - np.abs(c_down) ** 2], axis=-1)


def bloch_trajectory(model: EffectiveModel, initial: BlochState, times: Sequence[float]) -> np.ndarray:
    return bloch_vector(effective_amplitudes(model, initial, times))


def default_time_grid(model: EffectiveModel, count: int = 400) -> np.ndarray:
    """Uniform grid over one effective period."""
    return np.linspace(0.0, model.period, count)
