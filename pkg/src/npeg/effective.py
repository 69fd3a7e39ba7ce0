"""Engineered two-level model inside the {|N,0>, |0,N>} subspace."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fock import ModelParams, build_full_hamiltonian

# Below this |U/j| the leading-order coupling is not trustworthy.
VALIDITY_MIN_D = 5.0
_EXACT_FACTORIAL_MAX_N = 20


@dataclass(frozen=True)
class EffectiveModel:
    """Two-level model H = J_eff (|up><down| + h.c.) - (Delta0/2) sigma_z.

    ``gamma`` and ``omega`` are derived from ``j_eff`` and ``delta_big``.
    """

    j_eff: float
    delta_big: float
    gamma: float
    omega: float
    n_bosons: int = 1
    warning: Optional[str] = None

    @classmethod
    def from_coupling(cls, j_eff: float, delta_big: float = 0.0, n_bosons: int = 1,
                      warning: Optional[str] = None) -> "EffectiveModel":
        j_eff = float(j_eff)
        delta_big = float(delta_big)
        if j_eff == 0.0 or not math.isfinite(j_eff):
            raise ValueError("j_eff must be finite and nonzero")
        gamma = delta_big / j_eff
        omega = math.hypot(2.0 * j_eff, delta_big)
        return cls(j_eff, delta_big, gamma, omega, int(n_bosons), warning)

    @classmethod
    def from_gamma(cls, j_eff: float, gamma: float, n_bosons: int = 1) -> "EffectiveModel":
        return cls.from_coupling(j_eff, gamma * j_eff, n_bosons)

    def with_delta_big(self, delta_big: float) -> "EffectiveModel":
        return EffectiveModel.from_coupling(self.j_eff, delta_big, self.n_bosons, self.warning)

    def with_gamma(self, gamma: float) -> "EffectiveModel":
        return self.with_delta_big(gamma * self.j_eff)

    @property
    def sign(self) -> float:
        return math.copysign(1.0, self.j_eff)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega


def _log_factorial(n: int) -> float:
    return math.lgamma(n + 1)


def j_eff_closed_form(params: ModelParams) -> float:
    """N U / ((N-1)! D^N) with D = U/j.

    Exact integer factorials up to N = 20, log-domain accumulation beyond.
    """
    n = params.n_bosons
    u = params.interaction_u
    d = params.d_ratio
    if d == 0.0:
        raise ValueError("D = U/j must be nonzero")
    if n <= _EXACT_FACTORIAL_MAX_N:
        return n * u / (math.factorial(n - 1) * d**n)
    sign = math.copysign(1.0, u) * (math.copysign(1.0, d) ** n)
    log_mag = math.log(n) + math.log(abs(u)) - _log_factorial(n - 1) - n * math.log(abs(d))
    return sign * math.exp(log_mag)


def j_eff_perturbative(params: ModelParams) -> float:
    """Magnitude of the N-th order hopping chain |N,0> -> |N-1,1> -> ... -> |0,N>.

    Numerator: product of the N hopping matrix elements along the chain.
    Denominator: product of the N-1 intermediate energy gaps E(0) - E(m).
    Matrix elements are read off the assembled Hamiltonian, not from the
    closed form.
    """
    n = params.n_bosons
    h = build_full_hamiltonian(params.replace(delta0=0.0))
    log_num = 0.0
    for m in range(n):
        element = abs(h[m + 1, m].real)
        if element == 0.0:
            return 0.0
        log_num += math.log(element)
    # with delta0 = 0 the diagonal is the interaction energy alone
    e0 = h[0, 0].real
    log_den = 0.0
    for m in range(1, n):
        gap = e0 - h[m, m].real
        if gap == 0.0:
            raise ValueError(f"intermediate state m={m} is resonant; perturbation theory fails")
        log_den += math.log(abs(gap))
    return math.exp(log_num - log_den)


def build_effective_model(params: ModelParams, sign: float = 1.0) -> EffectiveModel:
    """Effective coupling, many-body detuning Delta0 = N delta0, Gamma and omega.

    ``sign`` multiplies the closed-form coupling; the overall sign of the
    N-th order process is a convention choice.
    """
    if sign not in (1, -1, 1.0, -1.0):
        raise ValueError("sign must be +1 or -1")
    j_eff = sign * j_eff_closed_form(params)
    warning = None
    if abs(params.d_ratio) < VALIDITY_MIN_D:
        warning = (f"|D| = {abs(params.d_ratio):.3g} < {VALIDITY_MIN_D:g}: the effective "
                   "two-level description assumes j << U")
    return EffectiveModel.from_coupling(j_eff, params.n_bosons * params.delta0,
                                        params.n_bosons, warning)


def build_effective_hamiltonian(model: EffectiveModel) -> np.ndarray:
    """2x2 matrix in the (up, down) basis."""
    return np.array([[-0.5 * model.delta_big, model.j_eff],
                     [model.j_eff, 0.5 * model.delta_big]], dtype=complex)


def full_model_splitting(params: ModelParams) -> float:
    """Splitting of the two full-model eigenstates closest to (|up> +- |down>)/sqrt(2).

    At zero detuning this is the exact counterpart of 2|J_eff|.
    """
    n = params.n_bosons
    energies, vecs = np.linalg.eigh(build_full_hamiltonian(params))
    plus = np.zeros(n + 1, dtype=complex)
    plus[0] = plus[n] = 1 / math.sqrt(2)
    minus = plus.copy()
    minus[n] = -minus[n]
    i_plus = int(np.argmax(np.abs(vecs.conj().T @ plus)))
    i_minus = int(np.argmax(np.abs(vecs.conj().T @ minus)))
    if i_plus == i_minus:
        raise ValueError("could not resolve the symmetric/antisymmetric doublet")
    return abs(energies[i_plus] - energies[i_minus])


__all__ = [
    "EffectiveModel", "VALIDITY_MIN_D", "build_effective_hamiltonian", "build_effective_model",
    "full_model_splitting", "j_eff_closed_form", "j_eff_perturbative",
]
