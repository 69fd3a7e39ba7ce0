"""Two-mode Bose-Hubbard model at fixed particle number.

Basis index ``m`` counts the bosons in mode b, so index 0 is ``|N, 0>``
(all bosons in mode a, the "up" collective state) and index N is ``|0, N>``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-14
NORM_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Physical inputs of the original two-mode Hamiltonian (hbar = 1)."""

    n_bosons: int
    interaction_u: float
    hopping_j: float
    delta0: float = 0.0

    def __post_init__(self):
        if isinstance(self.n_bosons, bool) or int(self.n_bosons) != self.n_bosons:
            raise ValueError(f"n_bosons must be an integer, got {self.n_bosons!r}")
        object.__setattr__(self, "n_bosons", int(self.n_bosons))
        if self.n_bosons < 1:
            raise ValueError("n_bosons must be ≥ 1")
        for name in ("interaction_u", "hopping_j", "delta0"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.hopping_j == 0.0:
            raise ValueError("hopping_j must be nonzero")
        if not math.isfinite(self.d_ratio):
            raise ValueError("interaction_u / hopping_j is not finite")

    @property
    def d_ratio(self) -> float:
        """D = U/j."""
        return self.interaction_u / self.hopping_j

    @property
    def dim(self) -> int:
        return self.n_bosons + 1

    @classmethod
    def from_ratio(cls, n_bosons: int, interaction_u: float, d_ratio: float, delta0: float = 0.0):
        if d_ratio == 0 or not math.isfinite(d_ratio):
            raise ValueError("d_ratio must be finite and nonzero")
        return cls(n_bosons, interaction_u, interaction_u / d_ratio, delta0)

    def replace(self, **changes) -> "ModelParams":
        fields = dict(n_bosons=self.n_bosons, interaction_u=self.interaction_u,
                      hopping_j=self.hopping_j, delta0=self.delta0)
        fields.update(changes)
        return ModelParams(**fields)


def interaction_energy(params: ModelParams, m: int) -> float:
    """(U/2)[(N-m)(N-m-1) + m(m-1)] for the basis state |N-m, m>."""
    n = params.n_bosons
    if not 0 <= m <= n:
        raise ValueError(f"m must lie in [0, {n}], got {m}")
    return 0.5 * params.interaction_u * ((n - m) * (n - m - 1) + m * (m - 1))


def hopping_element(params: ModelParams, m: int) -> float:
    # <N-m-1, m+1| j (a b^dag + a^dag b) |N-m, m>
    n = params.n_bosons
    if not 0 <= m < n:
        raise ValueError(f"m must lie in [0, {n - 1}], got {m}")
    return params.hopping_j * math.sqrt((m + 1) * (n - m))


def interaction_matrix(params: ModelParams) -> np.ndarray:
    n = params.n_bosons
    return np.diag([interaction_energy(params, m) for m in range(n + 1)]).astype(complex)


def hopping_matrix(params: ModelParams) -> np.ndarray:
    n = params.n_bosons
    off = np.array([hopping_element(params, m) for m in range(n)])
    return (np.diag(off, 1) + np.diag(off, -1)).astype(complex)


def detuning_matrix(params: ModelParams) -> np.ndarray:
    m = np.arange(params.n_bosons + 1)
    return np.diag(-0.5 * params.delta0 * (params.n_bosons - 2 * m)).astype(complex)


def number_operator_b(n_bosons: int) -> np.ndarray:
    return np.diag(np.arange(n_bosons + 1, dtype=float)).astype(complex)


def build_full_hamiltonian(params: ModelParams) -> np.ndarray:
    """Dense (N+1)x(N+1) matrix of the original Hamiltonian.

    H = (U/2)(a+a+aa + b+b+bb) + j(a+b + ab+) - (delta0/2)(n_a - n_b)
    """
    h = interaction_matrix(params) + hopping_matrix(params) + detuning_matrix(params)
    assert_hermitian(h)
    return h


def assert_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    err = np.max(np.abs(matrix - matrix.conj().T), initial=0.0)
    if err > tol:
        raise ValueError(f"matrix is not Hermitian (max deviation {err:.3e})")


def basis_state(n_bosons: int, m: int) -> np.ndarray:
    """Fock vector |N-m, m>."""
    if not 0 <= m <= n_bosons:
        raise ValueError(f"m must lie in [0, {n_bosons}], got {m}")
    psi = np.zeros(n_bosons + 1, dtype=complex)
    psi[m] = 1.0
    return psi


def check_normalized(psi: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError("a Fock vector must be one-dimensional")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"state is not normalized (norm = {norm!r})")
    return psi
