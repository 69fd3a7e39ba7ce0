"""End-to-end studies: compensation scans, Fisher maps, robustness, full-vs-effective, scaling, time cost."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .dynamics import BlochState, full_time_series, p_max
from .effective import EffectiveModel, build_effective_model, j_eff_closed_form
from .fisher import (
    DEFAULT_TOLERANCES,
    Tolerances,
    cfi_closed_form,
    cfi_gamma_optimal_params,
    cfi_numeric,
    cfi_plus_state,
    full_probability_fn,
    full_state_fn,
    precision_report,
    qfi_closed_form,
    qfi_effective,
    qfi_numeric,
)
from .fock import ModelParams

RESOLVABILITY_OFFSET = 1e-4
SWEEP_QUANTITIES = ("delta_cmp", "delta_big", "omega_t", "n_bosons", "theta")
SWEEP_OUTPUTS = ("p_max", "f_c", "f_q", "precision", "time_ratio")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, ModelParams):
        return {"n_bosons": value.n_bosons, "interaction_u": value.interaction_u,
                "hopping_j": value.hopping_j, "delta0": value.delta0}
    return value


@dataclass
class ScanRecord:
    """Tabular result of one study: one row per sweep point."""

    experiment: str
    columns: tuple
    rows: list
    inputs: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    engine_version: str = __version__

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.rows = [tuple(float(x) for x in row) for row in self.rows]
        self.inputs = _jsonable(self.inputs)
        self.summary = _jsonable(self.summary)
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row of length {len(row)} does not match {len(self.columns)} columns")

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows])

    def __len__(self):
        return len(self.rows)


# ---------------------------------------------------------------------------
# generic sweep


@dataclass(frozen=True)
class SweepSpec:
    base_params: ModelParams
    swept_quantity: str
    sweep_values: tuple
    outputs_requested: tuple = ("p_max", "f_c", "f_q")
    theta: float = math.pi / 2
    phi: float = 0.0
    omega_t: float = math.pi

    def __post_init__(self):
        if self.swept_quantity not in SWEEP_QUANTITIES:
            raise ValueError(f"swept_quantity must be one of {SWEEP_QUANTITIES}")
        unknown = set(self.outputs_requested) - set(SWEEP_OUTPUTS)
        if unknown or not self.outputs_requested:
            raise ValueError(f"outputs_requested must be a nonempty subset of {SWEEP_OUTPUTS}")
        values = np.asarray(self.sweep_values, dtype=float)
        object.__setattr__(self, "sweep_values", tuple(values.tolist()))
        if values.size == 0:
            raise ValueError("sweep_values must be nonempty")
        steps = np.diff(values)
        if steps.size and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("sweep_values must be strictly monotone")


def run_sweep(spec: SweepSpec, tol: Tolerances = DEFAULT_TOLERANCES) -> ScanRecord:
    """Evaluate the requested outputs at each sweep value.

    Everything not swept stays at the protocol defaults in ``spec``
    (the |+> probe read out at omega t = pi). For ``delta_cmp`` the base
    ``delta0`` plays the role of the to-be-measured detuning.
    """
    rows = []
    for value in spec.sweep_values:
        params, theta, wt = spec.base_params, spec.theta, spec.omega_t
        q = spec.swept_quantity
        if q == "delta_cmp":
            params = params.replace(delta0=params.delta0 + value)
        elif q == "delta_big":
            params = params.replace(delta0=value / params.n_bosons)
        elif q == "n_bosons":
            if value != int(value):
                raise ValueError("n_bosons sweep values must be integers")
            params = params.replace(n_bosons=int(value))
        elif q == "theta":
            theta = value
        elif q == "omega_t":
            wt = value
        model = build_effective_model(params)
        state = BlochState(theta, spec.phi)
        row = [value]
        for out in spec.outputs_requested:
            if out == "p_max":
                row.append(p_max(model))
            elif out == "f_c":
                row.append(cfi_closed_form(model, state, wt, tol))
            elif out == "f_q":
                row.append(qfi_closed_form(model, state, wt))
            elif out == "precision":
                f_c = cfi_closed_form(model, state, wt, tol)
                row.append(precision_report(f_c, params.n_bosons).delta0_uncertainty if f_c > 0 else math.inf)
            elif out == "time_ratio":
                row.append(time_cost_ratio(params.n_bosons, params.d_ratio))
        rows.append(row)
    return ScanRecord("sweep", (spec.swept_quantity,) + tuple(spec.outputs_requested), rows,
                      inputs={"base_params": spec.base_params, "swept_quantity": spec.swept_quantity,
                              "sweep_values": spec.sweep_values, "theta": spec.theta,
                              "phi": spec.phi, "omega_t": spec.omega_t},
                      tolerances=tol.as_dict())


# ---------------------------------------------------------------------------
# compensation scan


def default_delta_tbm(params: ModelParams) -> float:
    """0.5 J_eff / N: places the to-be-measured detuning at Gamma = 0.5."""
    return 0.5 * j_eff_closed_form(params) / params.n_bosons


def _check_monotone(values, name):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError(f"{name} must be nonempty")
    d = np.diff(v)
    if d.size and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError(f"{name} must be strictly monotone")
    return v


def compensation_scan(base: ModelParams, delta_tbm: float, cmp_values: Sequence[float],
                      offset: float = RESOLVABILITY_OFFSET, cmp_sign: float = 1.0) -> ScanRecord:
    """P_max versus the compensating detuning, for delta_TBM and (1 + offset) delta_TBM.

    The total bare detuning is delta0 = delta_TBM + cmp_sign * delta_CMP.
    """
    cmp_values = _check_monotone(cmp_values, "cmp_values")
    rows = []
    for d_cmp in cmp_values:
        delta0 = delta_tbm + cmp_sign * d_cmp
        model = build_effective_model(base.replace(delta0=delta0))
        shifted = build_effective_model(base.replace(delta0=(1 + offset) * delta_tbm + cmp_sign * d_cmp))
        p, p_shift = p_max(model), p_max(shifted)
        rows.append((d_cmp, delta0, model.gamma, p, p_shift, abs(p - p_shift)))
    gaps = [r[-1] for r in rows]
    return ScanRecord(
        "compensation_scan",
        ("delta_cmp", "delta0", "gamma", "p_max", "p_max_shifted", "gap"),
        rows,
        inputs={"base_params": base, "delta_tbm": delta_tbm, "offset": offset, "cmp_sign": cmp_sign},
        summary={"max_gap": max(gaps)},
    )


def resolvability_study(n_values: Iterable[int] = (2, 3, 4), u: float = 1.0, d: float = 20.0,
                        gamma_values: Optional[Sequence[float]] = None,
                        delta_tbm: Optional[float] = None,
                        offset: float = RESOLVABILITY_OFFSET) -> ScanRecord:
    """Compensation scans for several N on a shared Gamma grid and a shared delta_TBM.

    delta_TBM is one physical quantity for every probe number; by default it
    is 0.5 J_eff / N evaluated at the smallest N. For each N the compensating
    detuning is chosen so the total detuning lands on ``gamma_values``.
    """
    n_values = sorted(int(n) for n in n_values)
    if gamma_values is None:
        gamma_values = np.linspace(-4.0, 4.0, 81)
    gamma_values = _check_monotone(gamma_values, "gamma_values")
    if delta_tbm is None:
        delta_tbm = default_delta_tbm(ModelParams.from_ratio(n_values[0], u, d))
    rows, summary = [], {"max_gap": {}, "gap_at_gamma0": {}}
    for n in n_values:
        params = ModelParams.from_ratio(n, u, d)
        j_eff = j_eff_closed_form(params)
        cmp_values = gamma_values * j_eff / n - delta_tbm
        scan = compensation_scan(params, delta_tbm, cmp_values, offset)
        for g, row in zip(gamma_values, scan.rows):
            rows.append((n, g, row[0], row[3], row[5]))
        gaps = scan.column("gap")
        summary["max_gap"][str(n)] = float(gaps.max())
        summary["gap_at_gamma0"][str(n)] = float(np.interp(0.0, gamma_values, gaps)) \
            if gamma_values[0] < gamma_values[-1] else float(np.interp(0.0, gamma_values[::-1], gaps[::-1]))
    return ScanRecord("resolvability", ("N", "gamma", "delta_cmp", "p_max", "gap"), rows,
                      inputs={"n_values": n_values, "u": u, "d": d, "delta_tbm": delta_tbm,
                              "offset": offset, "gamma_values": gamma_values},
                      summary=summary)


# ---------------------------------------------------------------------------
# Fisher landscape and robustness


def fisher_map(model: EffectiveModel, gamma_values: Sequence[float], omega_t_values: Sequence[float],
               tol: Tolerances = DEFAULT_TOLERANCES) -> ScanRecord:
    """CFI of |+> over (Gamma, omega t); ``f_c_scaled`` is in units of 1/J_eff^2."""
    gamma_values = np.asarray(gamma_values, dtype=float)
    omega_t_values = np.asarray(omega_t_values, dtype=float)
    if gamma_values.size == 0 or omega_t_values.size == 0:
        raise ValueError("fisher_map needs a nonempty grid")
    j2 = model.j_eff**2
    plus = BlochState.plus()
    rows = []
    for g in gamma_values:
        m = model.with_gamma(g)
        f_c = np.atleast_1d(cfi_plus_state(m, omega_t_values, tol))
        f_q = np.atleast_1d(qfi_closed_form(m, plus, omega_t_values))
        for wt, fc, fq in zip(omega_t_values, f_c, f_q):
            rows.append((g, m.delta_big, wt, fc, fc * j2, fq * j2))
    rec = ScanRecord("fisher_map", ("gamma", "delta_big", "omega_t", "f_c", "f_c_scaled", "f_q_scaled"),
                     rows, inputs={"j_eff": model.j_eff, "gamma_values": gamma_values,
                                   "omega_t_values": omega_t_values},
                     tolerances=tol.as_dict())
    scaled = rec.column("f_c_scaled")
    best = int(np.argmax(scaled))
    rec.summary = {"argmax_gamma": rec.rows[best][0], "argmax_omega_t": rec.rows[best][2],
                   "max_f_c_scaled": float(scaled[best])}
    return rec


def width_at_fraction(model: EffectiveModel, theta: float, fraction: float = 0.9) -> float:
    """Full width in omega t of the CFI peak at omega t = pi, at ``fraction`` of its height.

    Delta0 = 0 and phi = 0.
    """
    state = BlochState(theta, 0.0)
    peak = cfi_closed_form(model, state, math.pi)
    target = fraction * peak

    def excess(wt):
        return cfi_closed_form(model, state, wt) - target

    lo = brentq(excess, 1e-12, math.pi, xtol=1e-14)
    hi = brentq(excess, math.pi, 2 * math.pi - 1e-12, xtol=1e-14)
    return hi - lo


def robustness_traces(model: EffectiveModel, theta_values: Sequence[float],
                      omega_t_values: Sequence[float], tol: Tolerances = DEFAULT_TOLERANCES) -> ScanRecord:
    """F_c(omega t) for probe states on the phi = 0 meridian at zero detuning."""
    if model.delta_big != 0.0:
        raise ValueError("robustness traces require delta_big == 0")
    theta_values = [float(t) for t in theta_values]
    for th in theta_values:
        if th <= 0.0 or th >= math.pi:
            raise ValueError(f"theta must lie strictly inside (0, pi), got {th}")
    omega_t_values = np.asarray(omega_t_values, dtype=float)
    j2 = model.j_eff**2
    rows, widths, peaks = [], {}, {}
    for th in theta_values:
        state = BlochState(th, 0.0)
        f_c = np.atleast_1d(cfi_closed_form(model, state, omega_t_values, tol))
        rows.extend((th, wt, fc, fc * j2) for wt, fc in zip(omega_t_values, f_c))
        widths[repr(th)] = width_at_fraction(model, th)
        peaks[repr(th)] = float(cfi_closed_form(model, state, math.pi, tol) * j2)
    return ScanRecord("robustness", ("theta", "omega_t", "f_c", "f_c_scaled"), rows,
                      inputs={"j_eff": model.j_eff, "theta_values": theta_values,
                              "omega_t_values": omega_t_values},
                      summary={"width_90": widths, "peak_scaled": peaks},
                      tolerances=tol.as_dict())


# ---------------------------------------------------------------------------
# full versus effective


def _compare_point(params: ModelParams, j_eff: float, gamma: float, tol: Tolerances):
    n = params.n_bosons
    model = EffectiveModel.from_gamma(j_eff, gamma, n)
    t = math.pi / model.omega
    psi0 = BlochState.plus().to_fock(n)
    nominal = params.replace(delta0=model.delta_big / n)
    f_c_num = cfi_numeric(full_probability_fn(params, psi0, t), model.delta_big, model.omega, tol)
    f_q_num = qfi_numeric(full_state_fn(params, psi0, t), model.delta_big / n, model.omega / n, n, tol)
    f_c_an = cfi_gamma_optimal_params(model)
    f_q_an = qfi_effective(model)
    leak = float(full_time_series(nominal, psi0, [t]).leakage[0])
    return (gamma, model.delta_big / n, f_c_an, f_c_num, abs(f_c_num - f_c_an) / f_c_an,
            f_q_an, f_q_num, abs(f_q_num - f_q_an) / f_q_an, leak)


def default_compare_gammas() -> np.ndarray:
    # avoids Gamma = +-2, where P_up vanishes at omega t = pi
    return np.linspace(-3.9, 3.9, 27)


def compare_full_vs_effective(params: ModelParams, gamma_values: Optional[Sequence[float]] = None,
                              tol: Tolerances = DEFAULT_TOLERANCES,
                              max_workers: Optional[int] = None) -> ScanRecord:
    """Analytic CFI/QFI of the effective model against numerics on the full Hamiltonian at omega t = pi.

    ``params.delta0`` is ignored; each Gamma fixes delta0 = Gamma J_eff / N.
    """
    gamma_values = default_compare_gammas() if gamma_values is None else np.asarray(gamma_values, dtype=float)
    if gamma_values.size == 0:
        raise ValueError("gamma_values must be nonempty")
    j_eff = build_effective_model(params).j_eff
    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(lambda g: _compare_point(params, j_eff, g, tol), gamma_values))
    else:
        rows = [_compare_point(params, j_eff, g, tol) for g in gamma_values]
    rec = ScanRecord(
        "compare",
        ("gamma", "delta0", "f_c_analytic", "f_c_numeric", "f_c_rel_dev",
         "f_q_analytic", "f_q_numeric", "f_q_rel_dev", "leakage"),
        rows,
        inputs={"params": params, "gamma_values": gamma_values},
        tolerances=tol.as_dict(),
    )
    rec.summary = {"max_f_c_rel_dev": float(rec.column("f_c_rel_dev").max()),
                   "max_f_q_rel_dev": float(rec.column("f_q_rel_dev").max())}
    return rec


# ---------------------------------------------------------------------------
# scaling and time cost


def scaling_study(u: float, d: float, n_values: Iterable[int]) -> ScanRecord:
    """J_eff, optimal CFI and delta0 precision per N, with a log-linear fit.

    The fit regresses log(delta delta0) + log((N-1)!) on N; the expected
    slope is -log D and intercept log U.
    """
    n_values = [int(n) for n in n_values]
    if not n_values:
        raise ValueError("n_values must be nonempty")
    if min(n_values) < 1 or max(n_values) > 12:
        raise ValueError("n_values must lie within [1, 12]")
    rows = []
    for n in n_values:
        j_eff = j_eff_closed_form(ModelParams.from_ratio(n, u, d))
        f_opt = 1.0 / j_eff**2
        rows.append((n, j_eff, f_opt, precision_report(f_opt, n).delta0_uncertainty))
    rec = ScanRecord("scaling", ("N", "J_eff", "F_c_opt", "delta_delta0"), rows,
                     inputs={"u": u, "d": d, "n_values": n_values})
    if len(set(n_values)) >= 2:
        ns = np.array(n_values, dtype=float)
        y = np.log(rec.column("delta_delta0")) + np.array([math.lgamma(n) for n in n_values])
        slope, intercept = np.polyfit(ns, y, 1)
        rec.summary = {"fit_slope": float(slope), "fit_intercept": float(intercept),
                       "expected_slope": -math.log(abs(d)), "expected_intercept": math.log(abs(u))}
    return rec


def time_cost_ratio(n: int, d: float) -> float:
    """tau_nonlinear / tau_linear = 1 / ((N-1)! D^(N-1)) at equal precision."""
    if n < 1 or int(n) != n:
        raise ValueError("n must be a positive integer")
    if not d > 0:
        raise ValueError("d must be positive")
    n = int(n)
    if n <= 20:
        return 1.0 / (math.factorial(n - 1) * d ** (n - 1))
    return math.exp(-(math.lgamma(n) + (n - 1) * math.log(d)))


@dataclass(frozen=True)
class TimeCostBreakdown:
    n_bosons: int
    d: float
    m1: float
    m2: float
    delta1: float
    tau1: float
    delta2: float
    tau2: float

    @property
    def ratio(self) -> float:
        return self.tau2 / self.tau1


def time_cost_breakdown(n: int, d: float, m1: float = 1.0, u: float = 1.0) -> TimeCostBreakdown:
    """Linear (N single probes, m1 repetitions) versus nonlinear (one N-probe, m2 repetitions).

    m2 is fixed by equal precision: |j|/sqrt(N m1) = |J_eff|/(N sqrt(m2)).
    """
    if n < 1:
        raise ValueError("n must be ≥ 1")
    if not m1 > 0:
        raise ValueError("m1 must be positive")
    params = ModelParams.from_ratio(n, u, d)
    j = abs(params.hopping_j)
    j_eff = abs(j_eff_closed_form(params))
    delta1 = j / math.sqrt(n * m1)
    tau1 = m1 * math.pi / (2 * j)
    m2 = (j_eff / (n * delta1)) ** 2
    delta2 = j_eff / (n * math.sqrt(m2))
    tau2 = m2 * math.pi / (2 * j_eff)
    return TimeCostBreakdown(n, d, m1, m2, delta1, tau1, delta2, tau2)


def time_cost_record(n: int, d: float, m1: float = 1.0, u: float = 1.0) -> ScanRecord:
    b = time_cost_breakdown(n, d, m1, u)
    return ScanRecord("time_cost", ("N", "D", "ratio", "m1", "m2", "delta1", "delta2", "tau1", "tau2"),
                      [(n, d, time_cost_ratio(n, d), b.m1, b.m2, b.delta1, b.delta2, b.tau1, b.tau2)],
                      inputs={"n": n, "d": d, "m1": m1, "u": u},
                      summary={"ratio_from_breakdown": b.ratio})
