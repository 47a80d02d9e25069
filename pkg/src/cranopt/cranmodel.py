"""Downlink C-RAN system model and feasibility-guaranteed solution recovery.

An instance has m single-antenna APs jointly serving k single-antenna users
through a fronthaul of per-AP capacity C bits/symbol. A solution is the pair
(v, omega): beamformer matrix v (m, k) complex128 (column per user) and
quantization noise powers omega (m,). Rates follow the Gaussian
test-channel model: user k sees its own signal |h_k^H v_k|^2 against unit
receiver noise, quantization leakage sum_i omega_i |h_ik|^2 and cross
interference sum_{l != k} |h_k^H v_l|^2.

Constraints per AP i, with beta = 2**C - 1:

- transmit power:  sum_l |v_il|^2 + omega_i <= P
- fronthaul:       sum_l |v_il|^2 <= beta * omega_i

``recover_solution`` maps ANY positive parameter triple (p, lam, mu) to a
feasible (v, omega): directions come from a regularized-inverse solve,
per-user powers from p, then one global scale pins the loudest AP at
P_eff = P / (1 + 1/beta) and omega_i = (per-AP power) / beta makes the
fronthaul constraint tight while the power constraint holds with slack
exactly at non-loudest APs.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .channel import ChannelSample
from .errors import DegenerateInputError
from .linalg import DefinitenessError


class IntermediateParams(NamedTuple):
    """Positive parameterization of a solution: per-user powers ``p`` (k,),
    direction weights ``lam`` (k,), regularizers ``mu`` (m,)."""

    p: np.ndarray
    lam: np.ndarray
    mu: np.ndarray


@dataclass(frozen=True, eq=False)
class SystemInstance:
    """A channel sample paired with its derived fronthaul gain ``beta``."""

    sample: ChannelSample
    beta: float

    @classmethod
    def from_sample(cls, sample: ChannelSample) -> "SystemInstance":
        return cls(sample=sample, beta=beta_from_capacity(sample.capacity))

    @property
    def h(self) -> np.ndarray:
        return self.sample.h

    @property
    def power_budget(self) -> float:
        return self.sample.power_budget

    @property
    def effective_power(self) -> float:
        """Largest per-AP beamforming power compatible with both constraints."""
        return self.sample.power_budget / (1.0 + 1.0 / self.beta)


@dataclass(frozen=True)
class FeasibilityReport:
    """Worst-case constraint slacks; negative slack means violation."""

    feasible: bool
    worst_power_slack: float
    worst_fronthaul_slack: float
    worst_power_ap: int
    worst_fronthaul_ap: int


def beta_from_capacity(capacity: float) -> float:
    """Quantization SNR gain 2**C - 1 of a capacity-C fronthaul link."""
    if capacity < 0:
        raise ValueError("capacity must be nonnegative")
    return float(2.0**capacity - 1.0)


def _check_h_v(h, v):
    if h.shape != v.shape:
        raise ValueError(f"channel {h.shape} and beamformer {v.shape} shapes differ")


def user_rate(h: np.ndarray, v: np.ndarray, omega: np.ndarray, k: int) -> float:
    """Achievable rate of user ``k`` (bits/symbol) under solution (v, omega)."""
    _check_h_v(h, v)
    rates, _, _ = kernels.rates_forward(
        np.ascontiguousarray(h, dtype=np.complex128),
        np.ascontiguousarray(v, dtype=np.complex128),
        np.ascontiguousarray(omega, dtype=np.float64),
    )
    return float(rates[k])


def sum_rate(h: np.ndarray, v: np.ndarray, omega: np.ndarray) -> float:
    """Sum of the per-user rates."""
    _check_h_v(h, v)
    rates, _, _ = kernels.rates_forward(
        np.ascontiguousarray(h, dtype=np.complex128),
        np.ascontiguousarray(v, dtype=np.complex128),
        np.ascontiguousarray(omega, dtype=np.float64),
    )
    return float(rates.sum())


def recover_direction(h: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Unit-norm beamforming directions from the positive parameterization.

    Column k solves (sum_l lam_l h_l h_l^H + diag(mu)) u = h_k, normalized.
    Scaling (lam, mu) jointly by any c > 0 leaves the directions unchanged.

    Raises:
        ValueError: if any mu entry is not strictly positive (upstream bug;
            the output activation guarantees positivity).
        DefinitenessError: if the system matrix fails factorization.
        DegenerateInputError: if some channel column is zero.
    """
    h = np.ascontiguousarray(h, dtype=np.complex128)
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    if np.any(mu <= 0.0):
        raise ValueError("mu entries must be strictly positive")
    if np.any(lam < 0.0):
        raise ValueError("lam entries must be nonnegative")
    a = kernels.build_system_matrix(h, lam, mu)
    lower, piv = kernels.chol_factor(np.ascontiguousarray(a))
    if piv >= 0:
        raise DefinitenessError(piv)
    m, k = h.shape
    u = np.empty((m, k), dtype=np.complex128)
    for l in range(k):
        x = kernels.chol_solve(lower, np.ascontiguousarray(h[:, l]))
        n = np.linalg.norm(x)
        if n == 0.0:
            raise DegenerateInputError(f"channel column {l} is zero; direction undefined")
        u[:, l] = x / n
    return u


def assemble_beamformer(p: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Scale unit directions by per-user amplitudes sqrt(p)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0):
        raise ValueError("p entries must be nonnegative")
    if p.shape != (directions.shape[1],):
        raise ValueError("one power per user required")
    return directions * np.sqrt(p)[None, :]


def scale_to_feasible(v: np.ndarray, power_budget: float, beta: float) -> np.ndarray:
    """Scale ``v`` so the loudest AP spends exactly P / (1 + 1/beta).

    The scaled solution (with omega from :func:`recover_quant_noise`)
    satisfies both per-AP constraints for any input direction/power split.
    """
    v = np.ascontiguousarray(v, dtype=np.complex128)
    if power_budget <= 0 or beta <= 0:
        raise ValueError("power budget and beta must be positive")
    row_power, istar = kernels.scale_stats(v)
    rstar = row_power[istar]
    if rstar <= 0.0:
        raise DegenerateInputError("all-zero beamformer cannot be scaled")
    ptil = power_budget / (1.0 + 1.0 / beta)
    return v * np.sqrt(ptil / rstar)


def recover_quant_noise(v: np.ndarray, beta: float) -> np.ndarray:
    """Fronthaul-tight quantization noise: omega_i = (per-AP power_i) / beta."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    v = np.ascontiguousarray(v, dtype=np.complex128)
    row_power, _ = kernels.scale_stats(v)
    return row_power / beta


def recover_solution(
    instance: SystemInstance, params: IntermediateParams
) -> tuple[np.ndarray, np.ndarray]:
    """Map positive parameters to a feasible solution (v, omega)."""
    u = recover_direction(instance.h, params.lam, params.mu)
    w = assemble_beamformer(params.p, u)
    v = scale_to_feasible(w, instance.power_budget, instance.beta)
    omega = recover_quant_noise(v, instance.beta)
    return v, omega


def check_feasibility(
    v: np.ndarray,
    omega: np.ndarray,
    power_budget: float,
    beta: float,
    tol: float = 1e-9,
) -> FeasibilityReport:
    """Per-AP constraint check; feasible iff all slacks >= -tol."""
    v = np.ascontiguousarray(v, dtype=np.complex128)
    omega = np.asarray(omega, dtype=np.float64)
    row_power, _ = kernels.scale_stats(v)
    power_slack = power_budget - row_power - omega
    fronthaul_slack = beta * omega - row_power
    ip = int(np.argmin(power_slack))
    ifh = int(np.argmin(fronthaul_slack))
    feasible = bool(power_slack[ip] >= -tol and fronthaul_slack[ifh] >= -tol and np.all(omega >= -tol))
    return FeasibilityReport(
        feasible=feasible,
        worst_power_slack=float(power_slack[ip]),
        worst_fronthaul_slack=float(fronthaul_slack[ifh]),
        worst_power_ap=ip,
        worst_fronthaul_ap=ifh,
    )
