"""Reference solvers: closed-form heuristic, local search, and a small oracle.

All three return feasible (v, omega) pairs via the same max-AP scaling and
fronthaul-tight quantization-noise rule the learned models use, so their sum
rates are directly comparable.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .cranmodel import (
    assemble_beamformer,
    beta_from_capacity,
    recover_direction,
    recover_quant_noise,
    scale_to_feasible,
)
from .errors import ConfigurationError, DegenerateInputError, OracleSizeError

ORACLE_MAX_ENTRIES = 3


def mrt_uniform(h: np.ndarray, power_budget: float, capacity: float):
    """Matched-filter directions with a uniform power split, scaled feasible."""
    h = np.asarray(h, dtype=np.complex128)
    beta = beta_from_capacity(capacity)
    norms = np.linalg.norm(h, axis=0)
    if not np.any(norms > 0.0):
        raise DegenerateInputError("all channel columns are zero")
    w = np.where(norms > 0.0, h / np.where(norms > 0.0, norms, 1.0), 0.0)
    v = scale_to_feasible(w, power_budget, beta)
    return v, recover_quant_noise(v, beta)


@dataclass(frozen=True)
class LocalSearchConfig:
    restarts: int = 3
    max_iterations: int = 400
    step_init: float = 0.25
    step_growth: float = 1.25
    step_shrink: float = 0.5
    min_step: float = 1e-12
    tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iterations < 1:
            raise ConfigurationError("restarts and max_iterations must be positive")
        if not (0 < self.step_shrink < 1 < self.step_growth):
            raise ConfigurationError("need step_shrink < 1 < step_growth")


@dataclass
class SearchResult:
    sum_rate: float
    v: np.ndarray
    omega: np.ndarray
    iterations: int
    restarts_used: int
    converged: bool


def _objective_grad(h, v, beta):
    """Sum rate and its gradient through the max-AP rescaling.

    ``v`` must already be scaled (loudest AP at ptil). The correction on the
    loudest row makes the gradient scale-invariant (zero radial component),
    so ascent directions stay tangent to the scaled manifold.
    """
    f, gv = kernels.sumrate_with_grad(h, v, beta)
    row_power, istar = kernels.scale_stats(v)
    gs = float(np.sum(gv.real * v.real + gv.imag * v.imag))
    gv[istar, :] -= (gs / row_power[istar]) * v[istar, :]
    return f, gv


def _ascend(h, power_budget, beta, v0, config):
    """Backtracking gradient ascent from one start; projection = max-AP scaling."""
    v = scale_to_feasible(v0, power_budget, beta)
    f, g = _objective_grad(h, v, beta)
    step = config.step_init
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        gnorm = np.linalg.norm(g)
        vnorm = np.linalg.norm(v)
        if gnorm * vnorm <= config.tol * max(1.0, abs(f)):
            converged = True
            break
        cand = scale_to_feasible(v + (step * vnorm / gnorm) * g, power_budget, beta)
        fc, gc = _objective_grad(h, cand, beta)
        if fc > f:
            v, f, g = cand, fc, gc
            step *= config.step_growth
        else:
            step *= config.step_shrink
            if step < config.min_step:
                converged = True
                break
    return f, v, it, converged


def _start_points(h, config):
    """MRT first, then regularized-inverse directions, then random draws."""
    m, k = h.shape
    norms = np.linalg.norm(h, axis=0)
    starts = [np.where(norms > 0.0, h / np.where(norms > 0.0, norms, 1.0), 0.0)]
    if len(starts) < config.restarts:
        try:
            u = recover_direction(h, np.ones(k), np.ones(m))
            starts.append(assemble_beamformer(np.ones(k), u))
        except DegenerateInputError:
            pass
    i = 0
    while len(starts) < config.restarts:
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, 7, i)))
        starts.append(rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k)))
        i += 1
    return starts[: config.restarts]


def local_search(
    h: np.ndarray,
    power_budget: float,
    capacity: float,
    config: LocalSearchConfig | None = None,
) -> SearchResult:
    """Multi-start projected gradient ascent on the recovered sum rate.

    Returns the best start; omega is always the fronthaul-tight value.
    """
    config = config or LocalSearchConfig()
    h = np.ascontiguousarray(h, dtype=np.complex128)
    beta = beta_from_capacity(capacity)
    best = None
    total_iters = 0
    all_converged = True
    for v0 in _start_points(h, config):
        if not np.any(np.abs(v0) > 0.0):
            continue
        f, v, iters, converged = _ascend(h, power_budget, beta, v0, config)
        total_iters += iters
        all_converged = all_converged and converged
        if best is None or f > best[0]:
            best = (f, v)
    if best is None:
        raise DegenerateInputError("no usable start point (zero channel)")
    f, v = best
    return SearchResult(
        sum_rate=float(f),
        v=v,
        omega=recover_quant_noise(v, beta),
        iterations=total_iters,
        restarts_used=config.restarts,
        converged=all_converged,
    )


@dataclass
class OracleResult:
    sum_rate: float
    v: np.ndarray
    omega: np.ndarray
    resolution: int
    refine_levels: int


def brute_force_oracle(
    h: np.ndarray,
    power_budget: float,
    capacity: float,
    resolution: int = 8,
    refine_levels: int = 2,
) -> OracleResult:
    """Exhaustive amplitude/phase grid search over the scaled beamformer.

    Only for tiny systems (m*k <= 3): the grid has resolution**(2mk-1)
    points. Each candidate is max-AP scaled before scoring, and refinement
    re-grids a shrinking window around the incumbent, so the result is a
    monotone-in-resolution lower bound on the true optimum.
    """
    h = np.ascontiguousarray(h, dtype=np.complex128)
    m, k = h.shape
    e = m * k
    if e > ORACLE_MAX_ENTRIES:
        raise OracleSizeError(f"oracle supports m*k <= {ORACLE_MAX_ENTRIES}, got {e}")
    if resolution < 2:
        raise ConfigurationError("resolution must be at least 2")
    beta = beta_from_capacity(capacity)
    ptil = power_budget / (1.0 + 1.0 / beta)

    n_amp = resolution + 1
    n_ph = resolution
    amp_lo = np.zeros(e)
    amp_hi = np.ones(e)
    ph_lo = np.zeros(max(e - 1, 0))
    ph_hi = np.full(max(e - 1, 0), 2.0 * np.pi * (n_ph - 1) / n_ph)

    best_f = -np.inf
    best_amp = np.zeros(e)
    best_ph = np.zeros(e)
    for level in range(refine_levels + 1):
        amp_levels = np.empty((e, n_amp))
        for j in range(e):
            amp_levels[j] = np.linspace(amp_lo[j], amp_hi[j], n_amp)
        phase_levels = np.empty((max(e - 1, 0), n_ph))
        for j in range(e - 1):
            phase_levels[j] = np.linspace(ph_lo[j], ph_hi[j], n_ph)
        f, amp, ph = kernels.bf_search(h, beta, ptil, amp_levels, phase_levels)
        if f > best_f:
            best_f, best_amp, best_ph = f, amp, ph
        # shrink each window to +-1.5 old spacings around the incumbent
        da = (amp_hi - amp_lo) / resolution
        amp_lo = np.maximum(0.0, best_amp - 1.5 * da)
        amp_hi = np.minimum(1.0, best_amp + 1.5 * da)
        if e > 1:
            dp = (ph_hi - ph_lo) / max(n_ph - 1, 1)
            ph_lo = best_ph[1:] - 1.5 * dp
            ph_hi = best_ph[1:] + 1.5 * dp

    w = best_amp * np.exp(1j * best_ph)
    w = w.reshape((m, k), order="F")
    if not np.any(np.abs(w) > 0.0):
        raise DegenerateInputError("oracle found only the all-zero beamformer")
    v = scale_to_feasible(w, power_budget, beta)
    return OracleResult(
        sum_rate=float(best_f),
        v=v,
        omega=recover_quant_noise(v, beta),
        resolution=resolution,
        refine_levels=refine_levels,
    )
