"""System model: rate expression against a direct reimplementation, and the
structural guarantees of the parameter-to-solution recovery map (feasibility
for arbitrary positive parameters, tight fronthaul, unit directions)."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cranopt.channel import generate_dataset
from cranopt.cranmodel import (
    FeasibilityReport,
    IntermediateParams,
    SystemInstance,
    assemble_beamformer,
    beta_from_capacity,
    check_feasibility,
    recover_direction,
    recover_quant_noise,
    recover_solution,
    scale_to_feasible,
    sum_rate,
    user_rate,
)
from cranopt.errors import DegenerateInputError


def _rate_oracle(h, v, omega, j):
    """Rate of user j written out term by term, no shared code with the kernels."""
    m, k = h.shape
    signal = abs(np.vdot(h[:, j], v[:, j])) ** 2
    quant = sum(omega[i] * abs(h[i, j]) ** 2 for i in range(m))
    cross = sum(abs(np.vdot(h[:, j], v[:, l])) ** 2 for l in range(k) if l != j)
    return np.log2(1.0 + signal / (1.0 + quant + cross))


def test_rates_match_direct_formula():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = int(rng.integers(1, 7))
        k = int(rng.integers(1, 7))
        h = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
        v = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
        omega = 10.0 ** rng.uniform(-3.0, 1.0, m)
        expect = [_rate_oracle(h, v, omega, j) for j in range(k)]
        for j in range(k):
            assert abs(user_rate(h, v, omega, j) - expect[j]) < 1e-12
        assert abs(sum_rate(h, v, omega) - sum(expect)) < 1e-11


def test_beta_from_capacity():
    assert beta_from_capacity(0.0) == 0.0
    assert beta_from_capacity(1.0) == 1.0
    assert beta_from_capacity(2.0) == 3.0
    assert beta_from_capacity(10.0) == 1023.0
    with pytest.raises(ValueError):
        beta_from_capacity(-0.5)


@given(
    m=st.integers(1, 6),
    k=st.integers(1, 6),
    seed=st.integers(0, 2**32 - 1),
    log_scale=st.floats(-3.0, 3.0),
)
@settings(max_examples=80, deadline=None)
def test_recovery_feasible_for_any_positive_params(m, k, seed, log_scale):
    """Any positive (p, lam, mu) maps to a point satisfying both per-AP
    constraints, with the fronthaul one exactly tight."""
    rng = np.random.default_rng(seed)
    sample = generate_dataset(1, m, k, seed=seed)[0]
    inst = SystemInstance.from_sample(sample)
    scale = 10.0**log_scale
    params = IntermediateParams(
        p=scale * 10.0 ** rng.uniform(-2, 2, k),
        lam=10.0 ** rng.uniform(-2, 2, k),
        mu=10.0 ** rng.uniform(-2, 2, m),
    )
    v, omega = recover_solution(inst, params)
    rows = (np.abs(v) ** 2).sum(axis=1)
    power_slack = sample.power_budget - rows - omega
    assert power_slack.min() >= -1e-9 * sample.power_budget
    assert np.abs(inst.beta * omega - rows).max() <= 1e-9 * sample.power_budget
    report = check_feasibility(v, omega, sample.power_budget, inst.beta)
    assert report.feasible, report


def test_scaling_pins_loudest_ap():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m, k = 4, 3
        v0 = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
        power, beta = 25.0, 63.0
        v = scale_to_feasible(v0, power, beta)
        rows = (np.abs(v) ** 2).sum(axis=1)
        ptil = power / (1.0 + 1.0 / beta)
        assert abs(rows.max() - ptil) < 1e-9 * power
        # scaling preserves directions
        ratio = v / v0
        assert np.abs(ratio - ratio.flat[0]).max() < 1e-12


def test_quant_noise_saturates_fronthaul():
    rng = np.random.default_rng(2)
    v = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    beta = 15.0
    omega = recover_quant_noise(v, beta)
    rows = (np.abs(v) ** 2).sum(axis=1)
    assert np.allclose(beta * omega, rows, rtol=0, atol=1e-14)


def test_directions_unit_norm_and_scale_invariant():
    rng = np.random.default_rng(3)
    for _ in range(200):
        m = int(rng.integers(1, 7))
        k = int(rng.integers(1, 7))
        h = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
        lam = 10.0 ** rng.uniform(-2, 2, k)
        mu = 10.0 ** rng.uniform(-2, 2, m)
        u = recover_direction(h, lam, mu)
        assert np.abs(np.linalg.norm(u, axis=0) - 1.0).max() < 1e-12
        c = 10.0 ** rng.uniform(-3, 3)
        u2 = recover_direction(h, c * lam, c * mu)
        assert np.abs(u - u2).max() < 1e-10


def test_direction_limits():
    # mu -> large: A ~ mu*I, so u_k -> h_k / ||h_k|| (matched filter)
    rng = np.random.default_rng(4)
    h = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    u = recover_direction(h, np.ones(2) * 1e-12, np.ones(4))
    mf = h / np.linalg.norm(h, axis=0)
    assert np.abs(u - mf).max() < 1e-9


def test_assemble_beamformer():
    rng = np.random.default_rng(5)
    h = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    u = recover_direction(h, np.ones(2), np.ones(3))
    p = np.array([4.0, 9.0])
    w = assemble_beamformer(p, u)
    assert np.allclose(np.linalg.norm(w, axis=0), [2.0, 3.0])
    with pytest.raises(ValueError):
        assemble_beamformer(np.array([-1.0, 1.0]), u)
    with pytest.raises(ValueError):
        assemble_beamformer(np.ones(3), u)


def test_degenerate_and_invalid_inputs():
    h = np.zeros((2, 2), dtype=np.complex128)
    with pytest.raises(DegenerateInputError):
        recover_direction(h, np.ones(2), np.ones(2))
    rng = np.random.default_rng(6)
    good = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    with pytest.raises(ValueError):
        recover_direction(good, np.ones(2), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        recover_direction(good, np.array([-1.0, 1.0]), np.ones(2))
    with pytest.raises(DegenerateInputError):
        scale_to_feasible(np.zeros((2, 2), dtype=np.complex128), 10.0, 3.0)
    with pytest.raises(ValueError):
        scale_to_feasible(good, -1.0, 3.0)
    with pytest.raises(ValueError):
        recover_quant_noise(good, 0.0)


def test_check_feasibility_flags_violations():
    h = np.array([[1.0 + 0.0j], [0.5 + 0.0j]])
    v = np.array([[2.0 + 0.0j], [1.0 + 0.0j]])
    beta = 3.0
    omega = recover_quant_noise(v, beta)
    # power budget below what the rows spend -> infeasible with named AP
    report = check_feasibility(v, omega, 1.0, beta)
    assert not report.feasible
    assert report.worst_power_ap == 0
    assert report.worst_power_slack < 0
    # generous budget -> feasible
    ok = check_feasibility(v, omega, 100.0, beta)
    assert ok.feasible and isinstance(ok, FeasibilityReport)


def test_effective_power():
    sample = generate_dataset(1, 2, 2, seed=9)[0]
    inst = SystemInstance.from_sample(sample)
    beta = beta_from_capacity(sample.capacity)
    assert abs(inst.effective_power - sample.power_budget / (1.0 + 1.0 / beta)) < 1e-15
    assert inst.effective_power < sample.power_budget
