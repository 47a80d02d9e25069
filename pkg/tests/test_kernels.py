"""Compiled loop kernels against their vectorized numpy twins, low-level
numeric checks, and the backend-selection env flag."""

import os
import subprocess
import sys

import numpy as np

from cranopt import kernels
from cranopt.channel import generate_dataset
from cranopt.verify import kernels_suite


def test_backend_selection():
    # the facade picks loops when numba is available, vectorized otherwise;
    # both stay importable either way
    assert kernels.impl is (kernels.loops if kernels.NUMBA_ENABLED else kernels.vectorized)
    assert hasattr(kernels.loops, "recover_forward")
    assert hasattr(kernels.vectorized, "recover_forward")


def test_chol_factor_and_solve():
    rng = np.random.default_rng(0)
    for impl in (kernels.loops, kernels.vectorized):
        for _ in range(30):
            m = int(rng.integers(1, 8))
            b = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            a = b @ b.conj().T + np.eye(m)
            lower, piv = impl.chol_factor(np.ascontiguousarray(a))
            assert piv == -1
            assert np.abs(np.tril(lower) @ np.tril(lower).conj().T - a).max() < 1e-10
            rhs = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            x = impl.chol_solve(lower, np.ascontiguousarray(rhs))
            assert np.abs(a @ x - rhs).max() < 1e-10
        bad = np.diag([1.0, -1.0]).astype(np.complex128)
        _, piv = impl.chol_factor(bad)
        assert piv == 1


def test_scale_stats():
    v = np.array([[1.0 + 0j, 2.0 + 0j], [0.0 + 3.0j, 0.0 + 0j]])
    for impl in (kernels.loops, kernels.vectorized):
        rows, istar = impl.scale_stats(np.ascontiguousarray(v))
        assert np.allclose(rows, [5.0, 9.0])
        assert istar == 1


def test_sumrate_with_grad_matches_fd():
    # joint objective (omega tied to rows by the fronthaul rule) is smooth in v
    rng = np.random.default_rng(1)
    eps = 1e-6
    for _ in range(5):
        m, k = 3, 2
        h = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
        v = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
        beta = 63.0
        f0, g = kernels.sumrate_with_grad(h, np.ascontiguousarray(v), beta)
        omega = (np.abs(v) ** 2).sum(axis=1) / beta
        f_direct = kernels.rates_forward(h, np.ascontiguousarray(v), omega)[0].sum()
        assert abs(f0 - f_direct) < 1e-12
        for i in range(m):
            for j in range(k):
                for part, delta in (("re", eps), ("im", eps * 1j)):
                    vp = v.copy()
                    vp[i, j] += delta
                    vm = v.copy()
                    vm[i, j] -= delta
                    fp = kernels.sumrate_with_grad(h, np.ascontiguousarray(vp), beta)[0]
                    fm = kernels.sumrate_with_grad(h, np.ascontiguousarray(vm), beta)[0]
                    fd = (fp - fm) / (2 * eps)
                    a = g[i, j].real if part == "re" else g[i, j].imag
                    assert abs(a - fd) / max(abs(a), abs(fd), 1e-6) < 1e-5


def test_loop_and_vectorized_kernels_agree():
    result = kernels_suite(seed=0, n=60)
    assert result.ok, result.line()


def test_recover_forward_status_codes():
    h = np.zeros((2, 1), dtype=np.complex128)
    p = np.ones(1)
    lam = np.ones(1)
    mu = np.ones(2)
    status = kernels.recover_forward(h, p, lam, mu, 1.0, 3.0)[0]
    assert status == -3  # zero channel column
    h = np.array([[1.0 + 0j], [0.5j]])
    status = kernels.recover_forward(h, np.zeros(1), lam, mu, 1.0, 3.0)[0]
    assert status == -2  # all-zero powers give an unscalable beamformer
    out = kernels.recover_forward(h, p, lam, mu, 1.0, 3.0)
    assert out[0] == -1
    v, omega = out[7], out[8]
    assert abs((np.abs(v) ** 2).sum(axis=1).max() - 1.0) < 1e-12
    assert np.allclose(omega * 3.0, (np.abs(v) ** 2).sum(axis=1))


def test_numpy_fallback_matches_numba_backend():
    """A subprocess with CRANOPT_DISABLE_NUMBA=1 must select the vectorized
    backend and reproduce the compiled backend's numbers exactly."""
    s = generate_dataset(1, 3, 2, seed=123)[0]
    beta = 2.0**s.capacity - 1.0
    ptil = s.power_budget / (1.0 + 1.0 / beta)
    p = np.array([1.0, 2.0])
    lam = np.array([0.5, 1.5])
    mu = np.array([1.0, 2.0, 3.0])
    here = kernels.recover_forward(
        np.ascontiguousarray(s.h), p, lam, mu, ptil, beta
    )
    rates_here = kernels.rates_forward(np.ascontiguousarray(s.h), here[7], here[8])[0]

    script = (
        "import os, numpy as np\n"
        "assert os.environ['CRANOPT_DISABLE_NUMBA'] == '1'\n"
        "from cranopt import kernels\n"
        "from cranopt.channel import generate_dataset\n"
        "assert not kernels.NUMBA_ENABLED\n"
        "assert kernels.impl is kernels.vectorized\n"
        "s = generate_dataset(1, 3, 2, seed=123)[0]\n"
        "beta = 2.0**s.capacity - 1.0\n"
        "ptil = s.power_budget / (1.0 + 1.0 / beta)\n"
        "out = kernels.recover_forward(np.ascontiguousarray(s.h), np.array([1.0, 2.0]),\n"
        "    np.array([0.5, 1.5]), np.array([1.0, 2.0, 3.0]), ptil, beta)\n"
        "rates = kernels.rates_forward(np.ascontiguousarray(s.h), out[7], out[8])[0]\n"
        "print(repr(list(rates)))\n"
    )
    env = dict(os.environ, CRANOPT_DISABLE_NUMBA="1")
    proc = subprocess.run(
        [sys.executable, "-c", script], capture_output=True, text=True, env=env
    )
    assert proc.returncode == 0, proc.stderr
    rates_sub = np.array(eval(proc.stdout.strip()))
    assert np.abs(rates_sub - rates_here).max() < 1e-12
