"""The compiled spectrum kernel and the NumPy fallback must agree exactly."""

import subprocess
import sys

import numpy as np
import pytest

from isactrack._spectrum import (
    BACKEND_NAME,
    available_backends,
    denominator_grid,
    get_kernel,
)

HAS_CYTHON = "cython" in available_backends()


def random_inputs(rng, p_count=6, n_tones=24, b_count=5, n_delays=40, n_angles=31):
    basis, _ = np.linalg.qr(
        rng.standard_normal((p_count * n_tones, b_count))
        + 1j * rng.standard_normal((p_count * n_tones, b_count))
    )
    delay_phasors = np.exp(1j * rng.uniform(0, 2 * np.pi, (n_delays, n_tones)))
    angle_phasors = np.exp(1j * rng.uniform(0, 2 * np.pi, (n_angles, p_count)))
    return basis, delay_phasors, angle_phasors


def test_numpy_kernel_matches_direct_definition():
    rng = np.random.default_rng(11)
    basis, delays, angles = random_inputs(rng)
    kernel = get_kernel("numpy")
    for complement in (False, True):
        grid = kernel(basis, delays, angles, complement)
        assert grid.shape == (len(delays), len(angles))
        for t, a in [(0, 0), (7, 12), (39, 30), (13, 5)]:
            steering = np.kron(angles[a], delays[t])
            value = float(np.linalg.norm(basis.conj().T @ steering) ** 2)
            if complement:
                value = basis.shape[0] - value
            assert grid[t, a] == pytest.approx(value, rel=1e-10)


@pytest.mark.skipif(not HAS_CYTHON, reason="compiled kernel not built")
def test_backends_agree():
    rng = np.random.default_rng(7)
    numpy_kernel = get_kernel("numpy")
    cython_kernel = get_kernel("cython")
    for trial in range(5):
        basis, delays, angles = random_inputs(
            rng,
            p_count=int(rng.integers(2, 9)),
            n_tones=int(rng.integers(8, 40)),
            b_count=int(rng.integers(1, 6)),
        )
        for complement in (False, True):
            a = numpy_kernel(basis, delays, angles, complement)
            b = cython_kernel(basis, delays, angles, complement)
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_dispatcher_accepts_noncontiguous_inputs():
    rng = np.random.default_rng(3)
    basis, delays, angles = random_inputs(rng)
    direct = denominator_grid(basis, delays, angles, True)
    strided = denominator_grid(basis, delays[::-1][::-1], angles.copy(order="F"), True)
    np.testing.assert_allclose(direct, strided, rtol=1e-12)


def test_numpy_kernel_rejects_mismatched_basis():
    rng = np.random.default_rng(5)
    basis, delays, angles = random_inputs(rng)
    with pytest.raises(ValueError, match="basis rows"):
        get_kernel("numpy")(basis[:-1], delays, angles, True)


def test_get_kernel_unknown_name():
    with pytest.raises(ValueError, match="unknown spectrum backend"):
        get_kernel("fortran")


def test_active_backend_is_available():
    assert BACKEND_NAME in available_backends()
    assert "numpy" in available_backends()


def backend_in_subprocess(value: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-c", "from isactrack._spectrum import BACKEND_NAME; print(BACKEND_NAME)"],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin", "ISACTRACK_SPECTRUM_BACKEND": value},
    )


def test_env_var_selects_numpy_backend():
    result = backend_in_subprocess("numpy")
    assert result.returncode == 0
    assert result.stdout.strip() == "numpy"


@pytest.mark.skipif(not HAS_CYTHON, reason="compiled kernel not built")
def test_env_var_selects_cython_backend():
    result = backend_in_subprocess("cython")
    assert result.returncode == 0
    assert result.stdout.strip() == "cython"


def test_env_var_rejects_unknown_backend():
    result = backend_in_subprocess("quantum")
    assert result.returncode != 0
    assert "ISACTRACK_SPECTRUM_BACKEND" in result.stderr
