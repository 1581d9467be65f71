"""Numba and numpy backends must agree bit-for-bit on every kernel."""

import subprocess
import sys

import numpy as np
import pytest

from savgo import accel


@pytest.fixture(autouse=True)
def restore_backend():
    previous = accel.active_backend
    yield
    accel.use_backend(previous)


def _impls(name):
    return [getattr(accel._REGISTRY[b], name) for b in ("numpy", "numba")]


def test_both_backends_available():
    assert set(accel.available_backends()) == {"numpy", "numba"}


def test_elementwise_kernels_agree():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 2, (17, 9))
    g = rng.normal(0, 1, (17, 9))
    for name, args in [
        ("relu_fwd", (x,)),
        ("huber_fwd", (x, 1.3)),
        ("huber_bwd", (x, 1.3)),
    ]:
        np_fn, nb_fn = _impls(name)
        assert np.array_equal(np_fn(*args), nb_fn(*args)), name
    # libm tanh vs numpy's vectorized tanh can disagree in the last ulp
    np_fn, nb_fn = _impls("tanh_fwd")
    a, b = np_fn(x), nb_fn(x)
    assert np.all(np.abs(a - b) <= 2 * np.spacing(np.abs(a)))
    y = np.tanh(x)
    for name in ("relu_bwd", "tanh_bwd"):
        np_fn, nb_fn = _impls(name)
        assert np.array_equal(np_fn(y, g), nb_fn(y, g)), name


def test_softmax_kernels_agree():
    rng = np.random.default_rng(1)
    x = rng.normal(0, 3, (11, 7))
    g = rng.normal(0, 1, (11, 7))
    np_fwd, nb_fwd = _impls("softmax_rows")
    a = np_fwd(x, 2.5)
    b = nb_fwd(x, 2.5)
    assert np.max(np.abs(a - b)) < 1e-15
    np_bwd, nb_bwd = _impls("softmax_rows_bwd")
    assert np.max(np.abs(np_bwd(a, g, 2.5) - nb_bwd(a, g, 2.5))) < 1e-15


def test_adam_and_polyak_kernels_agree():
    rng = np.random.default_rng(2)
    shapes = [(5, 4), (12,)]
    for shape in shapes:
        p1 = rng.normal(0, 1, shape)
        p2 = p1.copy()
        m1, v1 = np.zeros(shape), np.zeros(shape)
        m2, v2 = np.zeros(shape), np.zeros(shape)
        np_adam, nb_adam = _impls("adam_update")
        for t in range(1, 4):
            g = rng.normal(0, 1, shape)
            bc1, bc2 = 1 - 0.9 ** t, 1 - 0.999 ** t
            np_adam(p1, m1, v1, g, 1e-3, 0.9, 0.999, 1e-8, bc1, bc2)
            nb_adam(p2, m2, v2, g, 1e-3, 0.9, 0.999, 1e-8, bc1, bc2)
        assert np.max(np.abs(p1 - p2)) < 1e-16

        t1 = rng.normal(0, 1, shape)
        t2 = t1.copy()
        o = rng.normal(0, 1, shape)
        np_pol, nb_pol = _impls("polyak_update")
        np_pol(t1, o, 0.995)
        nb_pol(t2, o, 0.995)
        assert np.max(np.abs(t1 - t2)) < 1e-16


def test_use_backend_switches_bindings():
    accel.use_backend("numpy")
    assert accel.active_backend == "numpy"
    assert accel.relu_fwd is accel._REGISTRY["numpy"].relu_fwd
    accel.use_backend("numba")
    assert accel.relu_fwd is accel._REGISTRY["numba"].relu_fwd


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        accel.use_backend("gpu")


def test_env_flag_selects_backend():
    code = ("import savgo.accel as a; print(a.active_backend)")
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "SAVGO_BACKEND": "numpy"},
        capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
