import numpy as np
import pytest

from shiftcanon import verify
from shiftcanon.verify import PropertyResult, run_all


@pytest.fixture(scope="module")
def clean():
    return run_all(seed=3, trials=50)


@pytest.fixture(scope="module")
def faulty():
    return run_all(seed=3, trials=50, fault=True)


def test_all_properties_pass(clean):
    failed = [r.line() for r in clean if not r.passed]
    assert not failed, failed


def test_fault_is_detected(faulty):
    names = {r.name for r in faulty if not r.passed}
    assert {"shift_invariance", "canon_reaches_target_angle", "grad_canonize_phi"} <= names


def test_names_unique(clean):
    names = [r.name for r in clean]
    assert len(names) == len(set(names))


@pytest.mark.parametrize("worst, tol, kind, expected", [
    (0.0, 0.0, "max", True),
    (1e-9, 1e-9, "max", True),
    (2e-9, 1e-9, "max", False),
    (1e-9, 1e-9, "min", False),
    (0.3, 1e-9, "min", True),
])
def test_result_pass_rule(worst, tol, kind, expected):
    r = PropertyResult("x", worst, tol, 1, kind=kind)
    assert r.passed is expected
    assert r.line().startswith("PASS" if expected else "FAIL")


def test_drop_nyquist_removes_only_that_bin():
    x = np.random.default_rng(0).normal(size=(2, 16))
    y = verify._drop_nyquist(x)
    X, Y = np.fft.rfft(x), np.fft.rfft(y)
    np.testing.assert_allclose(Y[:, :-1], X[:, :-1], atol=1e-12)
    np.testing.assert_allclose(Y[:, -1], 0.0, atol=1e-12)
    odd = np.arange(7.0)
    assert verify._drop_nyquist(odd) is odd
