import numpy as np
import pytest

from augself import gradcheck
from augself.gradcheck import CASES, check_case, run_suite


def test_every_case_builds_a_scalar():
    rng = np.random.default_rng(0)
    for name, case in CASES.items():
        f, params = case(rng)
        assert f(*params).size == 1, name


def test_cutout_zero_gradients_go_to_absolute_check():
    # pixels inside the cutout window have exactly zero gradient
    rel, absolute = check_case("aug_cutout", np.random.default_rng(3))
    assert rel < gradcheck.TOLERANCE and absolute < gradcheck.ABS_TOLERANCE


def test_suite_is_reproducible_and_independent_of_case_order():
    a = run_suite(3, seed=1, names=["tanh", "matmul"])
    b = run_suite(3, seed=1, names=["matmul"])
    assert a["cases"]["matmul"] == b["cases"]["matmul"]
    assert a["passed"]


def test_unknown_case():
    with pytest.raises(KeyError):
        run_suite(1, names=["nope"])


def test_detects_a_wrong_gradient(monkeypatch):
    from augself.tensor import Tensor, _node

    def bad_tanh(x):
        out = np.tanh(x.data)
        return _node(out, (x,), lambda g: (g * (1.0 - out),))

    def case(rng):
        w = rng.normal(size=5)
        return (lambda x: (bad_tanh(x) * w).sum()), [Tensor(rng.normal(size=5))]

    monkeypatch.setitem(CASES, "bad_tanh", case)
    assert not run_suite(2, names=["bad_tanh"])["passed"]
