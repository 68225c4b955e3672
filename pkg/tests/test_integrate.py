import numpy as np
import pytest
from numpy.testing import assert_allclose

import cyclewave.integrate as ci
from cyclewave.errors import NumericalError
from cyclewave.model import ModelParams, log_state

P4 = ModelParams(n=4, c1=3.3, e1=4.0, t=(2.0,))


def near_coexistence_state(params, seed=0, size=1e-3):
    rng = np.random.default_rng(seed)
    xi = 1.0 / params.alpha
    return np.concatenate([
        np.log(np.full(params.n, xi)) + size * rng.standard_normal(params.n),
        size * rng.standard_normal(params.n),
    ])


@pytest.fixture(params=["native", "pure"])
def backend(request, monkeypatch):
    if request.param == "pure":
        monkeypatch.setattr(ci, "_fast", None)
    elif ci.BACKEND != "compiled":
        pytest.skip("extension not built")
    return request.param


def test_both_backends_agree():
    if ci.BACKEND != "compiled":
        pytest.skip("extension not built")
    y0 = near_coexistence_state(P4)
    fast = ci.propagate(P4, 2.0, y0, 3.0)
    old = ci._fast
    try:
        ci._fast = None
        pure = ci.propagate(P4, 2.0, y0, 3.0)
    finally:
        ci._fast = old
    assert_allclose(fast, pure, rtol=1e-9, atol=1e-11)


def test_variational_matches_fd(backend):
    y0 = near_coexistence_state(P4, seed=1)
    y_end, M, dgamma = ci.propagate_tangent(P4, 2.0, y0, 3.0, with_gamma=True)
    assert_allclose(y_end, ci.propagate(P4, 2.0, y0, 3.0),
                    rtol=1e-8, atol=1e-9)
    eps = 1e-6
    for k in range(8):
        d = np.zeros(8)
        d[k] = eps
        col = (ci.propagate(P4, 2.0, y0 + d, 3.0)
               - ci.propagate(P4, 2.0, y0 - d, 3.0)) / (2 * eps)
        assert_allclose(M[:, k], col, rtol=2e-5, atol=1e-7)
    fd = (ci.propagate(P4, 2.0 + eps, y0, 3.0)
          - ci.propagate(P4, 2.0 - eps, y0, 3.0)) / (2 * eps)
    assert_allclose(dgamma, fd, rtol=2e-5, atol=1e-7)


def test_samples_interleave_with_endpoint(backend):
    y0 = near_coexistence_state(P4, seed=2)
    zs = [0.0, 0.7, 1.9, 3.0]
    y_end, taken = ci.propagate(P4, 1.5, y0, 3.0, samples=zs)
    assert taken.shape == (4, 8)
    assert_allclose(taken[0], y0)
    assert_allclose(taken[-1], y_end, rtol=1e-9, atol=1e-12)
    assert_allclose(taken[1], ci.propagate(P4, 1.5, y0, 0.7),
                    rtol=1e-8, atol=1e-10)


def test_linear_coordinates_agree_with_log(backend):
    y0 = near_coexistence_state(P4, seed=3)
    end_log = ci.propagate(P4, 2.0, y0, 2.0)
    from cyclewave.model import linear_state
    end_lin = ci.propagate(P4, 2.0, linear_state(y0), 2.0, log_coords=False)
    assert_allclose(log_state(end_lin), end_log, rtol=1e-8, atol=1e-9)


def test_blowup_raises(backend):
    # far from any invariant set the frame dynamics escape in finite time
    y0 = np.concatenate([np.log(np.full(4, 0.25)), np.zeros(4)])
    with pytest.raises(NumericalError):
        ci.propagate(P4, 2.0, y0, 50.0)


def test_backward_integration_inverts_forward(backend):
    y0 = near_coexistence_state(P4, seed=4)
    fwd = ci.propagate(P4, 2.0, y0, 2.0)
    back = ci.propagate(P4, 2.0, fwd, -2.0)
    assert_allclose(back, y0, rtol=1e-7, atol=1e-9)


def test_state_length_checked(backend):
    with pytest.raises(ValueError):
        ci.propagate(P4, 2.0, np.zeros(5), 1.0)
