import math

import numpy as np
import pytest

import cnce

TWO_LOG2 = 2.0 * math.log(2.0)


def test_gaussian_log_phi_and_gradient():
    model = {"kind": "gaussian", "dim": 2}
    theta = np.array([2.0, 0.5, 1.0])  # packed upper triangle of [[2, .5], [.5, 1]]
    u = np.array([1.0, -2.0])
    lam = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert cnce.log_phi(model, theta, u) == pytest.approx(-0.5 * u @ lam @ u, abs=1e-14)
    # d/dΛ_ij of -½uᵀΛu, off-diagonal entries counted twice
    expected = np.array([-0.5 * u[0] ** 2, -u[0] * u[1], -0.5 * u[1] ** 2])
    np.testing.assert_allclose(cnce.grad_theta_log_phi(model, theta, u), expected, atol=1e-14)


def test_sampling_is_seeded():
    theta = cnce.true_params("ring", 3)
    a = cnce.sample("ring", theta, 50, 7)
    b = cnce.sample("ring", theta, 50, 7)
    assert a.shape == (50, 5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, cnce.sample("ring", theta, 50, 8))


def test_cnce_loss_near_zero_epsilon():
    theta = cnce.true_params("gaussian", 1)
    x = cnce.sample("gaussian", theta, 100, 2)
    value, grad = cnce.cnce_loss("gaussian", theta, x, 3, 1e-9, 5)
    assert value == pytest.approx(TWO_LOG2, abs=1e-8)
    assert np.abs(grad).max() < 1e-7
    with pytest.raises(ValueError):
        cnce.cnce_loss("gaussian", theta, x, 3, 0.0, 5)


def test_cnce_gradient_matches_differences():
    model = {"kind": "gaussian", "dim": 3}
    theta = cnce.true_params(model, 4)
    x = cnce.sample(model, theta, 200, 5)
    theta0 = theta * 1.3
    _, grad = cnce.cnce_loss(model, theta0, x, 4, 0.5, 6)
    h = 1e-6
    numeric = np.empty_like(theta0)
    for k in range(theta0.size):
        e = np.zeros_like(theta0)
        e[k] = h
        numeric[k] = (cnce.cnce_loss(model, theta0 + e, x, 4, 0.5, 6)[0]
                      - cnce.cnce_loss(model, theta0 - e, x, 4, 0.5, 6)[0]) / (2 * h)
    assert np.linalg.norm(numeric - grad) / max(np.linalg.norm(numeric), 1e-12) < 1e-6


def test_fit_bernoulli():
    truth = np.array([0.3, 0.7])
    x = cnce.sample("bernoulli", truth, 20000, 9)
    out = cnce.fit({"model": "bernoulli", "method": "cnce", "kappa": 10, "epsilon": 0.2, "seed": 1}, x)
    assert cnce.estimation_error("bernoulli", out["theta_hat"], truth) < 0.03


def test_fit_gaussian_mle_is_inverse_second_moment():
    model = {"kind": "gaussian", "dim": 2}
    x = cnce.sample(model, np.array([1.0, 0.0, 1.0]), 5000, 3)
    out = cnce.fit({"model": model, "method": "mle"}, x)
    lam = np.linalg.inv(x.T @ x / len(x))
    np.testing.assert_allclose(out["theta_hat"], [lam[0, 0], lam[0, 1], lam[1, 1]], rtol=1e-6)


def test_run_experiment_rows():
    rows = cnce.run_experiment({
        "model": {"kind": "gaussian", "dim": 2},
        "methods": ["cnce", "mle"],
        "n_grid": [100],
        "kappa_grid": [1, 2],
        "repeats": 2,
        "master_seed": 1,
    })
    assert len(rows) == 8
    assert {r["method"] for r in rows} == {"cnce", "mle"}
    assert all(float(r["error"]) >= 0.0 for r in rows)


def test_errors():
    with pytest.raises(ValueError):
        cnce.true_params("banana", 1)
    with pytest.raises(ValueError):
        cnce.fit({"model": "ring", "method": "mle"}, np.zeros((10, 5)))
    code, _, err = cnce.run_cli("frobnicate")
    assert code == 1
    assert err
