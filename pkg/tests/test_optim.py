"""Adam update rule and the simplex re-projection hook."""

import numpy as np
import pytest

from poolbench.ops import ParameterError
from poolbench.optim import ADAM_EPSILON, Adam, OptimConfig


def test_config_validation():
    with pytest.raises(ParameterError):
        OptimConfig(lr=0.0)
    with pytest.raises(ParameterError):
        OptimConfig(beta1=1.0)
    with pytest.raises(ParameterError):
        OptimConfig(batch_size=0)


def test_zero_gradient_keeps_parameters():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    adam = Adam(p, OptimConfig(lr=0.1))
    adam.step({"w": np.zeros(3)})
    np.testing.assert_array_equal(p["w"], [1.0, -2.0, 3.0])


def test_first_step_magnitude_bounded_by_lr():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.normal(size=5)
        p = {"w": w.copy()}
        g = rng.normal(size=5) * rng.choice([1e-3, 1.0, 1e3])
        adam = Adam(p, OptimConfig(lr=0.01))
        adam.step({"w": g})
        delta = np.abs(p["w"] - w)
        assert (delta <= 0.01 * (1.0 + 1e-7)).all()
        # and the step moves against the gradient direction
        assert (np.sign(w - p["w"]) == np.sign(g))[g != 0].all()


def test_two_steps_match_hand_computation():
    lr, b1, b2 = 0.1, 0.9, 0.999
    p = {"w": np.array([0.5])}
    adam = Adam(p, OptimConfig(lr=lr, beta1=b1, beta2=b2))
    g1, g2 = np.array([0.3]), np.array([-0.2])

    m = (1 - b1) * g1
    v = (1 - b2) * g1**2
    w = 0.5 - lr * (m / (1 - b1)) / (np.sqrt(v / (1 - b2)) + ADAM_EPSILON)
    adam.step({"w": g1})
    np.testing.assert_allclose(p["w"], w, atol=1e-15)

    m = b1 * m + (1 - b1) * g2
    v = b2 * v + (1 - b2) * g2**2
    w = w - lr * (m / (1 - b1**2)) / (np.sqrt(v / (1 - b2**2)) + ADAM_EPSILON)
    adam.step({"w": g2})
    np.testing.assert_allclose(p["w"], w, atol=1e-15)


def test_simplex_projection_after_every_step():
    rng = np.random.default_rng(1)
    p = {"w": np.full(4, 0.25)}
    adam = Adam(p, OptimConfig(lr=0.05), simplex_names=("w",))
    for _ in range(200):
        adam.step({"w": rng.normal(size=4)})
        assert (p["w"] >= 0.0).all()
        assert abs(p["w"].sum() - 1.0) < 1e-12


def test_unknown_simplex_name_rejected():
    with pytest.raises(ParameterError):
        Adam({"w": np.ones(2)}, OptimConfig(), simplex_names=("nope",))
