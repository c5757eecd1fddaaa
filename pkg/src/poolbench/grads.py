"""Exact analytic backward passes for the pooling operators, plus the
finite-difference oracle the test suite uses as ground truth.

Each ``*_grad`` function returns a :class:`GradBundle` holding the gradient
with respect to the window entries (``d_input``) and, where the operator has
trainable state, the gradient with respect to each parameter (``d_params``).

Non-smooth points are handled with fixed, documented conventions:

* max-pooling and ordinal-pooling break ties toward the first index in
  window order (a zero-measure set; the choice only matters exactly at a tie);
* the learned-norm operator treats the derivative of |x| at 0 as 0, the same
  convention used for differentiating a ReLU at the kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ops import GateValue, Affine, ParameterError, norm_exponent, sigmoid
from .tensor import ShapeError

__all__ = [
    "OracleError",
    "StaleCacheError",
    "GradBundle",
    "FDOracleConfig",
    "max_pool_grad",
    "avg_pool_grad",
    "nearest_pool_grad",
    "conv_pool_grad",
    "gated_pool_grad",
    "ordinal_pool_grad",
    "learned_norm_pool_grad",
    "lse_pool_grad",
    "smooth_max_pool_grad",
    "se_branch_grad",
    "gap_grad",
    "central_difference",
    "relative_error",
    "fd_check",
]


class OracleError(RuntimeError):
    """The finite-difference oracle hit a non-finite function value."""


class StaleCacheError(ValueError):
    """A cached forward artifact does not belong to the inputs being differentiated."""


@dataclass
class GradBundle:
    """Gradients of one pooling evaluation.

    ``d_input`` is dy/dx_i per window entry; ``d_params`` maps parameter
    names to their gradients (empty for parameter-free operators).
    """

    d_input: np.ndarray
    d_params: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class FDOracleConfig:
    """Central-difference step and acceptance tolerance for gradient checks.

    The default step 1e-5 balances truncation error (~h^2) against float64
    roundoff (~eps/h); errors are measured relative to
    max(|analytic|, |numeric|, 1e-8).
    """

    step: float = 1e-5
    tolerance: float = 1e-5

    def __post_init__(self):
        if not self.step > 0:
            raise ParameterError(f"step must be > 0, got {self.step}")
        if not self.tolerance > 0:
            raise ParameterError(f"tolerance must be > 0, got {self.tolerance}")


def _vector(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ShapeError("window must contain at least one entry")
    return arr


def max_pool_grad(x) -> GradBundle:
    """One-hot at the argmax; ties send the whole gradient to the first maximizer."""
    x = _vector(x)
    d = np.zeros_like(x)
    d[int(np.argmax(x))] = 1.0
    return GradBundle(d)


def avg_pool_grad(x) -> GradBundle:
    """Uniform 1/n into every window entry, independent of the values."""
    x = _vector(x)
    return GradBundle(np.full(x.size, 1.0 / x.size))


def nearest_pool_grad(x) -> GradBundle:
    """One-hot at the fixed propagated position (the first entry)."""
    x = _vector(x)
    d = np.zeros_like(x)
    d[0] = 1.0
    return GradBundle(d)


def conv_pool_grad(x, weights) -> GradBundle:
    """Bilinear: dy/dx = w and dy/dw = x."""
    x = _vector(x)
    w = _vector(weights)
    if w.shape != x.shape:
        raise ShapeError(f"weights length {w.size} != window length {x.size}")
    return GradBundle(w.copy(), {"conv_w": x.copy()})


def gated_pool_grad(x, gate_w, gate: GateValue | None = None) -> GradBundle:
    """Chain rule through g*avg + (1-g)*max with g = sigmoid(w.x).

    dy/dx_i = g/n + (1-g)*[i = argmax] + g(1-g) w_i (avg - max)
    dy/dw_i = g(1-g) x_i (avg - max)

    ``gate`` may pass the value cached by the forward pass; it is verified
    against the inputs and a mismatch raises :class:`StaleCacheError`.
    """
    x = _vector(x)
    w = _vector(gate_w)
    if w.shape != x.shape:
        raise ShapeError(f"gate weights length {w.size} != window length {x.size}")
    g = sigmoid((w * x).sum())
    if gate is not None and abs(gate.g - g) > 1e-12:
        raise StaleCacheError(
            f"cached gate {gate.g!r} does not match these inputs (expected {g!r})"
        )
    n = x.size
    mean = x.mean()
    peak = x.max()
    swing = g * (1.0 - g) * (mean - peak)
    d_input = np.full(n, g / n)
    d_input[int(np.argmax(x))] += 1.0 - g
    d_input += swing * w
    return GradBundle(d_input, {"gate_w": swing * x})


def ordinal_pool_grad(x, weights, order: np.ndarray | None = None) -> GradBundle:
    """Chain rule through the sorting permutation, treated as locally constant.

    With ``order`` the ascending argsort of x (stable, so ties resolve to the
    first index in window order): dy/dx_i is the weight of the slot entry i
    was sorted into, and dy/dw_slot is the slot's sorted value.
    """
    x = _vector(x)
    w = _vector(weights)
    if w.shape != x.shape:
        raise ShapeError(f"weights length {w.size} != window length {x.size}")
    fresh = np.argsort(x, kind="stable")
    if order is None:
        order = fresh
    elif not np.array_equal(np.asarray(order), fresh):
        raise StaleCacheError("cached sort permutation does not match these inputs")
    d_input = np.empty_like(x)
    d_input[order] = w
    return GradBundle(d_input, {"ordinal_w": x[order].copy()})


def learned_norm_pool_grad(x, p_raw) -> GradBundle:
    """Gradient of the power mean y = ((1/n) sum |x_i|^p)^(1/p).

    dy/dx_i = y |x_i|^(p-1) sign(x_i) / (n * (1/n sum |x_j|^p)), with the
    convention that the derivative is 0 wherever x_i = 0.  The parameter
    gradient chains dy/dp through dp/dp_raw = sigmoid(p_raw), using
    0*log(0) = 0.  Both are evaluated in ratio form (|x_i| / max|x|) so no
    intermediate can overflow for large exponents.
    """
    x = _vector(x)
    p = norm_exponent(p_raw)
    magnitudes = np.abs(x)
    peak = magnitudes.max()
    if peak == 0.0:
        return GradBundle(np.zeros_like(x), {"p_raw": np.zeros(1)})
    ratios = magnitudes / peak
    powered = ratios**p
    mean_pow = powered.mean()
    y = peak * mean_pow ** (1.0 / p)
    d_input = np.sign(x) * ratios ** (p - 1.0) * mean_pow ** (1.0 / p - 1.0) / x.size
    log_ratios = np.where(ratios > 0.0, np.log(np.where(ratios > 0.0, ratios, 1.0)), 0.0)
    weighted_logs = (powered * log_ratios).sum()
    dy_dp = y * (weighted_logs / (p * powered.sum()) - np.log(mean_pow) / p**2)
    d_p_raw = dy_dp * sigmoid(float(p_raw))
    return GradBundle(d_input, {"p_raw": np.array([d_p_raw])})


def lse_pool_grad(x, sharpness) -> GradBundle:
    """Input gradient of log-sum-exp pooling: the softmax of r*x.

    Computed with the max-shift trick, so the entries are positive, sum to
    one, and never overflow regardless of the input magnitude.  The
    sharpness r is a fixed hyperparameter and carries no gradient.
    """
    x = _vector(x)
    r = float(sharpness)
    if not math.isfinite(r) or r <= 0.0:
        raise ParameterError(f"sharpness must be a positive finite number, got {r}")
    z = r * x
    s = np.exp(z - z.max())
    return GradBundle(s / s.sum())


def smooth_max_pool_grad(x, tau) -> GradBundle:
    """Exact gradients of the softmax-weighted average.

    With shift-stabilized weights s_i = softmax(tau * x)_i and output y:

        dy/dx_i  = s_i * (1 + tau * (x_i - y))
        dy/dtau  = sum_i s_i * (x_i - y)^2

    The input gradient uses the factored form (one fewer division than the
    raw quotient, and safe under the shift); the temperature gradient is the
    variance of the window under the softmax weights, evaluated in centered
    form so it is nonnegative by construction.  The input gradient always
    sums to 1 but its entries may be negative.
    """
    x = _vector(x)
    tau = float(tau)
    if not math.isfinite(tau) or not np.isfinite(x).all():
        raise ValueError("smooth max requires finite window entries and temperature")
    z = tau * x
    s = np.exp(z - z.max())
    s /= s.sum()
    y = (s * x).sum()
    centered = x - y
    d_input = s * (1.0 + tau * centered)
    d_tau = (s * centered**2).sum()
    return GradBundle(d_input, {"tau": np.array([d_tau])})


def se_branch_grad(mu, f1: Affine, f2: Affine, d_out) -> GradBundle:
    """Backward through the squeeze-and-excitation branch f2(relu(f1(mu))).

    ``d_out`` is the upstream gradient on the branch output (one entry per
    channel).  Returns the gradient on the channel means as ``d_input`` and
    the four affine-parameter gradients in ``d_params``.
    """
    mu = _vector(mu)
    d_out = _vector(d_out)
    if d_out.size != f2.out_dim:
        raise ShapeError(f"upstream length {d_out.size} != branch output {f2.out_dim}")
    hidden_pre = f1(mu)
    hidden = np.maximum(hidden_pre, 0.0)
    d_f2_weight = np.outer(d_out, hidden)
    d_f2_bias = d_out.copy()
    d_hidden = f2.weight.T @ d_out
    d_hidden_pre = d_hidden * (hidden_pre > 0.0)
    d_f1_weight = np.outer(d_hidden_pre, mu)
    d_f1_bias = d_hidden_pre.copy()
    d_mu = f1.weight.T @ d_hidden_pre
    return GradBundle(
        d_mu,
        {
            "se_f1_weight": d_f1_weight,
            "se_f1_bias": d_f1_bias,
            "se_f2_weight": d_f2_weight,
            "se_f2_bias": d_f2_bias,
        },
    )


def gap_grad(d_mu, height: int, width: int) -> np.ndarray:
    """Backward of the per-channel spatial mean: spread d_mu evenly over H*W."""
    d_mu = _vector(d_mu)
    if height < 1 or width < 1:
        raise ShapeError(f"spatial dims must be >= 1, got {height} x {width}")
    return np.broadcast_to(
        d_mu[:, None, None] / (height * width), (d_mu.size, height, width)
    ).copy()


def central_difference(fn, point, step: float) -> np.ndarray:
    """Per-coordinate central differences (fn(x + h e_i) - fn(x - h e_i)) / 2h."""
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    out = np.empty_like(point)
    for i in range(point.size):
        bumped = point.copy()
        bumped[i] = point[i] + step
        hi = fn(bumped)
        bumped[i] = point[i] - step
        lo = fn(bumped)
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise OracleError(
                f"non-finite function value near coordinate {i} (f+={hi}, f-={lo})"
            )
        out[i] = (hi - lo) / (2.0 * step)
    return out


def relative_error(a, b, floor: float = 1e-8) -> float:
    """Worst relative discrepancy max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare shapes {a.shape} and {b.shape}")
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / scale).max())


def fd_check(fn, point, analytic, config: FDOracleConfig = FDOracleConfig()) -> float:
    """Worst relative error of ``analytic`` against central differences of ``fn``.

    ``fn`` maps a flat coordinate vector to a scalar; ``analytic`` is the
    claimed gradient at ``point``.  The caller is responsible for keeping
    ``point`` away from non-differentiable sets (ties, |x| = 0 kinks).
    """
    numeric = central_difference(fn, point, config.step)
    return relative_error(np.asarray(analytic, dtype=np.float64).reshape(-1), numeric)
