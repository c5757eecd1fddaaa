"""Forward evaluation of the pooling operators.

Every operator reduces one flat window vector ``x`` of length n to a scalar.
Max- and average-pooling sit at the two ends of a spectrum; the remaining
operators interpolate between them (and min-pooling) through a small number
of parameters:

* ``conv_pool``      -- weighted sum with free weights.
* ``gated_pool``     -- sigmoid gate blending average and max.
* ``ordinal_pool``   -- convex combination of the *sorted* window.
* ``learned_norm_pool`` -- power mean of |x| with exponent p in (1, inf).
* ``lse_pool``       -- log-sum-exp quasi-arithmetic mean with sharpness r.
* ``smooth_max_pool``-- softmax-weighted average with temperature tau.

``smooth_max_pool`` and ``lse_pool`` are evaluated with the max-shift trick
(subtract the largest exponent argument before exponentiating), so they stay
finite for inputs and temperatures far beyond the overflow threshold of a
naive implementation.  The same shifted weights are reused by the backward
passes in :mod:`poolbench.grads`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, WindowSpec, as_tensor, map_windows

__all__ = [
    "ParameterError",
    "ConfigurationError",
    "DegenerateWeightsError",
    "METHODS",
    "HEADLINE_METHODS",
    "ACTIVE_PARAMS",
    "GateValue",
    "Affine",
    "PoolSpec",
    "PoolParams",
    "validate_pool_params",
    "sigmoid",
    "max_pool",
    "avg_pool",
    "nearest_pool",
    "conv_pool",
    "gated_pool",
    "ordinal_pool",
    "project_to_simplex",
    "norm_exponent",
    "learned_norm_pool",
    "lse_pool",
    "smooth_max_pool",
    "global_avg_pool",
    "se_temperatures",
    "se_gated_max_pool",
    "fixed_temperatures",
]


class ParameterError(ValueError):
    """A pooling parameter violates its contract (range, shape, or invariant)."""


class ConfigurationError(ValueError):
    """A structural configuration is inconsistent (e.g. reduction ratio vs channels)."""


class DegenerateWeightsError(ParameterError):
    """Simplex projection received weights with no positive entry."""


#: All supported pooling method identifiers.
METHODS = (
    "MP",
    "AP",
    "NN",
    "CONV",
    "GP",
    "OP",
    "LNP",
    "LSE",
    "SMP_fixed",
    "SMP_trainable",
    "SESMP",
    "SEMP",
)

#: The ten methods entering the headline benchmark sweep.  CONV is covered
#: by NN preceded by a full convolution stage (a strided convolution equals
#: a stride-1 convolution followed by nearest-neighbor downsampling), and
#: LSE is kept out of the comparison because its sharpness is a fixed,
#: hand-chosen hyperparameter rather than a trained one.
HEADLINE_METHODS = (
    "MP",
    "AP",
    "NN",
    "GP",
    "OP",
    "LNP",
    "SMP_trainable",
    "SMP_fixed",
    "SESMP",
    "SEMP",
)

#: Which PoolParams fields each method reads.
ACTIVE_PARAMS = {
    "MP": (),
    "AP": (),
    "NN": (),
    "CONV": ("conv_w",),
    "GP": ("gate_w",),
    "OP": ("ordinal_w",),
    "LNP": ("p_raw",),
    "LSE": ("sharpness",),
    "SMP_fixed": ("tau",),
    "SMP_trainable": ("tau",),
    "SESMP": ("se_f1", "se_f2", "se_ratio"),
    "SEMP": ("se_f1", "se_f2", "se_ratio"),
}

# Sigmoid saturation bounds: one subnormal above 0 and one ulp below 1, so
# gate values always satisfy the strict open-interval invariant.
_SIGMOID_LO = 1e-308
_SIGMOID_HI = float(np.nextafter(1.0, 0.0))

# Tolerances for validating ordinal weights at evaluation time.  The hard
# invariant (exact simplex membership) is restored by project_to_simplex
# after every optimizer step; evaluation accepts a small slack so that
# finite-difference probing of the weight gradient stays within contract.
_SIMPLEX_SUM_TOL = 1e-3
_SIMPLEX_NEG_TOL = 1e-6


def sigmoid(t):
    """Logistic function 1/(1+exp(-t)), clamped just inside the open interval (0, 1).

    Evaluated branch-wise so large |t| never overflows.  Accepts scalars or
    arrays; returns a float for scalar input.
    """
    arr = np.asarray(t, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    e = np.exp(arr[~pos])
    out[~pos] = e / (1.0 + e)
    np.clip(out, _SIGMOID_LO, _SIGMOID_HI, out=out)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class GateValue:
    """Sigmoid gate retained from a gated-pool forward pass; 0 < g < 1."""

    g: float

    def __post_init__(self):
        if not (0.0 < self.g < 1.0):
            raise ParameterError(f"gate must lie strictly inside (0, 1), got {self.g}")


@dataclass(frozen=True, eq=False)
class Affine:
    """Affine map v -> weight @ v + bias, weight shaped (out_dim, in_dim)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weight", np.asarray(self.weight, dtype=np.float64))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=np.float64))
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("affine map needs a 2-D weight and a 1-D bias")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"weight rows {self.weight.shape[0]} != bias length {self.bias.shape[0]}"
            )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.in_dim,):
            raise ShapeError(f"expected input of shape ({self.in_dim},), got {v.shape}")
        return self.weight @ v + self.bias


@dataclass(frozen=True)
class PoolSpec:
    """A pooling method plus its window geometry and channel count."""

    method: str
    window: WindowSpec
    channels: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(
                f"unknown pooling method {self.method!r}; valid: {', '.join(METHODS)}"
            )
        if self.channels < 1:
            raise ConfigurationError(f"channels must be >= 1, got {self.channels}")

    @property
    def active_params(self) -> tuple[str, ...]:
        return ACTIVE_PARAMS[self.method]


@dataclass
class PoolParams:
    """Trainable state of one pooling block; only the method's fields are set.

    Scalar parameters (``p_raw``) are stored as shape-(1,) arrays so the
    optimizer can update every parameter in place through one interface.
    """

    conv_w: np.ndarray | None = None        # (n,) weights, shared across channels
    gate_w: np.ndarray | None = None        # (n,) gate weights, shared across channels
    ordinal_w: np.ndarray | None = None     # (n,) simplex weights over sorted slots
    p_raw: np.ndarray | None = None         # (1,) unconstrained norm exponent
    sharpness: float | None = None          # fixed log-sum-exp sharpness r > 0
    tau: np.ndarray | None = None           # (C,) per-channel temperatures
    se_f1: Affine | None = None             # squeeze branch: channels -> channels/ratio
    se_f2: Affine | None = None             # excite branch: channels/ratio -> channels
    se_ratio: int | None = None             # reduction ratio, must divide channels

    def snapshot(self) -> dict[str, list[float]]:
        """Flat copy of the populated fields, for serialization."""
        out: dict[str, list[float]] = {}
        for name in ("conv_w", "gate_w", "ordinal_w", "p_raw", "tau"):
            value = getattr(self, name)
            if value is not None:
                out[name] = [float(v) for v in np.asarray(value).reshape(-1)]
        if self.sharpness is not None:
            out["sharpness"] = [float(self.sharpness)]
        if self.se_f1 is not None:
            out["se_f1_weight"] = [float(v) for v in self.se_f1.weight.reshape(-1)]
            out["se_f1_bias"] = [float(v) for v in self.se_f1.bias.reshape(-1)]
        if self.se_f2 is not None:
            out["se_f2_weight"] = [float(v) for v in self.se_f2.weight.reshape(-1)]
            out["se_f2_bias"] = [float(v) for v in self.se_f2.bias.reshape(-1)]
        return out


def validate_pool_params(spec: PoolSpec, params: PoolParams) -> None:
    """Check that exactly the method's fields are populated and well-formed."""
    n = spec.window.n
    for name in spec.active_params:
        if getattr(params, name) is None:
            raise ConfigurationError(f"{spec.method} requires parameter {name!r}")
    if params.conv_w is not None and params.conv_w.shape != (n,):
        raise ShapeError(f"conv_w must have shape ({n},), got {params.conv_w.shape}")
    if params.gate_w is not None and params.gate_w.shape != (n,):
        raise ShapeError(f"gate_w must have shape ({n},), got {params.gate_w.shape}")
    if params.ordinal_w is not None:
        _check_ordinal_weights(np.asarray(params.ordinal_w), n)
    if params.sharpness is not None and not params.sharpness > 0:
        raise ParameterError(f"sharpness must be > 0, got {params.sharpness}")
    if params.tau is not None and params.tau.shape != (spec.channels,):
        raise ShapeError(
            f"tau must have shape ({spec.channels},), got {params.tau.shape}"
        )
    if spec.method in ("SESMP", "SEMP"):
        ratio = params.se_ratio
        if ratio is None or ratio < 1 or spec.channels % ratio != 0:
            raise ConfigurationError(
                f"reduction ratio {ratio!r} must divide channels={spec.channels}"
            )
        hidden = spec.channels // ratio
        if params.se_f1.in_dim != spec.channels or params.se_f1.out_dim != hidden:
            raise ConfigurationError(
                f"se_f1 must map {spec.channels} -> {hidden}, got "
                f"{params.se_f1.in_dim} -> {params.se_f1.out_dim}"
            )
        if params.se_f2.in_dim != hidden or params.se_f2.out_dim != spec.channels:
            raise ConfigurationError(
                f"se_f2 must map {hidden} -> {spec.channels}, got "
                f"{params.se_f2.in_dim} -> {params.se_f2.out_dim}"
            )


def _window_vector(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ShapeError("window must contain at least one entry")
    return arr


def _check_ordinal_weights(w: np.ndarray, n: int) -> None:
    if w.shape != (n,):
        raise ShapeError(f"ordinal weights must have shape ({n},), got {w.shape}")
    if (w < -_SIMPLEX_NEG_TOL).any() or abs(w.sum() - 1.0) > _SIMPLEX_SUM_TOL:
        raise ParameterError(
            "ordinal weights must be nonnegative and sum to 1 "
            f"(got sum={w.sum():.6g}, min={w.min():.6g})"
        )


def max_pool(x) -> float:
    """Largest window entry."""
    return float(_window_vector(x).max())


def avg_pool(x) -> float:
    """Arithmetic mean of the window."""
    return float(_window_vector(x).mean())


def nearest_pool(x) -> float:
    """First window entry, in row-major window order.

    This is nearest-neighbor downsampling: a fixed position is propagated
    and the rest of the window is ignored.  Applying it after a stride-1
    convolution reproduces a strided convolution.
    """
    return float(_window_vector(x)[0])


def conv_pool(x, weights) -> float:
    """Weighted sum of the window entries."""
    x = _window_vector(x)
    w = _window_vector(weights)
    if w.shape != x.shape:
        raise ShapeError(f"weights length {w.size} != window length {x.size}")
    return float((w * x).sum())


def gated_pool(x, gate_w) -> tuple[float, GateValue]:
    """Gate-blended average and max: g*avg(x) + (1-g)*max(x), g = sigmoid(w.x).

    Returns the pooled value together with the gate, which the backward pass
    reuses.  The gate weights are shared across channels.
    """
    x = _window_vector(x)
    w = _window_vector(gate_w)
    if w.shape != x.shape:
        raise ShapeError(f"gate weights length {w.size} != window length {x.size}")
    g = sigmoid((w * x).sum())
    gate = GateValue(g)
    return float(g * x.mean() + (1.0 - g) * x.max()), gate


def ordinal_pool(x, weights) -> float:
    """Convex combination of the window's entries sorted in ascending order.

    weights[0] multiplies the minimum and weights[-1] the maximum, so a
    one-hot last (first) weight vector reproduces max- (min-) pooling.
    The weights are shared across channels.
    """
    x = _window_vector(x)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    _check_ordinal_weights(w, x.size)
    return float((w * np.sort(x)).sum())


def project_to_simplex(weights) -> np.ndarray:
    """Clip negative weights to zero, then renormalize to sum to one.

    Applied to the ordinal weights after every optimizer step.  Raises
    :class:`DegenerateWeightsError` when no entry is positive: silently
    resetting to uniform weights would corrupt a training run, so the
    caller is expected to log the failure and abort the run instead.
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    clipped = np.maximum(w, 0.0)
    total = clipped.sum()
    if not total > 0.0:
        raise DegenerateWeightsError(
            "cannot project weights with no positive entry onto the simplex"
        )
    return clipped / total


def norm_exponent(p_raw: float) -> float:
    """Map the unconstrained parameter to the norm exponent: 1 + log(1 + exp(p_raw)).

    Keeps the exponent strictly inside (1, inf); evaluated via logaddexp so
    large |p_raw| cannot overflow.
    """
    return float(1.0 + np.logaddexp(0.0, float(p_raw)))


def learned_norm_pool(x, p_raw) -> float:
    """Power mean of the absolute window entries: ((1/n) sum |x_i|^p)^(1/p).

    The mean (not the sum) is used, so a constant window is a fixed point.
    The exponent p = 1 + log(1 + exp(p_raw)) stays in (1, inf).  Evaluation
    factors out max|x_i|, keeping every intermediate ratio in [0, 1] so that
    large exponents cannot overflow.  An all-zero window returns 0.
    """
    x = _window_vector(x)
    p = norm_exponent(p_raw)
    magnitudes = np.abs(x)
    peak = magnitudes.max()
    if peak == 0.0:
        return 0.0
    ratios = magnitudes / peak
    return float(peak * (ratios**p).mean() ** (1.0 / p))


def lse_pool(x, sharpness) -> float:
    """Log-sum-exp mean: (1/r) log((1/n) sum exp(r*x_i)) with sharpness r > 0.

    Converges to the maximum as r grows and to the average as r shrinks.
    Evaluated with the max-shift trick so the exponentials never overflow;
    the backward pass reuses the same shifted weights.
    """
    x = _window_vector(x)
    r = float(sharpness)
    if not math.isfinite(r) or r <= 0.0:
        raise ParameterError(f"sharpness must be a positive finite number, got {r}")
    z = r * x
    d = z.max()
    return float((d + np.log(np.exp(z - d).mean())) / r)


def smooth_max_pool(x, tau) -> float:
    """Softmax-weighted average: sum_i x_i * exp(tau*x_i) / sum_j exp(tau*x_j).

    A convex combination of the window entries for every temperature tau:
    tau = 0 gives the plain average exactly, tau -> +inf the maximum, and
    tau -> -inf the minimum.  The shifted evaluation subtracts
    d = max_i tau*x_i from every exponent argument (exact, because adding a
    scalar distributes over this operator), so no exponential can overflow.
    When several entries tie for the maximum their softmax weights split
    evenly, which the formula forces.
    """
    x = _window_vector(x)
    tau = float(tau)
    if not math.isfinite(tau) or not np.isfinite(x).all():
        raise ValueError("smooth max requires finite window entries and temperature")
    z = tau * x
    s = np.exp(z - z.max())
    return float((s * x).sum() / s.sum())


def global_avg_pool(x) -> np.ndarray:
    """Per-channel spatial mean of a (C, H, W) tensor; returns a length-C vector."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"expected a (C, H, W) tensor, got shape {x.shape}")
    return x.mean(axis=(1, 2))


def se_temperatures(mu, f1: Affine, f2: Affine, ratio: int) -> np.ndarray:
    """Squeeze-and-excitation branch: f2(relu(f1(mu))) on channel means mu.

    ``ratio`` is the reduction ratio: f1 maps C channel means down to
    C/ratio hidden units and f2 maps them back up, one output per channel.
    The outputs drive one temperature (or gate) per channel.
    """
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    channels = mu.size
    if ratio < 1 or channels % ratio != 0:
        raise ConfigurationError(
            f"reduction ratio {ratio} must divide the channel count {channels}"
        )
    hidden = channels // ratio
    if f1.in_dim != channels or f1.out_dim != hidden:
        raise ConfigurationError(
            f"f1 must map {channels} -> {hidden}, got {f1.in_dim} -> {f1.out_dim}"
        )
    if f2.in_dim != hidden or f2.out_dim != channels:
        raise ConfigurationError(
            f"f2 must map {hidden} -> {channels}, got {f2.in_dim} -> {f2.out_dim}"
        )
    return f2(np.maximum(f1(mu), 0.0))


def se_gated_max_pool(x, f1: Affine, f2: Affine, ratio: int, window: WindowSpec) -> np.ndarray:
    """Channel recalibration followed by max-pooling.

    Each channel is scaled by s_c = sigmoid(branch output), with the branch
    fed by the per-channel spatial means; max-pooling then downsamples the
    rescaled tensor.
    """
    x = as_tensor(x)
    mu = global_avg_pool(x)
    scales = sigmoid(se_temperatures(mu, f1, f2, ratio))
    return map_windows(x * scales[:, None, None], window, max_pool)


def fixed_temperatures(channels: int) -> np.ndarray:
    """Frozen temperature ladder tau_c = log(c / C) for c = 1..C.

    All values are <= 0; the last channel gets tau = 0 and therefore behaves
    exactly like average-pooling.
    """
    if channels < 1:
        raise ConfigurationError(f"channels must be >= 1, got {channels}")
    return np.log(np.arange(1, channels + 1, dtype=np.float64) / channels)
