"""Batched layers for the toy classifier: convolution, pooling blocks, head.

Everything operates on (B, C, H, W) float64 arrays with explicit forward and
backward methods; each layer caches what its backward pass needs.  The
pooling block evaluates whole window grids at once using the same formulas
and reduction order as the window-level operators in :mod:`poolbench.ops`,
so the two paths agree to machine precision (the test suite asserts this for
every method).

Layers expose ``params()`` and ``grads()`` dicts of like-named arrays;
gradients accumulate per backward call into ``grads()`` entries that the
optimizer reads and the trainer zeroes between steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import (
    Affine,
    ConfigurationError,
    PoolParams,
    PoolSpec,
    fixed_temperatures,
    norm_exponent,
    sigmoid,
    validate_pool_params,
)
from .tensor import WindowSpec, output_size

__all__ = [
    "sliding_windows",
    "scatter_windows",
    "Conv2D",
    "ReLU",
    "Flatten",
    "Linear",
    "PoolingBlock",
    "ToyNetConfig",
    "ToyNet",
    "init_pool_params",
    "softmax_cross_entropy",
]


def sliding_windows(x: np.ndarray, spec: WindowSpec) -> np.ndarray:
    """All pooling windows of a batch: (B, C, H, W) -> (B, C, H', W', k1*k2)."""
    b, c, h, w = x.shape
    h_out, w_out = output_size(h, w, spec)
    view = np.lib.stride_tricks.sliding_window_view(x, (spec.k1, spec.k2), axis=(2, 3))
    view = view[:, :, :: spec.s1, :: spec.s2]
    return np.ascontiguousarray(view).reshape(b, c, h_out, w_out, spec.n)


def scatter_windows(d_windows: np.ndarray, shape, spec: WindowSpec) -> np.ndarray:
    """Accumulate per-window gradients back onto the input grid.

    Inverse of :func:`sliding_windows` in the adjoint sense; handles
    overlapping windows by accumulating one window offset at a time.
    """
    b, c, h, w = shape
    _, _, h_out, w_out, _ = d_windows.shape
    dx = np.zeros(shape)
    rows = spec.s1 * np.arange(h_out)
    cols = spec.s2 * np.arange(w_out)
    for u in range(spec.k1):
        for v in range(spec.k2):
            dx[:, :, rows[:, None] + u, cols[None, :] + v] += d_windows[
                ..., u * spec.k2 + v
            ]
    return dx


class Conv2D:
    """Valid (unpadded) stride-1 convolution via im2col + matmul."""

    def __init__(self, in_channels, out_channels, kernel=3, rng=None):
        fan_in = in_channels * kernel * kernel
        rng = rng or np.random.default_rng()
        # He-normal initialization: std = sqrt(2 / fan_in)
        self.weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_channels, in_channels, kernel, kernel))
        self.bias = np.zeros(out_channels)
        self.kernel = kernel
        self.grads_ = {"weight": np.zeros_like(self.weight), "bias": np.zeros_like(self.bias)}

    def forward(self, x):
        b, c, h, w = x.shape
        k = self.kernel
        patches = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        # (B, C, H', W', k, k) -> (B, H', W', C*k*k)
        patches = np.ascontiguousarray(patches.transpose(0, 2, 3, 1, 4, 5))
        self._in_shape = x.shape
        self._patches = patches.reshape(b, h - k + 1, w - k + 1, c * k * k)
        flat = self.weight.reshape(self.weight.shape[0], -1)
        out = self._patches @ flat.T + self.bias
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(self, dy):
        b, o, h_out, w_out = dy.shape
        k = self.kernel
        dyt = dy.transpose(0, 2, 3, 1).reshape(-1, o)
        patches = self._patches.reshape(-1, self._patches.shape[-1])
        self.grads_["weight"] += (dyt.T @ patches).reshape(self.weight.shape)
        self.grads_["bias"] += dy.sum(axis=(0, 2, 3))
        d_patches = (dyt @ self.weight.reshape(o, -1)).reshape(
            b, h_out, w_out, self._in_shape[1], k, k
        )
        dx = np.zeros(self._in_shape)
        for u in range(k):
            for v in range(k):
                dx[:, :, u : u + h_out, v : v + w_out] += d_patches[
                    :, :, :, :, u, v
                ].transpose(0, 3, 1, 2)
        return dx

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return self.grads_


class ReLU:
    def forward(self, x):
        self._mask = x > 0.0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask

    def params(self):
        return {}

    def grads(self):
        return {}


class Flatten:
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def params(self):
        return {}

    def grads(self):
        return {}


class Linear:
    """Affine head; weights drawn from N(0, 0.01), zero bias."""

    def __init__(self, in_features, out_features, rng=None):
        rng = rng or np.random.default_rng()
        self.weight = rng.normal(0.0, 0.01, (out_features, in_features))
        self.bias = np.zeros(out_features)
        self.grads_ = {"weight": np.zeros_like(self.weight), "bias": np.zeros_like(self.bias)}

    def forward(self, x):
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, dy):
        self.grads_["weight"] += dy.T @ self._x
        self.grads_["bias"] += dy.sum(axis=0)
        return dy @ self.weight

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return self.grads_


class PoolingBlock:
    """One downsampling stage evaluating any of the pooling methods.

    Parameters shared across channels (conv/gate/ordinal weights, the norm
    exponent) are single vectors per block; temperatures are per channel.
    The backward pass recomputes softmax weights from cached shifted logits
    instead of caching the probabilities, trading memory for one exp pass.
    """

    #: trainable parameter names per method (LSE sharpness and the fixed
    #: temperature ladder are hyperparameters, not trained)
    TRAINABLE = {
        "MP": (),
        "AP": (),
        "NN": (),
        "CONV": ("conv_w",),
        "GP": ("gate_w",),
        "OP": ("ordinal_w",),
        "LNP": ("p_raw",),
        "LSE": (),
        "SMP_fixed": (),
        "SMP_trainable": ("tau",),
        "SESMP": ("se_f1_weight", "se_f1_bias", "se_f2_weight", "se_f2_bias"),
        "SEMP": ("se_f1_weight", "se_f1_bias", "se_f2_weight", "se_f2_bias"),
    }

    def __init__(self, spec: PoolSpec, pool_params: PoolParams):
        validate_pool_params(spec, pool_params)
        self.spec = spec
        self.window = spec.window
        self.method = spec.method
        self.pool_params = pool_params
        self.grads_ = {name: np.zeros_like(arr) for name, arr in self.params().items()}

    # -- parameter plumbing -------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        p = self.pool_params
        out = {}
        for name in self.TRAINABLE[self.method]:
            if name.startswith("se_"):
                affine = p.se_f1 if "f1" in name else p.se_f2
                out[name] = affine.weight if name.endswith("weight") else affine.bias
            else:
                out[name] = getattr(p, name)
        return out

    def grads(self) -> dict[str, np.ndarray]:
        return self.grads_

    # -- forward ------------------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        if not np.isfinite(x).all():
            raise ValueError("pooling input contains non-finite values")
        self._x_shape = x.shape
        m = self.method
        if m == "SEMP":
            return self._forward_semp(x)
        if m == "SESMP":
            return self._forward_sesmp(x)
        win = sliding_windows(x, self.window)
        self._windows = win
        p = self.pool_params
        if m == "MP":
            self._argmax = win.argmax(axis=-1)
            return win.max(axis=-1)
        if m == "AP":
            return win.mean(axis=-1)
        if m == "NN":
            return win[..., 0].copy()
        if m == "CONV":
            return (win * p.conv_w).sum(axis=-1)
        if m == "GP":
            g = sigmoid((win * p.gate_w).sum(axis=-1))
            self._gate = g
            self._argmax = win.argmax(axis=-1)
            self._mean = win.mean(axis=-1)
            self._peak = win.max(axis=-1)
            return g * self._mean + (1.0 - g) * self._peak
        if m == "OP":
            self._order = np.argsort(win, axis=-1, kind="stable")
            self._sorted = np.take_along_axis(win, self._order, axis=-1)
            return (self._sorted * p.ordinal_w).sum(axis=-1)
        if m == "LNP":
            return self._forward_lnp(win)
        if m == "LSE":
            z = p.sharpness * win
            self._shifted = z - z.max(axis=-1, keepdims=True)
            d = z.max(axis=-1)
            return (d + np.log(np.exp(self._shifted).mean(axis=-1))) / p.sharpness
        if m in ("SMP_fixed", "SMP_trainable"):
            return self._forward_smp(win, p.tau[None, :, None, None])
        raise ConfigurationError(f"unknown pooling method {m!r}")  # pragma: no cover

    def _forward_lnp(self, win):
        p = norm_exponent(self.pool_params.p_raw[0])
        magnitudes = np.abs(win)
        peak = magnitudes.max(axis=-1)
        safe = peak > 0.0
        ratios = magnitudes / np.where(safe, peak, 1.0)[..., None]
        powered = ratios**p
        mean_pow = powered.mean(axis=-1)
        self._lnp = (p, peak, safe, ratios, powered, mean_pow)
        return np.where(safe, peak * mean_pow ** (1.0 / p), 0.0)

    def _forward_smp(self, win, tau):
        # tau broadcasts over (B, C, H', W'): per channel, or per sample and
        # channel for the branch-computed variant
        z = tau[..., None] * win
        self._shifted = z - z.max(axis=-1, keepdims=True)
        s = np.exp(self._shifted)
        y = (s * win).sum(axis=-1) / s.sum(axis=-1)
        self._tau_field = tau
        self._y = y
        return y

    def _branch(self, x):
        # squeeze: per-channel spatial means; excite: affine-ReLU-affine
        p = self.pool_params
        mu = x.mean(axis=(2, 3))
        hidden_pre = mu @ p.se_f1.weight.T + p.se_f1.bias
        hidden = np.maximum(hidden_pre, 0.0)
        out = hidden @ p.se_f2.weight.T + p.se_f2.bias
        self._mu, self._hidden_pre, self._hidden = mu, hidden_pre, hidden
        return out

    def _branch_backward(self, d_out):
        p = self.pool_params
        self.grads_["se_f2_weight"] += d_out.T @ self._hidden
        self.grads_["se_f2_bias"] += d_out.sum(axis=0)
        d_hidden = d_out @ p.se_f2.weight
        d_hidden_pre = d_hidden * (self._hidden_pre > 0.0)
        self.grads_["se_f1_weight"] += d_hidden_pre.T @ self._mu
        self.grads_["se_f1_bias"] += d_hidden_pre.sum(axis=0)
        d_mu = d_hidden_pre @ p.se_f1.weight
        b, c, h, w = self._x_shape
        return d_mu[:, :, None, None] / (h * w) * np.ones((1, 1, h, w))

    def _forward_sesmp(self, x):
        tau = self._branch(x)  # (B, C)
        win = sliding_windows(x, self.window)
        self._windows = win
        return self._forward_smp(win, tau[:, :, None, None])

    def _forward_semp(self, x):
        scales = sigmoid(self._branch(x))  # (B, C)
        self._semp_scales = scales
        self._semp_x = x
        scaled = x * scales[:, :, None, None]
        win = sliding_windows(scaled, self.window)
        self._windows = win
        self._argmax = win.argmax(axis=-1)
        return win.max(axis=-1)

    # -- backward -----------------------------------------------------------

    def backward(self, dy: np.ndarray) -> np.ndarray:
        m = self.method
        p = self.pool_params
        win = self._windows
        n = self.window.n
        if m == "MP":
            d_win = np.zeros_like(win)
            np.put_along_axis(d_win, self._argmax[..., None], dy[..., None], axis=-1)
        elif m == "AP":
            d_win = np.broadcast_to(dy[..., None] / n, win.shape).copy()
        elif m == "NN":
            d_win = np.zeros_like(win)
            d_win[..., 0] = dy
        elif m == "CONV":
            d_win = dy[..., None] * p.conv_w
            self.grads_["conv_w"] += (win * dy[..., None]).sum(axis=(0, 1, 2, 3))
        elif m == "GP":
            g = self._gate
            swing = g * (1.0 - g) * (self._mean - self._peak)
            d_win = dy[..., None] * (g[..., None] / n + swing[..., None] * p.gate_w)
            np.put_along_axis(
                d_win,
                self._argmax[..., None],
                np.take_along_axis(d_win, self._argmax[..., None], axis=-1)
                + ((1.0 - g) * dy)[..., None],
                axis=-1,
            )
            self.grads_["gate_w"] += (win * (dy * swing)[..., None]).sum(
                axis=(0, 1, 2, 3)
            )
        elif m == "OP":
            d_win = np.empty_like(win)
            np.put_along_axis(
                d_win,
                self._order,
                np.broadcast_to(p.ordinal_w, win.shape) * dy[..., None],
                axis=-1,
            )
            self.grads_["ordinal_w"] += (self._sorted * dy[..., None]).sum(
                axis=(0, 1, 2, 3)
            )
        elif m == "LNP":
            d_win = self._backward_lnp(dy)
        elif m == "LSE":
            s = np.exp(self._shifted)
            s /= s.sum(axis=-1, keepdims=True)
            d_win = dy[..., None] * s
        elif m in ("SMP_fixed", "SMP_trainable"):
            d_win, d_tau_field = self._backward_smp(dy)
            if m == "SMP_trainable":
                self.grads_["tau"] += d_tau_field.sum(axis=(0, 2, 3))
        elif m == "SESMP":
            d_win, d_tau_field = self._backward_smp(dy)
            dx = scatter_windows(d_win, self._x_shape, self.window)
            dx += self._branch_backward(d_tau_field.sum(axis=(2, 3)))
            return dx
        elif m == "SEMP":
            d_win = np.zeros_like(win)
            np.put_along_axis(d_win, self._argmax[..., None], dy[..., None], axis=-1)
            d_scaled = scatter_windows(d_win, self._x_shape, self.window)
            scales = self._semp_scales
            dx = d_scaled * scales[:, :, None, None]
            d_scales = (d_scaled * self._semp_x).sum(axis=(2, 3))
            d_branch = d_scales * scales * (1.0 - scales)
            dx += self._branch_backward(d_branch)
            return dx
        else:  # pragma: no cover
            raise ConfigurationError(f"unknown pooling method {m!r}")
        return scatter_windows(d_win, self._x_shape, self.window)

    def _backward_lnp(self, dy):
        p, peak, safe, ratios, powered, mean_pow = self._lnp
        win = self._windows
        n = self.window.n
        safe_mean = np.where(safe, mean_pow, 1.0)
        d_win = (
            dy[..., None]
            * np.sign(win)
            * ratios ** (p - 1.0)
            * (safe_mean ** (1.0 / p - 1.0))[..., None]
            / n
        )
        d_win *= safe[..., None]
        y = np.where(safe, peak * mean_pow ** (1.0 / p), 0.0)
        log_ratios = np.where(ratios > 0.0, np.log(np.where(ratios > 0.0, ratios, 1.0)), 0.0)
        weighted = (powered * log_ratios).sum(axis=-1)
        dy_dp = np.where(
            safe,
            y * (weighted / (p * np.where(safe, powered.sum(axis=-1), 1.0)) - np.log(safe_mean) / p**2),
            0.0,
        )
        d_p = (dy * dy_dp).sum()
        self.grads_["p_raw"] += d_p * sigmoid(float(self.pool_params.p_raw[0]))
        return d_win

    def _backward_smp(self, dy):
        win = self._windows
        s = np.exp(self._shifted)
        s /= s.sum(axis=-1, keepdims=True)
        centered = win - self._y[..., None]
        d_win = dy[..., None] * s * (1.0 + self._tau_field[..., None] * centered)
        d_tau_field = dy * (s * centered**2).sum(axis=-1)
        return d_win, d_tau_field


@dataclass(frozen=True)
class ToyNetConfig:
    """Two conv+pool stages and an affine head on small single-channel images.

    Every pooling stage halves the spatial resolution (2x2 windows, stride
    2).  The squeeze-and-excitation reduction ratio defaults to 4 because
    the widest toy stage has 16 channels; the canonical ratio of 16 needs
    hundreds of channels to leave a usable hidden width.
    """

    classes: int = 4
    in_channels: int = 1
    image_size: int = 16
    stage_channels: tuple[int, int] = (8, 16)
    window: WindowSpec = WindowSpec(2, 2, 2, 2)
    conv_kernel: int = 3
    se_ratio: int = 4
    lse_sharpness: float = 1.0

    def __post_init__(self):
        if (self.window.k1, self.window.k2) != (2, 2) or (
            self.window.s1,
            self.window.s2,
        ) != (2, 2):
            raise ConfigurationError("pooling stages must halve resolution: 2x2 windows, stride 2")
        if self.classes < 2:
            raise ConfigurationError(f"need at least 2 classes, got {self.classes}")
        for c in self.stage_channels:
            if c % self.se_ratio != 0:
                raise ConfigurationError(
                    f"se_ratio {self.se_ratio} must divide every stage width, got {c}"
                )

    def feature_size(self) -> int:
        size = self.image_size
        for _ in self.stage_channels:
            size = size - (self.conv_kernel - 1)
            size, _ = output_size(size, size, self.window)
        return self.stage_channels[-1] * size * size


def init_pool_params(spec: PoolSpec, rng, se_ratio=4, lse_sharpness=1.0) -> PoolParams:
    """Initial trainable state for one pooling block.

    Gate weights start at zero (an unbiased average/max blend), conv and
    ordinal weights start uniform (exactly average-pooling), the norm
    exponent starts at p = 3, trainable temperatures are standard normal,
    fixed temperatures follow the log(c/C) ladder, and the branch affines
    use He-uniform weights with zero biases.
    """
    n = spec.window.n
    c = spec.channels
    method = spec.method
    if method == "CONV":
        return PoolParams(conv_w=np.full(n, 1.0 / n))
    if method == "GP":
        return PoolParams(gate_w=np.zeros(n))
    if method == "OP":
        return PoolParams(ordinal_w=np.full(n, 1.0 / n))
    if method == "LNP":
        return PoolParams(p_raw=np.array([np.log(np.expm1(2.0))]))  # p = 3
    if method == "LSE":
        return PoolParams(sharpness=lse_sharpness)
    if method == "SMP_trainable":
        return PoolParams(tau=rng.standard_normal(c))
    if method == "SMP_fixed":
        return PoolParams(tau=fixed_temperatures(c))
    if method in ("SESMP", "SEMP"):
        if c % se_ratio != 0:
            raise ConfigurationError(f"se_ratio {se_ratio} must divide channels {c}")
        hidden = c // se_ratio
        bound1 = np.sqrt(6.0 / c)
        bound2 = np.sqrt(6.0 / hidden)
        return PoolParams(
            se_f1=Affine(rng.uniform(-bound1, bound1, (hidden, c)), np.zeros(hidden)),
            se_f2=Affine(rng.uniform(-bound2, bound2, (c, hidden)), np.zeros(c)),
            se_ratio=se_ratio,
        )
    return PoolParams()


class ToyNet:
    """conv-ReLU-pool, conv-ReLU-pool, flatten, affine logits."""

    def __init__(self, config: ToyNetConfig, method: str, rng):
        self.config = config
        self.method = method
        c1, c2 = config.stage_channels
        self.conv1 = Conv2D(config.in_channels, c1, config.conv_kernel, rng)
        self.pool1 = PoolingBlock(
            PoolSpec(method, config.window, c1),
            init_pool_params(
                PoolSpec(method, config.window, c1),
                rng,
                se_ratio=config.se_ratio,
                lse_sharpness=config.lse_sharpness,
            ),
        )
        self.conv2 = Conv2D(c1, c2, config.conv_kernel, rng)
        self.pool2 = PoolingBlock(
            PoolSpec(method, config.window, c2),
            init_pool_params(
                PoolSpec(method, config.window, c2),
                rng,
                se_ratio=config.se_ratio,
                lse_sharpness=config.lse_sharpness,
            ),
        )
        self.relu1 = ReLU()
        self.relu2 = ReLU()
        self.flatten = Flatten()
        self.head = Linear(config.feature_size(), config.classes, rng)
        self._stack = [
            ("conv1", self.conv1),
            ("relu1", self.relu1),
            ("pool1", self.pool1),
            ("conv2", self.conv2),
            ("relu2", self.relu2),
            ("pool2", self.pool2),
            ("flatten", self.flatten),
            ("head", self.head),
        ]

    @property
    def pooling_blocks(self) -> list[PoolingBlock]:
        return [self.pool1, self.pool2]

    def forward(self, x):
        for _, layer in self._stack:
            x = layer.forward(x)
        return x

    def backward(self, d_logits):
        for _, layer in reversed(self._stack):
            d_logits = layer.backward(d_logits)
        return d_logits

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self._stack:
            for pname, arr in layer.params().items():
                out[f"{name}.{pname}"] = arr
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self._stack:
            for pname, arr in layer.grads().items():
                out[f"{name}.{pname}"] = arr
        return out

    def zero_grads(self):
        for _, layer in self._stack:
            for arr in layer.grads().values():
                arr[...] = 0.0

    def simplex_params(self) -> tuple[str, ...]:
        """Names of parameters the optimizer must re-project onto the simplex."""
        if self.method != "OP":
            return ()
        return ("pool1.ordinal_w", "pool2.ordinal_w")


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of softmax(logits) against integer labels.

    Returns (loss, d_logits, accuracy); d_logits is already divided by the
    batch size.  Evaluated via the log-sum-exp shift, so uniform zero logits
    give exactly log(K).
    """
    labels = np.asarray(labels)
    b = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    loss = float(-log_probs[np.arange(b), labels].mean())
    d_logits = np.exp(log_probs)
    d_logits[np.arange(b), labels] -= 1.0
    d_logits /= b
    accuracy = float((logits.argmax(axis=1) == labels).mean())
    return loss, d_logits, accuracy
