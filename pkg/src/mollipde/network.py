"""Coordinate network with exact hand-rolled reverse-mode parameter gradients.

Architecture: per-axis Fourier feature embedding -> dense trunk (optional
residual skip and layer normalization per layer) -> two linear heads, one for
the raw field the smoothing layer consumes and one for the pointwise raw
parameter estimate.

Layer ordering is pre-activation normalization:

    z = x W + b;  z_hat = layernorm(z) (if enabled);  a = act(z_hat);
    out = a + x (if residual and the widths match)

Gradients are computed against an explicit flat parameter vector so the
optimizer and checkpoints never depend on the layer structure.  Everything is
numpy and deterministic: two forward passes with identical parameters are
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import accounting
from .errors import ConfigurationError, InvalidArgumentError, NonFiniteParameterError
from .grids import GridField
from .kernels import MollifierKernel, discretize
from .calculus import mollify

_LN_EPS = 1e-8


@dataclass(frozen=True)
class FourierEmbedding:
    """Maps each input axis to [sin(w_i x), cos(w_i x)] features.

    Frequencies are equally spaced in [-3, 3] (symmetric about zero), so the
    output dimension is 2 * count per input axis.
    """

    count: int
    input_dim: int

    def __post_init__(self):
        if self.count < 1:
            raise InvalidArgumentError("need at least one frequency")

    @property
    def frequencies(self) -> np.ndarray:
        if self.count == 1:
            return np.array([3.0])
        return np.linspace(-3.0, 3.0, self.count)

    @property
    def output_dim(self) -> int:
        return 2 * self.count * self.input_dim

    def __call__(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != self.input_dim:
            raise InvalidArgumentError(
                f"expected coordinates of shape (N, {self.input_dim})")
        omega = self.frequencies
        feats = []
        for axis in range(self.input_dim):
            phase = coords[:, axis:axis + 1] * omega[None, :]
            feats.append(np.sin(phase))
            feats.append(np.cos(phase))
        return np.concatenate(feats, axis=1)


class DenseLayer:
    def __init__(self, in_dim: int, out_dim: int, activation: str = "tanh",
                 use_residual: bool = False, use_layernorm: bool = False,
                 rng: np.random.Generator | None = None):
        if activation not in ("tanh", "relu", "identity"):
            raise InvalidArgumentError(f"unknown activation {activation!r}")
        if use_residual and in_dim != out_dim:
            raise ConfigurationError(
                f"residual connection needs matching widths, got {in_dim} -> {out_dim}")
        rng = rng or np.random.default_rng()
        bound = np.sqrt(6.0 / (in_dim + out_dim))
        self.weights = rng.uniform(-bound, bound, size=(in_dim, out_dim))
        self.bias = np.zeros(out_dim)
        self.activation = activation
        self.use_residual = use_residual
        self.use_layernorm = use_layernorm
        self.gain = np.ones(out_dim) if use_layernorm else None
        self.shift = np.zeros(out_dim) if use_layernorm else None

    def parameters(self):
        yield self.weights
        yield self.bias
        if self.use_layernorm:
            yield self.gain
            yield self.shift

    def forward(self, x: np.ndarray):
        z = x @ self.weights + self.bias
        cache = {"x": x, "z": z}
        if self.use_layernorm:
            mu = z.mean(axis=1, keepdims=True)
            var = z.var(axis=1, keepdims=True)
            inv_std = 1.0 / np.sqrt(var + _LN_EPS)
            z_hat = (z - mu) * inv_std
            pre = z_hat * self.gain + self.shift
            cache.update(z_hat=z_hat, inv_std=inv_std)
        else:
            pre = z
        if self.activation == "tanh":
            a = np.tanh(pre)
            cache["act"] = a
        elif self.activation == "relu":
            a = np.maximum(pre, 0.0)
            cache["pre"] = pre
        else:
            a = pre
        out = a + x if self.use_residual else a
        accounting.note_array(out)
        return out, cache

    def backward(self, d_out: np.ndarray, cache):
        """Returns (d_input, [param grads in parameters() order])."""
        d_a = d_out
        if self.activation == "tanh":
            d_pre = d_a * (1.0 - cache["act"] ** 2)
        elif self.activation == "relu":
            d_pre = d_a * (cache["pre"] > 0.0)
        else:
            d_pre = d_a
        if self.use_layernorm:
            z_hat, inv_std = cache["z_hat"], cache["inv_std"]
            d_gain = np.sum(d_pre * z_hat, axis=0)
            d_shift = np.sum(d_pre, axis=0)
            d_hat = d_pre * self.gain
            d_z = inv_std * (d_hat - d_hat.mean(axis=1, keepdims=True)
                             - z_hat * (d_hat * z_hat).mean(axis=1, keepdims=True))
        else:
            d_z = d_pre
        x = cache["x"]
        d_w = x.T @ d_z
        d_b = d_z.sum(axis=0)
        d_x = d_z @ self.weights.T
        if self.use_residual:
            d_x = d_x + d_out
        grads = [d_w, d_b]
        if self.use_layernorm:
            grads += [d_gain, d_shift]
        return d_x, grads


class GradientTape:
    """Flat per-parameter gradient accumulator aligned with the parameter vector."""

    def __init__(self, size: int):
        self.values = np.zeros(size)

    def zero(self):
        self.values[:] = 0.0

    def __len__(self):
        return self.values.size


class NeuralField:
    """Trunk network with two scalar heads sharing the same features."""

    def __init__(self, input_dim: int, width: int, depth: int,
                 activation: str = "tanh", fourier_count: int = 32,
                 use_residual: bool = True, use_layernorm: bool = True,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.embedding = FourierEmbedding(count=fourier_count, input_dim=input_dim)
        self.layers = []
        in_dim = self.embedding.output_dim
        for _ in range(depth):
            self.layers.append(DenseLayer(
                in_dim, width, activation=activation,
                use_residual=use_residual and in_dim == width,
                use_layernorm=use_layernorm, rng=rng))
            in_dim = width
        self.head_g = DenseLayer(width, 1, activation="identity", rng=rng)
        self.head_lambda = DenseLayer(width, 1, activation="identity", rng=rng)

    # -- parameter vector view ------------------------------------------------

    def _all_layers(self):
        yield from self.layers
        yield self.head_g
        yield self.head_lambda

    def parameter_arrays(self):
        for layer in self._all_layers():
            yield from layer.parameters()

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameter_arrays())

    def get_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameter_arrays()])

    def set_parameters(self, vector: np.ndarray):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.n_parameters,):
            raise InvalidArgumentError(
                f"parameter vector must have length {self.n_parameters}")
        offset = 0
        for p in self.parameter_arrays():
            p[...] = vector[offset:offset + p.size].reshape(p.shape)
            offset += p.size

    def new_tape(self) -> GradientTape:
        return GradientTape(self.n_parameters)

    # -- forward / backward ----------------------------------------------------

    def forward(self, coords: np.ndarray):
        """Evaluate both heads at coordinates of shape (N, input_dim)."""
        for p in self.parameter_arrays():
            if not np.all(np.isfinite(p)):
                raise NonFiniteParameterError("network parameters contain NaN/inf")
        x = self.embedding(coords)
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        g, cache_g = self.head_g.forward(x)
        lam, cache_l = self.head_lambda.forward(x)
        state = {"caches": caches, "cache_g": cache_g, "cache_l": cache_l}
        return g[:, 0], lam[:, 0], state

    def backward(self, state, cot_g: np.ndarray, cot_lambda: np.ndarray,
                 tape: GradientTape | None = None) -> GradientTape:
        """Exact gradient of <g, cot_g> + <lambda, cot_lambda> w.r.t. parameters."""
        cot_g = np.asarray(cot_g, dtype=float)
        cot_lambda = np.asarray(cot_lambda, dtype=float)
        n = state["cache_g"]["x"].shape[0]
        if cot_g.shape != (n,) or cot_lambda.shape != (n,):
            raise ConfigurationError("cotangent shapes do not match the forward pass")
        tape = tape or self.new_tape()
        grads_rev = []
        d_x_g, grads_g = self.head_g.backward(cot_g[:, None], state["cache_g"])
        d_x_l, grads_l = self.head_lambda.backward(cot_lambda[:, None], state["cache_l"])
        grads_rev.append(grads_l)
        grads_rev.append(grads_g)
        d_x = d_x_g + d_x_l
        for layer, cache in zip(reversed(self.layers), reversed(state["caches"])):
            d_x, grads = layer.backward(d_x, cache)
            grads_rev.append(grads)
        flat = []
        for grads in reversed(grads_rev):
            flat.extend(g.ravel() for g in grads)
        tape.values += np.concatenate(flat)
        return tape

    # -- grid-level API ----------------------------------------------------------

    def trunk_features(self, coords: np.ndarray) -> np.ndarray:
        """Trunk output (the heads' shared input features) at coordinates."""
        x = self.embedding(coords)
        for layer in self.layers:
            x, _ = layer.forward(x)
        return x

    def forward_on_grid(self, grid: GridField):
        """Evaluate both heads on every grid node; returns two fields."""
        g, lam, state = self.forward(grid.coordinates())
        g_field = GridField(g.reshape(grid.shape), spacing=grid.spacing,
                            origin=grid.origin)
        lam_field = GridField(lam.reshape(grid.shape), spacing=grid.spacing,
                              origin=grid.origin)
        return g_field, lam_field, state

    def backward_on_grid(self, state, cot_g: GridField, cot_lambda: GridField,
                         tape: GradientTape | None = None) -> GradientTape:
        return self.backward(state, cot_g.values.ravel(),
                             cot_lambda.values.ravel(), tape=tape)

    def predict_u(self, grid: GridField, kernel: MollifierKernel) -> GridField:
        """Smoothed field estimate: zeroth-order mollification of the g head."""
        g_field, _, _ = self.forward_on_grid(grid)
        stencil = discretize(kernel, grid.spacing, (0,) * grid.dimension)
        return mollify(g_field, stencil)


def save_checkpoint(net: NeuralField, path) -> None:
    """Parameter checkpoint: int64 array count, then per array int64 ndim and
    int64 dims, then all float64 payloads in parameter order (little-endian)."""
    arrays = list(net.parameter_arrays())
    with open(path, "wb") as fh:
        fh.write(np.int64(len(arrays)).tobytes())
        for arr in arrays:
            fh.write(np.int64(arr.ndim).tobytes())
            fh.write(np.asarray(arr.shape, dtype="<i8").tobytes())
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(net: NeuralField, path) -> None:
    """Load parameters saved by :func:`save_checkpoint` into ``net``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    count = int(np.frombuffer(raw, dtype="<i8", count=1)[0])
    off = 8
    shapes = []
    for _ in range(count):
        ndim = int(np.frombuffer(raw, dtype="<i8", count=1, offset=off)[0])
        off += 8
        shape = tuple(int(s) for s in np.frombuffer(raw, dtype="<i8", count=ndim, offset=off))
        off += 8 * ndim
        shapes.append(shape)
    arrays = list(net.parameter_arrays())
    if len(arrays) != count or any(a.shape != s for a, s in zip(arrays, shapes)):
        raise ConfigurationError(f"checkpoint {path} does not match the network layout")
    for arr in arrays:
        n = arr.size
        arr[...] = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(arr.shape)
        off += 8 * n


ARCHITECTURE_PRESETS = {
    # desk scale: fast enough for CI while keeping the full structure
    "desk": dict(width=64, depth=4, activation="tanh", fourier_count=32),
    "desk-small": dict(width=16, depth=2, activation="tanh", fourier_count=8),
    # benchmark-scale presets
    "langevin-bench": dict(width=1000, depth=7, activation="relu", fourier_count=32),
    "field-bench": dict(width=250, depth=10, activation="tanh", fourier_count=32),
}


def build_network(preset: str, input_dim: int, seed: int = 0, **overrides) -> NeuralField:
    if preset not in ARCHITECTURE_PRESETS:
        raise ConfigurationError(
            f"unknown architecture preset {preset!r}; options: {sorted(ARCHITECTURE_PRESETS)}")
    cfg = dict(ARCHITECTURE_PRESETS[preset])
    cfg.update(overrides)
    return NeuralField(input_dim=input_dim, seed=seed, **cfg)
