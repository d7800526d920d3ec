"""Softplus MLP f(x; theta, z) with an exact input-gradient pass and its reverse mode.

Each hidden layer computes ``a' = softplus(W [a] + b)``; the input Jacobian is
carried alongside the activations, ``J' = diag(softplus'(W a + b)) W J``, so a
single forward pass yields both ``f`` and ``grad_x f``. ``backward`` then
differentiates that augmented graph with respect to every weight and bias
(and the latent code), which needs the second derivative of the activation.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import kernels

SQRT2 = math.sqrt(2.0)


def _activate(t, beta: float):
    arr = np.asarray(t, dtype=np.float64)
    act, slope = kernels.softplus_pair(arr.reshape(1, -1), float(beta))
    return act.reshape(arr.shape), slope.reshape(arr.shape)
CHECKPOINT_MAGIC = b"IMPSDF-NET"
CHECKPOINT_VERSION = 1
_CALIBRATION_SAMPLES = 4096


def softplus(t, beta: float):
    """ln(1 + exp(beta t)) / beta without overflow."""
    return _activate(t, beta)[0]


def softplus_prime(t, beta: float):
    return _activate(t, beta)[1]


def softplus_second(t, beta: float):
    s = softplus_prime(t, beta)
    return beta * s * (1.0 - s)


@dataclass(frozen=True)
class NetworkSpec:
    """Layer layout.

    ``hidden_dims[j]`` is the output width of linear layer ``j``; a final
    linear layer maps to a scalar. Layer ``j`` in ``skip_layers`` receives
    ``[a, x, z] / sqrt(2)`` instead of ``a``.
    """

    input_dim: int
    hidden_dims: tuple
    latent_dim: int = 0
    skip_layers: frozenset = frozenset()
    softplus_beta: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(w) for w in self.hidden_dims))
        object.__setattr__(self, "skip_layers", frozenset(int(j) for j in self.skip_layers))
        if self.input_dim not in (2, 3):
            raise ValueError(f"input_dim must be 2 or 3, got {self.input_dim}")
        if self.latent_dim < 0:
            raise ValueError("latent_dim must be >= 0")
        if not self.hidden_dims or any(w < 1 for w in self.hidden_dims):
            raise ValueError("hidden_dims must be a non-empty list of positive widths")
        if not self.softplus_beta > 0:
            raise ValueError("softplus_beta must be positive")
        n = len(self.hidden_dims)
        for j in self.skip_layers:
            if not 1 <= j <= n - 1:
                raise ValueError(f"skip layer {j} must be a hidden layer in [1, {n - 1}]")
            if self.hidden_dims[j - 1] + self.in_features != self.hidden_dims[j]:
                raise ValueError(
                    f"skip layer {j}: preceding width {self.hidden_dims[j - 1]} + "
                    f"{self.in_features} inputs must equal declared width {self.hidden_dims[j]}"
                )

    @property
    def in_features(self) -> int:
        return self.input_dim + self.latent_dim

    @property
    def n_linear(self) -> int:
        return len(self.hidden_dims) + 1

    def layer_shapes(self) -> list:
        """(fan_out, fan_in) of every linear layer."""
        shapes = []
        prev = self.in_features
        for j, out in enumerate(self.hidden_dims + (1,)):
            fan_in = prev + (self.in_features if j in self.skip_layers else 0)
            shapes.append((out, fan_in))
            prev = out
        return shapes

    @classmethod
    def profile(cls, input_dim: int, n_layers: int = 4, width: int = 128,
                latent_dim: int = 0, softplus_beta: float = 100.0, skip: bool = True) -> "NetworkSpec":
        """Uniform-width net with one skip connection into the middle layer."""
        dims = [width] * n_layers
        skips = frozenset()
        if skip and n_layers >= 2:
            mid = n_layers // 2
            dims[mid - 1] = width - (input_dim + latent_dim)
            if dims[mid - 1] < 1:
                raise ValueError("width too small for the skip concatenation")
            skips = frozenset({mid})
        return cls(input_dim, tuple(dims), latent_dim, skips, softplus_beta)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "latent_dim": self.latent_dim,
            "skip_layers": sorted(self.skip_layers),
            "softplus_beta": self.softplus_beta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        return cls(
            int(data["input_dim"]),
            tuple(data["hidden_dims"]),
            int(data.get("latent_dim", 0)),
            frozenset(data.get("skip_layers", ())),
            float(data.get("softplus_beta", 100.0)),
        )


@dataclass
class Network:
    spec: NetworkSpec
    weights: list
    biases: list

    def __post_init__(self):
        shapes = self.spec.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("layer count does not match spec")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for j, ((out, fan_in), w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if w.shape != (out, fan_in) or b.shape != (out,):
                raise ValueError(f"layer {j}: expected W{(out, fan_in)} b{(out,)}, got W{w.shape} b{b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {j} has non-finite parameters")

    def copy(self) -> "Network":
        return Network(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def __call__(self, x, z=None) -> np.ndarray:
        """Plain values f(x) for a batch of points."""
        return evaluate(self, x, z)


@dataclass
class DualEval:
    value: float
    input_gradient: np.ndarray
    latent_gradient: Optional[np.ndarray] = None


@dataclass
class ParamGradient:
    weights: list
    biases: list
    latent: Optional[np.ndarray] = None

    @classmethod
    def zeros_like(cls, net: Network, latent: bool = False) -> "ParamGradient":
        lat = np.zeros(net.spec.latent_dim) if latent else None
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases], lat)

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat(self) -> np.ndarray:
        parts = [a.ravel() for a in self.arrays()]
        if self.latent is not None:
            parts.append(self.latent.ravel())
        return np.concatenate(parts)

    def scaled(self, c: float) -> "ParamGradient":
        lat = None if self.latent is None else c * self.latent
        return ParamGradient([c * w for w in self.weights], [c * b for b in self.biases], lat)

    def __add__(self, other: "ParamGradient") -> "ParamGradient":
        if self.latent is None or other.latent is None:
            lat = self.latent if other.latent is None else other.latent
        else:
            lat = self.latent + other.latent
        return ParamGradient(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
            lat,
        )


def geometric_init(spec: NetworkSpec, radius: float = 1.0, rng_seed: int = 0) -> Network:
    """Weights for which f is roughly the signed distance to a sphere of ``radius``.

    Hidden layers draw W with std sqrt(2 / fan_out) and zero bias; the output
    layer is the constant sqrt(pi / fan_in) plus 1e-5 noise, with bias -radius,
    then rescaled so f averages to zero over samples of the radius sphere.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    shapes = spec.layer_shapes()
    for j, (out, fan_in) in enumerate(shapes):
        if j == len(shapes) - 1:
            w = rng.normal(math.sqrt(math.pi) / math.sqrt(fan_in), 1e-5, size=(out, fan_in))
            b = np.full(out, -float(radius))
        else:
            w = rng.normal(0.0, math.sqrt(2.0) / math.sqrt(out), size=(out, fan_in))
            b = np.zeros(out)
        weights.append(w)
        biases.append(b)
    net = Network(spec, weights, biases)
    # finite-width nets scale |x| by a seed-dependent factor; pin it on sphere samples
    dirs = rng.normal(size=(_CALIBRATION_SAMPLES, spec.input_dim))
    dirs *= radius / np.linalg.norm(dirs, axis=1, keepdims=True)
    z = np.zeros(spec.latent_dim) if spec.latent_dim else None
    raw = evaluate(net, dirs, z) + radius
    scale = radius / raw.mean()
    if not (np.isfinite(scale) and scale > 0):
        raise RuntimeError("geometric initialization produced a degenerate output layer")
    net.weights[-1] = net.weights[-1] * scale
    return net


def _inputs(net: Network, x, z) -> tuple:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    spec = net.spec
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"expected points of dimension {spec.input_dim}, got shape {x.shape}")
    if spec.latent_dim == 0:
        if z is not None and np.size(z) > 0:
            raise ValueError("network has no latent input but z was given")
        return x, x, single
    if z is None:
        raise ValueError(f"network expects a latent vector of length {spec.latent_dim}")
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        if z.shape[0] != spec.latent_dim:
            raise ValueError(f"latent length {z.shape[0]} != {spec.latent_dim}")
        z = np.broadcast_to(z, (x.shape[0], spec.latent_dim))
    elif z.shape != (x.shape[0], spec.latent_dim):
        raise ValueError(f"per-row latents must have shape {(x.shape[0], spec.latent_dim)}, got {z.shape}")
    return x, np.hstack([x, z]), single


@dataclass
class _Cache:
    u: np.ndarray
    tangent_rows: np.ndarray
    seed: np.ndarray
    inputs: list = field(default_factory=list)
    tangent_inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    tangent_pre: list = field(default_factory=list)
    slopes: list = field(default_factory=list)


def _forward(net: Network, u: np.ndarray, tangent_rows=None, n_dirs: Optional[int] = None):
    """Forward pass over rows of ``u``; tangents only for ``tangent_rows``.

    Returns (f, grad, cache) with grad of shape (len(tangent_rows), n_dirs).
    """
    spec = net.spec
    beta = spec.softplus_beta
    n = u.shape[0]
    rows = np.arange(n) if tangent_rows is None else np.asarray(tangent_rows, dtype=np.intp)
    n_dirs = spec.input_dim if n_dirs is None else n_dirs
    m = rows.shape[0]
    all_rows = m == n
    seed = np.zeros((m, n_dirs, spec.in_features))
    seed[:, np.arange(n_dirs), np.arange(n_dirs)] = 1.0
    cache = _Cache(u, rows, seed)
    a, t = u, seed
    last = spec.n_linear - 1
    for j, (w, b) in enumerate(zip(net.weights, net.biases)):
        if j in spec.skip_layers:
            a = np.hstack([a, u]) / SQRT2
            t = np.concatenate([t, seed], axis=2) / SQRT2
        s = a @ w.T + b
        st = (t.reshape(-1, t.shape[2]) @ w.T).reshape(m, n_dirs, -1)
        cache.inputs.append(a)
        cache.tangent_inputs.append(t)
        cache.pre.append(s)
        cache.tangent_pre.append(st)
        if j == last:
            break
        a, slope = kernels.softplus_pair(s, beta)
        cache.slopes.append(slope)
        t = (slope if all_rows else slope[rows])[:, None, :] * st
    return s[:, 0], st[:, :, 0], cache


def _backward(net: Network, cache: _Cache, w_value: np.ndarray, w_grad: np.ndarray, want_latent: bool):
    """Adjoint of sum(w_value * f + w_grad . grad_x f) through the cached pass."""
    spec = net.spec
    beta = spec.softplus_beta
    rows = cache.tangent_rows
    all_rows = rows.shape[0] == cache.u.shape[0]
    d_in = spec.in_features
    sbar = np.asarray(w_value, dtype=np.float64)[:, None]
    stbar = np.asarray(w_grad, dtype=np.float64)[:, :, None]
    ubar = np.zeros((cache.u.shape[0], d_in)) if want_latent else None
    gw = [None] * spec.n_linear
    gb = [None] * spec.n_linear
    for j in range(spec.n_linear - 1, -1, -1):
        w = net.weights[j]
        a = cache.inputs[j]
        t = cache.tangent_inputs[j]
        fan_in = w.shape[1]
        gw[j] = sbar.T @ a + stbar.reshape(-1, w.shape[0]).T @ t.reshape(-1, fan_in)
        gb[j] = sbar.sum(axis=0)
        if j == 0 and not want_latent:
            break
        abar = sbar @ w
        atbar = (stbar.reshape(-1, w.shape[0]) @ w).reshape(stbar.shape[0], stbar.shape[1], fan_in)
        if j in spec.skip_layers:
            prev = fan_in - d_in
            if want_latent:
                ubar += abar[:, prev:] / SQRT2
            abar = abar[:, :prev] / SQRT2
            atbar = atbar[:, :, :prev] / SQRT2
        if j == 0:
            ubar += abar
            break
        slope = cache.slopes[j - 1]
        slope_t = slope if all_rows else slope[rows]
        st_prev = cache.tangent_pre[j - 1]
        mixed = atbar[:, 0, :] * st_prev[:, 0, :]
        for k in range(1, atbar.shape[1]):
            mixed += atbar[:, k, :] * st_prev[:, k, :]
        sbar = abar * slope
        curv = beta * slope_t * (1.0 - slope_t)
        if all_rows:
            sbar += curv * mixed
        else:
            sbar[rows] += curv * mixed
        stbar = atbar * slope_t[:, None, :]
    latent = None
    if want_latent:
        latent = ubar[:, spec.input_dim:]
    return gw, gb, latent


def evaluate(net: Network, x, z=None) -> np.ndarray:
    """Plain forward pass (values only)."""
    x, u, single = _inputs(net, x, z)
    beta = net.spec.softplus_beta
    a = u
    last = net.spec.n_linear - 1
    for j, (w, b) in enumerate(zip(net.weights, net.biases)):
        if j in net.spec.skip_layers:
            a = np.hstack([a, u]) / SQRT2
        s = a @ w.T + b
        if j == last:
            break
        a = kernels.softplus_pair(s, beta)[0]
    f = s[:, 0]
    return f[0] if single else f


def forward_dual_batch(net: Network, x, z=None, latent_gradient: bool = False):
    """Values and input gradients for a batch: returns (f, grad_x f[, grad_z f])."""
    x, u, _ = _inputs(net, np.atleast_2d(x), z)
    n_dirs = net.spec.in_features if latent_gradient else net.spec.input_dim
    f, g, _ = _forward(net, u, None, n_dirs)
    d = net.spec.input_dim
    if latent_gradient:
        return f, g[:, :d], g[:, d:]
    return f, g


def forward_dual(net: Network, x, z=None, latent_gradient: bool = False) -> DualEval:
    """f and grad_x f at a single point (plus grad_z f on request)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward_dual takes a single point; use forward_dual_batch for batches")
    if z is not None and np.ndim(z) != 1:
        raise ValueError("z must be a single latent vector")
    out = forward_dual_batch(net, x[None, :], z, latent_gradient)
    lat = out[2][0] if latent_gradient and net.spec.latent_dim > 0 else None
    return DualEval(float(out[0][0]), out[1][0], lat)


def backward(net: Network, x_batch, z=None, w_value=None, w_grad=None) -> ParamGradient:
    """Parameter gradient of sum_i (w_value[i] f(x_i) + w_grad[i] . grad_x f(x_i)).

    With a single latent ``z`` its gradient is returned in ``.latent``; with
    per-row latents the per-row gradients are returned (shape (n, L)).
    """
    x, u, _ = _inputs(net, np.atleast_2d(x_batch), z)
    n, d = x.shape
    if n == 0:
        raise ValueError("batch must be non-empty")
    w_value = np.zeros(n) if w_value is None else np.asarray(w_value, dtype=np.float64)
    w_grad = np.zeros((n, d)) if w_grad is None else np.asarray(w_grad, dtype=np.float64)
    if w_value.shape != (n,) or w_grad.shape != (n, d):
        raise ValueError(f"upstream weights must have shapes {(n,)} and {(n, d)}")
    if not (np.all(np.isfinite(w_value)) and np.all(np.isfinite(w_grad))):
        raise ValueError("upstream weights must be finite")
    _, _, cache = _forward(net, u)
    want_latent = net.spec.latent_dim > 0
    gw, gb, lat = _backward(net, cache, w_value, w_grad, want_latent)
    if lat is not None and np.ndim(z) == 1:
        lat = lat.sum(axis=0)
    return ParamGradient(gw, gb, lat)


def save_network(path, net: Network, extra: Optional[dict] = None) -> None:
    """Write a checkpoint: magic, version, JSON header, then raw little-endian float64 layers."""
    header = {"spec": net.spec.to_dict(), "extra": extra or {}}
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(head)))
        fh.write(head)
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_network(path) -> tuple:
    """Inverse of :func:`save_network`; returns (network, extra)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a network checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<II", blob, pos)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos += 8
    header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    spec = NetworkSpec.from_dict(header["spec"])
    weights, biases = [], []
    for out, fan_in in spec.layer_shapes():
        w = np.frombuffer(blob, dtype="<f8", count=out * fan_in, offset=pos).reshape(out, fan_in)
        pos += w.nbytes
        b = np.frombuffer(blob, dtype="<f8", count=out, offset=pos)
        pos += b.nbytes
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if pos != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return Network(spec, weights, biases), header["extra"]


def flatten_params(net: Network) -> np.ndarray:
    return np.concatenate([a.ravel() for pair in zip(net.weights, net.biases) for a in pair])


def unflatten_params(net: Network, vec: Sequence[float]) -> Network:
    vec = np.asarray(vec, dtype=np.float64)
    weights, biases = [], []
    pos = 0
    for w, b in zip(net.weights, net.biases):
        weights.append(vec[pos:pos + w.size].reshape(w.shape))
        pos += w.size
        biases.append(vec[pos:pos + b.size].reshape(b.shape))
        pos += b.size
    return Network(net.spec, weights, biases)
