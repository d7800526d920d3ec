"""Eikonal-regularized loss, the sampling distribution D, Adam, and training loops."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import Aabb, PointCloud, bounding_box, kth_nn_distance
from .network import Network, NetworkSpec, ParamGradient, _backward, _forward, _inputs, geometric_init

log = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "data", "normal", "eikonal", "latent", "total")
UNIFORM_MARGIN = 0.2


class NumericalError(FloatingPointError):
    """A loss term or gradient became non-finite; ``term`` names the culprit."""

    def __init__(self, term: str, message: str = ""):
        super().__init__(f"non-finite value in {term}" + (f": {message}" if message else ""))
        self.term = term


@dataclass(frozen=True)
class LossParams:
    lam: float = 0.1
    tau: int = 1
    latent_reg: float = 0.01

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.tau not in (0, 1):
            raise ValueError("tau must be 0 or 1")
        if self.latent_reg < 0:
            raise ValueError("latent_reg must be non-negative")


@dataclass(frozen=True)
class LossReport:
    data_term: float
    normal_term: float
    eikonal_term: float
    latent_term: float
    total: float

    def row(self) -> tuple:
        return (self.data_term, self.normal_term, self.eikonal_term, self.latent_term, self.total)

    @staticmethod
    def mean(reports: Sequence["LossReport"]) -> "LossReport":
        cols = np.array([r.row() for r in reports])
        return LossReport(*(float(v) for v in cols.mean(axis=0)))


class SamplerD:
    """Half uniform in a box, half Gaussian around the source points.

    Each Gaussian is centered at a source point with standard deviation equal
    to that point's distance to its k-th nearest neighbor.
    """

    def __init__(self, source: PointCloud, k: Optional[int] = None, box: Optional[Aabb] = None,
                 seed=0, sigmas: Optional[np.ndarray] = None):
        self.source = source
        if sigmas is None:
            if len(source) < 2:
                raise ValueError("need at least two source points to set Gaussian widths")
            sigmas = kth_nn_distance(source, k)
        sigmas = np.asarray(sigmas, dtype=np.float64)
        if sigmas.shape != (len(source),) or not np.all(np.isfinite(sigmas)) or not np.all(sigmas > 0):
            raise ValueError("per-point sigmas must be positive and finite (duplicate points?)")
        self.sigmas = sigmas
        self.box = bounding_box(source, UNIFORM_MARGIN) if box is None else box
        if not np.all(self.box.contains(source.points)):
            raise ValueError("uniform box must contain every source point")
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def sample_parts(self, n: int) -> tuple:
        """(uniform, gaussian) halves with ceil(n/2) and floor(n/2) rows."""
        if n < 2:
            raise ValueError("n must be at least 2")
        n_u = (n + 1) // 2
        n_g = n // 2
        lo, hi = self.box.min, self.box.max
        uniform = lo + (hi - lo) * self.rng.random((n_u, self.box.dim))
        idx = self.rng.integers(0, len(self.source), n_g)
        noise = self.rng.normal(size=(n_g, self.box.dim))
        gaussian = self.source.points[idx] + noise * self.sigmas[idx, None]
        return uniform, gaussian

    def sample(self, n: int) -> np.ndarray:
        uniform, gaussian = self.sample_parts(n)
        both = np.vstack([uniform, gaussian])
        return both[self.rng.permutation(n)]


def sample_D(sampler: SamplerD, n: int) -> np.ndarray:
    return sampler.sample(n)


def _safe_unit(v: np.ndarray) -> tuple:
    norm = np.linalg.norm(v, axis=-1)
    unit = np.zeros_like(v)
    nz = norm > 0
    unit[nz] = v[nz] / norm[nz, None]
    return norm, unit


def _loss_core(net: Network, z, points, normals, global_samples, params: LossParams, want_grad=True):
    """Loss terms and (optionally) gradient pieces for one shape.

    Returns (report, weight grads, bias grads, latent grad or None).
    """
    # overflow is reported as a NumericalError naming the term, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _loss_terms(net, z, points, normals, global_samples, params, want_grad)


def _loss_terms(net, z, points, normals, global_samples, params, want_grad):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    global_samples = np.atleast_2d(np.asarray(global_samples, dtype=np.float64))
    n, m = points.shape[0], global_samples.shape[0]
    if n == 0 or m == 0:
        raise ValueError("surface batch and global samples must be non-empty")
    use_normals = params.tau == 1
    if use_normals and normals is None:
        raise ValueError("tau=1 requires normals for the surface batch")
    rows = np.vstack([points, global_samples])
    _, u, _ = _inputs(net, rows, z)
    tangent_rows = np.arange(n + m) if use_normals else np.arange(n, n + m)
    f, g, cache = _forward(net, u, tangent_rows)
    f_surf = f[:n]
    g_glob = g[-m:]

    data = float(np.mean(np.abs(f_surf)))
    normal = 0.0
    if use_normals:
        resid = g[:n] - np.asarray(normals, dtype=np.float64)
        rnorm, runit = _safe_unit(resid)
        normal = float(np.mean(rnorm))
    gnorm, gunit = _safe_unit(g_glob)
    eik = float(np.mean((gnorm - 1.0) ** 2))
    znorm = 0.0
    if net.spec.latent_dim > 0:
        zvec = np.asarray(z, dtype=np.float64)
        znorm = float(np.linalg.norm(zvec))
    total = data + params.tau * normal + params.lam * eik + params.latent_reg * znorm
    report = LossReport(data, normal, eik, znorm, total)
    for name, val in zip(("data_term", "normal_term", "eikonal_term", "latent_term"), report.row()):
        if not math.isfinite(val):
            raise NumericalError(name)
    if not want_grad:
        return report, None, None, None

    w_value = np.zeros(n + m)
    w_value[:n] = np.sign(f_surf) / n
    w_grad = np.zeros((tangent_rows.shape[0], net.spec.input_dim))
    if use_normals:
        w_grad[:n] = params.tau * runit / n
    w_grad[-m:] = (params.lam * 2.0 / m) * (gnorm - 1.0)[:, None] * gunit
    want_latent = net.spec.latent_dim > 0
    gw, gb, lat = _backward(net, cache, w_value, w_grad, want_latent)
    if want_latent:
        lat = lat.sum(axis=0)
        if znorm > 0:
            lat = lat + params.latent_reg * zvec / znorm
    return report, gw, gb, lat


def loss_eval(net: Network, z, batch_points, batch_normals, global_samples, params: LossParams):
    """Loss report and its gradient with respect to the weights (and z when present).

    data = mean |f(x_i)|, normal = mean |grad f(x_i) - n_i|, eikonal =
    mean (|grad f(x)| - 1)^2 over the global samples, latent = |z|.
    Subgradients of |.| and the 2-norm at zero are taken as zero.
    """
    report, gw, gb, lat = _loss_core(net, z, batch_points, batch_normals, global_samples, params)
    return report, ParamGradient(gw, gb, lat)


@dataclass
class AdamState:
    lr: float
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, arrays: Sequence[np.ndarray], lr: float) -> "AdamState":
        return cls(lr, [np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])

    @classmethod
    def for_network(cls, net: Network, lr: float) -> "AdamState":
        return cls.zeros(_net_arrays(net), lr)


def _net_arrays(net: Network) -> list:
    out = []
    for w, b in zip(net.weights, net.biases):
        out.extend((w, b))
    return out


def _array_names(net: Network) -> list:
    names = []
    for j in range(len(net.weights)):
        names.extend((f"layer {j} weights", f"layer {j} biases"))
    return names


def adam_update(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
                names: Optional[Sequence[str]] = None) -> None:
    """Bias-corrected Adam step applied in place to ``params``."""
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NumericalError(names[i] if names else f"parameter {i}", "gradient")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def adam_step(state: AdamState, net: Network, grads: ParamGradient) -> tuple:
    """One Adam update of the network weights in place; returns (state, net)."""
    adam_update(state, _net_arrays(net), grads.arrays(), _array_names(net))
    return state, net


@dataclass
class LatentTable:
    """Per-shape latent codes, each with its own Adam moments."""

    latent_dim: int
    vectors: dict = field(default_factory=dict)
    optimizers: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, shape_ids: Sequence, latent_dim: int, lr: float) -> "LatentTable":
        table = cls(latent_dim)
        for sid in shape_ids:
            table.vectors[sid] = np.zeros(latent_dim)
            table.optimizers[sid] = AdamState.zeros([table.vectors[sid]], lr)
        return table

    def __getitem__(self, sid) -> np.ndarray:
        return self.vectors[sid]

    def ids(self) -> list:
        return list(self.vectors)

    def set_lr(self, lr: float) -> None:
        for opt in self.optimizers.values():
            opt.lr = lr

    def step(self, sid, grad: np.ndarray) -> None:
        adam_update(self.optimizers[sid], [self.vectors[sid]], [grad], [f"latent {sid}"])


@dataclass
class Schedule:
    iters: int = 5000
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0
    k: Optional[int] = None
    init_radius: float = 1.0


@dataclass
class TrainResult:
    net: Network
    trace: list


def _iterate(net: Network, draw_surface: Callable, sampler: SamplerD, params: LossParams,
             iters: int, batch_size: int, lr: float, rng: np.random.Generator, z=None) -> list:
    state = AdamState.for_network(net, lr)
    trace = []
    for it in range(iters):
        pts, nrm = draw_surface(rng, batch_size)
        glob = sampler.sample(batch_size)
        report, gw, gb, _ = _loss_core(net, z, pts, nrm, glob, params)
        adam_step(state, net, ParamGradient(gw, gb))
        trace.append(report)
        if it % 1000 == 0:
            log.debug("iter %d total %.6g", it, report.total)
    return trace


def _cloud_drawer(cloud: PointCloud, use_normals: bool) -> Callable:
    def draw(rng, n):
        idx = rng.integers(0, len(cloud), n)
        nrm = cloud.normals[idx] if use_normals else None
        return cloud.points[idx], nrm
    return draw


def _streams(seed: int, n: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def train_single_shape(cloud: PointCloud, spec: NetworkSpec, loss_params: LossParams,
                       schedule: Schedule) -> TrainResult:
    """Fit one network to one point cloud; fully determined by ``schedule.seed``."""
    if cloud.dim != spec.input_dim:
        raise ValueError(f"cloud dimension {cloud.dim} != network input {spec.input_dim}")
    if spec.latent_dim:
        raise ValueError("single-shape training uses a network without latent input")
    if loss_params.tau == 1 and not cloud.has_normals:
        raise ValueError("tau=1 requires a cloud with normals")
    net = geometric_init(spec, schedule.init_radius, schedule.seed)
    sample_rng, batch_rng = _streams(schedule.seed, 2)
    sampler = SamplerD(cloud, schedule.k, seed=sample_rng)
    trace = _iterate(net, _cloud_drawer(cloud, loss_params.tau == 1), sampler, loss_params,
                     schedule.iters, schedule.batch_size, schedule.lr, batch_rng)
    return TrainResult(net, trace)


def train_on_surface(draw_surface: Callable, sampler: SamplerD, spec: NetworkSpec,
                     loss_params: LossParams, schedule: Schedule) -> TrainResult:
    """Like :func:`train_single_shape` but with a fresh surface batch every iteration.

    ``draw_surface(rng, n)`` returns ``(points, normals_or_None)``.
    """
    net = geometric_init(spec, schedule.init_radius, schedule.seed)
    (batch_rng,) = _streams(schedule.seed, 1)
    trace = _iterate(net, draw_surface, sampler, loss_params, schedule.iters,
                     schedule.batch_size, schedule.lr, batch_rng)
    return TrainResult(net, trace)


def evaluate_fit(net: Network, cloud: PointCloud, sampler: SamplerD, params: LossParams,
                 z=None, n_global: int = 10000) -> LossReport:
    """Loss terms over the whole cloud and a fresh draw of global samples."""
    nrm = cloud.normals if params.tau == 1 else None
    report, *_ = _loss_core(net, z, cloud.points, nrm, sampler.sample(n_global), params, want_grad=False)
    return report


@dataclass
class AutoDecoderSchedule:
    epochs: int = 2000
    shapes_per_batch: int = 8
    points_per_shape: int = 256
    lr: float = 5e-4
    lr_halving_interval: int = 500
    seed: int = 0
    k: Optional[int] = None
    init_radius: float = 1.0


@dataclass
class AutoDecoderResult:
    net: Network
    latents: LatentTable
    trace: list
    samplers: list


def multi_shape_objective(net: Network, latents: Sequence[np.ndarray], batches: Sequence[tuple],
                          params: LossParams) -> float:
    """(1/|B|) sum_j loss(theta, z_j) with |z_j| already inside each shape's loss."""
    totals = [_loss_core(net, z, p, nrm, g, params, want_grad=False)[0].total
              for z, (p, nrm, g) in zip(latents, batches)]
    return float(np.mean(totals))


def train_auto_decoder(clouds: Sequence[PointCloud], spec: NetworkSpec, loss_params: LossParams,
                       schedule: AutoDecoderSchedule, shape_ids: Optional[Sequence] = None) -> AutoDecoderResult:
    """Jointly fit shared weights and one zero-initialized latent code per shape."""
    if len(clouds) < 2:
        raise ValueError("auto-decoder training needs at least two shapes")
    if spec.latent_dim < 1:
        raise ValueError("auto-decoder training needs latent_dim >= 1")
    for c in clouds:
        if c.dim != spec.input_dim:
            raise ValueError("cloud dimension does not match the network")
        if loss_params.tau == 1 and not c.has_normals:
            raise ValueError("tau=1 requires normals for every shape")
    ids = list(range(len(clouds))) if shape_ids is None else list(shape_ids)
    if len(ids) != len(clouds) or len(set(ids)) != len(ids):
        raise ValueError("shape_ids must be unique and match the clouds")
    net = geometric_init(spec, schedule.init_radius, schedule.seed)
    streams = _streams(schedule.seed, len(clouds) + 1)
    order_rng = streams[0]
    samplers = [SamplerD(c, schedule.k, seed=r) for c, r in zip(clouds, streams[1:])]
    drawers = [_cloud_drawer(c, loss_params.tau == 1) for c in clouds]
    table = LatentTable.zeros(ids, spec.latent_dim, schedule.lr)
    state = AdamState.for_network(net, schedule.lr)
    per_batch = max(1, min(schedule.shapes_per_batch, len(clouds)))
    n_pts = schedule.points_per_shape
    trace = []
    for epoch in range(schedule.epochs):
        lr = schedule.lr * 0.5 ** (epoch // schedule.lr_halving_interval)
        state.lr = lr
        table.set_lr(lr)
        order = order_rng.permutation(len(clouds))
        for start in range(0, len(order), per_batch):
            batch = order[start:start + per_batch]
            scale = 1.0 / len(batch)
            gw_sum = gb_sum = None
            reports = []
            lat_grads = {}
            for j in batch:
                pts, nrm = drawers[j](order_rng, n_pts)
                glob = samplers[j].sample(n_pts)
                report, gw, gb, lat = _loss_core(net, table[ids[j]], pts, nrm, glob, loss_params)
                reports.append(report)
                lat_grads[ids[j]] = scale * lat
                if gw_sum is None:
                    gw_sum = [scale * g for g in gw]
                    gb_sum = [scale * g for g in gb]
                else:
                    for acc, g in zip(gw_sum, gw):
                        acc += scale * g
                    for acc, g in zip(gb_sum, gb):
                        acc += scale * g
            adam_step(state, net, ParamGradient(gw_sum, gb_sum))
            for sid, g in lat_grads.items():
                table.step(sid, g)
            trace.append(LossReport.mean(reports))
    return AutoDecoderResult(net, table, trace, samplers)


def infer_latent(net: Network, cloud: PointCloud, loss_params: LossParams, iters: int = 800,
                 lr: float = 5e-3, seed: int = 0, batch_size: int = 256, k: Optional[int] = None) -> tuple:
    """Fit a latent code to ``cloud`` with the weights frozen; returns (z, final report)."""
    if net.spec.latent_dim < 1:
        raise ValueError("network has no latent input")
    if loss_params.tau == 1 and not cloud.has_normals:
        raise ValueError("tau=1 requires a cloud with normals")
    z = np.zeros(net.spec.latent_dim)
    if iters <= 0:
        return z, None
    sample_rng, batch_rng = _streams(seed, 2)
    sampler = SamplerD(cloud, k, seed=sample_rng)
    draw = _cloud_drawer(cloud, loss_params.tau == 1)
    state = AdamState.zeros([z], lr)
    report = None
    for _ in range(iters):
        pts, nrm = draw(batch_rng, batch_size)
        glob = sampler.sample(batch_size)
        report = _latent_only(net, z, pts, nrm, glob, loss_params)
        adam_update(state, [z], [report[1]], ["latent"])
        report = report[0]
    return z, report


def _latent_only(net, z, pts, nrm, glob, params):
    report, _, _, lat = _loss_core(net, z, pts, nrm, glob, params)
    return report, lat


def average_latents(latents: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Convex combination of latent codes."""
    weights = np.asarray(weights, dtype=np.float64)
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2 or weights.shape != (latents.shape[0],):
        raise ValueError("need one weight per latent vector")
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 (got {weights.sum()!r})")
    return weights @ latents


def write_trace(path, trace: Sequence[LossReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for i, r in enumerate(trace):
            writer.writerow([i] + [repr(float(v)) for v in r.row()])
