"""Command-line entry point: ``implicit-sdf <command> [options]``.

Exit status is 0 on success, 2 for usage, config or input errors and 3 when
training hits a non-finite value.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import warnings
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import numpy as np

from . import linear_theory as lt
from .config import COMMANDS, ConfigError, _OPTIONAL_TYPES, build_config, load_config_file
from .geometry import Aabb, PointCloud, PointCloudParseError, bounding_box, read_point_cloud
from .levelset import (
    GridSpec, Mesh, Polyline2D, evaluate_grid, marching_cubes, marching_squares,
    sdf_relative_error, write_contour_csv, write_contour_svg, write_obj,
)
from .network import NetworkSpec, evaluate, load_network, save_network
from .shapes import make_shape
from .training import (
    AutoDecoderSchedule, LossParams, LossReport, NumericalError, SamplerD, Schedule,
    TRACE_HEADER, average_latents, evaluate_fit, infer_latent, train_auto_decoder,
    train_on_surface, train_single_shape, write_trace,
)

log = logging.getLogger("implicit_sdf")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
LOCK_NAME = ".implicit-sdf.lock"
SUMMARY_SUFFIX = "runs reached a global minimum"
# init sphere radius over the probe box half-diagonal, for open shapes
PROBE_ENCLOSE = 1.155


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers

@dataclasses.dataclass(frozen=True)
class Normalization:
    """``x_train = (x - center) * scale``."""

    center: np.ndarray
    scale: float

    @classmethod
    def identity(cls, dim: int) -> "Normalization":
        return cls(np.zeros(dim), 1.0)

    @classmethod
    def fit(cls, clouds) -> "Normalization":
        """Centroid of all points; long bounding-box side mapped to 2."""
        pts = np.vstack([c.points for c in clouds])
        box = bounding_box(pts)
        long_side = float(box.extent.max())
        if long_side <= 0:
            raise UsageError("input points are all identical; cannot normalize")
        return cls(pts.mean(axis=0), 2.0 / long_side)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return (x - self.center) * self.scale

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return x / self.scale + self.center

    def apply(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(self.forward(cloud.points), cloud.normals)

    def to_dict(self) -> dict:
        return {"center": [float(c) for c in self.center], "scale": float(self.scale)}

    @classmethod
    def from_dict(cls, data: dict) -> "Normalization":
        return cls(np.asarray(data["center"], dtype=np.float64), float(data["scale"]))


def _grid_box(clouds, margin: float) -> Aabb:
    """Cube around the clouds' joint bounding box, grown by ``margin`` of its half side."""
    box = bounding_box(np.vstack([c.points for c in clouds]))
    center = 0.5 * (box.min + box.max)
    half = 0.5 * float(box.extent.max()) * (1.0 + margin)
    return Aabb(center - half, center + half)


def _read_cloud(path) -> PointCloud:
    try:
        return read_point_cloud(path)
    except PointCloudParseError as exc:
        raise UsageError(f"{path}: {exc}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _default_resolution(dim: int) -> int:
    return 128 if dim == 2 else 64


def _extract(net, z, box: Aabb, resolution: int, norm: Normalization):
    """Zero level set on the grid, mapped back to input coordinates."""
    field = evaluate_grid(net, z, GridSpec(box, resolution))
    if box.dim == 2:
        c = marching_squares(field, 0.0)
        return Polyline2D(norm.inverse(c.vertices), c.segments, c.chains, c.closed)
    m = marching_cubes(field, 0.0)
    return Mesh(norm.inverse(m.vertices), m.triangles)


def _write_geometry(out: Path, stem: str, geom, box: Aabb, norm: Normalization,
                    points: Optional[np.ndarray] = None) -> None:
    if isinstance(geom, Mesh):
        write_obj(out / f"{stem}.obj", geom)
    else:
        write_contour_csv(out / f"{stem}.csv", geom)
        real_box = Aabb(norm.inverse(box.min), norm.inverse(box.max))
        write_contour_svg(out / f"{stem}.svg", geom, real_box, points)


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _report_dict(r: LossReport) -> dict:
    return dict(zip(TRACE_HEADER[1:], (float(v) for v in r.row())))


def _write_latents(path: Path, ids, vectors) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        width = len(vectors[0]) if len(vectors) else 0
        w.writerow(["shape_id"] + [f"z{i + 1}" for i in range(width)])
        for sid, z in zip(ids, vectors):
            w.writerow([sid] + [repr(float(v)) for v in z])


def read_latents(path) -> dict:
    """Latent table CSV -> {shape_id: vector}."""
    table = {}
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    if not rows or rows[0][:1] != ["shape_id"]:
        raise UsageError(f"{path}: missing shape_id header")
    width = len(rows[0]) - 1
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width + 1:
            raise UsageError(f"{path}: line {lineno}: expected {width + 1} columns")
        try:
            table[row[0]] = np.array([float(v) for v in row[1:]])
        except ValueError:
            raise UsageError(f"{path}: line {lineno}: non-numeric latent value") from None
    return table


def _load_checkpoint(path):
    try:
        net, extra = load_network(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{path}: {exc}") from None
    if "normalization" not in extra or "box_min" not in extra:
        raise UsageError(f"{path}: checkpoint lacks normalization/grid metadata")
    return net, extra


@contextmanager
def _locked(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise UsageError(f"{out} is in use by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out
    finally:
        lock.unlink(missing_ok=True)


# ---------------------------------------------------------------- commands

def cmd_reconstruct(cfg, seed: int, out: Path) -> int:
    """Fit one point cloud and extract its zero level set."""
    cloud = _read_cloud(cfg.input)
    if cfg.tau == 1 and not cloud.has_normals:
        raise UsageError(f"{cfg.input}: tau=1 needs normals but the file has none (use --tau 0)")
    norm = Normalization.fit([cloud]) if cfg.normalize else Normalization.identity(cloud.dim)
    train_cloud = norm.apply(cloud)
    spec = NetworkSpec.profile(cloud.dim, cfg.layers, cfg.width, 0, cfg.beta, cfg.skip)
    params = LossParams(cfg.lam, int(cfg.tau))
    schedule = Schedule(cfg.iters, cfg.batch_size, cfg.lr, seed, cfg.k, cfg.init_radius)
    result = train_single_shape(train_cloud, spec, params, schedule)
    box = _grid_box([train_cloud], cfg.margin)
    res = cfg.resolution or _default_resolution(cloud.dim)
    geom = _extract(result.net, None, box, res, norm)
    _write_geometry(out, "surface" if cloud.dim == 3 else "contour", geom, box, norm, cloud.points)
    write_trace(out / "loss.csv", result.trace)
    extra = {
        "command": "reconstruct", "normalization": norm.to_dict(),
        "box_min": list(box.min), "box_max": list(box.max), "resolution": res,
    }
    save_network(out / "checkpoint.bin", result.net, extra)
    sampler = SamplerD(train_cloud, cfg.k, seed=np.random.default_rng([seed, 1]))
    fit = evaluate_fit(result.net, train_cloud, sampler, params)
    _write_json(out / "summary.json", {"iters": cfg.iters, "fit": _report_dict(fit),
                                        "cell_size": float(box.extent.max() / (res - 1) / norm.scale)})
    print(f"reconstruct: data {fit.data_term:.3g}, eikonal {fit.eikonal_term:.3g}; wrote {out}")
    return EXIT_OK


def _probe_init_radius(cfg, shape) -> float:
    """Init sphere radius: 1 for closed shapes, else a sphere enclosing the probe box.

    An open surface crossing the box leaves a spurious sheet wherever a
    smaller init sphere crosses the box, so there the init encloses it.
    """
    if cfg.init_radius is not None:
        return cfg.init_radius
    if shape.oriented:
        return 1.0
    return PROBE_ENCLOSE * cfg.box_half * float(np.sqrt(cfg.dim))


def _probe_orientation(net, shape, box: Aabb, seed: int) -> float:
    """+1 or -1: the sign the network gave to the ground truth's positive side."""
    if shape.oriented:
        return 1.0
    rng = np.random.default_rng([seed, 4])
    pts = box.min + box.extent * rng.random((4096, box.dim))
    return 1.0 if float(evaluate(net, pts) @ shape.sdf(pts)) >= 0 else -1.0


def cmd_sdf_probe(cfg, seed: int, out: Path) -> int:
    """Train on an analytic shape and measure SDF relative error."""
    shape = make_shape(cfg.shape, cfg.dim, cfg.radius)
    box = Aabb.cube(cfg.box_half, cfg.dim)
    ref_pts, _ = shape.sample(np.random.default_rng([seed, 1]), cfg.reference_points)
    sampler = SamplerD(PointCloud(ref_pts), cfg.k, box=box, seed=np.random.default_rng([seed, 2]))
    spec = NetworkSpec.profile(cfg.dim, cfg.layers, cfg.width, 0, cfg.beta, cfg.skip)
    params = LossParams(cfg.lam, 0)

    def draw(rng, n):
        return shape.sample(rng, n)[0], None

    schedule = Schedule(cfg.iters, cfg.batch_size, cfg.lr, seed, cfg.k, _probe_init_radius(cfg, shape))
    result = train_on_surface(draw, sampler, spec, params, schedule)
    sign = _probe_orientation(result.net, shape, box, seed)

    def gt(p):
        return sign * shape.sdf(p)

    mean, std = sdf_relative_error(result.net, gt, box, cfg.n_probe, seed, cfg.band)
    with open(out / "probe.csv", "w", encoding="utf-8") as fh:
        fh.write("shape,mean,std,n_probe,band,orientation\n")
        fh.write(f"{cfg.shape},{mean!r},{std!r},{cfg.n_probe},{cfg.band!r},{int(sign)}\n")
    write_trace(out / "loss.csv", result.trace)
    norm = Normalization.identity(cfg.dim)
    extra = {"command": "sdf-probe", "normalization": norm.to_dict(),
             "box_min": list(box.min), "box_max": list(box.max), "resolution": cfg.resolution}
    save_network(out / "checkpoint.bin", result.net, extra)
    if cfg.resolution:
        geom = _extract(result.net, None, box, cfg.resolution, norm)
        _write_geometry(out, "surface" if cfg.dim == 3 else "contour", geom, box, norm)
    print(f"sdf-probe {cfg.shape}: relative error {mean:.4g} +- {std:.4g}")
    return EXIT_OK


def _shape_ids(paths) -> list:
    ids = [Path(p).stem for p in paths]
    if len(set(ids)) != len(ids):
        raise UsageError("input file stems must be unique (they become shape ids)")
    return ids


def cmd_shape_space(cfg, seed: int, out: Path) -> int:
    """Auto-decoder training over several clouds."""
    clouds = [_read_cloud(p) for p in cfg.inputs]
    ids = _shape_ids(cfg.inputs)
    dims = {c.dim for c in clouds}
    if len(dims) != 1:
        raise UsageError("all input clouds must have the same dimension")
    dim = dims.pop()
    if cfg.tau == 1 and not all(c.has_normals for c in clouds):
        raise UsageError("tau=1 needs normals in every input file (use --tau 0)")
    norm = Normalization.fit(clouds) if cfg.normalize else Normalization.identity(dim)
    train = [norm.apply(c) for c in clouds]
    spec = NetworkSpec.profile(dim, cfg.layers, cfg.width, cfg.latent_dim, cfg.beta, cfg.skip)
    params = LossParams(cfg.lam, int(cfg.tau), cfg.latent_reg)
    schedule = AutoDecoderSchedule(cfg.epochs, cfg.shapes_per_batch, cfg.points_per_shape, cfg.lr,
                                   cfg.lr_halving_interval, seed, cfg.k, cfg.init_radius)
    result = train_auto_decoder(train, spec, params, schedule, ids)
    box = _grid_box(train, cfg.margin)
    res = cfg.resolution or _default_resolution(dim)
    extra = {"command": "shape-space", "normalization": norm.to_dict(),
             "box_min": list(box.min), "box_max": list(box.max), "resolution": res,
             "lam": cfg.lam, "tau": cfg.tau, "latent_reg": cfg.latent_reg}
    save_network(out / "checkpoint.bin", result.net, extra)
    _write_latents(out / "latents.csv", ids, [result.latents[s] for s in ids])
    write_trace(out / "loss.csv", result.trace)
    shapes_dir = out / "shapes"
    shapes_dir.mkdir(exist_ok=True)
    fits = {}
    for sid, cloud, tcloud, sampler in zip(ids, clouds, train, result.samplers):
        z = result.latents[sid]
        geom = _extract(result.net, z, box, res, norm)
        _write_geometry(shapes_dir, sid, geom, box, norm, cloud.points)
        fits[sid] = _report_dict(evaluate_fit(result.net, tcloud, sampler, params, z))
    _write_json(out / "summary.json", {"epochs": cfg.epochs, "fit": fits})
    worst = max(f["data"] for f in fits.values())
    print(f"shape-space: {len(ids)} shapes, worst data term {worst:.3g}; wrote {out}")
    return EXIT_OK


def _checkpoint_params(extra: dict) -> LossParams:
    return LossParams(float(extra.get("lam", 0.1)), int(extra.get("tau", 1)), float(extra.get("latent_reg", 0.01)))


def cmd_infer(cfg, seed: int, out: Path) -> int:
    """Fit a latent code for a new cloud with frozen weights."""
    net, extra = _load_checkpoint(cfg.checkpoint)
    if net.spec.latent_dim < 1:
        raise UsageError(f"{cfg.checkpoint}: network has no latent input")
    cloud = _read_cloud(cfg.input)
    if cloud.dim != net.spec.input_dim:
        raise UsageError(f"{cfg.input}: dimension {cloud.dim} does not match the network")
    params = _checkpoint_params(extra)
    if params.tau == 1 and not cloud.has_normals:
        raise UsageError(f"{cfg.input}: the model was trained with normals but the file has none")
    norm = Normalization.from_dict(extra["normalization"])
    tcloud = norm.apply(cloud)
    z, _ = infer_latent(net, tcloud, params, cfg.iters, cfg.lr, seed, cfg.batch_size, cfg.k)
    sid = Path(cfg.input).stem
    _write_latents(out / "latent.csv", [sid], [z])
    box = Aabb(extra["box_min"], extra["box_max"])
    res = cfg.resolution or int(extra["resolution"])
    geom = _extract(net, z, box, res, norm)
    _write_geometry(out, sid, geom, box, norm, cloud.points)
    sampler = SamplerD(tcloud, cfg.k, seed=np.random.default_rng([seed, 1]))
    fit = evaluate_fit(net, tcloud, sampler, params, z)
    _write_json(out / "summary.json", {"iters": cfg.iters, "fit": _report_dict(fit)})
    print(f"infer {sid}: data {fit.data_term:.3g}; wrote {out}")
    return EXIT_OK


def cmd_interpolate(cfg, seed: int, out: Path) -> int:
    """Extract the shape of a weighted latent average."""
    net, extra = _load_checkpoint(cfg.checkpoint)
    table = read_latents(cfg.latents)
    missing = [i for i in cfg.ids if str(i) not in table]
    if missing:
        raise UsageError(f"{cfg.latents}: unknown shape ids {missing}")
    vectors = [table[str(i)] for i in cfg.ids]
    if any(v.shape[0] != net.spec.latent_dim for v in vectors):
        raise UsageError(
            f"latent width {vectors[0].shape[0]} in {cfg.latents} does not match the "
            f"checkpoint's latent_dim {net.spec.latent_dim}"
        )
    z = average_latents(vectors, cfg.weights)
    norm = Normalization.from_dict(extra["normalization"])
    box = Aabb(extra["box_min"], extra["box_max"])
    res = cfg.resolution or int(extra["resolution"])
    geom = _extract(net, z, box, res, norm)
    _write_geometry(out, "blend", geom, box, norm)
    _write_latents(out / "latent.csv", ["blend"], [z])
    print(f"interpolate: blended {len(vectors)} latents; wrote {out}")
    return EXIT_OK


def _theory_problems(cfg, seed: int) -> list:
    """(eps, problem, planar normal or None) for each requested setting."""
    if cfg.eigvals is not None:
        return [(None, lt.LinearProblem.from_spectrum(cfg.eigvals, cfg.lam), None)]
    top = max(cfg.eps)
    # one base sample; smaller eps rescale the same deviations
    base = lt.planar_sample(cfg.n_points, cfg.dim, top if top > 0 else 1.0, seed)
    probs = []
    for eps in cfg.eps:
        sample = lt.planar_sample(cfg.n_points, cfg.dim, eps, base=base)
        probs.append((eps, lt.diagonalize(sample.points, cfg.lam), sample.normal))
    return probs


def cmd_theory_verify(cfg, seed: int, out: Path) -> int:
    """Numerical checks of the linear-model analysis."""
    problems = _theory_problems(cfg, seed)
    d = cfg.dim
    warn = False
    run_rows, spec_rows, cp_rows = [], [], []
    hits = total = 0
    lia = None
    for eps, prob, normal in problems:
        eps_txt = "" if eps is None else repr(float(eps))
        if not prob.lam > prob.eigvals[0] / 2.0:
            warn = True
            print(f"warning: lam={prob.lam!r} is not above half the smallest eigenvalue "
                  f"({float(prob.eigvals[0])!r}); no axis minimum exists", file=sys.stderr)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cps = lt.critical_points(prob, warn=False)
        for cp in cps:
            cp_rows.append([eps_txt, cp.kind, repr(cp.value)] + [repr(float(v)) for v in cp.location])
        ratio = "" if not eps else repr(float(prob.eigvals[0] / eps))
        u_err = "" if normal is None else repr(lt.normal_alignment_error(prob, normal))
        spec_rows.append([eps_txt, repr(float(prob.eigvals[0])), ratio, u_err, len(cps), int(prob.degenerate)])
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(cfg.seeds)]
        for i, rng in enumerate(rngs):
            q0 = rng.standard_normal(d)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = lt.gradient_descent(prob, q0, cfg.alpha, cfg.max_iters, cfg.tol, points=cps)
            total += 1
            hits += res.label == lt.GLOBAL_MIN
            run_rows.append([eps_txt, i, res.label, res.status, res.iterations, repr(res.loss)])
        if lia is None and cfg.liapunov_samples and prob.eigvals[0] <= 1e-12 * max(1.0, prob.eigvals[-1]):
            rng = np.random.default_rng([seed, 3])
            qs = rng.standard_normal((cfg.liapunov_samples, d))
            qs[:, 0] = np.abs(qs[:, 0]) + 1e-3
            v = np.zeros(d)
            v[0] = 1.0
            lia = np.hstack([qs, lt.liapunov_check(prob, v, qs)])
    _write_csv(out / "runs.csv", ["eps", "seed", "label", "status", "iterations", "final_loss"], run_rows)
    _write_csv(out / "spectrum.csv",
               ["eps", "lambda1", "lambda1_over_eps", "u1_error", "n_critical", "degenerate"], spec_rows)
    _write_csv(out / "critical_points.csv", ["eps", "kind", "value"] + [f"q{i + 1}" for i in range(d)], cp_rows)
    if lia is not None:
        head = [f"q{i + 1}" for i in range(d)] + ["h", "dhdt_closed", "dhdt_chain"]
        _write_csv(out / "liapunov.csv", head, [[repr(float(v)) for v in row] for row in lia])
    summary = f"{hits}/{total} {SUMMARY_SUFFIX}"
    _write_json(out / "summary.json", {"runs": total, "global_min": hits, "warning": int(warn),
                                        "summary": summary})
    print(summary)
    return EXIT_OK


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


HANDLERS = {
    "reconstruct": cmd_reconstruct,
    "sdf-probe": cmd_sdf_probe,
    "shape-space": cmd_shape_space,
    "infer": cmd_infer,
    "interpolate": cmd_interpolate,
    "theory-verify": cmd_theory_verify,
}

# positional arguments accepted in place of the named option
POSITIONAL = {"reconstruct": "input", "shape-space": "inputs", "infer": "input"}


# ---------------------------------------------------------------- parsing

def _field_type(cls, f):
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    if default is None:
        default = _OPTIONAL_TYPES.get(f.name)
    return default


def _add_field_options(parser, cls, command: str) -> None:
    for f in dataclasses.fields(cls):
        flag = "--" + f.name.replace("_", "-")
        kind = _field_type(cls, f)
        if isinstance(kind, bool):
            parser.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif isinstance(kind, list):
            elem = str if f.name in ("inputs", "ids") else float
            parser.add_argument(flag, dest=f.name, nargs="+", type=elem, default=None)
        elif isinstance(kind, int):
            parser.add_argument(flag, dest=f.name, type=int, default=None)
        elif isinstance(kind, float):
            parser.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            parser.add_argument(flag, dest=f.name, type=str, default=None)
    pos = POSITIONAL.get(command)
    if pos:
        parser.add_argument("_positional", nargs="*", metavar=pos.upper(), default=[])


def _common_options(top: bool) -> argparse.ArgumentParser:
    # the subcommand copies must not reset values given before the subcommand
    blank = None if top else argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=blank, help="YAML file of parameters for the command")
    common.add_argument("--seed", type=int, default=blank, help="master random seed (default 0)")
    common.add_argument("--out", type=str, default=blank, help="output directory (default ./out)")
    common.add_argument("--threads", type=int, default=blank, help="BLAS/OpenMP thread count hint")
    common.add_argument("-v", "--verbose", action="store_true", default=False if top else argparse.SUPPRESS)
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="implicit-sdf", parents=[_common_options(True)],
                                     description="Learn signed distance functions from point clouds.")
    sub = parser.add_subparsers(dest="command", required=True)
    shared = _common_options(False)
    for name, cls in COMMANDS.items():
        p = sub.add_parser(name, parents=[shared], help=HANDLERS[name].__doc__.rstrip(".").lower())
        _add_field_options(p, cls, name)
    return parser


def _resolve(args) -> tuple:
    file_values = load_config_file(args.config) if args.config else {}
    seed = file_values.pop("seed", 0)
    out = file_values.pop("out", "out")
    if args.seed is not None:
        seed = args.seed
    if args.out is not None:
        out = args.out
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed: expected a nonnegative integer, got {seed!r}")
    cls = COMMANDS[args.command]
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(cls)
                 if getattr(args, f.name, None) is not None}
    pos_name = POSITIONAL.get(args.command)
    positional = getattr(args, "_positional", [])
    if positional:
        if pos_name == "inputs":
            overrides["inputs"] = list(positional)
        elif len(positional) == 1:
            overrides[pos_name] = positional[0]
        else:
            raise ConfigError(f"{pos_name}: expected one path, got {len(positional)}")
    cfg = build_config(args.command, file_values, overrides)
    return cfg, seed, Path(out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be at least 1", file=sys.stderr)
            return EXIT_USAGE
        # only takes effect for libraries that have not started their pools yet
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg, seed, out = _resolve(args)
        with _locked(out):
            return HANDLERS[args.command](cfg, seed, out)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE




if __name__ == "__main__":
    sys.exit(main())
