"""The single linear-layer model: its loss, critical points and gradient flow.

With ``f(x) = w^T x`` fit to points ``x_i`` under the unit-gradient penalty,
the loss is ``sum (w^T x_i)^2 + lam (|w|^2 - 1)^2``. Rotating into the
eigenbasis of the second-moment matrix ``sum x_i x_i^T = U D U^T`` gives
``q^T D q + lam (|q|^2 - 1)^2`` with ``q = U^T w``, which is what most
functions here work with.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
CLASSIFY_TOL = 1e-10
DIVERGENCE_NORM = 1e3

GLOBAL_MIN = "global-min"
SADDLE = "strict-saddle-or-max"
ORIGIN = "origin"

STATUS_NAMES = {0: "converged", 1: "max-iters", 2: "diverged"}


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL) -> tuple:
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm drops below ``tol`` times the
    matrix norm (absolute ``tol`` for the zero matrix). Returns unsorted
    ``(eigvals, eigvecs)`` with eigenvectors as columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = float(np.linalg.norm(a)) or 1.0
    upper = np.triu_indices(n, 1)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = math.sqrt(2.0) * float(np.linalg.norm(a[upper]))
        if off < tol * scale:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if apr == 0.0:
                    continue
                theta = (a[r, r] - a[p, p]) / (2.0 * apr)
                if abs(theta) > 1e150:
                    # theta^2 would overflow; the rotation is a tiny angle
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[r, r] = c
                rot[p, r] = s
                rot[r, p] = -s
                a = rot.T @ a @ rot
                a[p, r] = a[r, p] = 0.0
                v = v @ rot
    else:
        raise FloatingPointError("Jacobi iteration did not converge")
    return np.diag(a).copy(), v


@dataclass(frozen=True)
class LinearProblem:
    points: np.ndarray
    lam: float
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigvals.shape[0]

    @property
    def degenerate(self) -> bool:
        """True when the two smallest eigenvalues tie, so the minimizer axis is not unique."""
        ev = self.eigvals
        return bool(abs(ev[1] - ev[0]) <= 1e-12 * max(1.0, abs(ev[-1])))

    @classmethod
    def from_spectrum(cls, eigvals, lam: float) -> "LinearProblem":
        """Problem already in diagonal form (U = I); no underlying points."""
        ev = np.asarray(eigvals, dtype=np.float64)
        if np.any(np.diff(ev) < 0) or np.any(ev < 0):
            raise ValueError("eigenvalues must be nonnegative and sorted ascending")
        if lam <= 0:
            raise ValueError("lam must be positive")
        return cls(np.zeros((0, ev.size)), float(lam), ev, np.eye(ev.size))


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    kind: str
    hessian_eigs: np.ndarray
    value: float


@dataclass(frozen=True)
class PlanarSample:
    normal: np.ndarray
    in_plane: np.ndarray
    deviations: np.ndarray
    eps: float

    @property
    def points(self) -> np.ndarray:
        return self.in_plane + self.deviations


@dataclass(frozen=True)
class DescentResult:
    q: np.ndarray
    iterations: int
    status: str
    label: str
    loss: float
    path: np.ndarray
    losses: np.ndarray
    matched: Optional[CriticalPoint]


def diagonalize(points, lam: float) -> LinearProblem:
    """Spectral change of coordinates for the points' second-moment matrix.

    Eigenvalues come back ascending; each eigenvector is signed so its
    largest-magnitude entry is positive (first such entry on ties).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 2:
        raise ValueError("need at least one point of dimension >= 2")
    if lam <= 0:
        raise ValueError("lam must be positive")
    moment = pts.T @ pts
    vals, vecs = jacobi_eigh(moment)
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        big = np.argmax(np.abs(col))
        if col[big] < 0:
            vecs[:, j] = -col
    # PSD up to rounding
    vals = np.maximum(vals, 0.0)
    return LinearProblem(pts, float(lam), vals, vecs)


def linear_loss_grad_hess(q, prob: LinearProblem) -> tuple:
    """Value, gradient and Hessian of the diagonal-form loss at ``q``."""
    q = np.asarray(q, dtype=np.float64)
    lam = prob.lam
    ev = prob.eigvals
    nq = float(q @ q)
    r = nq - 1.0
    value = float(np.sum(ev * q * q) + lam * r * r)
    grad = 2.0 * (ev + 2.0 * lam * r) * q
    hess = np.diag(2.0 * ev + 4.0 * lam * r) + 8.0 * lam * np.outer(q, q)
    return value, grad, hess


def original_loss(w, prob: LinearProblem) -> float:
    """Loss in the original coordinates, straight from the points."""
    w = np.asarray(w, dtype=np.float64)
    r = float(w @ w) - 1.0
    return float(np.sum((prob.points @ w) ** 2) + prob.lam * r * r)


def global_min_value(prob: LinearProblem) -> float:
    l1 = prob.eigvals[0]
    return float(l1 - l1 * l1 / (4.0 * prob.lam))


def _classify(q, prob, is_origin) -> CriticalPoint:
    value, _, hess = linear_loss_grad_hess(q, prob)
    eigs = np.linalg.eigvalsh(hess)
    if np.all(eigs >= -CLASSIFY_TOL):
        kind = GLOBAL_MIN
    elif is_origin:
        kind = ORIGIN
    else:
        kind = SADDLE
    return CriticalPoint(np.asarray(q, dtype=np.float64), kind, eigs, value)


def critical_points(prob: LinearProblem, warn: bool = True) -> list:
    """All critical points: the origin and the axis pairs that exist.

    Ordered as origin, then ``+q_j, -q_j`` by ascending ``j``. A point is
    labelled global-min when its Hessian is positive semidefinite; for the
    origin with an indefinite Hessian the label is ``origin``.
    """
    d = prob.dim
    lam = prob.lam
    if warn and not lam > prob.eigvals[0] / 2.0:
        warnings.warn(
            f"lam={lam} does not exceed half the smallest eigenvalue {prob.eigvals[0]}; "
            "the origin is the only critical point and no axis minimum exists",
            RuntimeWarning, stacklevel=2,
        )
    out = [_classify(np.zeros(d), prob, True)]
    for j in range(d):
        t = 1.0 - prob.eigvals[j] / (2.0 * lam)
        if t > 0:
            e = np.zeros(d)
            e[j] = math.sqrt(t)
            out.append(_classify(e, prob, False))
            out.append(_classify(-e, prob, False))
    return out


def step_bound(prob: LinearProblem, q0) -> float:
    """Crude smoothness constant used to pick a safe step size."""
    q0 = np.asarray(q0, dtype=np.float64)
    return float(2.0 * prob.eigvals[-1] + 12.0 * prob.lam * max(1.0, float(q0 @ q0)))


def default_alpha(prob: LinearProblem, q0) -> float:
    return 0.5 / step_bound(prob, q0)


def gradient_descent(prob: LinearProblem, q0, alpha: Optional[float] = None, max_iters: int = 1_000_000,
                     tol: float = 1e-8, record: bool = False, points: Optional[list] = None) -> DescentResult:
    """Run fixed-step gradient descent and label the terminal point.

    The run stops once the gradient norm falls below ``tol``, after
    ``max_iters`` steps, or when ``|q|`` exceeds 1e3 (diverged). A converged
    run is matched against the critical points within ``10 * tol``.
    """
    q0 = np.asarray(q0, dtype=np.float64)
    if q0.shape != (prob.dim,) or not np.all(np.isfinite(q0)):
        raise ValueError("q0 must be a finite vector of the problem dimension")
    if alpha is None:
        alpha = default_alpha(prob, q0)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if alpha >= 1.0 / step_bound(prob, q0):
        warnings.warn(f"alpha={alpha} exceeds the safe step bound; descent may not be monotone",
                      RuntimeWarning, stacklevel=2)
    q, it, status, path, losses = kernels.linear_gd(
        prob.eigvals, prob.lam, q0, float(alpha), int(max_iters), float(tol), bool(record)
    )
    if points is None:
        points = critical_points(prob, warn=False)
    matched = None
    label = STATUS_NAMES[status]
    if status == 0:
        label = "unmatched"
        for cp in points:
            if np.linalg.norm(q - cp.location) <= 10.0 * tol:
                matched = cp
                label = cp.kind
                break
    return DescentResult(q, int(it), STATUS_NAMES[status], label, float(losses[-1]), path, losses, matched)


def liapunov_h(q, v) -> float:
    q = np.asarray(q, dtype=np.float64)
    diff = q - v
    return float(diff @ diff / (1.0 + q @ q))


def liapunov_check(prob: LinearProblem, v, samples) -> np.ndarray:
    """Rows ``(h, closed-form dh/dt, chain-rule dh/dt)`` along the flow ``-grad``.

    The closed form holds for noise-free planar data, so the smallest
    eigenvalue must vanish and ``v`` must be one of the unit minimizers
    ``+-e_1``. Every sample must satisfy ``v^T q > 0``.
    """
    v = np.asarray(v, dtype=np.float64)
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    d = prob.dim
    if v.shape != (d,) or samples.shape[1] != d:
        raise ValueError("dimension mismatch")
    if abs(prob.eigvals[0]) > 1e-12 * max(1.0, prob.eigvals[-1]):
        raise ValueError("the closed-form decrease needs a vanishing smallest eigenvalue")
    e1 = np.zeros(d)
    e1[0] = 1.0
    if not (np.allclose(v, e1, atol=1e-12) or np.allclose(v, -e1, atol=1e-12)):
        raise ValueError("v must be one of the global minimizers +-e_1")
    vq = samples @ v
    if np.any(vq <= 0):
        bad = int(np.nonzero(vq <= 0)[0][0])
        raise ValueError(f"sample {bad} lies outside the half-space v^T q > 0")
    out = np.empty((samples.shape[0], 3))
    for i, q in enumerate(samples):
        nq = float(q @ q)
        diff = q - v
        dist2 = float(diff @ diff)
        value, grad, _ = linear_loss_grad_hess(q, prob)
        grad_h = 2.0 * diff / (1.0 + nq) - 2.0 * dist2 * q / (1.0 + nq) ** 2
        out[i, 0] = dist2 / (1.0 + nq)
        out[i, 1] = -8.0 * vq[i] / (1.0 + nq) ** 2 * value
        out[i, 2] = -float(grad_h @ grad)
    return out


def planar_sample(n: int, dim: int = 3, eps: float = 0.0, seed: int = 0, normal=None,
                  base: Optional[PlanarSample] = None, spread: float = 1.0) -> PlanarSample:
    """Points on a hyperplane through the origin plus bounded perturbations.

    In-plane points are normal with standard deviation ``spread``, projected
    onto the plane; deviations
    are uniform directions with lengths uniform in ``[0, eps]``. Passing
    ``base`` keeps its in-plane points and deviation directions and only
    rescales the deviations, which is how noise sweeps stay comparable.
    """
    if base is not None:
        if base.eps <= 0:
            raise ValueError("base sample must have positive eps to rescale")
        return PlanarSample(base.normal, base.in_plane, base.deviations * (eps / base.eps), float(eps))
    if n < 1 or dim < 2:
        raise ValueError("need n >= 1 and dim >= 2")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    rng = np.random.default_rng(seed)
    if normal is None:
        normal = rng.standard_normal(dim)
    normal = np.asarray(normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    y = spread * rng.standard_normal((n, dim))
    y -= np.outer(y @ normal, normal)
    dirs = rng.standard_normal((n, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lengths = eps * rng.random(n)
    return PlanarSample(normal, y, dirs * lengths[:, None], float(eps))


def normal_alignment_error(prob: LinearProblem, normal) -> float:
    """``min |u_1 - n|, |u_1 + n|``: distance of the smallest eigenvector to the normal up to sign."""
    u1 = prob.eigvecs[:, 0]
    normal = np.asarray(normal, dtype=np.float64)
    return float(min(np.linalg.norm(u1 - normal), np.linalg.norm(u1 + normal)))
