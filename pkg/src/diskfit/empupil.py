"""Two-component EM for locating the outer edge of an annulus.

Component 1 is the gradient circle model: it favours points whose normals
point at a common centre from distance R, i.e. the outer edge of a bright
ring. Component 2 is an isotropic 2-D Gaussian over point positions that
absorbs inner-edge and spider clutter; it ignores normals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circlefit import CircleFit, weighted_gradient_fit
from .errors import (
    ClassCollapseError,
    DegenerateGeometryError,
    DiskFitError,
    PolarityMismatchError,
    ValidationError,
)
from .imagepipe import EdgePointSet

MIN_CIRCLE_WEIGHT = 3.0
SIGMA_FLOOR = 1e-6
TAU_BOUNDS = (1e-12, 1.0 - 1e-12)


@dataclass(frozen=True)
class MixtureParams:
    tau: float
    x01: float
    y01: float
    r: float
    sigma1: float
    x02: float
    y02: float
    sigma2: float

    def __post_init__(self):
        vals = [getattr(self, f) for f in self.__dataclass_fields__]
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite mixture parameters {vals}")
        if not 0.0 < self.tau < 1.0:
            raise ValidationError(f"tau must lie in (0, 1), got {self.tau}")
        if not (self.sigma1 > 0 and self.sigma2 > 0 and self.r > 0):
            raise ValidationError("sigma1, sigma2 and r must be positive")

    @property
    def circle(self) -> CircleFit:
        return CircleFit(self.x01, self.y01, self.r, self.sigma1**2)

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass(frozen=True)
class ResponsibilityMatrix:
    """``weights[i, j]``: posterior probability that point i belongs to class j."""

    weights: np.ndarray
    flagged: np.ndarray  # points whose densities were both unusable

    @property
    def class_totals(self) -> np.ndarray:
        return self.weights.sum(axis=0)


@dataclass
class EMTrace:
    loglik: list[float] = field(default_factory=list)
    params: list[MixtureParams] = field(default_factory=list)
    converged: bool = False
    flagged_points: int = 0

    @property
    def iterations(self) -> int:
        return max(len(self.loglik) - 1, 0)

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "initial_loglik": self.loglik[0] if self.loglik else None,
            "final_loglik": self.loglik[-1] if self.loglik else None,
            "flagged_points": self.flagged_points,
        }


def _log_densities(points: EdgePointSet, params: MixtureParams) -> np.ndarray:
    x, y, nx, ny = points.data
    ux = params.x01 - x
    uy = params.y01 - y
    dl = nx * ux + ny * uy - params.r
    dt = ny * ux - nx * uy
    s1 = params.sigma1**2
    log_p1 = math.log(params.tau / (2.0 * math.pi * s1)) - (dl * dl + dt * dt) / (2.0 * s1)

    s2 = params.sigma2**2
    d2 = (params.x02 - x) ** 2 + (params.y02 - y) ** 2
    log_p2 = math.log((1.0 - params.tau) / (2.0 * math.pi * s2)) - d2 / (2.0 * s2)
    return np.column_stack((log_p1, log_p2))


def density_circle(point, params: MixtureParams) -> float:
    """Circle-component density at one ``(x, y, nx, ny)`` point."""
    x, y, nx, ny = point
    ux, uy = params.x01 - x, params.y01 - y
    dl = nx * ux + ny * uy
    dt = ny * ux - nx * uy
    s1 = params.sigma1**2
    return params.tau / (2.0 * math.pi * s1) * math.exp(-((dl - params.r) ** 2 + dt**2) / (2.0 * s1))


def density_background(point, params: MixtureParams) -> float:
    """Background-component density at one point; the normal is ignored."""
    x, y = point[0], point[1]
    s2 = params.sigma2**2
    d2 = (params.x02 - x) ** 2 + (params.y02 - y) ** 2
    return (1.0 - params.tau) / (2.0 * math.pi * s2) * math.exp(-d2 / (2.0 * s2))


def _logsumexp_rows(logp: np.ndarray) -> np.ndarray:
    top = logp.max(axis=1)
    safe = np.where(np.isfinite(top), top, 0.0)
    return safe + np.log(np.exp(logp - safe[:, None]).sum(axis=1))


def observed_loglik(points: EdgePointSet, params: MixtureParams) -> float:
    """``sum_i ln(p1_i + p2_i)``."""
    return float(_logsumexp_rows(_log_densities(points, params)).sum())


def e_step(points: EdgePointSet, params: MixtureParams) -> ResponsibilityMatrix:
    """Class posteriors, computed in log space so tiny densities do not underflow.

    A point where neither log-density is finite gets ``(0.5, 0.5)`` and is flagged.
    """
    logp = _log_densities(points, params)
    lse = _logsumexp_rows(logp)
    with np.errstate(invalid="ignore"):
        w = np.exp(logp - lse[:, None])
    bad = ~np.isfinite(lse) | ~np.all(np.isfinite(w), axis=1)
    if np.any(bad):
        w[bad] = 0.5
    # renormalise so each row sums to 1 up to rounding
    w /= w.sum(axis=1, keepdims=True)
    return ResponsibilityMatrix(weights=w, flagged=bad)


def m_step(
    points: EdgePointSet,
    resp: ResponsibilityMatrix,
    previous: MixtureParams | None = None,
) -> MixtureParams:
    """Maximise the expected complete-data log-likelihood.

    The circle parameters come from the weighted closed-form estimator, the
    background from the weighted centroid with ``sigma2^2`` equal to half the
    weighted mean squared distance. Scales are floored at ``SIGMA_FLOOR`` and
    ``tau`` is kept inside ``TAU_BOUNDS``. If the background weight vanishes
    entirely its parameters are carried over from ``previous``.
    """
    w1 = resp.weights[:, 0]
    w2 = resp.weights[:, 1]
    n1 = float(w1.sum())
    n2 = float(w2.sum())
    if n1 < MIN_CIRCLE_WEIGHT:
        raise ClassCollapseError(f"circle component effective count {n1:.3g} < {MIN_CIRCLE_WEIGHT}")

    data = points.data
    x01, y01, r, s1sq = weighted_gradient_fit(data, w1)
    if not r > 0:
        raise PolarityMismatchError(f"circle component radius {r:.4g} is not positive")
    sigma1 = max(math.sqrt(s1sq), SIGMA_FLOOR)

    if n2 > 0:
        x02 = float(w2 @ data[0] / n2)
        y02 = float(w2 @ data[1] / n2)
        d2 = (data[0] - x02) ** 2 + (data[1] - y02) ** 2
        sigma2 = max(math.sqrt(float(w2 @ d2) / (2.0 * n2)), SIGMA_FLOOR)
    elif previous is not None:
        x02, y02, sigma2 = previous.x02, previous.y02, previous.sigma2
    else:
        raise ClassCollapseError("background component has zero weight and no previous estimate")

    tau = min(max(n1 / len(points), TAU_BOUNDS[0]), TAU_BOUNDS[1])
    return MixtureParams(tau, x01, y01, r, sigma1, x02, y02, sigma2)


def init_params(points: EdgePointSet, image_diag: float) -> MixtureParams:
    """Starting point for EM.

    The centre is where the normal lines meet in the least-squares sense:
    the 2x2 system built from ``sum ny^2``, ``sum nx ny`` and ``sum nx^2``.
    Both components start there; ``R = sigma2`` is the RMS distance of the
    points to it, ``sigma1 = image_diag / 2`` and ``tau = 0.5``.
    """
    if len(points) < 2:
        raise ValidationError("need at least 2 points to locate a centre")
    x, y, nx, ny = points.data
    sxx = float(nx @ nx)
    syy = float(ny @ ny)
    sxy = float(nx @ ny)
    cross = ny * x - nx * y
    a = np.array([[syy, -sxy], [sxy, -sxx]])
    b = np.array([float(ny @ cross), float(nx @ cross)])
    det = sxy * sxy - syy * sxx
    if not abs(det) / (sxx + syy) ** 2 > 1e-9:
        raise DegenerateGeometryError("normals are (nearly) parallel; normal lines do not intersect")
    x0, y0 = np.linalg.solve(a, b)
    r = math.sqrt(float(np.mean((x - x0) ** 2 + (y - y0) ** 2)))
    if not r > 0:
        raise DegenerateGeometryError("all points coincide with the estimated centre")
    return MixtureParams(0.5, float(x0), float(y0), r, image_diag / 2.0, float(x0), float(y0), r)


def fit_pupil_em(
    points: EdgePointSet,
    init: MixtureParams,
    rel_tol: float = 1e-6,
    max_iter: int = 200,
) -> tuple[MixtureParams, EMTrace]:
    """Run EM from ``init`` until the observed log-likelihood settles.

    Stops when ``|L_k - L_{k-1}| < rel_tol * |L_k|`` or after ``max_iter``
    rounds. Errors raised mid-run carry the partial trace as ``exc.trace``.
    """
    if rel_tol <= 0:
        raise ValidationError("rel_tol must be positive")
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")

    trace = EMTrace()
    params = init
    ll = observed_loglik(points, params)
    trace.loglik.append(ll)
    trace.params.append(params)
    try:
        for _ in range(max_iter):
            resp = e_step(points, params)
            trace.flagged_points = int(resp.flagged.sum())
            params = m_step(points, resp, previous=params)
            new_ll = observed_loglik(points, params)
            trace.loglik.append(new_ll)
            trace.params.append(params)
            done = abs(new_ll - ll) < rel_tol * max(abs(new_ll), 1e-300)
            ll = new_ll
            if done:
                trace.converged = True
                break
    except DiskFitError as exc:
        exc.trace = trace
        raise
    return params, trace
