"""Circle estimators working on edge points with measured normals.

The gradient model scores each point by two signed distances from the
candidate centre ``c`` to the lines through the point: ``dl`` along the
measured normal and ``dtau`` across it. On the circle ``dl = R`` and
``dtau = 0``, so the penalty ``(dl - R)^2 + dtau^2`` is quadratic in
``(x0, y0, R)`` and has a closed-form minimiser.

Baselines are the algebraic Kasa fit and an iterative geometric fit
(damped Gauss-Newton on the radial residual ``|p - c| - R``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateGeometryError,
    DomainError,
    NumericalFailureError,
    PolarityMismatchError,
    ValidationError,
)
from .imagepipe import EdgePointSet

DENOMINATOR_EPS = 1e-9
_NEGATE_NORMALS = np.array([[1.0], [1.0], [-1.0], [-1.0]])


class EdgePolarity(enum.Enum):
    """Outer edges of a bright disk have normals toward the centre; inner annulus edges away from it."""

    OUTER = "outer"
    INNER = "inner"


@dataclass(frozen=True)
class CircleFit:
    x0: float
    y0: float
    r: float
    sigma2: float = 0.0

    def __post_init__(self):
        vals = (self.x0, self.y0, self.r, self.sigma2)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite circle parameters {vals}")
        if not self.r > 0:
            raise ValidationError(f"radius must be positive, got {self.r}")
        if self.sigma2 < 0:
            raise ValidationError(f"sigma2 must be >= 0, got {self.sigma2}")

    def as_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "r": self.r, "sigma2": self.sigma2}


@dataclass(frozen=True)
class EdgeResidual:
    dl: np.ndarray
    dtau: np.ndarray


@dataclass(frozen=True)
class FitReport:
    fit: CircleFit
    iterations: int
    converged: bool
    loss: float


def _oriented(points: EdgePointSet, polarity: EdgePolarity) -> tuple[np.ndarray, np.ndarray]:
    if polarity is EdgePolarity.INNER:
        return -points.nx, -points.ny
    return points.nx, points.ny


def edge_residuals(points: EdgePointSet, x0: float, y0: float) -> EdgeResidual:
    ux = x0 - points.x
    uy = y0 - points.y
    return EdgeResidual(
        dl=points.nx * ux + points.ny * uy,
        dtau=points.ny * ux - points.nx * uy,
    )


def _solve_gradient_model(mx, my, mnx, mny, num):
    den = 1.0 - mnx * mnx - mny * mny
    if not abs(den) > DENOMINATOR_EPS:
        raise DegenerateGeometryError(
            f"normals are nearly parallel (1 - |mean n|^2 = {den:.3g}); centre is unidentifiable"
        )
    r = num / den
    return mx + r * mnx, my + r * mny, r


def gradient_fit_arrays(data: np.ndarray, unit_normals: bool = False) -> tuple[float, float, float, float]:
    """Unweighted minimiser ``(x0, y0, R, sigma2)`` for rows ``x, y, nx, ny`` of ``data``.

    The returned R may be non-positive; callers decide what that means.
    """
    n = data.shape[1]
    m = data.sum(axis=1) / n
    # centred coordinates keep the numerator free of cancellation
    c = data[:2] - m[:2, None]
    num = -np.vdot(data[2:], c) / n
    x0, y0, r = _solve_gradient_model(m[0], m[1], m[2], m[3], num)

    # (dl - R)^2 + dtau^2 == |u - R n|^2 + (|n|^2 - 1)(|u|^2 - R^2),  u = centre - p
    centre = np.array([[x0], [y0]])
    e = data[2:] * r
    e += data[:2]
    e -= centre
    total = np.vdot(e, e)
    if not unit_normals:
        u = centre - data[:2]
        total += np.dot(data[2] ** 2 + data[3] ** 2 - 1.0, u[0] ** 2 + u[1] ** 2 - r * r)
    return float(x0), float(y0), float(r), float(total / (2.0 * n))


def weighted_gradient_fit(data: np.ndarray, weights: np.ndarray) -> tuple[float, float, float, float]:
    """Same minimiser with every mean replaced by a ``weights``-weighted mean."""
    wsum = weights.sum()
    mx, my, mnx, mny = data @ weights / wsum
    cx = data[0] - mx
    cy = data[1] - my
    num = -(weights @ (data[2] * cx + data[3] * cy)) / wsum
    x0, y0, r = _solve_gradient_model(mx, my, mnx, mny, num)

    ux = x0 - data[0]
    uy = y0 - data[1]
    dl = data[2] * ux + data[3] * uy - r
    dt = data[3] * ux - data[2] * uy
    sigma2 = weights @ (dl * dl + dt * dt) / (2.0 * wsum)
    return float(x0), float(y0), float(r), float(sigma2)


def fit_closed_form(points: EdgePointSet, polarity: EdgePolarity = EdgePolarity.OUTER) -> CircleFit:
    """Closed-form maximum-likelihood circle from points and normals.

    Inner polarity negates every normal before applying the outer formulae,
    which is the same as flipping the sign of R in the penalty.

    Raises DegenerateGeometryError if the mean normal has (nearly) unit length
    and PolarityMismatchError if the estimated radius is not positive.
    """
    data = points.data
    if data.shape[1] < 3:
        raise ValidationError(f"need at least 3 points, got {data.shape[1]}")
    if polarity is EdgePolarity.INNER:
        data = data * _NEGATE_NORMALS
    x0, y0, r, sigma2 = gradient_fit_arrays(data, points.unit_normals)
    if not r > 0:
        raise PolarityMismatchError(
            f"estimated radius {r:.4g} is not positive for {polarity.value} polarity"
        )
    return CircleFit(x0, y0, r, sigma2)


def gradient_penalty(points: EdgePointSet, x0, y0, r, polarity=EdgePolarity.OUTER) -> float:
    """Sum of ``(dl -+ R)^2 + dtau^2`` (minus for outer, plus for inner edges)."""
    res = edge_residuals(points, x0, y0)
    sign = -1.0 if polarity is EdgePolarity.OUTER else 1.0
    return float(np.sum((res.dl + sign * r) ** 2 + res.dtau**2))


def gradient_penalty_expanded(points: EdgePointSet, x0, y0, r, polarity=EdgePolarity.OUTER) -> float:
    """Same penalty after expanding the squares; assumes unit normals.

    The expanded terms cancel heavily when a point sits near the model
    circle, so they are accumulated in extended precision.
    """
    nx, ny = (np.asarray(v, dtype=np.longdouble) for v in _oriented(points, polarity))
    ux = np.longdouble(x0) - points.x.astype(np.longdouble)
    uy = np.longdouble(y0) - points.y.astype(np.longdouble)
    r = np.longdouble(r)
    return float(np.sum(ux * ux + uy * uy + r * r - 2 * r * nx * ux - 2 * r * ny * uy))


def _check_sigma2(sigma2):
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive to evaluate a likelihood, got {sigma2}")


def gradient_loglik(
    points: EdgePointSet,
    fit: CircleFit,
    polarity: EdgePolarity = EdgePolarity.OUTER,
    expanded: bool = False,
) -> float:
    """Log-likelihood of the gradient model (2-D Gaussian residual per point)."""
    _check_sigma2(fit.sigma2)
    penalty_fn = gradient_penalty_expanded if expanded else gradient_penalty
    penalty = penalty_fn(points, fit.x0, fit.y0, fit.r, polarity)
    n = len(points)
    return -n * math.log(2.0 * math.pi * fit.sigma2) - penalty / (2.0 * fit.sigma2)


def geometric_penalty(points: EdgePointSet, x0, y0, r) -> float:
    d = np.hypot(points.x - x0, points.y - y0)
    return float(np.sum((d - r) ** 2))


def geometric_loglik(points: EdgePointSet, fit: CircleFit) -> float:
    """Log-likelihood of the radial-residual model; normals are ignored."""
    _check_sigma2(fit.sigma2)
    n = len(points)
    penalty = geometric_penalty(points, fit.x0, fit.y0, fit.r)
    return -0.5 * n * math.log(2.0 * math.pi * fit.sigma2) - penalty / (2.0 * fit.sigma2)


def fit_kasa(points: EdgePointSet) -> CircleFit:
    """Algebraic fit minimising ``sum((|p - c|^2 - R^2)^2)`` by linear least squares."""
    n = len(points)
    if n < 3:
        raise ValidationError(f"need at least 3 points, got {n}")
    mx, my = points.x.mean(), points.y.mean()
    u = points.x - mx
    v = points.y - my
    a = np.column_stack((2.0 * u, 2.0 * v, np.ones(n)))
    b = u * u + v * v
    sol, _, rank, sv = np.linalg.lstsq(a, b, rcond=None)
    if rank < 3 or sv[-1] <= 1e-10 * sv[0]:
        raise DegenerateGeometryError("points are collinear; no unique circle")
    cu, cv, c = sol
    r2 = c + cu * cu + cv * cv
    if not r2 > 0:
        raise DegenerateGeometryError("algebraic fit produced a non-positive squared radius")
    r = math.sqrt(r2)
    x0, y0 = mx + cu, my + cv
    resid = np.hypot(points.x - x0, points.y - y0) - r
    return CircleFit(float(x0), float(y0), r, float(resid @ resid / n))


def fit_geometric_iterative(
    points: EdgePointSet,
    init: CircleFit | None = None,
    rel_tol: float = 1e-4,
    max_iter: int = 100,
) -> FitReport:
    """Damped Gauss-Newton on the radial residuals ``|p - c| - R``.

    Stops once ``max(|dx0|, |dy0|, |dR|) / R < rel_tol`` or after
    ``max_iter`` updates. The step is halved until the squared error does
    not increase. ``init`` defaults to :func:`fit_kasa`.
    """
    if rel_tol <= 0:
        raise ValidationError(f"rel_tol must be positive, got {rel_tol}")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be >= 1, got {max_iter}")
    if len(points) < 3:
        raise ValidationError(f"need at least 3 points, got {len(points)}")
    if init is None:
        init = fit_kasa(points)

    x, y = points.x, points.y
    x0, y0, r = init.x0, init.y0, init.r
    dx = x - x0
    dy = y - y0
    d = np.sqrt(dx * dx + dy * dy)
    res = d - r
    loss = float(res @ res)
    if not math.isfinite(loss):
        raise NumericalFailureError("non-finite objective at the initial estimate", last=init)

    converged = False
    it = 0
    while it < max_iter:
        it += 1
        # Jacobian columns of res w.r.t. (x0, y0, r): (-dx/d, -dy/d, -1)
        ex = dx / d
        ey = dy / d
        jtj = np.array(
            [
                [ex @ ex, ex @ ey, ex.sum()],
                [ex @ ey, ey @ ey, ey.sum()],
                [ex.sum(), ey.sum(), float(x.size)],
            ]
        )
        jtr = np.array([ex @ res, ey @ res, res.sum()])
        try:
            step = np.linalg.solve(jtj, jtr)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError("singular normal equations", last=CircleFit(x0, y0, abs(r))) from exc

        scale = 1.0
        while True:
            nx0 = x0 + scale * step[0]
            ny0 = y0 + scale * step[1]
            nr = r + scale * step[2]
            ndx = x - nx0
            ndy = y - ny0
            nd = np.sqrt(ndx * ndx + ndy * ndy)
            nres = nd - nr
            nloss = float(nres @ nres)
            if nloss <= loss or scale < 1e-10:
                break
            scale *= 0.5
        if not math.isfinite(nloss):
            raise NumericalFailureError(
                f"non-finite objective at iteration {it}",
                last=CircleFit(x0, y0, r, loss / x.size) if r > 0 else None,
            )
        change = max(abs(nx0 - x0), abs(ny0 - y0), abs(nr - r)) / abs(nr)
        x0, y0, r = nx0, ny0, nr
        dx, dy, d, res, loss = ndx, ndy, nd, nres, nloss
        if change < rel_tol:
            converged = True
            break

    if not r > 0:
        raise NumericalFailureError(f"iteration ended with non-positive radius {r:.4g}")
    fit = CircleFit(float(x0), float(y0), float(r), loss / x.size)
    return FitReport(fit=fit, iterations=it, converged=converged, loss=loss)


def fit_warm_started(
    points: EdgePointSet,
    polarity: EdgePolarity = EdgePolarity.OUTER,
    rel_tol: float = 1e-4,
    max_iter: int = 100,
) -> FitReport:
    """Geometric iterative fit seeded with the closed-form estimate."""
    return fit_geometric_iterative(points, fit_closed_form(points, polarity), rel_tol, max_iter)
