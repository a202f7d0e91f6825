"""Position from RIS angles of departure.

A coarse fix is the least-squares intersection of the bearing lines leaving
each RIS along its estimated AoD. It can be polished on the raw-signal
objective with the AoDs tied to the position and the gains profiled out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, direction_vector
from .estimation import refine_local


class SingularGeometryError(GeometryError):
    """Bearing lines do not determine a unique point."""

    def __init__(self, message: str, conditioning: float):
        super().__init__(f"{message} (conditioning {conditioning:.3g})")
        self.conditioning = conditioning


@dataclass(frozen=True)
class BearingLine:
    anchor: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if not np.isfinite(n) or n == 0:
            raise ValueError("direction must be a non-zero finite vector")
        object.__setattr__(self, "direction", d / n)
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))

    def distance2(self, p) -> float:
        """Squared distance from ``p`` to the line."""
        diff = np.asarray(p, dtype=float) - self.anchor
        perp = diff - (diff @ self.direction) * self.direction
        return float(perp @ perp)


@dataclass
class PositionEstimate:
    position: np.ndarray
    nu: float
    method: str
    conditioning: float
    residual: float = float("nan")


def _normal_system(lines):
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for line in lines:
        proj = np.eye(3) - np.outer(line.direction, line.direction)
        A += proj
        b += proj @ line.anchor
    return A, b


def line_conditioning(lines) -> float:
    """Smallest eigenvalue of ``sum(I - u u^T)``, zero for parallel lines."""
    A, _ = _normal_system(lines)
    return float(np.linalg.eigvalsh(A)[0])


def intersect_lines(lines, min_conditioning: float = 1e-9) -> np.ndarray:
    """Least-squares intersection of 3-D lines.

    Minimises the sum of squared point-to-line distances.

    Raises
    ------
    SingularGeometryError
        Fewer than two lines, or (nearly) parallel directions.
    """
    lines = list(lines)
    if len(lines) < 2:
        raise SingularGeometryError("need at least two lines", 0.0)
    A, b = _normal_system(lines)
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= min_conditioning * len(lines):
        raise SingularGeometryError("bearing lines are parallel", float(eig[0]))
    return np.linalg.solve(A, b)


def bearing_lines(scenario, angles) -> list[BearingLine]:
    return [BearingLine(np.array(p), direction_vector(a, rot))
            for p, rot, a in zip(scenario.ris_positions, scenario.rotations, angles)]


def position_from_estimate(estimate, scenario) -> PositionEstimate:
    lines = bearing_lines(scenario, estimate.angles)
    p = intersect_lines(lines)
    return PositionEstimate(position=p, nu=estimate.nu, method="coarse-intersection",
                            conditioning=line_conditioning(lines), residual=estimate.residual)


def position_residual(y, model, p, nu: float, los: bool) -> float:
    """Raw-signal residual with AoDs taken from position ``p``, gains profiled out."""
    A = model.design(nu, model.scenario.aods(p), los)
    alpha = np.linalg.lstsq(A, y, rcond=None)[0]
    r = y - A @ alpha
    return float(np.vdot(r, r).real)


def refine_position(y, model, p0, nu0: float, los: bool, fix_nu: bool = False,
                    tol: float = 1e-10, max_iters: int = 200, step: float = 0.01) -> PositionEstimate:
    """Local polish of (CFO, position) on the raw-signal objective.

    ``step`` is the position scale in meters; the CFO scale is a tenth of the
    frame's frequency resolution.
    """
    y = np.asarray(y)
    p0 = np.asarray(p0, dtype=float)
    if not np.all(np.isfinite(p0)) or not np.isfinite(nu0):
        raise ValueError("initial position and CFO must be finite")
    norm = np.vdot(y, y).real or 1.0

    def unpack(x):
        return (nu0, x) if fix_nu else (x[0], x[1:])

    def f(x):
        nu, p = unpack(x)
        try:
            return position_residual(y, model, p, nu, los) / norm
        except GeometryError:
            return np.inf

    x0 = p0 if fix_nu else np.concatenate([[nu0], p0])
    scale = np.full(x0.shape, step)
    if not fix_nu:
        scale[0] = 0.1 / (model.n_tx * model.ts)
    x = refine_local(f, x0, scale, tol, max_iters)
    nu, p = unpack(x)
    lines = bearing_lines(model.scenario, model.scenario.aods(p))
    return PositionEstimate(position=np.asarray(p), nu=float(nu), method="refined",
                            conditioning=line_conditioning(lines),
                            residual=f(x) * norm)
