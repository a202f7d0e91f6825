"""Positions, RIS orientations, angles of departure and array responses.

Angles are pairs ``(az, el)`` in radians, with ``el`` measured from the local
z axis of the RIS frame. Rotations map the global frame into the RIS frame,
so a global vector ``d`` reads ``rot @ d`` in local coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

_PLANES = {
    # in-plane axes (first, second) and boresight axis, as local indices
    "xy": (0, 1, 2),
    "xz": (0, 2, 1),
}


class GeometryError(ValueError):
    """Raised for degenerate geometric configurations."""


class Angle(NamedTuple):
    az: float
    el: float


def rot_z(theta: float) -> np.ndarray:
    """Rotation by ``theta`` about the z axis."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def check_rotation(rot, atol: float = 1e-12) -> np.ndarray:
    rot = np.asarray(rot, dtype=float)
    if rot.shape != (3, 3):
        raise GeometryError(f"rotation must be 3x3, got {rot.shape}")
    if not np.allclose(rot.T @ rot, np.eye(3), atol=atol) or np.linalg.det(rot) < 0:
        raise GeometryError("rotation matrix is not in SO(3)")
    return rot


def unit_to_angle(d) -> Angle:
    """Azimuth/elevation of a local direction. Azimuth is 0 on the z axis."""
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    planar = np.hypot(d[0], d[1])
    az = 0.0 if planar < 1e-15 else float(np.arctan2(d[1], d[0]))
    if az == -np.pi:
        az = np.pi
    el = float(np.arccos(np.clip(d[2], -1.0, 1.0)))
    return Angle(az, el)


def angle_to_unit(angle) -> np.ndarray:
    az, el = angle
    return np.array([np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)])


def compute_aod(ue, ris, rot) -> Angle:
    """Angle of departure from a RIS at ``ris`` towards a point ``ue``.

    Parameters
    ----------
    ue, ris : array_like, shape (3,)
        Global positions in meters.
    rot : array_like, shape (3, 3)
        Global-to-local rotation of the RIS.
    """
    diff = np.asarray(ue, dtype=float) - np.asarray(ris, dtype=float)
    if np.linalg.norm(diff) == 0.0:
        raise GeometryError("angle undefined for coincident points")
    return unit_to_angle(np.asarray(rot, dtype=float) @ diff)


def aod_jacobian(ue, ris, rot) -> np.ndarray:
    """Derivative of ``(az, el)`` with respect to the global position ``ue``.

    Returns a 2x3 matrix. Raises `GeometryError` on the elevation poles,
    where azimuth is not differentiable.
    """
    rot = np.asarray(rot, dtype=float)
    r = rot @ (np.asarray(ue, dtype=float) - np.asarray(ris, dtype=float))
    rho2 = r @ r
    planar2 = r[0] ** 2 + r[1] ** 2
    if planar2 < 1e-24 * max(rho2, 1e-300):
        raise GeometryError("AoD Jacobian singular at sin(el) = 0")
    planar = np.sqrt(planar2)
    d_az = np.array([-r[1], r[0], 0.0]) / planar2
    d_el = -(np.array([0.0, 0.0, rho2]) - r[2] * r) / (rho2 * planar)
    return np.vstack([d_az, d_el]) @ rot


def wavenumber(angle, wavelength: float) -> np.ndarray:
    """Wavenumber vector ``(2 pi / wavelength) * unit(angle)`` in rad/m."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return 2 * np.pi / wavelength * angle_to_unit(angle)


def wavenumber_jacobian(angle, wavelength: float) -> np.ndarray:
    """3x2 derivative of `wavenumber` with respect to ``(az, el)``."""
    az, el = angle
    scale = 2 * np.pi / wavelength
    return scale * np.array([
        [-np.sin(el) * np.sin(az), np.cos(el) * np.cos(az)],
        [np.sin(el) * np.cos(az), np.cos(el) * np.sin(az)],
        [0.0, -np.sin(el)],
    ])


def direction_vector(angle, rot, wavelength: float = 1.0) -> np.ndarray:
    """Global unit vector pointing from the RIS along ``angle``."""
    k = np.asarray(rot, dtype=float).T @ wavenumber(angle, wavelength)
    return k / np.linalg.norm(k)


@dataclass(frozen=True)
class RisArrayLayout:
    """Uniform planar RIS grid centred on the RIS origin.

    Elements are indexed row-major: ``n = i * cols + j`` where ``j`` runs along
    the first in-plane axis and ``i`` along the second. ``plane`` names the two
    local axes spanned by the panel; the remaining axis is the boresight.
    """

    rows: int = 64
    cols: int = 64
    spacing: float = 0.005
    plane: str = "xz"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("RIS needs at least one element")
        if self.spacing <= 0:
            raise ValueError("element spacing must be positive")
        if self.plane not in _PLANES:
            raise ValueError(f"plane must be one of {sorted(_PLANES)}")

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols

    @property
    def axes(self) -> tuple[int, int, int]:
        return _PLANES[self.plane]

    @cached_property
    def grid_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-element coordinates along the two in-plane axes."""
        j = np.arange(self.cols) - (self.cols - 1) / 2
        i = np.arange(self.rows) - (self.rows - 1) / 2
        ii, jj = np.meshgrid(i, j, indexing="ij")
        return jj.ravel() * self.spacing, ii.ravel() * self.spacing

    @cached_property
    def axis_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Column offsets along the first axis and row offsets along the second."""
        j = np.arange(self.cols) - (self.cols - 1) / 2
        i = np.arange(self.rows) - (self.rows - 1) / 2
        return j * self.spacing, i * self.spacing

    @cached_property
    def positions(self) -> np.ndarray:
        """Element positions in the local frame, shape (N, 3)."""
        first, second, _ = self.axes
        s1, s2 = self.grid_offsets
        q = np.zeros((self.n_elements, 3))
        q[:, first] = s1
        q[:, second] = s2
        q.setflags(write=False)
        return q

    def in_plane(self, unit) -> tuple[float, float]:
        """Direction cosines of a local unit vector along the panel axes."""
        first, second, _ = self.axes
        return float(unit[first]), float(unit[second])

    def from_in_plane(self, u: float, v: float) -> np.ndarray:
        """Forward-hemisphere local unit vector with direction cosines (u, v)."""
        first, second, normal = self.axes
        w2 = 1.0 - u * u - v * v
        d = np.zeros(3)
        d[first], d[second] = u, v
        d[normal] = np.sqrt(max(w2, 0.0))
        return d

    def angle_from_in_plane(self, u: float, v: float) -> Angle:
        return unit_to_angle(self.from_in_plane(u, v))

    def in_plane_from_angle(self, angle) -> tuple[float, float]:
        return self.in_plane(angle_to_unit(angle))

    def is_forward(self, angle) -> bool:
        return angle_to_unit(angle)[self.axes[2]] >= 0.0


def steering_vector(angle, layout: RisArrayLayout, wavelength: float) -> np.ndarray:
    """RIS response ``exp(j k(angle) . q_n)`` for every element."""
    return np.exp(1j * (layout.positions @ wavenumber(angle, wavelength)))


def steering_from_cosines(u: float, v: float, layout: RisArrayLayout,
                          wavelength: float) -> np.ndarray:
    """Steering vector parameterised by in-plane direction cosines."""
    s1, s2 = layout.grid_offsets
    return np.exp(2j * np.pi / wavelength * (u * s1 + v * s2))
