"""Aperture geometry and azimuth/elevation conventions."""

from dataclasses import dataclass
from enum import Enum

import numpy as np


@dataclass(frozen=True)
class Aperture:
    """Rectangular planar aperture of size ``lx`` x ``ly`` metres.

    The aperture lies in the z = 0 plane and is centred on the origin, so it
    covers ``|r_x| <= lx/2`` and ``|r_y| <= ly/2``.
    """

    lx: float
    ly: float

    def __post_init__(self):
        if not (np.isfinite(self.lx) and np.isfinite(self.ly)) or self.lx <= 0 or self.ly <= 0:
            raise ValueError(f"aperture side lengths must be positive, got {self.lx} x {self.ly}")

    @property
    def area(self):
        return self.lx * self.ly

    @property
    def diagonal(self):
        return float(np.hypot(self.lx, self.ly))

    def contains(self, rx, ry, atol=1e-12):
        rx, ry = np.asarray(rx), np.asarray(ry)
        return (np.abs(rx) <= self.lx / 2 + atol) & (np.abs(ry) <= self.ly / 2 + atol)

    def scaled(self, factor):
        return Aperture(self.lx * factor, self.ly * factor)


class AngleConvention(str, Enum):
    """Map from (azimuth, elevation) to in-plane direction cosines (u, v).

    The aperture phase is ``k * (r_x * u + r_y * v)``.

    * ``A``: ``u = cos(az) cos(el)``, ``v = sin(az) cos(el)``. Elevation is
      measured from the aperture plane, so el = 90 deg is broadside and the
      azimuth is undefined there.
    * ``B``: ``u = sin(az) cos(el)``, ``v = sin(el)``. Both angles are
      measured from the aperture normal; this is the form the closed-form
      single-target bounds are written in.
    """

    A = "A"
    B = "B"

    def direction_cosines(self, alpha, phi):
        alpha, phi = np.asarray(alpha, dtype=float), np.asarray(phi, dtype=float)
        if self is AngleConvention.A:
            return np.cos(alpha) * np.cos(phi), np.sin(alpha) * np.cos(phi)
        return np.sin(alpha) * np.cos(phi), np.sin(phi)

    def partials(self, alpha, phi):
        """Return ``(du/da, dv/da, du/dp, dv/dp)``."""
        alpha, phi = np.asarray(alpha, dtype=float), np.asarray(phi, dtype=float)
        ca, sa, cp, sp = np.cos(alpha), np.sin(alpha), np.cos(phi), np.sin(phi)
        if self is AngleConvention.A:
            return -sa * cp, ca * cp, -ca * sp, -sa * sp
        return ca * cp, np.zeros_like(ca * cp), -sa * sp, cp

    def unit_vector(self, alpha, phi):
        """Full 3D propagation direction whose in-plane part is (u, v)."""
        ca, sa = np.cos(alpha), np.sin(alpha)
        cp, sp = np.cos(phi), np.sin(phi)
        if self is AngleConvention.A:
            return np.array([ca * cp, sa * cp, sp])
        return np.array([sa * cp, sp, ca * cp])

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown angle convention {value!r}; expected 'A' or 'B'") from None
