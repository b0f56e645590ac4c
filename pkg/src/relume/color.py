"""sRGB <-> CIE Lab conversion.

The RGB->XYZ matrix is derived at import time from the sRGB primary
chromaticities and the D65 white point rather than copied from a table:
the usual published 7-digit matrix maps white to (100, 0, 0) only to
about 1e-3 in a*/b*, while the derived matrix is exact by construction
(white equals the matrix row sums).  Derivation: scale the primaries'
XYZ columns so they sum to the white point's XYZ.
"""

from __future__ import annotations

import numpy as np

# sRGB primary and white chromaticities (x, y)
_RED = (0.64, 0.33)
_GREEN = (0.30, 0.60)
_BLUE = (0.15, 0.06)
_WHITE_XY = (0.3127, 0.3290)


def _xy_to_xyz(x: float, y: float) -> np.ndarray:
    return np.array([x / y, 1.0, (1.0 - x - y) / y])


def _derive_matrix() -> tuple[np.ndarray, np.ndarray]:
    cols = np.stack([_xy_to_xyz(*_RED), _xy_to_xyz(*_GREEN), _xy_to_xyz(*_BLUE)], axis=1)
    white = _xy_to_xyz(*_WHITE_XY)
    scale = np.linalg.solve(cols, white)
    m = cols * scale
    return m, white


RGB_TO_XYZ, WHITE_POINT = _derive_matrix()
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)

_DELTA = 6.0 / 29.0


def _inv_gamma(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return np.where(u <= 0.04045, u / 12.92, ((u + 0.055) / 1.055) ** 2.4)


def _gamma(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    # clip before the fractional power; tiny negatives from matrix round trips
    safe = np.clip(u, 0.0, None)
    return np.where(safe <= 0.0031308, 12.92 * safe, 1.055 * safe ** (1.0 / 2.4) - 0.055)


def _f(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA * _DELTA) + 4.0 / 29.0)


def _f_inv(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return np.where(u > _DELTA, u**3, 3.0 * _DELTA * _DELTA * (u - 4.0 / 29.0))


def srgb_to_xyz(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) sRGB in [0, 1] to XYZ (white Y = 1)."""
    lin = _inv_gamma(rgb)
    return lin @ RGB_TO_XYZ.T


def xyz_to_srgb(xyz: np.ndarray) -> np.ndarray:
    lin = np.asarray(xyz, dtype=np.float64) @ XYZ_TO_RGB.T
    return np.clip(_gamma(lin), 0.0, 1.0)


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) sRGB in [0, 1] to CIE L*a*b* (D65 reference white)."""
    xyz = srgb_to_xyz(rgb) / WHITE_POINT
    fx, fy, fz = (_f(xyz[..., i]) for i in range(3))
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_srgb(lab: np.ndarray) -> np.ndarray:
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * WHITE_POINT
    return xyz_to_srgb(xyz)
