"""Bilinear sampling of grid images along circles, azimuthal averages and loop windings."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from field_synthesis import GridSpec

DEFAULT_LOOP_SAMPLES = 720


def circle_points(center, radius: float, samples: int = DEFAULT_LOOP_SAMPLES):
    angles = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    return center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)


def sample_bilinear(image: np.ndarray, grid: GridSpec, xs, ys, cval: float = np.nan) -> np.ndarray:
    """Order-1 interpolation at physical points; points off the grid return ``cval``."""
    i, j = grid.to_pixel(xs, ys)
    coords = np.vstack([np.ravel(j), np.ravel(i)])
    if np.iscomplexobj(image):
        re = ndimage.map_coordinates(image.real, coords, order=1, mode="constant", cval=cval)
        im = ndimage.map_coordinates(image.imag, coords, order=1, mode="constant", cval=cval)
        return (re + 1j * im).reshape(np.shape(xs))
    values = ndimage.map_coordinates(np.asarray(image, dtype=float), coords, order=1, mode="constant", cval=cval)
    return values.reshape(np.shape(xs))


def mask_on_points(mask: np.ndarray, grid: GridSpec, xs, ys) -> np.ndarray:
    """True where every pixel of the bilinear footprint is valid."""
    i, j = grid.to_pixel(xs, ys)
    i0 = np.floor(i).astype(int)
    j0 = np.floor(j).astype(int)
    inside = (i0 >= 0) & (j0 >= 0) & (i0 + 1 < grid.nx) & (j0 + 1 < grid.ny)
    ok = np.zeros(np.shape(xs), dtype=bool)
    ii, jj = i0[inside], j0[inside]
    ok[inside] = mask[jj, ii] & mask[jj, ii + 1] & mask[jj + 1, ii] & mask[jj + 1, ii + 1]
    return ok


def azimuthal_profile(image: np.ndarray, grid: GridSpec, center, radii, samples: int = DEFAULT_LOOP_SAMPLES) -> np.ndarray:
    """Mean of ``image`` on each circle; NaN for circles leaving the grid."""
    profile = np.empty(len(radii))
    for k, radius in enumerate(radii):
        xs, ys = circle_points(center, radius, samples)
        profile[k] = np.mean(sample_bilinear(image, grid, xs, ys))
    return profile


def winding_number(angles: np.ndarray) -> int:
    """Closed-loop winding of a sequence of angles, steps wrapped to (-pi, pi]."""
    steps = np.diff(np.append(angles, angles[0]))
    wrapped = np.angle(np.exp(1j * steps))
    return int(np.rint(np.sum(wrapped) / (2.0 * np.pi)))
