"""Skyrmion density Sigma_z = M . (dM/dx x dM/dy) and its disk integral N = (1/4 pi) sum Sigma_z dx dy."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from errors import CoverageError, EmptyMaskError, InvalidParameterError, SkyrmionError
from field_synthesis import GridSpec
from polarimetry import PoincareField, equator_radius, spherical_decompose
from sampling import azimuthal_profile, circle_points, sample_bilinear

logger = logging.getLogger(__name__)

MIN_COVERAGE = 0.9
DEFAULT_ETA = 1e-3
TRUNCATION_FACTOR = 1.1
PLATEAU_FACTOR = 1.2


@dataclass
class SkyrmionDensityField:
    grid: GridSpec
    sigma_z: np.ndarray
    mask: np.ndarray


@dataclass
class AnalysisResult:
    n_skyrmion: float
    uncertainty: float
    integration_radius: float
    center: tuple
    pixel_count: int
    coverage: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.uncertainty < 0 or self.pixel_count <= 0 or self.integration_radius <= 0:
            raise InvalidParameterError("analysis result needs uncertainty >= 0, pixel_count > 0 and radius > 0")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["center"] = [float(c) for c in self.center]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _gradients(pf: PoincareField) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Centered differences of M and the mask of pixels whose whole stencil is valid."""
    m = pf.vector()
    valid = pf.mask
    grid = pf.grid

    dxm = np.zeros_like(m)
    dym = np.zeros_like(m)
    dxm[:, :, 1:-1] = (m[:, :, 2:] - m[:, :, :-2]) / (2.0 * grid.dx)
    dym[:, 1:-1, :] = (m[:, 2:, :] - m[:, :-2, :]) / (2.0 * grid.dy)

    stencil = np.zeros_like(valid)
    stencil[1:-1, 1:-1] = (valid[1:-1, 1:-1] & valid[1:-1, 2:] & valid[1:-1, :-2]
                           & valid[2:, 1:-1] & valid[:-2, 1:-1])
    return m, dxm, dym, stencil


def skyrmion_density(pf: PoincareField) -> SkyrmionDensityField:
    if not pf.mask.any():
        raise EmptyMaskError("cannot differentiate a fully masked Poincare field")
    m, dxm, dym, stencil = _gradients(pf)
    if not stencil.any():
        raise EmptyMaskError("no pixel has a complete 3-point stencil")

    sigma = np.sum(m * np.cross(dxm, dym, axis=0), axis=0)
    sigma = np.where(stencil, sigma, 0.0)
    logger.info(f"Skyrmion density evaluated on {int(stencil.sum())} pixels")
    return SkyrmionDensityField(grid=pf.grid, sigma_z=sigma, mask=stencil)


def density_uncertainty(pf: PoincareField, sigma_m: np.ndarray) -> np.ndarray:
    """First-order standard deviation of Sigma_z from independent per-pixel sigma of (M_x, M_y, M_z).

    Terms: the center value (weight dM/dx x dM/dy) and the two difference quotients
    (weights dM/dy x M and M x dM/dx, each scaled by sqrt(2) / (2 h)).
    """
    m, dxm, dym, stencil = _gradients(pf)
    grid = pf.grid
    sigma_m = np.nan_to_num(np.asarray(sigma_m, dtype=float))
    center_w = np.cross(dxm, dym, axis=0)
    dx_w = np.cross(dym, m, axis=0) * (math.sqrt(2.0) / (2.0 * grid.dx))
    dy_w = np.cross(m, dxm, axis=0) * (math.sqrt(2.0) / (2.0 * grid.dy))
    variance = np.sum((center_w ** 2 + dx_w ** 2 + dy_w ** 2) * sigma_m ** 2, axis=0)
    return np.where(stencil, np.sqrt(variance), 0.0)


def _disk(grid: GridSpec, center, radius: float) -> np.ndarray:
    x, y = grid.mesh()
    return (x - center[0]) ** 2 + (y - center[1]) ** 2 <= radius ** 2


def _on_grid_fraction(grid: GridSpec, center, radius: float, samples: int = 257) -> float:
    """Share of the continuous disk area lying on the pixel footprint of the grid."""
    t = np.linspace(-radius, radius, samples)
    px, py = np.meshgrid(center[0] + t, center[1] + t)
    in_disk = (px - center[0]) ** 2 + (py - center[1]) ** 2 <= radius ** 2
    x0 = grid.x_coords()[0] - 0.5 * grid.dx
    y0 = grid.y_coords()[0] - 0.5 * grid.dy
    on_grid = (in_disk & (px >= x0) & (px <= x0 + grid.nx * grid.dx)
               & (py >= y0) & (py <= y0 + grid.ny * grid.dy))
    return float(on_grid.sum()) / float(in_disk.sum())


def _integrate(sd: SkyrmionDensityField, center, radius: float) -> tuple[float, int, float, np.ndarray]:
    grid = sd.grid
    if radius <= 2.0 * max(grid.dx, grid.dy):
        raise InvalidParameterError(f"integration radius {radius:.4g} must exceed two pixel pitches")
    disk = _disk(grid, center, radius)
    on_grid = int(disk.sum())
    inside = disk & sd.mask
    count = int(inside.sum())
    # valid share of the on-grid pixels, times the share of the disk that is on the grid at all
    coverage = count / on_grid * _on_grid_fraction(grid, center, radius) if on_grid else 0.0
    if coverage < MIN_COVERAGE:
        raise CoverageError(f"only {coverage:.1%} of the disk r={radius:.4g} is valid", coverage=coverage)
    n = float(np.sum(sd.sigma_z[inside])) * grid.pixel_area / (4.0 * math.pi)
    return n, count, coverage, inside


def skyrmion_number(sd: SkyrmionDensityField, center=(0.0, 0.0), radius: float = 1.0) -> AnalysisResult:
    """Midpoint-rule integral over the disk; uncertainty is the truncation estimate |N(r) - N(1.1 r)|."""
    n, count, coverage, _ = _integrate(sd, center, radius)
    truncation = 0.0
    for neighbour in (TRUNCATION_FACTOR * radius, radius / TRUNCATION_FACTOR):
        try:
            truncation = abs(n - _integrate(sd, center, neighbour)[0])
            break
        except SkyrmionError:
            continue
    logger.info(f"N = {n:.5f} (r={radius:.4f}, {count} px, coverage {coverage:.1%})")
    return AnalysisResult(
        n_skyrmion=n,
        uncertainty=truncation,
        integration_radius=float(radius),
        center=(float(center[0]), float(center[1])),
        pixel_count=count,
        coverage=coverage,
        provenance={"truncation_estimate": truncation},
    )


def integral_uncertainty(sd: SkyrmionDensityField, sigma_density: np.ndarray, center, radius: float) -> float:
    """Quadrature sum of per-pixel density sigmas over the disk, pixels treated as independent."""
    inside = _disk(sd.grid, center, radius) & sd.mask
    return float(np.sqrt(np.sum(sigma_density[inside] ** 2))) * sd.grid.pixel_area / (4.0 * math.pi)


def auto_radius(total_intensity: np.ndarray, grid: GridSpec, center=(0.0, 0.0), eta: float = DEFAULT_ETA) -> float:
    """Smallest radius whose azimuthal intensity mean is below eta * peak and stays there up to 1.2 r."""
    if not 0 < eta < 1:
        raise InvalidParameterError(f"eta must lie in (0, 1), got {eta}")
    step = 0.5 * min(grid.dx, grid.dy)
    radii = np.arange(0.0, grid.half_extent(), step)
    profile = azimuthal_profile(total_intensity, grid, center, radii)
    peak = np.nanmax(profile)
    if not np.isfinite(peak) or peak <= 0:
        raise InvalidParameterError("total intensity has no positive azimuthal profile")

    below = np.isfinite(profile) & (profile < eta * peak)
    for k in np.flatnonzero(below):
        if radii[k] == 0:
            continue
        stop = PLATEAU_FACTOR * radii[k]
        if stop > radii[-1]:
            break
        if below[k:np.searchsorted(radii, stop, side="right")].all():
            logger.info(f"Auto radius {radii[k]:.4f} at eta={eta:g}")
            return float(radii[k])
    raise InvalidParameterError(f"intensity never stays below eta={eta:g} of its peak inside the grid; enlarge the extent")


def radius_sweep(sd: SkyrmionDensityField, center, radii) -> list[AnalysisResult]:
    radii = list(radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise InvalidParameterError("sweep radii must be strictly ascending")
    return [skyrmion_number(sd, center, r) for r in radii]


def boundary_number(pf: PoincareField, center=(0.0, 0.0), radius: float = 1.0) -> float:
    """Closed-form cross-check (cos Theta(0) - cos Theta(R)) / 2 times the vorticity on the M_z = 0 ring."""
    vorticity = spherical_decompose(pf, equator_radius(pf, center), center).phi_winding
    mz = np.where(pf.mask, pf.mz, np.nan)
    mz_center = float(sample_bilinear(mz, pf.grid, np.array([center[0]]), np.array([center[1]]))[0])
    xs, ys = circle_points(center, radius)
    mz_edge = float(np.nanmean(sample_bilinear(mz, pf.grid, xs, ys)))
    return 0.5 * (mz_center - mz_edge) * vorticity


def save_density_field(sd: SkyrmionDensityField, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, sd.sigma_z, fmt="%.17g", delimiter=",")
    sidecar = {"grid": sd.grid.to_dict(), "valid_pixels": int(sd.mask.sum())}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
    return path


def sweep_table(results: list[AnalysisResult]):
    return pd.DataFrame({
        "radius": [r.integration_radius for r in results],
        "N": [r.n_skyrmion for r in results],
        "uncertainty": [r.uncertainty for r in results],
        "pixel_count": [r.pixel_count for r in results],
    })
