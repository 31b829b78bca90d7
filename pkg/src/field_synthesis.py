"""Laguerre-Gaussian modes and two-component vector beams sampled on a uniform grid.

All lengths are in units of the beam waist ``w0`` unless a caller chooses otherwise;
the wavelength only enters through the Rayleigh range and the curvature term.
Phase convention: ``exp(+i l phi)`` with ``phi = atan2(y, x)`` and Gouy factor
``exp(-i (|l| + 1) zeta(z))``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from errors import InvalidParameterError

logger = logging.getLogger(__name__)

MIN_PIXELS = 8
DEFAULT_GRID_SIZE = 512
DEFAULT_WAVELENGTH = 7.8e-4  # 780 nm for a 1 mm waist
REFERENCE_HALF_WIDTH = 4.0
TAIL_LEVEL = 1e-6
TAIL_MARGIN = 1.25


def _require_finite(**values):
    for name, value in values.items():
        if not np.isfinite(value):
            raise InvalidParameterError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    dx: float
    dy: float
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        _require_finite(dx=self.dx, dy=self.dy, cx=self.cx, cy=self.cy)
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise InvalidParameterError("nx and ny must be integers")
        if self.nx < MIN_PIXELS or self.ny < MIN_PIXELS:
            raise InvalidParameterError(f"grid must be at least {MIN_PIXELS}x{MIN_PIXELS}, got {self.nx}x{self.ny}")
        if self.dx <= 0 or self.dy <= 0:
            raise InvalidParameterError(f"pixel pitch must be positive, got dx={self.dx}, dy={self.dy}")

    @classmethod
    def square(cls, n: int, extent: float, cx: float = 0.0, cy: float = 0.0) -> "GridSpec":
        """n x n grid whose outermost pixel centers sit at +-extent around (cx, cy)."""
        if extent <= 0:
            raise InvalidParameterError(f"extent must be positive, got {extent}")
        pitch = 2.0 * extent / (n - 1)
        return cls(nx=n, ny=n, dx=pitch, dy=pitch, cx=cx, cy=cy)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def pixel_area(self) -> float:
        return self.dx * self.dy

    def x_coords(self) -> np.ndarray:
        return self.cx + (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.dx

    def y_coords(self) -> np.ndarray:
        return self.cy + (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical coordinates as two (ny, nx) arrays indexed [j, i]."""
        return np.meshgrid(self.x_coords(), self.y_coords(), indexing="xy")

    def to_pixel(self, x, y):
        """Inverse of the pixel -> physical mapping; returns fractional (i, j)."""
        i = (np.asarray(x) - self.cx) / self.dx + (self.nx - 1) / 2.0
        j = (np.asarray(y) - self.cy) / self.dy + (self.ny - 1) / 2.0
        return i, j

    def half_extent(self) -> float:
        return min((self.nx - 1) * self.dx, (self.ny - 1) * self.dy) / 2.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(nx=int(data["nx"]), ny=int(data["ny"]), dx=float(data["dx"]), dy=float(data["dy"]),
                   cx=float(data.get("cx", 0.0)), cy=float(data.get("cy", 0.0)))


@dataclass(frozen=True)
class OpticsParams:
    """Parameters shared by both modes of a vector beam."""

    w0: float = 1.0
    wavelength: float = DEFAULT_WAVELENGTH
    z: float = 0.0

    def mode(self, l: int) -> "LGModeSpec":
        return LGModeSpec(l=l, p=0, w0=self.w0, wavelength=self.wavelength, z=self.z)


@dataclass(frozen=True)
class LGModeSpec:
    l: int
    p: int = 0
    w0: float = 1.0
    wavelength: float = DEFAULT_WAVELENGTH
    z: float = 0.0

    def __post_init__(self):
        _require_finite(w0=self.w0, wavelength=self.wavelength, z=self.z)
        if int(self.l) != self.l:
            raise InvalidParameterError(f"azimuthal index must be an integer, got {self.l!r}")
        if self.p != 0:
            raise InvalidParameterError(f"only p = 0 modes are supported, got p={self.p}")
        if self.w0 <= 0 or self.wavelength <= 0:
            raise InvalidParameterError("w0 and wavelength must be positive")

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.w0 ** 2 / self.wavelength

    @property
    def waist(self) -> float:
        """w(z)."""
        return self.w0 * math.sqrt(1.0 + (self.z / self.rayleigh_range) ** 2)

    @property
    def gouy(self) -> float:
        return math.atan(self.z / self.rayleigh_range)

    @property
    def curvature_radius(self) -> float:
        if self.z == 0:
            return math.inf
        return self.z * (1.0 + (self.rayleigh_range / self.z) ** 2)

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScalarField:
    grid: GridSpec
    amp: np.ndarray
    mode: LGModeSpec | None = None

    def __post_init__(self):
        self.amp = np.asarray(self.amp, dtype=complex)
        if self.amp.shape != self.grid.shape:
            raise InvalidParameterError(f"amplitude shape {self.amp.shape} does not match grid {self.grid.shape}")

    def intensity(self) -> np.ndarray:
        return np.abs(self.amp) ** 2

    def norm(self) -> float:
        """Midpoint quadrature of |amp|^2 over the grid."""
        return float(np.sum(self.intensity()) * self.grid.pixel_area)


@dataclass
class VectorBeam:
    """u0 on |phi>, exp(i theta0) u1 on |phi_perp>; ``basis`` names the lab state playing |phi>."""

    compA: ScalarField
    compB: ScalarField
    theta0: float = 0.0
    basis: str = "H"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.compA.grid != self.compB.grid:
            raise InvalidParameterError("both components must share one GridSpec")
        if self.basis not in ("H", "V"):
            raise InvalidParameterError(f"basis must be 'H' or 'V', got {self.basis!r}")

    @property
    def grid(self) -> GridSpec:
        return self.compA.grid

    def total_intensity(self) -> np.ndarray:
        return self.compA.intensity() + self.compB.intensity()

    def state(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Normalized (a, b) on (|phi>, |phi_perp>) and the validity mask.

        Equivalent to (1, exp(i theta0) v) / sqrt(1 + |v|^2) with v = u1/u0 where u0 != 0;
        invalid pixels (both amplitudes zero) carry a = b = 0.
        """
        u0 = self.compA.amp
        u1 = np.exp(1j * self.theta0) * self.compB.amp
        total = np.sqrt(np.abs(u0) ** 2 + np.abs(u1) ** 2)
        valid = total > 0
        safe = np.where(valid, total, 1.0)
        a = np.where(valid, u0 / safe, 0.0)
        b = np.where(valid, u1 / safe, 0.0)
        return a, b, valid

    def lab_amplitudes(self) -> tuple[np.ndarray, np.ndarray]:
        """Unnormalized (E_H, E_V)."""
        u0 = self.compA.amp
        u1 = np.exp(1j * self.theta0) * self.compB.amp
        if self.basis == "H":
            return u0, u1
        return u1, u0


def lg_mode(spec: LGModeSpec, grid: GridSpec) -> ScalarField:
    x, y = grid.mesh()
    r2 = x ** 2 + y ** 2
    phi = np.arctan2(y, x)
    al = abs(int(spec.l))
    w = spec.waist

    log_norm = 0.5 * (math.log(2.0 / math.pi) - gammaln(al + 1)) - math.log(w)
    radial = (np.sqrt(2.0 * r2) / w) ** al * np.exp(-r2 / w ** 2)
    phase = spec.l * phi - (al + 1) * spec.gouy
    if math.isfinite(spec.curvature_radius):
        phase = phase + spec.wavenumber * r2 / (2.0 * spec.curvature_radius)

    amp = math.exp(log_norm) * radial * np.exp(1j * phase)
    return ScalarField(grid=grid, amp=amp, mode=spec)


def tail_radius(l: int, waist: float, level: float = TAIL_LEVEL) -> float:
    """Radius beyond which |u_l|^2 stays below level times the on-axis peak of a Gaussian of the same waist."""
    if not 0 < level < 1:
        raise InvalidParameterError(f"tail level must lie in (0, 1), got {level}")
    al = abs(int(l))
    # relative intensity (s^l / l!) e^-s in s = 2 r^2 / w^2 decreases for s > l
    def excess(s):
        return al * math.log(s) - s - gammaln(al + 1) - math.log(level)

    lo = max(float(al), 1e-12)
    if excess(lo) <= 0:
        return waist * math.sqrt(lo / 2.0)
    s = brentq(excess, lo, 2.0 * (al - math.log(level)) + 10.0)
    return waist * math.sqrt(s / 2.0)


def default_grid(l1: int, l2: int, optics: OpticsParams, n: int = DEFAULT_GRID_SIZE) -> GridSpec:
    """n x n grid over +-4 w(z), widened at the same pitch until the brighter mode's tail fits.

    The pitch always stays 8 w(z) / (n - 1); high orders get more pixels, not coarser ones.
    """
    w = optics.mode(0).waist
    base = REFERENCE_HALF_WIDTH * w
    lmax = max(abs(l1), abs(l2))
    extent = TAIL_MARGIN * tail_radius(lmax, w)
    if extent <= base:
        return GridSpec.square(n, base)
    pitch = 2.0 * base / (n - 1)
    size = int(math.ceil(2.0 * extent / pitch)) + 1
    logger.info(f"Default grid widened to {size}x{size} for |l|={lmax} (pitch {pitch:.4g})")
    return GridSpec(nx=size, ny=size, dx=pitch, dy=pitch)


def build_beam(l1: int, l2: int, theta0: float = 0.0, grid: GridSpec | None = None,
               optics: OpticsParams | None = None, basis: str = "H") -> VectorBeam:
    optics = optics or OpticsParams()
    _require_finite(theta0=theta0)
    if grid is None:
        grid = default_grid(l1, l2, optics)

    metadata = {"l1": int(l1), "l2": int(l2), "delta_l": int(l2) - int(l1), "optics": asdict(optics)}
    if l2 <= l1:
        metadata["ordering"] = "l2<=l1"
        logger.warning(f"l2={l2} <= l1={l1}: outside the N = l2 - l1 > 0 convention")

    compA = lg_mode(optics.mode(l1), grid)
    compB = lg_mode(optics.mode(l2), grid)
    logger.info(f"Built vector beam l1={l1}, l2={l2}, theta0={theta0:.4f} on {grid.nx}x{grid.ny} grid")
    return VectorBeam(compA=compA, compB=compB, theta0=float(theta0), basis=basis, metadata=metadata)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_scalar_field(sf: ScalarField, path) -> Path:
    """CSV with (re, im) column pairs per pixel plus a JSON sidecar holding grid and mode."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    interleaved = np.empty((sf.grid.ny, 2 * sf.grid.nx))
    interleaved[:, 0::2] = sf.amp.real
    interleaved[:, 1::2] = sf.amp.imag
    np.savetxt(path, interleaved, fmt="%.17g", delimiter=",")

    sidecar = {"grid": sf.grid.to_dict(), "mode": sf.mode.to_dict() if sf.mode else None}
    _sidecar(path).write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
    return path


def load_scalar_field(path) -> ScalarField:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text(encoding="utf-8"))
    grid = GridSpec.from_dict(meta["grid"])
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    amp = data[:, 0::2] + 1j * data[:, 1::2]
    mode = LGModeSpec(**meta["mode"]) if meta.get("mode") else None
    return ScalarField(grid=grid, amp=amp, mode=mode)
