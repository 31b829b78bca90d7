"""Six-projection polarimetry: simulated CCD frames, CCD degradation and Stokes reconstruction.

Analyzer pairing: x <-> (D, A), y <-> (L, R), z <-> (H, V).
Images are (ny, nx) arrays indexed [j, i] on the measurement grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from errors import CoverageError, EmptyMaskError, InvalidParameterError
from field_synthesis import GridSpec, VectorBeam
from sampling import DEFAULT_LOOP_SAMPLES, azimuthal_profile, circle_points, mask_on_points, sample_bilinear, winding_number

logger = logging.getLogger(__name__)

IMAGE_KEYS = ("x1", "x2", "y1", "y2", "z1", "z2")
AXES = ("x", "y", "z")
SUPPORTED_BIT_DEPTHS = (8, 16)
DEFAULT_FLOOR_REL = 1e-3
POLE_TOLERANCE = 1e-9

_S = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class BasisConvention:
    """Analyzer states as (H, V) coefficients and the Pauli pairing of the six images."""

    states: dict = field(default_factory=lambda: {
        "H": (1.0 + 0j, 0j),
        "V": (0j, 1.0 + 0j),
        "D": (_S + 0j, _S + 0j),
        "A": (_S + 0j, -_S + 0j),
        "L": (_S + 0j, 1j * _S),
        "R": (_S + 0j, -1j * _S),
    })
    pairing: dict = field(default_factory=lambda: {
        "x1": "D", "x2": "A", "y1": "L", "y2": "R", "z1": "H", "z2": "V",
    })

    def analyzer(self, key: str) -> tuple[complex, complex]:
        return self.states[self.pairing[key]]


DEFAULT_CONVENTION = BasisConvention()


@dataclass
class MeasurementSet:
    grid: GridSpec
    images: dict
    bit_depth: int | None = None
    exposure: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [key for key in IMAGE_KEYS if key not in self.images]
        if missing:
            raise InvalidParameterError(f"missing projection images: {', '.join('I' + k for k in missing)}")
        if self.bit_depth is not None and self.bit_depth not in SUPPORTED_BIT_DEPTHS:
            raise InvalidParameterError(f"bit_depth must be one of {SUPPORTED_BIT_DEPTHS}, got {self.bit_depth}")

        self.images = {key: np.asarray(self.images[key], dtype=float) for key in IMAGE_KEYS}
        for key, image in self.images.items():
            if image.shape != self.grid.shape:
                raise InvalidParameterError(f"I{key} has shape {image.shape}, grid expects {self.grid.shape}")
            if not np.all(np.isfinite(image)):
                raise InvalidParameterError(f"I{key} contains non-finite values")
            if np.any(image < 0):
                raise InvalidParameterError(f"I{key} contains negative values")
            if self.bit_depth is not None:
                top = 2 ** self.bit_depth - 1
                if np.any(image > top) or np.any(image != np.rint(image)):
                    raise InvalidParameterError(f"I{key} is not {self.bit_depth}-bit integer data")

    def __getitem__(self, key: str) -> np.ndarray:
        return self.images[key]

    def total_intensity(self) -> np.ndarray:
        return self.images["z1"] + self.images["z2"]


@dataclass
class PoincareField:
    grid: GridSpec
    mx: np.ndarray
    my: np.ndarray
    mz: np.ndarray
    mask: np.ndarray

    def vector(self) -> np.ndarray:
        return np.stack([self.mx, self.my, self.mz])

    def norm(self) -> np.ndarray:
        return np.sqrt(self.mx ** 2 + self.my ** 2 + self.mz ** 2)

    def normalized(self) -> "PoincareField":
        """Projection onto the unit sphere; zero vectors stay zero."""
        norm = self.norm()
        scale = np.divide(1.0, norm, out=np.zeros_like(norm), where=norm > 0)
        return PoincareField(grid=self.grid, mx=self.mx * scale, my=self.my * scale, mz=self.mz * scale,
                             mask=self.mask)


@dataclass
class SphericalDecomposition:
    radii: np.ndarray
    theta_profile: np.ndarray
    phi_winding: int
    loop_radius: float


def project_intensities(beam: VectorBeam, conv: BasisConvention = DEFAULT_CONVENTION) -> MeasurementSet:
    """Frames |<s|Psi>|^2 w(r) behind each analyzer, with w the local total intensity."""
    e_h, e_v = beam.lab_amplitudes()
    images = {}
    for key in IMAGE_KEYS:
        h, v = conv.analyzer(key)
        images[key] = np.abs(np.conj(h) * e_h + np.conj(v) * e_v) ** 2
    exposure = {"source": "simulated", "theta0": beam.theta0, "basis": beam.basis}
    exposure.update(beam.metadata)
    return MeasurementSet(grid=beam.grid, images=images, bit_depth=None, exposure=exposure)


def degrade(ms: MeasurementSet, noise_rel: float, bit_depth: int, shift_px: dict | None = None,
            seed: int = 0) -> MeasurementSet:
    """Translate, add Gaussian noise, clamp at zero and quantize with a scale common to all six frames.

    ``shift_px`` maps image keys to (sx, sy) pixel shifts; omitted keys are not moved.
    """
    if not np.isfinite(noise_rel) or noise_rel < 0:
        raise InvalidParameterError(f"noise_rel must be a non-negative number, got {noise_rel}")
    if bit_depth not in SUPPORTED_BIT_DEPTHS:
        raise InvalidParameterError(f"bit_depth must be one of {SUPPORTED_BIT_DEPTHS}, got {bit_depth}")
    shift_px = shift_px or {}
    for key, (sx, sy) in shift_px.items():
        if key not in IMAGE_KEYS:
            raise InvalidParameterError(f"unknown image key {key!r} in shifts")
        if abs(sx) > ms.grid.nx / 4 or abs(sy) > ms.grid.ny / 4:
            raise InvalidParameterError(f"shift of I{key} ({sx}, {sy}) exceeds a quarter of the grid")

    rng = np.random.default_rng(seed)
    noisy = {}
    for key in IMAGE_KEYS:
        image = ms[key]
        sx, sy = shift_px.get(key, (0.0, 0.0))
        if sx or sy:
            image = ndimage.shift(image, (sy, sx), order=1, mode="constant", cval=0.0)
        if noise_rel > 0:
            image = image + rng.normal(0.0, noise_rel * float(ms[key].max()), image.shape)
        noisy[key] = np.clip(image, 0.0, None)

    top = 2 ** bit_depth - 1
    peak = max(float(img.max()) for img in noisy.values())
    scale = top / peak if peak > 0 else 1.0
    counts = {key: np.clip(np.rint(img * scale), 0, top) for key, img in noisy.items()}

    logger.info(f"Degraded set: noise_rel={noise_rel}, {bit_depth}-bit, seed={seed}, shifted={sorted(shift_px)}")
    exposure = dict(ms.exposure)
    exposure.update({
        "scale": scale,
        "noise_rel": noise_rel,
        "seed": seed,
        "shift_px": {k: [float(v[0]), float(v[1])] for k, v in shift_px.items()},
    })
    return MeasurementSet(grid=ms.grid, images=counts, bit_depth=bit_depth, exposure=exposure)


def smooth(ms: MeasurementSet, sigma_px: float) -> MeasurementSet:
    """Gaussian low-pass of every frame with a ``sigma_px`` pixel standard deviation; 0 returns ``ms``."""
    if not np.isfinite(sigma_px) or sigma_px < 0:
        raise InvalidParameterError(f"smoothing sigma must be a non-negative number, got {sigma_px}")
    if sigma_px == 0:
        return ms
    images = {key: ndimage.gaussian_filter(ms[key].astype(float), sigma_px, mode="nearest") for key in IMAGE_KEYS}
    logger.info(f"Smoothed all frames with sigma = {sigma_px:g} px")
    return MeasurementSet(grid=ms.grid, images=images, bit_depth=None,
                          exposure={**ms.exposure, "smoothing_px": float(sigma_px)})


def valid_mask(ms: MeasurementSet, floor_rel: float) -> np.ndarray:
    if floor_rel < 0:
        raise InvalidParameterError(f"floor_rel must be non-negative, got {floor_rel}")
    total = ms.total_intensity()
    peak = float(total.max())
    if peak <= 0:
        raise EmptyMaskError("empty mask: every pixel of the z pair is dark")
    mask = (total >= floor_rel * peak) & (total > 0)
    if not mask.any():
        raise EmptyMaskError("empty mask: no pixel above the intensity floor")
    return mask


def _normalized_difference(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    denom = first + second
    return np.divide(first - second, denom, out=np.zeros_like(denom), where=denom > 0)


def _finish(grid: GridSpec, components: list, mask: np.ndarray) -> PoincareField:
    mx, my, mz = (np.where(mask, np.clip(c, -1.0, 1.0), 0.0) for c in components)
    return PoincareField(grid=grid, mx=mx, my=my, mz=mz, mask=mask)


def reconstruct(ms: MeasurementSet, floor_rel: float = DEFAULT_FLOOR_REL) -> PoincareField:
    """M_i = (I_i1 - I_i2) / (I_i1 + I_i2), masked where the z-pair sum is below floor_rel of its peak."""
    mask = valid_mask(ms, floor_rel)
    components = [_normalized_difference(ms[f"{axis}1"], ms[f"{axis}2"]) for axis in AXES]
    logger.info(f"Reconstructed Poincare field on {int(mask.sum())} valid pixels")
    return _finish(ms.grid, components, mask)


def reconstruct_four(ms: MeasurementSet, floor_rel: float = DEFAULT_FLOOR_REL) -> PoincareField:
    """Four-projection variant: only I_z1, I_z2, I_x1 and I_y1 are read."""
    mask = valid_mask(ms, floor_rel)
    s0 = ms.total_intensity()
    safe = np.where(s0 > 0, s0, 1.0)
    mx = np.where(s0 > 0, 2.0 * ms["x1"] / safe - 1.0, 0.0)
    my = np.where(s0 > 0, 2.0 * ms["y1"] / safe - 1.0, 0.0)
    mz = _normalized_difference(ms["z1"], ms["z2"])
    return _finish(ms.grid, [mx, my, mz], mask)


def poincare_from_beam(beam: VectorBeam) -> PoincareField:
    """Direct expectation <Psi|sigma|Psi> of the normalized local state in the H/V frame."""
    e_h, e_v = beam.lab_amplitudes()
    total = np.abs(e_h) ** 2 + np.abs(e_v) ** 2
    mask = total > 0
    safe = np.where(mask, total, 1.0)
    coherence = np.where(mask, 2.0 * np.conj(e_h) * e_v / safe, 0.0)
    mz = np.where(mask, (np.abs(e_h) ** 2 - np.abs(e_v) ** 2) / safe, 0.0)
    return PoincareField(grid=beam.grid, mx=coherence.real, my=coherence.imag, mz=mz, mask=mask)


def equator_radius(pf: PoincareField, center=(0.0, 0.0), samples: int = 400) -> float:
    """Smallest radius where the azimuthal mean of M_z changes sign."""
    radii = np.linspace(0.0, 0.95 * pf.grid.half_extent(), samples)
    mz = np.where(pf.mask, pf.mz, np.nan)
    profile = azimuthal_profile(mz, pf.grid, center, radii, samples=180)
    signs = np.sign(profile)
    for k in range(len(radii) - 1):
        if np.isfinite(profile[k]) and np.isfinite(profile[k + 1]) and signs[k] * signs[k + 1] < 0:
            t = profile[k] / (profile[k] - profile[k + 1])
            return float(radii[k] + t * (radii[k + 1] - radii[k]))
    raise InvalidParameterError("M_z does not change sign inside the grid")


def spherical_decompose(pf: PoincareField, loop_radius: float, center=(0.0, 0.0),
                        profile_points: int = 64, samples: int = DEFAULT_LOOP_SAMPLES) -> SphericalDecomposition:
    """Theta(r) = arccos(M_z) averaged on circles and the winding of Phi = atan2(M_y, M_x) on one loop."""
    if loop_radius <= 0:
        raise InvalidParameterError(f"loop radius must be positive, got {loop_radius}")
    xs, ys = circle_points(center, loop_radius, samples)
    valid = mask_on_points(pf.mask, pf.grid, xs, ys)
    if not valid.all():
        raise CoverageError(f"loop of radius {loop_radius:.4f} crosses masked pixels", coverage=float(valid.mean()))

    mx = sample_bilinear(pf.mx, pf.grid, xs, ys)
    my = sample_bilinear(pf.my, pf.grid, xs, ys)
    if np.min(np.abs(mx) + np.abs(my)) < POLE_TOLERANCE:
        raise InvalidParameterError(f"loop of radius {loop_radius:.4f} touches a pole of the Poincare sphere")
    winding = winding_number(np.arctan2(my, mx))

    radii = np.linspace(0.0, loop_radius, profile_points)
    theta = np.arccos(np.clip(np.where(pf.mask, pf.mz, np.nan), -1.0, 1.0))
    profile = azimuthal_profile(theta, pf.grid, center, radii, samples=samples)
    return SphericalDecomposition(radii=radii, theta_profile=profile, phi_winding=winding, loop_radius=loop_radius)
